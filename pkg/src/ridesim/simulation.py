"""Discrete-event mesoscopic traffic simulation.

Vehicles advance link by link; a vehicle entering a link exits after the
volume-delay time implied by the link's instantaneous hourly flow, estimated
from a sliding entry window. Regular drivers replan at every node from the
current cost snapshot; ridesharing drivers follow committed routes that the
matcher may rewrite; each arriving rider triggers the matcher exactly once.

Determinism: one event queue ordered by (time, insertion sequence), all
randomness drawn from generators seeded per replication.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .agents import Role, TimeWindow, VehicleAgent
from .demand import DemandSpec, fallback_to_driver, free_flow_paths, generate_agents
from .matching import (
    DriverOffer,
    Itinerary,
    MatchResult,
    Pin,
    RiderRequest,
    ceil_steps,
    match_rider,
)
from .network import LaneClass, Network, volume_delay
from .routing import CostWeights, dijkstra_route

# event kinds, ordered only for readability; queue order is (time, seq)
EV_AGENT_ENTER = 0
EV_ARRIVE_NODE = 1
EV_DEPART_NODE = 2
EV_BACKGROUND = 3


class SimulationError(ValueError):
    pass


@dataclass
class LinkState:
    """Per-link flow bookkeeping, split by lane class."""

    link_id: int
    counts: dict[LaneClass, int] = field(
        default_factory=lambda: {LaneClass.GENERAL: 0, LaneClass.CARPOOL: 0}
    )
    window: dict[LaneClass, deque] = field(
        default_factory=lambda: {LaneClass.GENERAL: deque(), LaneClass.CARPOOL: deque()}
    )
    totals: dict[LaneClass, int] = field(
        default_factory=lambda: {LaneClass.GENERAL: 0, LaneClass.CARPOOL: 0}
    )
    background_totals: dict[LaneClass, int] = field(
        default_factory=lambda: {LaneClass.GENERAL: 0, LaneClass.CARPOOL: 0}
    )
    entry_log: list[tuple[int, str, float]] = field(default_factory=list)

    def hourly_flow(self, lane_class: LaneClass, now: float, window_hours: float) -> float:
        entries = self.window[lane_class]
        cutoff = now - window_hours
        while entries and entries[0] < cutoff:
            entries.popleft()
        return len(entries) / window_hours

    def record_entry(
        self, vehicle_id: int, lane_class: LaneClass, now: float, background: bool
    ) -> None:
        self.window[lane_class].append(now)
        self.counts[lane_class] += 1
        self.totals[lane_class] += 1
        if background:
            self.background_totals[lane_class] += 1
        self.entry_log.append((vehicle_id, lane_class.value, now))

    def record_exit(self, lane_class: LaneClass) -> None:
        self.counts[lane_class] -= 1
        if self.counts[lane_class] < 0:
            raise SimulationError(f"link {self.link_id}: exit without entry")


class Vehicle:
    """Runtime state of one agent's vehicle (riders have no vehicle)."""

    __slots__ = (
        "agent", "node", "on_link", "link_arrival_node", "link_arrival_time",
        "route", "route_pos", "planned_entry_steps", "pins", "aboard",
        "departure_time", "arrival_time", "stranded", "plan_version",
        "hold_release",
    )

    def __init__(self, agent: VehicleAgent):
        self.agent = agent
        self.node = agent.origin
        self.on_link = False
        self.link_arrival_node: Optional[int] = None
        self.link_arrival_time: Optional[float] = None
        self.route: list[int] = []
        self.route_pos = 0
        self.planned_entry_steps: list[int] = []
        self.pins: list[Pin] = []
        self.aboard: set[int] = set()
        self.departure_time: Optional[float] = None
        self.arrival_time: Optional[float] = None
        self.stranded = False
        self.plan_version = 0
        self.hold_release: Optional[float] = None

    @property
    def active(self) -> bool:
        return self.arrival_time is None and not self.stranded

    def occupancy(self) -> int:
        return 1 + len(self.aboard)


@dataclass
class AgentOutcome:
    agent_id: int
    role: Role
    matched: Optional[bool]
    departure: Optional[float]
    arrival: Optional[float]
    stranded: bool = False


@dataclass
class SimReport:
    link_class_counts: dict[tuple[int, LaneClass], int]
    link_background_counts: dict[tuple[int, LaneClass], int]
    validation_counts: dict[int, int]
    outcomes: list[AgentOutcome]
    riders_total: int
    riders_matched: int
    horizon: float
    stranded_count: int = 0
    match_trace: list[dict] = field(default_factory=list)

    @property
    def match_rate(self) -> float:
        if self.riders_total == 0:
            return 0.0
        return self.riders_matched / self.riders_total

    def mean_travel_time(self) -> float:
        times = [
            o.arrival - o.departure
            for o in self.outcomes
            if o.departure is not None and o.arrival is not None
        ]
        return sum(times) / len(times) if times else 0.0

    def carpool_hourly_flow(self, link_id: int) -> float:
        return self.link_class_counts.get((link_id, LaneClass.CARPOOL), 0) / self.horizon

    def general_hourly_flow_per_lane(self, link_id: int, general_lanes: int) -> float:
        count = self.link_class_counts.get((link_id, LaneClass.GENERAL), 0)
        return count / general_lanes / self.horizon


class SimState:
    """One replication's full mutable state; see ``init_simulation``."""

    def __init__(
        self,
        network: Network,
        demand: DemandSpec,
        seed: int,
        weights: CostWeights = CostWeights(),
        bpr_alpha: float = 0.15,
        bpr_beta: float = 4.0,
        dt: float = 0.05,
        penalty: Optional[float] = None,
        flow_window: float = 0.25,
        horizon: float = 24.0,
        unused_capacity: float = 1.0,
    ):
        if horizon <= 0:
            raise SimulationError("horizon must be positive")
        if dt <= 0:
            raise SimulationError("dt must be positive")
        if not 0.0 <= unused_capacity <= 1.0:
            raise SimulationError("unused_capacity must lie in [0, 1]")
        self.network = network
        self.demand = demand
        self.weights = weights
        self.time_weight = weights.time
        self.bpr_alpha = bpr_alpha
        self.bpr_beta = bpr_beta
        self.dt = dt
        self.penalty = penalty if penalty is not None else weights.time * dt
        self.flow_window = flow_window
        self.horizon = horizon
        self.unused_capacity = unused_capacity

        self.clock = 0.0
        self._seq = 0
        self.events: list[tuple[float, int, int, object]] = []
        self.link_states = {l.id: LinkState(l.id) for l in network.links}
        self.vehicles: dict[int, Vehicle] = {}
        self.agents: dict[int, VehicleAgent] = {}
        self.rider_itineraries: dict[int, Itinerary] = {}
        self.rider_board_time: dict[int, float] = {}
        self.rider_alight_time: dict[int, float] = {}
        self.match_results: dict[int, MatchResult] = {}
        self.match_trace: list[dict] = []
        self.fallback_agents: dict[int, int] = {}  # rider id -> fallback agent id
        self.stranded_agents: list[int] = []
        self.background_count = 0
        self._next_agent_id = 0
        self._matching_snapshot: Optional[dict] = None

        seq = np.random.SeedSequence(seed)
        demand_seed, background_seed = seq.spawn(2)
        self.schedule = generate_agents(demand, network, demand_seed)
        self._background_rng = np.random.default_rng(background_seed)

        for agent in self.schedule.agents:
            self.agents[agent.id] = agent
            self.push_event(agent.request_time, EV_AGENT_ENTER, agent.id)
        self._next_agent_id = len(self.schedule.agents)

        if unused_capacity < 1.0:
            inject_background_carpool_load(self, unused_capacity)

    # ------------------------------------------------------------------ events

    def push_event(self, time: float, kind: int, payload: object) -> None:
        if time < self.clock - 1e-12:
            raise SimulationError("event scheduled before the clock")
        heapq.heappush(self.events, (time, self._seq, kind, payload))
        self._seq += 1

    # ------------------------------------------------------------- travel time

    def link_delay(self, link_id: int, lane_class: LaneClass, now: float) -> float:
        flow = self.link_states[link_id].hourly_flow(lane_class, now, self.flow_window)
        return volume_delay(
            self.network.link(link_id), lane_class, flow,
            alpha=self.bpr_alpha, beta=self.bpr_beta,
        )

    def route_cost_fn(self, now: float) -> Callable:
        """Generalized toll + travel-time cost snapshot for replanning."""
        def cost(link) -> float:
            delay = self.link_delay(link.id, LaneClass.GENERAL, now)
            return self.weights.toll * link.toll_at(now) + self.weights.time * delay
        return cost

    def matching_travel_time(self) -> Callable[[int, float], float]:
        """Frozen best-HOV travel-time snapshot for the matcher."""
        now = self.clock
        snapshot: dict[int, float] = {}
        for link in self.network.links:
            delay = self.link_delay(link.id, LaneClass.GENERAL, now)
            if link.has_carpool_lane:
                delay = min(delay, self.link_delay(link.id, LaneClass.CARPOOL, now))
            snapshot[link.id] = delay
        self._matching_snapshot = snapshot
        return lambda link_id, t: snapshot[link_id]

    # ------------------------------------------------------------ vehicle flow

    def _lane_class_for(self, vehicle: Vehicle, link_id: int, now: float) -> LaneClass:
        link = self.network.link(link_id)
        if link.has_carpool_lane and vehicle.occupancy() >= 2:
            carpool = self.link_delay(link_id, LaneClass.CARPOOL, now)
            general = self.link_delay(link_id, LaneClass.GENERAL, now)
            if carpool < general:
                return LaneClass.CARPOOL
        return LaneClass.GENERAL

    def enter_link(self, vehicle: Vehicle, link_id: int, now: float) -> None:
        link = self.network.link(link_id)
        lane_class = self._lane_class_for(vehicle, link_id, now)
        delay = self.link_delay(link_id, lane_class, now)
        state = self.link_states[link_id]
        state.record_entry(vehicle.agent.id, lane_class, now, background=False)
        if vehicle.departure_time is None:
            vehicle.departure_time = now
        vehicle.on_link = True
        vehicle.node = -1
        vehicle.link_arrival_node = link.to_node
        vehicle.link_arrival_time = now + delay
        self.push_event(
            now + delay, EV_ARRIVE_NODE, (vehicle.agent.id, link_id, lane_class)
        )

    def vehicle_at_node(self, vehicle: Vehicle, node: int, now: float) -> Optional[int]:
        """Decide the vehicle's next link at ``node``; None means the trip ends.

        Regular drivers replan against the current cost snapshot; ridesharing
        drivers follow their committed route. A vehicle with no feasible
        continuation is recorded as stranded (``vehicle.stranded``), not a
        crash.
        """
        agent = vehicle.agent
        if agent.role is Role.RIDESHARE_DRIVER:
            if vehicle.route_pos < len(vehicle.route):
                return vehicle.route[vehicle.route_pos]
            if node != agent.destination:
                vehicle.stranded = True
                self.stranded_agents.append(agent.id)
            return None
        if node == agent.destination:
            return None
        path = dijkstra_route(self.network, self.route_cost_fn(now), node,
                              agent.destination)
        if path is None or not path.links:
            vehicle.stranded = True
            self.stranded_agents.append(agent.id)
            return None
        return path.links[0]

    def _serve_pins(self, vehicle: Vehicle, node: int, now: float) -> None:
        while vehicle.pins and vehicle.pins[0].node == node:
            pin = vehicle.pins[0]
            if pin.action == "board" and now + 1e-9 < pin.step * self.dt:
                break  # boarding is due at the pinned step; hold first
            vehicle.pins.pop(0)
            if pin.action == "board":
                vehicle.aboard.add(pin.rider_id)
                self.rider_board_time.setdefault(pin.rider_id, now)
            else:
                vehicle.aboard.discard(pin.rider_id)
                self.rider_alight_time[pin.rider_id] = now

    def _continue_rideshare(self, vehicle: Vehicle, node: int, now: float) -> None:
        self._serve_pins(vehicle, node, now)
        next_link = self.vehicle_at_node(vehicle, node, now)
        if next_link is None:
            if not vehicle.stranded:
                vehicle.arrival_time = now
            return
        planned = vehicle.planned_entry_steps
        hold_until = None
        if vehicle.route_pos < len(planned):
            hold_until = planned[vehicle.route_pos] * self.dt
        if hold_until is not None and hold_until > now + 1e-12:
            vehicle.hold_release = hold_until
            self.push_event(
                hold_until, EV_DEPART_NODE, (vehicle.agent.id, vehicle.plan_version)
            )
            return
        vehicle.hold_release = None
        vehicle.route_pos += 1
        self.enter_link(vehicle, next_link, now)

    # ------------------------------------------------------------ event logic

    def _handle_agent_enter(self, agent_id: int, now: float) -> None:
        agent = self.agents[agent_id]
        if agent.role is Role.RIDER:
            self._handle_rider_request(agent, now)
            return
        vehicle = Vehicle(agent)
        self.vehicles[agent_id] = vehicle
        if agent.role is Role.RIDESHARE_DRIVER:
            self._plan_initial_route(vehicle, now)
            self._continue_rideshare(vehicle, agent.origin, now)
        else:
            next_link = self.vehicle_at_node(vehicle, agent.origin, now)
            if next_link is not None:
                self.enter_link(vehicle, next_link, now)

    def _plan_initial_route(self, vehicle: Vehicle, now: float) -> None:
        """Unmatched ridesharing drivers stay available at their origin until
        their latest departure, then drive their own best route; a matching
        commit rewrites this plan."""
        agent = vehicle.agent
        path = dijkstra_route(self.network, self.route_cost_fn(now),
                              agent.origin, agent.destination)
        if path is None:
            vehicle.route = []
            vehicle.planned_entry_steps = []
            return
        step = max(ceil_steps(now, self.dt),
                   ceil_steps(agent.window.latest_departure, self.dt))
        steps = []
        for link_id in path.links:
            steps.append(step)
            delay = self.link_delay(link_id, LaneClass.GENERAL, now)
            step += max(1, ceil_steps(delay, self.dt))
        vehicle.route = list(path.links)
        vehicle.planned_entry_steps = steps
        vehicle.route_pos = 0
        agent.committed_route = [
            (lid, s * self.dt) for lid, s in zip(vehicle.route, steps)
        ]

    def _handle_rider_request(self, agent: VehicleAgent, now: float) -> None:
        rider = RiderRequest(
            id=agent.id,
            origin=agent.origin,
            destination=agent.destination,
            window=agent.window,
            request_time=agent.request_time,
        )
        result = match_rider(self, rider)
        self.match_results[agent.id] = result
        if result.matched:
            agent.matched = True
            self.rider_itineraries[agent.id] = result.itinerary
        else:
            fallback = fallback_to_driver(agent, next_id=self._next_agent_id)
            self._next_agent_id += 1
            self.agents[fallback.id] = fallback
            self.fallback_agents[agent.id] = fallback.id
            self.push_event(now, EV_AGENT_ENTER, fallback.id)

    def _handle_arrive(self, payload: tuple, now: float) -> None:
        agent_id, link_id, lane_class = payload
        self.link_states[link_id].record_exit(lane_class)
        vehicle = self.vehicles[agent_id]
        node = self.network.link(link_id).to_node
        vehicle.on_link = False
        vehicle.node = node
        vehicle.link_arrival_node = None
        vehicle.link_arrival_time = None
        if vehicle.agent.role is Role.RIDESHARE_DRIVER:
            self._continue_rideshare(vehicle, node, now)
        else:
            next_link = self.vehicle_at_node(vehicle, node, now)
            if next_link is None:
                if not vehicle.stranded:
                    vehicle.arrival_time = now
                return
            self.enter_link(vehicle, next_link, now)

    def _handle_depart(self, payload: tuple, now: float) -> None:
        agent_id, version = payload
        vehicle = self.vehicles.get(agent_id)
        if vehicle is None or not vehicle.active or vehicle.on_link:
            return
        if version != vehicle.plan_version:
            return  # superseded by a later matching commit
        self._continue_rideshare(vehicle, vehicle.node, now)

    def _handle_background(self, payload: tuple, now: float) -> None:
        link_id = payload[0]
        self.background_count += 1
        vid = -self.background_count
        delay = self.link_delay(link_id, LaneClass.CARPOOL, now)
        self.link_states[link_id].record_entry(vid, LaneClass.CARPOOL, now,
                                               background=True)
        self.push_event(now + delay, EV_ARRIVE_NODE, (vid, link_id, LaneClass.CARPOOL))

    # --------------------------------------------------------------- matching

    def collect_offers(self, rider: RiderRequest) -> list[DriverOffer]:
        offers = []
        now = self.clock
        for agent_id in sorted(self.vehicles):
            vehicle = self.vehicles[agent_id]
            agent = vehicle.agent
            if agent.role is not Role.RIDESHARE_DRIVER or not vehicle.active:
                continue
            if vehicle.on_link:
                anchor_node = vehicle.link_arrival_node
                anchor_time = vehicle.link_arrival_time
                departed = True
            else:
                anchor_node = vehicle.node
                anchor_time = now
                departed = vehicle.departure_time is not None
            if anchor_time > agent.window.latest_arrival + 1e-12:
                continue  # already outside its own schedule
            window = TimeWindow(
                earliest_departure=anchor_time,
                latest_departure=max(agent.window.latest_departure, anchor_time),
                earliest_arrival=min(agent.window.earliest_arrival,
                                     agent.window.latest_arrival),
                latest_arrival=agent.window.latest_arrival,
            )
            if anchor_node == agent.destination and not vehicle.pins:
                continue
            offers.append(DriverOffer(
                id=agent.id,
                origin=anchor_node,
                destination=agent.destination,
                window=window,
                seats=agent.seats,
                committed_route=tuple(
                    (lid, s * self.dt)
                    for lid, s in zip(vehicle.route[vehicle.route_pos:],
                                      vehicle.planned_entry_steps[vehicle.route_pos:])
                ),
                pins=tuple(vehicle.pins),
                aboard=len(vehicle.aboard),
                departed=departed,
            ))
        return offers

    def _step_matrix(self) -> tuple[dict[int, int], dict]:
        snapshot = self._matching_snapshot
        if snapshot is None:
            self.matching_travel_time()
            snapshot = self._matching_snapshot
        tau = {
            link.id: max(1, ceil_steps(snapshot[link.id], self.dt))
            for link in self.network.links
        }
        from .matching import _min_step_matrix

        return tau, _min_step_matrix(self.network, tau)

    def _shortest_step_path(
        self, tau: dict[int, int], origin: int, dest: int
    ) -> Optional[list[int]]:
        path = dijkstra_route(self.network, lambda l: float(tau[l.id]), origin, dest)
        return list(path.links) if path is not None else None

    def commit_itinerary(self, rider: RiderRequest, itinerary: Itinerary) -> bool:
        """Two-phase commit of a solved itinerary onto the drivers involved.

        Phase one re-verifies every driver's pin chain (ordering, travel
        feasibility, seat capacity, own window) against the current snapshot;
        phase two rewrites routes and holds. Returns False when any driver
        can no longer honor the plan, leaving all drivers untouched.
        """
        tau, matrix = self._step_matrix()
        plans: list[tuple[Vehicle, list[Pin], list[int], list[int], Optional[float]]] = []
        for leg in itinerary.legs:
            vehicle = self.vehicles.get(leg.driver)
            if vehicle is None or not vehicle.active:
                return False
            agent = vehicle.agent
            new_pins = sorted(
                vehicle.pins
                + [Pin(leg.board_node, leg.board_step, "board", rider.id),
                   Pin(leg.alight_node, leg.alight_step, "alight", rider.id)],
                key=lambda p: (p.step, 0 if p.action == "alight" else 1, p.rider_id),
            )
            occ = len(vehicle.aboard)
            for pin in new_pins:
                occ += 1 if pin.action == "board" else -1
                if occ < 0 or occ > agent.seats:
                    return False
            if vehicle.on_link:
                anchor_node = vehicle.link_arrival_node
                anchor_step = ceil_steps(vehicle.link_arrival_time, self.dt)
            else:
                anchor_node = vehicle.node
                anchor_step = ceil_steps(self.clock, self.dt)
            la_step = ceil_steps(agent.window.latest_arrival, self.dt)
            ld_step = ceil_steps(agent.window.latest_departure, self.dt)

            # (node, deadline step, hold until the step before moving on?)
            chain = [(anchor_node, anchor_step, False)]
            chain += [(p.node, p.step, p.action == "board") for p in new_pins]
            chain.append((agent.destination, la_step, False))
            route: list[int] = []
            entry_steps: list[int] = []
            cursor = anchor_step  # earliest step the vehicle can leave chain[idx]
            for idx in range(len(chain) - 1):
                from_node = chain[idx][0]
                to_node, to_step, holds = chain[idx + 1]
                links = self._shortest_step_path(tau, from_node, to_node)
                if links is None:
                    return False
                travel = sum(tau[lid] for lid in links)
                if cursor + travel > to_step:
                    return False
                depart = cursor
                if idx == 0 and not vehicle.on_link and vehicle.departure_time is None:
                    # not yet underway: leave just in time, within the window
                    depart = max(cursor, min(to_step - travel, ld_step))
                    if links and depart > ld_step:
                        return False
                step = depart
                for lid in links:
                    route.append(lid)
                    entry_steps.append(step)
                    step += tau[lid]
                # a boarding stop pins the onward departure; dropoffs do not
                cursor = max(step, to_step) if holds else step
            plans.append((vehicle, new_pins, route, entry_steps,
                          entry_steps[0] * self.dt if entry_steps else None))

        for vehicle, new_pins, route, entry_steps, depart_hold in plans:
            vehicle.pins = new_pins
            vehicle.route = route
            vehicle.planned_entry_steps = entry_steps
            vehicle.route_pos = 0
            vehicle.plan_version += 1
            vehicle.agent.committed_route = [
                (lid, s * self.dt) for lid, s in zip(route, entry_steps)
            ]
            if not vehicle.on_link and vehicle.active:
                release = depart_hold if depart_hold is not None else self.clock
                release = max(release, self.clock)
                vehicle.hold_release = release
                self.push_event(
                    release, EV_DEPART_NODE, (vehicle.agent.id, vehicle.plan_version)
                )
        return True

    # ------------------------------------------------------------------- runs

    def run(self, horizon: Optional[float] = None) -> SimReport:
        """Process every event with time <= horizon and assemble the report."""
        limit = self.horizon if horizon is None else horizon
        while self.events and self.events[0][0] <= limit + 1e-12:
            time, _, kind, payload = heapq.heappop(self.events)
            self.clock = time
            if kind == EV_AGENT_ENTER:
                self._handle_agent_enter(payload, time)
            elif kind == EV_ARRIVE_NODE:
                if payload[0] < 0:
                    self.link_states[payload[1]].record_exit(payload[2])
                else:
                    self._handle_arrive(payload, time)
            elif kind == EV_DEPART_NODE:
                self._handle_depart(payload, time)
            elif kind == EV_BACKGROUND:
                self._handle_background(payload, time)
        return self.build_report()

    def observe_link_flows(self) -> dict[int, int]:
        """Distinct non-background vehicle entries per link since t=0."""
        out = {}
        for link_id, state in sorted(self.link_states.items()):
            total = sum(state.totals.values()) - sum(state.background_totals.values())
            out[link_id] = total
        return out

    def build_report(self) -> SimReport:
        class_counts = {}
        background_counts = {}
        for link_id, state in sorted(self.link_states.items()):
            for lane_class in (LaneClass.GENERAL, LaneClass.CARPOOL):
                class_counts[(link_id, lane_class)] = state.totals[lane_class]
                background_counts[(link_id, lane_class)] = (
                    state.background_totals[lane_class]
                )
        outcomes = []
        riders_total = 0
        riders_matched = 0
        for agent_id in sorted(self.agents):
            agent = self.agents[agent_id]
            if agent.role is Role.RIDER:
                riders_total += 1
                matched = agent.matched
                if matched:
                    riders_matched += 1
                departure = self.rider_board_time.get(agent_id)
                arrival = self.rider_alight_time.get(agent_id)
                outcomes.append(AgentOutcome(agent_id, agent.role, matched,
                                             departure, arrival))
            else:
                vehicle = self.vehicles.get(agent_id)
                departure = vehicle.departure_time if vehicle else None
                arrival = vehicle.arrival_time if vehicle else None
                stranded = vehicle.stranded if vehicle else False
                outcomes.append(AgentOutcome(agent_id, agent.role, None,
                                             departure, arrival, stranded))
        return SimReport(
            link_class_counts=class_counts,
            link_background_counts=background_counts,
            validation_counts=self.observe_link_flows(),
            outcomes=outcomes,
            riders_total=riders_total,
            riders_matched=riders_matched,
            horizon=self.horizon,
            stranded_count=len(self.stranded_agents),
            match_trace=list(self.match_trace),
        )


def init_simulation(
    config, network: Network, seed: int
) -> SimState:
    """Construct a ready-to-run SimState from a scenario configuration."""
    demand = config.demand_spec(network)
    return SimState(
        network=network,
        demand=demand,
        seed=seed,
        weights=config.weights,
        bpr_alpha=config.bpr_alpha,
        bpr_beta=config.bpr_beta,
        dt=config.dt,
        penalty=config.penalty,
        flow_window=config.flow_window,
        horizon=config.horizon,
        unused_capacity=config.unused_capacity,
    )


def assigned_link_rates(
    network: Network, od_rates: dict[tuple[int, int], float]
) -> dict[int, float]:
    """Free-flow all-or-nothing hourly link rates implied by the O-D demand."""
    rates = {l.id: 0.0 for l in network.links}
    routes = free_flow_paths(network, sorted(od_rates))
    for od, rate in od_rates.items():
        for link_id in routes[od][0]:
            rates[link_id] += rate
    return rates


def carpool_background_rates(
    network: Network,
    od_rates: dict[tuple[int, int], float],
    scale: float,
    unused_fraction: float,
) -> dict[int, float]:
    """Hourly background rate per carpool link at the given unused fraction.

    The calibrated lane capacity is anchored so that 75% of it equals the
    scenario's per-general-lane hourly flow on that link; injecting
    ``(1 - unused_fraction)`` of the calibrated capacity therefore yields
    equivalent carpool- and general-lane flows at 25% unused capacity.
    """
    link_rates = assigned_link_rates(network, od_rates)
    out = {}
    for link in sorted(network.carpool_links(), key=lambda l: l.id):
        per_lane = link_rates[link.id] * scale / link.general_lanes
        calibrated_capacity = per_lane / 0.75
        out[link.id] = (1.0 - unused_fraction) * calibrated_capacity
    return out


def inject_background_carpool_load(sim: SimState, unused_fraction: float) -> None:
    """Schedule pass-through carpool-lane traffic consuming the given share
    of each carpool lane's calibrated capacity (see
    ``carpool_background_rates``)."""
    if not 0.0 <= unused_fraction <= 1.0:
        raise ValueError("unused_fraction must lie in [0, 1]")
    if not sim.network.carpool_links():
        raise SimulationError("network has no carpool-lane link")
    if unused_fraction >= 1.0:
        return
    rates = carpool_background_rates(
        sim.network, sim.demand.od_rates, sim.demand.scale, unused_fraction
    )
    rng = sim._background_rng
    for link_id in sorted(rates):
        rate = rates[link_id]
        if rate <= 0:
            continue
        count = rng.poisson(rate * sim.horizon)
        times = np.sort(rng.uniform(0.0, sim.horizon, size=count))
        for t in times:
            sim.push_event(float(t), EV_BACKGROUND, (link_id,))
