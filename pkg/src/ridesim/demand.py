"""Demand synthesis: arrival schedules, role assignment and time windows.

O-D hourly rates are either given explicitly or calibrated so that a
free-flow all-or-nothing assignment reproduces the network's observed daily
link flows. Agents arrive as independent Poisson streams per O-D pair;
roles are drawn from the configured participation shares; every window
admits at least the free-flow solo trip by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import Role, TimeWindow, VehicleAgent
from .network import Network
from .routing import dijkstra_route

DEFAULT_OD_02_DAILY = 26660.0  # free split of the shared-corridor demand
DEFAULT_SEATS = 4


class DemandError(ValueError):
    """Raised for unsatisfiable demand specifications or calibrations."""


@dataclass(frozen=True)
class Shares:
    rider: float
    rideshare_driver: float
    regular_driver: float

    def __post_init__(self) -> None:
        for name, value in (("rider", self.rider),
                            ("rideshare_driver", self.rideshare_driver),
                            ("regular_driver", self.regular_driver)):
            if not 0.0 <= value <= 1.0:
                raise DemandError(f"share {name}={value} outside [0, 1]")
        if abs(self.rider + self.rideshare_driver + self.regular_driver - 1.0) > 1e-9:
            raise DemandError("participation shares must sum to 1")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.rider, self.rideshare_driver, self.regular_driver)


@dataclass(frozen=True)
class DemandSpec:
    od_rates: dict[tuple[int, int], float]  # vehicles/hour before scaling
    shares: Shares
    window_flexibility: float = 0.25        # hours
    horizon: float = 24.0                   # hours
    scale: float = 1.0
    seats: int = DEFAULT_SEATS

    def __post_init__(self) -> None:
        if self.window_flexibility < 0:
            raise DemandError("window_flexibility must be >= 0")
        if self.horizon <= 0:
            raise DemandError("horizon must be positive")
        if self.scale < 0:
            raise DemandError("scale must be >= 0")
        for od, rate in self.od_rates.items():
            if rate < 0:
                raise DemandError(f"negative rate for O-D pair {od}")
            if od[0] == od[1]:
                raise DemandError(f"degenerate O-D pair {od}")


@dataclass(frozen=True)
class AgentSchedule:
    agents: tuple[VehicleAgent, ...]  # ordered by arrival time

    def __len__(self) -> int:
        return len(self.agents)

    def arrival_times(self) -> list[float]:
        return [a.request_time for a in self.agents]

    def write_csv(self, path) -> None:
        """Audit export: one row per generated agent."""
        from .reports import write_csv_atomic

        write_csv_atomic(
            path,
            ("id", "role", "origin", "destination", "request_time",
             "earliest_departure", "latest_departure", "earliest_arrival",
             "latest_arrival", "seats"),
            [(a.id, a.role.value, a.origin, a.destination, a.request_time,
              a.window.earliest_departure, a.window.latest_departure,
              a.window.earliest_arrival, a.window.latest_arrival, a.seats)
             for a in self.agents],
        )


def free_flow_paths(
    network: Network, od_pairs: list[tuple[int, int]]
) -> dict[tuple[int, int], tuple[tuple[int, ...], float]]:
    """Free-flow route and travel time per O-D pair; error when disconnected."""
    out = {}
    for origin, dest in od_pairs:
        path = dijkstra_route(network, lambda l: l.free_flow_time, origin, dest)
        if path is None:
            raise DemandError(f"O-D pair {origin}->{dest} is not connected")
        out[(origin, dest)] = (path.links, path.total_time)
    return out


def calibrate_od_rates(
    network: Network,
    target_daily_flows: dict[int, float],
    od_pairs: list[tuple[int, int]] | None = None,
    fixed_daily: dict[tuple[int, int], float] | None = None,
    tolerance: float = 1e-6,
) -> dict[tuple[int, int], float]:
    """Invert observed daily link flows into hourly O-D rates.

    Rates are chosen so that assigning each pair's demand to its free-flow
    route reproduces the targets exactly. Under-determined systems are
    closed with ``fixed_daily`` pins (the bundled testbed pins the
    origin-to-far-end split). Unsatisfiable targets raise DemandError with
    the residual per link.
    """
    missing = [l.id for l in network.links if l.id not in target_daily_flows]
    if missing:
        raise DemandError(f"targets missing for link(s) {missing}")
    if all(abs(v) < 1e-12 for v in target_daily_flows.values()):
        pairs = od_pairs or default_od_pairs(network)
        return {od: 0.0 for od in pairs}

    pairs = od_pairs or default_od_pairs(network)
    fixed_daily = dict(fixed_daily or {})
    routes = free_flow_paths(network, pairs)

    link_ids = sorted(target_daily_flows)
    residual_targets = {l: float(target_daily_flows[l]) for l in link_ids}
    for od, daily in fixed_daily.items():
        if od not in routes:
            raise DemandError(f"fixed O-D pair {od} not in the pair set")
        for link_id in routes[od][0]:
            residual_targets[link_id] -= daily

    free = [od for od in pairs if od not in fixed_daily]
    incidence = np.zeros((len(link_ids), len(free)))
    row = {l: i for i, l in enumerate(link_ids)}
    for col, od in enumerate(free):
        for link_id in routes[od][0]:
            incidence[row[link_id], col] = 1.0
    rhs = np.array([residual_targets[l] for l in link_ids])

    solution, *_ = np.linalg.lstsq(incidence, rhs, rcond=None)
    residual = incidence @ solution - rhs
    if np.max(np.abs(residual)) > tolerance:
        detail = {link_ids[i]: float(residual[i]) for i in range(len(link_ids))
                  if abs(residual[i]) > tolerance}
        raise DemandError(f"calibration residuals exceed tolerance: {detail}")
    if np.min(solution) < -tolerance:
        negatives = {free[i]: float(solution[i]) for i in range(len(free))
                     if solution[i] < -tolerance}
        raise DemandError(f"calibration produced negative rates: {negatives}")

    daily = dict(fixed_daily)
    for od, value in zip(free, solution):
        daily[od] = max(0.0, float(value))
    return {od: value / 24.0 for od, value in daily.items()}


def default_od_pairs(network: Network) -> list[tuple[int, int]]:
    """All ordered node pairs connected under free flow, origin-major order."""
    nodes = network.node_ids()
    pairs = []
    for origin in nodes:
        for dest in nodes:
            if origin == dest:
                continue
            if dijkstra_route(network, lambda l: l.free_flow_time, origin, dest):
                pairs.append((origin, dest))
    return pairs


def testbed_od_pairs() -> list[tuple[int, int]]:
    """The five forward-reachable pairs of the bundled four-link testbed."""
    return [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)]


def generate_agents(
    spec: DemandSpec, network: Network, seed: "int | np.random.SeedSequence"
) -> AgentSchedule:
    """Materialize the arrival schedule for one replication.

    Arrivals are Poisson per O-D pair at ``scale * rate``; roles follow the
    participation shares; windows give every agent ``window_flexibility``
    hours of slack beyond the free-flow trip. Identical (spec, seed) pairs
    produce identical schedules.
    """
    od_pairs = sorted(spec.od_rates)
    routes = free_flow_paths(network, od_pairs)
    rng = np.random.default_rng(seed)

    arrivals: list[tuple[float, tuple[int, int]]] = []
    for od in od_pairs:
        rate = spec.od_rates[od] * spec.scale
        if rate <= 0:
            continue
        count = rng.poisson(rate * spec.horizon)
        times = np.sort(rng.uniform(0.0, spec.horizon, size=count))
        arrivals.extend((float(t), od) for t in times)
    arrivals.sort(key=lambda item: (item[0], item[1]))

    role_order = (Role.RIDER, Role.RIDESHARE_DRIVER, Role.REGULAR_DRIVER)
    draws = rng.random(len(arrivals))
    cut_rider = spec.shares.rider
    cut_driver = cut_rider + spec.shares.rideshare_driver

    agents = []
    for idx, ((time, od), draw) in enumerate(zip(arrivals, draws)):
        if draw < cut_rider:
            role = role_order[0]
        elif draw < cut_driver:
            role = role_order[1]
        else:
            role = role_order[2]
        fft = routes[od][1]
        window = TimeWindow(
            earliest_departure=time,
            latest_departure=time + spec.window_flexibility,
            earliest_arrival=time + fft,
            latest_arrival=time + fft + spec.window_flexibility,
        )
        agents.append(VehicleAgent(
            id=idx,
            role=role,
            origin=od[0],
            destination=od[1],
            request_time=time,
            window=window,
            seats=spec.seats if role is Role.RIDESHARE_DRIVER else 0,
        ))
    return AgentSchedule(tuple(agents))


def fallback_to_driver(rider: VehicleAgent, next_id: int | None = None) -> VehicleAgent:
    """Convert an unmatched rider into a regular driver with the same trip."""
    if rider.role is not Role.RIDER:
        raise ValueError(f"agent {rider.id} is not a rider")
    if rider.matched:
        raise ValueError(f"rider {rider.id} is already matched")
    return VehicleAgent(
        id=rider.id if next_id is None else next_id,
        role=Role.REGULAR_DRIVER,
        origin=rider.origin,
        destination=rider.destination,
        request_time=rider.window.earliest_departure,
        window=rider.window,
        seats=0,
    )
