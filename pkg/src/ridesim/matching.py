"""Multi-hop ride matching over per-rider time-expanded networks.

Pipeline for one rider request:

1. ``build_time_expanded`` discretizes time into steps of ``dt`` hours and
   intersects the rider's spatio-temporal feasibility windows with each
   driver's remaining schedule flexibility, producing driver-labelled travel
   arcs and (implicit) wait arcs.
2. ``preprocess`` prunes vertices not on any origin-to-destination path,
   orders the survivors topologically and reports feasibility.
3. ``solve_itinerary`` runs a dynamic program over the pruned graph. A rider
   may transfer between vehicles but may never re-board a driver previously
   left, so each DP label carries the set of drivers already used; labels at
   a (vertex, current driver) pair are kept Pareto-minimal under
   (cost, wait steps, leg count) and used-set inclusion, which keeps the
   search exact under the no-re-boarding rule.

``brute_force_itinerary`` enumerates every labelled path and is the testing
oracle for the dynamic program.

All travel times are read from a cost snapshot frozen at the match instant;
durations round up to whole steps.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

from .agents import TimeWindow
from .network import Network

INF = float("inf")

Vertex = tuple[int, int]  # (node id, time step)


class EnumerationBudgetError(RuntimeError):
    """Raised when the brute-force oracle exceeds its expansion budget."""


def ceil_steps(hours: float, dt: float) -> int:
    """Smallest whole step count covering ``hours`` (tolerant of float noise)."""
    if hours <= 0:
        return 0
    return math.ceil(hours / dt - 1e-9)


@dataclass(frozen=True)
class RiderRequest:
    id: int
    origin: int
    destination: int
    window: TimeWindow
    request_time: float

    def __post_init__(self) -> None:
        if self.origin == self.destination:
            raise ValueError(f"rider {self.id}: origin equals destination")
        if self.request_time > self.window.earliest_departure + 1e-12:
            raise ValueError(f"rider {self.id}: request after earliest departure")


@dataclass(frozen=True)
class Pin:
    """A committed pickup or dropoff the driver must still serve."""

    node: int
    step: int
    action: str  # "board" | "alight"
    rider_id: int


@dataclass(frozen=True)
class DriverOffer:
    """Snapshot of one ridesharing driver's remaining flexibility.

    ``origin`` is the driver's anchor: the node where the vehicle currently
    is (or will next be), with ``window.earliest_departure`` the time it is
    available there. ``pins`` are committed stops still ahead, in time order.
    """

    id: int
    origin: int
    destination: int
    window: TimeWindow
    seats: int
    committed_route: tuple[tuple[int, float], ...] = ()
    pins: tuple[Pin, ...] = ()
    aboard: int = 0
    departed: bool = False

    def slot_occupancies(self) -> list[int]:
        """Riders on board within each inter-pin segment (pins split slots)."""
        occs = [self.aboard]
        for pin in self.pins:
            delta = 1 if pin.action == "board" else -1
            occs.append(occs[-1] + delta)
        if any(o < 0 for o in occs):
            raise ValueError(f"driver {self.id}: negative occupancy in pin chain")
        return occs


@dataclass(frozen=True)
class TravelArc:
    tail: Vertex
    head: Vertex
    driver: int
    cost: float


@dataclass
class TimeExpandedNetwork:
    """Rider-specific time-expanded graph (the matcher's search space)."""

    dt: float
    origin: int
    destination: int
    node_intervals: dict[int, tuple[int, int]]
    travel_arcs: list[TravelArc]
    time_weight: float = 1.0

    @property
    def start_vertex(self) -> Optional[Vertex]:
        interval = self.node_intervals.get(self.origin)
        return (self.origin, interval[0]) if interval else None

    def dest_vertices(self) -> list[Vertex]:
        interval = self.node_intervals.get(self.destination)
        if not interval:
            return []
        return [(self.destination, k) for k in range(interval[0], interval[1] + 1)]

    def vertices(self) -> list[Vertex]:
        out = []
        for node in sorted(self.node_intervals):
            lo, hi = self.node_intervals[node]
            out.extend((node, k) for k in range(lo, hi + 1))
        return out

    def wait_arcs(self) -> Iterator[tuple[Vertex, Vertex]]:
        for node in sorted(self.node_intervals):
            lo, hi = self.node_intervals[node]
            for k in range(lo, hi):
                yield (node, k), (node, k + 1)

    def active_links(self) -> set[tuple[int, int]]:
        return {(arc.tail[0], arc.head[0]) for arc in self.travel_arcs}

    def is_empty(self) -> bool:
        return not self.node_intervals


@dataclass(frozen=True)
class ItineraryLeg:
    driver: int
    board_node: int
    board_step: int
    alight_node: int
    alight_step: int


@dataclass(frozen=True)
class Itinerary:
    legs: tuple[ItineraryLeg, ...]
    total_cost: float
    wait_steps: int
    dt: float

    @property
    def arrival_step(self) -> int:
        return self.legs[-1].alight_step

    @property
    def departure_step(self) -> int:
        return self.legs[0].board_step

    def driver_sequence(self) -> tuple[int, ...]:
        return tuple(leg.driver for leg in self.legs)


@dataclass(frozen=True)
class MatchResult:
    rider_id: int
    matched: bool
    itinerary: Optional[Itinerary] = None
    reason: str = ""


def _min_step_matrix(
    network: Network, tau: dict[int, int]
) -> dict[int, dict[int, float]]:
    """All-pairs minimum travel steps under the frozen per-link durations."""
    matrix: dict[int, dict[int, float]] = {}
    nodes = network.node_ids()
    for source in nodes:
        dist: dict[int, float] = {n: INF for n in nodes}
        dist[source] = 0
        heap = [(0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for link_id in network.adjacency[u]:
                link = network.link(link_id)
                nd = d + tau[link_id]
                if nd < dist[link.to_node]:
                    dist[link.to_node] = nd
                    heapq.heappush(heap, (nd, link.to_node))
        matrix[source] = dist
    return matrix


def _driver_presence(
    offer: DriverOffer,
    node: int,
    dt: float,
    matrix: dict[int, dict[int, float]],
) -> list[tuple[int, int, int]]:
    """(lo step, hi step, slot index) windows during which the driver can be
    at ``node`` without breaking his schedule or committed stops."""
    anchor_step = ceil_steps(offer.window.earliest_departure, dt)
    la_step = ceil_steps(offer.window.latest_arrival, dt)
    ld_step = ceil_steps(offer.window.latest_departure, dt)
    chain: list[tuple[int, int]] = [(offer.origin, anchor_step)]
    chain += [(pin.node, pin.step) for pin in offer.pins]
    windows: list[tuple[int, int, int]] = []
    for slot, (from_node, from_step) in enumerate(chain):
        if slot + 1 < len(chain):
            to_node, to_step = chain[slot + 1]
        else:
            to_node, to_step = offer.destination, la_step
        ahead = matrix[from_node][node]
        behind = matrix[node][to_node]
        if ahead == INF or behind == INF:
            continue
        lo = from_step + int(ahead)
        hi = to_step - int(behind)
        if slot == 0 and not offer.departed and node == offer.origin:
            hi = min(hi, ld_step)
        if lo <= hi:
            windows.append((lo, hi, slot))
    return windows


def build_time_expanded(
    rider: RiderRequest,
    drivers: Sequence[DriverOffer],
    network: Network,
    travel_time: Callable[[int, float], float],
    dt: float,
    time_weight: float = 1.0,
) -> TimeExpandedNetwork:
    """Construct the rider's time-expanded network.

    Node windows come from forward/backward minimum-time sweeps between the
    rider's earliest departure and latest arrival; a driver contributes a
    travel arc on a link only while the link traversal fits inside both the
    rider's window at the endpoints and the driver's own remaining schedule
    (including committed stops and seat capacity). An empty network is the
    valid encoding of an infeasible request.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0 = rider.request_time
    tau = {
        link.id: max(1, ceil_steps(travel_time(link.id, t0), dt))
        for link in network.links
    }
    matrix = _min_step_matrix(network, tau)

    w = rider.window
    ed = ceil_steps(w.earliest_departure, dt)
    ld = ceil_steps(w.latest_departure, dt)
    ea = ceil_steps(w.earliest_arrival, dt)
    la = ceil_steps(w.latest_arrival, dt)

    intervals: dict[int, tuple[int, int]] = {}
    for node in network.node_ids():
        ahead = matrix[rider.origin][node]
        behind = matrix[node][rider.destination]
        if ahead == INF or behind == INF:
            continue
        lo = ed + int(ahead)
        hi = la - int(behind)
        if node == rider.origin:
            hi = min(hi, ld)
        if node == rider.destination:
            lo = max(lo, ea)
        if lo <= hi:
            intervals[node] = (lo, hi)
    if rider.origin not in intervals or rider.destination not in intervals:
        return TimeExpandedNetwork(dt, rider.origin, rider.destination, {}, [],
                                   time_weight)

    seen_arcs: set[tuple[Vertex, Vertex, int]] = set()
    arcs: list[TravelArc] = []
    for offer in sorted(drivers, key=lambda o: o.id):
        occupancies = offer.slot_occupancies()
        presence: dict[int, list[tuple[int, int, int]]] = {
            node: _driver_presence(offer, node, dt, matrix) for node in intervals
        }
        for link in sorted(network.links, key=lambda l: l.id):
            i, j = link.from_node, link.to_node
            if i not in intervals or j not in intervals:
                continue
            r_lo_i, r_hi_i = intervals[i]
            r_lo_j, r_hi_j = intervals[j]
            steps = tau[link.id]
            cost = time_weight * steps * dt
            for d_lo, d_hi, slot in presence[i]:
                if occupancies[slot] >= offer.seats:
                    continue
                lo = max(r_lo_i, d_lo)
                hi = min(r_hi_i, d_hi)
                for k in range(lo, hi + 1):
                    k2 = k + steps
                    if not (r_lo_j <= k2 <= r_hi_j):
                        continue
                    if not any(
                        p_lo <= k2 <= p_hi and s == slot
                        for p_lo, p_hi, s in presence[j]
                    ):
                        continue
                    signature = ((i, k), (j, k2), offer.id)
                    if signature in seen_arcs:
                        continue
                    seen_arcs.add(signature)
                    arcs.append(TravelArc((i, k), (j, k2), offer.id, cost))
    arcs.sort(key=lambda a: (a.tail, a.head, a.driver))
    return TimeExpandedNetwork(dt, rider.origin, rider.destination, intervals,
                               arcs, time_weight)


@dataclass
class PrunedGraph:
    """Topologically ordered remainder of a TEN after reachability pruning."""

    ten: TimeExpandedNetwork
    vertices: list[Vertex]
    adjacency: dict[Vertex, list[tuple[Vertex, Optional[int], float]]]
    feasible: bool
    start: Optional[Vertex]
    dests: set[Vertex]
    removed: set[Vertex]


def _all_arcs(ten: TimeExpandedNetwork) -> Iterator[tuple[Vertex, Vertex, Optional[int], float]]:
    for tail, head in ten.wait_arcs():
        yield tail, head, None, 0.0  # wait cost filled in by the solver
    for arc in ten.travel_arcs:
        yield arc.tail, arc.head, arc.driver, arc.cost


def preprocess(
    ten: TimeExpandedNetwork,
    origins: Optional[set[Vertex]] = None,
    dests: Optional[set[Vertex]] = None,
) -> PrunedGraph:
    """Drop vertices not on any origin-to-destination path; topo-sort the rest.

    ``feasible`` is True iff a depth-first search still finds at least one
    path from an origin vertex to a destination vertex.
    """
    all_vertices = set(ten.vertices())
    if origins is None:
        origins = {ten.start_vertex} if ten.start_vertex else set()
    if dests is None:
        dests = set(ten.dest_vertices())
    origins = {v for v in origins if v in all_vertices}
    dests = {v for v in dests if v in all_vertices}

    forward: dict[Vertex, list[tuple[Vertex, Optional[int], float]]] = {
        v: [] for v in all_vertices
    }
    backward: dict[Vertex, list[Vertex]] = {v: [] for v in all_vertices}
    for tail, head, driver, cost in _all_arcs(ten):
        forward[tail].append((head, driver, cost))
        backward[head].append(tail)

    def closure(seeds: set[Vertex], neighbors: dict[Vertex, list[Vertex]]) -> set[Vertex]:
        seen = set(seeds)
        stack = list(seeds)
        while stack:
            v = stack.pop()
            for nxt in neighbors[v]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    reach_fwd = closure(origins, {v: [h for h, _, _ in forward[v]] for v in all_vertices})
    reach_bwd = closure(dests, backward)
    surviving = reach_fwd & reach_bwd
    removed = all_vertices - surviving

    adjacency = {
        v: [(h, d, c) for h, d, c in forward[v] if h in surviving]
        for v in surviving
    }
    ordered = sorted(surviving, key=lambda v: (v[1], v[0]))

    # Depth-first confirmation that a route plan exists at all.
    feasible = False
    stack = [v for v in sorted(origins) if v in surviving]
    seen: set[Vertex] = set(stack)
    while stack:
        v = stack.pop()
        if v in dests:
            feasible = True
            break
        for head, _, _ in adjacency[v]:
            if head not in seen:
                seen.add(head)
                stack.append(head)

    start = min(origins) if origins else None
    if start is not None and start not in surviving:
        start = None
    return PrunedGraph(
        ten=ten,
        vertices=ordered,
        adjacency=adjacency,
        feasible=feasible,
        start=start,
        dests={v for v in dests if v in surviving},
        removed=removed,
    )


@dataclass
class _Label:
    cost: float
    waits: int
    legs: int
    last: Optional[int]
    used: frozenset[int]
    vertex: Vertex
    parent: Optional["_Label"] = None
    arc_driver: Optional[int] = None  # driver of the arc into this label; None = wait

    def dominates(self, other: "_Label") -> bool:
        return (
            self.cost <= other.cost
            and self.waits <= other.waits
            and self.legs <= other.legs
            and self.used <= other.used
        )


def _insert_label(bucket: list[_Label], label: _Label) -> bool:
    for existing in bucket:
        if existing.dominates(label):
            return False
    bucket[:] = [ex for ex in bucket if not label.dominates(ex)]
    bucket.append(label)
    return True


def _trace(label: _Label, dt: float) -> Itinerary:
    arcs: list[tuple[Vertex, Vertex, Optional[int]]] = []
    node: Optional[_Label] = label
    while node is not None and node.parent is not None:
        arcs.append((node.parent.vertex, node.vertex, node.arc_driver))
        node = node.parent
    arcs.reverse()

    legs: list[ItineraryLeg] = []
    current: Optional[int] = None
    board: Optional[Vertex] = None
    alight: Optional[Vertex] = None
    for tail, head, driver in arcs:
        if driver is None:
            continue
        if driver != current:
            if current is not None:
                legs.append(ItineraryLeg(current, board[0], board[1],
                                         alight[0], alight[1]))
            current, board = driver, tail
        alight = head
    if current is not None:
        legs.append(ItineraryLeg(current, board[0], board[1],
                                 alight[0], alight[1]))
    return Itinerary(tuple(legs), label.cost, label.waits, dt)


def solve_itinerary(
    graph: PrunedGraph, rider: RiderRequest, penalty: float
) -> Optional[Itinerary]:
    """Minimum-cost itinerary over the pruned graph, or None when infeasible.

    Objective: summed travel-arc cost plus ``penalty`` per wait step; ties
    broken toward fewer waits, then fewer legs, then earlier arrival, then
    the lexicographically smallest driver sequence.
    """
    if not graph.feasible or graph.start is None:
        return None
    table: dict[Vertex, dict[Optional[int], list[_Label]]] = {
        v: {} for v in graph.vertices
    }
    root = _Label(0.0, 0, 0, None, frozenset(), graph.start)
    table[graph.start][None] = [root]

    for vertex in graph.vertices:
        for bucket in table[vertex].values():
            for label in list(bucket):
                for head, driver, cost in graph.adjacency[vertex]:
                    if driver is None:
                        nxt = _Label(label.cost + penalty, label.waits + 1,
                                     label.legs, label.last, label.used,
                                     head, label, None)
                    else:
                        if (label.last is not None and driver != label.last
                                and driver in label.used):
                            continue
                        legs = label.legs + (0 if driver == label.last else 1)
                        nxt = _Label(label.cost + cost, label.waits, legs,
                                     driver, label.used | {driver},
                                     head, label, driver)
                    _insert_label(table[head].setdefault(nxt.last, []), nxt)

    candidates: list[_Label] = []
    for dest in graph.dests:
        for bucket in table[dest].values():
            candidates.extend(lbl for lbl in bucket if lbl.legs > 0)
    if not candidates:
        return None
    best_key = min(
        (c.cost, c.waits, c.legs, c.vertex[1]) for c in candidates
    )
    finalists = [
        c for c in candidates if (c.cost, c.waits, c.legs, c.vertex[1]) == best_key
    ]
    itineraries = [_trace(c, graph.ten.dt) for c in finalists]
    return min(itineraries, key=lambda it: it.driver_sequence())


def brute_force_itinerary(
    ten: TimeExpandedNetwork,
    rider: RiderRequest,
    penalty: float,
    budget: int = 200_000,
) -> Optional[Itinerary]:
    """Exhaustive oracle: enumerate every labelled path obeying the
    no-re-boarding rule and return the exact optimum (same tie-breaks as
    ``solve_itinerary``). Raises EnumerationBudgetError past ``budget`` arc
    expansions."""
    start = ten.start_vertex
    if start is None:
        return None
    dests = set(ten.dest_vertices())

    forward: dict[Vertex, list[tuple[Vertex, Optional[int], float]]] = {}
    for tail, head, driver, cost in _all_arcs(ten):
        forward.setdefault(tail, []).append((head, driver, cost))

    best: Optional[tuple] = None
    best_itin: Optional[Itinerary] = None
    expansions = 0

    def key_of(path, cost, waits, legs, vertex) -> tuple:
        drivers = tuple(d for _, _, d in path if d is not None)
        collapsed = tuple(d for i, d in enumerate(drivers)
                          if i == 0 or d != drivers[i - 1])
        return (cost, waits, legs, vertex[1], collapsed)

    def build(path, cost, waits) -> Itinerary:
        legs: list[ItineraryLeg] = []
        current = None
        board = alight = None
        for tail, head, driver in path:
            if driver is None:
                continue
            if driver != current:
                if current is not None:
                    legs.append(ItineraryLeg(current, board[0], board[1],
                                             alight[0], alight[1]))
                current, board = driver, tail
            alight = head
        if current is not None:
            legs.append(ItineraryLeg(current, board[0], board[1],
                                     alight[0], alight[1]))
        return Itinerary(tuple(legs), cost, waits, ten.dt)

    stack: list[tuple[Vertex, Optional[int], frozenset, float, int, int, tuple]] = [
        (start, None, frozenset(), 0.0, 0, 0, ())
    ]
    while stack:
        vertex, last, used, cost, waits, legs, path = stack.pop()
        if vertex in dests and legs > 0:
            key = key_of(path, cost, waits, legs, vertex)
            if best is None or key < best:
                best = key
                best_itin = build(path, cost, waits)
        for head, driver, arc_cost in forward.get(vertex, ()):
            expansions += 1
            if expansions > budget:
                raise EnumerationBudgetError(
                    f"brute force exceeded {budget} expansions"
                )
            if driver is None:
                stack.append((head, last, used, cost + penalty, waits + 1,
                              legs, path + ((vertex, head, None),)))
            else:
                if last is not None and driver != last and driver in used:
                    continue
                nlegs = legs + (0 if driver == last else 1)
                stack.append((head, driver, used | {driver}, cost + arc_cost,
                              waits, nlegs, path + ((vertex, head, driver),)))
    return best_itin


def match_rider(sim, rider: RiderRequest) -> MatchResult:
    """Run the full pipeline against a live simulation and commit the result.

    The commit may fail when a seat filled between snapshot and commit; the
    pipeline is retried once against refreshed offers before giving up.
    Each attempt appends one diagnostic row to ``sim.match_trace``.
    """
    result = None
    for _ in range(2):
        offers = sim.collect_offers(rider)
        ten = build_time_expanded(
            rider, offers, sim.network, sim.matching_travel_time(), sim.dt,
            time_weight=sim.time_weight,
        )
        graph = preprocess(ten)
        itinerary = (solve_itinerary(graph, rider, sim.penalty)
                     if graph.feasible else None)
        committed = (itinerary is not None
                     and sim.commit_itinerary(rider, itinerary))
        sim.match_trace.append({
            "rider_id": rider.id,
            "request_time": rider.request_time,
            "offers": len(offers),
            "vertices": len(ten.vertices()),
            "travel_arcs": len(ten.travel_arcs),
            "pruned_vertices": len(graph.removed),
            "feasible": graph.feasible,
            "dp_cost": itinerary.total_cost if itinerary else None,
            "matched": committed,
        })
        if itinerary is None:
            return MatchResult(rider.id, False, reason="infeasible")
        if committed:
            return MatchResult(rider.id, True, itinerary)
        result = MatchResult(rider.id, False, reason="capacity")
    return result
