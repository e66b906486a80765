"""Generalized link costs and Dijkstra routing for regular drivers.

A driver replanning at a node sees a frozen snapshot of link costs
(toll + congested travel time, each weighted); the route is the cheapest
path under that snapshot with a deterministic tie-break.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Optional

from .network import LaneClass, Link, Network, volume_delay


@dataclass(frozen=True)
class CostWeights:
    """Weights of the toll and travel-time terms of the link cost."""

    toll: float = 1.0
    time: float = 1.0

    def __post_init__(self) -> None:
        if self.toll < 0 or self.time < 0:
            raise ValueError("cost weights must be non-negative")
        if self.toll == 0 and self.time == 0:
            raise ValueError("at least one cost weight must be positive")


@dataclass(frozen=True)
class RoutePath:
    links: tuple[int, ...]
    total_cost: float
    total_time: float


def link_cost(
    link: Link,
    time: float,
    flow: float,
    weights: CostWeights,
    alpha: float = 0.15,
    beta: float = 4.0,
) -> float:
    """Generalized cost of entering ``link`` at ``time`` under ``flow`` veh/h.

    Tolls and congested time are combined linearly; travel time uses the
    general lane class (regular drivers are single occupants).
    """
    if flow < 0:
        raise ValueError("negative flow")
    travel = volume_delay(link, LaneClass.GENERAL, flow, alpha=alpha, beta=beta)
    return weights.toll * link.toll_at(time) + weights.time * travel


def dijkstra_route(
    network: Network,
    cost_fn: Callable[[Link], float],
    origin: int,
    dest: int,
    time_fn: Callable[[Link], float] | None = None,
) -> Optional[RoutePath]:
    """Cheapest origin->dest path under a frozen cost snapshot.

    ``cost_fn`` maps a link to its snapshot cost; ``time_fn`` (defaulting to
    free-flow times) only annotates the returned path's duration. Ties are
    broken toward the lexicographically smallest link-id sequence. Returns
    None when the destination is unreachable.
    """
    known = {n.id for n in network.nodes}
    if origin not in known or dest not in known:
        raise ValueError(f"origin {origin} or destination {dest} not in network")
    if time_fn is None:
        time_fn = lambda link: link.free_flow_time
    if origin == dest:
        return RoutePath(links=(), total_cost=0.0, total_time=0.0)

    best: dict[int, tuple[float, tuple[int, ...]]] = {origin: (0.0, ())}
    heap: list[tuple[float, tuple[int, ...], int]] = [(0.0, (), origin)]
    adjacency = network.adjacency
    while heap:
        cost, seq, node = heapq.heappop(heap)
        entry = best.get(node)
        if entry is not None and (cost, seq) > entry:
            continue
        if node == dest:
            total_time = sum(time_fn(network.link(lid)) for lid in seq)
            return RoutePath(links=seq, total_cost=cost, total_time=total_time)
        for link_id in adjacency.get(node, ()):
            link = network.link(link_id)
            step = cost_fn(link)
            if step < 0:
                raise ValueError(f"negative cost on link {link_id}")
            cand = (cost + step, seq + (link_id,))
            existing = best.get(link.to_node)
            if existing is None or cand < existing:
                best[link.to_node] = cand
                heapq.heappush(heap, (cand[0], cand[1], link.to_node))
    return None
