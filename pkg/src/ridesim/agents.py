"""Agent types shared by the demand generator, the simulator and the matcher."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Role(str, Enum):
    REGULAR_DRIVER = "regular_driver"
    RIDESHARE_DRIVER = "rideshare_driver"
    RIDER = "rider"


@dataclass(frozen=True)
class TimeWindow:
    """Schedule flexibility of one trip, all bounds in hours.

    ``earliest_departure <= latest_departure`` and
    ``earliest_arrival <= latest_arrival`` always; a window constructed by
    the demand generator additionally admits the free-flow solo trip.
    """

    earliest_departure: float
    latest_departure: float
    earliest_arrival: float
    latest_arrival: float

    def __post_init__(self) -> None:
        if self.earliest_departure > self.latest_departure:
            raise ValueError("earliest_departure exceeds latest_departure")
        if self.earliest_arrival > self.latest_arrival:
            raise ValueError("earliest_arrival exceeds latest_arrival")
        if self.earliest_departure > self.latest_arrival:
            raise ValueError("earliest_departure exceeds latest_arrival")


@dataclass
class VehicleAgent:
    """One traveller: a regular driver, a ridesharing driver, or a rider."""

    id: int
    role: Role
    origin: int
    destination: int
    request_time: float
    window: TimeWindow
    seats: int = 0
    occupancy: int = 1
    # planned (link id, entry time in hours); maintained for drivers only
    committed_route: list[tuple[int, float]] = field(default_factory=list)
    matched: bool = False

    def __post_init__(self) -> None:
        if self.origin == self.destination:
            raise ValueError(f"agent {self.id}: origin equals destination")
        if self.seats < 0:
            raise ValueError(f"agent {self.id}: negative seat count")
        if self.occupancy < 1:
            raise ValueError(f"agent {self.id}: occupancy below 1")
        if self.role is Role.RIDESHARE_DRIVER and self.occupancy > 1 + self.seats:
            raise ValueError(f"agent {self.id}: occupancy exceeds 1 + seats")
