"""Temporary holding of long-distance CAVs at parking facilities.

When the network-average density reaches the critical value, CAVs queued on a
street with a facility whose remaining travel distance is long enough are moved
off-street, taken from the back of the queue (the end nearest the mid-street
facility). They re-enter the back of the same movement queue once their held
time reaches the configured duration. Only vehicles already queued before the
current step can be taken; the facility capacity is never exceeded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .network import Movement, Network


@dataclass(frozen=True)
class HoldingParams:
    critical_density: float = 20.0        # veh/lane-km, activation threshold
    min_remaining_links: int = 8          # eligibility threshold on remaining distance
    hold_duration_s: float = 360.0        # time a vehicle stays held
    max_holds: Optional[int] = 1          # None = unlimited re-holding
    penetration_pct: float = 100.0        # share of vehicles that are CAVs
    maneuver_penalty_s: float = 20.0      # delay charged per hold for exit/re-entry

    def __post_init__(self):
        if self.critical_density <= 0:
            raise ValueError("critical density must be > 0")
        if self.min_remaining_links < 1:
            raise ValueError("remaining-distance threshold must be >= 1")
        if self.hold_duration_s <= 0:
            raise ValueError("hold duration must be > 0")
        if self.max_holds is not None and self.max_holds < 1:
            raise ValueError("max_holds must be >= 1 or None")
        if not 0 <= self.penetration_pct <= 100:
            raise ValueError("penetration must be in [0, 100] percent")
        if self.maneuver_penalty_s < 0:
            raise ValueError("maneuver penalty must be >= 0")


def assign_class(penetration_pct: float, rng: np.random.Generator) -> bool:
    """Bernoulli CAV draw for a new vehicle. True means CAV."""
    return bool(rng.random() < penetration_pct / 100.0)


@dataclass
class HoldRecord:
    vehicle_id: int
    movement: Movement
    facility_id: int
    start_step: int
    release_step: Optional[int] = None


class FacilityState:
    """Runtime occupancy of one parking facility."""

    def __init__(self, facility_id: int, capacity: Optional[int], movements: list[Movement]):
        self.id = facility_id
        self.capacity = capacity
        self.movements = movements          # movements this facility can hold from
        self.active: list[tuple] = []       # (vehicle, record), in hold order
        self.peak_occupancy = 0

    @property
    def occupancy(self) -> int:
        return len(self.active)

    def admit(self, vehicle, record: HoldRecord):
        if self.capacity is not None and self.occupancy >= self.capacity:
            raise RuntimeError(f"facility {self.id} over capacity")
        self.active.append((vehicle, record))
        self.peak_occupancy = max(self.peak_occupancy, self.occupancy)


def release_due(facility: FacilityState, t: int, dt_s: float,
                hold_duration_s: float) -> list[tuple]:
    """Held vehicles whose cumulative held time has reached the duration.

    Held time grows by dt_s per step, so a vehicle held at step s is due at the
    first step t with (t - s) * dt_s >= hold_duration_s. Due entries form a
    prefix of the hold-ordered list and are removed from the facility.
    """
    due = []
    while facility.active:
        vehicle, record = facility.active[0]
        if (t - record.start_step) * dt_s >= hold_duration_s:
            due.append(facility.active.pop(0))
        else:
            break
    return due


def evolve_hold_state(held: int, present_cav: int, n_hold: int, n_enter: int,
                      net_cav_inflow: int) -> tuple[int, int]:
    """Count update for one movement: returns (held', present_cav').

    held' = held - n_enter + n_hold and present' = present + inflow + n_enter
    - n_hold; the held+present CAV total changes only by the net inflow.
    """
    held2 = held - n_enter + n_hold
    present2 = present_cav + net_cav_inflow + n_enter - n_hold
    if held2 < 0 or present2 < 0:
        raise RuntimeError(
            f"negative CAV count after hold update: held={held2}, present={present2}"
        )
    return held2, present2


class HoldingPolicy:
    """Applies releases and capacity-bounded holds once per control interval."""

    def __init__(self, net: Network, params: HoldingParams):
        self.params = params
        self.facilities: dict[int, FacilityState] = {}
        self.facility_of_movement: dict[Movement, int] = {}
        for cen in net.parking_centroids():
            movements = []
            for link in cen.directed_links():
                movements.extend(net.movements_from[link])
            movements.sort()
            fac = FacilityState(cen.id, cen.parking.capacity, movements)
            self.facilities[cen.id] = fac
            for mv in movements:
                self.facility_of_movement[mv] = cen.id
        self.ledger: list[HoldRecord] = []

    def eligible(self, vehicle, t: int, movement: Movement) -> bool:
        p = self.params
        return (
            vehicle.cav
            and vehicle.remaining_links >= p.min_remaining_links
            and (p.max_holds is None or vehicle.holds_used < p.max_holds)
            and vehicle.join_step < t
            and vehicle.hold_block != movement
        )

    def apply(self, sim, t: int, density: float) -> tuple[int, int]:
        """Run one holding interval on the simulation state.

        Releases come first; the hold supply uses the pre-release occupancy, so
        spots freed this step only become available next step. Returns
        (n_released, n_held) totals for the step.
        """
        p = self.params
        occupancy_before = {fid: fac.occupancy for fid, fac in self.facilities.items()}

        released = 0
        for fid in sorted(self.facilities):
            fac = self.facilities[fid]
            for vehicle, record in release_due(fac, t, sim.clock.dt_s, p.hold_duration_s):
                record.release_step = t
                sim.reenter_from_hold(vehicle, record.movement, t)
                released += 1

        held = 0
        if density >= p.critical_density:
            for fid in sorted(self.facilities):
                fac = self.facilities[fid]
                if fac.capacity is None:
                    remaining = None
                else:
                    remaining = fac.capacity - occupancy_before[fid]
                if remaining is not None and remaining <= 0:
                    continue
                for mv in fac.movements:
                    if remaining is not None and remaining <= 0:
                        break
                    taken = sim.take_for_holding(
                        mv, t,
                        lambda v, mv=mv: self.eligible(v, t, mv),
                        limit=remaining,
                    )
                    for vehicle in taken:
                        record = HoldRecord(vehicle.id, mv, fid, t)
                        fac.admit(vehicle, record)
                        self.ledger.append(record)
                        vehicle.holds_used += 1
                        held += 1
                        if remaining is not None:
                            remaining -= 1
        return released, held

    def held_total(self) -> int:
        return sum(f.occupancy for f in self.facilities.values())
