"""Point-queue network dynamics and the per-step simulation loop.

Each step, in order: in-transit vehicles reach their next queue or exit, new
demand is injected, the network density is measured, holding releases and
holds are applied, the controller picks phases, and queues discharge under the
active phases. Discharged vehicles travel their next link in free flow before
joining the downstream queue.

A run is single threaded and fully deterministic given (inputs, seed). All
randomness flows through three named substreams (demand, routing, class), so
changing the consumers of one stream never disturbs the draws of another.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .demand import DemandSpec, generate_demand
from .holding import HoldingPolicy, assign_class
from .network import Link, Movement, Network, Node
from .routing import route_vehicle


class SimulationFault(RuntimeError):
    """Internal consistency violation in the simulation state."""


@dataclass(frozen=True)
class SimClock:
    dt_s: float = 10.0
    horizon_s: float = 7200.0

    def __post_init__(self):
        if self.dt_s <= 0:
            raise ValueError("step length must be > 0")
        steps = self.horizon_s / self.dt_s
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("horizon must be a multiple of the step length")

    @property
    def steps(self) -> int:
        return int(round(self.horizon_s / self.dt_s))


class Vehicle:
    """A single trip. leg = -1 on the origin street, k on route[k], len(route) when exited."""

    __slots__ = ("id", "cav", "origin_link", "route", "depart_step",
                 "free_flow_steps", "origin_centroid", "dest_centroid",
                 "leg", "holds_used", "join_step", "arrive_step", "hold_block")

    def __init__(self, id, cav, origin_link, route, depart_step, free_flow_steps,
                 origin_centroid=None, dest_centroid=None):
        self.id = id
        self.cav = cav
        self.origin_link = origin_link
        self.route = route
        self.depart_step = depart_step
        self.free_flow_steps = free_flow_steps
        self.origin_centroid = origin_centroid
        self.dest_centroid = dest_centroid
        self.leg = -1
        self.holds_used = 0
        self.join_step = -(10 ** 9)
        self.arrive_step: Optional[int] = None
        # movement a release re-entered; no re-hold there until the vehicle departs
        self.hold_block: Optional[Movement] = None

    @property
    def remaining_links(self) -> int:
        return len(self.route) - max(self.leg, 0)

    @property
    def cls(self) -> str:
        return "CAV" if self.cav else "HDV"

    @property
    def finished(self) -> bool:
        return self.arrive_step is not None

    def __repr__(self):
        return f"Vehicle({self.id}, {self.cls}, leg={self.leg}/{len(self.route)})"


class MovementState:
    """FIFO queue of present vehicles on one movement plus step bookkeeping.

    next_counts tracks where the queued vehicles will go after traversing the
    movement's outgoing link: keys are downstream movements, or None for
    vehicles that exit on that link. It feeds the turning-ratio estimates.
    """

    __slots__ = ("fifo", "n_cav", "n_hdv", "held", "service_credit",
                 "next_counts", "last_departures")

    def __init__(self):
        self.fifo: deque = deque()
        self.n_cav = 0
        self.n_hdv = 0
        self.held = 0
        self.service_credit = 0.0
        self.next_counts: dict = {}
        self.last_departures = (-1, 0, 0, 0)  # (step, y, y_cav, y_hdv)

    @property
    def present(self) -> int:
        return self.n_cav + self.n_hdv

    def check_counts(self):
        cav = sum(1 for v in self.fifo if v.cav)
        if cav != self.n_cav or len(self.fifo) - cav != self.n_hdv:
            raise SimulationFault("movement class counters diverged from the queue")
        if sum(self.next_counts.values()) != len(self.fifo):
            raise SimulationFault("movement next-turn counters diverged from the queue")


def next_bucket(vehicle: "Vehicle", movement: Movement):
    """Downstream movement the vehicle will queue for after this one, or None if it exits."""
    _, j, k = movement
    idx = vehicle.leg + 2
    if idx < len(vehicle.route):
        return (j, k, vehicle.route[idx][1])
    return None


def compute_departures(fifo, service: float) -> tuple[int, int, int]:
    """(y, y_cav, y_hdv) for one movement given the available service in vehicles."""
    y = min(int(service + 1e-9), len(fifo))
    y_cav = sum(1 for idx, v in enumerate(fifo) if idx < y and v.cav)
    return y, y_cav, y - y_cav


class Simulation:
    """One deterministic run over a fixed network."""

    def __init__(self, net: Network, controller, clock: Optional[SimClock] = None,
                 demand: Optional[DemandSpec] = None,
                 holding: Optional[HoldingPolicy] = None,
                 cav_share_pct: float = 100.0,
                 seed: int = 0,
                 lost_time_s: float = 4.0,
                 bin_s: float = 100.0,
                 record_decisions: bool = False,
                 event_sink: Optional[Callable] = None):
        from .metrics import MetricsCollector  # local import to avoid a cycle

        self.net = net
        self.controller = controller
        self.clock = clock or SimClock()
        self.demand = demand
        self.holding = holding
        self.cav_share_pct = cav_share_pct
        self.lost_time_s = lost_time_s
        self.event_sink = event_sink
        self.record_decisions = record_decisions
        self.decision_log: list = []

        ss = np.random.SeedSequence(seed)
        self._rng_demand, self._rng_routing, self._rng_class = (
            np.random.default_rng(child) for child in ss.spawn(3)
        )

        self.t = 0
        self.mstate: dict[Movement, MovementState] = {
            mv: MovementState() for mv in net.movements
        }
        self.transit: dict[int, list] = {}
        self.prev_phase: dict[Node, Optional[int]] = {n: None for n in net.nodes}
        self.vehicles: list[Vehicle] = []
        self._centroid_by_id = {c.id: c for c in net.centroids}

        # aggregate counters
        self.injected = 0
        self.exited = 0
        self.present = 0
        self.on_street_transit = 0
        self.off_street_transit = 0
        self.exits_this_step = 0

        # interior-region counters, kept only when a perimeter is defined
        per = net.perimeter
        self._interior_link = (
            {l: (l in per.interior_links) for l in net.links} if per else None
        )
        self.present_interior = 0
        self.transit_interior = 0
        if per:
            lk = net.link_length_m / 1000.0 * net.lanes
            self.interior_lane_km = len(per.interior_links) * lk
        else:
            self.interior_lane_km = 0.0

        # free-flow timing in whole steps
        self._transit_steps = self._ceil_steps(net.link_free_flow_s((net.links[0])))
        self._half_steps = self._ceil_steps(net.link_free_flow_s(net.links[0]) / 2.0)

        self.metrics = MetricsCollector(self.clock.dt_s, bin_s)

    # -- helpers ---------------------------------------------------------------

    def _ceil_steps(self, seconds: float) -> int:
        return max(1, math.ceil(seconds / self.clock.dt_s - 1e-9))

    def _emit(self, *event):
        if self.event_sink is not None:
            self.event_sink(event)

    def free_flow_steps(self, route, include_entry_leg: bool) -> int:
        """Discrete free-flow duration of a route in steps.

        Full traversal for every link but the last, half traversal to exit at
        the destination midpoint, plus the half-link entry leg for vehicles
        injected at a centroid.
        """
        steps = (len(route) - 1) * self._transit_steps + self._half_steps
        if include_entry_leg:
            steps += self._half_steps
        return steps

    def counts(self) -> dict:
        return {
            "injected": self.injected,
            "present": self.present,
            "in_transit": self.on_street_transit + self.off_street_transit,
            "held": self.holding.held_total() if self.holding else 0,
            "exited": self.exited,
        }

    def network_density(self) -> float:
        """Average on-street density in veh/lane-km. Held and entry-leg vehicles are off street."""
        return (self.present + self.on_street_transit) / self.net.lane_km_total

    def interior_density(self) -> Optional[float]:
        if self.net.perimeter is None:
            return None
        if self.interior_lane_km == 0:
            return 0.0
        return (self.present_interior + self.transit_interior) / self.interior_lane_km

    def present_counts(self) -> dict[Movement, int]:
        return {mv: st.n_cav + st.n_hdv for mv, st in self.mstate.items()}

    # -- vehicle placement -----------------------------------------------------

    def _join_queue(self, vehicle: Vehicle, movement: Movement, t: int):
        st = self.mstate[movement]
        st.fifo.append(vehicle)
        if vehicle.cav:
            st.n_cav += 1
        else:
            st.n_hdv += 1
        bucket = next_bucket(vehicle, movement)
        st.next_counts[bucket] = st.next_counts.get(bucket, 0) + 1
        vehicle.join_step = t
        self.present += 1
        if self._interior_link is not None and self._interior_link[(movement[0], movement[1])]:
            self.present_interior += 1

    def _drop_bucket(self, st: MovementState, vehicle: Vehicle, movement: Movement):
        bucket = next_bucket(vehicle, movement)
        left = st.next_counts[bucket] - 1
        if left:
            st.next_counts[bucket] = left
        else:
            del st.next_counts[bucket]

    def _leave_queue_front(self, movement: Movement) -> Vehicle:
        st = self.mstate[movement]
        vehicle = st.fifo.popleft()
        if vehicle.cav:
            st.n_cav -= 1
        else:
            st.n_hdv -= 1
        self._drop_bucket(st, vehicle, movement)
        self.present -= 1
        if self._interior_link is not None and self._interior_link[(movement[0], movement[1])]:
            self.present_interior -= 1
        return vehicle

    def _schedule_transit(self, vehicle: Vehicle, link: Link, now: int, ready_step: int,
                          next_movement: Optional[Movement], on_street: bool):
        self.transit.setdefault(ready_step, []).append(
            (vehicle, link, next_movement, on_street)
        )
        if on_street:
            self.on_street_transit += 1
            if self._interior_link is not None and self._interior_link[link]:
                self.transit_interior += 1
        else:
            self.off_street_transit += 1
        self._emit("enter_link", now, vehicle.id, link)

    def seed_vehicle(self, origin_link: Link, route, cav: bool = True,
                     vehicle_id: Optional[int] = None) -> Vehicle:
        """Place a scripted vehicle directly in its first queue before the run starts."""
        if self.t != 0:
            raise ValueError("scripted vehicles must be seeded before stepping")
        route = tuple(route)
        if not route or route[0][0] != origin_link[1]:
            raise ValueError("route must continue from the origin link")
        vid = vehicle_id if vehicle_id is not None else len(self.vehicles)
        ff = self.free_flow_steps(route, include_entry_leg=False)
        vehicle = Vehicle(vid, cav, origin_link, route, 0, ff)
        self.vehicles.append(vehicle)
        self.injected += 1
        first_mv = (origin_link[0], origin_link[1], route[0][1])
        if first_mv not in self.mstate:
            raise ValueError(f"no movement {first_mv} in the network")
        self._join_queue(vehicle, first_mv, -1)
        return vehicle

    def reenter_from_hold(self, vehicle: Vehicle, movement: Movement, t: int):
        """A released vehicle rejoins the back of the queue it was held from."""
        st = self.mstate[movement]
        st.held -= 1
        if st.held < 0:
            raise SimulationFault("negative held count on movement")
        vehicle.hold_block = movement
        self._join_queue(vehicle, movement, t)
        self._emit("release", t, vehicle.id, movement)

    def take_for_holding(self, movement: Movement, t: int, eligible,
                         limit: Optional[int]) -> list[Vehicle]:
        """Remove up to `limit` eligible vehicles from a queue for holding.

        Selection starts at the back of the queue: the facility sits at the
        street midpoint, so the queue tail is nearest to it, and vehicles
        there have sunk the least waiting time.
        """
        st = self.mstate[movement]
        if not st.fifo:
            return []
        taken: list[Vehicle] = []
        kept: list[Vehicle] = []
        for vehicle in reversed(st.fifo):
            if (limit is None or len(taken) < limit) and eligible(vehicle):
                taken.append(vehicle)
            else:
                kept.append(vehicle)
        if not taken:
            return []
        kept.reverse()
        st.fifo = deque(kept)
        interior = (
            self._interior_link is not None
            and self._interior_link[(movement[0], movement[1])]
        )
        for vehicle in taken:
            if vehicle.cav:
                st.n_cav -= 1
            else:
                raise SimulationFault("attempted to hold a human-driven vehicle")
            self._drop_bucket(st, vehicle, movement)
            self.present -= 1
            if interior:
                self.present_interior -= 1
            st.held += 1
            self._emit("hold", t, vehicle.id, movement)
        return taken

    # -- step phases -----------------------------------------------------------

    def _process_arrivals(self, t: int):
        for vehicle, link, next_movement, on_street in self.transit.pop(t, ()):
            if on_street:
                self.on_street_transit -= 1
                if self._interior_link is not None and self._interior_link[link]:
                    self.transit_interior -= 1
            else:
                self.off_street_transit -= 1
            if next_movement is None:
                vehicle.leg = len(vehicle.route)
                vehicle.arrive_step = t
                self.exited += 1
                self.exits_this_step += 1
                self._emit("arrive", t, vehicle.id, link)
            else:
                self._join_queue(vehicle, next_movement, t)

    def _inject_demand(self, t: int):
        if self.demand is None:
            return
        for origin_id, dest_id in generate_demand(self.demand, t, self.clock.dt_s,
                                                  self._rng_demand):
            origin = self._centroid_by_id[origin_id]
            dest = self._centroid_by_id[dest_id]
            origin_link, route = route_vehicle(self.net, origin, dest, self._rng_routing)
            cav = assign_class(self.cav_share_pct, self._rng_class)
            ff = self.free_flow_steps(route, include_entry_leg=True)
            vehicle = Vehicle(len(self.vehicles), cav, origin_link, route, t, ff,
                              origin_centroid=origin_id, dest_centroid=dest_id)
            self.vehicles.append(vehicle)
            self.injected += 1
            self._emit("depart", t, vehicle.id, origin_id, dest_id, vehicle.cls)
            first_mv = (origin_link[0], origin_link[1], route[0][1])
            # entry leg: half the street at free flow, off the network
            self._schedule_transit(vehicle, origin_link, t, t + self._half_steps,
                                   first_mv, on_street=False)

    def _discharge(self, t: int, decision):
        dt = self.clock.dt_s
        masked = decision.masked
        for node in self.net.nodes:
            idx = decision.phases[node]
            phases = self.net.phases[node]
            if not phases:
                continue
            switched = self.prev_phase[node] is not None and self.prev_phase[node] != idx
            self.prev_phase[node] = idx
            effective = dt - self.lost_time_s if switched else dt
            for mv in phases[idx]:
                if mv in masked:
                    continue
                st = self.mstate[mv]
                avail = self.net.saturation[mv] * effective / 3600.0 + st.service_credit
                y, y_cav, y_hdv = compute_departures(st.fifo, avail)
                if y < len(st.fifo):
                    st.service_credit = avail - y
                else:
                    st.service_credit = 0.0
                st.last_departures = (t, y, y_cav, y_hdv)
                for _ in range(y):
                    self._advance(self._leave_queue_front(mv), mv, t)

    def _advance(self, vehicle: Vehicle, movement: Movement, t: int):
        """Move a departing vehicle onto its next link."""
        i, j, k = movement
        next_link = (j, k)
        next_leg = vehicle.leg + 1
        if next_leg >= len(vehicle.route) or vehicle.route[next_leg] != next_link:
            raise SimulationFault(
                f"vehicle {vehicle.id} departed {movement} off its route"
            )
        vehicle.leg = next_leg
        vehicle.hold_block = None
        if next_leg == len(vehicle.route) - 1:
            # destination street: exit at its midpoint
            self._schedule_transit(vehicle, next_link, t, t + self._half_steps,
                                   None, on_street=True)
        else:
            following = vehicle.route[next_leg + 1]
            next_movement = (j, k, following[1])
            self._schedule_transit(vehicle, next_link, t, t + self._transit_steps,
                                   next_movement, on_street=True)

    def step(self):
        t = self.t
        self.exits_this_step = 0
        self._process_arrivals(t)
        self._inject_demand(t)
        density = self.network_density()
        interior = self.interior_density()
        if self.holding is not None:
            self.holding.apply(self, t, density)
        decision = self.controller.decide(self.net, self.mstate, t, interior)
        if self.record_decisions:
            self.decision_log.append(
                (tuple(sorted(decision.phases.items())), tuple(sorted(decision.masked)))
            )
        self._discharge(t, decision)
        self.metrics.record(
            t, density, interior,
            exits=self.exits_this_step,
            in_network=self.injected - self.exited,
            held=self.holding.held_total() if self.holding else 0,
        )
        self.t += 1

    def run(self, steps: Optional[int] = None):
        for _ in range(steps if steps is not None else self.clock.steps):
            self.step()
        return self
