"""Decentralized signal controllers.

All controllers are pure functions of the current queue state: given the same
network, per-movement present counts, and step index, they return the same
decision. Phase selection follows the maximum-pressure rule with ties broken
by the lowest phase index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .network import Link, Movement, Network, Node


@dataclass(frozen=True)
class Decision:
    """Active phase index per intersection plus movements denied any service."""

    phases: dict
    masked: frozenset = frozenset()


@dataclass(frozen=True)
class PerimeterParams:
    """Settings shared by the perimeter-based controllers."""

    interior_critical_density: float     # veh/lane-km threshold on the region density
    gain: float = 1.4                    # penalty gain, used by the penalized variant
    mode: str = "bangbang"

    def __post_init__(self):
        if self.interior_critical_density <= 0:
            raise ValueError("interior critical density must be > 0")
        if self.gain <= 0:
            raise ValueError("penalty gain must be > 0")


def qmp_weight(upstream_count: float, downstream: list[tuple[float, float]]) -> float:
    """Queue-differential weight: upstream count minus ratio-weighted downstream counts."""
    return upstream_count - sum(count * ratio for count, ratio in downstream)


def movement_weights(net: Network, states, skip: frozenset = frozenset()
                     ) -> dict[Movement, float]:
    """Weights for all movements from the present queue states.

    Turning ratios come from the queued vehicles' own routes: the ratio toward
    a downstream movement is the share of this queue that will join it, so
    vehicles exiting on the outgoing link contribute no downstream term.
    Movements in `skip` get no weight and do not appear in the result.
    """
    weights = {}
    for mv in net.movements:
        if mv in skip:
            continue
        st = states[mv]
        count = st.present
        if count == 0:
            weights[mv] = 0.0
            continue
        downstream = [
            (states[nxt].present, share / count)
            for nxt, share in st.next_counts.items()
            if nxt is not None
        ]
        weights[mv] = qmp_weight(count, downstream)
    return weights


def phase_pressure(phase: tuple[Movement, ...], weights: dict[Movement, float],
                   saturation: dict[Movement, float],
                   masked: frozenset = frozenset()) -> float:
    """Pressure of a phase: saturation-weighted sum of its movements' weights."""
    return sum(
        weights[mv] * saturation[mv] for mv in phase if mv not in masked
    )


def select_phase(pressures: list[float]) -> int:
    """Index of the maximum pressure; first index wins on ties."""
    if not pressures:
        raise ValueError("intersection with no admissible phase")
    best = 0
    for i in range(1, len(pressures)):
        if pressures[i] > pressures[best]:
            best = i
    return best


def congestion_penalty(excess_density: float, queue_count: float, gain: float) -> float:
    """Sigmoid-shaped inbound penalty, increasing in both arguments.

    Zero when the region is at or under the critical density or the local
    queue is empty.
    """
    if excess_density <= 0:
        return 0.0
    sig = 1.0 / (1.0 + math.exp(-queue_count / 400.0)) - 0.5
    return gain * excess_density * excess_density * sig * 1e3


def penalized_weight(base_weight: float, excess_density: float,
                     queue_count: float, gain: float) -> float:
    """Inbound-movement weight reduced by the congestion penalty."""
    return base_weight - congestion_penalty(excess_density, queue_count, gain)


def _decide_from_weights(net: Network, weights: dict[Movement, float],
                         masked: frozenset) -> Decision:
    phases = {}
    for node in net.nodes:
        pressures = [
            phase_pressure(phase, weights, net.saturation, masked)
            for phase in net.phases[node]
        ]
        phases[node] = select_phase(pressures)
    return Decision(phases=phases, masked=masked)


class MaxPressureController:
    """Per-intersection max-pressure control over present vehicles."""

    name = "qmp"

    def decide(self, net: Network, states, t: int,
               interior_density: Optional[float] = None) -> Decision:
        weights = movement_weights(net, states)
        return _decide_from_weights(net, weights, frozenset())


class BangBangController:
    """Max pressure with hard gating of inbound movements when the region is congested.

    Above the interior critical density, every inbound movement at the
    perimeter gets zero service and is ignored by the pressure computation;
    otherwise decisions equal plain max pressure.
    """

    name = "bangbang"

    def __init__(self, net: Network, params: PerimeterParams):
        if net.perimeter is None:
            raise ValueError("bang-bang control requires a network with a perimeter")
        self.params = params

    def decide(self, net: Network, states, t: int,
               interior_density: Optional[float] = None) -> Decision:
        gate = (
            interior_density is not None
            and interior_density > self.params.interior_critical_density
        )
        if not gate:
            weights = movement_weights(net, states)
            return _decide_from_weights(net, weights, frozenset())
        masked = net.perimeter.inbound_movements
        weights = movement_weights(net, states, skip=masked)
        return _decide_from_weights(net, weights, masked)


class PenalizedPressureController:
    """Max pressure with a regional congestion penalty on inbound weights."""

    name = "nmp"

    def __init__(self, net: Network, params: PerimeterParams):
        if net.perimeter is None:
            raise ValueError("penalized pressure control requires a network with a perimeter")
        self.params = params

    def decide(self, net: Network, states, t: int,
               interior_density: Optional[float] = None) -> Decision:
        weights = movement_weights(net, states)
        if interior_density is not None:
            excess = interior_density - self.params.interior_critical_density
            if excess > 0:
                for mv in net.perimeter.inbound_movements:
                    weights[mv] = penalized_weight(
                        weights[mv], excess, states[mv].present, self.params.gain
                    )
        return _decide_from_weights(net, weights, frozenset())


class ScriptedController:
    """Fixed signal plan for reproducible experiments and state-trace checks.

    plan may be a callable t -> {node: phase_index} or a sequence of such
    mappings indexed by step (the last entry repeats).
    """

    name = "scripted"

    def __init__(self, plan):
        self.plan = plan

    def decide(self, net: Network, states, t: int,
               interior_density: Optional[float] = None) -> Decision:
        if callable(self.plan):
            table = self.plan(t)
        else:
            table = self.plan[min(t, len(self.plan) - 1)]
        phases = {}
        for node in net.nodes:
            idx = table.get(node, 0)
            if not 0 <= idx < len(net.phases[node]):
                raise ValueError(f"scripted phase {idx} out of range at {node}")
            phases[node] = idx
        return Decision(phases=phases)


def make_controller(net: Network, kind: str,
                    perimeter_params: Optional[PerimeterParams] = None):
    if kind == "qmp":
        return MaxPressureController()
    if kind == "bangbang":
        if perimeter_params is None:
            raise ValueError("bangbang controller needs perimeter parameters")
        return BangBangController(net, perimeter_params)
    if kind == "nmp":
        if perimeter_params is None:
            raise ValueError("nmp controller needs perimeter parameters")
        return PenalizedPressureController(net, perimeter_params)
    raise ValueError(f"unknown controller {kind!r}")
