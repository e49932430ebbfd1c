"""Scenario documents: parsing, validation, defaults, and object builders.

A scenario is a JSON key/value tree. Every key is optional; an empty document
yields the default setup (10x10 grid, 200 m links with 3 lanes at 50 km/h,
1800 vphpl saturation, uniform 1.05 vph demand for the first hour of a two
hour horizon, max-pressure control, holding off, seeds 1..5). Durations accept
plain seconds or strings like "6min", "90s", "1.5h".
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import network as net_mod
from .control import PerimeterParams, make_controller
from .demand import build_demand
from .dynamics import SimClock, Simulation
from .holding import HoldingParams, HoldingPolicy
from .network import Centroid, Network, ParkingFacility, build_grid, define_perimeter


class ScenarioError(ValueError):
    """A scenario document failed validation."""


def parse_duration_s(value, key: str) -> float:
    """Seconds from a number or a '<number><s|min|h>' string."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        text = value.strip().lower()
        for suffix, mult in (("min", 60.0), ("h", 3600.0), ("s", 1.0)):
            if text.endswith(suffix):
                try:
                    return float(text[: -len(suffix)]) * mult
                except ValueError:
                    break
        else:
            try:
                return float(text)
            except ValueError:
                pass
    raise ScenarioError(f"{key}: expected a duration (seconds or '<n>s|min|h'), got {value!r}")


@dataclass(frozen=True)
class NetworkSpec:
    rows: int = 10
    cols: int = 10
    link_length_m: float = 200.0
    lanes: int = 3
    free_flow_kmh: float = 50.0
    sat_flow_vphpl: float = 1800.0


@dataclass(frozen=True)
class CentroidSpec:
    layout: str = "rings"                  # rings | random | explicit
    rings: tuple[int, ...] = (1, 3, 5, 7, 9)
    count: Optional[int] = None
    placement_seed: Optional[int] = None
    streets: Optional[tuple] = None


@dataclass(frozen=True)
class ParkingSpec:
    placement: str = "none"                # none | rings | random | all | explicit
    rings: tuple[int, ...] = (7,)
    count: Optional[int] = None
    placement_seed: Optional[int] = None
    capacity: Optional[int] = None         # None = unbounded
    streets: Optional[tuple] = None


@dataclass(frozen=True)
class DemandSpecConfig:
    pattern: str = "uniform"
    rate_per_od_vph: float = 1.05
    duration_s: float = 3600.0
    central_side: int = 3


@dataclass(frozen=True)
class ControllerSpec:
    type: str = "qmp"                      # qmp | bangbang | nmp
    perimeter_side: Optional[int] = None
    interior_critical_density: float = 40.0
    gain: float = 1.4


@dataclass(frozen=True)
class HoldingSpec:
    enabled: bool = False
    critical_density: float = 20.0
    min_remaining_links: int = 8
    hold_duration_s: float = 360.0
    max_holds: Optional[int] = 1           # None = unbounded
    penetration_pct: float = 100.0
    maneuver_penalty_s: float = 20.0


@dataclass(frozen=True)
class SimSpec:
    step_s: float = 10.0
    horizon_s: float = 7200.0
    lost_time_s: float = 4.0
    bin_s: float = 100.0


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    events: bool = False
    occupancy: bool = True


@dataclass(frozen=True)
class Scenario:
    network: NetworkSpec = NetworkSpec()
    centroids: CentroidSpec = CentroidSpec()
    parking: ParkingSpec = ParkingSpec()
    demand: DemandSpecConfig = DemandSpecConfig()
    controller: ControllerSpec = ControllerSpec()
    holding: HoldingSpec = HoldingSpec()
    sim: SimSpec = SimSpec()
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    output: OutputSpec = OutputSpec()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        for section in ("centroids", "parking"):
            d[section]["rings"] = list(d[section]["rings"])
            if d[section]["streets"] is not None:
                d[section]["streets"] = [
                    [list(a), list(b)] for (a, b) in d[section]["streets"]
                ]
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_DURATION_KEYS = {"duration_s", "hold_duration_s", "horizon_s", "step_s",
                  "lost_time_s", "bin_s", "maneuver_penalty_s"}


def _parse_section(cls, raw: dict, path: str):
    defaults = cls()
    allowed = {f for f in defaults.__dataclass_fields__}
    updates = {}
    for key, value in raw.items():
        if key not in allowed:
            raise ScenarioError(f"unknown key {path}.{key}")
        if key in _DURATION_KEYS:
            value = parse_duration_s(value, f"{path}.{key}")
        if key == "max_holds" and value in ("unbounded", None):
            value = None
        if key == "rings":
            value = tuple(int(v) for v in value)
        if key == "streets" and value is not None:
            value = tuple(
                net_mod.segment(tuple(a), tuple(b)) for a, b in value
            )
        updates[key] = value
    return replace(defaults, **updates)


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    sections = {
        "network": NetworkSpec, "centroids": CentroidSpec, "parking": ParkingSpec,
        "demand": DemandSpecConfig, "controller": ControllerSpec,
        "holding": HoldingSpec, "sim": SimSpec, "output": OutputSpec,
    }
    kwargs = {}
    for key, value in doc.items():
        if key == "seeds":
            if not isinstance(value, list) or not value:
                raise ScenarioError("seeds: expected a non-empty list of integers")
            kwargs["seeds"] = tuple(int(s) for s in value)
            continue
        if key not in sections:
            raise ScenarioError(f"unknown key {key}")
        if not isinstance(value, dict):
            raise ScenarioError(f"{key}: expected an object")
        kwargs[key] = _parse_section(sections[key], value, key)
    scenario = Scenario(**kwargs)
    validate_scenario(scenario)
    return scenario


def loads_scenario(text: str) -> Scenario:
    text = text.strip()
    doc = json.loads(text) if text else {}
    return scenario_from_dict(doc)


def load_scenario(path) -> Scenario:
    with open(path) as f:
        return loads_scenario(f.read())


def validate_scenario(s: Scenario):
    n = s.network
    if n.rows < 2 or n.cols < 2:
        raise ScenarioError("network.rows and network.cols must be >= 2")
    if n.link_length_m <= 0 or n.lanes < 1 or n.free_flow_kmh <= 0 or n.sat_flow_vphpl <= 0:
        raise ScenarioError("network geometry values must be positive")

    if s.centroids.layout not in ("rings", "random", "explicit"):
        raise ScenarioError(f"centroids.layout: unknown layout {s.centroids.layout!r}")
    if s.centroids.layout == "random" and (
        s.centroids.count is None or s.centroids.placement_seed is None
    ):
        raise ScenarioError("centroids.layout=random needs count and placement_seed")
    if s.centroids.layout == "explicit" and not s.centroids.streets:
        raise ScenarioError("centroids.layout=explicit needs streets")

    if s.parking.placement not in ("none", "rings", "random", "all", "explicit"):
        raise ScenarioError(f"parking.placement: unknown placement {s.parking.placement!r}")
    if s.parking.placement == "random" and (
        s.parking.count is None or s.parking.placement_seed is None
    ):
        raise ScenarioError("parking.placement=random needs count and placement_seed")
    if s.parking.placement == "explicit" and not s.parking.streets:
        raise ScenarioError("parking.placement=explicit needs streets")
    if s.parking.capacity is not None and s.parking.capacity < 0:
        raise ScenarioError("parking.capacity must be >= 0 or null")

    if s.demand.pattern not in ("uniform", "concentrated"):
        raise ScenarioError(f"demand.pattern: unknown pattern {s.demand.pattern!r}")
    if s.demand.rate_per_od_vph < 0:
        raise ScenarioError("demand.rate_per_od_vph must be >= 0")

    if s.controller.type not in ("qmp", "bangbang", "nmp"):
        raise ScenarioError(f"controller.type: unknown controller {s.controller.type!r}")
    if s.controller.type in ("bangbang", "nmp") and s.controller.perimeter_side is None:
        raise ScenarioError(
            f"controller.type={s.controller.type} requires controller.perimeter_side"
        )
    if s.controller.interior_critical_density <= 0:
        raise ScenarioError("controller.interior_critical_density must be > 0")
    if s.controller.gain <= 0:
        raise ScenarioError("controller.gain must be > 0")

    h = s.holding
    if h.critical_density <= 0:
        raise ScenarioError("holding.critical_density must be > 0")
    if h.min_remaining_links < 1:
        raise ScenarioError("holding.min_remaining_links must be >= 1")
    if h.hold_duration_s <= 0:
        raise ScenarioError("holding.hold_duration_s must be > 0")
    if h.max_holds is not None and h.max_holds < 1:
        raise ScenarioError("holding.max_holds must be >= 1 or 'unbounded'")
    if not 0 <= h.penetration_pct <= 100:
        raise ScenarioError("holding.penetration_pct must be within [0, 100]")
    if h.enabled and s.parking.placement == "none":
        raise ScenarioError("holding.enabled requires a parking placement")

    if s.sim.step_s <= 0:
        raise ScenarioError("sim.step_s must be > 0")
    steps = s.sim.horizon_s / s.sim.step_s if s.sim.step_s else 0
    if s.sim.horizon_s <= 0 or abs(steps - round(steps)) > 1e-9:
        raise ScenarioError("sim.horizon_s must be a positive multiple of sim.step_s")
    if not 0 <= s.sim.lost_time_s < s.sim.step_s:
        raise ScenarioError("sim.lost_time_s must be in [0, step_s)")
    if not s.seeds:
        raise ScenarioError("seeds must be non-empty")


# -- builders --------------------------------------------------------------------

def _demand_centroids(s: Scenario, net: Network) -> list[Centroid]:
    spec = s.centroids
    if spec.layout == "rings":
        return net_mod.ring_centroids(net, spec.rings)
    if spec.layout == "random":
        return net_mod.random_centroids(net, spec.count, spec.placement_seed)
    return [
        Centroid(id=i, street=street) for i, street in enumerate(spec.streets)
    ]


def _parking_streets(s: Scenario, net: Network) -> list:
    spec = s.parking
    if spec.placement == "none":
        return []
    if spec.placement == "rings":
        out = []
        for side in spec.rings:
            out.extend(net_mod.ring_segments(net, side))
        return out
    if spec.placement == "all":
        return net.streets()
    if spec.placement == "explicit":
        return list(spec.streets)
    pool = net_mod.candidate_streets(net)
    if spec.count > len(pool):
        raise ScenarioError(
            f"parking.count={spec.count} exceeds the {len(pool)} candidate streets"
        )
    rng = np.random.default_rng(spec.placement_seed)
    idx = rng.choice(len(pool), size=spec.count, replace=False)
    return [pool[i] for i in sorted(int(i) for i in idx)]


def build_network(s: Scenario) -> Network:
    net = build_grid(s.network.rows, s.network.cols, s.network.link_length_m,
                     s.network.lanes, s.network.free_flow_kmh, s.network.sat_flow_vphpl)
    centroids = _demand_centroids(s, net)
    parking_streets = _parking_streets(s, net)
    parking_set = set(parking_streets)
    facility = ParkingFacility(s.parking.capacity)
    by_street = {c.street: c for c in centroids}
    merged = []
    taken = set()
    for c in centroids:
        if c.street in parking_set:
            merged.append(replace(c, parking=facility))
            taken.add(c.street)
        else:
            merged.append(c)
    next_id = max((c.id for c in centroids), default=-1) + 1
    for street in parking_streets:
        if street not in taken and street not in by_street:
            merged.append(Centroid(id=next_id, street=street,
                                   generates_demand=False, parking=facility))
            next_id += 1
    net = net.with_centroids(merged)
    if s.controller.perimeter_side is not None:
        net = define_perimeter(net, s.controller.perimeter_side)
    return net


def build_simulation(s: Scenario, seed: int, net: Optional[Network] = None,
                     record_decisions: bool = False,
                     event_sink=None) -> Simulation:
    if net is None:
        net = build_network(s)
    demand = build_demand(net, s.demand.pattern, s.demand.rate_per_od_vph,
                          s.demand.duration_s, s.demand.central_side)
    perimeter_params = None
    if s.controller.type in ("bangbang", "nmp"):
        perimeter_params = PerimeterParams(
            interior_critical_density=s.controller.interior_critical_density,
            gain=s.controller.gain,
            mode=s.controller.type,
        )
    controller = make_controller(net, s.controller.type, perimeter_params)
    holding = None
    if s.holding.enabled:
        params = HoldingParams(
            critical_density=s.holding.critical_density,
            min_remaining_links=s.holding.min_remaining_links,
            hold_duration_s=s.holding.hold_duration_s,
            max_holds=s.holding.max_holds,
            penetration_pct=s.holding.penetration_pct,
            maneuver_penalty_s=s.holding.maneuver_penalty_s,
        )
        holding = HoldingPolicy(net, params)
    clock = SimClock(s.sim.step_s, s.sim.horizon_s)
    return Simulation(
        net, controller, clock=clock, demand=demand, holding=holding,
        cav_share_pct=s.holding.penetration_pct, seed=seed,
        lost_time_s=s.sim.lost_time_s, bin_s=s.sim.bin_s,
        record_decisions=record_decisions, event_sink=event_sink,
    )
