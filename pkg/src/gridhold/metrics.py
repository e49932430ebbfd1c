"""Aggregated run measurements: MFD frames, delay records, stability audit."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np


@dataclass(frozen=True)
class MetricsFrame:
    """One aggregation bin of network-level measurements."""

    bin_start_s: float
    mean_density: float            # veh/lane-km
    mean_interior_density: Optional[float]
    nef_vph: float                 # trip completion rate scaled to veh/h
    mean_held: float
    cum_exits: int


@dataclass(frozen=True)
class DelayRecord:
    vehicle_id: int
    vehicle_class: str
    held: bool
    holds: int
    route_links: int
    depart_s: float
    arrive_s: Optional[float]
    free_flow_s: float
    delay_s: Optional[float]

    @property
    def finished(self) -> bool:
        return self.arrive_s is not None


class MetricsCollector:
    """Accumulates per-step samples into fixed-width bins."""

    def __init__(self, dt_s: float, bin_s: float = 100.0):
        if bin_s <= 0 or dt_s <= 0:
            raise ValueError("bin width and step length must be > 0")
        self.dt_s = dt_s
        self.bin_s = bin_s
        self.density: list[float] = []
        self.interior_density: list[Optional[float]] = []
        self.exits: list[int] = []
        self.in_network: list[int] = []
        self.held: list[int] = []

    def record(self, t: int, density: float, interior: Optional[float], *,
               exits: int, in_network: int, held: int):
        if t != len(self.density):
            raise ValueError("record_step must be called exactly once per step")
        self.density.append(density)
        self.interior_density.append(interior)
        self.exits.append(exits)
        self.in_network.append(in_network)
        self.held.append(held)

    def frames(self) -> list[MetricsFrame]:
        per_bin = max(1, int(round(self.bin_s / self.dt_s)))
        out = []
        cum = 0
        for start in range(0, len(self.density), per_bin):
            stop = min(start + per_bin, len(self.density))
            n = stop - start
            bin_exits = sum(self.exits[start:stop])
            cum += bin_exits
            interiors = [
                x for x in self.interior_density[start:stop] if x is not None
            ]
            out.append(MetricsFrame(
                bin_start_s=start * self.dt_s,
                mean_density=sum(self.density[start:stop]) / n,
                mean_interior_density=(sum(interiors) / len(interiors)) if interiors else None,
                nef_vph=bin_exits * 3600.0 / ((stop - start) * self.dt_s),
                mean_held=sum(self.held[start:stop]) / n,
                cum_exits=cum,
            ))
        return out


def delay_seconds(vehicle, dt_s: float, maneuver_penalty_s: float) -> Optional[float]:
    if vehicle.arrive_step is None:
        return None
    travel = (vehicle.arrive_step - vehicle.depart_step) * dt_s
    return travel - vehicle.free_flow_steps * dt_s + maneuver_penalty_s * vehicle.holds_used


def delay_records(vehicles, dt_s: float, maneuver_penalty_s: float) -> list[DelayRecord]:
    out = []
    for v in vehicles:
        out.append(DelayRecord(
            vehicle_id=v.id,
            vehicle_class=v.cls,
            held=v.holds_used > 0,
            holds=v.holds_used,
            route_links=len(v.route),
            depart_s=v.depart_step * dt_s,
            arrive_s=None if v.arrive_step is None else v.arrive_step * dt_s,
            free_flow_s=v.free_flow_steps * dt_s,
            delay_s=delay_seconds(v, dt_s, maneuver_penalty_s),
        ))
    return out


@dataclass(frozen=True)
class GroupStats:
    count: int
    total_delay_s: float
    mean_delay_s: float


@dataclass(frozen=True)
class DelayGroups:
    by_length: dict           # route_links -> {"all"|"held"|"non_held": GroupStats}
    unfinished: int


def _stats(delays: list[float]) -> GroupStats:
    total = float(sum(delays))
    return GroupStats(len(delays), total, total / len(delays) if delays else 0.0)


def delay_by_group(records: Iterable[DelayRecord]) -> DelayGroups:
    """Delay totals and means per route length, split held / non-held.

    Unfinished trips are counted separately and excluded from all statistics.
    """
    buckets: dict[int, dict[str, list[float]]] = {}
    unfinished = 0
    for r in records:
        if not r.finished:
            unfinished += 1
            continue
        b = buckets.setdefault(r.route_links, {"all": [], "held": [], "non_held": []})
        b["all"].append(r.delay_s)
        b["held" if r.held else "non_held"].append(r.delay_s)
    by_length = {
        length: {name: _stats(vals) for name, vals in groups.items()}
        for length, groups in sorted(buckets.items())
    }
    return DelayGroups(by_length=by_length, unfinished=unfinished)


def total_delay(records: Iterable[DelayRecord]) -> float:
    return float(sum(r.delay_s for r in records if r.finished))


def total_travel_distance_km(records: Iterable[DelayRecord], link_length_m: float) -> float:
    """Route length times link length, summed over completed trips."""
    return sum(r.route_links for r in records if r.finished) * link_length_m / 1000.0


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    drift_veh_per_step: float
    max_in_network: int
    window_steps: int


def stability_audit(in_network: Iterable[int], window_frac: float = 0.25,
                    eps: float = 0.01, max_bound: float = math.inf) -> StabilityReport:
    """Empirical boundedness check on the in-network vehicle count series.

    The running mean of the series is fit with a least-squares line over the
    final window; the run is judged stable when that drift does not exceed eps
    vehicles per step and the raw count stays below max_bound.
    """
    series = np.asarray(list(in_network), dtype=float)
    n = len(series)
    window = int(round(n * window_frac))
    if n < 4 or window < 2:
        raise ValueError("series too short for the requested stability window")
    running_mean = np.cumsum(series) / np.arange(1, n + 1)
    tail = running_mean[n - window:]
    x = np.arange(n - window, n, dtype=float)
    slope = float(np.polyfit(x, tail, 1)[0])
    peak = int(series.max()) if n else 0
    return StabilityReport(
        stable=bool(slope <= eps and peak < max_bound),
        drift_veh_per_step=slope,
        max_in_network=peak,
        window_steps=window,
    )


# -- CSV emission ---------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def write_mfd_csv(path, frames: Iterable[MetricsFrame]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_start_s", "density_veh_lane_km", "interior_density_veh_lane_km",
                    "nef_vph", "held", "cum_exits"])
        for fr in frames:
            w.writerow([
                _fmt(fr.bin_start_s), _fmt(fr.mean_density),
                _fmt(fr.mean_interior_density), _fmt(fr.nef_vph),
                _fmt(fr.mean_held), fr.cum_exits,
            ])


def write_vehicles_csv(path, records: Iterable[DelayRecord]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["vehicle_id", "class", "held", "holds", "route_links",
                    "depart_s", "arrive_s", "free_flow_s", "delay_s"])
        for r in records:
            w.writerow([
                r.vehicle_id, r.vehicle_class, int(r.held), r.holds, r.route_links,
                _fmt(r.depart_s), _fmt(r.arrive_s), _fmt(r.free_flow_s), _fmt(r.delay_s),
            ])


def write_summary_csv(path, rows: list[dict]):
    if not rows:
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(keys)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in keys])


def write_occupancy_csv(path, series: list[tuple]):
    """Facility occupancy time series rows: (t_s, facility_id, occupancy)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t_s", "facility_id", "occupancy"])
        for t_s, fid, occ in series:
            w.writerow([_fmt(t_s), fid, occ])
