"""Replication harness: per-seed runs, CSV emission, and preset sweeps.

Replications run concurrently up to a worker count taken from the
GRIDHOLD_WORKERS environment variable (default 1). Every run writes to its own
directory, so results are byte-identical regardless of the worker count.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from . import metrics as met
from .scenario import Scenario, build_network, build_simulation

WORKERS_ENV = "GRIDHOLD_WORKERS"

# Demand level used by the experiment presets. The default 1.05 vph per OD does
# not congest this point-queue model, so sweeps run at a rate calibrated to
# push the average density well past the holding threshold and still let the
# network empty within the horizon.
EXPERIMENT_RATE_VPH = 4.5


@dataclass
class SeedResult:
    seed: int
    frames: list
    records: list
    in_network: list
    audit: met.StabilityReport
    injected: int
    exited: int
    total_delay_s: float
    mean_delay_s: float
    unfinished: int
    held_vehicles: int
    total_holds: int
    peak_occupancy: int
    distance_km: float
    decision_log: Optional[list] = None


def run_seed(scenario: Scenario, seed: int, out_dir: Optional[Path] = None,
             record_decisions: bool = False, net=None) -> SeedResult:
    """One deterministic replication, optionally writing its CSV outputs."""
    event_writer = None
    event_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if scenario.output.events:
            event_file = open(out_dir / "events.csv", "w", newline="")
            w = csv.writer(event_file)
            w.writerow(["event", "step", "vehicle_id", "detail", "extra"])

            def event_writer(event):
                w.writerow([event[0], event[1], event[2],
                            *[str(x) for x in event[3:]]] )

    sim = build_simulation(scenario, seed, net=net,
                           record_decisions=record_decisions,
                           event_sink=event_writer)
    occupancy_series = []
    track_occupancy = (
        scenario.output.occupancy and sim.holding is not None and out_dir is not None
    )
    for _ in range(sim.clock.steps):
        sim.step()
        if track_occupancy:
            t_s = (sim.t - 1) * sim.clock.dt_s
            for fid in sorted(sim.holding.facilities):
                occupancy_series.append(
                    (t_s, fid, sim.holding.facilities[fid].occupancy)
                )
    if event_file is not None:
        event_file.close()

    records = met.delay_records(sim.vehicles, sim.clock.dt_s,
                                scenario.holding.maneuver_penalty_s)
    finished = [r for r in records if r.finished]
    audit = met.stability_audit(sim.metrics.in_network)
    total_delay = met.total_delay(records)
    holding = sim.holding
    result = SeedResult(
        seed=seed,
        frames=sim.metrics.frames(),
        records=records,
        in_network=list(sim.metrics.in_network),
        audit=audit,
        injected=sim.injected,
        exited=sim.exited,
        total_delay_s=total_delay,
        mean_delay_s=total_delay / len(finished) if finished else 0.0,
        unfinished=len(records) - len(finished),
        held_vehicles=sum(1 for r in records if r.held),
        total_holds=sum(r.holds for r in records),
        peak_occupancy=max(
            (f.peak_occupancy for f in holding.facilities.values()), default=0
        ) if holding else 0,
        distance_km=met.total_travel_distance_km(records, scenario.network.link_length_m),
        decision_log=sim.decision_log if record_decisions else None,
    )
    if out_dir is not None:
        met.write_mfd_csv(out_dir / "mfd.csv", result.frames)
        met.write_vehicles_csv(out_dir / "vehicles.csv", result.records)
        if track_occupancy:
            met.write_occupancy_csv(out_dir / "occupancy.csv", occupancy_series)
    return result


def summary_row(result: SeedResult) -> dict:
    return {
        "seed": result.seed,
        "injected": result.injected,
        "completed": result.exited,
        "unfinished": result.unfinished,
        "total_delay_s": result.total_delay_s,
        "mean_delay_s": result.mean_delay_s,
        "held_vehicles": result.held_vehicles,
        "total_holds": result.total_holds,
        "peak_facility_occupancy": result.peak_occupancy,
        "distance_km": result.distance_km,
        "stable": int(result.audit.stable),
        "drift_veh_per_step": result.audit.drift_veh_per_step,
    }


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run_seed_task(args):
    scenario, seed, out_dir = args
    return run_seed(scenario, seed, out_dir)


def run_scenario(scenario: Scenario, out_dir=None, workers: Optional[int] = None
                 ) -> list[SeedResult]:
    """All replications of a scenario; writes per-seed directories and a pooled summary."""
    out_root = Path(out_dir if out_dir is not None else scenario.output.dir)
    tasks = [
        (scenario, seed, out_root / f"seed_{seed}") for seed in scenario.seeds
    ]
    workers = workers if workers is not None else default_workers()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed_task, tasks))
    else:
        net = build_network(scenario)  # shared across seeds, reuses routing tables
        results = [run_seed(scenario, seed, path, net=net) for (_, seed, path) in tasks]
    results.sort(key=lambda r: r.seed)
    met.write_summary_csv(out_root / "summary.csv", [summary_row(r) for r in results])
    return results


# -- presets ---------------------------------------------------------------------

def _experiment_base() -> Scenario:
    """Congested uniform-demand scenario shared by the sweeps."""
    s = Scenario()
    return replace(s, demand=replace(s.demand, rate_per_od_vph=EXPERIMENT_RATE_VPH))


def _holding(s: Scenario, **kw) -> Scenario:
    return replace(s, holding=replace(s.holding, enabled=True, **kw))


def _parking(s: Scenario, **kw) -> Scenario:
    return replace(s, parking=replace(s.parking, **kw))


def preset_variants(name: str) -> list[tuple[str, Scenario]]:
    """(label, scenario) pairs for a named sweep; the first entry is the baseline."""
    base = _experiment_base()
    all_parking = _parking(base, placement="all")
    ring7 = _parking(base, placement="rings", rings=(7,))
    rand28 = _parking(base, placement="random", count=28, placement_seed=1)
    variants: list[tuple[str, Scenario]] = [("baseline", base)]

    if name == "rho-cr-sweep":
        for rho in (15, 20, 25, 30, 35, 40):
            variants.append((
                f"rho_cr={rho}",
                _holding(all_parking, critical_density=float(rho),
                         min_remaining_links=10, hold_duration_s=300.0, max_holds=None),
            ))
    elif name == "phi-sweep":
        for phi in (6, 8, 10, 12, 14):
            variants.append((
                f"phi={phi}",
                _holding(all_parking, min_remaining_links=phi,
                         hold_duration_s=300.0, max_holds=None),
            ))
    elif name == "tau-sweep":
        for tau_min in (2, 4, 6, 8, 10):
            variants.append((
                f"tau={tau_min}min",
                _holding(all_parking, hold_duration_s=tau_min * 60.0, max_holds=1),
            ))
    elif name == "parking-rings":
        for side in (1, 3, 5, 7, 9):
            variants.append((
                f"ring={side}",
                _holding(_parking(base, placement="rings", rings=(side,))),
            ))
    elif name == "random-parking":
        for placement_seed in range(1, 11):
            variants.append((
                f"layout={placement_seed}",
                _holding(_parking(base, placement="random", count=28,
                                  placement_seed=placement_seed)),
            ))
    elif name == "parking-capacity":
        for cap in (10, 20, 30, 40, None):
            label = "cap=unbounded" if cap is None else f"cap={cap}"
            variants.append((label, _holding(_parking(ring7, capacity=cap))))
    elif name == "penetration-sweep":
        for alpha in (20, 40, 60, 80, 100):
            variants.append((
                f"alpha={alpha}",
                _holding(rand28, penetration_pct=float(alpha)),
            ))
    elif name == "perimeter-comparison":
        concentrated = replace(
            base, demand=replace(base.demand, pattern="concentrated"),
        )
        ctrl = concentrated.controller
        variants = [
            ("bangbang", replace(concentrated, controller=replace(
                ctrl, type="bangbang", perimeter_side=7, interior_critical_density=40.0))),
            ("nmp", replace(concentrated, controller=replace(
                ctrl, type="nmp", perimeter_side=7, interior_critical_density=40.0, gain=1.4))),
            ("holding", _holding(_parking(concentrated, placement="rings", rings=(7,)),
                                 min_remaining_links=5)),
            ("baseline", concentrated),
        ]
    else:
        raise ValueError(f"unknown preset {name!r}")
    return variants


PRESET_NAMES = (
    "rho-cr-sweep", "phi-sweep", "tau-sweep", "parking-rings", "random-parking",
    "parking-capacity", "penetration-sweep", "perimeter-comparison",
)


def run_preset(name: str, out_dir, workers: Optional[int] = None) -> dict:
    """Execute a sweep preset and emit a per-variant comparison table."""
    variants = preset_variants(name)
    out_root = Path(out_dir)
    results: dict[str, list[SeedResult]] = {}
    for label, scen in variants:
        safe = label.replace("=", "_")
        results[label] = run_scenario(scen, out_root / safe, workers=workers)

    baseline = results.get("baseline")
    rows = []
    for label, res in results.items():
        pooled_delay = sum(r.total_delay_s for r in res) / len(res)
        pooled_mean = sum(r.mean_delay_s for r in res) / len(res)
        exits = sum(r.exited for r in res) / len(res)
        row = {
            "variant": label,
            "mean_total_delay_s": pooled_delay,
            "mean_delay_s": pooled_mean,
            "mean_completed": exits,
        }
        if baseline is not None:
            base_delay = sum(r.total_delay_s for r in baseline) / len(baseline)
            base_exits = sum(r.exited for r in baseline) / len(baseline)
            row["delay_vs_baseline_s"] = pooled_delay - base_delay
            row["completed_vs_baseline"] = exits - base_exits
        rows.append(row)
    met.write_summary_csv(out_root / "comparison.csv", rows)
    return results
