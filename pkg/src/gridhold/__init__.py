"""Mesoscopic point-queue simulation of signalized grid networks.

Provides a deterministic discrete-time simulator with pluggable decentralized
signal controllers (max pressure, bang-bang perimeter gating, penalized
pressure metering), a temporary-holding strategy that parks long-distance
connected vehicles during congestion, and a replication harness with
experiment presets.
"""

from .control import (
    BangBangController,
    Decision,
    MaxPressureController,
    PenalizedPressureController,
    PerimeterParams,
    ScriptedController,
    congestion_penalty,
    make_controller,
)
from .demand import DemandSpec, build_demand, generate_demand
from .dynamics import SimClock, Simulation, SimulationFault, Vehicle
from .harness import (
    PRESET_NAMES,
    SeedResult,
    run_preset,
    run_scenario,
    run_seed,
)
from .holding import HoldingParams, HoldingPolicy, assign_class
from .metrics import (
    DelayRecord,
    MetricsFrame,
    StabilityReport,
    delay_by_group,
    stability_audit,
    total_travel_distance_km,
)
from .network import (
    Centroid,
    Network,
    ParkingFacility,
    Perimeter,
    build_grid,
    define_perimeter,
    random_centroids,
    ring_centroids,
)
from .routing import route_vehicle
from .scenario import Scenario, ScenarioError, build_simulation, load_scenario, loads_scenario

__version__ = "0.1.0"

__all__ = [
    "BangBangController", "Centroid", "Decision", "DelayRecord", "DemandSpec",
    "HoldingParams", "HoldingPolicy", "MaxPressureController", "MetricsFrame",
    "Network", "ParkingFacility", "PenalizedPressureController", "Perimeter",
    "PerimeterParams", "PRESET_NAMES", "Scenario", "ScenarioError",
    "ScriptedController", "SeedResult", "SimClock", "Simulation",
    "SimulationFault", "StabilityReport", "Vehicle", "assign_class",
    "build_demand", "build_grid", "build_simulation", "congestion_penalty",
    "define_perimeter", "delay_by_group", "generate_demand", "load_scenario",
    "loads_scenario", "make_controller", "random_centroids", "ring_centroids",
    "route_vehicle", "run_preset", "run_scenario", "run_seed",
    "stability_audit", "total_travel_distance_km",
]
