"""Trip demand generation between centroids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Centroid, Network


@dataclass(frozen=True)
class DemandSpec:
    """Poisson trip demand over OD pairs, active for the first duration_s seconds.

    pattern 'uniform' pairs every demand centroid with every other; pattern
    'concentrated' keeps uniform origins but restricts destinations to the
    central area.
    """

    od_pairs: tuple[tuple[int, int], ...]
    rate_per_od_vph: float
    duration_s: float
    pattern: str = "uniform"

    def __post_init__(self):
        if self.rate_per_od_vph < 0:
            raise ValueError("demand rate must be >= 0")
        if self.duration_s < 0:
            raise ValueError("demand duration must be >= 0")
        for o, d in self.od_pairs:
            if o == d:
                raise ValueError(f"OD pair with identical origin and destination {o}")


def central_centroids(net: Network, side: int = 3) -> list[Centroid]:
    """Demand centroids whose street midpoint falls inside the centered side-i square."""
    lo_r = (net.rows - 1 - side) / 2.0
    lo_c = (net.cols - 1 - side) / 2.0
    hi_r, hi_c = lo_r + side, lo_c + side
    out = []
    for c in net.demand_centroids():
        (r1, c1), (r2, c2) = c.street
        mid_r, mid_c = (r1 + r2) / 2.0, (c1 + c2) / 2.0
        if lo_r <= mid_r <= hi_r and lo_c <= mid_c <= hi_c:
            out.append(c)
    return out


def build_demand(net: Network, pattern: str, rate_per_od_vph: float,
                 duration_s: float, central_side: int = 3) -> DemandSpec:
    origins = net.demand_centroids()
    if pattern == "uniform":
        dests = origins
    elif pattern == "concentrated":
        dests = central_centroids(net, central_side)
        if not dests:
            raise ValueError("concentrated demand has no destination centroids in the central area")
    else:
        raise ValueError(f"unknown demand pattern {pattern!r}")
    pairs = tuple(
        (o.id, d.id) for o in origins for d in dests if o.id != d.id
    )
    return DemandSpec(od_pairs=pairs, rate_per_od_vph=rate_per_od_vph,
                      duration_s=duration_s, pattern=pattern)


def generate_demand(spec: DemandSpec, t: int, dt_s: float,
                    rng: np.random.Generator) -> list[tuple[int, int]]:
    """OD pairs of the vehicles arriving during step t.

    Independent Poisson arrivals per OD pair are drawn through superposition:
    one total count, then uniform assignment to pairs.
    """
    if t * dt_s >= spec.duration_s or not spec.od_pairs or spec.rate_per_od_vph == 0:
        return []
    lam = spec.rate_per_od_vph * dt_s / 3600.0 * len(spec.od_pairs)
    k = int(rng.poisson(lam))
    if k == 0:
        return []
    idx = rng.integers(0, len(spec.od_pairs), size=k)
    return [spec.od_pairs[int(i)] for i in idx]
