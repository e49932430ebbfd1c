"""Grid network topology: links, movements, signal phases, centroids, parking, perimeter.

Nodes are (row, col) lattice points. Row indices increase northward and column
indices increase eastward, so "northbound" means travel toward higher rows.
A street is an undirected segment between adjacent intersections; it carries
one directed link per direction. A movement (i, j, k) routes vehicles arriving
at intersection j on link (i, j) onto link (j, k). U-turns are excluded.

Networks are immutable after construction and safe to share across runs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

Node = tuple[int, int]
Link = tuple[Node, Node]
Movement = tuple[Node, Node, Node]

# Phase template, in tie-break order: a protected-left four-phase plan.
PHASE_NAMES = ("ns_through_right", "ns_left", "ew_through_right", "ew_left")


@dataclass(frozen=True)
class ParkingFacility:
    """Static description of a holding facility. capacity=None means unbounded."""

    capacity: Optional[int] = None

    def __post_init__(self):
        if self.capacity is not None and self.capacity < 0:
            raise ValueError("parking capacity must be >= 0 or None")


@dataclass(frozen=True)
class Centroid:
    """A trip end point attached to the midpoint of a street segment.

    Vehicles are injected into the attached street's queue with half the
    free-flow delay and are absorbed on either direction of the same street.
    """

    id: int
    street: Link  # canonical (low node, high node) segment
    ring_index: Optional[int] = None
    generates_demand: bool = True
    parking: Optional[ParkingFacility] = None

    def directed_links(self) -> tuple[Link, Link]:
        a, b = self.street
        return (a, b), (b, a)


@dataclass(frozen=True)
class Perimeter:
    """A square boundary marking a protected interior region."""

    side: int
    intersections: frozenset[Node]
    inbound_movements: frozenset[Movement]
    interior_links: frozenset[Link]
    boundary_links: frozenset[Link]


def segment(a: Node, b: Node) -> Link:
    """Canonical undirected form of the street between adjacent nodes a and b."""
    return (a, b) if a <= b else (b, a)


def _direction(a: Node, b: Node) -> tuple[int, int]:
    return (b[0] - a[0], b[1] - a[1])


def turn_type(i: Node, j: Node, k: Node) -> str:
    """'through', 'left' or 'right' for the movement i -> j -> k."""
    din = _direction(i, j)
    dout = _direction(j, k)
    if din == dout:
        return "through"
    cross = din[0] * dout[1] - din[1] * dout[0]
    return "right" if cross > 0 else "left"


def phase_slot(i: Node, j: Node, k: Node) -> int:
    """Index of the template phase serving movement (i, j, k)."""
    din = _direction(i, j)
    ns = din[0] != 0
    turn = turn_type(i, j, k)
    if ns:
        return 0 if turn in ("through", "right") else 1
    return 2 if turn in ("through", "right") else 3


class Network:
    """Immutable directed-grid network with movement and phase structure."""

    def __init__(self, rows, cols, link_length_m, lanes, free_flow_kmh,
                 sat_flow_vphpl, centroids=(), perimeter=None):
        self.rows = rows
        self.cols = cols
        self.link_length_m = float(link_length_m)
        self.lanes = int(lanes)
        self.free_flow_kmh = float(free_flow_kmh)
        self.sat_flow_vphpl = float(sat_flow_vphpl)
        self.nodes: list[Node] = [(r, c) for r in range(rows) for c in range(cols)]
        self._node_set = frozenset(self.nodes)

        self.links: list[Link] = []
        for a in self.nodes:
            for b in self._neighbors(a):
                self.links.append((a, b))
        self.link_set = frozenset(self.links)

        self.movements: list[Movement] = []
        self.movements_at: dict[Node, list[Movement]] = {n: [] for n in self.nodes}
        self.movements_from: dict[Link, list[Movement]] = {l: [] for l in self.links}
        for (i, j) in self.links:
            for k in self._neighbors(j):
                if k == i:
                    continue
                mv = (i, j, k)
                self.movements.append(mv)
                self.movements_at[j].append(mv)
                self.movements_from[(i, j)].append(mv)

        # One dedicated lane per movement.
        self.saturation: dict[Movement, float] = {
            mv: self.sat_flow_vphpl for mv in self.movements
        }

        # Admissible phases per intersection: the template slots that have at
        # least one movement, kept in template order (tie-break order).
        self.phases: dict[Node, list[tuple[Movement, ...]]] = {}
        for n in self.nodes:
            slots: list[list[Movement]] = [[], [], [], []]
            for mv in self.movements_at[n]:
                slots[phase_slot(*mv)].append(mv)
            self.phases[n] = [tuple(s) for s in slots if s]

        self.centroids: tuple[Centroid, ...] = tuple(centroids)
        self.perimeter: Optional[Perimeter] = perimeter
        self._validate_centroids()

        self.lane_km_total = len(self.links) * self.link_length_m / 1000.0 * self.lanes
        self._route_tables: dict[Link, tuple[dict, dict]] = {}

    # -- construction helpers -------------------------------------------------

    def _neighbors(self, n: Node) -> list[Node]:
        r, c = n
        out = []
        for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
            m = (r + dr, c + dc)
            if 0 <= m[0] < self.rows and 0 <= m[1] < self.cols:
                out.append(m)
        return out

    def _validate_centroids(self):
        known_streets = {segment(a, b) for (a, b) in self.links}
        seen_streets = set()
        seen_ids = set()
        for c in self.centroids:
            if c.street not in known_streets:
                raise ValueError(f"centroid {c.id} attached to unknown street {c.street}")
            if c.street in seen_streets:
                raise ValueError(f"two centroids attached to street {c.street}")
            if c.id in seen_ids:
                raise ValueError(f"duplicate centroid id {c.id}")
            seen_streets.add(c.street)
            seen_ids.add(c.id)

    # -- derived views ---------------------------------------------------------

    def streets(self) -> list[Link]:
        """All undirected segments, canonical and sorted."""
        return sorted({segment(a, b) for (a, b) in self.links})

    def link_free_flow_s(self, link: Link) -> float:
        return self.link_length_m / 1000.0 / self.free_flow_kmh * 3600.0

    def downstream_movements(self, link: Link) -> list[Movement]:
        return self.movements_from[link]

    def with_centroids(self, centroids: Iterable[Centroid]) -> "Network":
        net = Network(self.rows, self.cols, self.link_length_m, self.lanes,
                      self.free_flow_kmh, self.sat_flow_vphpl,
                      centroids=tuple(centroids), perimeter=self.perimeter)
        return net

    def demand_centroids(self) -> list[Centroid]:
        return [c for c in self.centroids if c.generates_demand]

    def parking_centroids(self) -> list[Centroid]:
        return [c for c in self.centroids if c.parking is not None]


def build_grid(rows: int, cols: int, link_length_m: float = 200.0, lanes: int = 3,
               free_flow_kmh: float = 50.0, sat_flow_vphpl: float = 1800.0) -> Network:
    """Build an n x m lattice of two-way streets with the four-phase plan."""
    if rows < 2 or cols < 2:
        raise ValueError("grid needs rows >= 2 and cols >= 2")
    if link_length_m <= 0 or lanes < 1 or free_flow_kmh <= 0 or sat_flow_vphpl <= 0:
        raise ValueError("link length, lanes, speed and saturation flow must be positive")
    return Network(rows, cols, link_length_m, lanes, free_flow_kmh, sat_flow_vphpl)


def _ring_span(net: Network, side: int) -> tuple[int, int, int, int]:
    """Lattice bounds (lo_r, hi_r, lo_c, hi_c) of the centered square of given side."""
    if side % 2 == 0 or side < 1:
        raise ValueError(f"ring side must be a positive odd integer, got {side}")
    if side >= min(net.rows, net.cols):
        raise ValueError(f"ring side {side} does not fit a {net.rows}x{net.cols} grid")
    if (net.rows - 1 - side) % 2 or (net.cols - 1 - side) % 2:
        raise ValueError(f"ring side {side} cannot be centered on a {net.rows}x{net.cols} grid")
    lo_r = (net.rows - 1 - side) // 2
    lo_c = (net.cols - 1 - side) // 2
    return lo_r, lo_r + side, lo_c, lo_c + side


def ring_segments(net: Network, side: int) -> list[Link]:
    """The 4*side street segments forming the centered square of the given side.

    Walk order: south side west->east, east side south->north, north side
    east->west, west side north->south.
    """
    lo_r, hi_r, lo_c, hi_c = _ring_span(net, side)
    segs: list[Link] = []
    for c in range(lo_c, hi_c):
        segs.append(segment((lo_r, c), (lo_r, c + 1)))
    for r in range(lo_r, hi_r):
        segs.append(segment((r, hi_c), (r + 1, hi_c)))
    for c in range(hi_c, lo_c, -1):
        segs.append(segment((hi_r, c - 1), (hi_r, c)))
    for r in range(hi_r, lo_r, -1):
        segs.append(segment((r - 1, lo_c), (r, lo_c)))
    return segs


def ring_centroids(net: Network, ring_indices: Iterable[int],
                   parking_capacity: Optional[int] = None,
                   with_parking: bool = False,
                   start_id: int = 0) -> list[Centroid]:
    """Centroids at the midpoints of the segments of each requested ring.

    Ring i contributes exactly 4*i centroids. Optionally attaches a parking
    facility (shared capacity per facility) to every created centroid.
    """
    out: list[Centroid] = []
    next_id = start_id
    parking = ParkingFacility(parking_capacity) if with_parking else None
    for side in ring_indices:
        for seg in ring_segments(net, side):
            out.append(Centroid(id=next_id, street=seg, ring_index=side, parking=parking))
            next_id += 1
    return out


def candidate_streets(net: Network) -> list[Link]:
    """Candidate attachment positions for random placement: every street segment."""
    return net.streets()


def random_centroids(net: Network, count: int, seed,
                     parking_capacity: Optional[int] = None,
                     with_parking: bool = False,
                     start_id: int = 0) -> list[Centroid]:
    """Uniform sample of centroid positions without replacement, reproducible per seed."""
    pool = candidate_streets(net)
    if count < 0 or count > len(pool):
        raise ValueError(f"cannot place {count} centroids on {len(pool)} candidate streets")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = rng.choice(len(pool), size=count, replace=False)
    parking = ParkingFacility(parking_capacity) if with_parking else None
    return [
        Centroid(id=start_id + n, street=pool[i], parking=parking)
        for n, i in enumerate(sorted(int(i) for i in idx))
    ]


def classify_link(net: Network, side: int, link: Link) -> str:
    """One of 'interior', 'exterior', 'boundary' relative to the side-i square."""
    lo_r, hi_r, lo_c, hi_c = _ring_span(net, side)

    def where(n: Node) -> str:
        r, c = n
        if r < lo_r or r > hi_r or c < lo_c or c > hi_c:
            return "out"
        if r in (lo_r, hi_r) or c in (lo_c, hi_c):
            return "edge"
        return "in"

    a, b = where(link[0]), where(link[1])
    if "out" in (a, b):
        return "exterior"
    if a == "edge" and b == "edge":
        return "boundary"
    return "interior"


def define_perimeter(net: Network, side: int) -> Network:
    """Return a copy of the network with the side-i square marked as perimeter.

    Perimeter intersections are the lattice points on the square. A movement at
    a perimeter intersection is inbound when its incoming link lies outside the
    square and its outgoing link does not (it carries traffic into the region).
    Interior links, used for the regional density, are those reaching strictly
    inside the square.
    """
    lo_r, hi_r, lo_c, hi_c = _ring_span(net, side)
    boundary_nodes = frozenset(
        (r, c)
        for r in range(lo_r, hi_r + 1)
        for c in range(lo_c, hi_c + 1)
        if r in (lo_r, hi_r) or c in (lo_c, hi_c)
    )
    interior = frozenset(l for l in net.links if classify_link(net, side, l) == "interior")
    boundary = frozenset(l for l in net.links if classify_link(net, side, l) == "boundary")
    inbound = frozenset(
        (i, j, k)
        for (i, j, k) in net.movements
        if j in boundary_nodes
        and classify_link(net, side, (i, j)) == "exterior"
        and classify_link(net, side, (j, k)) != "exterior"
    )
    perimeter = Perimeter(side=side, intersections=boundary_nodes,
                          inbound_movements=inbound, interior_links=interior,
                          boundary_links=boundary)
    out = Network(net.rows, net.cols, net.link_length_m, net.lanes,
                  net.free_flow_kmh, net.sat_flow_vphpl,
                  centroids=net.centroids, perimeter=perimeter)
    return out
