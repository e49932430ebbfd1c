"""Shortest-path routing between centroids.

Routes live in link space: a route is the ordered sequence of directed links a
vehicle traverses after leaving its origin street, ending with the destination
street's link (the vehicle exits at its midpoint). The origin street itself is
not part of the route; the vehicle starts queued at its downstream signal.

Paths are shortest in link count, respect the no-U-turn movement structure,
and are sampled uniformly among all shortest alternatives.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .network import Centroid, Link, Network


def _successors(net: Network, link: Link) -> list[Link]:
    return [(j, k) for (_, j, k) in net.movements_from[link]]


def _predecessors(net: Network, link: Link) -> list[Link]:
    j, k = link
    preds = []
    for i in net._neighbors(j):
        if i == k:
            continue
        preds.append((i, j))
    return preds


def route_table(net: Network, dest_street: Link) -> tuple[dict, dict]:
    """Distance and shortest-path counts toward either direction of a street.

    dist[l] is the length (in links, inclusive) of the shortest admissible link
    sequence starting at l and ending on the destination street. count[l] is
    the number of distinct such sequences. Tables are cached on the network.
    """
    cached = net._route_tables.get(dest_street)
    if cached is not None:
        return cached
    a, b = dest_street
    targets = [(a, b), (b, a)]
    dist: dict[Link, int] = {t: 1 for t in targets}
    frontier = deque(targets)
    while frontier:
        link = frontier.popleft()
        d = dist[link]
        for pred in _predecessors(net, link):
            if pred not in dist:
                dist[pred] = d + 1
                frontier.append(pred)
    count: dict[Link, int] = {}
    for link in sorted(dist, key=lambda l: dist[l]):
        if dist[link] == 1:
            count[link] = 1
            continue
        count[link] = sum(
            count[s] for s in _successors(net, link) if dist.get(s) == dist[link] - 1
        )
    net._route_tables[dest_street] = (dist, count)
    return dist, count


def _weighted_pick(rng: np.random.Generator, options: list, weights: list[int]):
    total = float(sum(weights))
    r = rng.random() * total
    acc = 0.0
    for opt, w in zip(options, weights):
        acc += w
        if r < acc:
            return opt
    return options[-1]


def route_vehicle(net: Network, origin: Centroid, destination: Centroid,
                  rng: np.random.Generator) -> tuple[Link, tuple[Link, ...]]:
    """Sample a route from origin to destination centroid.

    Returns (origin_link, route): the directed origin street link the vehicle
    enters on, and the link sequence it then follows. The sample is uniform
    over all shortest routes, jointly over entry directions and paths.
    """
    if origin.street == destination.street:
        raise ValueError("origin and destination centroids share a street")
    dist, count = route_table(net, destination.street)

    candidates: list[tuple[Link, Link]] = []
    weights: list[int] = []
    best = None
    for origin_link in origin.directed_links():
        for first in _successors(net, origin_link):
            d = dist.get(first)
            if d is None:
                continue
            if best is None or d < best:
                best = d
                candidates = [(origin_link, first)]
                weights = [count[first]]
            elif d == best:
                candidates.append((origin_link, first))
                weights.append(count[first])
    if best is None:
        raise ValueError(
            f"no admissible route from centroid {origin.id} to centroid {destination.id}"
        )

    origin_link, current = _weighted_pick(rng, candidates, weights)
    route = [current]
    while dist[current] > 1:
        nxt_opts = [s for s in _successors(net, current) if dist.get(s) == dist[current] - 1]
        nxt_weights = [count[s] for s in nxt_opts]
        current = _weighted_pick(rng, nxt_opts, nxt_weights)
        route.append(current)
    return origin_link, tuple(route)


def shortest_route_links(net: Network, origin: Centroid, destination: Centroid) -> int:
    """Length in links of the shortest admissible route between two centroids."""
    dist, _ = route_table(net, destination.street)
    best = None
    for origin_link in origin.directed_links():
        for first in _successors(net, origin_link):
            d = dist.get(first)
            if d is not None and (best is None or d < best):
                best = d
    if best is None:
        raise ValueError("unreachable destination")
    return best
