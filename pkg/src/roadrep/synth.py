"""Synthetic road graphs for tests and desk-scale experiments.

All generators are deterministic in ``seed`` and emit graphs that the
preprocessing chain leaves unchanged: nodes are far apart, there are no
parallel edges, and (for the planted-label graph) no node has degree 2.

Planted-label generator
-----------------------
Small jittered grid towns (four corner diagonals each, plus interior
diagonals until the edge count equals ``size``) sit on a coarse lattice and
are joined by a spanning tree of bridge edges. Towns get latent classes in a
Latin-square pattern so that no class occupies a compact region of the map.
Every class owns two signature speeds from ``SPEEDS``; an edge shows one of
its town's signatures with probability ``signal`` and a uniform random speed
otherwise.

The label of an edge is a deterministic function of its closed 2-hop ball in
the line graph: count the signature speeds of each class inside the ball and
take the argmax (lowest class on ties). One edge's own features reveal little,
while two rounds of sum/mean aggregation over speed one-hots recover it.
"""

import math

import numpy as np

from .graph import Edge, Node, RoadGraph, polyline_length_m, to_line_graph
from .sampling import philox

ORIGIN = (15.62, 58.41)  # lon, lat
METERS_PER_DEG_LAT = 111_195.0

SPEEDS = (5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120)
CLASS_TAGS = ("primary", "tertiary", "unclassified", "residential", "living_street")


def _to_lonlat(x, y):
    lat = ORIGIN[1] + y / METERS_PER_DEG_LAT
    lon = ORIGIN[0] + x / (METERS_PER_DEG_LAT * math.cos(math.radians(ORIGIN[1])))
    return lon, lat


def _assemble(points, pairs, speeds=None, tags=None, bend=None):
    """RoadGraph from metric node positions and index pairs."""
    nodes = [Node(i, *_to_lonlat(x, y)) for i, (x, y) in enumerate(points)]
    edges = []
    for k, (i, j) in enumerate(pairs):
        a, b = nodes[i], nodes[j]
        geom = [(a.lon, a.lat), (b.lon, b.lat)]
        if bend is not None and bend[k] != 0.0:
            # one interior vertex pushed sideways; still a single segment in the graph
            (xi, yi), (xj, yj) = points[i], points[j]
            mx, my = (xi + xj) / 2, (yi + yj) / 2
            nx_, ny_ = -(yj - yi), xj - xi
            norm = math.hypot(nx_, ny_)
            geom.insert(1, _to_lonlat(mx + bend[k] * nx_ / norm, my + bend[k] * ny_ / norm))
        edges.append(
            Edge(
                k,
                i,
                j,
                polyline_length_m(geom),
                tuple(geom),
                None if speeds is None else int(speeds[k]),
                None if tags is None else tags[k],
            )
        )
    return RoadGraph.build(nodes, edges)


def path_graph(size, spacing=100.0, seed=0):
    """``size`` nodes in a line, ``size - 1`` edges."""
    pts = [(i * spacing, 0.0) for i in range(size)]
    pairs = [(i, i + 1) for i in range(size - 1)]
    return _assemble(pts, pairs, [50] * len(pairs), ["residential"] * len(pairs))


def star_graph(size, spacing=100.0, seed=0):
    """A center with ``size`` leaves."""
    pts = [(0.0, 0.0)] + [
        (spacing * math.cos(2 * math.pi * k / size), spacing * math.sin(2 * math.pi * k / size))
        for k in range(size)
    ]
    pairs = [(0, k + 1) for k in range(size)]
    return _assemble(pts, pairs, [50] * size, ["residential"] * size)


def _grid(rows, cols, spacing, rng, jitter):
    pts = []
    for r in range(rows):
        for c in range(cols):
            dx, dy = rng.uniform(-jitter, jitter, 2) if jitter else (0.0, 0.0)
            pts.append((c * spacing + dx, r * spacing + dy))
    idx = lambda r, c: r * cols + c  # noqa: E731
    pairs = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                pairs.append((idx(r, c), idx(r, c + 1)))
            if r + 1 < rows:
                pairs.append((idx(r, c), idx(r + 1, c)))
    return pts, pairs, idx


def grid_city(size, spacing=120.0, seed=0):
    """``size`` x ``size`` jittered grid, 2 * size * (size - 1) edges, random tags and speeds."""
    rng = philox(seed, 1)
    pts, pairs, _ = _grid(size, size, spacing, rng, jitter=spacing * 0.1)
    tags = [CLASS_TAGS[i] for i in rng.integers(len(CLASS_TAGS), size=len(pairs))]
    speeds = [SPEEDS[i] for i in rng.integers(len(SPEEDS), size=len(pairs))]
    return _assemble(pts, pairs, speeds, tags)


def _town_layout(size, side=None):
    """Town side length and count so towns plus bridges can total ``size`` edges."""
    sides = [side] if side else range(3, 21)
    for s in sides:
        base_edges = 2 * s * (s - 1) + 4
        spare = max(0, (s - 1) ** 2 - 4)
        for towns in range(1, size + 1):
            base = towns * base_edges + towns - 1
            if base > size:
                break
            if size - base <= towns * spare:
                return s, towns, size - base
    raise ValueError(f"no town layout yields exactly {size} edges")


def _planted_topology(size, spacing, rng, side=None):
    """Small grid towns on a jittered lattice, joined by a spanning tree of bridges.

    Returns node positions, edge index pairs, and the town of every edge
    (bridges belong to the town they leave from).
    """
    s, towns, extra = _town_layout(size, side)
    extent = (s - 1) * spacing
    pitch = extent * 2.5
    lattice_cols = math.ceil(math.sqrt(towns))
    origins = []
    for t in range(towns):
        r, c = divmod(t, lattice_cols)
        jitter = rng.uniform(-0.25, 0.25, 2) * extent
        origins.append(np.array([c * pitch, r * pitch]) + jitter)
    pts, pairs, owner, members, free_cells = [], [], [], [], []
    for t in range(towns):
        off = len(pts)
        for r in range(s):
            for c in range(s):
                dx, dy = rng.uniform(-0.15, 0.15, 2) * spacing
                pts.append((origins[t][0] + c * spacing + dx, origins[t][1] + r * spacing + dy))
        idx = lambda r, c, off=off: off + r * s + c  # noqa: E731
        town = []
        for r in range(s):
            for c in range(s):
                if c + 1 < s:
                    town.append((idx(r, c), idx(r, c + 1)))
                if r + 1 < s:
                    town.append((idx(r, c), idx(r + 1, c)))
        # corner diagonals lift the degree-2 corners to 3
        town += [
            (idx(0, 0), idx(1, 1)),
            (idx(0, s - 1), idx(1, s - 2)),
            (idx(s - 1, 0), idx(s - 2, 1)),
            (idx(s - 1, s - 1), idx(s - 2, s - 2)),
        ]
        used = {(0, 0), (0, s - 2), (s - 2, 0), (s - 2, s - 2)}
        pairs += town
        owner += [t] * len(town)
        members.append(list(range(off, off + s * s)))
        cells = [(r, c) for r in range(s - 1) for c in range(s - 1) if (r, c) not in used]
        free_cells.append([(cells[k], idx) for k in rng.permutation(len(cells))])
    t = 0
    while extra > 0:
        if free_cells[t % towns]:
            (r, c), idx = free_cells[t % towns].pop()
            pairs.append((idx(r, c), idx(r + 1, c + 1)))
            owner.append(t % towns)
            extra -= 1
        t += 1
    P = np.array(pts)
    joined = [0]
    while len(joined) < towns:
        d, a, b = min(
            (float(np.hypot(*(origins[a] - origins[b]))), a, b)
            for a in joined
            for b in range(towns)
            if b not in joined
        )
        na, nb = np.array(members[a]), np.array(members[b])
        D = ((P[na][:, None] - P[nb][None]) ** 2).sum(axis=2)
        i, j = np.unravel_index(np.argmin(D), D.shape)
        pairs.append((int(na[i]), int(nb[j])))
        owner.append(a)
        joined.append(b)
    return pts, pairs, np.array(owner), towns, lattice_cols


def signature_speeds(cls):
    """The two speeds that mark class ``cls``; three speeds belong to no class."""
    return SPEEDS[2 * cls], SPEEDS[2 * cls + 1]


def planted_labels(lg, speeds):
    """Class of each line-graph node: argmax over classes of signature-speed
    counts in the closed 2-hop ball (lowest class wins ties)."""
    speeds = np.asarray(speeds)
    marks = np.full(len(speeds), -1)
    for c in range(len(CLASS_TAGS)):
        marks[np.isin(speeds, signature_speeds(c))] = c
    labels = np.zeros(lg.num_nodes, dtype=np.int64)
    for v in range(lg.num_nodes):
        ball = {v}
        for u in lg.adj[v]:
            ball.add(u)
            ball.update(lg.adj[u])
        m = marks[list(ball)]
        labels[v] = int(np.argmax(np.bincount(m[m >= 0], minlength=len(CLASS_TAGS))))
    return labels


def planted_label_graph(size=300, seed=0, spacing=150.0, signal=0.5, side=None):
    """Road graph with ``size`` edges whose road types follow the planted 2-hop rule.

    Each town has a latent class laid out in a Latin-square pattern over the
    town lattice. An edge shows one of its town's two signature speeds with
    probability ``signal`` and a uniformly random speed otherwise.
    """
    rng = philox(seed, 2)
    pts, pairs, owner, towns, cols = _planted_topology(size, spacing, rng, side)
    shift = int(rng.integers(len(CLASS_TAGS)))
    town_class = np.array([(t % cols + 2 * (t // cols) + shift) % len(CLASS_TAGS) for t in range(towns)])
    latent = town_class[owner]
    sig = np.array([signature_speeds(c) for c in latent])
    pick = sig[np.arange(len(pairs)), rng.integers(2, size=len(pairs))]
    noise = np.array(SPEEDS)[rng.integers(len(SPEEDS), size=len(pairs))]
    speeds = np.where(rng.random(len(pairs)) < signal, pick, noise)
    bend = np.where(rng.random(len(pairs)) < 0.3, rng.uniform(-20, 20, len(pairs)), 0.0)
    g = _assemble(pts, pairs, speeds, None, bend)
    labels = planted_labels(to_line_graph(g), speeds)
    return _assemble(pts, pairs, speeds, [CLASS_TAGS[c] for c in labels], bend)


GENERATORS = {
    "path": path_graph,
    "star": star_graph,
    "grid-city": grid_city,
    "planted-label": planted_label_graph,
}


def synthesize(kind, size, seed=0):
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {sorted(GENERATORS)}") from None
    return gen(size, seed=seed)
