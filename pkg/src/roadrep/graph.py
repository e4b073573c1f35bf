"""Primal road graphs, preprocessing, and the line graph transform."""

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
ENDPOINT_TOL_DEG = 1e-9


class GraphError(ValueError):
    """Raised when a graph file or value violates the RoadGraph invariants.

    ``problems`` lists every violation found, not just the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class Node:
    node_id: int
    lon: float
    lat: float


@dataclass(frozen=True)
class Edge:
    edge_id: int
    a: int
    b: int
    length: float
    geometry: tuple  # ((lon, lat), ...) running from node a to node b
    speed_limit: int | None = None
    road_type: str | None = None

    def other(self, node_id):
        return self.b if node_id == self.a else self.a


@dataclass(frozen=True)
class RoadGraph:
    nodes: tuple
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "_node_index", {n.node_id: n for n in self.nodes})

    @classmethod
    def build(cls, nodes, edges):
        return cls(
            tuple(sorted(nodes, key=lambda n: n.node_id)),
            tuple(sorted(edges, key=lambda e: e.edge_id)),
        )

    def node(self, node_id):
        return self._node_index[node_id]

    def has_node(self, node_id):
        return node_id in self._node_index

    def degrees(self):
        deg = {n.node_id: 0 for n in self.nodes}
        for e in self.edges:
            deg[e.a] += 1
            deg[e.b] += 1
        return deg

    def incidence(self):
        inc = {n.node_id: [] for n in self.nodes}
        for e in self.edges:
            inc[e.a].append(e)
            if e.b != e.a:
                inc[e.b].append(e)
        return inc

    def violations(self, strict=True):
        """List invariant violations; ``strict`` adds the post-preprocessing ones."""
        problems = []
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            problems.append("duplicate node ids")
        eids = [e.edge_id for e in self.edges]
        if len(set(eids)) != len(eids):
            problems.append("duplicate edge ids")
        pairs = set()
        for e in self.edges:
            for end in (e.a, e.b):
                if not self.has_node(end):
                    problems.append(f"edge {e.edge_id} references missing node {end}")
            if not e.length > 0:
                problems.append(f"edge {e.edge_id} has non-positive length {e.length}")
            if len(e.geometry) < 2:
                problems.append(f"edge {e.edge_id} geometry has fewer than 2 points")
            if not strict:
                continue
            key = frozenset((e.a, e.b))
            if key in pairs:
                problems.append(f"parallel edge {e.edge_id} between {e.a} and {e.b}")
            pairs.add(key)
            if self.has_node(e.a) and self.has_node(e.b) and len(e.geometry) >= 2:
                na, nb = self.node(e.a), self.node(e.b)
                if _far(e.geometry[0], (na.lon, na.lat)) or _far(e.geometry[-1], (nb.lon, nb.lat)):
                    problems.append(f"edge {e.edge_id} geometry does not meet its endpoints")
        return problems


def _far(p, q):
    return abs(p[0] - q[0]) > ENDPOINT_TOL_DEG or abs(p[1] - q[1]) > ENDPOINT_TOL_DEG


def haversine(lon1, lat1, lon2, lat2):
    """Great-circle distance in meters."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def polyline_length_m(points):
    return sum(haversine(*p, *q) for p, q in zip(points[:-1], points[1:]))


# ingestion


def load_graph(path, format=None):
    """Read a road graph from graph-json or GraphML.

    The format is inferred from the suffix when not given. Raises GraphError
    listing every structural problem found.
    """
    path = Path(path)
    if format is None:
        format = "graphml" if path.suffix.lower() == ".graphml" else "graph-json"
    if format == "graph-json":
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise GraphError(f"cannot read {path}: {exc}") from exc
        g = graph_from_dict(payload)
    elif format == "graphml":
        g = _load_graphml(path)
    else:
        raise ValueError(f"unknown graph format {format!r}")
    problems = g.violations(strict=False)
    if problems:
        raise GraphError(problems)
    return g


def graph_from_dict(payload):
    problems = []
    if not isinstance(payload, dict) or "nodes" not in payload or "edges" not in payload:
        raise GraphError("graph file must be an object with 'nodes' and 'edges'")
    nodes = []
    for i, raw in enumerate(payload["nodes"]):
        try:
            nodes.append(Node(int(raw["id"]), float(raw["lon"]), float(raw["lat"])))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"node #{i} malformed: {exc!r}")
    coords = {n.node_id: (n.lon, n.lat) for n in nodes}
    edges = []
    for i, raw in enumerate(payload["edges"]):
        try:
            u, v = int(raw["u"]), int(raw["v"])
            geometry = raw.get("geometry")
            if geometry:
                geometry = tuple((float(p[0]), float(p[1])) for p in geometry)
            elif u in coords and v in coords:
                geometry = (coords[u], coords[v])
            else:
                geometry = ()
            edges.append(
                Edge(
                    int(raw.get("id", i)),
                    u,
                    v,
                    float(raw["length"]),
                    geometry,
                    parse_speed(raw.get("maxspeed")),
                    _first_str(raw.get("highway")),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"edge #{i} malformed: {exc!r}")
    if problems:
        raise GraphError(problems)
    return RoadGraph.build(nodes, edges)


def graph_to_dict(g):
    return {
        "nodes": [{"id": n.node_id, "lon": n.lon, "lat": n.lat} for n in g.nodes],
        "edges": [
            {
                "id": e.edge_id,
                "u": e.a,
                "v": e.b,
                "length": float(e.length),
                "geometry": [list(p) for p in e.geometry],
                "maxspeed": e.speed_limit,
                "highway": e.road_type,
            }
            for e in g.edges
        ],
    }


def save_graph(g, path):
    """Write graph-json, or GraphML when the suffix is ``.graphml``."""
    if Path(path).suffix.lower() == ".graphml":
        _save_graphml(g, path)
        return
    Path(path).write_text(json.dumps(graph_to_dict(g)), encoding="utf-8")


def _save_graphml(g, path):
    import networkx as nx

    G = nx.MultiGraph()
    for n in g.nodes:
        G.add_node(str(n.node_id), x=float(n.lon), y=float(n.lat))
    for e in g.edges:
        attrs = {
            "length": float(e.length),
            "geometry": "LINESTRING (" + ", ".join(f"{float(x)!r} {float(y)!r}" for x, y in e.geometry) + ")",
        }
        if e.speed_limit is not None:
            attrs["maxspeed"] = str(e.speed_limit)
        if e.road_type is not None:
            attrs["highway"] = e.road_type
        G.add_edge(str(e.a), str(e.b), **attrs)
    nx.write_graphml(G, path)


_SPEED_RE = re.compile(r"\d+")


def parse_speed(value):
    """Speed limit as int km/h. Lists take their first entry; unparseable is None."""
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return parse_speed(value[0]) if value else None
    if isinstance(value, (int, float)):
        return int(value) if math.isfinite(value) else None
    m = _SPEED_RE.search(str(value))
    return int(m.group()) if m else None


def _first_str(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return str(value[0]) if value else None
    s = str(value)
    if s.startswith("[") and s.endswith("]"):
        # OSMnx stringifies list attributes in GraphML
        parts = [p.strip().strip("'\"") for p in s[1:-1].split(",")]
        return parts[0] if parts and parts[0] else None
    return s


_WKT_RE = re.compile(r"LINESTRING\s*\((.*)\)", re.IGNORECASE)


def _parse_wkt(text):
    m = _WKT_RE.search(text)
    if not m:
        raise ValueError(f"unsupported geometry {text[:40]!r}")
    pts = []
    for chunk in m.group(1).split(","):
        x, y = chunk.split()[:2]
        pts.append((float(x), float(y)))
    return tuple(pts)


def _load_graphml(path):
    import networkx as nx

    try:
        G = nx.read_graphml(path)
    except Exception as exc:  # networkx raises a variety of parser errors
        raise GraphError(f"cannot read {path}: {exc}") from exc
    problems = []
    relabel = {}
    nodes = []
    for i, (key, data) in enumerate(G.nodes(data=True)):
        try:
            nid = int(key)
        except ValueError:
            nid = i
        relabel[key] = nid
        try:
            nodes.append(Node(nid, float(data["x"]), float(data["y"])))
        except (KeyError, ValueError) as exc:
            problems.append(f"node {key} missing coordinates: {exc!r}")
    coords = {n.node_id: (n.lon, n.lat) for n in nodes}
    edges = []
    edge_iter = G.edges(data=True, keys=True) if G.is_multigraph() else G.edges(data=True)
    for i, item in enumerate(edge_iter):
        u, v, data = item[0], item[1], item[-1]
        a, b = relabel[u], relabel[v]
        try:
            if "geometry" in data:
                geometry = _parse_wkt(data["geometry"])
            else:
                geometry = (coords[a], coords[b])
            edges.append(
                Edge(
                    i,
                    a,
                    b,
                    float(data["length"]),
                    geometry,
                    parse_speed(data.get("maxspeed")),
                    _first_str(data.get("highway")),
                )
            )
        except (KeyError, ValueError) as exc:
            problems.append(f"edge {u}-{v} malformed: {exc!r}")
    if problems:
        raise GraphError(problems)
    return RoadGraph.build(nodes, edges)


# preprocessing


def undirect_and_merge_parallel(g):
    """Collapse every group of edges on one unordered node pair to its shortest member."""
    best = {}
    for e in g.edges:
        key = (min(e.a, e.b), max(e.a, e.b))
        cur = best.get(key)
        if cur is None or (e.length, e.edge_id) < (cur.length, cur.edge_id):
            best[key] = e
    if len(best) == len(g.edges):
        return g
    return RoadGraph.build(g.nodes, best.values())


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            lo, hi = (rx, ry) if rx < ry else (ry, rx)
            self.parent[hi] = lo


def consolidate_intersections(g, radius=10.0):
    """Merge nodes closer than ``radius`` meters (transitively) into their centroid."""
    from scipy.spatial import cKDTree

    if radius <= 0:
        raise ValueError("radius must be positive")
    if len(g.nodes) < 2:
        return g
    lon = np.array([n.lon for n in g.nodes])
    lat = np.array([n.lat for n in g.nodes])
    # local equirectangular projection to find candidate pairs, confirmed by haversine
    lat0 = math.radians(float(lat.mean()))
    xy = np.column_stack(
        [np.radians(lon) * math.cos(lat0) * EARTH_RADIUS_M, np.radians(lat) * EARTH_RADIUS_M]
    )
    scale = max(1.0, 1.0 / max(1e-6, math.cos(math.radians(float(np.abs(lat).max())))))
    tree = cKDTree(xy)
    ids = [n.node_id for n in g.nodes]
    uf = _UnionFind(ids)
    for i, j in sorted(tree.query_pairs(radius * scale * 1.01 + 1e-6)):
        if haversine(lon[i], lat[i], lon[j], lat[j]) <= radius:
            uf.union(ids[i], ids[j])
    groups = {}
    for n in g.nodes:
        groups.setdefault(uf.find(n.node_id), []).append(n)
    if all(len(members) == 1 for members in groups.values()):
        return g
    new_nodes = {}
    for root, members in groups.items():
        new_nodes[root] = Node(
            root,
            float(np.mean([m.lon for m in members])),
            float(np.mean([m.lat for m in members])),
        )
    edges = []
    for e in g.edges:
        a, b = uf.find(e.a), uf.find(e.b)
        if a == b:
            continue
        pa, pb = new_nodes[a], new_nodes[b]
        geom = ((pa.lon, pa.lat),) + tuple(e.geometry[1:-1]) + ((pb.lon, pb.lat),)
        edges.append(replace(e, a=a, b=b, geometry=geom))
    return RoadGraph.build(new_nodes.values(), edges)


def _oriented(e, start):
    """Geometry of ``e`` running away from node ``start``."""
    return e.geometry if e.a == start else tuple(reversed(e.geometry))


def reduce_interstitial(g):
    """Remove degree-2 nodes whose two edges share a road type, joining the edges.

    Repeats until no such node remains. A node is skipped when joining would
    create a self-loop.
    """
    nodes = {n.node_id: n for n in g.nodes}
    edges = {e.edge_id: e for e in g.edges}
    inc = {nid: set() for nid in nodes}
    for e in g.edges:
        inc[e.a].add(e.edge_id)
        inc[e.b].add(e.edge_id)
    changed = False
    queue = sorted(nodes)
    while queue:
        next_queue = set()
        for nid in queue:
            if nid not in nodes or len(inc[nid]) != 2:
                continue
            e1, e2 = sorted((edges[i] for i in inc[nid]), key=lambda e: e.edge_id)
            if e1.road_type != e2.road_type:
                continue
            x, y = e1.other(nid), e2.other(nid)
            if x == nid or y == nid or x == y:
                continue
            # walk x -> nid -> y
            geom = tuple(reversed(_oriented(e1, nid))) + _oriented(e2, nid)[1:]
            speed = e1.speed_limit if e1.length >= e2.length else e2.speed_limit
            merged = Edge(
                min(e1.edge_id, e2.edge_id),
                x,
                y,
                e1.length + e2.length,
                geom,
                speed,
                e1.road_type,
            )
            for old in (e1, e2):
                del edges[old.edge_id]
                inc[old.a].discard(old.edge_id)
                inc[old.b].discard(old.edge_id)
            edges[merged.edge_id] = merged
            inc[x].add(merged.edge_id)
            inc[y].add(merged.edge_id)
            del nodes[nid]
            del inc[nid]
            next_queue.update((x, y))
            changed = True
        queue = sorted(next_queue)
    if not changed:
        return g
    return RoadGraph.build(nodes.values(), edges.values())


def preprocess(g, radius=10.0, consolidate_first=False, simplify=True):
    """Full cleaning chain: undirect/merge, consolidate, reduce interstitial nodes."""
    if not simplify:
        return undirect_and_merge_parallel(g)
    if consolidate_first:
        g = consolidate_intersections(g, radius)
        g = undirect_and_merge_parallel(g)
    else:
        g = undirect_and_merge_parallel(g)
        g = consolidate_intersections(g, radius)
        g = undirect_and_merge_parallel(g)
    g = reduce_interstitial(g)
    return undirect_and_merge_parallel(g)


# line graphs


@dataclass
class LineGraph:
    """Nodes are primal edges; adjacency means a shared primal endpoint.

    ``graph_ids`` tags each node with the primal graph it came from, which
    lets several cities live in one disjoint union.
    """

    source_edges: list  # lnode index -> primal edge id
    adj: list  # lnode index -> sorted neighbor indices
    features: np.ndarray | None = None
    labels: np.ndarray | None = None  # int, -1 = absent
    graph_ids: list = field(default_factory=list)

    def __post_init__(self):
        if not self.graph_ids:
            self.graph_ids = [0] * len(self.source_edges)

    @property
    def num_nodes(self):
        return len(self.source_edges)

    def degrees(self):
        return np.array([len(a) for a in self.adj], dtype=np.int64)

    def num_edges(self):
        return int(self.degrees().sum()) // 2

    def edge_set(self):
        return {(u, w) for u, nbrs in enumerate(self.adj) for w in nbrs if u < w}

    def csr(self):
        deg = self.degrees()
        indptr = np.zeros(len(deg) + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])
        indices = np.array([w for nbrs in self.adj for w in nbrs], dtype=np.int64)
        return indptr, indices

    def labeled_mask(self):
        if self.labels is None:
            return np.zeros(self.num_nodes, dtype=bool)
        return np.asarray(self.labels) >= 0


def to_line_graph(g, graph_id=0):
    """Line graph with nodes ordered by primal edge id."""
    order = sorted(g.edges, key=lambda e: e.edge_id)
    index = {e.edge_id: i for i, e in enumerate(order)}
    nbrs = [set() for _ in order]
    for incident in g.incidence().values():
        ids = [index[e.edge_id] for e in incident]
        for i in ids:
            for j in ids:
                if i != j:
                    nbrs[i].add(j)
    return LineGraph(
        [e.edge_id for e in order],
        [sorted(s) for s in nbrs],
        graph_ids=[graph_id] * len(order),
    )


def disjoint_union(line_graphs):
    """Stack several line graphs into one block-diagonal graph."""
    source, adj, feats, labels, gids = [], [], [], [], []
    offset = 0
    for lg in line_graphs:
        source.extend(lg.source_edges)
        adj.extend([[w + offset for w in nbrs] for nbrs in lg.adj])
        gids.extend(lg.graph_ids)
        if lg.features is not None:
            feats.append(lg.features)
        labels.append(
            lg.labels if lg.labels is not None else np.full(lg.num_nodes, -1, dtype=np.int64)
        )
        offset += lg.num_nodes
    features = np.vstack(feats) if feats and len(feats) == len(line_graphs) else None
    return LineGraph(
        source,
        adj,
        features,
        np.concatenate(labels).astype(np.int64) if labels else None,
        gids,
    )


LINE_GRAPH_SCHEMA = 1


def line_graph_to_dict(lg):
    return {
        "schema": LINE_GRAPH_SCHEMA,
        "lnodes": [
            {"id": i, "edge": int(e), "graph": int(gid)}
            for i, (e, gid) in enumerate(zip(lg.source_edges, lg.graph_ids))
        ],
        "adj": [list(map(int, a)) for a in lg.adj],
        "features": None if lg.features is None else np.asarray(lg.features).tolist(),
        "labels": None if lg.labels is None else [int(x) if x >= 0 else None for x in lg.labels],
    }


def line_graph_from_dict(payload):
    lnodes = payload["lnodes"]
    feats = payload.get("features")
    labels = payload.get("labels")
    return LineGraph(
        [int(n["edge"]) for n in lnodes],
        [list(map(int, a)) for a in payload["adj"]],
        None if feats is None else np.array(feats, dtype=np.float64).reshape(len(lnodes), -1),
        None if labels is None else np.array([-1 if x is None else int(x) for x in labels], dtype=np.int64),
        [int(n.get("graph", 0)) for n in lnodes],
    )


def save_line_graph(lg, path):
    # repr-exact floats keep the round trip lossless
    Path(path).write_text(json.dumps(line_graph_to_dict(lg)), encoding="utf-8")


def load_line_graph(path):
    return line_graph_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# splits


@dataclass(frozen=True)
class NodeSplit:
    """Disjoint train/validation/test partition of node indices or graph ids."""

    train: tuple
    val: tuple
    test: tuple
    by_graph: bool = False

    def __post_init__(self):
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError("split sets overlap")

    def to_dict(self):
        return {
            "by_graph": self.by_graph,
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["train"]), tuple(d["val"]), tuple(d["test"]), bool(d.get("by_graph", False)))

    def node_sets(self, lg):
        """Resolve to node-index arrays (expands graph ids when split by graph)."""
        if not self.by_graph:
            return tuple(np.array(sorted(s), dtype=np.int64) for s in (self.train, self.val, self.test))
        gids = np.asarray(lg.graph_ids)
        return tuple(np.flatnonzero(np.isin(gids, list(s))) for s in (self.train, self.val, self.test))


def split_nodes(n, val_count, test_count, seed=0):
    """Seeded transductive split of ``n`` nodes into train/val/test."""
    if val_count + test_count >= n and n > 0:
        raise ValueError(f"cannot hold out {val_count}+{test_count} of {n} nodes")
    rng = np.random.Generator(np.random.Philox(seed))
    perm = rng.permutation(n)
    val = sorted(perm[:val_count].tolist())
    test = sorted(perm[val_count : val_count + test_count].tolist())
    train = sorted(perm[val_count + test_count :].tolist())
    return NodeSplit(tuple(train), tuple(val), tuple(test))


def split_graphs(graph_ids, val_count=2, test_count=2, seed=0):
    """Seeded inductive split holding out whole graphs."""
    ids = sorted(graph_ids)
    if val_count + test_count >= len(ids):
        raise ValueError(f"cannot hold out {val_count}+{test_count} of {len(ids)} graphs")
    rng = np.random.Generator(np.random.Philox(seed))
    perm = [ids[i] for i in rng.permutation(len(ids))]
    return NodeSplit(
        tuple(sorted(perm[val_count + test_count :])),
        tuple(sorted(perm[:val_count])),
        tuple(sorted(perm[val_count : val_count + test_count])),
        by_graph=True,
    )
