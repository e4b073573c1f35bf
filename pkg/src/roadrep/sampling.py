"""Random-walk topological neighborhoods, fanout sampling, and negative sampling.

All randomness uses numpy's counter-based Philox bit generator. A per-node
stream is keyed by ``SeedSequence([seed, node])`` so tables do not depend on
the order in which nodes are processed.

Draw order for one node ``v`` with degree ``d``, all walks advanced together
so other implementations can replicate the stream: ``integers(d, (N_w, L_l))``
for the local samples (row = walk), ``integers(d, N_w)`` for the first global
step, then ``random(N_w)`` per global iteration, mapped to
``floor(r * deg(u))``. Finally the local-then-global multiset is shuffled with
``permutation``.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def philox(*key):
    """Generator keyed by integers, e.g. ``philox(seed, node_id)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


@dataclass(frozen=True)
class WalkConfig:
    num_walks: int = 50
    local_len: int = 5
    global_len: int | None = None  # defaults to 2 * local_len
    seed: int = 0

    def __post_init__(self):
        if self.num_walks < 1 or self.local_len < 1:
            raise ValueError("num_walks and local_len must be >= 1")
        if self.global_len is None:
            object.__setattr__(self, "global_len", 2 * self.local_len)
        if self.global_len < 1:
            raise ValueError("global_len must be >= 1")


@dataclass
class NeighborhoodTable:
    local: list  # node -> np.ndarray of local walk neighbors (multiset)
    global_: list  # node -> np.ndarray of global walk endpoints (multiset)
    topo: list  # node -> shuffled union of both
    config: WalkConfig

    @property
    def isolated(self):
        return [v for v, t in enumerate(self.topo) if len(t) == 0]

    def to_dict(self):
        c = self.config
        return {
            "config": {
                "num_walks": c.num_walks,
                "local_len": c.local_len,
                "global_len": c.global_len,
                "seed": c.seed,
            },
            "local": [a.tolist() for a in self.local],
            "global": [a.tolist() for a in self.global_],
            "topo": [a.tolist() for a in self.topo],
        }

    @classmethod
    def from_dict(cls, d):
        as_arr = lambda rows: [np.array(r, dtype=np.int64) for r in rows]  # noqa: E731
        return cls(as_arr(d["local"]), as_arr(d["global"]), as_arr(d["topo"]), WalkConfig(**d["config"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _walks_for_node(v, indptr, indices, cfg):
    rng = philox(cfg.seed, v)
    deg_v = indptr[v + 1] - indptr[v]
    if deg_v == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    nbrs_v = indices[indptr[v] : indptr[v + 1]]
    local = nbrs_v[rng.integers(deg_v, size=(cfg.num_walks, cfg.local_len))].ravel()
    local = local[local != v]
    u1 = np.full(cfg.num_walks, v, dtype=np.int64)
    u2 = nbrs_v[rng.integers(deg_v, size=cfg.num_walks)]
    for _ in range(cfg.global_len):
        u0 = u1  # noqa: F841  previous position, kept to mirror the walk bookkeeping
        u1 = u2
        # u1 was reached over an edge, so it has at least one neighbor
        deg = indptr[u1 + 1] - indptr[u1]
        u2 = indices[indptr[u1] + np.floor(rng.random(cfg.num_walks) * deg).astype(np.int64)]
    global_ = u1[u1 != v]
    topo = rng.permutation(np.concatenate([local, global_]))
    return local, global_, topo


def build_topological_neighborhood(lg, cfg):
    """Local and global random-walk neighbors for every node.

    Isolated nodes get empty entries and are listed in ``table.isolated``.
    """
    if lg.num_nodes == 0:
        raise ValueError("line graph has no nodes")
    indptr, indices = lg.csr()
    local, global_, topo = [], [], []
    for v in range(lg.num_nodes):
        a, b, c = _walks_for_node(v, indptr, indices, cfg)
        local.append(a)
        global_.append(b)
        topo.append(c)
    return NeighborhoodTable(local, global_, topo, cfg)


@dataclass(frozen=True)
class FanoutPlan:
    hop1: int = 9
    hop2: int = 3

    def __post_init__(self):
        if self.hop1 < 1 or self.hop2 < 1:
            raise ValueError("fanouts must be >= 1")


def sample_neighbors(indptr, indices, nodes, size, rng):
    """Uniform with-replacement draws from each node's adjacency.

    Returns a ``(len(nodes), size)`` index array; a node without neighbors is
    repeated in place of its samples.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    deg = indptr[nodes + 1] - indptr[nodes]
    r = rng.random((len(nodes), size))
    out = np.repeat(nodes[:, None], size, axis=1)
    has = deg > 0
    if has.any():
        offs = np.floor(r[has] * deg[has][:, None]).astype(np.int64)
        out[has] = indices[indptr[nodes[has]][:, None] + offs]
    return out


def sample_fanout(lg, batch, plan, seed=0, rng=None, csr=None):
    """Two-hop neighbor samples: ``(B, hop1)`` and ``(B * hop1, hop2)`` index arrays."""
    rng = rng if rng is not None else philox(seed)
    indptr, indices = csr if csr is not None else lg.csr()
    hop1 = sample_neighbors(indptr, indices, batch, plan.hop1, rng)
    hop2 = sample_neighbors(indptr, indices, hop1.ravel(), plan.hop2, rng)
    return hop1, hop2


class NegativeSampler:
    """Draws from a degree**power unigram distribution, excluding a node and its neighborhood."""

    def __init__(self, lg, power=0.75, uniform=False):
        deg = lg.degrees().astype(np.float64)
        w = np.ones_like(deg) if uniform else deg**power
        if uniform:
            w[deg == 0] = 0.0
        self.weights = w
        total = w.sum()
        self.cdf = np.cumsum(w) / total if total > 0 else None

    def probabilities(self, exclude=()):
        w = self.weights.copy()
        w[list(exclude)] = 0.0
        s = w.sum()
        if s <= 0:
            raise ValueError("negative sampling support is empty after exclusions")
        return w / s

    def sample(self, v, count, table=None, seed=0, rng=None):
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = rng if rng is not None else philox(seed, v)
        excluded = {int(v)}
        if table is not None:
            excluded.update(int(u) for u in table.topo[v])
        excl = np.fromiter(excluded, dtype=np.int64)
        if self.cdf is None or self.weights.sum() - self.weights[excl].sum() <= 0:
            raise ValueError(f"no negative candidates for node {v}")
        accept = 1.0 - self.weights[excl].sum() / self.weights.sum()
        if accept < 0.05:
            return rng.choice(len(self.weights), size=count, p=self.probabilities(excl))
        # rejection sampling keeps the conditional distribution exact
        out = np.empty(0, dtype=np.int64)
        while len(out) < count:
            n = int((count - len(out)) / accept * 1.2) + 4
            draws = np.searchsorted(self.cdf, rng.random(n), side="right")
            draws = np.minimum(draws, len(self.cdf) - 1)
            draws = draws[~np.isin(draws, excl)]
            out = np.concatenate([out, draws])
        return out[:count]


def sample_negatives(lg, v, count, table=None, seed=0, power=0.75, uniform=False):
    return NegativeSampler(lg, power, uniform).sample(v, count, table, seed)


def bfs_distances(lg, source):
    dist = np.full(lg.num_nodes, -1, dtype=np.int64)
    dist[source] = 0
    frontier = [source]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for w in lg.adj[u]:
                if dist[w] < 0:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return dist
