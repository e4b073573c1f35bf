"""Artifact plumbing: raw graph files in, a prepared dataset directory out.

Layout of a prepared directory::

    manifest.json        task, seed, inputs, settings and artifact paths
    graphs/g<k>.json     preprocessed primal graphs, one per city
    line_graph.json      line graph with features and labels
    feature_spec.json    speed vocabulary and optional z-score statistics
    split.json           train/val/test node indices or graph ids
    neighborhoods.json   random-walk topological neighborhoods
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import features as F
from . import graph as G
from .sampling import NeighborhoodTable, WalkConfig, build_topological_neighborhood

MANIFEST_SCHEMA = 1
TRANSDUCTIVE_VAL = 500
TRANSDUCTIVE_TEST = 1000


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineManifest:
    task: str
    seed: int
    inputs: list
    graphs: list = field(default_factory=list)
    line_graph: str = "line_graph.json"
    feature_spec: str = "feature_spec.json"
    split: str = "split.json"
    neighborhoods: str = "neighborhoods.json"
    radius: float = 10.0
    standardize: bool = False
    walks: dict = field(default_factory=dict)
    schema: int = MANIFEST_SCHEMA

    def save(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise PipelineError(f"missing manifest: {path}")
        d = json.loads(path.read_text(encoding="utf-8"))
        if d.get("schema") != MANIFEST_SCHEMA:
            raise PipelineError(f"unsupported manifest schema {d.get('schema')}")
        return cls(**d)

    def artifact_paths(self, root):
        root = Path(root)
        names = [*self.graphs, self.line_graph, self.feature_spec, self.split, self.neighborhoods]
        return [root / n for n in names]


def transductive_holdout(n):
    """Validation and test sizes: 500/1000 on full-size graphs, 1/6 and 1/3 of small ones."""
    return min(TRANSDUCTIVE_VAL, round(n / 6)), min(TRANSDUCTIVE_TEST, round(n / 3))


def expand_inputs(paths):
    """Graph file paths; a ``.json`` file with a ``graphs`` list is read as a city manifest."""
    out = []
    for p in map(Path, paths):
        if p.suffix == ".json" and p.is_file():
            try:
                payload = json.loads(p.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise PipelineError(f"cannot parse {p}: {exc}") from exc
            if isinstance(payload, dict) and "graphs" in payload and "nodes" not in payload:
                out.extend(str((p.parent / q) if not Path(q).is_absolute() else Path(q)) for q in payload["graphs"])
                continue
        out.append(str(p))
    return out


def prepare(
    inputs,
    out_dir,
    task="transductive",
    seed=0,
    radius=10.0,
    walk_config=None,
    standardize=False,
    label_map=None,
    holdout=None,
    graph_holdout=(2, 2),
):
    """Run the whole preparation chain and write the dataset directory."""
    if task not in ("transductive", "inductive"):
        raise PipelineError(f"task must be transductive or inductive, got {task!r}")
    paths = expand_inputs(inputs)
    if not paths:
        raise PipelineError("no input graphs")
    if task == "transductive" and len(paths) != 1:
        raise PipelineError(f"transductive task takes exactly one graph, got {len(paths)}")
    out = Path(out_dir)
    (out / "graphs").mkdir(parents=True, exist_ok=True)
    label_map = label_map or F.LabelMap.default()
    walk_config = walk_config or WalkConfig(seed=seed)

    primal, parts = [], []
    for gid, path in enumerate(paths):
        g = G.preprocess(G.load_graph(path), radius)
        problems = g.violations(strict=True)
        if problems:
            raise G.GraphError(problems)
        lg = G.to_line_graph(g, graph_id=gid)
        F.map_labels(lg, g, label_map)
        primal.append(g)
        parts.append(lg)
    lg = G.disjoint_union(parts)

    if task == "transductive":
        val_n, test_n = holdout or transductive_holdout(lg.num_nodes)
        split = G.split_nodes(lg.num_nodes, val_n, test_n, seed)
        train_nodes = split.train
    else:
        split = G.split_graphs(range(len(paths)), *graph_holdout, seed=seed)
        train_nodes = np.flatnonzero(np.isin(lg.graph_ids, split.train))

    # the speed vocabulary comes from training segments only
    edge_of = [(gid, eid) for gid, eid in zip(lg.graph_ids, lg.source_edges)]
    by_key = {(gid, e.edge_id): e for gid, g in enumerate(primal) for e in g.edges}
    spec = F.build_feature_spec([by_key[edge_of[i]] for i in train_nodes])
    lg.features = np.vstack([F.featurize(p, g, spec).features for p, g in zip(parts, primal)])
    if standardize:
        spec = F.fit_standardizer(spec, lg.features[np.asarray(train_nodes, dtype=np.int64)])
        lg.features = np.vstack([F.featurize(p, g, spec).features for p, g in zip(parts, primal)])

    table = build_topological_neighborhood(lg, walk_config)

    manifest = PipelineManifest(
        task=task,
        seed=seed,
        inputs=paths,
        radius=radius,
        standardize=standardize,
        walks=asdict(walk_config),
    )
    for gid, g in enumerate(primal):
        name = f"graphs/g{gid}.json"
        G.save_graph(g, out / name)
        manifest.graphs.append(name)
    G.save_line_graph(lg, out / manifest.line_graph)
    spec.save(out / manifest.feature_spec)
    (out / manifest.split).write_text(json.dumps(split.to_dict()), encoding="utf-8")
    table.save(out / manifest.neighborhoods)
    manifest.save(out / "manifest.json")
    return manifest


def load_dataset(data_dir):
    """Dataset for training from a prepared directory; fails fast on missing artifacts."""
    from .training import Dataset

    root = Path(data_dir)
    manifest = PipelineManifest.load(root / "manifest.json")
    missing = [str(p) for p in manifest.artifact_paths(root) if not p.is_file()]
    if missing:
        raise PipelineError(f"missing artifacts: {', '.join(missing)}")
    lg = G.load_line_graph(root / manifest.line_graph)
    split = G.NodeSplit.from_dict(json.loads((root / manifest.split).read_text(encoding="utf-8")))
    table = NeighborhoodTable.load(root / manifest.neighborhoods)
    if lg.features is None or lg.labels is None:
        raise PipelineError("line graph has no features or labels")
    return Dataset(lg, split, table)


def synthetic_dataset(size=300, seed=0, standardize=True, walk_config=None, holdout=None):
    """In-memory dataset on the planted-label graph, same chain as ``prepare``."""
    from .synth import planted_label_graph
    from .training import Dataset

    g = planted_label_graph(size, seed=seed)
    lg = G.to_line_graph(g)
    F.map_labels(lg, g)
    split = G.split_nodes(lg.num_nodes, *(holdout or transductive_holdout(lg.num_nodes)), seed=seed)
    by_id = {e.edge_id: e for e in g.edges}
    spec = F.build_feature_spec([by_id[lg.source_edges[i]] for i in split.train])
    F.featurize(lg, g, spec)
    if standardize:
        spec = F.fit_standardizer(spec, lg.features[list(split.train)])
        F.featurize(lg, g, spec)
    table = build_topological_neighborhood(lg, walk_config or WalkConfig(seed=seed))
    return Dataset(lg, split, table)
