"""Raw feature vectors and merged road-type labels for line-graph nodes."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NUM_CLASSES = 5
GEOMETRY_POINTS = 20

# raw OSM highway tag -> merged class index
DEFAULT_LABEL_MAP = {
    **dict.fromkeys(
        [
            "highway",
            "yes",
            "primary",
            "secondary",
            "motorway-link",
            "trunk-link",
            "primary-link",
            "secondary-link",
        ],
        0,
    ),
    **dict.fromkeys(["tertiary", "tertiary-link"], 1),
    **dict.fromkeys(["road", "planned", "unclassified"], 2),
    "residential": 3,
    "living-street": 4,
}

CLASS_NAMES = ("major", "tertiary", "minor", "residential", "living-street")


def normalize_tag(tag):
    return str(tag).strip().lower().replace("_", "-")


@dataclass(frozen=True)
class LabelMap:
    table: dict

    @classmethod
    def default(cls):
        return cls(dict(DEFAULT_LABEL_MAP))

    @classmethod
    def from_file(cls, path):
        raw = json.loads(Path(path).read_text())
        table = {normalize_tag(k): int(v) for k, v in raw.items()}
        bad = {k: v for k, v in table.items() if not 0 <= v < NUM_CLASSES}
        if bad:
            raise ValueError(f"label map classes out of range: {bad}")
        return cls(table)

    def lookup(self, road_type):
        """Class index, or -1 when the tag is absent or not listed."""
        if road_type is None:
            return -1
        return self.table.get(normalize_tag(road_type), -1)


@dataclass(frozen=True)
class FeatureSpec:
    speed_vocab: tuple
    geometry_points: int = GEOMETRY_POINTS
    standardize: bool = False
    mean: tuple | None = None
    std: tuple | None = None

    @property
    def total_dim(self):
        return 1 + 2 + 2 * self.geometry_points + len(self.speed_vocab)

    def to_dict(self):
        return {
            "speed_vocab": list(self.speed_vocab),
            "geometry_points": self.geometry_points,
            "total_dim": self.total_dim,
            "standardize": self.standardize,
            "mean": None if self.mean is None else list(self.mean),
            "std": None if self.std is None else list(self.std),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple(d["speed_vocab"]),
            int(d.get("geometry_points", GEOMETRY_POINTS)),
            bool(d.get("standardize", False)),
            None if d.get("mean") is None else tuple(d["mean"]),
            None if d.get("std") is None else tuple(d["std"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_feature_spec(edges, geometry_points=GEOMETRY_POINTS):
    """Speed vocabulary (sorted distinct limits) from training edges only."""
    vocab = sorted({e.speed_limit for e in edges if e.speed_limit is not None})
    return FeatureSpec(tuple(vocab), geometry_points)


def resample_geometry(polyline, k):
    """``k`` points at equal arc-length fractions along ``polyline``."""
    pts = np.asarray(polyline, dtype=np.float64)
    if len(pts) < 2 or k < 2:
        raise ValueError("need at least 2 polyline points and k >= 2")
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return np.repeat(pts[:1], k, axis=0)
    targets = total * np.arange(k) / (k - 1)
    out = np.column_stack([np.interp(targets, cum, pts[:, 0]), np.interp(targets, cum, pts[:, 1])])
    out[0], out[-1] = pts[0], pts[-1]
    return out


def edge_features(edge, g, spec):
    na, nb = g.node(edge.a), g.node(edge.b)
    mid = np.array([(na.lon + nb.lon) / 2.0, (na.lat + nb.lat) / 2.0])
    offsets = resample_geometry(edge.geometry, spec.geometry_points) - mid
    onehot = np.zeros(len(spec.speed_vocab))
    if edge.speed_limit in spec.speed_vocab:
        onehot[spec.speed_vocab.index(edge.speed_limit)] = 1.0
    return np.concatenate([[edge.length], mid, offsets.ravel(), onehot])


def featurize(lg, g, spec):
    """Attach the raw feature matrix; layout is
    [length, mid_lon, mid_lat, (dlon_i, dlat_i) for each resampled point, speed one-hot]."""
    by_id = {e.edge_id: e for e in g.edges}
    X = np.zeros((lg.num_nodes, spec.total_dim))
    for i, eid in enumerate(lg.source_edges):
        X[i] = edge_features(by_id[eid], g, spec)
    if spec.standardize and spec.mean is not None:
        X = (X - np.asarray(spec.mean)) / np.asarray(spec.std)
    lg.features = X
    return lg


def fit_standardizer(spec, X_train):
    """Spec with z-score statistics from training rows (constant columns keep std 1)."""
    mu = X_train.mean(axis=0)
    sd = X_train.std(axis=0)
    sd[sd == 0] = 1.0
    return FeatureSpec(spec.speed_vocab, spec.geometry_points, True, tuple(mu), tuple(sd))


def reconstruct_geometry(feature_row, spec):
    """Invert the geometry block: offsets plus midpoint."""
    mid = feature_row[1:3]
    offsets = feature_row[3 : 3 + 2 * spec.geometry_points].reshape(-1, 2)
    return offsets + mid


def map_labels(lg, g, label_map=None):
    label_map = label_map or LabelMap.default()
    by_id = {e.edge_id: e for e in g.edges}
    lg.labels = np.array([label_map.lookup(by_id[eid].road_type) for eid in lg.source_edges], dtype=np.int64)
    return lg


def class_histogram(lg, num_classes=NUM_CLASSES):
    if lg.labels is None:
        return np.zeros(num_classes, dtype=np.int64)
    labels = np.asarray(lg.labels)
    return np.bincount(labels[labels >= 0], minlength=num_classes).astype(np.int64)
