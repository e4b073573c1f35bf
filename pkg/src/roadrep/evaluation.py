"""Micro-F1, linear-probe evaluation, and the random / raw-feature baselines."""

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import NUM_CLASSES
from .sampling import philox


def _check(pred, truth):
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty prediction set")
    return pred, truth


def micro_f1(pred, truth):
    """Micro-averaged F1; for single-label multiclass this is plain accuracy."""
    pred, truth = _check(pred, truth)
    return float(np.count_nonzero(pred == truth)) / pred.size


def confusion_matrix(pred, truth, num_classes=NUM_CLASSES):
    """Rows are true classes, columns predictions."""
    pred, truth = _check(pred, truth)
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def per_class_scores(cm):
    tp = np.diag(cm).astype(np.float64)
    pred_tot = cm.sum(axis=0)
    true_tot = cm.sum(axis=1)
    precision = np.divide(tp, pred_tot, out=np.zeros_like(tp), where=pred_tot > 0)
    recall = np.divide(tp, true_tot, out=np.zeros_like(tp), where=true_tot > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


@dataclass
class MetricsReport:
    micro_f1: float
    precision: list
    recall: list
    f1: list
    confusion: list
    runs: int = 1
    mean: float = 0.0
    std: float = 0.0
    scores: list = field(default_factory=list)

    @classmethod
    def from_predictions(cls, pred, truth, num_classes=NUM_CLASSES):
        cm = confusion_matrix(pred, truth, num_classes)
        p, r, f = per_class_scores(cm)
        score = micro_f1(pred, truth)
        return cls(score, p.tolist(), r.tolist(), f.tolist(), cm.tolist(), 1, score, 0.0, [score])

    def to_dict(self):
        return asdict(self)


class LogisticProbe:
    """Multinomial logistic regression trained by minibatch Adam.

    Inputs are z-scored with training statistics. A small l2 penalty keeps the
    optimum unique so repeated runs agree.
    """

    def __init__(self, num_classes=NUM_CLASSES, epochs=100, batch_size=64, lr=0.05, l2=1e-4):
        self.num_classes = num_classes
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.l2 = l2

    def fit(self, X, y, seed=0):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(np.unique(y)) < 2:
            raise ValueError("training labels contain a single class")
        rng = philox(seed)
        self.mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        self.sd = sd
        Xs = (X - self.mu) / self.sd
        n, d = Xs.shape
        k = self.num_classes
        bound = np.sqrt(6.0 / (d + k))
        params = [rng.uniform(-bound, bound, (d, k)), np.zeros(k)]
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        onehot = np.eye(k)[y]
        t = 0
        for _ in range(self.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = perm[start : start + self.batch_size]
                W, b = params
                z = Xs[idx] @ W + b
                z -= z.max(axis=1, keepdims=True)
                p = np.exp(z)
                p /= p.sum(axis=1, keepdims=True)
                diff = (p - onehot[idx]) / len(idx)
                grads = [Xs[idx].T @ diff + self.l2 * W, diff.sum(axis=0)]
                t += 1
                for j, g in enumerate(grads):
                    m[j] = 0.9 * m[j] + 0.1 * g
                    v[j] = 0.999 * v[j] + 0.001 * g * g
                    params[j] = params[j] - self.lr * (m[j] / (1 - 0.9**t)) / (
                        np.sqrt(v[j] / (1 - 0.999**t)) + 1e-8
                    )
        self.W, self.b = params
        return self

    def predict(self, X):
        Xs = (np.asarray(X, dtype=np.float64) - self.mu) / self.sd
        return np.argmax(Xs @ self.W + self.b, axis=1)


def downstream_classify(embeddings, labels, train_idx, eval_idx, runs=1000, seed=0, probe=None):
    """Mean micro-F1 of ``runs`` independently seeded probes.

    Each run uses a fresh seed for both weight initialization and minibatch
    order. Per-class scores and the confusion matrix come from the first run.
    Unlabeled nodes (label < 0) are dropped from both sides.
    """
    labels = np.asarray(labels)
    train_idx = np.asarray(train_idx)[labels[train_idx] >= 0]
    eval_idx = np.asarray(eval_idx)[labels[eval_idx] >= 0]
    probe = probe or LogisticProbe()
    X = np.asarray(embeddings)
    scores = []
    first = None
    for r in range(runs):
        pred = probe.fit(X[train_idx], labels[train_idx], seed=seed * 100_003 + r).predict(X[eval_idx])
        scores.append(micro_f1(pred, labels[eval_idx]))
        if first is None:
            first = pred
    report = MetricsReport.from_predictions(first, labels[eval_idx], probe.num_classes)
    report.runs = runs
    report.mean = float(np.mean(scores))
    report.std = float(np.std(scores))
    report.micro_f1 = report.mean
    report.scores = scores
    return report


def raw_feature_baseline(lg, train_idx, eval_idx, runs=1000, seed=0, probe=None):
    return downstream_classify(lg.features, lg.labels, train_idx, eval_idx, runs, seed, probe)


def random_baseline(truth, num_classes=NUM_CLASSES, seed=0):
    """Micro-F1 of uniformly random predictions."""
    truth = np.asarray(truth)
    pred = philox(seed).integers(num_classes, size=truth.shape)
    return micro_f1(pred, truth)


TABLE_NAMES = {
    "gcn": "GCN",
    "sage-mean": "GSAGE-MEAN",
    "sage-meanpool": "GSAGE-MEANPOOL",
    "sage-maxpool": "GSAGE-MAXPOOL",
    "sage-lstm": "GSAGE-LSTM",
    "gat": "GAT",
    "gin": "GIN",
    "gain": "GAIN",
    "gain-mh": "GAIN-MH",
}


def results_table(random_f1, raw_f1, approaches):
    """Rows of (approach, unsup, sup) in the usual results layout.

    ``approaches`` maps aggregator key -> {"unsupervised": f1, "supervised": f1}
    with either entry optional.
    """
    rows = [("Random Baseline", random_f1, random_f1), ("Raw Features", raw_f1, raw_f1)]
    best = {"unsupervised": None, "supervised": None}
    for key in sorted(approaches, key=lambda k: list(TABLE_NAMES).index(k) if k in TABLE_NAMES else 99):
        res = approaches[key]
        rows.append((TABLE_NAMES.get(key, key), res.get("unsupervised"), res.get("supervised")))
        for mode in best:
            val = res.get(mode)
            if val is not None and (best[mode] is None or val > best[mode]):
                best[mode] = val
    gain = tuple(
        None if best[m] is None or not raw_f1 else 100.0 * (best[m] - raw_f1) / raw_f1
        for m in ("unsupervised", "supervised")
    )
    rows.append(("%gain over Baseline",) + gain)
    return rows


def format_table(rows):
    def cell(v, pct=False):
        if v is None:
            return "-"
        return f"{v:.0f}%" if pct else f"{v:.2f}"

    lines = [f"{'Approach':<22}{'Unsup.':>8}{'Sup.':>8}"]
    for name, u, s in rows:
        pct = name.startswith("%")
        lines.append(f"{name:<22}{cell(u, pct):>8}{cell(s, pct):>8}")
    return "\n".join(lines)


def table_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["approach", "unsupervised", "supervised"])
    for name, u, s in rows:
        w.writerow([name, "" if u is None else f"{u:.6f}", "" if s is None else f"{s:.6f}"])
    return buf.getvalue()
