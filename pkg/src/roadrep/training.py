"""Supervised and unsupervised training loops and the grid-search protocol."""

import csv
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import tensor as T
from .aggregators import AGGREGATOR_KEYS, Encoder
from .evaluation import LogisticProbe, MetricsReport, downstream_classify, micro_f1
from .features import NUM_CLASSES
from .sampling import FanoutPlan, NegativeSampler, philox

log = logging.getLogger(__name__)

CONFIG_SCHEMA = 1
LOG_FLOOR = math.log(1e-12)

UNSUP_LRS = (2e-8, 2e-7, 2e-6, 2e-5)
SUP_LRS = (1e-4, 1e-3, 1e-2)
DIMS = (64, 128, 256)


class TrainingError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    mode: str = "supervised"
    task: str = "transductive"
    aggregator: str = "gain"
    lr: float = 1e-3
    dim: int = 64
    epochs: int | None = None  # 1000 unsupervised, 500 supervised
    batch_size: int | None = None  # 1024 transductive, 2048 inductive
    dropout: float = 0.1
    negatives: int = 12
    fanout1: int = 9
    fanout2: int = 3
    eps_init: float = 0.0
    eps_learnable: bool = False
    sigma: str = "identity"
    heads: int = 1
    neg_power: float = 0.75
    neg_uniform: bool = False
    val_every: int = 10
    val_probe_runs: int = 5
    probe_runs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("supervised", "unsupervised"):
            raise ConfigError(f"mode must be 'supervised' or 'unsupervised', got {self.mode!r}")
        if self.task not in ("transductive", "inductive"):
            raise ConfigError(f"task must be 'transductive' or 'inductive', got {self.task!r}")
        if self.aggregator not in AGGREGATOR_KEYS:
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")
        if self.epochs is None:
            self.epochs = 1000 if self.mode == "unsupervised" else 500
        if self.batch_size is None:
            self.batch_size = 1024 if self.task == "transductive" else 2048
        if self.lr < 0 or self.dim < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("lr must be >= 0; dim, epochs and batch_size must be >= 1")

    @property
    def fanouts(self):
        return FanoutPlan(self.fanout1, self.fanout2)

    def to_dict(self):
        return {"schema": CONFIG_SCHEMA, **asdict(self)}

    @classmethod
    def from_dict(cls, d, required=("mode", "task", "aggregator")):
        for key in required:
            if key not in d:
                raise ConfigError(f"missing config key: {key}")
        schema = d.get("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ConfigError(f"unsupported config schema {schema}")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"schema", "data", "run_dir", "workers"}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class Dataset:
    """Featurized line graph, split, and neighborhood table.

    ``test_nodes()`` is the only way to reach the test set and counts reads.
    """

    lg: object
    split: object
    table: object = None

    def __post_init__(self):
        self.train_nodes, self.val_nodes, self._test_nodes = self.split.node_sets(self.lg)
        self.csr = self.lg.csr()
        self.test_reads = 0

    def test_nodes(self):
        self.test_reads += 1
        return self._test_nodes

    @property
    def labels(self):
        return self.lg.labels

    @property
    def features(self):
        return self.lg.features


@dataclass
class RunResult:
    config: TrainConfig
    loss_curve: list = field(default_factory=list)  # (epoch, mean train loss)
    val_history: list = field(default_factory=list)  # (epoch, val micro-F1)
    best_epoch: int = 0
    best_val_f1: float = -1.0
    best_state: dict = field(default_factory=dict)
    test_f1: float | None = None
    test_report: MetricsReport | None = None
    clamp_count: int = 0
    run_dir: str | None = None

    def summary(self):
        return {
            "aggregator": self.config.aggregator,
            "mode": self.config.mode,
            "task": self.config.task,
            "lr": self.config.lr,
            "dim": self.config.dim,
            "best_epoch": self.best_epoch,
            "val_micro_f1": self.best_val_f1,
            "test_micro_f1": self.test_f1,
            "clamp_count": self.clamp_count,
        }


# losses


def unsup_loss(z_v, z_pos, z_negs):
    """Skip-gram style loss averaged over the batch.

    ``z_v`` and ``z_pos`` are (B, d); ``z_negs`` is (B, K, d). The expectation
    over negatives is the sample mean. Returns (loss, number of clamped terms).
    """
    B, d = z_v.shape
    pos = T.sum(z_v * z_pos, axis=1)
    neg = T.sum(T.reshape(z_v, (B, 1, d)) * z_negs, axis=2)
    lp = T.log_sigmoid(pos)
    ln = T.log_sigmoid(-neg)
    clamped = int(np.count_nonzero(lp.data < LOG_FLOOR) + np.count_nonzero(ln.data < LOG_FLOOR))
    lp, ln = T.clamp_min(lp, LOG_FLOOR), T.clamp_min(ln, LOG_FLOOR)
    per_node = -lp - T.mean(ln, axis=1)
    return T.mean(per_node), clamped


def sup_loss(logits, labels):
    """Mean cross-entropy over labeled rows (label >= 0)."""
    labels = np.asarray(labels)
    keep = np.flatnonzero(labels >= 0)
    if len(keep) == 0:
        raise TrainingError("batch contains no labeled nodes")
    if len(keep) != len(labels):
        logits = T.take(logits, keep, axis=0)
    return T.cross_entropy(logits, labels[keep])


# training


def make_encoder(cfg, in_dim):
    return Encoder(
        cfg.aggregator,
        in_dim,
        cfg.dim,
        cfg.fanouts,
        cfg.dropout,
        cfg.seed,
        num_classes=NUM_CLASSES if cfg.mode == "supervised" else None,
        heads=cfg.heads,
        eps_init=cfg.eps_init,
        eps_learnable=cfg.eps_learnable,
        sigma=cfg.sigma,
    )


def embed(enc, data, nodes, seed, chunk=2048):
    """Inference-mode embeddings for ``nodes`` with a fixed sampling stream."""
    rng = philox(seed, 0x1EF)
    out = []
    for start in range(0, len(nodes), chunk):
        out.append(enc.encode(nodes[start : start + chunk], data.features, data.csr, rng).data)
    return np.vstack(out) if out else np.zeros((0, enc.dim))


def predict(enc, data, nodes, seed):
    z = T.Tensor(embed(enc, data, nodes, seed))
    return np.argmax(enc.logits(z).data, axis=1)


def _unsup_batch(enc, data, batch, sampler, cfg, rng):
    table = data.table
    pos = np.array([table.topo[v][rng.integers(len(table.topo[v]))] for v in batch], dtype=np.int64)
    for v, u in zip(batch, pos):
        if u not in table.topo[v]:
            raise AssertionError(f"positive {u} not in topological neighborhood of {v}")
    negs = np.stack([sampler.sample(v, cfg.negatives, table, rng=rng) for v in batch])
    uniq, inv = np.unique(np.concatenate([batch, pos, negs.ravel()]), return_inverse=True)
    z = enc.encode(uniq, data.features, data.csr, rng, train=True)
    B, K = len(batch), cfg.negatives
    z_v = T.take(z, inv[:B], axis=0)
    z_p = T.take(z, inv[B : 2 * B], axis=0)
    z_n = T.reshape(T.take(z, inv[2 * B :], axis=0), (B, K, enc.dim))
    return unsup_loss(z_v, z_p, z_n)


def _validate(enc, data, cfg):
    if cfg.mode == "supervised":
        val = data.val_nodes[data.labels[data.val_nodes] >= 0]
        if len(val) == 0:
            return float("nan")
        return micro_f1(predict(enc, data, val, cfg.seed), data.labels[val])
    return _probe(enc, data, data.val_nodes, cfg, cfg.val_probe_runs).mean


def _probe(enc, data, eval_nodes, cfg, runs):
    nodes = np.concatenate([data.train_nodes, eval_nodes])
    Z = embed(enc, data, nodes, cfg.seed)
    full = np.zeros((data.lg.num_nodes, enc.dim))
    full[nodes] = Z
    return downstream_classify(full, data.labels, data.train_nodes, eval_nodes, runs, cfg.seed, LogisticProbe())


def train(cfg, data, run_dir=None, evaluate_test=True):
    """Train one model; keeps the parameters with the best validation micro-F1."""
    rng = philox(cfg.seed, 0x7A1)
    enc = make_encoder(cfg, data.features.shape[1])
    store = enc.store
    result = RunResult(cfg, run_dir=str(run_dir) if run_dir else None)
    if cfg.mode == "supervised":
        pool = data.train_nodes[data.labels[data.train_nodes] >= 0]
        sampler = None
    else:
        if data.table is None:
            raise TrainingError("unsupervised training needs a neighborhood table")
        pool = np.array([v for v in data.train_nodes if len(data.table.topo[v])], dtype=np.int64)
        sampler = NegativeSampler(data.lg, cfg.neg_power, cfg.neg_uniform)
    if len(pool) == 0:
        raise TrainingError("no usable training nodes")
    if run_dir:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))

    for epoch in range(1, cfg.epochs + 1):
        batch_losses = []
        order = rng.permutation(pool)
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            store.zero_grad()
            try:
                if cfg.mode == "supervised":
                    z = enc.encode(batch, data.features, data.csr, rng, train=True)
                    loss = sup_loss(enc.logits(z), data.labels[batch])
                else:
                    loss, clamped = _unsup_batch(enc, data, batch, sampler, cfg, rng)
                    result.clamp_count += clamped
                loss.backward()
            except FloatingPointError as exc:
                raise TrainingError(f"non-finite loss at epoch {epoch}: {exc}") from exc
            T.adam_step(store, cfg.lr)
            batch_losses.append(loss.item())
        epoch_loss = float(np.mean(batch_losses))
        if not math.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        if epoch == 1 or epoch % cfg.val_every == 0 or epoch == cfg.epochs:
            result.loss_curve.append((epoch, epoch_loss))
            val = _validate(enc, data, cfg)
            result.val_history.append((epoch, val))
            log.debug("epoch %d loss %.4f val %.4f", epoch, epoch_loss, val)
            if val > result.best_val_f1:
                result.best_val_f1 = val
                result.best_epoch = epoch
                result.best_state = store.state()
                if run_dir:
                    store.save(run_dir / "checkpoint.json")

    if evaluate_test:
        evaluate_test_set(result, data)
    if run_dir:
        write_run_artifacts(result, run_dir)
    return result


def restore_encoder(result, in_dim):
    enc = make_encoder(result.config, in_dim)
    enc.store.load_state(result.best_state)
    return enc


def evaluate_test_set(result, data):
    """Score the best checkpoint on the test split; the only test-set read."""
    cfg = result.config
    enc = restore_encoder(result, data.features.shape[1])
    test = data.test_nodes()
    if cfg.mode == "supervised":
        test = test[data.labels[test] >= 0]
        report = MetricsReport.from_predictions(predict(enc, data, test, cfg.seed), data.labels[test])
    else:
        report = _probe(enc, data, test, cfg, cfg.probe_runs)
    result.test_report = report
    result.test_f1 = report.micro_f1
    return report


def write_run_artifacts(result, run_dir):
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    val = dict(result.val_history)
    with open(run_dir / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_micro_f1"])
        for epoch, loss in result.loss_curve:
            w.writerow([epoch, f"{loss:.8f}", f"{val.get(epoch, float('nan')):.6f}"])
    metrics = result.summary()
    if result.test_report is not None:
        metrics["test_report"] = result.test_report.to_dict()
    (run_dir / "metrics.json").write_text(json.dumps(metrics, indent=2))


# grid search


def grid_cells(mode, lrs=None, dims=None):
    lrs = lrs or (UNSUP_LRS if mode == "unsupervised" else SUP_LRS)
    dims = dims or DIMS
    return list(itertools.product(lrs, dims))


def _selection_key(result):
    # highest validation score; ties go to the lower lr, then the smaller dim
    return (-result.best_val_f1, result.config.lr, result.config.dim)


def select_best(results):
    return min(results, key=_selection_key)


@dataclass
class GridResult:
    best: RunResult
    runs: list
    test_f1: float


def _train_cell(args):
    cfg, data, run_dir = args
    return train(cfg, data, run_dir, evaluate_test=False)


def grid_search(base, data, run_root=None, workers=1, lrs=None, dims=None):
    """Train every (lr, dim) cell, pick the best on validation, test it once."""
    reads_before = data.test_reads
    cells = grid_cells(base.mode, lrs, dims)
    jobs = []
    for lr, dim in cells:
        cfg = replace(base, lr=lr, dim=dim)
        cell_dir = Path(run_root) / f"lr{lr:g}_dim{dim}" if run_root else None
        jobs.append((cfg, data, cell_dir))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_train_cell, jobs))
    else:
        runs = [_train_cell(j) for j in jobs]
    best = select_best(runs)
    evaluate_test_set(best, data)
    if data.test_reads - reads_before != 1:
        raise AssertionError(f"test set read {data.test_reads - reads_before} times during grid search")
    if run_root:
        write_run_artifacts(best, best.run_dir)
        summary = {
            "best": best.summary(),
            "cells": [r.summary() for r in runs],
        }
        Path(run_root, "grid.json").write_text(json.dumps(summary, indent=2))
    return GridResult(best, runs, best.test_f1)
