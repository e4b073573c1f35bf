import json
import math

import numpy as np
import pytest

from roadrep import tensor as T
from roadrep import training as TR
from roadrep.pipeline import synthetic_dataset
from roadrep.sampling import WalkConfig


@pytest.fixture(scope="module")
def small():
    return synthetic_dataset(120, seed=1, walk_config=WalkConfig(num_walks=5, local_len=2, seed=1))


def fresh(data):
    return TR.Dataset(data.lg, data.split, data.table)


# losses


def test_unsup_loss_hand_value():
    loss, clamped = TR.unsup_loss(T.Tensor([[1.0, 0.0]]), T.Tensor([[1.0, 0.0]]), T.Tensor([[[0.0, 1.0]]]))
    assert loss.item() == pytest.approx(math.log1p(math.exp(-1)) + math.log(2), abs=1e-14)
    assert clamped == 0


def test_unsup_loss_averages_negatives():
    z = T.Tensor([[1.0, 0.0]])
    negs = T.Tensor([[[1.0, 0.0], [-1.0, 0.0]]])
    loss, _ = TR.unsup_loss(z, z, negs)
    # -log s(1) - (log s(-1) + log s(1)) / 2
    sp = lambda x: math.log1p(math.exp(-x))  # noqa: E731  -log sigmoid(x)
    assert loss.item() == pytest.approx(sp(1) + (sp(-1) + sp(1)) / 2, abs=1e-14)


def test_unsup_loss_clamps_and_counts():
    loss, clamped = TR.unsup_loss(T.Tensor([[100.0, 0.0]]), T.Tensor([[-100.0, 0.0]]), T.Tensor([[[0.0, 1.0]]]))
    assert clamped == 1
    assert loss.item() == pytest.approx(-TR.LOG_FLOOR + math.log(2), abs=1e-12)


def test_sup_loss_skips_unlabeled():
    loss = TR.sup_loss(T.Tensor(np.zeros((3, 5))), [0, -1, 2])
    assert loss.item() == pytest.approx(math.log(5), abs=1e-15)
    with pytest.raises(TR.TrainingError):
        TR.sup_loss(T.Tensor(np.zeros((2, 5))), [-1, -1])


# config


def test_config_defaults_follow_mode_and_task():
    assert TR.TrainConfig("unsupervised").epochs == 1000
    assert TR.TrainConfig("supervised").epochs == 500
    assert TR.TrainConfig(task="transductive").batch_size == 1024
    assert TR.TrainConfig(task="inductive").batch_size == 2048


def test_config_missing_key_named():
    with pytest.raises(TR.ConfigError, match="aggregator"):
        TR.TrainConfig.from_dict({"mode": "supervised", "task": "inductive"})


def test_config_rejects_unknown_and_bad_values():
    base = {"mode": "supervised", "task": "inductive", "aggregator": "gin"}
    with pytest.raises(TR.ConfigError, match="learning_rate"):
        TR.TrainConfig.from_dict({**base, "learning_rate": 1})
    with pytest.raises(TR.ConfigError):
        TR.TrainConfig.from_dict({**base, "mode": "semi"})
    with pytest.raises(TR.ConfigError):
        TR.TrainConfig.from_dict({**base, "aggregator": "gcnn"})
    with pytest.raises(TR.ConfigError):
        TR.TrainConfig.from_dict({**base, "schema": 7})
    with pytest.raises(TR.ConfigError):
        TR.TrainConfig.from_dict({**base, "dim": 0})


def test_config_round_trip():
    cfg = TR.TrainConfig("unsupervised", "inductive", "sage-lstm", lr=2e-6, dim=128)
    assert TR.TrainConfig.from_dict(cfg.to_dict()) == cfg


# loops


def test_supervised_run_writes_artifacts(small, tmp_path):
    data = fresh(small)
    cfg = TR.TrainConfig(aggregator="gin", epochs=3, batch_size=32, val_every=1, dim=16)
    res = TR.train(cfg, data, tmp_path)
    for name in ("config.json", "checkpoint.json", "loss.csv", "metrics.json"):
        assert (tmp_path / name).exists()
    assert [e for e, _ in res.loss_curve] == [1, 2, 3]
    assert data.test_reads == 1
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["test_micro_f1"] == res.test_f1
    assert 0.0 <= res.test_f1 <= 1.0
    assert len((tmp_path / "loss.csv").read_text().splitlines()) == 4


def test_supervised_loss_decreases(small):
    cfg = TR.TrainConfig(aggregator="gcn", epochs=20, batch_size=16, val_every=19, dim=16, lr=1e-2)
    res = TR.train(cfg, fresh(small), evaluate_test=False)
    assert res.loss_curve[-1][1] < res.loss_curve[0][1]
    assert res.test_f1 is None


def test_training_is_deterministic(small):
    cfg = TR.TrainConfig(aggregator="gain", epochs=2, batch_size=32, dim=8)
    a = TR.train(cfg, fresh(small), evaluate_test=False)
    b = TR.train(cfg, fresh(small), evaluate_test=False)
    assert a.loss_curve == b.loss_curve


def test_unsupervised_run(small):
    cfg = TR.TrainConfig("unsupervised", aggregator="sage-mean", epochs=2, batch_size=64, dim=8, probe_runs=2, val_probe_runs=1)
    res = TR.train(cfg, fresh(small))
    assert math.isfinite(res.loss_curve[-1][1])
    assert res.test_report.runs == 2


def test_unsupervised_needs_table(small):
    data = TR.Dataset(small.lg, small.split, None)
    with pytest.raises(TR.TrainingError, match="neighborhood"):
        TR.train(TR.TrainConfig("unsupervised", epochs=1), data)


# grid


def test_grid_cells_counts():
    assert len(TR.grid_cells("unsupervised")) == 12
    assert len(TR.grid_cells("supervised")) == 9
    assert (2e-8, 64) in TR.grid_cells("unsupervised")


def test_select_best_tie_break():
    def r(val, lr, dim):
        return TR.RunResult(TR.TrainConfig(lr=lr, dim=dim), best_val_f1=val)

    runs = [r(0.8, 1e-2, 64), r(0.9, 1e-3, 256), r(0.9, 1e-3, 128), r(0.9, 1e-2, 64)]
    best = TR.select_best(runs)
    assert (best.config.lr, best.config.dim) == (1e-3, 128)


def test_supervised_grid_reads_test_once(small, tmp_path):
    data = fresh(small)
    base = TR.TrainConfig(aggregator="gcn", epochs=1, batch_size=64)
    res = TR.grid_search(base, data, tmp_path, dims=(4, 8, 16))
    assert len(res.runs) == 9
    assert data.test_reads == 1
    assert sum(r.test_f1 is not None for r in res.runs) == 1
    cells = sorted(p.name for p in tmp_path.iterdir() if p.is_dir())
    assert len(cells) == 9 and "lr0.001_dim8" in cells
    grid = json.loads((tmp_path / "grid.json").read_text())
    assert grid["best"]["test_micro_f1"] == res.test_f1 and len(grid["cells"]) == 9
