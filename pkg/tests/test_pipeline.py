import json

import numpy as np
import pytest

from roadrep import graph as G
from roadrep import pipeline as P
from roadrep.sampling import WalkConfig
from roadrep.synth import grid_city, planted_label_graph, star_graph

WALK = WalkConfig(num_walks=4, local_len=2, seed=0)


def test_holdout_sizes():
    assert P.transductive_holdout(300) == (50, 100)
    assert P.transductive_holdout(60_000) == (500, 1000)


def test_star_prepares_to_triangle(tmp_path):
    G.save_graph(star_graph(3), tmp_path / "star.json")
    P.prepare([tmp_path / "star.json"], tmp_path / "out", walk_config=WALK)
    data = P.load_dataset(tmp_path / "out")
    assert data.lg.num_nodes == 3 and data.lg.num_edges() == 3
    assert all(len(a) == 2 for a in data.lg.adj)
    assert data.features.shape == (3, 44)  # one speed in the vocabulary


def test_prepare_is_bitwise_reproducible(tmp_path):
    G.save_graph(planted_label_graph(120, seed=4), tmp_path / "g.json")
    for name in ("a", "b"):
        P.prepare([tmp_path / "g.json"], tmp_path / name, seed=3, walk_config=WALK, standardize=True)
    for f in ("line_graph.json", "feature_spec.json", "split.json", "neighborhoods.json", "graphs/g0.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_prepared_matches_in_memory_chain(tmp_path):
    G.save_graph(planted_label_graph(120, seed=4), tmp_path / "g.json")
    P.prepare([tmp_path / "g.json"], tmp_path / "d", seed=4, walk_config=WalkConfig(num_walks=4, local_len=2, seed=4), standardize=True)
    disk = P.load_dataset(tmp_path / "d")
    mem = P.synthetic_dataset(120, seed=4, walk_config=WalkConfig(num_walks=4, local_len=2, seed=4))
    assert np.array_equal(disk.labels, mem.labels)
    assert np.allclose(disk.features, mem.features, atol=1e-12)


def test_inductive_manifest_of_seventeen(tmp_path):
    names = []
    for k in range(17):
        G.save_graph(grid_city(3, seed=k), tmp_path / f"c{k}.json")
        names.append(f"c{k}.json")
    (tmp_path / "cities.json").write_text(json.dumps({"graphs": names}))
    m = P.prepare([tmp_path / "cities.json"], tmp_path / "out", task="inductive", walk_config=WALK)
    assert len(m.graphs) == 17
    data = P.load_dataset(tmp_path / "out")
    split = json.loads((tmp_path / "out" / "split.json").read_text())
    sizes = [len(split[k]) for k in ("train", "val", "test")]
    assert sizes == [13, 2, 2]
    gids = np.asarray(data.lg.graph_ids)
    assert not set(gids[data.train_nodes]) & set(gids[data.val_nodes])
    assert len(data.train_nodes) + len(data.val_nodes) + len(data._test_nodes) == data.lg.num_nodes


def test_transductive_rejects_many_graphs(tmp_path):
    for k in range(2):
        G.save_graph(grid_city(3, seed=k), tmp_path / f"c{k}.json")
    with pytest.raises(P.PipelineError, match="exactly one"):
        P.prepare([tmp_path / "c0.json", tmp_path / "c1.json"], tmp_path / "out")


def test_missing_artifact_fails_fast(tmp_path):
    G.save_graph(grid_city(3), tmp_path / "g.json")
    P.prepare([tmp_path / "g.json"], tmp_path / "d", walk_config=WALK)
    (tmp_path / "d" / "neighborhoods.json").unlink()
    with pytest.raises(P.PipelineError, match="neighborhoods"):
        P.load_dataset(tmp_path / "d")
    with pytest.raises(P.PipelineError, match="manifest"):
        P.load_dataset(tmp_path / "nowhere")
