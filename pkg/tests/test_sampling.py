import numpy as np
import pytest
from scipy import stats

from roadrep import graph as G
from roadrep import sampling as S
from roadrep.synth import grid_city, path_graph, planted_label_graph


def lg_from_adj(adj):
    return G.LineGraph(list(range(len(adj))), [sorted(a) for a in adj])


def star_center(leaves):
    # center 0 joined to each leaf, leaves unconnected to each other
    adj = [list(range(1, leaves + 1))] + [[0] for _ in range(leaves)]
    return lg_from_adj(adj)


def test_walk_config_defaults():
    cfg = S.WalkConfig()
    assert (cfg.num_walks, cfg.local_len, cfg.global_len) == (50, 5, 10)
    with pytest.raises(ValueError):
        S.WalkConfig(num_walks=0)


def test_pair_local_neighbor_forced():
    lg = lg_from_adj([[1], [0]])
    t = S.build_topological_neighborhood(lg, S.WalkConfig(num_walks=1, local_len=1, seed=3))
    assert t.local[0].tolist() == [1]


def test_triangle_global_excludes_self():
    lg = lg_from_adj([[1, 2], [0, 2], [0, 1]])
    for seed in range(50):
        t = S.build_topological_neighborhood(lg, S.WalkConfig(num_walks=20, local_len=1, global_len=2, seed=seed))
        assert set(t.global_[0].tolist()) <= {1, 2}


def test_star_local_frequencies_uniform():
    lg = star_center(3)
    t = S.build_topological_neighborhood(lg, S.WalkConfig(num_walks=3000, local_len=1, seed=11))
    counts = np.bincount(t.local[0], minlength=4)[1:]
    assert counts.sum() == 3000
    assert stats.chisquare(counts).pvalue > 0.01


def test_isolated_node_flagged_not_fatal():
    lg = lg_from_adj([[1], [0], []])
    t = S.build_topological_neighborhood(lg, S.WalkConfig(num_walks=5, local_len=2))
    assert t.isolated == [2]
    assert len(t.topo[2]) == 0


def test_empty_graph_rejected():
    with pytest.raises(ValueError):
        S.build_topological_neighborhood(G.LineGraph([], []), S.WalkConfig())


def test_self_exclusion_and_reach_bounds():
    lg = G.to_line_graph(planted_label_graph(120, seed=2))
    cfg = S.WalkConfig(num_walks=10, local_len=2, seed=4)
    t = S.build_topological_neighborhood(lg, cfg)
    for v in range(0, lg.num_nodes, 7):
        dist = S.bfs_distances(lg, v)
        assert v not in t.topo[v]
        assert all(1 <= dist[u] <= cfg.local_len for u in t.local[v])
        assert all(1 <= dist[u] <= cfg.global_len for u in t.global_[v])
        assert sorted(t.topo[v].tolist()) == sorted(t.local[v].tolist() + t.global_[v].tolist())


def test_tables_are_deterministic_and_order_free():
    lg = G.to_line_graph(grid_city(4, seed=0))
    cfg = S.WalkConfig(num_walks=4, local_len=2, seed=9)
    a = S.build_topological_neighborhood(lg, cfg)
    b = S.build_topological_neighborhood(lg, cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a.topo, b.topo))
    # one node alone reproduces its slice of the full table
    indptr, indices = lg.csr()
    _, _, topo5 = S._walks_for_node(5, indptr, indices, cfg)
    assert np.array_equal(topo5, a.topo[5])


def test_global_view_extends_local_on_long_path():
    lg = G.to_line_graph(path_graph(30))
    indptr, indices = lg.csr()
    dist = S.bfs_distances(lg, 14)
    far_seeds = 0
    for seed in range(1000):
        cfg = S.WalkConfig(num_walks=1, local_len=2, seed=seed)
        local, global_, _ = S._walks_for_node(14, indptr, indices, cfg)
        assert all(dist[u] <= 2 for u in local)
        far_seeds += any(dist[u] > 2 for u in global_)
    assert far_seeds > 0


def test_table_round_trip(tmp_path):
    lg = G.to_line_graph(grid_city(3, seed=0))
    t = S.build_topological_neighborhood(lg, S.WalkConfig(num_walks=3, local_len=2))
    t.save(tmp_path / "n.json")
    back = S.NeighborhoodTable.load(tmp_path / "n.json")
    assert back.config == t.config
    assert all(np.array_equal(x, y) for x, y in zip(back.topo, t.topo))


def test_fanout_single_neighbor_repeats():
    lg = lg_from_adj([[1], [0]])
    hop1, hop2 = S.sample_fanout(lg, [0], S.FanoutPlan())
    assert hop1.tolist() == [[1] * 9]
    assert hop2.shape == (9, 3) and (hop2 == 0).all()


def test_fanout_shapes_full_batch():
    lg = G.to_line_graph(grid_city(12, seed=0))
    batch = np.arange(1024) % lg.num_nodes
    hop1, hop2 = S.sample_fanout(lg, batch, S.FanoutPlan(9, 3), seed=1)
    assert hop1.shape == (1024, 9) and hop2.shape == (9216, 3)


def test_fanout_isolated_repeats_itself():
    lg = lg_from_adj([[], [2], [1]])
    hop1, _ = S.sample_fanout(lg, [0], S.FanoutPlan(4, 2))
    assert hop1.tolist() == [[0, 0, 0, 0]]


def test_fanout_degree_four_uniform():
    lg = star_center(4)
    hop1, _ = S.sample_fanout(lg, np.zeros(100_000 // 9 + 1, dtype=int), S.FanoutPlan(9, 1), seed=5)
    draws = hop1.ravel()[:100_000]
    n = len(draws)
    sd = np.sqrt(n * 0.25 * 0.75)
    for leaf in range(1, 5):
        assert abs(np.count_nonzero(draws == leaf) - n / 4) < 3 * sd


def test_negatives_exclude_neighborhood():
    lg = G.to_line_graph(planted_label_graph(120, seed=1))
    t = S.build_topological_neighborhood(lg, S.WalkConfig(num_walks=5, local_len=2))
    sampler = S.NegativeSampler(lg)
    for v in range(0, lg.num_nodes, 5):
        negs = sampler.sample(v, 12, t, seed=v)
        assert len(negs) == 12
        assert not set(negs.tolist()) & (set(t.topo[v].tolist()) | {v})


def test_negatives_two_node_graph():
    lg = lg_from_adj([[1], [0]])
    t = S.build_topological_neighborhood(lg, S.WalkConfig(num_walks=1, local_len=1))
    assert 1 in t.topo[0]
    with pytest.raises(ValueError):
        S.sample_negatives(lg, 0, 3, t)
    # without a table the only candidate is the other node
    assert S.sample_negatives(lg, 0, 3).tolist() == [1, 1, 1]


def test_negative_frequencies_follow_degree_power():
    # skewed degrees: node 0 joined to everyone, plus a short chain
    n = 8
    adj = [set() for _ in range(n)]
    for u in range(1, n):
        adj[0].add(u)
        adj[u].add(0)
    for u in range(1, 4):
        adj[u].add(u + 1)
        adj[u + 1].add(u)
    lg = lg_from_adj(adj)
    sampler = S.NegativeSampler(lg)
    v = 7
    draws = sampler.sample(v, 1_000_000, seed=0)
    deg = np.array([len(a) for a in adj], dtype=float)
    w = deg**0.75
    w[v] = 0
    expect = w / w.sum()
    freq = np.bincount(draws, minlength=n) / len(draws)
    assert freq[v] == 0
    assert np.all(np.abs(freq - expect) <= 0.01 * expect + 1e-12)


def test_negatives_uniform_option():
    lg = lg_from_adj([[1, 2, 3], [0], [0], [0]])
    p = S.NegativeSampler(lg, uniform=True).probabilities([1])
    assert p.tolist() == pytest.approx([1 / 3, 0, 1 / 3, 1 / 3])


def test_negative_count_must_be_positive():
    lg = lg_from_adj([[1], [0]])
    with pytest.raises(ValueError):
        S.sample_negatives(lg, 0, 0)
