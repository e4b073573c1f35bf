import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import max_rel_error
from roadrep import tensor as T


def param(shape, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return T.Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)


# forward values


def test_softmax_equal_logits():
    out = T.softmax(T.Tensor(np.full((2, 7), 3.3))).data
    assert np.allclose(out, 1 / 7, atol=1e-15)


def test_l2_normalize_three_four_five():
    assert T.l2_normalize(T.Tensor([[3.0, 4.0]])).data.tolist() == [[0.6, 0.8]]


def test_cross_entropy_uniform():
    loss = T.cross_entropy(T.Tensor(np.zeros((4, 5))), [0, 1, 4, 2])
    assert loss.item() == pytest.approx(math.log(5), abs=1e-15)


def test_activation_values():
    x = T.Tensor([-2.0, 0.0, 3.0])
    assert T.leaky_relu(x).data.tolist() == [-0.4, 0.0, 3.0]
    assert T.elu(x).data[0] == pytest.approx(math.exp(-2) - 1)
    assert T.sigmoid(T.Tensor([0.0])).data[0] == 0.5
    assert T.identity(x).data.tolist() == [-2.0, 0.0, 3.0]


def test_max_and_mean():
    x = T.Tensor([[1.0, 5.0, 2.0], [7.0, 0.0, 7.0]])
    assert T.max(x, axis=1).data.tolist() == [5.0, 7.0]
    assert T.mean(x, axis=0).data.tolist() == [4.0, 2.5, 4.5]


def test_concat_and_take():
    a = T.Tensor([[1.0, 2.0]])
    b = T.Tensor([[3.0]])
    assert T.concat([a, b], axis=1).data.tolist() == [[1.0, 2.0, 3.0]]
    assert T.take(T.Tensor([10.0, 20.0, 30.0]), [2, 0, 2]).data.tolist() == [30.0, 10.0, 30.0]


# errors


def test_shape_mismatch():
    with pytest.raises(ValueError):
        T.Tensor(np.ones((2, 3))) @ T.Tensor(np.ones((2, 3)))
    with pytest.raises(ValueError):
        T.add(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((4, 3))))


def test_softmax_empty_axis():
    with pytest.raises(ValueError):
        T.softmax(T.Tensor(np.zeros((3, 0))))


def test_backward_needs_scalar():
    with pytest.raises(ValueError):
        param((2, 2)).backward()


def test_nonfinite_trapped():
    with pytest.raises(FloatingPointError):
        T.mul(T.Tensor([np.inf]), T.Tensor([1.0]))


# gradients


def test_sum_gradient_is_ones():
    w = param((3, 4))
    T.sum(w).backward()
    assert (w.grad == 1.0).all()


def test_sigmoid_gradient_at_zero():
    w = T.Tensor(0.0, requires_grad=True)
    T.sigmoid(w).backward()
    assert w.grad == 0.25


def test_gradient_accumulates_over_reuse():
    w = T.Tensor([2.0], requires_grad=True)
    T.sum(w * w + w).backward()
    assert w.grad.tolist() == [5.0]


UNARY = {
    "sigmoid": T.sigmoid,
    "tanh": T.tanh,
    "elu": T.elu,
    "leaky_relu": T.leaky_relu,
    "identity": T.identity,
    "log_sigmoid": T.log_sigmoid,
    "softmax0": lambda a: T.softmax(a, axis=0),
    "softmax1": lambda a: T.softmax(a, axis=-1),
    "l2_normalize": T.l2_normalize,
    "sum0": lambda a: T.sum(a, axis=0),
    "mean1": lambda a: T.mean(a, axis=1),
    "max1": lambda a: T.max(a, axis=1),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name):
    a = param((5, 4), seed=hash(name) % 1000)
    proj = np.random.default_rng(1).normal(size=UNARY[name](a).shape)
    err = max_rel_error(lambda: T.sum(T.mul(UNARY[name](a), proj)), [a])
    assert err < 1e-4


def test_relu_gradient_away_from_kink():
    a = T.Tensor(np.array([[-1.0, 0.5], [2.0, -0.3]]), requires_grad=True)
    assert max_rel_error(lambda: T.sum(T.relu(a) * 3.0), [a]) < 1e-6


def test_binary_and_structural_gradients():
    a, b, c = param((3, 4), 1), param((4, 2), 2), param((1, 4), 3)
    idx = np.array([2, 0, 2, 1])

    def f():
        x = T.mul(T.add(a, c), a)
        y = T.concat([x @ b, T.take(a, idx, axis=0) @ b], axis=0)
        z = T.reshape(y, (2, 7))
        return T.sum(T.mul(z, T.broadcast_to(T.Tensor(np.arange(7.0)), z.shape)))

    assert max_rel_error(f, [a, b, c]) < 1e-4


def test_cross_entropy_gradient():
    a = param((6, 5), 4)
    assert max_rel_error(lambda: T.cross_entropy(a, [0, 1, 2, 3, 4, 0]), [a]) < 1e-4


def test_three_layer_composite():
    x = T.Tensor(np.random.default_rng(0).normal(size=(8, 6)))
    w1, w2, w3 = param((6, 10), 5, 0.5), param((10, 7), 6, 0.5), param((7, 5), 7, 0.5)

    def f():
        h = T.elu(x @ w1)
        h = T.leaky_relu(h @ w2)
        return T.cross_entropy(T.l2_normalize(h @ w3), [0, 1, 2, 3, 4, 0, 1, 2])

    assert max_rel_error(f, [w1, w2, w3]) < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 32), st.integers(1, 32), st.integers(0, 10**6))
def test_matmul_gradient_random_shapes(n, d, seed):
    a, b = param((n, d), seed), param((d, 3), seed + 1)
    assert max_rel_error(lambda: T.sum(T.sigmoid(a @ b)), [a, b]) < 1e-4


# dropout


def test_dropout_rate_zero_is_identity():
    a = param((4, 4))
    assert T.dropout(a, 0.0, np.random.default_rng(0)) is a


def test_dropout_scales_survivors():
    a = T.Tensor(np.ones((200, 200)))
    out = T.dropout(a, 0.25, np.random.default_rng(0)).data
    kept = out[out != 0]
    assert np.allclose(kept, 1 / 0.75)
    assert abs(kept.size / out.size - 0.75) < 0.01


def test_dropout_deterministic_given_seed():
    a = param((10, 10))
    x = T.dropout(a, 0.1, np.random.default_rng(9)).data
    y = T.dropout(a, 0.1, np.random.default_rng(9)).data
    assert np.array_equal(x, y)


# init


def test_init_schemes():
    assert (T.init_params((3, 4), "zeros").data == 0).all()
    assert (T.init_params((3, 4), "constant", value=0.5).data == 0.5).all()
    w = T.init_params((30, 50), seed=1).data
    assert np.abs(w).max() <= math.sqrt(6 / 80)
    with pytest.raises(ValueError):
        T.init_params((2, 2), "orthogonal")


def test_glorot_mean_near_zero():
    w = T.init_params((1000, 1000), seed=3).data
    bound = math.sqrt(6 / 2000)
    sigma = bound / math.sqrt(3) / math.sqrt(w.size)
    assert abs(w.mean()) < 3 * sigma


# adam


def _store(value, grad):
    s = T.ParamStore()
    p = s.add("w", T.Tensor(np.array(value, dtype=float), requires_grad=True))
    p.grad = np.array(grad, dtype=float)
    return s, p


def test_adam_zero_gradient_no_change():
    s, p = _store([1.0, -2.0], [0.0, 0.0])
    T.adam_step(s, 0.1)
    assert p.data.tolist() == [1.0, -2.0]


def test_adam_first_step_closed_form():
    s, p = _store([0.0], [1.0])
    T.adam_step(s, 0.01)
    # m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
    assert p.data[0] == pytest.approx(-0.01 / (1 + 1e-8), abs=1e-18)


def test_adam_constant_gradient_step_tends_to_lr():
    s, p = _store([0.0], [-3.0])
    prev = 0.0
    for _ in range(500):
        p.grad = np.array([-3.0])
        T.adam_step(s, 0.001)
        step = p.data[0] - prev
        prev = p.data[0]
    assert step == pytest.approx(0.001, rel=1e-6)


def test_checkpoint_round_trip(tmp_path):
    s = T.ParamStore()
    s.add("a", param((2, 3)))
    s.add("b", param((4,), 1))
    s.save(tmp_path / "c.json")
    t = T.ParamStore()
    t.add("a", T.Tensor(np.zeros((2, 3)), requires_grad=True))
    t.add("b", T.Tensor(np.zeros(4), requires_grad=True))
    t.load(tmp_path / "c.json")
    assert np.array_equal(t["a"].data, s["a"].data) and np.array_equal(t["b"].data, s["b"].data)


def test_checkpoint_rejects_foreign_file(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        T.ParamStore().load(tmp_path / "x.json")
