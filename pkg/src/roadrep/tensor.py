"""Small dense tensor engine with reverse-mode autodiff.

Values are float64 numpy arrays. Every op records its parents and a closure
that pushes the output gradient back to them; ``Tensor.backward`` walks the
graph in reverse topological order.
"""

import json
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "roadrep-params"
CHECKPOINT_VERSION = 1


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # leaf
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced in forward pass")
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b):
    """``a @ b`` where ``a`` is (..., n) and ``b`` is a 2-D (n, m) matrix."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _result(a.data @ b.data, (a, b), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            i != ax and s != r for i, (s, r) in enumerate(zip(t.shape, ref))
        ):
            raise ValueError(f"concat shape mismatch: {[t.shape for t in tensors]}")
    splits = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=ax))

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward)


def reshape(a, shape):
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def broadcast_to(a, shape):
    return _result(
        np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (_unbroadcast(g, a.shape),)
    )


def take(a, index, axis=0):
    """Gather slices of ``a`` along ``axis`` with an integer index array."""
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        out = np.zeros_like(a.data)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, index.ravel(), np.moveaxis(g, axis, 0).reshape((-1,) + moved.shape[1:]))
        return (out,)

    return _result(np.take(a.data, index, axis=axis), (a,), backward)


# elementwise nonlinearities


def sigmoid(a):
    out = _sigmoid(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def tanh(a):
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out**2),))


def relu(a):
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.2):
    mask = a.data > 0
    return _result(
        np.where(mask, a.data, slope * a.data), (a,), lambda g: (np.where(mask, g, slope * g),)
    )


def elu(a, alpha=1.0):
    mask = a.data > 0
    neg_part = alpha * np.expm1(np.minimum(a.data, 0.0))
    out = np.where(mask, a.data, neg_part)
    return _result(out, (a,), lambda g: (np.where(mask, g, g * (neg_part + alpha)),))


def identity(a):
    return a


def log_sigmoid(a):
    """log(sigmoid(x)), stable for large |x|."""
    x = a.data
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    return _result(out, (a,), lambda g: (g * _sigmoid(-x),))


def clamp_min(a, floor):
    """max(a, floor) elementwise; clamped entries pass no gradient."""
    keep = a.data >= floor
    return _result(np.where(keep, a.data, floor), (a,), lambda g: (g * keep,))


ACTIVATIONS = {
    "sigmoid": sigmoid,
    "elu": elu,
    "leaky_relu": leaky_relu,
    "relu": relu,
    "tanh": tanh,
    "identity": identity,
}


def activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


# reductions


def sum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else a.shape[axis]
    if n == 0:
        raise ValueError("mean over an empty axis")
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def max(a, axis=None, keepdims=False):
    out = a.data.max(axis=axis, keepdims=True)
    mask = a.data == out
    # ties share the gradient evenly
    weights = mask / mask.sum(axis=axis, keepdims=True)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        elif axis is None:
            g = np.reshape(g, (1,) * a.ndim)
        return (weights * g,)

    if not keepdims:
        out = out.squeeze() if axis is None else out.squeeze(axis)
    return _result(out, (a,), backward)


def softmax(a, axis=-1):
    if a.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), backward)


def l2_normalize(a, eps=1e-12):
    """Scale each row (last axis) to unit euclidean norm."""
    norm = np.sqrt((a.data**2).sum(axis=-1, keepdims=True))
    norm = np.maximum(norm, eps)
    out = a.data / norm

    def backward(g):
        return ((g - out * (g * out).sum(axis=-1, keepdims=True)) / norm,)

    return _result(out, (a,), backward)


def dropout(a, rate, rng):
    """Inverted dropout; ``rng`` is a numpy Generator."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _result(a.data * keep, (a,), lambda g: (g * keep,))


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy of (N, C) logits against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"cross_entropy shape mismatch: {logits.shape} vs {labels.shape}")
    n = labels.shape[0]
    if n == 0:
        raise ValueError("cross_entropy over an empty batch")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (g * p / n,)

    return _result(np.asarray(loss), (logits,), backward)


# parameters


def init_params(shape, scheme="glorot-uniform", seed=0, value=0.0):
    """Create a trainable tensor.

    ``scheme`` is ``glorot-uniform`` (bound sqrt(6 / (fan_in + fan_out)), with
    fan_in = shape[0] and fan_out = shape[-1]), ``zeros`` or ``constant``.
    """
    shape = tuple(shape)
    if scheme == "glorot-uniform":
        rng = np.random.Generator(np.random.Philox(seed))
        fan_in, fan_out = shape[0], shape[-1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        data = rng.uniform(-bound, bound, size=shape)
    elif scheme == "zeros":
        data = np.zeros(shape)
    elif scheme == "constant":
        data = np.full(shape, float(value))
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return Tensor(data, requires_grad=True)


class ParamStore:
    """Named parameters plus Adam moment slots."""

    def __init__(self):
        self.params = {}
        self.m = {}
        self.v = {}
        self.step = 0

    def add(self, name, tensor):
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        self.params[name] = tensor
        return tensor

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def trainable(self):
        return {k: p for k, p in self.params.items() if p.requires_grad}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state(self, state):
        for k, arr in state.items():
            if self.params[k].shape != np.shape(arr):
                raise ValueError(f"shape mismatch for {k}: {self.params[k].shape} vs {np.shape(arr)}")
            self.params[k].data = np.array(arr, dtype=np.float64)

    def save(self, path):
        payload = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "params": {
                k: {"shape": list(p.shape), "values": p.data.ravel().tolist()}
                for k, p in sorted(self.params.items())
            },
        }
        Path(path).write_text(json.dumps(payload))

    def load(self, path):
        payload = json.loads(Path(path).read_text())
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a parameter checkpoint")
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
        self.load_state(
            {k: np.reshape(e["values"], e["shape"]) for k, e in payload["params"].items()}
        )


def adam_step(store, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update of every trainable parameter with a gradient."""
    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in store.trainable().items():
        if p.grad is None:
            continue
        g = p.grad
        if name not in store.m:
            store.m[name] = np.zeros_like(p.data)
            store.v[name] = np.zeros_like(p.data)
        m = store.m[name] = beta1 * store.m[name] + (1.0 - beta1) * g
        v = store.v[name] = beta2 * store.v[name] + (1.0 - beta2) * g * g
        p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
