"""Central finite-difference gradient checks shared by the test modules."""

import numpy as np

from roadrep import tensor as T


def numeric_grad(f, params, h=1e-5):
    """d f() / d p for each Tensor in ``params`` by central differences."""
    out = []
    for p in params:
        g = np.zeros_like(p.data)
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p.data[i]
            p.data[i] = old + h
            up = f().item()
            p.data[i] = old - h
            down = f().item()
            p.data[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def analytic_grad(f, params):
    for p in params:
        p.grad = None
    f().backward()
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def max_rel_error(f, params, h=1e-5):
    """Worst per-parameter relative error between backprop and finite differences."""
    params = [p for p in params if isinstance(p, T.Tensor)]
    num = numeric_grad(f, params, h)
    ana = analytic_grad(f, params)
    return max(rel_error(a, n) for a, n in zip(ana, num))
