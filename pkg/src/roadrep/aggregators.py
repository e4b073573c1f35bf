"""Neighborhood aggregators and the two-hop encoder.

Every aggregator maps ``h_self`` of shape (B, d_in) and ``h_neigh`` of shape
(B, n, d_in) to (B, d_out). Parameters live in a shared ParamStore under a
per-layer prefix.
"""

import zlib

import numpy as np

from . import tensor as T
from .sampling import FanoutPlan, sample_neighbors


def _seed(seed, name):
    return (int(seed) * 1_000_003 + zlib.crc32(name.encode())) % (2**63)


class Aggregator:
    key = None

    def __init__(self, store, prefix, in_dim, out_dim, seed=0):
        self.store = store
        self.prefix = prefix
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.seed = seed

    def param(self, name, shape, scheme="glorot-uniform", value=0.0, trainable=True):
        full = f"{self.prefix}.{name}"
        t = T.init_params(shape, scheme, _seed(self.seed, full), value)
        t.requires_grad = trainable
        return self.store.add(full, t)

    def __call__(self, h_self, h_neigh, rng=None):
        raise NotImplementedError


class MLP:
    """One hidden layer with biases: act(x W1 + b1) W2 + b2."""

    def __init__(self, agg, name, in_dim, hidden, out_dim, hidden_act="relu"):
        self.W1 = agg.param(f"{name}.W1", (in_dim, hidden))
        self.b1 = agg.param(f"{name}.b1", (hidden,), "zeros")
        self.W2 = agg.param(f"{name}.W2", (hidden, out_dim))
        self.b2 = agg.param(f"{name}.b2", (out_dim,), "zeros")
        self.hidden_act = hidden_act

    def __call__(self, x):
        h = T.activation(self.hidden_act)(x @ self.W1 + self.b1)
        return h @ self.W2 + self.b2


def _with_self(h_self, h_neigh):
    """Stack self in front of its neighbors: (B, n + 1, d)."""
    B, d = h_self.shape
    return T.concat([T.reshape(h_self, (B, 1, d)), h_neigh], axis=1)


def _pair_scores(z_self, z_others, w_a, slope=0.2):
    """leaky_relu(w_a . (z_self || z_u)) for every u; returns (B, n, 1)."""
    B, n, d = z_others.shape
    zs = T.broadcast_to(T.reshape(z_self, (B, 1, d)), (B, n, d))
    return T.leaky_relu(T.concat([zs, z_others], axis=-1) @ w_a, slope)


def _epsilon(agg, eps_init, eps_learnable):
    return agg.param("eps", (1,), "constant", eps_init, trainable=eps_learnable)


class GCN(Aggregator):
    """act(W . mean of the self-plus-neighbors multiset), sigmoid by default."""

    key = "gcn"

    def __init__(self, store, prefix, in_dim, out_dim, seed=0, act="sigmoid"):
        super().__init__(store, prefix, in_dim, out_dim, seed)
        self.W = self.param("W", (in_dim, out_dim))
        self.act = act

    def __call__(self, h_self, h_neigh, rng=None):
        pooled = T.mean(_with_self(h_self, h_neigh), axis=1)
        return T.activation(self.act)(pooled @ self.W)


class SAGE(Aggregator):
    """act(W . (h_self || AGG(neighbors))) with mean, meanpool, maxpool or lstm AGG."""

    VARIANTS = ("mean", "meanpool", "maxpool", "lstm")

    def __init__(self, store, prefix, in_dim, out_dim, seed=0, variant="mean", act="sigmoid"):
        super().__init__(store, prefix, in_dim, out_dim, seed)
        if variant not in self.VARIANTS:
            raise ValueError(f"unknown sage variant {variant!r}")
        self.variant = variant
        self.key = f"sage-{variant}"
        self.act = act
        agg_dim = in_dim
        if variant in ("meanpool", "maxpool"):
            agg_dim = out_dim
            self.Wp = self.param("pool.W", (in_dim, agg_dim))
            self.bp = self.param("pool.b", (agg_dim,), "zeros")
            self.pool_act = "relu"
        elif variant == "lstm":
            agg_dim = out_dim
            self.lstm = {}
            for gate in "ifog":
                self.lstm[gate] = (
                    self.param(f"lstm.Wx_{gate}", (in_dim, agg_dim)),
                    self.param(f"lstm.Wh_{gate}", (agg_dim, agg_dim)),
                    self.param(f"lstm.b_{gate}", (agg_dim,), "zeros"),
                )
        self.W = self.param("W", (in_dim + agg_dim, out_dim))

    def aggregate(self, h_neigh, rng=None):
        if self.variant == "mean":
            return T.mean(h_neigh, axis=1)
        if self.variant in ("meanpool", "maxpool"):
            pooled = T.activation(self.pool_act)(h_neigh @ self.Wp + self.bp)
            return T.mean(pooled, axis=1) if self.variant == "meanpool" else T.max(pooled, axis=1)
        return self._lstm(h_neigh, rng)

    def _lstm(self, h_neigh, rng):
        B, n, d = h_neigh.shape
        # one seeded permutation of the neighbor order per forward pass
        order = rng.permutation(n) if rng is not None else np.arange(n)
        h = T.Tensor(np.zeros((B, self.out_dim)))
        c = T.Tensor(np.zeros((B, self.out_dim)))
        for t in order:
            x = T.reshape(T.take(h_neigh, [t], axis=1), (B, d))
            pre = {g: x @ wx + h @ wh + b for g, (wx, wh, b) in self.lstm.items()}
            i, f, o = T.sigmoid(pre["i"]), T.sigmoid(pre["f"]), T.sigmoid(pre["o"])
            c = f * c + i * T.tanh(pre["g"])
            h = o * T.tanh(c)
        return h

    def __call__(self, h_self, h_neigh, rng=None):
        agg = self.aggregate(h_neigh, rng)
        return T.activation(self.act)(T.concat([h_self, agg], axis=-1) @ self.W)


class GAT(Aggregator):
    """Head-averaged attention over the neighbors plus the node itself."""

    key = "gat"

    def __init__(self, store, prefix, in_dim, out_dim, seed=0, heads=1, act="elu", slope=0.2):
        super().__init__(store, prefix, in_dim, out_dim, seed)
        if heads < 1:
            raise ValueError("heads must be >= 1")
        self.heads = heads
        self.act = act
        self.slope = slope
        self.Wp = [self.param(f"head{m}.W", (in_dim, out_dim)) for m in range(heads)]
        self.Wa = [self.param(f"head{m}.a", (2 * out_dim, 1)) for m in range(heads)]

    def _head(self, m, h_self, h_neigh):
        z = _with_self(h_self, h_neigh) @ self.Wp[m]  # (B, n+1, d)
        alpha = T.softmax(_pair_scores(h_self @ self.Wp[m], z, self.Wa[m], self.slope), axis=1)
        return alpha, z

    def attention(self, h_self, h_neigh):
        """Weights of shape (B, n + 1, heads); index 0 is the node itself."""
        return np.concatenate(
            [self._head(m, h_self, h_neigh)[0].data for m in range(self.heads)], axis=-1
        )

    def __call__(self, h_self, h_neigh, rng=None):
        total = None
        for m in range(self.heads):
            alpha, z = self._head(m, h_self, h_neigh)
            out = T.sum(alpha * z, axis=1)
            total = out if total is None else total + out
        return T.activation(self.act)(total * (1.0 / self.heads))


class GIN(Aggregator):
    """MLP((1 + eps) h_self + sum of neighbors)."""

    key = "gin"

    def __init__(self, store, prefix, in_dim, out_dim, seed=0, eps_init=0.0, eps_learnable=False):
        super().__init__(store, prefix, in_dim, out_dim, seed)
        self.eps = _epsilon(self, eps_init, eps_learnable)
        self.mlp = MLP(self, "mlp", in_dim, out_dim, out_dim)

    def __call__(self, h_self, h_neigh, rng=None):
        return self.mlp(h_self * (self.eps + 1.0) + T.sum(h_neigh, axis=1))


class GAIN(Aggregator):
    """MLP((1 + eps) h'_self + sigma(sum_u a_vu h'_u)) with h' = h W'.

    Attention runs over the sampled neighbors only, never the node itself.
    """

    key = "gain"

    def __init__(
        self, store, prefix, in_dim, out_dim, seed=0, eps_init=0.0, eps_learnable=False,
        sigma="identity", slope=0.2,
    ):
        super().__init__(store, prefix, in_dim, out_dim, seed)
        self.eps = _epsilon(self, eps_init, eps_learnable)
        self.Wp = self.param("W_prime", (in_dim, out_dim))
        self.Wa = self.param("W_a", (2 * out_dim, 1))
        self.mlp = MLP(self, "mlp", out_dim, out_dim, out_dim)
        self.sigma = sigma
        self.slope = slope

    def _attend(self, h_self, h_neigh):
        zs = h_self @ self.Wp
        zn = h_neigh @ self.Wp
        a = T.softmax(_pair_scores(zs, zn, self.Wa, self.slope), axis=1)  # (B, n, 1)
        return zs, zn, a

    def attention(self, h_self, h_neigh):
        """Weights of shape (B, n, 1) over the neighbors."""
        return self._attend(h_self, h_neigh)[2].data

    def __call__(self, h_self, h_neigh, rng=None):
        zs, zn, a = self._attend(h_self, h_neigh)
        agg = T.activation(self.sigma)(T.sum(a * zn, axis=1))
        return self.mlp(zs * (self.eps + 1.0) + agg)


class GAINMultiHead(Aggregator):
    """MLP(W . ((1 + eps) h_self + sigma(sum_m sum_u a_m,vu h'_m,u))).

    Heads are summed, not averaged. Each head projects into the input space
    (W'_m is d_in x d_in) so the untransformed self term can be added; W then
    maps to the output dimension.
    """

    key = "gain-mh"

    def __init__(
        self, store, prefix, in_dim, out_dim, seed=0, heads=1, eps_init=0.0,
        eps_learnable=False, sigma="identity", slope=0.2,
    ):
        super().__init__(store, prefix, in_dim, out_dim, seed)
        if heads < 1:
            raise ValueError("heads must be >= 1")
        self.heads = heads
        self.eps = _epsilon(self, eps_init, eps_learnable)
        self.Wp = [self.param(f"head{m}.W_prime", (in_dim, in_dim)) for m in range(heads)]
        self.Wa = [self.param(f"head{m}.W_a", (2 * in_dim, 1)) for m in range(heads)]
        self.W = self.param("W", (in_dim, out_dim))
        self.mlp = MLP(self, "mlp", out_dim, out_dim, out_dim)
        self.sigma = sigma
        self.slope = slope

    def _head(self, m, h_self, h_neigh):
        zn = h_neigh @ self.Wp[m]
        a = T.softmax(_pair_scores(h_self @ self.Wp[m], zn, self.Wa[m], self.slope), axis=1)
        return a, zn

    def attention(self, h_self, h_neigh):
        return np.concatenate(
            [self._head(m, h_self, h_neigh)[0].data for m in range(self.heads)], axis=-1
        )

    def inner(self, h_self, h_neigh):
        total = None
        for m in range(self.heads):
            a, zn = self._head(m, h_self, h_neigh)
            s = T.sum(a * zn, axis=1)
            total = s if total is None else total + s
        return h_self * (self.eps + 1.0) + T.activation(self.sigma)(total)

    def __call__(self, h_self, h_neigh, rng=None):
        return self.mlp(self.inner(h_self, h_neigh) @ self.W)


AGGREGATOR_KEYS = (
    "gcn", "sage-mean", "sage-meanpool", "sage-maxpool", "sage-lstm", "gat", "gin", "gain", "gain-mh",
)


def build_aggregator(key, store, prefix, in_dim, out_dim, seed=0, **opts):
    """Construct an aggregator by config key.

    Recognized ``opts``: ``heads`` (gat, gain-mh), ``eps_init`` and
    ``eps_learnable`` (gin, gain, gain-mh), ``sigma`` (gain, gain-mh),
    ``act`` (gcn, sage, gat). Options that do not apply are ignored.
    """
    def pick(*names):
        return {k: opts[k] for k in names if k in opts and opts[k] is not None}

    if key == "gcn":
        return GCN(store, prefix, in_dim, out_dim, seed, **pick("act"))
    if key.startswith("sage-"):
        return SAGE(store, prefix, in_dim, out_dim, seed, variant=key[5:], **pick("act"))
    if key == "gat":
        return GAT(store, prefix, in_dim, out_dim, seed, **pick("heads", "act"))
    if key == "gin":
        return GIN(store, prefix, in_dim, out_dim, seed, **pick("eps_init", "eps_learnable"))
    if key == "gain":
        return GAIN(store, prefix, in_dim, out_dim, seed, **pick("eps_init", "eps_learnable", "sigma"))
    if key == "gain-mh":
        return GAINMultiHead(
            store, prefix, in_dim, out_dim, seed, **pick("heads", "eps_init", "eps_learnable", "sigma")
        )
    raise ValueError(f"unknown aggregator {key!r}; expected one of {', '.join(AGGREGATOR_KEYS)}")


class Encoder:
    """Two-hop encoder over sampled fanouts, with an optional linear classifier.

    Hop samples follow the usual layout: each batch node draws ``hop1``
    neighbors and each of those draws ``hop2``. The first layer turns raw
    features into hidden vectors for both the batch nodes (from their hop-1
    samples) and the hop-1 nodes (from their hop-2 samples); the second layer
    combines them. Output rows are l2-normalized.
    """

    def __init__(
        self, key, in_dim, dim, fanouts=None, dropout=0.1, seed=0, num_classes=None, store=None, **opts
    ):
        self.key = key
        self.in_dim = in_dim
        self.dim = dim
        self.fanouts = fanouts or FanoutPlan()
        self.dropout = dropout
        self.store = store if store is not None else T.ParamStore()
        self.layers = [
            build_aggregator(key, self.store, "hop1", in_dim, dim, seed, **opts),
            build_aggregator(key, self.store, "hop2", dim, dim, seed, **opts),
        ]
        self.classifier = None
        if num_classes:
            self.classifier = (
                self.store.add("clf.W", T.init_params((dim, num_classes), seed=_seed(seed, "clf.W"))),
                self.store.add("clf.b", T.init_params((num_classes,), "zeros")),
            )

    def encode(self, nodes, features, csr, rng, train=False):
        nodes = np.asarray(nodes, dtype=np.int64)
        indptr, indices = csr
        B = len(nodes)
        s1, s2 = self.fanouts.hop1, self.fanouts.hop2
        hop1 = sample_neighbors(indptr, indices, nodes, s1, rng)
        hop2 = sample_neighbors(indptr, indices, hop1.ravel(), s2, rng)
        X = T.Tensor(features)
        x_self = T.take(X, nodes, axis=0)
        x_h1 = T.take(X, hop1.ravel(), axis=0)
        x_h2 = T.take(X, hop2.ravel(), axis=0)
        if train and self.dropout > 0:
            x_self, x_h1, x_h2 = (T.dropout(x, self.dropout, rng) for x in (x_self, x_h1, x_h2))
        D = features.shape[1]
        first = self.layers[0]
        h_self = first(x_self, T.reshape(x_h1, (B, s1, D)), rng)
        h_h1 = first(x_h1, T.reshape(x_h2, (B * s1, s2, D)), rng)
        if train and self.dropout > 0:
            h_self, h_h1 = T.dropout(h_self, self.dropout, rng), T.dropout(h_h1, self.dropout, rng)
        out = self.layers[1](h_self, T.reshape(h_h1, (B, s1, self.dim)), rng)
        return T.l2_normalize(out)

    def logits(self, z):
        W, b = self.classifier
        return z @ W + b
