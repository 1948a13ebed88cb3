"""Layers with closed-form backward passes.

Tensors are plain C-ordered float64 ndarrays. Each layer caches what its
backward pass needs during ``forward``, so one instance serves one
forward/backward at a time. ``backward`` accumulates parameter gradients
into ``self.grads`` and returns the gradient with respect to the input.
"""
import numpy as np

from ..errors import DomainError

LEAKY_SLOPE = 0.2


class Layer:
    needs_graph = False

    def __init__(self):
        self.params = {}
        self.grads = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def _init_grads(self):
        self.zero_grad()


def glorot(rng, fan_in, fan_out, shape):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


class GraphConv(Layer):
    """``z = sum_k (S^k x) H_k + b`` with ``S^k x`` built by repeated shifts."""

    needs_graph = True

    def __init__(self, f_in, f_out, order, rng, bias=True):
        super().__init__()
        if order < 0:
            raise DomainError("filter order must be >= 0")
        self.order = order
        scale = 1.0 / np.sqrt(order + 1)
        self.params["taps"] = scale * glorot(rng, f_in, f_out, (order + 1, f_in, f_out))
        if bias:
            self.params["bias"] = np.zeros(f_out)
        self._init_grads()

    def forward(self, x, shift):
        if x.ndim != 2 or x.shape[1] != self.params["taps"].shape[1]:
            raise DomainError(f"GraphConv expects (N, {self.params['taps'].shape[1]}), got {x.shape}")
        taps = self.params["taps"]
        powers = [x]
        for _ in range(self.order):
            powers.append(shift.apply(powers[-1]))
        z = powers[0] @ taps[0]
        for k in range(1, self.order + 1):
            z += powers[k] @ taps[k]
        if "bias" in self.params:
            z += self.params["bias"]
        self._powers = powers
        self._shift = shift
        return z

    def backward(self, dz):
        taps = self.params["taps"]
        for k, p in enumerate(self._powers):
            self.grads["taps"][k] += p.T @ dz
        if "bias" in self.params:
            self.grads["bias"] += dz.sum(axis=0)
        # dx = sum_k (S^T)^k dz H_k^T, evaluated Horner-style
        acc = dz @ taps[self.order].T
        for k in range(self.order - 1, -1, -1):
            acc = self._shift.apply_t(acc) + dz @ taps[k].T
        return acc


def attention_pattern(shift):
    """CSR pattern of ``shift`` plus self-loops, as ``(indptr, rows, cols)``.

    Cached on the shift object."""
    cached = getattr(shift, "_gat_pattern", None)
    if cached is not None:
        return cached
    n = shift.n
    rows = np.concatenate([shift.rows(), np.arange(n)])
    cols = np.concatenate([shift.indices, np.arange(n)])
    key = np.unique(rows * n + cols)
    rows, cols = key // n, key % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    pattern = (np.cumsum(indptr), rows, cols)
    shift._gat_pattern = pattern
    return pattern


class GATLayer(Layer):
    """Single-head graph attention over ``neighbours(n) | {n}``.

    Scores ``e_nj = leaky(a_src . Wx_n + a_dst . Wx_j)``, softmax-normalised
    per node, then ``out_n = sum_j alpha_nj Wx_j``.
    """

    needs_graph = True

    def __init__(self, f_in, f_out, rng, slope=LEAKY_SLOPE):
        super().__init__()
        self.slope = slope
        self.params["weight"] = glorot(rng, f_in, f_out, (f_in, f_out))
        self.params["attention"] = glorot(rng, 2 * f_out, 1, (2 * f_out,))
        self._init_grads()

    def forward(self, x, shift):
        w = self.params["weight"]
        if x.ndim != 2 or x.shape[1] != w.shape[0]:
            raise DomainError(f"GATLayer expects (N, {w.shape[0]}), got {x.shape}")
        f = w.shape[1]
        a = self.params["attention"]
        indptr, rows, cols = attention_pattern(shift)
        starts = indptr[:-1]
        h = x @ w
        s_src = h @ a[:f]
        s_dst = h @ a[f:]
        pre = s_src[rows] + s_dst[cols]
        e = np.where(pre > 0, pre, self.slope * pre)
        e_max = np.maximum.reduceat(e, starts)
        ex = np.exp(e - e_max[rows])
        alpha = ex / np.add.reduceat(ex, starts)[rows]
        out = np.zeros_like(h)
        np.add.at(out, rows, alpha[:, None] * h[cols])
        self._cache = (x, h, pre, alpha, rows, cols, starts)
        return out

    def attention_weights(self):
        """``(rows, cols, alpha)`` from the last forward pass."""
        _, _, _, alpha, rows, cols, _ = self._cache
        return rows, cols, alpha

    def backward(self, dout):
        x, h, pre, alpha, rows, cols, starts = self._cache
        w = self.params["weight"]
        a = self.params["attention"]
        f = w.shape[1]
        n = h.shape[0]
        dh = np.zeros_like(h)
        np.add.at(dh, cols, alpha[:, None] * dout[rows])
        dalpha = (dout[rows] * h[cols]).sum(axis=1)
        inner = np.add.reduceat(alpha * dalpha, starts)
        de = alpha * (dalpha - inner[rows])
        dpre = de * np.where(pre > 0, 1.0, self.slope)
        ds_src = np.add.reduceat(dpre, starts)
        ds_dst = np.bincount(cols, weights=dpre, minlength=n)
        dh += np.outer(ds_src, a[:f]) + np.outer(ds_dst, a[f:])
        self.grads["attention"][:f] += h.T @ ds_src
        self.grads["attention"][f:] += h.T @ ds_dst
        self.grads["weight"] += x.T @ dh
        return dh @ w.T


class Dense(Layer):
    def __init__(self, f_in, f_out, rng, zero=False):
        super().__init__()
        self.params["weight"] = np.zeros((f_in, f_out)) if zero else glorot(rng, f_in, f_out, (f_in, f_out))
        self.params["bias"] = np.zeros(f_out)
        self._init_grads()

    def forward(self, x, shift=None):
        if x.ndim != 2 or x.shape[1] != self.params["weight"].shape[0]:
            raise DomainError(f"Dense expects (B, {self.params['weight'].shape[0]}), got {x.shape}")
        self._x = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, dy):
        self.grads["weight"] += self._x.T @ dy
        self.grads["bias"] += dy.sum(axis=0)
        return dy @ self.params["weight"].T


class Tanh(Layer):
    def forward(self, x, shift=None):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y**2)


class GraphMaxPool(Layer):
    """Per-feature maximum over nodes; the gradient goes to the first argmax."""

    def forward(self, x, shift=None):
        if x.ndim != 2 or x.shape[0] == 0:
            raise DomainError("maxpool needs a non-empty (N, F) input")
        self._arg = np.argmax(x, axis=0)
        self._n = x.shape[0]
        return x[self._arg, np.arange(x.shape[1])][None, :]

    def backward(self, dy):
        dx = np.zeros((self._n, dy.shape[1]))
        dx[self._arg, np.arange(dy.shape[1])] = dy[0]
        return dx


def broadcast_append(x, v):
    """Append row vector ``v`` to every row of ``x``."""
    v = np.asarray(v, dtype=np.float64).reshape(1, -1)
    return np.hstack([x, np.repeat(v, x.shape[0], axis=0)])


def broadcast_append_backward(dy, f):
    return dy[:, :f], dy[:, f:].sum(axis=0, keepdims=True)


class Sequential:
    """Named layer stack. Graph layers receive the shift operator."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, shift=None):
        for _, layer in self.layers:
            x = layer.forward(x, shift)
        return x

    def backward(self, dy):
        for _, layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def parameters(self, prefix=""):
        out = {}
        for name, layer in self.layers:
            for k, v in layer.params.items():
                out[f"{prefix}{name}.{k}"] = v
        return out

    def gradients(self, prefix=""):
        out = {}
        for name, layer in self.layers:
            for k, v in layer.grads.items():
                out[f"{prefix}{name}.{k}"] = v
        return out

    def zero_grad(self):
        for _, layer in self.layers:
            layer.zero_grad()


def squared_error(y_hat, labels):
    """``sum_i ||y_hat - y_i||^2`` over label rows and its gradient wrt ``y_hat``."""
    diff = y_hat - labels
    return float((diff**2).sum()), 2.0 * diff.sum(axis=0, keepdims=True)


def gaussian_kl(mu, logvar):
    """``KL(N(mu, diag(exp(logvar))) || N(0, I))`` and its gradients."""
    var = np.exp(logvar)
    kl = 0.5 * float(np.sum(mu**2 + var - 1.0 - logvar))
    return kl, mu.copy(), 0.5 * (var - 1.0)
