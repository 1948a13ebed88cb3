"""Halton vertex sets, r-disc / k-NN graphs, shift operators and node features."""
import json
from dataclasses import dataclass

import numpy as np

from . import env2d, kernels
from .errors import DomainError

PRIMES = (2, 3, 5, 7, 11, 13, 17, 19)
EDGE_SHIFT_KINDS = ("adjacency", "normalized", "random_walk")
SHIFT_KINDS = EDGE_SHIFT_KINDS + ("knn",)


def halton_points(n, d):
    """First ``n`` Halton points in ``[0,1]^d``: row ``i`` is the radical
    inverse of ``i + 1`` in each of the first ``d`` primes."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if not 1 <= d <= len(PRIMES):
        raise DomainError(f"unsupported dimension {d}; 1 <= d <= {len(PRIMES)}")
    idx = np.arange(1, n + 1, dtype=np.int64)
    out = np.empty((n, d))
    for c, base in enumerate(PRIMES[:d]):
        rem = idx.copy()
        frac = np.full(n, 1.0 / base)
        val = np.zeros(n)
        while np.any(rem > 0):
            val += (rem % base) * frac
            rem //= base
            frac /= base
        out[:, c] = val
    return out


def dispersion(points, probes=100):
    """Largest distance from a ``probes x probes`` lattice over ``[0,1]^2``
    to its nearest sample."""
    g = (np.arange(probes) + 0.5) / probes
    grid = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    points = np.asarray(points, dtype=np.float64)
    worst = 0.0
    for g0 in range(0, grid.shape[0], 4096):
        gb = grid[g0 : g0 + 4096]
        best = np.full(gb.shape[0], np.inf)
        for lo in range(0, points.shape[0], 256):
            blk = points[lo : lo + 256]
            d2 = ((gb[:, None, :] - blk[None, :, :]) ** 2).sum(axis=2)
            best = np.minimum(best, d2.min(axis=1))
        worst = max(worst, float(best.max()))
    return float(np.sqrt(worst))


class ShiftOperator:
    """Sparse ``N x N`` operator in CSR form, with its transpose kept for the
    backward passes."""

    def __init__(self, n, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        self.n = int(n)
        self.indptr, self.indices, self.data = _csr(self.n, rows, cols, vals)
        self.t_indptr, self.t_indices, self.t_data = _csr(self.n, cols, rows, vals)

    @property
    def nnz(self):
        return int(self.indices.shape[0])

    def rows(self):
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def coo(self):
        return self.rows(), self.indices.copy(), self.data.copy()

    def apply(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.n:
            raise DomainError(f"shift is {self.n}x{self.n}, input has shape {x.shape}")
        return kernels.spmm(self.indptr, self.indices, self.data, x)

    def apply_t(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.n:
            raise DomainError(f"shift is {self.n}x{self.n}, input has shape {x.shape}")
        return kernels.spmm(self.t_indptr, self.t_indices, self.t_data, x)

    def to_dense(self):
        out = np.zeros((self.n, self.n))
        np.add.at(out, (self.rows(), self.indices), self.data)
        return out

    def scaled(self, factor):
        r, c, v = self.coo()
        return ShiftOperator(self.n, r, c, v * factor)

    def permuted(self, perm):
        """``P^T S P`` for the permutation with ``out[i] = in[perm[i]]``."""
        mapping = _mapping(perm, self.n)
        inv = np.empty_like(mapping)
        inv[mapping] = np.arange(self.n)
        r, c, v = self.coo()
        return ShiftOperator(self.n, inv[r], inv[c], v)

    def spectral_radius_estimate(self, iters=10):
        v = np.ones((self.n, 1))
        lam = 0.0
        for _ in range(iters):
            w = self.apply(v)
            norm = np.linalg.norm(w)
            if norm == 0.0:
                return 0.0
            lam = float(norm / np.linalg.norm(v))
            v = w / norm
        return lam

    def normalized(self, iters=10):
        lam = self.spectral_radius_estimate(iters)
        return self if lam == 0.0 else self.scaled(1.0 / lam)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        r, c = np.nonzero(dense)
        return cls(dense.shape[0], r, c, dense[r, c])


def _csr(n, rows, cols, vals):
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), np.ascontiguousarray(cols), np.ascontiguousarray(vals)


@dataclass(frozen=True)
class Permutation:
    """Bijection of ``{0..N-1}``; applying it maps row ``i`` of the output to
    row ``mapping[i]`` of the input (``P^T x``)."""

    mapping: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.int64)
        if m.ndim != 1 or not np.array_equal(np.sort(m), np.arange(m.shape[0])):
            raise DomainError("mapping is not a bijection")
        m.setflags(write=False)
        object.__setattr__(self, "mapping", m)

    def __len__(self):
        return self.mapping.shape[0]

    def matrix(self):
        n = len(self)
        p = np.zeros((n, n))
        p[self.mapping, np.arange(n)] = 1.0
        return p

    def inverse(self):
        inv = np.empty_like(self.mapping)
        inv[self.mapping] = np.arange(len(self))
        return Permutation(inv)

    @classmethod
    def random(cls, n, rng):
        return cls(rng.permutation(n))


def _mapping(perm, n):
    m = perm.mapping if isinstance(perm, Permutation) else Permutation(perm).mapping
    if m.shape[0] != n:
        raise DomainError(f"permutation of length {m.shape[0]} applied to size {n}")
    return m


def permute_problem(features, perm):
    features = np.asarray(features)
    return features[_mapping(perm, features.shape[0])]


class CSpaceGraph:
    def __init__(self, positions, edges, weights, shift, shift_kind="adjacency"):
        if shift_kind not in SHIFT_KINDS:
            raise DomainError(f"unknown shift kind {shift_kind!r}")
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.shift = shift
        self.shift_kind = shift_kind
        self._adj = None

    @property
    def n(self):
        return self.positions.shape[0]

    def adjacency(self):
        """Symmetric CSR ``(indptr, indices, weights)`` used by graph search."""
        if self._adj is None:
            e = self.edges
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            w = np.concatenate([self.weights, self.weights])
            self._adj = _csr(self.n, rows, cols, w)
        return self._adj

    def to_dict(self):
        return {
            "positions": self.positions.tolist(),
            "edges": self.edges.tolist(),
            "weights": self.weights.tolist(),
            "shift_kind": self.shift_kind,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc, knn_k=None):
        pos = np.asarray(doc["positions"], dtype=np.float64)
        edges = np.asarray(doc["edges"], dtype=np.int64).reshape(-1, 2)
        kind = doc["shift_kind"]
        if kind == "knn":
            if knn_k is None:
                knn_k = int(doc.get("k", 1))
            shift = build_knn_shift(pos, knn_k)
        else:
            shift = _edge_shift(pos.shape[0], edges, kind)
        return cls(pos, edges, doc["weights"], shift, kind)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _adjacency_shift(n, edges):
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    return ShiftOperator(n, rows, cols, np.ones(rows.shape[0]))


def _edge_shift(n, edges, kind):
    shift = _adjacency_shift(n, edges)
    if kind == "normalized":
        return shift.normalized()
    if kind == "random_walk":
        # D^-1 A; isolated vertices keep an empty row
        deg = np.diff(shift.indptr).astype(np.float64)
        rows = shift.rows()
        return ShiftOperator(n, rows, shift.indices, 1.0 / deg[rows])
    return shift


def build_r_disc_graph(points, r, world=None, shift_kind="adjacency", step=env2d.DEFAULT_STEP):
    """Undirected edges between all pairs within distance ``r``; with a world,
    only pairs whose connecting segment is free."""
    if r <= 0:
        raise DomainError("r must be positive")
    if shift_kind not in EDGE_SHIFT_KINDS:
        raise DomainError(f"r-disc graphs take one of {EDGE_SHIFT_KINDS} shifts")
    points = np.ascontiguousarray(points, dtype=np.float64)
    pairs = kernels.radius_pairs(points, float(r))
    if world is not None and pairs.shape[0]:
        ok = env2d.segments_free(world, points[pairs[:, 0]], points[pairs[:, 1]], step)
        pairs = pairs[ok]
    weights = np.sqrt(((points[pairs[:, 0]] - points[pairs[:, 1]]) ** 2).sum(axis=1))
    return CSpaceGraph(points, pairs, weights, _edge_shift(points.shape[0], pairs, shift_kind), shift_kind)


def restrict_to_world(graph, world, step=env2d.DEFAULT_STEP):
    """Same vertices, keeping only the edges whose segment is free in ``world``."""
    e = graph.edges
    if e.shape[0] == 0:
        return graph
    ok = env2d.segments_free(world, graph.positions[e[:, 0]], graph.positions[e[:, 1]], step)
    edges = e[ok]
    shift = _adjacency_shift(graph.n, edges)
    return CSpaceGraph(graph.positions, edges, graph.weights[ok], shift, "adjacency")


def radius_for_degree(points, mean_degree=10.0):
    """Smallest radius whose r-disc graph over ``points`` has at least the
    requested mean degree."""
    from math import gamma, pi

    points = np.ascontiguousarray(points, dtype=np.float64)
    n, d = points.shape
    if not 0 < mean_degree <= n - 1:
        raise DomainError(f"mean degree must lie in (0, {n - 1}] for {n} points")
    want = int(np.ceil(mean_degree * n / 2.0))
    unit_ball = pi ** (d / 2) / gamma(d / 2 + 1)
    r = (mean_degree / (n * unit_ball)) ** (1.0 / d)
    while True:
        pairs = kernels.radius_pairs(points, 2.0 * r)
        if pairs.shape[0] >= want:
            break
        r *= 2.0
    dist = np.sqrt(((points[pairs[:, 0]] - points[pairs[:, 1]]) ** 2).sum(axis=1))
    r = float(np.sort(dist)[want - 1])
    # sqrt can round below the squared-distance test used by the pair kernel
    while kernels.radius_pairs(points, r).shape[0] < want:
        r = float(np.nextafter(r, np.inf))
    return r


def build_knn_shift(points, k):
    """Binary operator with ``S[n, m] = 1`` iff ``m`` is among the ``k`` nearest
    neighbours of ``n``; ties go to the lower index."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k < n:
        raise DomainError("need 1 <= k < N")
    nbr = kernels.knn(points, int(k))
    rows = np.repeat(np.arange(n), k)
    return ShiftOperator(n, rows, nbr.ravel(), np.ones(n * k))


def make_features(graph, problem):
    """Rows ``[x_init - x_n, x_goal - x_n, f_n]`` with ``f_n = 1`` iff node
    ``n`` is free."""
    pos = graph.positions
    free = env2d.points_free(problem.world, pos).astype(np.float64)
    return np.hstack([problem.x_init - pos, problem.x_goal - pos, free[:, None]])
