"""Property suites: permutation equivariance, analytic gradients, oracle
equivalence of the search and kernels, and pendulum energy drift.

Each suite returns a :class:`SuiteResult`; :func:`run_all` collects them
into a JSON-friendly report. A failing check carries the seed that produced
its counterexample.
"""
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import cspace_graph as cg
from . import dynamics, env2d, kernels, search
from .diffkernel import Dense, GATLayer, GraphConv, GraphMaxPool, Sequential, Tanh, check_gradients
from .models import GnnCvae, GraphRegressor
from .rng import stream

EQUIVARIANCE_TOL = 1e-10
MODEL_INVARIANCE_TOL = 1e-8
GRADIENT_TOL = 1e-4
ENERGY_TOL = 1e-6


@dataclass
class SuiteResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "metrics": self.metrics, "failures": self.failures}


def _random_graph(rng, n, mean_degree=6.0):
    pts = rng.random((n, 2))
    r = cg.radius_for_degree(pts, min(mean_degree, n - 1))
    return cg.build_r_disc_graph(pts, r, shift_kind="normalized")


# ---------------------------------------------------------------------------
# equivariance


def equivariance_suite(seed=0, trials=200, max_nodes=50):
    """Graph filters are permutation equivariant and every model's prediction
    is invariant under joint relabeling of shift rows/cols and feature rows.

    Each trial draws a random graph of at most ``max_nodes`` vertices, a
    random filter (order, widths) and a random permutation; models are
    checked on every tenth trial, cycling through the three kinds."""
    worst_layer, worst_model = 0.0, 0.0
    failures = []
    model_kinds = ("gnn", "gat", "gnn_cvae")
    for t in range(trials):
        rng = stream(seed, "verify-equivariance", t)
        n = int(rng.integers(3, max_nodes + 1))
        g = _random_graph(rng, n, min(6.0, n - 1.0))
        f_in, f_out = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        x = rng.standard_normal((n, f_in))
        perm = cg.Permutation.random(n, rng)
        s_p = g.shift.permuted(perm)
        x_p = cg.permute_problem(x, perm)
        for layer in (GraphConv(f_in, f_out, int(rng.integers(0, 5)), rng), GATLayer(f_in, f_out, rng)):
            dev = float(np.abs(layer.forward(x_p, s_p) - cg.permute_problem(layer.forward(x, g.shift), perm)).max())
            worst_layer = max(worst_layer, dev)
            if dev > EQUIVARIANCE_TOL:
                failures.append({"check": type(layer).__name__, "seed": seed, "trial": t, "deviation": dev})
        if t % 10 == 0:
            kind = model_kinds[(t // 10) % 3]
            if kind == "gnn_cvae":
                model = GnnCvae(f_in, 2, seed=t, widths=(8, 8), head_width=8)
            else:
                model = GraphRegressor(f_in, 2, seed=t, kind=kind, widths=(8, 8), head_width=8)
            dev = float(np.abs(model.predict(s_p, x_p) - model.predict(g.shift, x)).max())
            worst_model = max(worst_model, dev)
            if dev > MODEL_INVARIANCE_TOL:
                failures.append({"check": kind, "seed": seed, "trial": t, "deviation": dev})
    return SuiteResult(
        "equivariance",
        not failures,
        {"trials": trials, "max_layer_deviation": worst_layer, "max_model_deviation": worst_model,
         "tolerance": EQUIVARIANCE_TOL, "model_tolerance": MODEL_INVARIANCE_TOL},
        failures,
    )


# ---------------------------------------------------------------------------
# gradients


class _Fragment:
    """Scalar fragment ``0.5 * ||net(x) - target||^2`` around a layer stack."""

    def __init__(self, net, shift, target):
        self.net = net
        self.shift = shift
        self.target = target

    def parameters(self):
        return self.net.parameters()

    def loss_and_grads(self, x):
        self.net.zero_grad()
        y = self.net.forward(x, self.shift)
        dy = y - self.target
        loss = 0.5 * float((dy**2).sum())
        dx = self.net.backward(dy)
        return loss, self.net.gradients(), dx


class _ElboFragment:
    def __init__(self, model, shift, y, eps):
        self.model = model
        self.shift = shift
        self.y = y
        self.eps = eps

    def parameters(self):
        return self.model.parameters()

    def loss_and_grads(self, x):
        self.model.zero_grad()
        loss, _, _, dx = self.model.neg_elbo(self.shift, x, self.y, self.eps)
        return loss, self.model.gradients(), dx


def gradient_fragments(seed=0, n=12):
    """``(layer name, fragment, input)`` triples covering every layer kind."""
    rng = stream(seed, "verify-gradients")
    g = _random_graph(rng, n, 4.0)
    s = g.shift
    x = rng.standard_normal((n, 3))
    out = []

    def add(name, layers, x_in, target_shape):
        net = Sequential(layers)
        out.append((name, _Fragment(net, s, rng.standard_normal(target_shape)), x_in))

    add("GraphConv", [("conv", GraphConv(3, 4, 3, rng))], x, (n, 4))
    add("GATLayer", [("gat", GATLayer(3, 4, rng))], x, (n, 4))
    add("Dense", [("fc", Dense(3, 4, rng))], x, (n, 4))
    add("Tanh", [("act", Tanh())], x, (n, 3))
    add("GraphMaxPool", [("pool", GraphMaxPool())], x, (1, 3))
    add("GraphRegressor", GraphRegressor(3, 2, seed=seed, widths=(5, 5), head_width=4).net.layers, x, (1, 2))
    add("GatRegressor", GraphRegressor(3, 2, seed=seed, kind="gat", widths=(5, 5), head_width=4).net.layers, x, (1, 2))
    cvae = GnnCvae(3, 2, seed=seed, widths=(5, 5), head_width=4)
    out.append(("GnnCvae.neg_elbo", _ElboFragment(cvae, s, rng.standard_normal(2), rng.standard_normal((2, 3))), x))
    return out


def gradient_suite(seed=0, tolerance=GRADIENT_TOL, fragments=50):
    """Every backward pass against central finite differences, over at
    least ``fragments`` randomly drawn fragments."""
    per = {}
    failures = []
    checked = 0
    round_ = 0
    while checked < fragments:
        sub = int(stream(seed, "verify-gradient-rounds", round_).integers(2**62))
        for name, frag, x in gradient_fragments(sub):
            rep = check_gradients(frag, x, tolerance=tolerance, name=name)
            per[name] = max(per.get(name, 0.0), rep.max_rel_error)
            checked += 1
            if not rep.passed:
                failures.append({"layer": name, "array": rep.worst, "rel_error": rep.max_rel_error, "seed": sub})
        round_ += 1
    return SuiteResult("gradients", not failures,
                       {"fragments": checked, "max_rel_error": per, "tolerance": tolerance}, failures)


# ---------------------------------------------------------------------------
# oracles


def _exhaustive_shortest(n, edges, weights, src, dst, banned=()):
    """Cheapest simple path by enumerating every vertex ordering."""
    w = {}
    for (a, b), c in zip(edges, weights):
        w[(a, b)] = w[(b, a)] = c
    best = np.inf
    inner = [v for v in range(n) if v not in (src, dst) and v not in banned]
    for k in range(len(inner) + 1):
        for mid in itertools.permutations(inner, k):
            seq = (src,) + mid + (dst,)
            cost = 0.0
            for a, b in zip(seq, seq[1:]):
                if (a, b) not in w:
                    cost = np.inf
                    break
                cost += w[(a, b)]
            best = min(best, cost)
    return best


def small_graph(rng, n):
    pts = rng.random((n, 2))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.45]
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    base = np.sqrt(((pts[edges[:, 0]] - pts[edges[:, 1]]) ** 2).sum(axis=1)) if len(pairs) else np.zeros(0)
    weights = base * rng.uniform(0.5, 2.0, size=base.shape[0])
    return cg.CSpaceGraph(pts, edges, weights, cg._adjacency_shift(n, edges), "adjacency")


def oracle_suite(seed=0, trials=500):
    """A* against exhaustive enumeration on graphs of at most 8 vertices, the
    bottleneck ranking against brute force, and the two kernel backends
    against each other."""
    failures = []
    worst = 0.0
    for t in range(trials):
        rng = stream(seed, "verify-oracle", t)
        n = int(rng.integers(2, 9))
        g = small_graph(rng, n)
        src, dst = 0, n - 1
        p = search.path_between(g, src, dst)
        ref = _exhaustive_shortest(n, g.edges.tolist(), g.weights.tolist(), src, dst)
        got = np.inf if p is None else p.cost
        if np.isfinite(ref) != np.isfinite(got) or (np.isfinite(ref) and abs(ref - got) > 1e-12 * max(1.0, ref)):
            failures.append({"check": "astar", "seed": seed, "trial": t, "expected": ref, "got": got})
            continue
        if p is None:
            continue
        worst = max(worst, abs(ref - got))
        ref_scores = []
        for v, c_alt in search.bottleneck_scores(g, p):
            ref_alt = _exhaustive_shortest(n, g.edges.tolist(), g.weights.tolist(), src, dst, banned=(v,))
            ref_scores.append((v, ref_alt))
            ok = (np.isinf(ref_alt) and np.isinf(c_alt)) or abs(ref_alt - c_alt) <= 1e-12 * max(1.0, ref_alt)
            if not ok:
                failures.append({"check": "bottleneck", "seed": seed, "trial": t, "vertex": v})
        ref_rank = sorted((vc for vc in ref_scores if vc[1] > p.cost * (1 + 1e-9)), key=lambda vc: (-vc[1], vc[0]))
        if [v for v, _ in ref_rank] != search.bottleneck_nodes(g, None, p):
            failures.append({"check": "bottleneck ranking", "seed": seed, "trial": t})
    failures.extend(backend_failures(seed))
    return SuiteResult("oracles", not failures, {"graphs": trials, "max_astar_abs_error": worst}, failures)


def backend_failures(seed=0):
    """Compiled and pure-numpy kernels must agree exactly."""
    if not kernels.HAVE_NUMBA:
        return []
    rng = stream(seed, "verify-backends")
    out = []
    pts = rng.random((300, 2))
    x = rng.standard_normal((300, 3))
    g = cg.build_r_disc_graph(pts, 0.1)
    s = g.shift
    if not np.allclose(kernels.spmm_nb(s.indptr, s.indices, s.data, x),
                       kernels.spmm_np(s.indptr, s.indices, s.data, x), rtol=0, atol=1e-12):
        out.append({"check": "spmm backends", "seed": seed})
    pa, pb = kernels.radius_pairs_nb(pts, 0.1), kernels.radius_pairs_np(pts, 0.1)
    if not np.array_equal(pa, pb):
        out.append({"check": "radius_pairs backends", "seed": seed})
    if not np.array_equal(kernels.knn_nb(pts, 5), kernels.knn_np(pts, 5)):
        out.append({"check": "knn backends", "seed": seed})
    world = env2d.generate_world(int(rng.integers(2**31)), 2, 0.05)
    a, b = rng.random((200, 2)), rng.random((200, 2))
    if not np.array_equal(kernels.segments_free_nb(a, b, world.rects, world.discs, env2d.DEFAULT_STEP),
                          kernels.segments_free_np(a, b, world.rects, world.discs, env2d.DEFAULT_STEP)):
        out.append({"check": "segments_free backends", "seed": seed})
    return out


# ---------------------------------------------------------------------------
# energy


def energy_suite(duration=10.0, dt=0.01, states=((0.3, 0.0), (-np.pi / 2 + 1.0, 0.5), (0.0, 2.0))):
    """Relative energy drift of unforced RK4 trajectories."""
    sys_ = dynamics.DEFAULT_PENDULUM
    worst = 0.0
    failures = []
    for s0 in states:
        traj = sys_.rollout(np.asarray(s0), 0.0, dt, int(round(duration / dt)))
        e0 = sys_.energy(np.asarray(s0))
        drift = float(np.abs(sys_.energy(traj) - e0).max() / abs(e0))
        worst = max(worst, drift)
        if drift > ENERGY_TOL:
            failures.append({"check": "energy", "state": list(s0), "drift": drift})
    return SuiteResult("energy", not failures, {"max_relative_drift": worst, "tolerance": ENERGY_TOL}, failures)


SUITES = {
    "equivariance": equivariance_suite,
    "gradients": gradient_suite,
    "oracles": oracle_suite,
    "energy": lambda seed=0: energy_suite(),
}


def run_all(seed=0, names=None):
    results = [SUITES[n](seed=seed) for n in (names or SUITES)]
    return {"passed": all(r.passed for r in results), "seed": seed, "suites": [r.to_dict() for r in results]}
