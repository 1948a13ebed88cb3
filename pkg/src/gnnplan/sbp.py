"""Sampling-based planners with pluggable samplers.

Kinodynamic RRT drives the pendulum with a small set of constant torques;
BiRRT plans the planar arm in joint space. A learned sampler reads the
current tree as a graph (each node linked to its nearest tree nodes) whose
node features are the offsets to the start and the goal.
"""
import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import dynamics, kernels
from ._parallel import ordered_map
from .cspace_graph import ShiftOperator
from .dynamics import DEFAULT_PENDULUM, wrap_angle
from .errors import DatasetError, DomainError, GenerationError
from .models import Example, GnnCvae
from .rng import stream
from .search import assign_splits

log = logging.getLogger(__name__)

RUNS_HEADER = ("problem", "sampler", "seed", "success", "nodes", "collision_checks", "cost", "ms")

TREE_NEIGHBORS = 5
INIT_SEEDS = 10
EXPLORE = 0.2
DT_EXTEND = 0.25
TOL_THETA = 0.2
TOL_OMEGA = 0.5
OMEGA_WEIGHT = 0.1
ARM_STEP = 0.1
ARM_INTERP = 20
ARM_GOAL_TOL = 0.1


# ---------------------------------------------------------------------------
# state spaces


@dataclass(frozen=True)
class StateSpace:
    """Box of states; ``wrap`` marks angular coordinates living on
    ``(-pi, pi]``. Learned samplers work in coordinates scaled by half the
    range and anchored at the tree root."""

    low: tuple
    high: tuple
    wrap: tuple

    @property
    def dim(self):
        return len(self.low)

    @property
    def lo(self):
        return np.asarray(self.low, dtype=np.float64)

    @property
    def hi(self):
        return np.asarray(self.high, dtype=np.float64)

    @property
    def wrap_mask(self):
        return np.asarray(self.wrap, dtype=np.bool_)

    @property
    def scale(self):
        return 0.5 * (self.hi - self.lo)

    def diff(self, a, b):
        """``a - b`` with angular coordinates wrapped."""
        t = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
        return np.where(self.wrap_mask, wrap_angle(t), t)

    def project(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.where(self.wrap_mask, wrap_angle(s), np.clip(s, self.lo, self.hi))

    def contains(self, s):
        s = np.asarray(s, dtype=np.float64)
        ok = (s >= self.lo) & (s <= self.hi)
        return bool(np.all(ok | self.wrap_mask))

    def uniform(self, rng):
        return self.project(rng.uniform(self.lo, self.hi))

    def features(self, states, x_init, x_goal):
        s = self.scale
        return np.hstack([self.diff(x_init, states) / s, self.diff(x_goal, states) / s])

    def to_label(self, root, state):
        return self.diff(state, root) / self.scale

    def from_label(self, root, y):
        return self.project(np.asarray(root, dtype=np.float64) + np.asarray(y) * self.scale)


def pendulum_space(system=DEFAULT_PENDULUM):
    return StateSpace((-np.pi, -system.omega_max), (np.pi, system.omega_max), (True, False))


def arm_space(dim=dynamics.N_JOINTS):
    return StateSpace((-np.pi,) * dim, (np.pi,) * dim, (True,) * dim)


# ---------------------------------------------------------------------------
# tree


class PlannerTree:
    """Growing node store with parents, edge controls, an active mask for
    nearest-node queries, and incrementally maintained k-nearest lists.

    Node 0 is the root. Nodes added before :meth:`seal_initial` form the
    initial graph; seed nodes there are inactive (parent ``-1``) and only
    inform the learned sampler."""

    def __init__(self, space, root, knn=TREE_NEIGHBORS, knn_weights=None, capacity=256):
        self.space = space
        self.k = int(knn)
        d = space.dim
        self.knn_weights = np.ones(d) if knn_weights is None else np.asarray(knn_weights, dtype=np.float64)
        self.states = np.zeros((capacity, d))
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.control = np.zeros(capacity)
        self.active = np.zeros(capacity, dtype=np.bool_)
        self.nbr = np.full((capacity, max(self.k, 1)), -1, dtype=np.int64)
        self.nbr_d = np.full((capacity, max(self.k, 1)), np.inf)
        self.cnt = np.zeros(capacity, dtype=np.int64)
        self.n = 0
        self.n_init = 0
        self.add(root, -1)

    def _grow(self):
        cap = 2 * self.states.shape[0]

        def ext(a, fill):
            out = np.full((cap,) + a.shape[1:], fill, dtype=a.dtype)
            out[: a.shape[0]] = a
            return out

        self.states = ext(self.states, 0.0)
        self.parent = ext(self.parent, -1)
        self.control = ext(self.control, 0.0)
        self.active = ext(self.active, False)
        self.nbr = ext(self.nbr, -1)
        self.nbr_d = ext(self.nbr_d, np.inf)
        self.cnt = ext(self.cnt, 0)

    def add(self, state, parent, control=0.0, active=True):
        if self.n == self.states.shape[0]:
            self._grow()
        i = self.n
        self.states[i] = state
        self.parent[i] = parent
        self.control[i] = control
        self.active[i] = active
        self.n += 1
        if self.k > 0:
            kernels.knn_insert(self.states, self.n, self.nbr, self.nbr_d, self.cnt,
                               self.knn_weights, self.space.wrap_mask)
        return i

    def seal_initial(self):
        self.n_init = self.n

    @property
    def nodes(self):
        return self.states[: self.n]

    @property
    def expanded(self):
        return self.n - self.n_init

    def shift(self):
        """Tree graph operator: row ``i`` holds ``1/k`` at each of node
        ``i``'s nearest tree nodes."""
        n = self.n
        cnt = self.cnt[:n]
        rows = np.repeat(np.arange(n), cnt)
        mask = np.arange(self.nbr.shape[1])[None, :] < cnt[:, None]
        cols = self.nbr[:n][mask]
        return ShiftOperator(n, rows, cols, np.full(rows.shape[0], 1.0 / max(self.k, 1)))

    def features(self, x_init, x_goal):
        return self.space.features(self.nodes, x_init, x_goal)

    def path_to(self, i):
        out = []
        while i >= 0:
            out.append(int(i))
            i = int(self.parent[i])
        return out[::-1]


def initialize_online_graph(x_init, seed, m=INIT_SEEDS, space=None, is_valid=None, tag=0,
                            knn=TREE_NEIGHBORS, knn_weights=None, max_tries=None):
    """Tree holding ``x_init`` plus ``m`` valid states drawn from a Gaussian
    around it with per-coordinate spread a tenth of the range."""
    if m < 0:
        raise DomainError("m must be >= 0")
    x_init = np.asarray(x_init, dtype=np.float64)
    space = space if space is not None else pendulum_space()
    tree = PlannerTree(space, x_init, knn, knn_weights)
    rng = stream(seed, "init-graph", tag)
    sigma = 0.1 * (space.hi - space.lo)
    budget = max_tries if max_tries is not None else 1000 * max(m, 1)
    tries = 0
    while tree.n < m + 1:
        if tries >= budget:
            raise GenerationError(f"placed {tree.n - 1} of {m} seed states in {budget} draws")
        tries += 1
        s = x_init + sigma * rng.standard_normal(space.dim)
        if not space.contains(s):
            continue
        s = space.project(s)
        if is_valid is not None and not is_valid(s):
            continue
        tree.add(s, -1, active=False)
    tree.seal_initial()
    return tree


# ---------------------------------------------------------------------------
# samplers


class UniformSampler:
    name = "uniform"

    def __call__(self, tree, root, target, rng):
        return tree.space.uniform(rng)


class _SampleGraph:
    """The learned sampler's own graph for one planning tree: the tree's
    initial graph followed by the sampler's earlier draws, mirroring the
    (root, seeds, path prefix) snapshots the model was trained on."""

    def __init__(self, tree):
        self.tree = tree
        self.graph = PlannerTree(tree.space, tree.states[0], tree.k, tree.knn_weights)
        for i in range(1, tree.n_init):
            self.graph.add(tree.states[i], -1, active=False)
        self.cached = None


class LearnedSampler:
    """Draws the next sample from a trained model; with probability
    ``explore`` falls back to a uniform draw.

    The model sees a graph made of the tree's initial graph plus every
    earlier learned draw for that tree, up to ``horizon`` draws; after that
    the graph is frozen. A regressor's prediction is perturbed by Gaussian
    noise of per-coordinate spread ``sigma`` (the validation residual scale);
    a CVAE decodes a fresh standard-normal latent."""

    def __init__(self, model, sigma=None, explore=EXPLORE, name=None, horizon=64):
        if horizon < 0:
            raise DomainError("horizon must be >= 0")
        self.model = model
        self.is_cvae = isinstance(model, GnnCvae)
        self.sigma = None if sigma is None else np.asarray(sigma, dtype=np.float64)
        self.explore = float(explore)
        self.name = name or ("gnn_cvae" if self.is_cvae else "gnn")
        self.horizon = int(horizon)
        self._graphs = {}

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_graphs"] = {}
        return state

    def _graph_for(self, tree):
        g = self._graphs.get(id(tree))
        if g is None or g.tree is not tree:
            if len(self._graphs) >= 2:
                self._graphs.clear()
            g = _SampleGraph(tree)
            self._graphs[id(tree)] = g
        return g

    def draw_label(self, tree, root, target, rng):
        g = self._graph_for(tree)
        frozen = g.graph.n - tree.n_init >= self.horizon
        if self.is_cvae:
            y = self.model.decode(g.graph.shift(), g.graph.features(root, target),
                                  rng.standard_normal(self.model.latent_dim))
        else:
            if g.cached is None or not frozen:
                g.cached = self.model.predict(g.graph.shift(), g.graph.features(root, target))
            y = g.cached
            if self.sigma is not None:
                y = y + self.sigma * rng.standard_normal(y.shape[0])
        return y, g, frozen

    def __call__(self, tree, root, target, rng):
        if rng.random() < self.explore:
            return tree.space.uniform(rng)
        y, g, frozen = self.draw_label(tree, root, target, rng)
        state = tree.space.from_label(root, y)
        if not frozen:
            g.graph.add(state, g.graph.n - 1)
        return state


# ---------------------------------------------------------------------------
# traces


@dataclass
class PlannerTrace:
    problem: int
    sampler: str
    seed: int
    success: bool
    nodes: int
    collision_checks: int
    cost: float
    ms: float
    iterations: int
    edges: int
    path: list = field(default_factory=list)
    controls: list = field(default_factory=list)

    def row(self, with_time=True):
        cost = f"{self.cost:.6f}" if np.isfinite(self.cost) else "nan"
        ms = f"{self.ms:.3f}" if with_time else ""
        return [self.problem, self.sampler, self.seed, int(self.success), self.nodes,
                self.collision_checks, cost, ms]

    def to_dict(self, with_time=True):
        d = {
            "problem": self.problem,
            "sampler": self.sampler,
            "seed": self.seed,
            "success": bool(self.success),
            "nodes": self.nodes,
            "collision_checks": self.collision_checks,
            "cost": self.cost if np.isfinite(self.cost) else None,
            "iterations": self.iterations,
            "edges": self.edges,
            "path": [[float(v) for v in s] for s in self.path],
            "controls": [float(u) for u in self.controls],
        }
        if with_time:
            d["ms"] = self.ms
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["problem"], d["sampler"], d["seed"], d["success"], d["nodes"], d["collision_checks"],
                   np.nan if d["cost"] is None else d["cost"], d.get("ms", np.nan), d["iterations"],
                   d["edges"], [tuple(s) for s in d["path"]], list(d["controls"]))


def runs_csv(traces, with_time=True):
    """CSV text with the fixed runs header. Without ``with_time`` the
    wall-clock column is left blank so reruns compare byte for byte."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUNS_HEADER)
    for t in traces:
        w.writerow(t.row(with_time))
    return buf.getvalue()


# ---------------------------------------------------------------------------
# pendulum: kinodynamic RRT


@dataclass(frozen=True)
class PendulumProblem:
    x_init: tuple
    x_goal: tuple
    problem_id: int = 0

    def to_dict(self):
        return {"problem_id": self.problem_id, "x_init": list(self.x_init), "x_goal": list(self.x_goal)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["x_init"]), tuple(d["x_goal"]), int(d.get("problem_id", 0)))


def sample_pendulum_problem(seed, problem_id):
    """Swing-up from a perturbed hanging state to upright at rest."""
    rng = stream(seed, "pendulum-problems", problem_id)
    th = -0.5 * np.pi + rng.uniform(-0.5, 0.5)
    om = rng.uniform(-0.5, 0.5)
    return PendulumProblem((float(th), float(om)), (0.5 * np.pi, 0.0), int(problem_id))


def pendulum_distance(a, b):
    """Wrapped angle gap plus a tenth of the velocity gap."""
    return abs(float(wrap_angle(a[0] - b[0]))) + OMEGA_WEIGHT * abs(float(a[1] - b[1]))


def _pendulum_tree(problem, seed, m, system):
    space = pendulum_space(system)
    return initialize_online_graph(
        problem.x_init, seed, m, space=space, knn_weights=np.array([1.0, OMEGA_WEIGHT**2])
    )


def rrt_plan(problem, sampler, max_iters=5000, seed=0, system=DEFAULT_PENDULUM, init_seeds=INIT_SEEDS,
             dt=dynamics.DT, dt_extend=DT_EXTEND, tol_theta=TOL_THETA, tol_omega=TOL_OMEGA):
    """Kinodynamic RRT. Each iteration draws a target, picks the nearest
    tree node, tries every control in ``{-u_max, 0, u_max}`` for
    ``dt_extend`` and keeps the end state closest to the target."""
    t0 = time.perf_counter()
    tree = _pendulum_tree(problem, seed, init_seeds, system)
    rng = stream(seed, "rrt")
    x_init = np.asarray(problem.x_init, dtype=np.float64)
    x_goal = np.asarray(problem.x_goal, dtype=np.float64)
    nsteps = max(1, int(round(dt_extend / dt)))
    controls = (-system.u_max, 0.0, system.u_max)
    weights = np.array([1.0, OMEGA_WEIGHT])
    wrap = tree.space.wrap_mask
    goal = 0 if dynamics.pendulum_goal_reached(x_init, x_goal, tol_theta, tol_omega) else -1
    # A (node, control) pair always yields the same child, so each is
    # expanded at most once; a node with every control used leaves the
    # nearest-node search.
    used = set()
    it = 0
    while goal < 0 and it < max_iters:
        it += 1
        q = sampler(tree, x_init, x_goal, rng)
        near = kernels.nearest_weighted(tree.states[: tree.n], q, weights, wrap, tree.active[: tree.n])
        best = None
        for c, u in enumerate(controls):
            if (near, c) in used:
                continue
            end = system.rollout(tree.states[near], u, dt, nsteps)[-1]
            d = pendulum_distance(end, q)
            if best is None or d < best[0]:
                best = (d, c, end)
        used.add((near, best[1]))
        if all((near, c) in used for c in range(len(controls))):
            tree.active[near] = False
        idx = tree.add(best[2], near, controls[best[1]])
        if dynamics.pendulum_goal_reached(best[2], x_goal, tol_theta, tol_omega):
            goal = idx
    path, ctrls, cost = [], [], np.nan
    if goal >= 0:
        idx = tree.path_to(goal)
        path = [tuple(float(v) for v in tree.states[i]) for i in idx]
        ctrls = [float(tree.control[i]) for i in idx[1:]]
        cost = (len(idx) - 1) * nsteps * dt
    return PlannerTrace(problem.problem_id, sampler.name, int(seed), goal >= 0, tree.expanded, 0, float(cost),
                        1000.0 * (time.perf_counter() - t0), it, tree.expanded, path, ctrls)


def replay_pendulum(trace, system=DEFAULT_PENDULUM, dt=dynamics.DT, dt_extend=DT_EXTEND):
    """Re-integrate a trace's controls from its first state."""
    if not trace.path:
        return np.empty((0, 2))
    nsteps = max(1, int(round(dt_extend / dt)))
    out = [np.asarray(trace.path[0], dtype=np.float64)]
    for u in trace.controls:
        out.append(system.rollout(out[-1], u, dt, nsteps)[-1])
    return np.array(out)


# ---------------------------------------------------------------------------
# arm: BiRRT


@dataclass(frozen=True)
class ArmProblem:
    scene: dynamics.ArmScene
    x_init: tuple
    x_goal: tuple
    problem_id: int = 0

    def to_dict(self):
        return {"problem_id": self.problem_id, "scene": self.scene.to_dict(),
                "x_init": list(self.x_init), "x_goal": list(self.x_goal)}

    @classmethod
    def from_dict(cls, d):
        return cls(dynamics.ArmScene.from_dict(d["scene"]), tuple(d["x_init"]), tuple(d["x_goal"]),
                   int(d.get("problem_id", 0)))


def generate_arm_scene(seed, n_discs=4, dim=dynamics.N_JOINTS, clusters=2):
    """Unit-reach arm among disc clusters inside its workspace; the base
    neighbourhood stays clear."""
    rng = stream(seed, "arm-scene")
    centers = []
    for _ in range(clusters):
        rho, ang = rng.uniform(0.45, 0.8), rng.uniform(-np.pi, np.pi)
        centers.append((rho * np.cos(ang), rho * np.sin(ang)))
    discs = []
    for i in range(n_discs):
        cx, cy = centers[i % clusters]
        r = rng.uniform(0.05, 0.1)
        c = np.array([cx, cy]) + rng.normal(0.0, 0.08, size=2)
        if np.hypot(*c) - r < 0.25:
            c *= (0.25 + r) / np.hypot(*c)
        discs.append((float(c[0]), float(c[1]), float(r)))
    return dynamics.ArmScene(tuple(float(v) for v in np.full(dim, 1.0 / dim)), tuple(discs))


def _arm_free_sample(scene, rng, max_tries=10000):
    space = arm_space(scene.dim)
    for _ in range(max_tries):
        q = space.uniform(rng)
        if scene.is_free(q):
            return q
    raise GenerationError("no free arm configuration found")


def _interpolate(space, a, b, n):
    t = (np.arange(1, n + 1) / n)[:, None]
    return space.project(a[None, :] + t * space.diff(b, a)[None, :])


def sample_arm_problem(scene, seed, problem_id, min_dist=1.5, max_tries=500):
    """Free start/goal pair at least ``min_dist`` apart in joint space whose
    straight joint-space segment collides, when one can be found."""
    rng = stream(seed, "arm-problems", problem_id)
    space = arm_space(scene.dim)
    fallback = None
    for _ in range(max_tries):
        a = _arm_free_sample(scene, rng)
        b = _arm_free_sample(scene, rng)
        if np.linalg.norm(space.diff(b, a)) < min_dist:
            continue
        fallback = fallback or (a, b)
        seg = _interpolate(space, a, b, 200)
        if dynamics.arm_configs_free(seg, scene.lengths, scene.discs)[0] >= 0:
            fallback = (a, b)
            break
    if fallback is None:
        raise GenerationError("no arm problem found")
    a, b = fallback
    return ArmProblem(scene, tuple(float(v) for v in a), tuple(float(v) for v in b), int(problem_id))


class _ArmTree:
    def __init__(self, tree, root, other_root):
        self.tree = tree
        self.root = root
        self.other_root = other_root

    def nearest(self, q):
        t = self.tree
        d = t.space.diff(t.states[: t.n], q)
        d2 = np.where(t.active[: t.n], (d**2).sum(axis=1), np.inf)
        return int(np.argmin(d2))


def _arm_segment(space, scene, a, b, n_interp):
    """Collision check of ``a -> b`` at ``n_interp`` points; returns
    ``(free, configs_checked)``."""
    bad, checked = dynamics.arm_configs_free(_interpolate(space, a, b, n_interp), scene.lengths, scene.discs)
    return bad < 0, checked


def birrt_plan(problem, sampler, max_iters=2000, seed=0, init_seeds=INIT_SEEDS, step=ARM_STEP,
               n_interp=ARM_INTERP, goal_tol=ARM_GOAL_TOL):
    """Bidirectional RRT in joint space. Trees alternate: one extends a
    single step toward a sampled configuration, then the other greedily
    steps toward the new node until it reaches it or hits an obstacle."""
    t0 = time.perf_counter()
    scene = problem.scene
    space = arm_space(scene.dim)
    x_init = np.asarray(problem.x_init, dtype=np.float64)
    x_goal = np.asarray(problem.x_goal, dtype=np.float64)
    ta = initialize_online_graph(x_init, seed, init_seeds, space=space, is_valid=scene.is_free, tag=0)
    tb = initialize_online_graph(x_goal, seed, init_seeds, space=space, is_valid=scene.is_free, tag=1)
    trees = [_ArmTree(ta, x_init, x_goal), _ArmTree(tb, x_goal, x_init)]
    rng = stream(seed, "birrt")
    checks = 0

    def steer(from_state, to_state):
        delta = space.diff(to_state, from_state)
        m = float(np.max(np.abs(delta)))
        if m > step:
            delta = delta * (step / m)
        return space.project(from_state + delta), m

    meet = None
    if np.linalg.norm(space.diff(x_goal, x_init)) <= goal_tol:
        ok, c = _arm_segment(space, scene, x_init, x_goal, n_interp)
        checks += c
        if ok:
            meet = (0, 0)
    it = 0
    while meet is None and it < max_iters:
        it += 1
        a, b = trees
        q = sampler(a.tree, a.root, a.other_root, rng)
        near = a.nearest(q)
        new, m = steer(a.tree.states[near], q)
        if m > 0:
            ok, c = _arm_segment(space, scene, a.tree.states[near], new, n_interp)
            checks += c
            if ok:
                ia = a.tree.add(new, near)
                target = a.tree.states[ia].copy()
                ib = b.nearest(target)
                while True:
                    cur = b.tree.states[ib]
                    if np.linalg.norm(space.diff(target, cur)) <= 1e-12:
                        meet = (ia, ib) if a.tree is ta else (ib, ia)
                        break
                    nxt, _ = steer(cur, target)
                    ok, c = _arm_segment(space, scene, cur, nxt, n_interp)
                    checks += c
                    if not ok:
                        break
                    ib = b.tree.add(nxt, ib)
        trees.reverse()
    path, cost = [], np.nan
    if meet is not None:
        fwd = [ta.states[i] for i in ta.path_to(meet[0])]
        bwd = [tb.states[i] for i in tb.path_to(meet[1])][::-1]
        if meet == (0, 0) and ta.n_init == ta.n and tb.n_init == tb.n:
            bwd = [x_goal]
        else:
            bwd = bwd[1:]
        states = fwd + bwd
        path = [tuple(float(v) for v in s) for s in states]
        cost = float(sum(np.linalg.norm(space.diff(states[i + 1], states[i])) for i in range(len(states) - 1)))
    expanded = ta.expanded + tb.expanded
    return PlannerTrace(problem.problem_id, sampler.name, int(seed), meet is not None, expanded, int(checks),
                        cost, 1000.0 * (time.perf_counter() - t0), it, expanded, path, [])


def arm_path_free(problem, path, n_interp=ARM_INTERP):
    """Every path segment collision-free at ``n_interp`` points."""
    space = arm_space(problem.scene.dim)
    for i in range(len(path) - 1):
        a, b = np.asarray(path[i]), np.asarray(path[i + 1])
        if not _arm_segment(space, problem.scene, a, b, n_interp)[0]:
            return False
    return bool(path) and problem.scene.is_free(np.asarray(path[0]))


def shortcut_path(problem, path, step=ARM_STEP, n_interp=ARM_INTERP):
    """Greedy shortcut of an arm path: from each kept state jump to the
    farthest later state joined by a free straight segment, then resample
    every segment at joint steps of at most ``step``. Segments are checked
    at the planner's density of ``n_interp`` points per step."""
    space = arm_space(problem.scene.dim)
    pts = [np.asarray(s, dtype=np.float64) for s in path]
    if len(pts) < 3:
        return [tuple(float(v) for v in s) for s in pts]

    def pieces(a, b):
        return max(1, int(np.ceil(np.max(np.abs(space.diff(b, a))) / step - 1e-9)))

    kept, i = [pts[0]], 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not _arm_segment(space, problem.scene, pts[i], pts[j], n_interp * pieces(pts[i], pts[j]))[0]:
            j -= 1
        kept.append(pts[j])
        i = j
    out = [kept[0]]
    for a, b in zip(kept[:-1], kept[1:]):
        d, k = space.diff(b, a), pieces(a, b)
        out += [space.project(a + d * (t / k)) for t in range(1, k + 1)]
    return [tuple(float(v) for v in s) for s in out]


# ---------------------------------------------------------------------------
# offline dataset


@dataclass(frozen=True)
class SamplerRecord:
    """Tree-graph snapshot (root, seed states, path prefix) and the next
    path state."""

    problem_id: int
    root: tuple
    target: tuple
    nodes: tuple
    n_seeds: int
    label: tuple
    split: str

    def to_dict(self):
        return {
            "problem_id": self.problem_id,
            "root": list(self.root),
            "target": list(self.target),
            "nodes": [list(s) for s in self.nodes],
            "n_seeds": self.n_seeds,
            "label": list(self.label),
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["problem_id"]), tuple(d["root"]), tuple(d["target"]),
                   tuple(tuple(s) for s in d["nodes"]), int(d["n_seeds"]), tuple(d["label"]), d["split"])


def _snapshot_tree(space, nodes, n_seeds, knn_weights):
    tree = PlannerTree(space, nodes[0], TREE_NEIGHBORS, knn_weights)
    for i, s in enumerate(nodes[1:], start=1):
        tree.add(s, -1 if i <= n_seeds else i - 1, active=i > n_seeds)
    return tree


def task_space(task):
    if task == "pendulum":
        return pendulum_space(), np.array([1.0, OMEGA_WEIGHT**2])
    if task == "arm6":
        return arm_space(), None
    raise DomainError(f"unknown planning task {task!r}")


def record_example(task, rec):
    """Training example (tree shift, features, scaled label) for a record."""
    space, w = task_space(task)
    tree = _snapshot_tree(space, np.asarray(rec.nodes, dtype=np.float64), rec.n_seeds, w)
    x = tree.features(rec.root, rec.target)
    y = space.to_label(rec.root, rec.label)
    return Example(tree.shift(), x, y[None, :], rec.problem_id)


def _prefix_records(pid, root, target, seed_states, path):
    # Algorithm-style loop: the snapshot grows by one path state per record.
    out = []
    base = [tuple(float(v) for v in root)] + [tuple(float(v) for v in s) for s in seed_states]
    for i in range(len(path) - 1):
        nodes = base + [tuple(float(v) for v in s) for s in path[1 : i + 1]]
        out.append((pid, tuple(root), tuple(target), tuple(nodes), len(seed_states),
                    tuple(float(v) for v in path[i + 1])))
    return out


def _offline_problem(pid, seed, task, scene, max_iters, init_seeds):
    plan_seed = int(stream(seed, "offline-plan", pid).integers(2**62))
    if task == "pendulum":
        problem = sample_pendulum_problem(seed, pid)
        trace = rrt_plan(problem, UniformSampler(), max_iters, plan_seed, init_seeds=init_seeds)
        space, w = task_space(task)
        valid = None
    else:
        problem = sample_arm_problem(scene, seed, pid)
        trace = birrt_plan(problem, UniformSampler(), max_iters, plan_seed, init_seeds=init_seeds)
        space, w = task_space(task)
        valid = scene.is_free
    if not trace.success:
        return None
    # raw BiRRT paths wander; shortcut labels point along a route the scene allows
    raw = trace.path if task == "pendulum" else shortcut_path(problem, trace.path)
    path = [np.asarray(s) for s in raw]
    out = []
    directions = [(path, problem.x_init, problem.x_goal, 0)]
    if task == "arm6":
        # BiRRT grows from both ends, so the reversed path is also a sample.
        directions.append((path[::-1], problem.x_goal, problem.x_init, 1))
    for p, root, target, tag in directions:
        seeds = initialize_online_graph(np.asarray(root), plan_seed, init_seeds, space=space,
                                        is_valid=valid, tag=tag, knn_weights=w).nodes[1:]
        out.extend(_prefix_records(pid, root, target, seeds, p))
    return out


def _offline_cell(cell, seed, task, max_iters, init_seeds):
    pid, scene = cell
    return _offline_problem(pid, seed, task, scene, max_iters, init_seeds)


def collect_offline_dataset(n_problems, seed, task="pendulum", scene=None, max_iters=5000,
                            init_seeds=INIT_SEEDS, jobs=1):
    """Plan each problem with the uniform sampler and turn every solved path
    of ``L`` states into ``L - 1`` (snapshot, next state) records. Unsolved
    problems are skipped. Splits are assigned per problem.

    For the arm, ``scene`` may be a list of scenes; problem ``pid`` then
    lives in ``scene[pid % len(scene)]``. Arm paths are passed through
    :func:`shortcut_path` before labelling."""
    if task == "arm6" and scene is None:
        raise DomainError("arm dataset needs a scene")
    if n_problems < 1:
        raise DomainError("n_problems must be >= 1")
    scenes = list(scene) if isinstance(scene, (list, tuple)) else [scene]
    cells = [(pid, scenes[pid % len(scenes)]) for pid in range(n_problems)]
    fn = partial(_offline_cell, seed=seed, task=task, max_iters=max_iters, init_seeds=init_seeds)
    results = ordered_map(fn, cells, jobs)
    solved = {pid: r for pid, r in enumerate(results) if r is not None}
    for pid, r in enumerate(results):
        if r is None:
            log.info("offline problem %d unsolved; skipped", pid)
    if not solved:
        raise DatasetError("no offline problem was solved")
    splits = assign_splits(solved, seed) if len(solved) >= 3 else {pid: "train" for pid in solved}
    records = []
    for pid, recs in solved.items():
        for r in recs:
            records.append(SamplerRecord(*r, splits[pid]))
    return records


def write_records(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_records(path):
    with open(path) as fh:
        return [SamplerRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def residual_scale(model, examples):
    """Per-coordinate RMS residual of a regressor on ``examples``."""
    res = np.vstack([model.predict(ex.shift, ex.x) - ex.labels[0] for ex in examples])
    return np.sqrt((res**2).mean(axis=0))


# ---------------------------------------------------------------------------
# paired benchmark


def _run_cell(cell, planner, max_iters):
    problem, sampler, seed = cell
    return planner(problem, sampler, max_iters, seed)


def benchmark(problems, samplers, seeds, planner, max_iters, jobs=1):
    """Every sampler runs every (problem, seed) pair; traces come back in
    (problem, sampler, seed) order."""
    cells = [(p, s, seed) for p in problems for s in samplers for seed in seeds]
    return ordered_map(partial(_run_cell, planner=planner, max_iters=max_iters), cells, jobs)


def summarize(traces):
    """Per-sampler success rate and medians of nodes, checks and cost."""
    out = {}
    for name in dict.fromkeys(t.sampler for t in traces):
        ts = [t for t in traces if t.sampler == name]
        costs = [t.cost for t in ts if t.success]
        out[name] = {
            "runs": len(ts),
            "success_rate": float(np.mean([t.success for t in ts])),
            "median_nodes": float(np.median([t.nodes for t in ts])),
            "median_collision_checks": float(np.median([t.collision_checks for t in ts])),
            "median_cost": float(np.median(costs)) if costs else float("nan"),
        }
    return out
