"""Shortest paths on C-space graphs and bottleneck-node labels."""
import json
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import env2d, kernels
from ._parallel import ordered_map
from .cspace_graph import restrict_to_world
from .errors import DatasetError
from .rng import stream

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Path:
    nodes: tuple
    cost: float


def heuristic_scale(graph):
    """Largest factor ``c <= 1`` with ``c * |p_u - p_v| <= w_uv`` on every edge.

    Scaling the Euclidean heuristic by it keeps A* admissible and consistent
    for arbitrary positive weights."""
    e = graph.edges
    if e.shape[0] == 0:
        return 1.0
    length = np.sqrt(((graph.positions[e[:, 0]] - graph.positions[e[:, 1]]) ** 2).sum(axis=1))
    ok = length > 0
    if not ok.any():
        return 1.0
    return float(min(1.0, np.min(graph.weights[ok] / length[ok])))


def path_between(graph, src, dst, banned=None, hscale=None):
    """A* from vertex ``src`` to ``dst`` avoiding ``banned`` vertices.

    Returns a :class:`Path`, or ``None`` when ``dst`` is unreachable."""
    indptr, indices, w = graph.adjacency()
    if banned is None:
        banned = np.zeros(graph.n, dtype=np.bool_)
    if hscale is None:
        hscale = heuristic_scale(graph)
    cost, nodes = kernels.astar(
        indptr, indices, w, graph.positions, np.int64(src), np.int64(dst), banned, float(hscale)
    )
    if not np.isfinite(cost):
        return None
    return Path(tuple(int(v) for v in nodes), float(cost))


ATTACH_CANDIDATES = 8


def attach_candidates(graph, world, x, limit=ATTACH_CANDIDATES, step=env2d.DEFAULT_STEP):
    """Up to ``limit`` free vertices joined to ``x`` by a free segment,
    nearest first."""
    d = np.sqrt(((graph.positions - x) ** 2).sum(axis=1))
    order = np.argsort(d, kind="stable")
    free = env2d.points_free(world, graph.positions)
    out = []
    for lo in range(0, order.shape[0], 64):
        cand = order[lo : lo + 64]
        cand = cand[free[cand]]
        if cand.shape[0] == 0:
            continue
        ok = env2d.segments_free(world, np.repeat(x[None, :], cand.shape[0], axis=0), graph.positions[cand], step)
        out.extend(int(v) for v in cand[ok])
        if len(out) >= limit:
            return out[:limit]
    return out


def attach(graph, world, x, step=env2d.DEFAULT_STEP):
    """Nearest vertex that is free and joined to ``x`` by a free segment."""
    cand = attach_candidates(graph, world, x, 1, step)
    return cand[0] if cand else None


class _Endpoints:
    """Attachment candidates of a problem's start and goal."""

    def __init__(self, graph, problem):
        self.x_init = np.asarray(problem.x_init, dtype=np.float64)
        self.x_goal = np.asarray(problem.x_goal, dtype=np.float64)
        self.src = attach_candidates(graph, problem.world, self.x_init)
        self.dst = attach_candidates(graph, problem.world, self.x_goal)
        pos = graph.positions
        self.src_leg = {v: float(np.sqrt(((pos[v] - self.x_init) ** 2).sum())) for v in self.src}
        self.dst_leg = {v: float(np.sqrt(((pos[v] - self.x_goal) ** 2).sum())) for v in self.dst}

    def solve(self, graph, banned=None, hscale=None):
        """``(path, total cost)`` from the nearest start vertex that reaches
        the goal side, to the nearest goal vertex it reaches; the legs to
        ``x_init`` and ``x_goal`` count towards the total."""
        for s in self.src:
            if banned is not None and banned[s]:
                continue
            for t in self.dst:
                if banned is not None and banned[t]:
                    continue
                p = path_between(graph, s, t, banned, hscale)
                if p is not None:
                    return p, self.src_leg[s] + p.cost + self.dst_leg[t]
        return None, np.inf


def shortest_path(graph, problem):
    """Minimum-cost path between the vertices ``x_init`` and ``x_goal``
    attach to; ``None`` if infeasible. Each end attaches to its nearest
    free, visible vertex from which the other end is reachable. ``graph``
    must already exclude blocked edges (see
    :func:`gnnplan.cspace_graph.restrict_to_world`)."""
    return _Endpoints(graph, problem).solve(graph)[0]


def bottleneck_scores(graph, path, problem=None):
    """``(vertex, c_alt)`` for each interior path vertex, where ``c_alt`` is
    the best cost with that vertex removed (``inf`` if it disconnects).

    Without a problem the path's end vertices are fixed. With one, the
    start and goal may re-attach around the removed vertex and costs include
    the attachment legs."""
    ends = None if problem is None else _Endpoints(graph, problem)
    return _scores(graph, path, ends)


def _legs(ends, path):
    return ends.src_leg.get(path.nodes[0], np.inf) + ends.dst_leg.get(path.nodes[-1], np.inf)


def _scores(graph, path, ends):
    if len(path.nodes) < 3:
        return []
    src, dst = path.nodes[0], path.nodes[-1]
    hscale = heuristic_scale(graph)
    legs = 0.0 if ends is None else _legs(ends, path)
    banned = np.zeros(graph.n, dtype=np.bool_)
    out = []
    for v in path.nodes[1:-1]:
        banned[v] = True
        alt = path_between(graph, src, dst, banned, hscale)
        if alt is not None:
            cost = legs + alt.cost
        elif ends is None:
            cost = np.inf
        else:
            cost = ends.solve(graph, banned, hscale)[1]
        banned[v] = False
        out.append((v, cost))
    return out


def _ranked(graph, path, ends, rel_eps):
    base = path.cost if ends is None else path.cost + _legs(ends, path)
    keep = [(v, c) for v, c in _scores(graph, path, ends) if c > base * (1 + rel_eps)]
    keep.sort(key=lambda vc: (-vc[1], vc[0]))
    return [v for v, _ in keep]


def bottleneck_nodes(graph, problem, path, rel_eps=1e-9):
    """Interior path vertices ranked by ``c_alt`` (descending, ties to the
    lower index), keeping those whose removal raises the cost by more than
    a relative ``rel_eps``."""
    ends = None if problem is None else _Endpoints(graph, problem)
    return _ranked(graph, path, ends, rel_eps)


# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class CriticalRecord:
    problem_id: int
    world: env2d.World2D
    x_init: tuple
    x_goal: tuple
    label: tuple
    rank: int
    split: str

    def problem(self):
        return env2d.PlanningProblem(self.world, self.x_init, self.x_goal)

    def to_dict(self):
        return {
            "problem_id": self.problem_id,
            "world": self.world.to_dict(),
            "x_init": list(self.x_init),
            "x_goal": list(self.x_goal),
            "label": list(self.label),
            "rank": self.rank,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            int(d["problem_id"]),
            env2d.World2D.from_dict(d["world"]),
            tuple(d["x_init"]),
            tuple(d["x_goal"]),
            tuple(d["label"]),
            int(d["rank"]),
            d["split"],
        )


def label_problem(pid, seed, graph, n_walls, corridor_width, max_labels, wall_thickness=env2d.WALL_THICKNESS):
    """World, start/goal and ranked bottleneck positions for problem ``pid``;
    ``None`` when the problem yields no bottleneck."""
    rng = stream(seed, "problems", pid)
    walls = int(rng.choice(np.asarray(n_walls)))
    world = env2d.generate_world(int(stream(seed, "worlds", pid).integers(2**63)), walls, corridor_width,
                                 thickness=wall_thickness)
    problem = env2d.sample_problem(world, rng)
    local = restrict_to_world(graph, world)
    ends = _Endpoints(local, problem)
    path = ends.solve(local)[0]
    if path is None:
        return None
    ranked = _ranked(local, path, ends, 1e-9)
    if max_labels is not None:
        ranked = ranked[:max_labels]
    if not ranked:
        return None
    return problem, [tuple(float(v) for v in graph.positions[i]) for i in ranked]


def assign_splits(problem_ids, seed, fractions=(0.7, 0.15, 0.15)):
    ids = np.asarray(sorted(problem_ids), dtype=np.int64)
    order = stream(seed, "split").permutation(ids.shape[0])
    n_train = int(round(fractions[0] * ids.shape[0]))
    n_val = int(round(fractions[1] * ids.shape[0]))
    out = {}
    for pos, i in enumerate(order):
        out[int(ids[i])] = "train" if pos < n_train else ("val" if pos < n_train + n_val else "test")
    return out


def build_dataset(n_problems, seed, graph, n_walls=(1,), corridor_width=0.05, max_labels=None, jobs=1,
                  wall_thickness=env2d.WALL_THICKNESS):
    """One record per (problem, bottleneck vertex); problems without a
    bottleneck are skipped. Splits are assigned per problem id."""
    if n_problems == 0:
        return []
    fn = partial(
        label_problem,
        seed=seed,
        graph=graph,
        n_walls=tuple(n_walls),
        corridor_width=corridor_width,
        max_labels=max_labels,
        wall_thickness=wall_thickness,
    )
    results = ordered_map(fn, range(n_problems), jobs)
    labeled = {pid: r for pid, r in enumerate(results) if r is not None}
    if len(labeled) < 10:
        raise DatasetError(f"only {len(labeled)} labeled problems (need >= 10)")
    splits = assign_splits(labeled, seed)
    records = []
    for pid, (problem, labels) in labeled.items():
        for rank, lab in enumerate(labels):
            records.append(
                CriticalRecord(
                    pid,
                    problem.world,
                    tuple(float(v) for v in problem.x_init),
                    tuple(float(v) for v in problem.x_goal),
                    lab,
                    rank,
                    splits[pid],
                )
            )
    return records


def group_by_problem(records):
    """``{problem_id: [records...]}`` in problem-id order."""
    out = {}
    for r in records:
        out.setdefault(r.problem_id, []).append(r)
    return dict(sorted(out.items()))


def write_records(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_records(path):
    with open(path) as fh:
        return [CriticalRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
