"""Wall-clock comparison of the compiled and pure-numpy kernel backends."""
import time

import numpy as np

from . import cspace_graph as cg
from . import dynamics, env2d, kernels, search
from .rng import stream

BENCH_HEADER = ("kernel", "backend", "size", "repeats", "median_ms")


def _time(fn, repeats):
    fn()  # warm-up; triggers compilation on the numba side
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        out.append(1000.0 * (time.perf_counter() - t0))
    return float(np.median(out))


def kernel_cases(seed=0, n=2000):
    """``(name, size, {backend: thunk})`` for each hot kernel."""
    rng = stream(seed, "bench")
    pts = cg.halton_points(n, 2)
    r = cg.radius_for_degree(pts)
    g = cg.build_r_disc_graph(pts, r)
    s = g.shift
    x = rng.standard_normal((n, 32))
    world = env2d.generate_world(int(rng.integers(2**62)), 2, 0.05)
    a, b = rng.random((n, 2)), rng.random((n, 2))
    indptr, indices, w = g.adjacency()
    banned = np.zeros(n, dtype=np.bool_)
    hscale = search.heuristic_scale(g)
    src, dst = np.int64(0), np.int64(n - 1)
    configs = rng.uniform(-np.pi, np.pi, size=(n, dynamics.N_JOINTS))
    lengths = np.asarray(dynamics.DEFAULT_LINKS, dtype=np.float64)
    discs = np.array([[0.5, 0.5, 0.1], [-0.6, 0.2, 0.15]])
    p = dynamics.DEFAULT_PENDULUM

    def pair(name):
        return getattr(kernels, f"{name}_nb"), getattr(kernels, f"{name}_np")

    cases = []

    def add(label, size, name, *args):
        nb, np_ = pair(name)
        cases.append((label, size, {"numba": lambda: nb(*args), "numpy": lambda: np_(*args)}))

    add("spmm", n, "spmm", s.indptr, s.indices, s.data, x)
    add("radius_pairs", n, "radius_pairs", pts, r)
    add("knn", n, "knn", pts, 5)
    add("segments_free", n, "segments_free", a, b, world.rects, world.discs, env2d.DEFAULT_STEP)
    add("astar", n, "astar", indptr, indices, w, g.positions, src, dst, banned, hscale)
    add("arm_configs_free", n, "arm_configs_free", configs, lengths, discs)
    add("pendulum_rollout", 200, "pendulum_rollout", 0.1, 0.0, 1.0, 0.01, 200, p.g_over_l, p.inv_ml2, p.omega_max)
    return cases


def run_kernel_bench(seed=0, repeats=5, n=2000):
    """Rows of :data:`BENCH_HEADER`; with numba missing both rows time the
    same fallback."""
    rows = []
    for label, size, fns in kernel_cases(seed, n):
        for backend in ("numba", "numpy"):
            rows.append((label, backend, size, repeats, f"{_time(fns[backend], repeats):.4f}"))
    return rows
