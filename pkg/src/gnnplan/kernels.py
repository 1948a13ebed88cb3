"""Hot numeric kernels.

Each kernel exists in two forms: a loop version compiled with numba
(``*_nb``) and a fallback (``*_np``) that is either vectorised numpy or, for
inherently sequential algorithms, the same loop run by the interpreter. The
public name dispatches on :data:`gnnplan._backend.USE_NUMBA`.

Both forms must return identical results; ``tests/test_kernels.py`` checks
this and ``benchmarks/bench_kernels.py`` times them against each other.
"""
import heapq

import numpy as np

from ._backend import HAVE_NUMBA, USE_NUMBA, njit

# ---------------------------------------------------------------------------
# sparse shift application


def _spmm_loop(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    f = x.shape[1]
    out = np.zeros((n, f))
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            v = data[p]
            for c in range(f):
                out[i, c] += v * x[j, c]
    return out


def _spmm_np(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    out = np.zeros((n, x.shape[1]))
    if indices.shape[0] == 0:
        return out
    rows = np.repeat(np.arange(n), np.diff(indptr))
    np.add.at(out, rows, data[:, None] * x[indices])
    return out


spmm_nb = njit(_spmm_loop)
spmm_np = _spmm_np
spmm = spmm_nb if USE_NUMBA else spmm_np

# ---------------------------------------------------------------------------
# 2-D point / segment collision against rectangles and discs (closed sets)


def _points_free_loop(points, rects, discs):
    n = points.shape[0]
    out = np.ones(n, dtype=np.bool_)
    for i in range(n):
        x = points[i, 0]
        y = points[i, 1]
        for r in range(rects.shape[0]):
            if rects[r, 0] <= x <= rects[r, 2] and rects[r, 1] <= y <= rects[r, 3]:
                out[i] = False
                break
        if not out[i]:
            continue
        for b in range(discs.shape[0]):
            dx = x - discs[b, 0]
            dy = y - discs[b, 1]
            if dx * dx + dy * dy <= discs[b, 2] * discs[b, 2]:
                out[i] = False
                break
    return out


def _points_free_np(points, rects, discs):
    x = points[:, 0:1]
    y = points[:, 1:2]
    hit = np.zeros(points.shape[0], dtype=bool)
    if rects.shape[0]:
        inside = (
            (rects[:, 0] <= x) & (x <= rects[:, 2]) & (rects[:, 1] <= y) & (y <= rects[:, 3])
        )
        hit |= inside.any(axis=1)
    if discs.shape[0]:
        d2 = (x - discs[:, 0]) ** 2 + (y - discs[:, 1]) ** 2
        hit |= (d2 <= discs[:, 2] ** 2).any(axis=1)
    return ~hit


points_free_nb = njit(_points_free_loop)
points_free_np = _points_free_np
points_free = points_free_nb if USE_NUMBA else points_free_np


@njit
def _segments_free_nb(a, b, rects, discs, step):
    m = a.shape[0]
    out = np.ones(m, dtype=np.bool_)
    for s in range(m):
        dx = b[s, 0] - a[s, 0]
        dy = b[s, 1] - a[s, 1]
        length = np.sqrt(dx * dx + dy * dy)
        n = max(1, int(np.ceil(length / step)))
        free = True
        for k in range(n + 1):
            t = k / n
            x = a[s, 0] + t * dx
            y = a[s, 1] + t * dy
            for r in range(rects.shape[0]):
                if rects[r, 0] <= x <= rects[r, 2] and rects[r, 1] <= y <= rects[r, 3]:
                    free = False
                    break
            if free:
                for q in range(discs.shape[0]):
                    ex = x - discs[q, 0]
                    ey = y - discs[q, 1]
                    if ex * ex + ey * ey <= discs[q, 2] * discs[q, 2]:
                        free = False
                        break
            if not free:
                break
        out[s] = free
    return out


def _segments_free_np(a, b, rects, discs, step):
    m = a.shape[0]
    if m == 0:
        return np.ones(0, dtype=bool)
    d = b - a
    lengths = np.sqrt((d**2).sum(axis=1))
    counts = np.maximum(1, np.ceil(lengths / step).astype(np.int64))
    seg = np.repeat(np.arange(m), counts + 1)
    starts = np.concatenate(([0], np.cumsum(counts + 1)[:-1]))
    k = np.arange(seg.shape[0]) - starts[seg]
    t = k / counts[seg]
    pts = a[seg] + t[:, None] * d[seg]
    ok = _points_free_np(pts, rects, discs)
    return np.logical_and.reduceat(ok, starts)


segments_free_nb = _segments_free_nb
segments_free_np = _segments_free_np
segments_free = segments_free_nb if USE_NUMBA else segments_free_np

# ---------------------------------------------------------------------------
# neighbourhoods


@njit
def _radius_pairs_nb(points, r):
    n = points.shape[0]
    d = points.shape[1]
    r2 = r * r
    cap = 16 * n
    out = np.empty((cap, 2), dtype=np.int64)
    m = 0
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for c in range(d):
                t = points[i, c] - points[j, c]
                acc += t * t
            if acc <= r2:
                if m == out.shape[0]:
                    grown = np.empty((2 * out.shape[0], 2), dtype=np.int64)
                    grown[:m] = out[:m]
                    out = grown
                out[m, 0] = i
                out[m, 1] = j
                m += 1
    return out[:m].copy()


def _radius_pairs_np(points, r, block=512):
    n = points.shape[0]
    chunks = []
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        diff = points[lo:hi, None, :] - points[None, :, :]
        d2 = (diff**2).sum(axis=2)
        ii, jj = np.nonzero(d2 <= r * r)
        ii = ii + lo
        keep = jj > ii
        chunks.append(np.stack([ii[keep], jj[keep]], axis=1))
    if not chunks:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(chunks).astype(np.int64)


radius_pairs_nb = _radius_pairs_nb
radius_pairs_np = _radius_pairs_np
radius_pairs = radius_pairs_nb if USE_NUMBA else radius_pairs_np


@njit
def _knn_nb(points, k):
    n = points.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    dist = np.empty(n)
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for c in range(points.shape[1]):
                t = points[i, c] - points[j, c]
                acc += t * t
            dist[j] = acc
        dist[i] = np.inf
        order = np.argsort(dist, kind="mergesort")
        out[i] = order[:k]
    return out


def _knn_np(points, k, block=512):
    n = points.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        d2 = ((points[lo:hi, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        d2[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        out[lo:hi] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


knn_nb = _knn_nb
knn_np = _knn_np
knn = knn_nb if USE_NUMBA else knn_np

# ---------------------------------------------------------------------------
# A* on a CSR graph


def _astar_loop(indptr, indices, weights, pos, src, dst, banned, hscale):
    n = indptr.shape[0] - 1
    empty = np.empty(0, dtype=np.int64)
    if banned[src] or banned[dst]:
        return np.inf, empty
    g = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.bool_)
    g[src] = 0.0
    h0 = 0.0
    for c in range(pos.shape[1]):
        t = pos[src, c] - pos[dst, c]
        h0 += t * t
    heap = [(hscale * np.sqrt(h0), src)]
    while len(heap) > 0:
        item = heapq.heappop(heap)
        u = item[1]
        if closed[u]:
            continue
        if u == dst:
            break
        closed[u] = True
        for p in range(indptr[u], indptr[u + 1]):
            v = indices[p]
            if banned[v] or closed[v]:
                continue
            nv = g[u] + weights[p]
            if nv < g[v]:
                g[v] = nv
                parent[v] = u
                h = 0.0
                for c in range(pos.shape[1]):
                    t = pos[v, c] - pos[dst, c]
                    h += t * t
                heapq.heappush(heap, (nv + hscale * np.sqrt(h), v))
    if g[dst] == np.inf:
        return np.inf, empty
    length = 1
    v = dst
    while v != src:
        v = parent[v]
        length += 1
    path = np.empty(length, dtype=np.int64)
    v = dst
    for i in range(length - 1, -1, -1):
        path[i] = v
        v = parent[v]
    return g[dst], path


astar_nb = njit(_astar_loop)
astar_np = _astar_loop
astar = astar_nb if USE_NUMBA else astar_np

# ---------------------------------------------------------------------------
# tree nearest neighbour and incremental kNN


@njit
def _nearest_weighted_nb(states, q, weights, wrap, active):
    best = -1
    best_d = np.inf
    for i in range(states.shape[0]):
        if not active[i]:
            continue
        acc = 0.0
        for c in range(states.shape[1]):
            t = states[i, c] - q[c]
            if wrap[c]:
                t = (t + np.pi) % (2.0 * np.pi) - np.pi
            acc += weights[c] * abs(t)
        if acc < best_d:
            best_d = acc
            best = i
    return best


def _nearest_weighted_np(states, q, weights, wrap, active):
    t = states - q
    t = np.where(wrap, (t + np.pi) % (2.0 * np.pi) - np.pi, t)
    d = (np.abs(t) * weights).sum(axis=1)
    d = np.where(active, d, np.inf)
    if not np.isfinite(d).any():
        return -1
    return int(np.argmin(d))


nearest_weighted_nb = _nearest_weighted_nb
nearest_weighted_np = _nearest_weighted_np
nearest_weighted = nearest_weighted_nb if USE_NUMBA else nearest_weighted_np


@njit
def _nearest_euclid_nb(states, q, active):
    best = -1
    best_d = np.inf
    for i in range(states.shape[0]):
        if not active[i]:
            continue
        acc = 0.0
        for c in range(states.shape[1]):
            t = states[i, c] - q[c]
            acc += t * t
        if acc < best_d:
            best_d = acc
            best = i
    return best


def _nearest_euclid_np(states, q, active):
    d = ((states - q) ** 2).sum(axis=1)
    d = np.where(active, d, np.inf)
    if not np.isfinite(d).any():
        return -1
    return int(np.argmin(d))


nearest_euclid_nb = _nearest_euclid_nb
nearest_euclid_np = _nearest_euclid_np
nearest_euclid = nearest_euclid_nb if USE_NUMBA else nearest_euclid_np


def _knn_insert_loop(states, n, nbr, nbr_d, cnt, weights, wrap):
    # Adds node n-1 to the kNN lists of nodes 0..n-2 and builds its own list.
    # Lists stay sorted by (distance, index) so the result equals a full rebuild.
    k = nbr.shape[1]
    new = n - 1
    for i in range(new):
        acc = 0.0
        for c in range(states.shape[1]):
            t = states[i, c] - states[new, c]
            if wrap[c]:
                t = (t + np.pi) % (2.0 * np.pi) - np.pi
            acc += weights[c] * t * t
        # own list
        pos = cnt[new]
        while pos > 0 and nbr_d[new, pos - 1] > acc:
            pos -= 1
        if pos < k:
            last = min(cnt[new], k - 1)
            for s in range(last, pos, -1):
                nbr[new, s] = nbr[new, s - 1]
                nbr_d[new, s] = nbr_d[new, s - 1]
            nbr[new, pos] = i
            nbr_d[new, pos] = acc
            if cnt[new] < k:
                cnt[new] += 1
        # node i's list; the new node has the largest index so ties keep old entries
        pos = cnt[i]
        while pos > 0 and nbr_d[i, pos - 1] > acc:
            pos -= 1
        if pos < k:
            last = min(cnt[i], k - 1)
            for s in range(last, pos, -1):
                nbr[i, s] = nbr[i, s - 1]
                nbr_d[i, s] = nbr_d[i, s - 1]
            nbr[i, pos] = new
            nbr_d[i, pos] = acc
            if cnt[i] < k:
                cnt[i] += 1


knn_insert_nb = njit(_knn_insert_loop)
knn_insert_np = _knn_insert_loop
knn_insert = knn_insert_nb if USE_NUMBA else knn_insert_np

# ---------------------------------------------------------------------------
# planar arm collision: every link segment against every disc


@njit
def _arm_configs_free_nb(configs, lengths, discs):
    # Returns (index of first colliding config or -1, number of configs checked).
    m = configs.shape[0]
    for s in range(m):
        x0 = 0.0
        y0 = 0.0
        ang = 0.0
        hit = False
        for j in range(configs.shape[1]):
            ang += configs[s, j]
            x1 = x0 + lengths[j] * np.cos(ang)
            y1 = y0 + lengths[j] * np.sin(ang)
            dx = x1 - x0
            dy = y1 - y0
            den = dx * dx + dy * dy
            for q in range(discs.shape[0]):
                px = discs[q, 0] - x0
                py = discs[q, 1] - y0
                t = 0.0
                if den > 0.0:
                    t = (px * dx + py * dy) / den
                    t = min(1.0, max(0.0, t))
                ex = px - t * dx
                ey = py - t * dy
                if ex * ex + ey * ey <= discs[q, 2] * discs[q, 2]:
                    hit = True
                    break
            if hit:
                break
            x0 = x1
            y0 = y1
        if hit:
            return s, s + 1
    return -1, m


def arm_joint_positions(configs, lengths):
    """Joint positions (M, L+1, 2) of planar chains rooted at the origin."""
    configs = np.atleast_2d(configs)
    ang = np.cumsum(configs, axis=1)
    steps = np.stack([lengths * np.cos(ang), lengths * np.sin(ang)], axis=2)
    out = np.zeros((configs.shape[0], configs.shape[1] + 1, 2))
    out[:, 1:] = np.cumsum(steps, axis=1)
    return out


def _arm_configs_free_np(configs, lengths, discs):
    m = configs.shape[0]
    if m == 0 or discs.shape[0] == 0:
        return -1, m
    pts = arm_joint_positions(configs, lengths)
    p0 = pts[:, :-1, None, :]
    d = (pts[:, 1:] - pts[:, :-1])[:, :, None, :]
    c = discs[None, None, :, :2]
    rel = c - p0
    den = (d**2).sum(axis=3)
    safe = np.where(den > 0, den, 1.0)
    t = np.where(den > 0, np.clip((rel * d).sum(axis=3) / safe, 0.0, 1.0), 0.0)
    e = rel - t[..., None] * d
    hit = ((e**2).sum(axis=3) <= discs[None, None, :, 2] ** 2).any(axis=(1, 2))
    bad = np.flatnonzero(hit)
    if bad.shape[0]:
        return int(bad[0]), int(bad[0]) + 1
    return -1, m


arm_configs_free_nb = _arm_configs_free_nb
arm_configs_free_np = _arm_configs_free_np
arm_configs_free = arm_configs_free_nb if USE_NUMBA else arm_configs_free_np

# ---------------------------------------------------------------------------
# pendulum RK4 rollouts


def _pend_accel(theta, omega, u, g_over_l, inv_ml2):
    return -g_over_l * np.cos(theta) + u * inv_ml2


def _pendulum_rollout_loop(theta, omega, u, dt, nsteps, g_over_l, inv_ml2, omega_max):
    # Returns the (nsteps, 2) states visited after each step.
    out = np.empty((nsteps, 2))
    th = theta
    om = omega
    for s in range(nsteps):
        k1t = om
        k1w = -g_over_l * np.cos(th) + u * inv_ml2
        k2t = om + 0.5 * dt * k1w
        k2w = -g_over_l * np.cos(th + 0.5 * dt * k1t) + u * inv_ml2
        k3t = om + 0.5 * dt * k2w
        k3w = -g_over_l * np.cos(th + 0.5 * dt * k2t) + u * inv_ml2
        k4t = om + dt * k3w
        k4w = -g_over_l * np.cos(th + dt * k3t) + u * inv_ml2
        th = th + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        om = om + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        # wrap to (-pi, pi]
        th = np.pi - (np.pi - th) % (2.0 * np.pi)
        if om > omega_max:
            om = omega_max
        elif om < -omega_max:
            om = -omega_max
        out[s, 0] = th
        out[s, 1] = om
    return out


pendulum_rollout_nb = njit(_pendulum_rollout_loop)
pendulum_rollout_np = _pendulum_rollout_loop
pendulum_rollout = pendulum_rollout_nb if USE_NUMBA else pendulum_rollout_np
