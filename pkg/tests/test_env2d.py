import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnnplan import env2d
from gnnplan.errors import DomainError, GenerationError
from gnnplan.rng import stream


def test_empty_world_is_free_everywhere(rng):
    w = env2d.World2D()
    assert env2d.points_free(w, rng.random((100, 2))).all()


def test_wall_center_is_blocked_and_boundary_is_closed():
    w = env2d.World2D(walls=[(0.4, 0.0, 0.6, 1.0)])
    assert not env2d.is_free(w, (0.5, 0.5))
    assert not env2d.is_free(w, (0.4, 0.3))
    assert env2d.is_free(w, (0.4 - 1e-9, 0.3))


def test_point_just_outside_blob_is_free():
    w = env2d.World2D(blobs=[(0.5, 0.5, 0.1)])
    assert env2d.is_free(w, (0.5 + 0.1 + 1e-9, 0.5))
    assert not env2d.is_free(w, (0.5, 0.5))


def test_out_of_bounds_point_is_rejected():
    with pytest.raises(DomainError):
        env2d.is_free(env2d.World2D(), (1.5, 0.5))


@given(st.integers(0, 2**32), st.integers(0, 3))
def test_generate_world_is_deterministic(seed, n_walls):
    a = env2d.generate_world(seed, n_walls, 0.05)
    b = env2d.generate_world(seed, n_walls, 0.05)
    assert a.to_json() == b.to_json()
    assert len(a.walls) == 2 * n_walls and len(a.gaps) == n_walls


@given(st.integers(0, 2**32))
def test_gap_center_is_free_and_wall_pieces_block(seed):
    w = env2d.generate_world(seed, 2, 0.05)
    for g in w.gaps:
        c = np.array([(g[0] + g[2]) / 2, (g[1] + g[3]) / 2])
        assert env2d.is_free(w, c)
    for r in w.walls:
        assert not env2d.is_free(w, ((r[0] + r[2]) / 2, (r[1] + r[3]) / 2))


def test_world_json_round_trip():
    w = env2d.generate_world(3, 2, 0.05)
    w = env2d.corrupt_with_blobs(w, 4, 2, 0.05)
    doc = json.loads(w.to_json())
    assert set(doc) == {"walls", "blobs", "gaps"}
    back = env2d.World2D.from_json(w.to_json())
    assert back == w
    assert np.array_equal(back.rects, w.rects) and np.array_equal(back.discs, w.discs)


def test_zero_length_free_segment():
    w = env2d.World2D()
    assert env2d.segment_free(w, (0.3, 0.3), (0.3, 0.3))


def test_segment_through_wall_vs_through_gap():
    w = env2d.generate_world(11, 1, 0.05)
    g = w.gaps[0]
    c = np.array([(g[0] + g[2]) / 2, (g[1] + g[3]) / 2])
    vertical = env2d.gap_is_vertical(w, g)
    axis = np.array([1.0, 0.0]) if vertical else np.array([0.0, 1.0])
    a, b = np.clip(c - 0.2 * axis, 0, 1), np.clip(c + 0.2 * axis, 0, 1)
    assert env2d.segment_free(w, a, b, step=0.005)
    # shift the crossing well away from the gap along the wall
    along = np.array([0.0, 1.0]) if vertical else np.array([1.0, 0.0])
    off = 0.3 if c @ along < 0.5 else -0.3
    assert not env2d.segment_free(w, a + off * along, b + off * along, step=0.005)


@given(st.integers(0, 2**32))
def test_segment_check_is_symmetric(seed):
    rng = stream(seed, "t")
    w = env2d.corrupt_with_blobs(env2d.generate_world(seed, 2, 0.05), seed, 3, 0.1)
    a, b = rng.random((50, 2)), rng.random((50, 2))
    assert np.array_equal(env2d.segments_free(w, a, b), env2d.segments_free(w, b, a))


def test_segment_against_dense_sampling_oracle(rng):
    w = env2d.corrupt_with_blobs(env2d.generate_world(5, 2, 0.05), 6, 4, 0.1)
    a, b = rng.random((200, 2)), rng.random((200, 2))
    got = env2d.segments_free(w, a, b, step=0.01)
    for i in range(200):
        n = int(np.ceil(np.linalg.norm(b[i] - a[i]) / 0.01))
        # sampling at the same spacing or finer must never find a collision the check missed
        if got[i]:
            t = np.linspace(0, 1, max(n, 1) + 1)
            pts = a[i] + t[:, None] * (b[i] - a[i])
            assert env2d.points_free(w, pts).all()


def test_blob_count_and_radii():
    w = env2d.generate_world(1, 1, 0.05)
    c = env2d.corrupt_with_blobs(w, 2, 5, 0.07)
    assert len(c.blobs) == 5
    assert all(0 < b[2] <= 0.07 for b in c.blobs)
    assert c.walls == w.walls


def test_no_blobs_leaves_world_unchanged():
    w = env2d.generate_world(1, 1, 0.05)
    assert env2d.corrupt_with_blobs(w, 2, 0, 0.07) is w


@given(st.integers(0, 2**32))
def test_blobs_keep_gaps_and_protected_points_free(seed):
    w = env2d.generate_world(seed, 2, 0.05)
    keep = stream(seed, "k").random((3, 2))
    keep = keep[env2d.points_free(w, keep)]
    c = env2d.corrupt_with_blobs(w, seed, 4, 0.1, keep_free=keep)
    for g in w.gaps:
        # interior of the opening; its rim touches the wall pieces
        xs = np.linspace(g[0], g[2], 9)[1:-1]
        ys = np.linspace(g[1], g[3], 9)[1:-1]
        pts = np.stack(np.meshgrid(xs, ys), -1).reshape(-1, 2)
        assert env2d.points_free(c, pts).all()
    if keep.shape[0]:
        assert env2d.points_free(c, keep).all()


def test_blob_rejection_budget():
    # an opening covering the whole square rejects every candidate
    w = env2d.World2D(gaps=[(0.0, 0.0, 1.0, 1.0)])
    with pytest.raises(GenerationError):
        env2d.corrupt_with_blobs(w, 0, 3, 0.2, max_tries=50)


@given(st.integers(0, 2**32))
def test_sampled_problem_crosses_a_wall(seed):
    w = env2d.generate_world(seed, 1, 0.05)
    p = env2d.sample_problem(w, stream(seed, "p"))
    assert env2d.is_free(w, p.x_init) and env2d.is_free(w, p.x_goal)
    assert env2d._side_codes(w, p.x_init) != env2d._side_codes(w, p.x_goal)


def test_invalid_generation_arguments():
    with pytest.raises(DomainError):
        env2d.generate_world(0, -1, 0.05)
    with pytest.raises(DomainError):
        env2d.generate_world(0, 1, 1.5)
