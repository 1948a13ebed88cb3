import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnnplan import cspace_graph as cg
from gnnplan import env2d, search, verify
from gnnplan.errors import DatasetError
from gnnplan.rng import stream


@given(st.integers(0, 2**32), st.integers(2, 8))
def test_astar_matches_exhaustive_enumeration(seed, n):
    rng = stream(seed, "t")
    g = verify.small_graph(rng, n)
    p = search.path_between(g, 0, n - 1)
    ref = verify._exhaustive_shortest(n, g.edges.tolist(), g.weights.tolist(), 0, n - 1)
    if p is None:
        assert np.isinf(ref)
        return
    assert p.cost == pytest.approx(ref, rel=1e-12, abs=1e-12)
    assert p.nodes[0] == 0 and p.nodes[-1] == n - 1
    w = {tuple(sorted(e)): c for e, c in zip(g.edges.tolist(), g.weights.tolist())}
    assert sum(w[tuple(sorted(e))] for e in zip(p.nodes, p.nodes[1:])) == pytest.approx(p.cost, rel=1e-12)


@given(st.integers(0, 2**32), st.integers(3, 8))
def test_bottleneck_ranking_matches_brute_force(seed, n):
    rng = stream(seed, "t")
    g = verify.small_graph(rng, n)
    p = search.path_between(g, 0, n - 1)
    if p is None:
        return
    scores = []
    for v in p.nodes[1:-1]:
        alt = verify._exhaustive_shortest(n, g.edges.tolist(), g.weights.tolist(), 0, n - 1, banned=(v,))
        scores.append((v, alt))
    ref = [v for v, c in sorted(scores, key=lambda vc: (-vc[1], vc[0])) if c > p.cost * (1 + 1e-9)]
    assert search.bottleneck_nodes(g, None, p) == ref


def test_disconnecting_vertex_ranks_first():
    # a path 0-1-2-3 plus a detour 0-4-3 around vertex 1 only
    pts = np.array([[0, 0], [1, 0], [2, 0], [3, 0], [1.5, 1.0]], dtype=float)
    edges = np.array([[0, 1], [1, 2], [2, 3], [0, 4], [4, 2]])
    w = np.sqrt(((pts[edges[:, 0]] - pts[edges[:, 1]]) ** 2).sum(1))
    g = cg.CSpaceGraph(pts, edges, w, cg._adjacency_shift(5, edges), "adjacency")
    p = search.path_between(g, 0, 3)
    assert p.nodes == (0, 1, 2, 3)
    assert search.bottleneck_nodes(g, None, p) == [2, 1]


def test_heuristic_scale_is_admissible(rng):
    g = verify.small_graph(rng, 8)
    c = search.heuristic_scale(g)
    length = np.sqrt(((g.positions[g.edges[:, 0]] - g.positions[g.edges[:, 1]]) ** 2).sum(1))
    assert 0 < c <= 1 and np.all(c * length <= g.weights + 1e-15)


@pytest.fixture(scope="module")
def small_graph_2d():
    pts = cg.halton_points(600, 2)
    return cg.build_r_disc_graph(pts, cg.radius_for_degree(pts, 10.0))


def test_labels_are_free_path_vertices_whose_removal_costs(small_graph_2d):
    recs = search.build_dataset(40, 3, small_graph_2d, max_labels=1)
    assert recs
    for r in recs:
        lab = np.asarray(r.label)
        assert env2d.points_free(r.world, lab[None])[0]
        v = int(np.flatnonzero((small_graph_2d.positions == lab).all(1))[0])
        local = cg.restrict_to_world(small_graph_2d, r.world)
        path = search.shortest_path(local, r.problem())
        assert v in path.nodes[1:-1]
        banned = np.zeros(local.n, dtype=bool)
        banned[v] = True
        alt = search.path_between(local, path.nodes[0], path.nodes[-1], banned)
        assert alt is None or alt.cost > path.cost


def test_dataset_is_deterministic_and_jobs_invariant(small_graph_2d, tmp_path):
    a = search.build_dataset(30, 11, small_graph_2d, jobs=1)
    b = search.build_dataset(30, 11, small_graph_2d, jobs=2)
    search.write_records(tmp_path / "a.jsonl", a)
    search.write_records(tmp_path / "b.jsonl", b)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert search.read_records(tmp_path / "a.jsonl") == a


def test_splits_are_per_problem(small_graph_2d):
    recs = search.build_dataset(40, 5, small_graph_2d)
    by = search.group_by_problem(recs)
    assert all(len({r.split for r in rs}) == 1 for rs in by.values())
    assert [r.rank for r in by[next(iter(by))]] == list(range(len(by[next(iter(by))])))
    splits = search.assign_splits(range(100), 0)
    counts = {s: sum(v == s for v in splits.values()) for s in search.SPLITS}
    assert counts == {"train": 70, "val": 15, "test": 15}


def test_empty_and_too_small_datasets(small_graph_2d):
    assert search.build_dataset(0, 0, small_graph_2d) == []
    with pytest.raises(DatasetError):
        search.build_dataset(3, 0, small_graph_2d)
