import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnnplan import cspace_graph as cg
from gnnplan import diffkernel as dk
from gnnplan import verify
from gnnplan.diffkernel import checkpoint
from gnnplan.errors import DomainError
from gnnplan.rng import stream

seeds = st.integers(0, 2**32)


def random_shift(rng, n):
    return verify._random_graph(rng, n).shift


@settings(max_examples=8)
@given(seeds)
def test_every_backward_matches_finite_differences(seed):
    for name, frag, x in verify.gradient_fragments(seed, n=8):
        rep = dk.check_gradients(frag, x, name=name)
        assert rep.passed, (name, rep.worst, rep.max_rel_error)


def test_sign_flip_in_backward_is_caught_and_named(monkeypatch):
    orig = dk.Dense.backward

    def flipped(self, dy):
        return -orig(self, dy)

    monkeypatch.setattr(dk.Dense, "backward", flipped)
    res = verify.gradient_suite(seed=0, fragments=8)
    assert not res.passed
    assert "Dense" in {f["layer"] for f in res.failures}
    assert "GraphConv" not in {f["layer"] for f in res.failures}


@given(seeds, st.integers(2, 50), st.integers(0, 4))
def test_graph_conv_is_permutation_equivariant(seed, n, order):
    rng = stream(seed, "t")
    s = random_shift(rng, n)
    layer = dk.GraphConv(3, 2, order, rng)
    x = rng.standard_normal((n, 3))
    perm = cg.Permutation.random(n, rng)
    lhs = layer.forward(cg.permute_problem(x, perm), s.permuted(perm))
    rhs = cg.permute_problem(layer.forward(x, s), perm)
    assert np.abs(lhs - rhs).max() <= 1e-10


@given(seeds, st.integers(2, 50))
def test_gat_is_permutation_equivariant(seed, n):
    rng = stream(seed, "t")
    s = random_shift(rng, n)
    layer = dk.GATLayer(3, 2, rng)
    x = rng.standard_normal((n, 3))
    perm = cg.Permutation.random(n, rng)
    lhs = layer.forward(cg.permute_problem(x, perm), s.permuted(perm))
    rhs = cg.permute_problem(layer.forward(x, s), perm)
    assert np.abs(lhs - rhs).max() <= 1e-10


@given(seeds, st.integers(2, 30))
def test_gat_attention_is_a_distribution(seed, n):
    rng = stream(seed, "t")
    s = random_shift(rng, n)
    layer = dk.GATLayer(3, 2, rng)
    layer.forward(rng.standard_normal((n, 3)), s)
    rows, cols, alpha = layer.attention_weights()
    assert np.all(alpha > 0)
    assert np.allclose(np.bincount(rows, weights=alpha, minlength=n), 1.0)
    assert set(zip(rows.tolist(), cols.tolist())) >= {(i, i) for i in range(n)}


def test_shift_powers_are_never_dense(monkeypatch):
    rng = np.random.default_rng(0)
    s = random_shift(rng, 30)
    monkeypatch.setattr(type(s), "to_dense", lambda self: pytest.fail("dense shift formed"))
    dk.GraphConv(2, 2, 4, rng).forward(rng.standard_normal((30, 2)), s)


def test_maxpool_routes_gradient_to_first_argmax():
    x = np.array([[1.0, 5.0], [3.0, 5.0], [3.0, -1.0]])
    pool = dk.GraphMaxPool()
    assert pool.forward(x).tolist() == [[3.0, 5.0]]
    dx = pool.backward(np.array([[2.0, 7.0]]))
    assert dx.tolist() == [[0.0, 7.0], [2.0, 0.0], [0.0, 0.0]]
    with pytest.raises(DomainError):
        pool.forward(np.zeros((0, 2)))


def test_layers_reject_bad_shapes(rng):
    with pytest.raises(DomainError):
        dk.GraphConv(3, 2, -1, rng)
    with pytest.raises(DomainError):
        dk.Dense(3, 2, rng).forward(np.zeros((4, 2)))


@given(seeds)
def test_kl_matches_monte_carlo(seed):
    rng = stream(seed, "t")
    mu = rng.standard_normal(3)
    logvar = rng.uniform(-1.5, 1.0, size=3)
    kl, dmu, dlv = dk.gaussian_kl(mu, logvar)
    z = mu + np.exp(0.5 * logvar) * rng.standard_normal((100_000, 3))
    logq = -0.5 * (((z - mu) ** 2) / np.exp(logvar) + logvar).sum(1)
    logp = -0.5 * (z**2).sum(1)
    mc = float(np.mean(logq - logp))
    assert abs(mc - kl) <= 0.02 * max(kl, 0.05) + 4 * np.std(logq - logp) / np.sqrt(z.shape[0])
    h = 1e-6
    num = (dk.gaussian_kl(mu + h * np.eye(3)[0], logvar)[0] - dk.gaussian_kl(mu - h * np.eye(3)[0], logvar)[0]) / (2 * h)
    assert num == pytest.approx(dmu[0], rel=1e-6)


def test_adam_minimizes_a_quadratic():
    p = {"w": np.array([3.0, -2.0])}
    opt = dk.Adam(lr=0.1)
    for _ in range(500):
        opt.step(p, {"w": 2 * p["w"]})
    assert np.abs(p["w"]).max() < 1e-2


def test_adam_state_round_trip_continues_identically():
    def run(opt, p, k):
        for _ in range(k):
            opt.step(p, {"w": np.sin(p["w"]) + p["w"]})

    a = {"w": np.array([1.0, 2.0])}
    oa = dk.Adam(lr=0.05)
    run(oa, a, 5)
    b = {"w": a["w"].copy()}
    ob = dk.Adam()
    ob.load_state_dict(oa.state_dict())
    run(oa, a, 5)
    run(ob, b, 5)
    assert np.array_equal(a["w"], b["w"])


def test_checkpoint_round_trip_is_exact(rng):
    params = {"a.taps": rng.standard_normal((2, 3, 4)), "a.bias": rng.standard_normal(4)}
    text = checkpoint.dumps(params, {"kind": "x"}, {"epoch": 3})
    doc = checkpoint.loads(text)
    assert doc["epoch"] == 3 and doc["architecture"] == {"kind": "x"}
    live = {k: np.zeros_like(v) for k, v in params.items()}
    checkpoint.load_into(live, doc["params"])
    assert all(np.array_equal(live[k], params[k]) for k in params)
    with pytest.raises(ValueError):
        checkpoint.load_into({"a.bias": np.zeros(4)}, doc["params"])
    bad = json.loads(text)
    bad["format_version"] = 99
    with pytest.raises(ValueError):
        checkpoint.loads(json.dumps(bad))
