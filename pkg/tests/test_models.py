import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnnplan import cspace_graph as cg
from gnnplan import models, verify
from gnnplan.errors import DomainError, TrainingError
from gnnplan.rng import stream


def tiny_examples(seed=0, count=10, n=30):
    rng = stream(seed, "tiny")
    shift = verify._random_graph(rng, n).shift
    out = []
    for k in range(count):
        x = rng.standard_normal((n, 3))
        # label is the feature row with the largest first coordinate
        out.append(models.Example(shift, x, x[np.argmax(x[:, 0])][None, 1:3], k))
    return out


def small(kind="gnn", seed=0):
    if kind == "gnn_cvae":
        return models.GnnCvae(3, 2, seed=seed, widths=(8, 8), head_width=8, latent_dim=2)
    return models.GraphRegressor(3, 2, seed=seed, kind=kind, widths=(8, 8), head_width=8)


@pytest.mark.parametrize("kind", ["gnn", "gat"])
def test_regressor_overfits_tiny_dataset(kind):
    data = tiny_examples()
    model = small(kind)
    before = models.evaluate_mse(model, data)
    models.train_regressor(model, data, 200, seed=1, lr=1e-2, batch_size=5)
    assert models.evaluate_mse(model, data) < before / 10


def test_cvae_loss_decreases_on_tiny_dataset():
    data = tiny_examples()
    model = small("gnn_cvae")
    trainer = models.Trainer(model, 3, lr=1e-2, batch_size=5)
    hist = trainer.fit(data, 150)
    assert np.mean([h[1] for h in hist[-10:]]) < hist[0][1] / 2
    samples = model.sample(data[0].shift, data[0].x, 5, np.random.default_rng(0))
    assert samples.shape == (5, 2) and np.isfinite(samples).all()


@pytest.mark.parametrize("kind", ["gnn", "gat", "gnn_cvae"])
def test_resume_matches_uninterrupted_training(kind):
    data = tiny_examples(count=6)
    sched = dict(lr=5e-3, batch_size=4, lr_final=1e-3, anneal_epochs=4)
    full = models.Trainer(small(kind), 7, **sched)
    full.fit(data, 4)
    part = models.Trainer(small(kind), 7, **sched)
    part.fit(data, 2)
    resumed = models.Trainer.from_checkpoint(part.checkpoint())
    resumed.fit(data, 2)
    assert np.array_equal(np.array(resumed.state.history), np.array(full.state.history), equal_nan=True)
    for k, v in full.model.parameters().items():
        assert np.array_equal(v, resumed.model.parameters()[k])


def test_cosine_schedule_endpoints():
    t = models.Trainer(small(), 0, lr=1e-2, lr_final=1e-4, anneal_epochs=10)
    assert t.lr_at(0) == pytest.approx(1e-2)
    assert t.lr_at(5) == pytest.approx(0.5 * (1e-2 + 1e-4))
    assert t.lr_at(10) == t.lr_at(50) == pytest.approx(1e-4)
    assert models.Trainer(small(), 0, lr=1e-2).lr_at(7) == 1e-2


def test_checkpoint_restores_architecture_and_predictions():
    m = models.GraphRegressor(5, 2, seed=4, widths=(6,), head_width=4, input_gain=[1, 1, 1, 1, 6])
    ex = tiny_examples()[0]
    x = np.hstack([ex.x, np.ones((ex.x.shape[0], 2))])
    back, doc = models.load_model(m.to_checkpoint())
    assert back.architecture() == m.architecture()
    assert np.array_equal(back.predict(ex.shift, x), m.predict(ex.shift, x))


def test_input_gain_scales_first_layer_only():
    a = models.GraphRegressor(3, 2, seed=0, widths=(4, 4))
    b = models.GraphRegressor(3, 2, seed=0, widths=(4, 4), input_gain=[1, 1, 6])
    pa, pb = a.parameters(), b.parameters()
    first = next(k for k in pa if k.endswith("taps"))
    assert np.allclose(pb[first][:, 2], 6 * pa[first][:, 2])
    assert np.array_equal(pb[first][:, :2], pa[first][:, :2])
    assert all(np.array_equal(pa[k], pb[k]) for k in pa if k != first)
    with pytest.raises(DomainError):
        models.GraphRegressor(3, 2, input_gain=[1, 1, 1, 1])


@given(st.integers(0, 2**32), st.integers(3, 40))
def test_models_are_permutation_invariant(seed, n):
    rng = stream(seed, "inv")
    shift = verify._random_graph(rng, n).shift
    x = rng.standard_normal((n, 3))
    perm = cg.Permutation.random(n, rng)
    for kind in ("gnn", "gat", "gnn_cvae"):
        m = small(kind, seed % 1000)
        a = m.predict(shift, x)
        b = m.predict(shift.permuted(perm), cg.permute_problem(x, perm))
        assert np.abs(a - b).max() <= 1e-8


def test_baseline_and_accuracy():
    data = tiny_examples()
    base = models.ConstantBaseline.fit(data)
    assert np.allclose(base.predict(None, None), np.vstack([d.labels for d in data]).mean(0))
    assert models.accuracy([[0.0, 0.0]], [[0.3, 0.4]]) == pytest.approx(0.75)
    assert models.accuracy([[0.0, 0.0]], [[3.0, 4.0]]) == 0.0
    with pytest.raises(DomainError):
        models.accuracy(np.zeros((0, 2)), np.zeros((0, 2)))


def test_non_finite_loss_is_reported_with_epoch():
    data = tiny_examples(count=2)
    data[0].x[0, 0] = np.nan
    with pytest.raises(TrainingError) as exc:
        models.Trainer(small(), 0).fit(data, 1)
    assert exc.value.epoch == 0
    with pytest.raises(DomainError):
        models.Trainer(small(), 0).fit([], 1)


def test_cvae_latent_sampling_is_seeded():
    ex = tiny_examples()[0]
    m = small("gnn_cvae")
    g = type("G", (), {"shift": ex.shift})()
    a = models.sample_critical_distribution(m, g, ex.x, 4, 9)
    b = models.sample_critical_distribution(m, g, ex.x, 4, 9)
    assert np.array_equal(a, b)
    assert models.sample_critical_distribution(m, g, ex.x, 0, 9).shape == (0, 2)
