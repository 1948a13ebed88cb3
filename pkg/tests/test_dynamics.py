import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnnplan import dynamics
from gnnplan.errors import DomainError

P = dynamics.DEFAULT_PENDULUM


def test_rest_states_are_fixed_points():
    for s in ([-np.pi / 2, 0.0], [np.pi / 2, 0.0]):
        out = P.rollout(np.array(s), 0.0, 0.01, 100)
        assert np.allclose(out[-1], s, atol=1e-9)


@given(st.floats(-3.0, 3.0), st.floats(-1.0, 1.0))
def test_unforced_energy_drift_is_tiny(th, om):
    traj = P.rollout(np.array([th, om]), 0.0, 0.01, 1000)
    e0 = P.energy([th, om])
    scale = max(abs(e0), P.mass * P.gravity * P.length)
    assert np.abs(P.energy(traj) - e0).max() / scale <= 1e-6


def test_small_oscillation_period():
    # linearised about the hanging state: period 2 pi sqrt(l / g)
    period = 2 * np.pi * np.sqrt(P.length / P.gravity)
    dt = period / 2000
    traj = P.rollout(np.array([-np.pi / 2 + 1e-3, 0.0]), 0.0, dt, 2000)
    assert traj[-1][0] == pytest.approx(-np.pi / 2 + 1e-3, abs=1e-7)


def test_positive_torque_raises_angular_velocity():
    s = P.rollout(np.array([-np.pi / 2, 0.0]), P.u_max, 0.01, 10)[-1]
    assert s[1] > 0


def test_angle_wraps_and_velocity_clamps():
    s = P.rollout(np.array([np.pi - 1e-3, 7.99]), P.u_max, 0.05, 40)
    assert np.all((s[:, 0] > -np.pi) & (s[:, 0] <= np.pi))
    assert np.all(np.abs(s[:, 1]) <= P.omega_max)


def test_rollout_rejects_bad_inputs():
    with pytest.raises(DomainError):
        P.rollout(np.zeros(2), 2 * P.u_max, 0.01, 1)
    with pytest.raises(DomainError):
        P.rollout(np.zeros(2), 0.0, 0.0, 1)
    with pytest.raises(DomainError):
        dynamics.pendulum_goal_reached([0, 0], [0, 0], 0.0, 0.5)


def test_wrap_angle_and_goal_test():
    assert dynamics.wrap_angle(3 * np.pi) == pytest.approx(np.pi)
    assert dynamics.wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert dynamics.angle_diff(np.pi - 0.1, -np.pi + 0.1) == pytest.approx(-0.2)
    assert dynamics.pendulum_goal_reached([np.pi - 0.05, 0.1], [-np.pi + 0.05, 0.0])
    assert not dynamics.pendulum_goal_reached([0.0, 0.0], [0.5, 0.0])


def test_arm_forward_kinematics():
    q = np.zeros(6)
    pts = dynamics.arm_forward_kinematics(q)
    assert pts.shape == (7, 2)
    assert np.allclose(pts[-1], [1.0, 0.0])
    q[0] = np.pi / 2
    assert np.allclose(dynamics.arm_forward_kinematics(q)[-1], [0.0, 1.0])
    q = np.array([0.0, np.pi / 2, 0, 0, 0, 0])
    assert np.allclose(dynamics.arm_forward_kinematics(q)[-1], [1 / 6, 5 / 6])
    with pytest.raises(DomainError):
        dynamics.arm_forward_kinematics(np.zeros(5))


def test_arm_collision_against_dense_link_sampling(rng):
    lengths = dynamics.DEFAULT_LINKS
    discs = np.array([[0.5, 0.3, 0.12], [-0.4, -0.5, 0.1]])
    qs = rng.uniform(-np.pi, np.pi, size=(300, 6))
    for q in qs:
        pts = dynamics.arm_forward_kinematics(q, lengths)
        t = np.linspace(0, 1, 400)[:, None]
        dense = np.vstack([a + t * (b - a) for a, b in zip(pts[:-1], pts[1:])])
        d = np.sqrt(((dense[:, None, :] - discs[None, :, :2]) ** 2).sum(-1)) - discs[None, :, 2]
        clear = d.min()
        if abs(clear) < 1e-3:
            continue
        assert dynamics.arm_config_free(q, lengths, discs) == (clear > 0)


def test_arm_configs_free_reports_first_hit_and_count():
    discs = np.array([[1.0, 0.0, 0.05]])
    qs = np.zeros((5, 6))
    qs[:2, 0] = np.pi / 2
    bad, checked = dynamics.arm_configs_free(qs, dynamics.DEFAULT_LINKS, discs)
    assert (bad, checked) == (2, 3)
    assert dynamics.arm_configs_free(qs[:2], dynamics.DEFAULT_LINKS, discs) == (-1, 2)


def test_arm_scene_round_trip():
    s = dynamics.ArmScene(tuple(dynamics.DEFAULT_LINKS), ((0.5, 0.5, 0.1),))
    assert dynamics.ArmScene.from_json(s.to_json()) == s
    with pytest.raises(DomainError):
        dynamics.ArmScene((0.5, -0.1), ())
