"""Torque-limited pendulum and a planar revolute arm.

The pendulum angle is measured from the horizontal, so the stable rest
state is ``theta = -pi/2``. The arm is a chain of revolute joints rooted at
the origin; obstacles are discs.
"""
import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError

MASS = 1.0
LENGTH = 1.0
GRAVITY = 9.81
U_MAX = 1.5
OMEGA_MAX = 8.0
DT = 0.05

THETA_RANGE = (-np.pi, np.pi)
OMEGA_RANGE = (-OMEGA_MAX, OMEGA_MAX)


def wrap_angle(a):
    """Map angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=np.float64), 2.0 * np.pi)


@dataclass(frozen=True)
class Pendulum:
    mass: float = MASS
    length: float = LENGTH
    gravity: float = GRAVITY
    u_max: float = U_MAX
    omega_max: float = OMEGA_MAX

    @property
    def g_over_l(self):
        return self.gravity / self.length

    @property
    def inv_ml2(self):
        return 1.0 / (self.mass * self.length**2)

    def energy(self, state):
        s = np.asarray(state, dtype=np.float64)
        th, om = s[..., 0], s[..., 1]
        ml = self.mass * self.length
        return 0.5 * ml * self.length * om**2 + ml * self.gravity * np.sin(th)

    def rollout(self, state, u, dt, nsteps):
        """States after each of ``nsteps`` RK4 steps under constant torque."""
        if dt <= 0:
            raise DomainError("dt must be positive")
        if abs(u) > self.u_max + 1e-12:
            raise DomainError(f"|u|={abs(u)} exceeds u_max={self.u_max}")
        return kernels.pendulum_rollout(
            float(state[0]), float(state[1]), float(u), float(dt), int(nsteps),
            self.g_over_l, self.inv_ml2, self.omega_max,
        )


DEFAULT_PENDULUM = Pendulum()


def pendulum_step(state, u, dt=DT, system=DEFAULT_PENDULUM):
    """One RK4 step; the angle is wrapped and the velocity clamped."""
    return system.rollout(state, u, dt, 1)[0]


def pendulum_energy(state, system=DEFAULT_PENDULUM):
    return system.energy(state)


def angle_diff(a, b):
    """Signed wrapped difference ``a - b`` in ``(-pi, pi]``."""
    return wrap_angle(np.asarray(a) - np.asarray(b))


def pendulum_goal_reached(state, goal, tol_theta=0.2, tol_omega=0.5):
    if tol_theta <= 0 or tol_omega <= 0:
        raise DomainError("tolerances must be positive")
    dth = abs(float(angle_diff(state[0], goal[0])))
    return dth <= tol_theta and abs(float(state[1]) - float(goal[1])) <= tol_omega


# ---------------------------------------------------------------------------
# planar arm

N_JOINTS = 6
DEFAULT_LINKS = np.full(N_JOINTS, 1.0 / N_JOINTS)


def _lengths(link_lengths):
    lengths = np.asarray(link_lengths, dtype=np.float64)
    if lengths.ndim != 1 or np.any(lengths <= 0):
        raise DomainError("link lengths must be a positive 1-d array")
    return lengths


def _discs(obstacles):
    d = np.asarray(obstacles, dtype=np.float64).reshape(-1, 3)
    if np.any(d[:, 2] < 0):
        raise DomainError("disc radius must be non-negative")
    return d


def arm_forward_kinematics(config, link_lengths=DEFAULT_LINKS):
    """Base, joint and end-effector positions, shape ``(L+1, 2)``."""
    lengths = _lengths(link_lengths)
    q = np.asarray(config, dtype=np.float64)
    if q.shape != lengths.shape:
        raise DomainError(f"config shape {q.shape} does not match {lengths.shape}")
    return kernels.arm_joint_positions(q[None, :], lengths)[0]


def arm_configs_free(configs, link_lengths, obstacles):
    """Index of the first colliding config (or -1) and the number checked
    before stopping."""
    lengths = _lengths(link_lengths)
    q = np.ascontiguousarray(np.atleast_2d(np.asarray(configs, dtype=np.float64)))
    bad, checked = kernels.arm_configs_free(q, lengths, np.ascontiguousarray(_discs(obstacles)))
    return int(bad), int(checked)


def arm_config_free(config, link_lengths, obstacles):
    """True iff every link segment stays outside every closed disc."""
    return arm_configs_free(np.asarray(config)[None, :], link_lengths, obstacles)[0] < 0


@dataclass(frozen=True)
class ArmScene:
    link_lengths: tuple
    obstacles: tuple  # (cx, cy, r) discs

    def __post_init__(self):
        _lengths(self.link_lengths)
        _discs(self.obstacles)

    @property
    def lengths(self):
        return np.asarray(self.link_lengths, dtype=np.float64)

    @property
    def discs(self):
        return _discs(self.obstacles)

    @property
    def dim(self):
        return len(self.link_lengths)

    def is_free(self, config):
        return arm_config_free(config, self.lengths, self.discs)

    def to_dict(self):
        return {
            "link_lengths": [float(v) for v in self.link_lengths],
            "obstacles": [[float(v) for v in o] for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(float(v) for v in d["link_lengths"]), tuple(tuple(float(v) for v in o) for o in d["obstacles"]))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))
