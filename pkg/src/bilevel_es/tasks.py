"""Bundled fitness landscapes.

Analytic black-box functions plus two small deterministic continuous-control
tasks. Everything is a maximization problem (losses are negated) and every
evaluation is a pure function of (parameters, eval seed, iteration index),
so runs are exactly reproducible. Control tasks score an episode as the
decay-weighted return sum_i gamma^i * r_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .models import MlpSpec, TANH, mlp_forward
from .rand import rng_for


class Task:
    """Base: subclasses define param_dim and evaluate()."""

    name = "task"
    nonstationary = False

    @property
    def param_dim(self) -> int:
        raise NotImplementedError

    def evaluate(self, theta, eval_seed: int = 0, iteration: int = 0) -> float:
        raise NotImplementedError

    def _check_dim(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.param_dim:
            raise ConfigError(
                f"{self.name}: expected {self.param_dim} parameters, got {theta.size}"
            )
        return theta


@dataclass
class Sphere(Task):
    dim: int = 10
    name = "sphere"

    @property
    def param_dim(self):
        return self.dim

    def evaluate(self, theta, eval_seed=0, iteration=0):
        theta = self._check_dim(theta)
        return float(-np.dot(theta, theta))


@dataclass
class Rastrigin(Task):
    dim: int = 10
    name = "rastrigin"

    @property
    def param_dim(self):
        return self.dim

    def evaluate(self, theta, eval_seed=0, iteration=0):
        theta = self._check_dim(theta)
        value = np.sum(theta * theta - 10.0 * np.cos(2.0 * np.pi * theta) + 10.0)
        return float(-value)


@dataclass
class ShiftedSphere(Task):
    """Sphere whose optimum jumps along a seeded schedule every J iterations."""

    dim: int = 20
    shift_every: int = 50
    shift_scale: float = 1.0
    task_seed: int = 0
    name = "shifted_sphere_nonstationary"
    nonstationary = True

    def __post_init__(self):
        if self.shift_every < 1:
            raise ConfigError("shift_every must be >= 1")

    @property
    def param_dim(self):
        return self.dim

    def optimum(self, iteration: int) -> np.ndarray:
        epoch = iteration // self.shift_every
        rng = rng_for(self.task_seed, "optimum-shift", epoch)
        return rng.uniform(-self.shift_scale, self.shift_scale, self.dim)

    def evaluate(self, theta, eval_seed=0, iteration=0):
        theta = self._check_dim(theta)
        delta = theta - self.optimum(iteration)
        return float(-np.dot(delta, delta))


def shift_optimum(task: ShiftedSphere, iteration: int) -> np.ndarray:
    """Current optimum of the nonstationary sphere at the given iteration."""
    if not isinstance(task, ShiftedSphere):
        raise ConfigError("shift_optimum requires the nonstationary sphere task")
    return task.optimum(iteration)


class _PolicyTask(Task):
    """Episodic control task driven by a tanh MLP policy (two 64-unit layers)."""

    obs_dim = 0
    act_dim = 0

    def __init__(self, horizon=200, gamma=1.0, hidden=(64, 64)):
        if horizon < 1:
            raise ConfigError("episode horizon must be >= 1")
        if not 0 < gamma <= 1:
            raise ConfigError("gamma must be in (0, 1]")
        self.horizon = horizon
        self.gamma = gamma
        self.policy_spec = MlpSpec(
            input_dim=self.obs_dim,
            hidden_dims=tuple(hidden),
            output_dim=self.act_dim,
            hidden_activation=TANH,
            output_activation=TANH,
        )

    @property
    def param_dim(self):
        return self.policy_spec.param_count

    def _policy(self, theta, obs):
        return mlp_forward(self.policy_spec, theta, obs)


class PointMassNav(_PolicyTask):
    """2-D double integrator steered toward a fixed goal.

    Reward each step is the negated squared distance to the goal; a zero
    policy never accelerates, so the agent sits at the start forever.
    """

    name = "point_mass_nav"
    obs_dim = 4
    act_dim = 2

    dt = 0.05
    accel_max = 1.0
    goal = np.array([1.0, 1.0])
    start = np.array([0.0, 0.0])

    def evaluate(self, theta, eval_seed=0, iteration=0):
        theta = self._check_dim(theta)
        pos = self.start.copy()
        vel = np.zeros(2)
        total = 0.0
        discount = 1.0
        for _ in range(self.horizon):
            obs = np.concatenate([self.goal - pos, vel])
            accel = self.accel_max * self._policy(theta, obs)
            vel = vel + self.dt * accel
            pos = pos + self.dt * vel
            delta = pos - self.goal
            total += discount * (-float(delta @ delta))
            discount *= self.gamma
        return total


class CartpoleSwingup(_PolicyTask):
    """Cart-pole swing-up with continuous torque; pole starts hanging down.

    Reward each step is cos(pole angle) (upright = +1). The episode ends
    early if the cart leaves the track.
    """

    name = "cartpole_swingup"
    obs_dim = 5
    act_dim = 1

    gravity = 9.8
    cart_mass = 1.0
    pole_mass = 0.1
    pole_half_length = 0.5
    force_max = 10.0
    dt = 0.02
    x_limit = 2.4

    def evaluate(self, theta, eval_seed=0, iteration=0):
        theta = self._check_dim(theta)
        x, x_dot = 0.0, 0.0
        ang, ang_dot = math.pi, 0.0  # angle from upright
        total_mass = self.cart_mass + self.pole_mass
        ml = self.pole_mass * self.pole_half_length
        total = 0.0
        discount = 1.0
        for _ in range(self.horizon):
            obs = np.array([x, x_dot, math.sin(ang), math.cos(ang), ang_dot])
            force = self.force_max * float(self._policy(theta, obs)[0])
            cos_a, sin_a = math.cos(ang), math.sin(ang)
            temp = (force + ml * ang_dot ** 2 * sin_a) / total_mass
            ang_acc = (self.gravity * sin_a - cos_a * temp) / (
                self.pole_half_length
                * (4.0 / 3.0 - self.pole_mass * cos_a ** 2 / total_mass)
            )
            x_acc = temp - ml * ang_acc * cos_a / total_mass
            x += self.dt * x_dot
            x_dot += self.dt * x_acc
            ang += self.dt * ang_dot
            ang_dot += self.dt * ang_acc
            total += discount * math.cos(ang)
            discount *= self.gamma
            if abs(x) > self.x_limit:
                break
        return total


_TASK_KINDS = {
    "sphere": Sphere,
    "rastrigin": Rastrigin,
    "shifted_sphere_nonstationary": ShiftedSphere,
    "point_mass_nav": PointMassNav,
    "cartpole_swingup": CartpoleSwingup,
}


def make_task(kind: str, **kwargs) -> Task:
    """Build a task by kind name; unknown kinds or keys raise ConfigError."""
    if kind not in _TASK_KINDS:
        raise ConfigError(
            f"unknown task kind {kind!r}; available: {sorted(_TASK_KINDS)}"
        )
    try:
        return _TASK_KINDS[kind](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad options for task {kind!r}: {exc}") from exc
