"""Parametric meta-level: replay buffer, proposal, and meta ES training.

The meta model never touches the inner parameters directly: it reads the
window of recent population-fitness rows, proposes hyperparameters, and is
itself trained by ES against a truncated one-step estimate of the meta
fitness (mean of l independent one-step inner lookaheads from copies of
theta).

All m perturbed meta models are scored against the same lookahead inner
noise (common random numbers), so their fitness differences reflect only
the hyperparameters they propose.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import BilevelEsError, ConfigError, StateError
from .es import CENTERED_RANK, EsConfig, es_step, estimate_search_gradient
from .hyperparams import HyperParams
from .models import MetaModel
from .rand import derive_seed, rng_for

log = logging.getLogger(__name__)


class PopulationReplayBuffer:
    """Ring buffer of the last k population-fitness rows.

    window() always returns exactly k rows; before k rows exist the oldest
    row is repeated at the front so the encoder input shape is constant.
    """

    def __init__(self, capacity: int, population_size: int):
        if capacity < 1:
            raise ConfigError("buffer capacity must be >= 1")
        self.capacity = capacity
        self.population_size = population_size
        self._rows = deque(maxlen=capacity)

    def __len__(self):
        return len(self._rows)

    def append(self, fitnesses) -> None:
        row = np.asarray(fitnesses, dtype=np.float64)
        if row.shape != (self.population_size,):
            raise ConfigError(
                f"fitness row has shape {row.shape}, expected ({self.population_size},)"
            )
        if not np.all(np.isfinite(row)):
            raise ConfigError("fitness row contains non-finite values")
        self._rows.append(row)

    def window(self) -> np.ndarray:
        if not self._rows:
            raise StateError("replay buffer is empty")
        rows = list(self._rows)
        pad = [rows[0]] * (self.capacity - len(rows))
        return np.stack(pad + rows)

    def rows(self) -> list:
        """Stored rows, oldest first (for checkpointing)."""
        return [row.copy() for row in self._rows]

    @classmethod
    def from_rows(cls, capacity, population_size, rows) -> "PopulationReplayBuffer":
        buffer = cls(capacity, population_size)
        for row in rows:
            buffer.append(row)
        return buffer


@dataclass(frozen=True)
class MetaEsConfig:
    m: int = 200            # meta population size
    beta: float = 0.006     # meta learning rate
    omega: float = 0.05     # meta noise covariance
    lookahead_repeats: int = 3   # Monte Carlo repeats of the one-step estimate
    interval: int = 10      # inner iterations between meta updates (also k)
    fitness_shaping: str = CENTERED_RANK
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ConfigError(f"meta population size m={self.m} must be >= 2")
        if self.beta < 0:
            raise ConfigError(f"beta={self.beta} must be >= 0")
        if self.omega <= 0:
            raise ConfigError(f"omega={self.omega} must be > 0")
        if self.lookahead_repeats < 1:
            raise ConfigError("lookahead_repeats must be >= 1")
        if self.interval < 1:
            raise ConfigError("interval must be >= 1")


def propose_hyperparams(meta: MetaModel, buffer: PopulationReplayBuffer) -> HyperParams:
    """Run the encoder + generator over the buffer window (pure)."""
    return meta.propose(buffer.window())


def estimate_meta_fitness(meta: MetaModel, theta, buffer, task, repeats, cfg: EsConfig,
                          key) -> float:
    """Truncated meta fitness: mean task value after one inner step.

    Each repeat runs one es_step from a copy of theta with the proposed
    hyperparameters and fresh inner noise derived from (key, repeat), then
    evaluates the task at the updated parameters. theta is never mutated.
    """
    h = propose_hyperparams(meta, buffer)
    theta = np.asarray(theta, dtype=np.float64)
    total = 0.0
    for i in range(repeats):
        look_key = (*key, "lookahead", i)
        theta_next, _, _ = es_step(
            theta, cfg, h,
            lambda p, s: task.evaluate(p, s),
            look_key, evaluate_center=False,
        )
        total += task.evaluate(theta_next, derive_seed(*look_key, "final"))
    return total / repeats


def meta_es_update(meta: MetaModel, theta, buffer, meta_cfg: MetaEsConfig,
                   inner_cfg: EsConfig, task, key) -> MetaModel:
    """One ES update of the meta parameters (search gradient over m perturbations).

    On any lookahead failure the update is abandoned and the meta model is
    returned unchanged (with a logged diagnostic).
    """
    if len(buffer) == 0:
        raise StateError("meta update requires a non-empty replay buffer")
    eps = rng_for(*key, "meta-noise").standard_normal((meta_cfg.m, meta.params.size))
    scores = np.empty(meta_cfg.m)
    try:
        for j in range(meta_cfg.m):
            perturbed = meta.with_params(meta.params + meta_cfg.omega * eps[j])
            scores[j] = estimate_meta_fitness(
                perturbed, theta, buffer, task,
                meta_cfg.lookahead_repeats, inner_cfg, key,
            )
    except BilevelEsError as exc:
        log.warning("meta update aborted, keeping previous meta model: %s", exc)
        return meta
    grad = estimate_search_gradient(
        eps, scores, meta_cfg.omega, meta_cfg.fitness_shaping
    )
    return meta.with_params(meta.params + meta_cfg.beta * grad)


def lookahead_evaluations(meta_cfg: MetaEsConfig, inner_cfg: EsConfig) -> int:
    """Task evaluations consumed by one meta update: m * l * (n + 1)."""
    return meta_cfg.m * meta_cfg.lookahead_repeats * (inner_cfg.n + 1)
