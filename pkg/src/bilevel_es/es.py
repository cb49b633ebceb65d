"""Vanilla evolution strategies inner optimizer.

One iteration samples n Gaussian perturbations of the parameter vector,
evaluates their fitness, forms the Monte Carlo search-gradient estimate

    g = (1 / (n * sigma)) * sum_i s(f_i) * eps_i

and applies the plain SGD step  theta <- theta + alpha * g.

s is the identity (``raw``) or the centered-rank transform. Evaluation
order is fixed by individual index so parallel evaluation can never change
the result.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, EvaluationError, InvariantError
from .hyperparams import HyperParams
from .rand import derive_seed, rng_for

RAW = "raw"
CENTERED_RANK = "centered_rank"


@dataclass(frozen=True)
class EsConfig:
    n: int = 200
    alpha: float = 0.02
    sigma: float = 0.05
    gamma: float = 1.0
    fitness_shaping: str = CENTERED_RANK
    antithetic: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"population size n={self.n} must be >= 2")
        if self.sigma <= 0:
            raise ConfigError(f"sigma={self.sigma} must be > 0")
        if self.alpha < 0:
            raise ConfigError(f"alpha={self.alpha} must be >= 0")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma={self.gamma} must be in (0, 1]")
        if self.fitness_shaping not in (RAW, CENTERED_RANK):
            raise ConfigError(f"unknown fitness_shaping {self.fitness_shaping!r}")
        if self.antithetic and self.n % 2 != 0:
            raise ConfigError("antithetic sampling requires an even population size")

    def with_seed(self, seed: int) -> "EsConfig":
        return replace(self, seed=seed)


def sample_population(rng, theta, sigma, n, antithetic=False, allow_zero_sigma=False):
    """Draw the perturbation noise and the perturbed parameter vectors.

    Returns (eps, perturbed): two (n, d) arrays, row i holding eps_i and
    theta + sigma * eps_i. With antithetic sampling rows come in mirrored
    pairs (eps, -eps). sigma == 0 is only legal with allow_zero_sigma
    (test use).
    """
    if sigma < 0 or (sigma == 0 and not allow_zero_sigma):
        raise ConfigError(f"sigma={sigma} must be > 0")
    if n < 2:
        raise ConfigError(f"population size n={n} must be >= 2")
    theta = np.asarray(theta, dtype=np.float64)
    if antithetic:
        if n % 2 != 0:
            raise ConfigError("antithetic sampling requires an even population size")
        half = rng.standard_normal((n // 2, theta.size))
        eps = np.concatenate([half, -half], axis=0)
    else:
        eps = rng.standard_normal((n, theta.size))
    return eps, theta[None, :] + sigma * eps


def centered_ranks(fitnesses) -> np.ndarray:
    """Ranks mapped to [-0.5, 0.5], mean-subtracted (exactly zero-sum).

    Ties get their average rank, so a constant vector maps to exact zeros.
    """
    f = np.asarray(fitnesses, dtype=np.float64)
    if f.size < 2:
        raise InvariantError("centered ranks need at least 2 values")
    shaped = (rankdata(f) - 1.0) / (f.size - 1.0) - 0.5
    return shaped - shaped.mean()


def shape_fitnesses(fitnesses, shaping: str) -> np.ndarray:
    if shaping == RAW:
        return np.asarray(fitnesses, dtype=np.float64)
    if shaping == CENTERED_RANK:
        return centered_ranks(fitnesses)
    raise ConfigError(f"unknown fitness_shaping {shaping!r}")


def estimate_search_gradient(noises, fitnesses, sigma, shaping=RAW) -> np.ndarray:
    """Monte Carlo search-gradient estimate (1/(n*sigma)) * sum s(f_i) eps_i."""
    eps = np.asarray(noises, dtype=np.float64)
    f = np.asarray(fitnesses, dtype=np.float64)
    if eps.shape[0] != f.shape[0]:
        raise InvariantError(
            f"{eps.shape[0]} noise vectors but {f.shape[0]} fitness values"
        )
    if sigma <= 0:
        raise ConfigError(f"sigma={sigma} must be > 0")
    shaped = shape_fitnesses(f, shaping)
    return shaped @ eps / (eps.shape[0] * sigma)


def _evaluate_population(perturbed, fitness_fn, key):
    # Fixed index order; each individual gets its own derived eval seed.
    fits = np.empty(perturbed.shape[0], dtype=np.float64)
    for i in range(perturbed.shape[0]):
        value = fitness_fn(perturbed[i], derive_seed(*key, "eval", i))
        if not np.isfinite(value):
            raise EvaluationError(
                f"fitness evaluation returned non-finite value {value}", index=i
            )
        fits[i] = value
    return fits


def es_step(theta, cfg: EsConfig, h: HyperParams, fitness_fn, key,
            evaluate_center=True):
    """One inner iteration with hyperparameters h.

    key is the tuple of ints/strings that scopes this step's randomness
    (typically (run_seed, "inner", iteration)). Returns
    (theta_next, population_fitnesses, center_return); center_return is
    None when evaluate_center is False (meta lookaheads skip it).
    """
    theta = np.asarray(theta, dtype=np.float64)
    eps, perturbed = sample_population(
        rng_for(*key, "noise"), theta, h.sigma, cfg.n, antithetic=cfg.antithetic
    )
    fits = _evaluate_population(perturbed, fitness_fn, key)
    grad = estimate_search_gradient(eps, fits, h.sigma, cfg.fitness_shaping)
    theta_next = theta + h.alpha * grad
    if not np.all(np.isfinite(theta_next)):
        raise EvaluationError("parameter update produced non-finite entries")
    center = None
    if evaluate_center:
        center = float(fitness_fn(theta, derive_seed(*key, "eval", "center")))
        if not np.isfinite(center):
            raise EvaluationError("center evaluation returned non-finite value")
    return theta_next, fits, center
