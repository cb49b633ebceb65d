"""Nonparametric meta-level: Gaussian-process surrogate + expected improvement.

Hyperparameters are searched in normalized [0, 1]^d coordinates. Observed
meta-fitness values are standardized per round, modeled with a zero-mean GP
(squared-exponential kernel, fixed length scale), and the next candidate is
the expected-improvement maximizer over a random candidate set. Because the
one-step meta fitness drifts as the inner parameters evolve, observations
older than a sliding window of rounds are discarded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from .errors import BilevelEsError, ConfigError, NumericalError
from .es import EsConfig, es_step
from .hyperparams import HyperParams, HyperRanges
from .rand import derive_seed, rng_for

log = logging.getLogger(__name__)

_JITTER_START = 1e-8
_JITTER_MAX = 1e-4


@dataclass
class BoObservation:
    point: np.ndarray      # normalized coordinates in [0, 1]^d
    value: float           # raw (unstandardized) meta fitness
    round_index: int


@dataclass
class BoState:
    ranges: HyperRanges
    length_scale: float = 0.2
    signal_variance: float = 1.0
    noise_variance: float = 1e-6
    candidate_count: int = 256
    stale_rounds: int = 3          # sliding window of rounds kept
    observations: list = field(default_factory=list)
    round_index: int = 0

    def to_point(self, h: HyperParams) -> np.ndarray:
        coords = []
        for value, rng in zip((h.sigma, h.alpha), self.ranges.as_tuple()):
            coords.append(0.5 if rng.width == 0 else (value - rng.lo) / rng.width)
        return np.array(coords)

    def from_point(self, point) -> HyperParams:
        values = [r.lo + p * r.width for r, p in zip(self.ranges.as_tuple(), point)]
        return HyperParams(sigma=float(values[0]), alpha=float(values[1]))

    def add(self, point, value: float) -> None:
        point = np.asarray(point, dtype=np.float64)
        if np.any(point < 0) or np.any(point > 1):
            raise ConfigError(f"normalized point {point} outside [0, 1]^d")
        self.observations.append(BoObservation(point, float(value), self.round_index))

    def prune_stale(self) -> None:
        cutoff = self.round_index - self.stale_rounds
        self.observations = [o for o in self.observations if o.round_index > cutoff]

    def data(self):
        if not self.observations:
            return np.empty((0, 2)), np.empty(0)
        x = np.stack([o.point for o in self.observations])
        y = np.array([o.value for o in self.observations])
        return x, y

    def incumbent(self) -> BoObservation:
        return max(self.observations, key=lambda o: o.value)


def _kernel(a, b, length_scale, signal_variance):
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return signal_variance * np.exp(-0.5 * d2 / length_scale**2)


def _standardize(y):
    mean = y.mean()
    std = max(float(y.std()), 1e-8)
    return (y - mean) / std, mean, std


def gp_posterior(state: BoState, query):
    """Posterior (mean, variance) at the query point(s) in normalized space.

    Observed values are standardized internally; the returned moments are in
    the raw value scale. Kernel solves are jittered, escalating x10 from
    1e-8 up to 1e-4 before giving up.
    """
    x, y = state.data()
    if x.shape[0] == 0:
        raise ConfigError("GP posterior requires at least one observation")
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    y_std, mean, std = _standardize(y)
    k_xx = _kernel(x, x, state.length_scale, state.signal_variance)
    k_qx = _kernel(query, x, state.length_scale, state.signal_variance)
    jitter = _JITTER_START
    while True:
        try:
            chol = cho_factor(
                k_xx + (state.noise_variance + jitter) * np.eye(x.shape[0]),
                lower=True,
            )
            break
        except np.linalg.LinAlgError:
            jitter *= 10
            if jitter > _JITTER_MAX:
                raise NumericalError(
                    "kernel matrix not positive definite after maximum jitter"
                ) from None
    alpha = cho_solve(chol, y_std)
    post_mean = k_qx @ alpha
    v = cho_solve(chol, k_qx.T)
    post_var = state.signal_variance - np.einsum("qi,iq->q", k_qx, v)
    post_var = np.maximum(post_var, 0.0)
    return post_mean * std + mean, post_var * std**2


def expected_improvement(mean, variance, incumbent) -> np.ndarray:
    """EI for maximization; nonnegative everywhere, zero where var=0, mean<=best."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.sqrt(np.asarray(variance, dtype=np.float64))
    improvement = mean - incumbent
    ei = np.where(
        std > 0,
        improvement * norm.cdf(np.divide(improvement, std, where=std > 0))
        + std * norm.pdf(np.divide(improvement, std, where=std > 0)),
        np.maximum(improvement, 0.0),
    )
    return np.maximum(ei, 0.0)


def construct_meta_fitness(h: HyperParams, theta, task, repeats, cfg: EsConfig,
                           key) -> float:
    """One-step meta fitness for an explicit hyperparameter setting.

    Same truncated estimate as the parametric path, with H given directly:
    mean over `repeats` of the task value after one inner step from a copy
    of theta.
    """
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


def bo_round(state: BoState, theta, task, budget: int, inner_cfg: EsConfig,
             repeats: int, key) -> HyperParams:
    """One acquisition round: evaluate `budget` candidates, return the best H.

    Candidates are expected-improvement maximizers over a fresh uniform
    candidate set (plus the incumbent's neighborhood via the incumbent point
    itself). If every evaluation fails, the previous incumbent is kept; with
    no previous observations the failure is re-raised.
    """
    if budget < 1:
        raise ConfigError("BO round budget must be >= 1")
    state.round_index += 1
    state.prune_stale()
    failures = 0
    for step in range(budget):
        rng = rng_for(*key, "candidates", step)
        candidates = rng.uniform(0.0, 1.0, (state.candidate_count, 2))
        if state.observations:
            candidates = np.vstack([candidates, state.incumbent().point])
            mean, var = gp_posterior(state, candidates)
            ei = expected_improvement(mean, var, state.incumbent().value)
            point = candidates[int(np.argmax(ei))]
        else:
            point = candidates[0]
        h = state.from_point(point)
        try:
            # Shared per-round lookahead noise: candidate values within a
            # round differ only through H, not through the inner draws.
            value = construct_meta_fitness(
                h, theta, task, repeats, inner_cfg, (*key, "round-eval")
            )
        except BilevelEsError as exc:
            failures += 1
            log.warning("BO evaluation failed for %s: %s", h, exc)
            continue
        state.add(point, value)
    if failures == budget and not state.observations:
        raise NumericalError("all BO evaluations in the round failed")
    return state.from_point(state.incumbent().point)
