"""Integrated optimization loops: fixed-H baseline, parametric, nonparametric.

Drivers execute one inner iteration per step() call and emit one RunRecord
each. The meta level (ES update of the meta model, or a BO round) runs after
every `interval` completed inner iterations, so a run of T iterations
performs floor(T / interval) meta updates. Driver state is exposed for
checkpointing; because all randomness is derived from (seed, counters), a
resumed driver reproduces the uninterrupted run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .es import EsConfig, es_step
from .hyperparams import HyperParams, HyperRanges
from .meta_bo import BoState, bo_round
from .meta_pm import (
    MetaEsConfig,
    PopulationReplayBuffer,
    lookahead_evaluations,
    meta_es_update,
    propose_hyperparams,
)
from .models import MetaModel
from .rand import rng_for

MODE_BASELINE = "baseline_fixed"
MODE_PM = "pm"
MODE_NPM = "npm"


@dataclass(frozen=True)
class RunRecord:
    """Per-iteration log row; the CSV column order follows field order."""

    iteration: int
    ret: float           # unperturbed return f(theta_t)
    pop_mean: float
    pop_max: float
    sigma: float
    alpha: float
    inner_evals: int     # cumulative population evaluations
    lookahead_evals: int  # cumulative meta lookahead evaluations
    seed: int

    CSV_COLUMNS = (
        "iteration", "return", "pop_mean", "pop_max", "sigma", "alpha",
        "inner_evals", "lookahead_evals", "seed",
    )

    def csv_values(self):
        return (
            self.iteration, self.ret, self.pop_mean, self.pop_max,
            self.sigma, self.alpha, self.inner_evals, self.lookahead_evals,
            self.seed,
        )


class _Driver:
    """Shared inner-iteration machinery. Subclasses pick H and run the meta phase."""

    mode = "base"

    def __init__(self, task, inner_cfg: EsConfig, seed: int, theta0=None):
        self.task = task
        self.inner_cfg = inner_cfg
        self.seed = seed
        if theta0 is None:
            theta0 = 0.01 * rng_for(seed, "theta-init").standard_normal(task.param_dim)
        self.theta = np.asarray(theta0, dtype=np.float64).copy()
        if self.theta.size != task.param_dim:
            raise ConfigError(
                f"theta has {self.theta.size} entries, task needs {task.param_dim}"
            )
        self.iteration = 0
        self.inner_evals = 0
        self.lookahead_evals = 0

    # -- hooks -------------------------------------------------------------
    def current_hyperparams(self) -> HyperParams:
        raise NotImplementedError

    def meta_phase(self) -> None:
        """Called after every `interval` completed inner iterations."""

    @property
    def interval(self) -> int:
        return 0  # 0: no meta phase

    def after_inner(self, fits) -> None:
        """Called with the population fitness row of the finished iteration."""

    # -- execution ---------------------------------------------------------
    def step(self) -> RunRecord:
        t = self.iteration
        h = self.current_hyperparams()
        fitness = lambda p, s: self.task.evaluate(p, s, iteration=t)
        theta_next, fits, center = es_step(
            self.theta, self.inner_cfg, h, fitness, (self.seed, "inner", t)
        )
        self.theta = theta_next
        self.inner_evals += self.inner_cfg.n
        self.after_inner(fits)
        self.iteration = t + 1
        if self.interval and self.iteration % self.interval == 0:
            self.meta_phase()
        return RunRecord(
            iteration=t,
            ret=center,
            pop_mean=float(fits.mean()),
            pop_max=float(fits.max()),
            sigma=h.sigma,
            alpha=h.alpha,
            inner_evals=self.inner_evals,
            lookahead_evals=self.lookahead_evals,
            seed=self.seed,
        )

    def run(self, iterations: int) -> list:
        return [self.step() for _ in range(iterations)]


class BaselineDriver(_Driver):
    """Fixed hyperparameters taken verbatim from the inner config."""

    mode = MODE_BASELINE

    def current_hyperparams(self) -> HyperParams:
        return HyperParams(sigma=self.inner_cfg.sigma, alpha=self.inner_cfg.alpha)


class PmDriver(_Driver):
    """Parametric meta-level: H regenerated from the meta model every iteration."""

    mode = MODE_PM

    def __init__(self, task, inner_cfg, meta_cfg: MetaEsConfig, meta: MetaModel,
                 seed: int, theta0=None):
        super().__init__(task, inner_cfg, seed, theta0)
        if meta.spec.population_size != inner_cfg.n:
            raise ConfigError(
                "meta model input width must equal the inner population size"
            )
        self.meta_cfg = meta_cfg
        self.meta = meta
        self.buffer = PopulationReplayBuffer(meta.spec.window, inner_cfg.n)

    @property
    def interval(self):
        return self.meta_cfg.interval

    @property
    def ranges(self) -> HyperRanges:
        return self.meta.spec.ranges

    def current_hyperparams(self) -> HyperParams:
        if len(self.buffer) == 0:
            # No population row exists before the very first inner step.
            return HyperParams(
                sigma=self.ranges.sigma.mid, alpha=self.ranges.alpha.mid
            )
        return propose_hyperparams(self.meta, self.buffer).validate(self.ranges)

    def after_inner(self, fits):
        self.buffer.append(fits)

    def meta_phase(self):
        update_index = self.iteration // self.meta_cfg.interval
        self.meta = meta_es_update(
            self.meta, self.theta, self.buffer, self.meta_cfg, self.inner_cfg,
            self.task, (self.seed, "meta", update_index),
        )
        self.lookahead_evals += lookahead_evaluations(self.meta_cfg, self.inner_cfg)


class NpmDriver(_Driver):
    """BO meta-level: H re-optimized per round, held fixed across the block."""

    mode = MODE_NPM

    def __init__(self, task, inner_cfg, bo_state: BoState, seed: int,
                 interval: int = 10, budget: int = 5, lookahead_repeats: int = 1,
                 theta0=None):
        super().__init__(task, inner_cfg, seed, theta0)
        if interval < 1 or budget < 1 or lookahead_repeats < 1:
            raise ConfigError("interval, budget and lookahead_repeats must be >= 1")
        self.bo_state = bo_state
        self._interval = interval
        self.budget = budget
        self.lookahead_repeats = lookahead_repeats
        self.current_h = HyperParams(
            sigma=bo_state.ranges.sigma.mid, alpha=bo_state.ranges.alpha.mid
        )

    @property
    def interval(self):
        return self._interval

    def current_hyperparams(self) -> HyperParams:
        return self.current_h.validate(self.bo_state.ranges)

    def meta_phase(self):
        round_index = self.iteration // self._interval
        self.current_h = bo_round(
            self.bo_state, self.theta, self.task, self.budget, self.inner_cfg,
            self.lookahead_repeats, (self.seed, "bo", round_index),
        )
        self.lookahead_evals += (
            self.budget * self.lookahead_repeats * (self.inner_cfg.n + 1)
        )


def integrated_loop(theta0, meta: MetaModel, inner_cfg: EsConfig,
                    meta_cfg: MetaEsConfig, task, total_iterations: int,
                    seed: int = 0):
    """Run the parametric loop; returns (theta, records, final meta model)."""
    driver = PmDriver(task, inner_cfg, meta_cfg, meta, seed, theta0=theta0)
    records = driver.run(total_iterations)
    return driver.theta, records, driver.meta


def npm_integrated_loop(theta0, bo_state: BoState, inner_cfg: EsConfig, task,
                        total_iterations: int, seed: int = 0, interval: int = 10,
                        budget: int = 5, lookahead_repeats: int = 1):
    """Run the BO loop; returns (theta, records, final BoState)."""
    driver = NpmDriver(
        task, inner_cfg, bo_state, seed, interval=interval, budget=budget,
        lookahead_repeats=lookahead_repeats, theta0=theta0,
    )
    records = driver.run(total_iterations)
    return driver.theta, records, driver.bo_state
