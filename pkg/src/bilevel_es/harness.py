"""Experiment harness: config handling, seeded runs, CSV logs, summaries.

A run config selects a task, one or more modes (fixed-H baseline, the
parametric meta-level, the BO meta-level), seeds, and a profile. Each
(mode, seed) run writes one CSV of per-iteration records; the experiment
writes a summary JSON with per-mode statistics. With budget matching on,
the baseline is granted as many extra iterations as the adaptive modes
spend on meta lookaheads, so comparisons happen at equal evaluation counts.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .es import CENTERED_RANK, EsConfig
from .hyperparams import HyperRanges, Range
from .loops import (
    MODE_BASELINE,
    MODE_NPM,
    MODE_PM,
    BaselineDriver,
    NpmDriver,
    PmDriver,
    RunRecord,
)
from .meta_bo import BoState
from .meta_pm import MetaEsConfig, lookahead_evaluations
from .models import MetaModel, MetaModelSpec
from .persist import (
    load_checkpoint,
    load_meta_model,
    pretrain_meta,
    restore_driver,
    save_checkpoint,
    save_meta_model,
    snapshot_driver,
)
from .rand import rng_for
from .tasks import ShiftedSphere, make_task

log = logging.getLogger(__name__)

WORKERS_ENV = "BILEVEL_ES_WORKERS"

PROFILE_QUICKSTART = "quickstart"
PROFILE_PAPER = "paper_scale"

ALL_MODES = (MODE_BASELINE, MODE_PM, MODE_NPM)
SWEEP_AXES = ("n", "m", "omega", "beta", "k", "l")

# Profile defaults: paper_scale is the full-size reference configuration;
# quickstart targets minutes on a laptop.
_PROFILES = {
    PROFILE_QUICKSTART: {
        "n": 50, "m": 20, "lookahead_repeats": 1, "interval": 10,
        "lstm_hidden": 64, "total_iterations": 200, "horizon": 200,
        "beta": 0.05,
    },
    PROFILE_PAPER: {
        "n": 200, "m": 200, "lookahead_repeats": 3, "interval": 10,
        "lstm_hidden": 1024, "total_iterations": 400, "horizon": 1000,
        "beta": 0.006,
    },
}


@dataclass
class RunConfig:
    profile: str = PROFILE_QUICKSTART
    modes: list = field(default_factory=lambda: [MODE_BASELINE])
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    total_iterations: int | None = None   # profile default when None
    output_dir: str = "runs"
    match_budget: bool = False
    checkpoint_every: int = 0
    load_meta: str | None = None
    save_meta: str | None = None
    warm_start_updates: int = 10
    warm_start_task: dict = field(default_factory=lambda: {"kind": "point_mass_nav"})

    # [task]
    task: dict = field(default_factory=lambda: {"kind": "sphere", "dim": 10})

    # [inner]
    n: int | None = None
    alpha: float = 0.02
    sigma: float = 0.05
    gamma: float = 1.0
    fitness_shaping: str = CENTERED_RANK
    antithetic: bool = False

    # [meta]
    m: int | None = None
    beta: float | None = None
    omega: float = 0.05
    lookahead_repeats: int | None = None
    interval: int | None = None
    lstm_hidden: int | None = None
    generator_hidden: list = field(default_factory=lambda: [32])
    sigma_range: list = field(default_factory=lambda: [0.01, 0.10])
    alpha_range: list = field(default_factory=lambda: [0.016, 0.024])

    # [meta.npm]
    npm_budget: int = 5
    npm_candidate_count: int = 256
    npm_stale_rounds: int = 3
    npm_length_scale: float = 0.2

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ConfigError(
                f"unknown profile {self.profile!r}; choose from {sorted(_PROFILES)}"
            )
        for mode in self.modes:
            if mode not in ALL_MODES:
                raise ConfigError(f"unknown mode {mode!r}; choose from {ALL_MODES}")
        if not self.modes:
            raise ConfigError("at least one mode is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        prof = _PROFILES[self.profile]
        for name in ("n", "m", "lookahead_repeats", "interval", "lstm_hidden",
                     "total_iterations", "beta"):
            if getattr(self, name) is None:
                setattr(self, name, prof[name])
        self.task = dict(self.task)
        self.task.setdefault("kind", "sphere")
        if self.task["kind"] in ("point_mass_nav", "cartpole_swingup"):
            self.task.setdefault("horizon", prof["horizon"])
            self.task.setdefault("gamma", self.gamma)

    # -- derived objects ---------------------------------------------------
    def make_task(self):
        opts = dict(self.task)
        kind = opts.pop("kind")
        return make_task(kind, **opts)

    def inner_config(self, seed: int = 0) -> EsConfig:
        return EsConfig(
            n=self.n, alpha=self.alpha, sigma=self.sigma, gamma=self.gamma,
            fitness_shaping=self.fitness_shaping, antithetic=self.antithetic,
            seed=seed,
        )

    def meta_config(self, seed: int = 0) -> MetaEsConfig:
        return MetaEsConfig(
            m=self.m, beta=self.beta, omega=self.omega,
            lookahead_repeats=self.lookahead_repeats, interval=self.interval,
            fitness_shaping=self.fitness_shaping, seed=seed,
        )

    def ranges(self) -> HyperRanges:
        return HyperRanges(
            sigma=Range(*[float(v) for v in self.sigma_range]),
            alpha=Range(*[float(v) for v in self.alpha_range]),
        )

    def meta_spec(self) -> MetaModelSpec:
        return MetaModelSpec(
            population_size=self.n,
            window=self.interval,
            lstm_hidden=self.lstm_hidden,
            generator_hidden=tuple(self.generator_hidden),
            ranges=self.ranges(),
        )

    def bo_state(self) -> BoState:
        return BoState(
            ranges=self.ranges(),
            length_scale=self.npm_length_scale,
            candidate_count=self.npm_candidate_count,
            stale_rounds=self.npm_stale_rounds,
        )

    def snapshot(self) -> dict:
        snap = dataclasses.asdict(self)
        return json.loads(json.dumps(snap))  # plain JSON types only

    # -- budget accounting -------------------------------------------------
    def adaptive_total_evaluations(self, mode: str) -> int:
        """Population + lookahead evaluations an adaptive run will consume."""
        t = self.total_iterations
        inner = t * self.n
        blocks = t // self.interval
        if mode == MODE_PM:
            look = blocks * lookahead_evaluations(self.meta_config(), self.inner_config())
        elif mode == MODE_NPM:
            look = blocks * self.npm_budget * self.lookahead_repeats * (self.n + 1)
        else:
            look = 0
        return inner + look

    def iterations_for_mode(self, mode: str) -> int:
        if mode == MODE_BASELINE and self.match_budget:
            adaptive = [m for m in self.modes if m in (MODE_PM, MODE_NPM)]
            if adaptive:
                budget = max(self.adaptive_total_evaluations(m) for m in adaptive)
                return budget // self.n
        return self.total_iterations


# -- config file parsing ---------------------------------------------------

_SECTION_FIELDS = {
    "run": ("profile", "modes", "seeds", "total_iterations", "output_dir",
            "match_budget", "checkpoint_every", "load_meta", "save_meta",
            "warm_start_updates", "warm_start_task"),
    "task": None,  # free-form; validated by make_task
    "inner": ("n", "alpha", "sigma", "gamma", "fitness_shaping", "antithetic"),
    "meta": ("m", "beta", "omega", "lookahead_repeats", "interval",
             "lstm_hidden", "generator_hidden", "sigma_range", "alpha_range"),
    "meta.npm": ("budget", "candidate_count", "stale_rounds", "length_scale"),
}


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from nested sections, rejecting unknown keys."""
    kwargs = {}
    data = dict(data)
    for section in data:
        if section not in ("run", "task", "inner", "meta"):
            raise ConfigError(f"unknown config section [{section}]")
    for section in ("run", "inner"):
        payload = dict(data.get(section, {}))
        for key, value in payload.items():
            if key not in _SECTION_FIELDS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            kwargs[key] = value
    meta = dict(data.get("meta", {}))
    npm = dict(meta.pop("npm", {}))
    for key, value in meta.items():
        if key not in _SECTION_FIELDS["meta"]:
            raise ConfigError(f"unknown key {key!r} in section [meta]")
        kwargs[key] = value
    for key, value in npm.items():
        if key not in _SECTION_FIELDS["meta.npm"]:
            raise ConfigError(f"unknown key {key!r} in section [meta.npm]")
        kwargs[f"npm_{key}"] = value
    if "task" in data:
        kwargs["task"] = dict(data["task"])
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    return config_from_dict(data)


# -- single runs -----------------------------------------------------------

def _format_float(x: float) -> str:
    return repr(float(x))


def write_records_csv(path, records) -> None:
    """Stable schema, fixed column order, full round-trip float precision."""
    lines = [",".join(RunRecord.CSV_COLUMNS)]
    for rec in records:
        values = rec.csv_values()
        cells = [
            str(v) if isinstance(v, int) else _format_float(v) for v in values
        ]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_records_csv(path):
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    if tuple(header) != RunRecord.CSV_COLUMNS:
        raise ConfigError(f"{path} has unexpected CSV columns {header}")
    rows = []
    for line in text[1:]:
        cells = line.split(",")
        rows.append(
            RunRecord(
                iteration=int(cells[0]), ret=float(cells[1]),
                pop_mean=float(cells[2]), pop_max=float(cells[3]),
                sigma=float(cells[4]), alpha=float(cells[5]),
                inner_evals=int(cells[6]), lookahead_evals=int(cells[7]),
                seed=int(cells[8]),
            )
        )
    return rows


def build_driver(cfg: RunConfig, mode: str, seed: int, meta: MetaModel = None):
    task = cfg.make_task()
    inner = cfg.inner_config(seed)
    if mode == MODE_BASELINE:
        return BaselineDriver(task, inner, seed)
    if mode == MODE_PM:
        if meta is None:
            meta = MetaModel.initialize(cfg.meta_spec(), rng_for(seed, "meta-init"))
        return PmDriver(task, inner, cfg.meta_config(seed), meta, seed)
    if mode == MODE_NPM:
        return NpmDriver(
            task, inner, cfg.bo_state(), seed,
            interval=cfg.interval, budget=cfg.npm_budget,
            lookahead_repeats=cfg.lookahead_repeats,
        )
    raise ConfigError(f"unknown mode {mode!r}")


def _load_warm_meta(cfg: RunConfig):
    if cfg.load_meta is None:
        return None
    return load_meta_model(cfg.load_meta, cfg.meta_spec())


def run_single(cfg: RunConfig, mode: str, seed: int, out_dir,
               resume_from=None) -> dict:
    """Run one (mode, seed) pair, write its CSV, return run statistics."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = _load_warm_meta(cfg) if mode == MODE_PM else None
    driver = build_driver(cfg, mode, seed, meta=meta)
    if resume_from is not None:
        restore_driver(load_checkpoint(resume_from), driver)
    iterations = cfg.iterations_for_mode(mode)
    started = time.perf_counter()
    records = []
    ckpt_path = out_dir / f"{mode}_seed{seed}.ckpt"
    while driver.iteration < iterations:
        records.append(driver.step())
        if cfg.checkpoint_every and driver.iteration % cfg.checkpoint_every == 0:
            save_checkpoint(ckpt_path, snapshot_driver(driver, cfg.snapshot()))
    wall_ms = 1000.0 * (time.perf_counter() - started)
    csv_path = out_dir / f"{mode}_seed{seed}.csv"
    write_records_csv(csv_path, records)
    return {
        "mode": mode,
        "seed": seed,
        "csv": str(csv_path),
        "wall_ms": wall_ms,
        "records": records,
    }


# -- experiment-level ------------------------------------------------------

def _returns(records):
    return np.array([r.ret for r in records])


def iterations_to_recovery(returns, shift_every, rel=1.2, abs_slack=0.1):
    """Per-shift recovery times: iterations until the return climbs back
    to within the threshold of its pre-shift level (censored at the next
    shift). Returns one value per shift event after the first epoch.
    """
    returns = np.asarray(returns, dtype=np.float64)
    times = []
    for s in range(shift_every, returns.size, shift_every):
        pre = returns[s - 1]
        threshold = rel * pre - abs_slack  # returns are <= 0
        window = returns[s:s + shift_every]
        hit = np.nonzero(window >= threshold)[0]
        times.append(int(hit[0]) if hit.size else int(window.size))
    return times


def _mode_summary(cfg: RunConfig, runs) -> dict:
    finals = np.array([r["records"][-1].ret for r in runs])
    aucs = np.array([_returns(r["records"]).mean() for r in runs])
    summary = {
        "seeds": [r["seed"] for r in runs],
        "iterations": len(runs[0]["records"]),
        "final_return": {
            "per_seed": finals.tolist(),
            "mean": float(finals.mean()),
            "std": float(finals.std()),
        },
        "auc": {
            "per_seed": aucs.tolist(),
            "mean": float(aucs.mean()),
            "std": float(aucs.std()),
        },
        "total_inner_evals": int(runs[0]["records"][-1].inner_evals),
        "total_lookahead_evals": int(runs[0]["records"][-1].lookahead_evals),
        "wall_ms": {"per_seed": [r["wall_ms"] for r in runs]},
        "csv_files": [r["csv"] for r in runs],
    }
    task = cfg.make_task()
    if isinstance(task, ShiftedSphere):
        period = task.shift_every
        period_means = np.array(
            [_returns(r["records"])[-period:].mean() for r in runs]
        )
        recoveries = [
            iterations_to_recovery(_returns(r["records"]), period) for r in runs
        ]
        summary["final_period_mean"] = {
            "per_seed": period_means.tolist(),
            "mean": float(period_means.mean()),
            "std": float(period_means.std()),
        }
        summary["recovery_median_per_seed"] = [
            float(np.median(r)) if r else None for r in recoveries
        ]
    return summary


def _run_entry(args):
    cfg_snapshot, mode, seed, out_dir = args
    cfg = config_from_dict_snapshot(cfg_snapshot)
    return run_single(cfg, mode, seed, out_dir)


def config_from_dict_snapshot(snapshot: dict) -> RunConfig:
    """Rebuild a RunConfig from RunConfig.snapshot() output."""
    return RunConfig(**snapshot)


def worker_count() -> int:
    value = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV}={value!r} is not an integer") from None


def run_experiment(cfg: RunConfig) -> dict:
    """Run every (mode, seed) pair; write CSVs and a summary JSON."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg.snapshot(), mode, seed, str(out_dir))
            for mode in cfg.modes for seed in cfg.seeds]
    workers = worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_entry, jobs))
    else:
        results = [_run_entry(job) for job in jobs]
    summary = {"profile": cfg.profile, "task": cfg.task, "modes": {}}
    for mode in cfg.modes:
        runs = [r for r in results if r["mode"] == mode]
        summary["modes"][mode] = _mode_summary(cfg, runs)
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    summary["summary_path"] = str(summary_path)
    return summary


# -- sweeps ----------------------------------------------------------------

_SWEEP_FIELD = {
    "n": "n", "m": "m", "omega": "omega", "beta": "beta",
    "k": "interval", "l": "lookahead_repeats",
}


def run_sweep(cfg: RunConfig, axis: str, values) -> dict:
    """Repeat the experiment per axis value; emit a combined ordered table."""
    if axis not in _SWEEP_FIELD:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ConfigError("sweep value list is empty")
    deduped = sorted(set(values))
    if len(deduped) != len(values):
        log.warning("duplicate sweep values %s deduplicated", values)
    base_dir = Path(cfg.output_dir)
    table = []
    for value in deduped:
        sub = copy.deepcopy(cfg)
        setattr(sub, _SWEEP_FIELD[axis], value)
        sub.output_dir = str(base_dir / f"{axis}_{value}")
        summary = run_experiment(sub)
        summary.pop("summary_path", None)
        table.append({"axis": axis, "value": value, "summary": summary})
    result = {"axis": axis, "values": deduped, "results": table}
    base_dir.mkdir(parents=True, exist_ok=True)
    (base_dir / "sweep_summary.json").write_text(
        json.dumps(result, indent=2, sort_keys=True) + "\n"
    )
    return result


# -- warm starting ---------------------------------------------------------

def pretrain_from_config(cfg: RunConfig, seed: int = 0) -> MetaModel:
    opts = dict(cfg.warm_start_task)
    kind = opts.pop("kind")
    task = make_task(kind, **opts)
    meta = pretrain_meta(
        task, cfg.warm_start_updates, cfg.meta_spec(),
        cfg.inner_config(seed), cfg.meta_config(seed), seed=seed,
    )
    if cfg.save_meta:
        save_meta_model(cfg.save_meta, meta)
    return meta
