"""Checkpointing, meta-model persistence, and warm-start pretraining.

File format: magic + little-endian uint32 header length + JSON header +
concatenated raw float64 (little-endian) array payloads. The header is
human-inspectable (version, architecture hash, counters, config snapshot);
the payloads round-trip parameters bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .es import EsConfig
from .loops import NpmDriver, PmDriver
from .meta_bo import BoObservation
from .meta_pm import MetaEsConfig, PopulationReplayBuffer
from .models import MetaModel, MetaModelSpec
from .rand import rng_for

_MAGIC = b"BLESCKPT"
FORMAT_VERSION = 1


def _write_file(path, header: dict, arrays: dict) -> None:
    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    header["arrays"] = [
        {"name": name, "length": int(np.asarray(arr).size)}
        for name, arr in arrays.items()
    ]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.asarray(arr, dtype="<f8").tobytes())


def _read_file(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(_MAGIC) + 4 or raw[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    (header_len,) = struct.unpack_from("<I", raw, len(_MAGIC))
    header_end = len(_MAGIC) + 4 + header_len
    if len(raw) < header_end:
        raise CheckpointError(f"{path} is truncated (incomplete header)")
    try:
        header = json.loads(raw[len(_MAGIC) + 4 : header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('format_version')} unsupported "
            f"(expected {FORMAT_VERSION})"
        )
    arrays = {}
    offset = header_end
    for entry in header.get("arrays", []):
        nbytes = entry["length"] * 8
        if len(raw) < offset + nbytes:
            raise CheckpointError(f"{path} is truncated (payload {entry['name']})")
        arrays[entry["name"]] = np.frombuffer(
            raw, dtype="<f8", count=entry["length"], offset=offset
        ).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path} has {len(raw) - offset} trailing bytes")
    return header, arrays


def _spec_header(spec: MetaModelSpec) -> dict:
    return {
        "arch_hash": spec.arch_hash(),
        "population_size": spec.population_size,
        "window": spec.window,
        "lstm_hidden": spec.lstm_hidden,
        "generator_hidden": list(spec.generator_hidden),
        "ranges": {
            "sigma": [spec.ranges.sigma.lo, spec.ranges.sigma.hi],
            "alpha": [spec.ranges.alpha.lo, spec.ranges.alpha.hi],
        },
    }


def save_meta_model(path, meta: MetaModel) -> None:
    _write_file(
        path,
        {"kind": "meta_model", "spec": _spec_header(meta.spec)},
        {"meta_params": meta.params},
    )


def load_meta_model(path, spec: MetaModelSpec) -> MetaModel:
    """Load a saved meta model; rejects architecture mismatches via spec hash."""
    header, arrays = _read_file(path)
    if header.get("kind") != "meta_model":
        raise CheckpointError(f"{path} holds {header.get('kind')!r}, not a meta model")
    stored = header.get("spec", {}).get("arch_hash")
    if stored != spec.arch_hash():
        raise CheckpointError(
            f"meta model architecture hash {stored} does not match the configured "
            f"architecture {spec.arch_hash()} (n, window and widths must be equal)"
        )
    return MetaModel(spec=spec, params=arrays["meta_params"])


@dataclass
class Checkpoint:
    """Mid-run state: everything needed to continue a run bit-exactly."""

    mode: str
    seed: int
    iteration: int
    inner_evals: int
    lookahead_evals: int
    theta: np.ndarray
    arch_hash: str = ""
    meta_params: np.ndarray | None = None
    buffer_rows: list = field(default_factory=list)
    bo_points: np.ndarray | None = None        # (obs, d) normalized coordinates
    bo_values: np.ndarray | None = None
    bo_rounds: np.ndarray | None = None
    bo_round_index: int = 0
    current_h: tuple | None = None             # (sigma, alpha) for npm
    config_snapshot: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    header = {
        "kind": "run_checkpoint",
        "mode": ckpt.mode,
        "seed": ckpt.seed,
        "iteration": ckpt.iteration,
        "inner_evals": ckpt.inner_evals,
        "lookahead_evals": ckpt.lookahead_evals,
        "arch_hash": ckpt.arch_hash,
        "bo_round_index": ckpt.bo_round_index,
        "current_h": list(ckpt.current_h) if ckpt.current_h else None,
        "buffer_row_count": len(ckpt.buffer_rows),
        "config_snapshot": ckpt.config_snapshot,
    }
    arrays = {"theta": ckpt.theta}
    if ckpt.meta_params is not None:
        arrays["meta_params"] = ckpt.meta_params
    for i, row in enumerate(ckpt.buffer_rows):
        arrays[f"buffer_row_{i}"] = row
    if ckpt.bo_points is not None:
        arrays["bo_points"] = np.asarray(ckpt.bo_points).ravel()
        arrays["bo_values"] = ckpt.bo_values
        arrays["bo_rounds"] = ckpt.bo_rounds
    _write_file(path, header, arrays)


def load_checkpoint(path) -> Checkpoint:
    header, arrays = _read_file(path)
    if header.get("kind") != "run_checkpoint":
        raise CheckpointError(f"{path} holds {header.get('kind')!r}, not a checkpoint")
    rows = [
        arrays[f"buffer_row_{i}"] for i in range(header.get("buffer_row_count", 0))
    ]
    bo_points = bo_values = bo_rounds = None
    if "bo_points" in arrays:
        bo_values = arrays["bo_values"]
        bo_rounds = arrays["bo_rounds"]
        bo_points = (
            arrays["bo_points"].reshape(bo_values.size, -1)
            if bo_values.size else np.empty((0, 2))
        )
    current_h = header.get("current_h")
    return Checkpoint(
        mode=header["mode"],
        seed=header["seed"],
        iteration=header["iteration"],
        inner_evals=header["inner_evals"],
        lookahead_evals=header["lookahead_evals"],
        theta=arrays["theta"],
        arch_hash=header.get("arch_hash", ""),
        meta_params=arrays.get("meta_params"),
        buffer_rows=rows,
        bo_points=bo_points,
        bo_values=bo_values,
        bo_rounds=bo_rounds,
        bo_round_index=header.get("bo_round_index", 0),
        current_h=tuple(current_h) if current_h else None,
        config_snapshot=header.get("config_snapshot", {}),
    )


def snapshot_driver(driver, config_snapshot=None) -> Checkpoint:
    ckpt = Checkpoint(
        mode=driver.mode,
        seed=driver.seed,
        iteration=driver.iteration,
        inner_evals=driver.inner_evals,
        lookahead_evals=driver.lookahead_evals,
        theta=driver.theta.copy(),
        config_snapshot=config_snapshot or {},
    )
    if isinstance(driver, PmDriver):
        ckpt.arch_hash = driver.meta.spec.arch_hash()
        ckpt.meta_params = driver.meta.params.copy()
        ckpt.buffer_rows = driver.buffer.rows()
    elif isinstance(driver, NpmDriver):
        obs = driver.bo_state.observations
        ckpt.bo_points = (
            np.stack([o.point for o in obs]) if obs else np.empty((0, 2))
        )
        ckpt.bo_values = np.array([o.value for o in obs])
        ckpt.bo_rounds = np.array([float(o.round_index) for o in obs])
        ckpt.bo_round_index = driver.bo_state.round_index
        ckpt.current_h = (driver.current_h.sigma, driver.current_h.alpha)
    return ckpt


def restore_driver(ckpt: Checkpoint, driver) -> None:
    """Load checkpoint state into a freshly constructed driver (same configs)."""
    if driver.mode != ckpt.mode:
        raise CheckpointError(
            f"checkpoint mode {ckpt.mode!r} does not match driver {driver.mode!r}"
        )
    if driver.seed != ckpt.seed:
        raise CheckpointError("checkpoint seed does not match the configured seed")
    driver.theta = np.asarray(ckpt.theta, dtype=np.float64).copy()
    driver.iteration = ckpt.iteration
    driver.inner_evals = ckpt.inner_evals
    driver.lookahead_evals = ckpt.lookahead_evals
    if isinstance(driver, PmDriver):
        if ckpt.arch_hash != driver.meta.spec.arch_hash():
            raise CheckpointError("checkpoint meta architecture mismatch")
        driver.meta = driver.meta.with_params(ckpt.meta_params)
        driver.buffer = PopulationReplayBuffer.from_rows(
            driver.meta.spec.window, driver.inner_cfg.n, ckpt.buffer_rows
        )
    elif isinstance(driver, NpmDriver):
        state = driver.bo_state
        state.observations = [
            BoObservation(point=p.copy(), value=float(v), round_index=int(r))
            for p, v, r in zip(ckpt.bo_points, ckpt.bo_values, ckpt.bo_rounds)
        ]
        state.round_index = ckpt.bo_round_index
        from .hyperparams import HyperParams

        driver.current_h = HyperParams(*ckpt.current_h)


def pretrain_meta(task, meta_updates: int, spec: MetaModelSpec,
                  inner_cfg: EsConfig, meta_cfg: MetaEsConfig,
                  seed: int = 0) -> MetaModel:
    """Warm-start pretraining: run the parametric loop on a simple task.

    Executes `meta_updates` meta updates (meta_updates * interval inner
    iterations) and returns the final meta model; 0 updates returns the
    freshly initialized model untouched. Only the meta parameters transfer
    to target runs; inner parameters are always freshly initialized there.
    """
    meta = MetaModel.initialize(spec, rng_for(seed, "meta-init"))
    if meta_updates == 0:
        return meta
    driver = PmDriver(task, inner_cfg, meta_cfg, meta, seed)
    driver.run(meta_updates * meta_cfg.interval)
    return driver.meta
