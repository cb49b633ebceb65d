"""Forward-only neural blocks operating on flat parameter vectors.

Both levels are trained by ES perturbation, so these are pure functions of
(flat params, input); there is no autograd and no retained state. The flat
layout is fixed by the spec dataclasses so flatten/unflatten is a bijection.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvariantError
from .hyperparams import HyperParams, HyperRanges, Range

# Sigmoid outputs are clipped into [_SIG_EPS, 1 - _SIG_EPS] before range
# mapping so generated hyperparameters stay strictly inside their interval
# even when the pre-activation saturates in float64.
_SIG_EPS = 1e-6

IDENTITY = "identity"
TANH = "tanh"
SIGMOID = "sigmoid"


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


_ACTIVATIONS = {
    IDENTITY: lambda x: x,
    TANH: np.tanh,
    SIGMOID: _sigmoid,
}


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple
    output_dim: int
    hidden_activation: str = TANH
    output_activation: str = IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ConfigError(f"all layer widths must be positive, got {dims}")
        if self.hidden_activation != TANH:
            raise ConfigError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in _ACTIVATIONS:
            raise ConfigError(f"unsupported output activation {self.output_activation!r}")

    @property
    def layer_dims(self):
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def param_count(self) -> int:
        dims = self.layer_dims
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in zip(dims, dims[1:]))


def mlp_forward(spec: MlpSpec, params, x) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if params.size != spec.param_count:
        raise InvariantError(
            f"expected {spec.param_count} parameters, got {params.size}"
        )
    if x.size != spec.input_dim:
        raise InvariantError(f"expected input of length {spec.input_dim}, got {x.size}")
    dims = spec.layer_dims
    h = x
    offset = 0
    for layer, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        w = params[offset:offset + fan_in * fan_out].reshape(fan_out, fan_in)
        offset += fan_in * fan_out
        b = params[offset:offset + fan_out]
        offset += fan_out
        h = w @ h + b
        if layer < len(dims) - 2:
            h = np.tanh(h)
        else:
            h = _ACTIVATIONS[spec.output_activation](h)
    return h


def init_mlp_params(spec: MlpSpec, rng) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, biases included."""
    dims = spec.layer_dims
    chunks = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, (fan_in + 1) * fan_out))
    return np.concatenate(chunks)


@dataclass(frozen=True)
class LstmSpec:
    input_dim: int
    hidden_dim: int = 1024
    sequence_length: int = 10

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1 or self.sequence_length < 1:
            raise ConfigError("LSTM dimensions must be positive")

    @property
    def param_count(self) -> int:
        h, d = self.hidden_dim, self.input_dim
        return 4 * h * (d + h + 1)


# Gate order within the stacked 4h blocks: input, forget, output, candidate.
_GATES = 4


def _split_lstm_params(spec: LstmSpec, params):
    h, d = spec.hidden_dim, spec.input_dim
    params = np.asarray(params, dtype=np.float64)
    if params.size != spec.param_count:
        raise InvariantError(f"expected {spec.param_count} parameters, got {params.size}")
    off = 0
    w_x = params[off:off + _GATES * h * d].reshape(_GATES * h, d)
    off += _GATES * h * d
    w_h = params[off:off + _GATES * h * h].reshape(_GATES * h, h)
    off += _GATES * h * h
    b = params[off:off + _GATES * h]
    return w_x, w_h, b


def lstm_forward(spec: LstmSpec, params, sequence) -> np.ndarray:
    """Run the recurrence over the rows of `sequence` from zero state.

    sequence must be (sequence_length, input_dim); returns the final hidden
    state h_k of length hidden_dim.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 2 or seq.shape != (spec.sequence_length, spec.input_dim):
        raise InvariantError(
            f"expected sequence of shape ({spec.sequence_length}, {spec.input_dim}), "
            f"got {seq.shape}"
        )
    w_x, w_h, b = _split_lstm_params(spec, params)
    hd = spec.hidden_dim
    h = np.zeros(hd)
    c = np.zeros(hd)
    for x_t in seq:
        z = w_x @ x_t + w_h @ h + b
        i = _sigmoid(z[0 * hd:1 * hd])
        f = _sigmoid(z[1 * hd:2 * hd])
        o = _sigmoid(z[2 * hd:3 * hd])
        g = np.tanh(z[3 * hd:4 * hd])
        c = f * c + i * g
        h = o * np.tanh(c)
    return h


def init_lstm_params(spec: LstmSpec, rng) -> np.ndarray:
    """Uniform +/- 1/sqrt(input width) init; forget-gate bias set to 1.0."""
    h, d = spec.hidden_dim, spec.input_dim
    params = np.concatenate([
        rng.uniform(-1.0 / np.sqrt(d), 1.0 / np.sqrt(d), _GATES * h * d),
        rng.uniform(-1.0 / np.sqrt(h), 1.0 / np.sqrt(h), _GATES * h * h),
        np.zeros(_GATES * h),
    ])
    bias_off = _GATES * h * (d + h)
    params[bias_off + h:bias_off + 2 * h] = 1.0
    return params


def generator_forward(gen_spec: MlpSpec, params, x, ranges) -> HyperParams:
    """Map the encoder state to hyperparameters via the sigmoid generator.

    Each sigmoid output o_j in (0, 1) is mapped to lo_j + o_j * (hi_j - lo_j),
    so every value is strictly inside its interval (degenerate lo == hi
    intervals pin the value).
    """
    ranges = tuple(ranges)
    if gen_spec.output_dim != len(ranges):
        raise ConfigError(
            f"generator outputs {gen_spec.output_dim} values but {len(ranges)} "
            "ranges are configured"
        )
    if gen_spec.output_activation != SIGMOID:
        raise ConfigError("generator output activation must be sigmoid")
    out = mlp_forward(gen_spec, params, x)
    out = np.clip(out, _SIG_EPS, 1.0 - _SIG_EPS)
    values = [r.lo + o * r.width for r, o in zip(ranges, out)]
    return HyperParams(sigma=float(values[0]), alpha=float(values[1]))


@dataclass(frozen=True)
class MetaModelSpec:
    """Architecture of the meta-level: LSTM encoder + sigmoid MLP generator."""

    population_size: int
    window: int = 10
    lstm_hidden: int = 1024
    generator_hidden: tuple = (32,)
    ranges: HyperRanges = field(default_factory=HyperRanges)

    @property
    def lstm(self) -> LstmSpec:
        return LstmSpec(
            input_dim=self.population_size,
            hidden_dim=self.lstm_hidden,
            sequence_length=self.window,
        )

    @property
    def generator(self) -> MlpSpec:
        return MlpSpec(
            input_dim=self.lstm_hidden,
            hidden_dims=tuple(self.generator_hidden),
            output_dim=len(self.ranges.as_tuple()),
            output_activation=SIGMOID,
        )

    @property
    def param_count(self) -> int:
        return self.lstm.param_count + self.generator.param_count

    def arch_hash(self) -> str:
        """Hash of the fields that must match for parameter compatibility."""
        payload = {
            "population_size": self.population_size,
            "window": self.window,
            "lstm_hidden": self.lstm_hidden,
            "generator_hidden": list(self.generator_hidden),
            "outputs": len(self.ranges.as_tuple()),
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MetaModel:
    """Concatenated flat parameters [encoder, generator] plus their spec."""

    spec: MetaModelSpec
    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.size != self.spec.param_count:
            raise InvariantError(
                f"meta parameter vector has {self.params.size} entries, "
                f"spec requires {self.spec.param_count}"
            )

    @classmethod
    def initialize(cls, spec: MetaModelSpec, rng) -> "MetaModel":
        params = np.concatenate([
            init_lstm_params(spec.lstm, rng),
            init_mlp_params(spec.generator, rng),
        ])
        return cls(spec=spec, params=params)

    def split(self):
        cut = self.spec.lstm.param_count
        return self.params[:cut], self.params[cut:]

    def with_params(self, params) -> "MetaModel":
        return MetaModel(spec=self.spec, params=np.asarray(params, dtype=np.float64))

    def propose(self, window) -> HyperParams:
        """H = generator(encoder(standardize(window))); window is (k, n).

        The fitness window is standardized (zero mean, unit variance over
        the whole window) before encoding, so proposals depend only on the
        shape of the recent fitness history, not on the task's reward
        scale. This keeps the LSTM out of gate saturation and lets a model
        pretrained on one task transfer to tasks with different scales.
        """
        window = np.asarray(window, dtype=np.float64)
        std = window.std()
        window = (window - window.mean()) / (std if std > 0.0 else 1.0)
        enc_params, gen_params = self.split()
        hidden = lstm_forward(self.spec.lstm, enc_params, window)
        return generator_forward(
            self.spec.generator, gen_params, hidden, self.spec.ranges.as_tuple()
        )


def build_range(lo: float, hi: float) -> Range:
    return Range(lo, hi)
