import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilevel_es import (
    ConfigError,
    InvariantError,
    LstmSpec,
    MetaModel,
    MetaModelSpec,
    MlpSpec,
    Range,
    generator_forward,
    lstm_forward,
    mlp_forward,
)
from bilevel_es.models import SIGMOID, init_lstm_params, init_mlp_params
from bilevel_es.rand import rng_for


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_scalar_oracle(spec, params, sequence):
    """Independent scalar-loop reference for the recurrence (gate order i,f,o,g)."""
    h_dim, d = spec.hidden_dim, spec.input_dim
    params = np.asarray(params, dtype=float)
    w_x = params[: 4 * h_dim * d].reshape(4 * h_dim, d)
    w_h = params[4 * h_dim * d : 4 * h_dim * (d + h_dim)].reshape(4 * h_dim, h_dim)
    b = params[4 * h_dim * (d + h_dim) :]
    h = [0.0] * h_dim
    c = [0.0] * h_dim
    for row in sequence:
        z = [0.0] * (4 * h_dim)
        for r in range(4 * h_dim):
            acc = b[r]
            for j in range(d):
                acc += w_x[r, j] * row[j]
            for j in range(h_dim):
                acc += w_h[r, j] * h[j]
            z[r] = acc
        new_h, new_c = [0.0] * h_dim, [0.0] * h_dim
        for u in range(h_dim):
            i_g = sigmoid(z[u])
            f_g = sigmoid(z[h_dim + u])
            o_g = sigmoid(z[2 * h_dim + u])
            g_g = np.tanh(z[3 * h_dim + u])
            new_c[u] = f_g * c[u] + i_g * g_g
            new_h[u] = o_g * np.tanh(new_c[u])
        h, c = new_h, new_c
    return np.array(h)


class TestMlp:
    def test_zero_params_identity_output(self):
        spec = MlpSpec(3, (4,), 2)
        out = mlp_forward(spec, np.zeros(spec.param_count), np.array([1.0, 2.0, 3.0]))
        assert np.all(out == 0.0)

    def test_zero_params_sigmoid_output(self):
        spec = MlpSpec(3, (4,), 2, output_activation=SIGMOID)
        out = mlp_forward(spec, np.zeros(spec.param_count), np.ones(3))
        assert np.all(out == 0.5)

    def test_hand_computed_1_1_1(self):
        # weights all 1, biases 0, tanh hidden, identity out, x=0 -> tanh(0)*1 = 0
        spec = MlpSpec(1, (1,), 1)
        params = np.array([1.0, 0.0, 1.0, 0.0])  # [w1, b1, w2, b2]
        assert mlp_forward(spec, params, np.array([0.0]))[0] == 0.0
        # and x=1 -> tanh(1)
        assert mlp_forward(spec, params, np.array([1.0]))[0] == pytest.approx(
            np.tanh(1.0), abs=1e-15
        )

    def test_param_count(self):
        spec = MlpSpec(5, (64, 64), 2)
        assert spec.param_count == 6 * 64 + 65 * 64 + 65 * 2

    def test_dimension_mismatch(self):
        spec = MlpSpec(3, (4,), 2)
        with pytest.raises(InvariantError):
            mlp_forward(spec, np.zeros(spec.param_count + 1), np.ones(3))
        with pytest.raises(InvariantError):
            mlp_forward(spec, np.zeros(spec.param_count), np.ones(4))

    def test_purity(self):
        spec = MlpSpec(4, (8,), 3)
        params = init_mlp_params(spec, rng_for(0))
        x = rng_for(1).standard_normal(4)
        assert np.array_equal(mlp_forward(spec, params, x), mlp_forward(spec, params, x))


class TestLstm:
    def test_zero_params_zero_output(self):
        spec = LstmSpec(input_dim=3, hidden_dim=4, sequence_length=2)
        out = lstm_forward(spec, np.zeros(spec.param_count), np.zeros((2, 3)))
        assert np.all(out == 0.0)

    def test_golden_weights_match_scalar_oracle(self):
        spec = LstmSpec(input_dim=3, hidden_dim=4, sequence_length=2)
        params = rng_for(42, "golden").standard_normal(spec.param_count) * 0.5
        seq = rng_for(43, "golden").standard_normal((2, 3))
        got = lstm_forward(spec, params, seq)
        want = lstm_scalar_oracle(spec, params, seq)
        assert np.max(np.abs(got - want)) < 1e-10

    def test_prefix_property(self):
        # k=1 output equals the first step of a k=2 run with the same params.
        spec1 = LstmSpec(input_dim=3, hidden_dim=5, sequence_length=1)
        spec2 = LstmSpec(input_dim=3, hidden_dim=5, sequence_length=2)
        params = rng_for(7).standard_normal(spec1.param_count)
        row = rng_for(8).standard_normal(3)
        one = lstm_forward(spec1, params, row[None, :])
        first_step = lstm_scalar_oracle(spec1, params, row[None, :])
        assert np.allclose(one, first_step, atol=1e-12)
        assert spec1.param_count == spec2.param_count

    def test_bad_row_length(self):
        spec = LstmSpec(input_dim=3, hidden_dim=4, sequence_length=2)
        with pytest.raises(InvariantError):
            lstm_forward(spec, np.zeros(spec.param_count), np.zeros((2, 4)))

    def test_forget_bias_init(self):
        spec = LstmSpec(input_dim=3, hidden_dim=4, sequence_length=2)
        params = init_lstm_params(spec, rng_for(0))
        bias = params[4 * 4 * (3 + 4):]
        assert np.all(bias[4:8] == 1.0)  # forget gate block
        assert np.all(bias[:4] == 0.0) and np.all(bias[8:] == 0.0)


class TestGenerator:
    ranges = (Range(0.01, 0.10), Range(0.016, 0.024))

    def spec(self):
        return MlpSpec(6, (8,), 2, output_activation=SIGMOID)

    def test_zero_params_midpoints(self):
        spec = self.spec()
        h = generator_forward(spec, np.zeros(spec.param_count), np.ones(6), self.ranges)
        assert h.sigma == pytest.approx(0.055, abs=1e-12)
        assert h.alpha == pytest.approx(0.020, abs=1e-12)

    def test_outputs_strictly_inside_ranges(self):
        spec = self.spec()
        for i in range(200):
            params = rng_for(i).standard_normal(spec.param_count) * 50.0
            x = rng_for(i, "x").standard_normal(6) * 10.0
            h = generator_forward(spec, params, x, self.ranges)
            assert 0.01 < h.sigma < 0.10
            assert 0.016 < h.alpha < 0.024

    def test_monotone_in_preactivation(self):
        # Sweep the output bias of a weights-free generator: sigma must
        # increase monotonically and approach the upper bound.
        spec = MlpSpec(1, (1,), 2, output_activation=SIGMOID)
        def sigma_at(bias):
            params = np.zeros(spec.param_count)
            params[-2] = bias  # sigma output bias
            return generator_forward(spec, params, np.zeros(1), self.ranges).sigma

        sigmas = [sigma_at(b) for b in np.linspace(-12, 12, 41)]
        assert all(a < b for a, b in zip(sigmas, sigmas[1:]))
        # saturated pre-activation approaches (but never reaches) the bound
        assert 0.0999 < sigma_at(50.0) < 0.10

    def test_degenerate_range_pins_value(self):
        ranges = (Range(0.05, 0.05), Range(0.0, 0.0))
        spec = self.spec()
        params = rng_for(3).standard_normal(spec.param_count)
        h = generator_forward(spec, params, np.ones(6), ranges)
        assert h.sigma == 0.05 and h.alpha == 0.0

    def test_inverted_range_rejected(self):
        with pytest.raises(ConfigError):
            Range(0.1, 0.01)

    def test_range_count_mismatch(self):
        spec = self.spec()
        with pytest.raises(ConfigError):
            generator_forward(
                spec, np.zeros(spec.param_count), np.ones(6), (Range(0.0, 1.0),)
            )


class TestMetaModel:
    def spec(self):
        return MetaModelSpec(
            population_size=6, window=3, lstm_hidden=4, generator_hidden=(5,)
        )

    def test_param_count_matches_components(self):
        spec = self.spec()
        assert spec.param_count == spec.lstm.param_count + spec.generator.param_count

    def test_flatten_roundtrip_bit_exact(self):
        spec = self.spec()
        meta = MetaModel.initialize(spec, rng_for(0))
        enc, gen = meta.split()
        rebuilt = meta.with_params(np.concatenate([enc, gen]))
        assert np.array_equal(rebuilt.params, meta.params)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_flatten_roundtrip_property(self, seed):
        spec = self.spec()
        meta = MetaModel.initialize(spec, rng_for(seed))
        enc, gen = meta.split()
        assert np.array_equal(np.concatenate([enc, gen]), meta.params)

    def test_propose_within_ranges(self):
        spec = self.spec()
        meta = MetaModel.initialize(spec, rng_for(1))
        window = rng_for(2).standard_normal((3, 6))
        h = meta.propose(window)
        assert spec.ranges.sigma.contains_strict(h.sigma)
        assert spec.ranges.alpha.contains_strict(h.alpha)

    def test_arch_hash_sensitivity(self):
        a = self.spec()
        b = MetaModelSpec(population_size=7, window=3, lstm_hidden=4,
                          generator_hidden=(5,))
        assert a.arch_hash() != b.arch_hash()
        assert a.arch_hash() == self.spec().arch_hash()

    def test_wrong_param_length_rejected(self):
        spec = self.spec()
        with pytest.raises(InvariantError):
            MetaModel(spec=spec, params=np.zeros(spec.param_count - 1))
