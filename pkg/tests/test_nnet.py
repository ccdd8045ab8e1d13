import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfieboost.errors import (
    ModelFormatError,
    ModelVersionError,
    ShapeError,
    UnsupportedArchitectureError,
)
from selfieboost.nnet import (
    FeedForwardNet,
    GradientBuffer,
    NetworkArchitecture,
    backprop_scalar,
    forward,
    forward_batch,
    grad_check,
    init_network,
    load_model,
    save_model,
    sgd_step,
    widen,
)
from selfieboost.sampling import SplitMix64


def make_linear(weights, bias):
    """Hand-built linear net (no hidden layer)."""
    w = np.asarray([weights], dtype=np.float64)
    arch = NetworkArchitecture(w.shape[1], ())
    return FeedForwardNet(arch, [w], [np.array([float(bias)])])


def oracle_forward(net, x):
    """Straightforward affine+activation chain with plain Python loops."""
    values = [float(v) for v in x]
    n_layers = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for r in range(w.shape[0]):
            acc = float(b[r])
            for c in range(w.shape[1]):
                acc += float(w[r, c]) * values[c]
            out.append(acc)
        if i < n_layers - 1:
            if net.architecture.activation == "tanh":
                out = [math.tanh(v) for v in out]
            else:
                out = [max(v, 0.0) for v in out]
        values = out
    return values[0]


class TestArchitecture:
    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            NetworkArchitecture(0, (4,))
        with pytest.raises(ValueError):
            NetworkArchitecture(3, (0,))
        with pytest.raises(ValueError):
            NetworkArchitecture(3, (4,), "sigmoid")

    def test_param_count(self):
        arch = NetworkArchitecture(10, (32,))
        assert arch.param_count == (10 + 1) * 32 + (32 + 1) * 1
        assert NetworkArchitecture(3, ()).param_count == 4


class TestInit:
    def test_zero_scale_is_zero_net(self):
        net = init_network(NetworkArchitecture(3, ()), seed=1, scale=0.0)
        assert all(np.all(w == 0.0) for w in net.weights)
        assert forward(net, np.array([5.0, -2.0, 0.3])) == 0.0

    def test_deterministic(self):
        arch = NetworkArchitecture(10, (32,))
        a = init_network(arch, 7, 1.0)
        b = init_network(arch, 7, 1.0)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_weight_range_respects_fan_in(self):
        net = init_network(NetworkArchitecture(10, (32,)), 7, 1.0)
        assert np.max(np.abs(net.weights[0])) <= 1.0 / math.sqrt(10)
        assert np.max(np.abs(net.weights[1])) <= 1.0 / math.sqrt(32)
        assert all(np.all(b == 0.0) for b in net.biases)

    def test_different_seeds_differ(self):
        arch = NetworkArchitecture(4, (5,))
        a, b = init_network(arch, 1, 1.0), init_network(arch, 2, 1.0)
        assert not np.array_equal(a.weights[0], b.weights[0])


class TestForward:
    def test_linear_affine_value(self):
        net = make_linear([1.0, 2.0], 0.5)
        assert forward(net, np.array([1.0, 1.0])) == 3.5

    def test_matches_independent_oracle(self):
        rng = SplitMix64(21)
        for arch in (
            NetworkArchitecture(7, (11,)),
            NetworkArchitecture(4, (5, 3), "relu"),
            NetworkArchitecture(9, ()),
        ):
            net = init_network(arch, rng.next_u64(), 1.0)
            for _ in range(34):
                x = rng.normal_block(arch.input_dim)
                assert forward(net, x) == pytest.approx(oracle_forward(net, x), abs=1e-12)

    def test_pure_and_deterministic(self):
        net = init_network(NetworkArchitecture(5, (6,)), 3, 1.0)
        x = np.arange(5.0)
        before = [w.copy() for w in net.weights]
        assert forward(net, x) == forward(net, x)
        for w, orig in zip(net.weights, before):
            np.testing.assert_array_equal(w, orig)

    def test_shape_errors(self):
        net = init_network(NetworkArchitecture(3, ()), 0, 1.0)
        with pytest.raises(ShapeError):
            forward(net, np.zeros(4))
        with pytest.raises(ShapeError):
            forward_batch(net, np.zeros((2, 5)))


class TestForwardBatch:
    def test_empty_batch(self):
        net = init_network(NetworkArchitecture(3, (2,)), 0, 1.0)
        assert forward_batch(net, np.zeros((0, 3))).shape == (0,)

    def test_rows_equal_scalar_forward_bitwise(self):
        net = init_network(NetworkArchitecture(6, (9,)), 5, 1.0)
        X = SplitMix64(8).normal_block(50 * 6).reshape(50, 6)
        batch = forward_batch(net, X)
        looped = np.array([forward(net, X[i]) for i in range(50)])
        np.testing.assert_array_equal(batch, looped)

    def test_threaded_equals_single_threaded_bitwise(self):
        net = init_network(NetworkArchitecture(5, (13,)), 2, 1.0)
        X = SplitMix64(4).normal_block(997 * 5).reshape(997, 5)
        np.testing.assert_array_equal(
            forward_batch(net, X, threads=4), forward_batch(net, X, threads=1)
        )


class TestBackprop:
    def test_zero_upstream_leaves_buffer(self):
        net = init_network(NetworkArchitecture(4, (3,)), 1, 1.0)
        buf = GradientBuffer(net)
        backprop_scalar(net, np.ones(4), 0.0, buf)
        assert all(np.all(g == 0.0) for g in buf.weights + buf.biases)

    def test_linear_gradients_are_input_and_one(self):
        net = make_linear([0.3, -0.7, 2.0], 0.1)
        buf = GradientBuffer(net)
        x = np.array([1.5, -2.0, 0.25])
        backprop_scalar(net, x, 1.0, buf)
        np.testing.assert_array_equal(buf.weights[0][0], x)
        assert buf.biases[0][0] == 1.0

    def test_accumulates_across_calls(self):
        net = make_linear([1.0, 1.0], 0.0)
        buf = GradientBuffer(net)
        x = np.array([2.0, 3.0])
        backprop_scalar(net, x, 1.0, buf)
        backprop_scalar(net, x, 1.0, buf)
        np.testing.assert_array_equal(buf.weights[0][0], 2 * x)

    def test_upstream_scales_gradient(self):
        net = make_linear([1.0], 0.0)
        buf = GradientBuffer(net)
        backprop_scalar(net, np.array([4.0]), -0.5, buf)
        assert buf.weights[0][0, 0] == -2.0

    def test_relu_subgradient_at_zero_is_zero(self):
        # x = 0 makes every hidden pre-activation exactly 0
        net = init_network(NetworkArchitecture(2, (4,), "relu"), 3, 1.0)
        buf = GradientBuffer(net)
        backprop_scalar(net, np.zeros(2), 1.0, buf)
        assert np.all(buf.weights[0] == 0.0)
        assert np.all(buf.biases[0] == 0.0)
        assert buf.biases[1][0] == 1.0  # output bias gradient unaffected


class TestGradCheck:
    def test_zero_tanh_net(self):
        net = init_network(NetworkArchitecture(3, (4,)), 0, 0.0)
        assert grad_check(net, np.array([0.5, -1.0, 2.0]), 1e-4) <= 1e-6

    def test_linear_net_is_exact(self):
        net = make_linear([1.25, -0.5], 0.75)
        assert grad_check(net, np.array([0.5, 2.0]), 1e-4) <= 1e-10

    def test_random_tanh_net(self):
        net = init_network(NetworkArchitecture(5, (8,)), 123, 1.0)
        x = SplitMix64(77).normal_block(5)
        assert grad_check(net, x, 1e-4) <= 1e-6

    def test_random_relu_net(self):
        net = init_network(NetworkArchitecture(6, (10,), "relu"), 9, 1.0)
        x = SplitMix64(13).normal_block(6)
        assert grad_check(net, x, 1e-4) <= 1e-6

    def test_eps_must_be_positive(self):
        net = make_linear([1.0], 0.0)
        with pytest.raises(ValueError):
            grad_check(net, np.array([1.0]), 0.0)


class TestSgdStep:
    def test_zero_gradient_is_noop(self):
        net = init_network(NetworkArchitecture(3, (2,)), 4, 1.0)
        before = [w.copy() for w in net.weights]
        sgd_step(net, GradientBuffer(net), 0.1)
        for w, orig in zip(net.weights, before):
            np.testing.assert_array_equal(w, orig)

    def test_single_parameter_update(self):
        net = make_linear([2.0], 0.0)
        buf = GradientBuffer(net)
        buf.weights[0][0, 0] = 0.5
        sgd_step(net, buf, 1.0)
        assert net.weights[0][0, 0] == 1.5
        assert buf.weights[0][0, 0] == 0.0  # buffer zeroed

    def test_two_half_steps_equal_one_summed_step(self):
        # dyadic values keep the arithmetic exact
        a = make_linear([2.0], 1.0)
        b = make_linear([2.0], 1.0)
        g1, g2 = (0.5, 0.125), (0.25, 0.0625)  # (weight grad, bias grad)

        buf = GradientBuffer(a)
        buf.weights[0][0, 0], buf.biases[0][0] = g1
        sgd_step(a, buf, 0.5)
        buf.weights[0][0, 0], buf.biases[0][0] = g2
        sgd_step(a, buf, 0.5)

        buf = GradientBuffer(b)
        buf.weights[0][0, 0] = (g1[0] + g2[0]) / 2
        buf.biases[0][0] = (g1[1] + g2[1]) / 2
        sgd_step(b, buf, 1.0)

        assert a.weights[0][0, 0] == b.weights[0][0, 0]
        assert a.biases[0][0] == b.biases[0][0]

    def test_rejects_nonpositive_lr(self):
        net = make_linear([1.0], 0.0)
        with pytest.raises(ValueError):
            sgd_step(net, GradientBuffer(net), 0.0)


class TestWiden:
    def test_function_preserved_bitwise(self):
        net = init_network(NetworkArchitecture(10, (32,)), 7, 1.0)
        wide = widen(net, 8, seed=99)
        X = SplitMix64(5).normal_block(1000 * 10).reshape(1000, 10)
        np.testing.assert_array_equal(forward_batch(net, X), forward_batch(wide, X))

    def test_param_count_growth(self):
        net = init_network(NetworkArchitecture(10, (32,)), 7, 1.0)
        wide = widen(net, 8, seed=99)
        fan_in = 10
        assert wide.param_count - net.param_count == 8 * (fan_in + 1) + 8
        assert wide.architecture.hidden_layers == (40,)

    def test_widen_twice_different_seeds(self):
        net = init_network(NetworkArchitecture(4, (6,)), 1, 1.0)
        wide = widen(widen(net, 3, seed=10), 5, seed=20)
        X = SplitMix64(2).normal_block(200 * 4).reshape(200, 4)
        np.testing.assert_array_equal(forward_batch(net, X), forward_batch(wide, X))
        assert wide.architecture.hidden_layers == (14,)

    def test_deep_net_widens_last_hidden(self):
        net = init_network(NetworkArchitecture(3, (5, 7)), 2, 1.0)
        wide = widen(net, 4, seed=3)
        assert wide.architecture.hidden_layers == (5, 11)
        X = SplitMix64(6).normal_block(100 * 3).reshape(100, 3)
        np.testing.assert_array_equal(forward_batch(net, X), forward_batch(wide, X))

    def test_requires_hidden_layer(self):
        net = make_linear([1.0, 2.0], 0.0)
        with pytest.raises(UnsupportedArchitectureError):
            widen(net, 2, seed=0)

    @settings(max_examples=25, deadline=None)
    @given(
        width=st.integers(1, 70),
        extra=st.integers(1, 70),
        seed=st.integers(0, 2**32),
    )
    def test_function_preserved_for_arbitrary_widths(self, width, extra, seed):
        net = init_network(NetworkArchitecture(3, (width,)), seed, 1.0)
        wide = widen(net, extra, seed=seed + 1)
        X = SplitMix64(seed ^ 0xABCDEF).normal_block(60 * 3).reshape(60, 3)
        np.testing.assert_array_equal(forward_batch(net, X), forward_batch(wide, X))


class TestModelIO:
    def test_round_trip_bit_exact(self, tmp_path):
        net = init_network(NetworkArchitecture(6, (5, 4), "relu"), 11, 1.0)
        path = tmp_path / "model.json"
        save_model(net, path)
        loaded = load_model(path)
        assert loaded.architecture == net.architecture
        for a, b in zip(net.weights + net.biases, loaded.weights + loaded.biases):
            np.testing.assert_array_equal(a, b)

    def test_truncated_file_is_parse_error(self, tmp_path):
        net = init_network(NetworkArchitecture(3, (2,)), 0, 1.0)
        path = tmp_path / "model.json"
        save_model(net, path)
        text = path.read_text()
        path.write_text(text[: len(text) // 2])
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_unknown_version_is_version_error(self, tmp_path):
        net = init_network(NetworkArchitecture(3, (2,)), 0, 1.0)
        path = tmp_path / "model.json"
        save_model(net, path)
        obj = json.loads(path.read_text())
        obj["format_version"] = 99
        path.write_text(json.dumps(obj))
        with pytest.raises(ModelVersionError):
            load_model(path)

    def test_missing_field_names_it(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"format_version": 1, "activation": "tanh", "dims": [2, 1]}')
        with pytest.raises(ModelFormatError, match="layers"):
            load_model(path)

    def test_shape_mismatch_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(
            '{"format_version": 1, "activation": "tanh", "dims": [2, 1],'
            ' "layers": [{"w": [[1.0, 2.0, 3.0]], "b": [0.0]}]}'
        )
        with pytest.raises(ModelFormatError, match="layer 0"):
            load_model(path)
