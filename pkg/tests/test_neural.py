import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempcast.errors import ConfigError, DivergenceError, InsufficientData, ShapeError, StateError
from tempcast.neural import (
    AdamState,
    Network,
    NetworkSpec,
    TrainingConfig,
    adam_step,
    backward,
    conv1d_forward,
    dumps_history,
    dumps_network,
    forecast_recursive,
    forward,
    gradient_check,
    loads_network,
    lstm_step,
    pool_forward,
    train,
)
from tempcast.series_io import NormalizationParams, make_windows

SMALL = NetworkSpec(conv_filters=(2, 2), kernel_sizes=(3, 3), pool_size=2, hidden_sizes=(3, 3))


def col(values):
    return np.asarray(values, float)[:, None]


class TestConv:
    def test_identity_kernel(self):
        x = col([0.5, 2.0, 3.0])
        out, _ = conv1d_forward(x, np.ones((1, 1, 1)), np.zeros(1))
        np.testing.assert_array_equal(out, x)

    def test_difference_kernel_is_clipped(self):
        out, cache = conv1d_forward(col([1, 2, 3, 4]), np.array([[[1.0, -1.0]]]), np.zeros(1))
        np.testing.assert_array_equal(cache[1][0, :, 0], [-1, -1, -1])
        np.testing.assert_array_equal(out[:, 0], [0, 0, 0])

    def test_moving_average(self):
        out, _ = conv1d_forward(col([2, 4, 6]), np.array([[[0.5, 0.5]]]), np.zeros(1))
        np.testing.assert_array_equal(out[:, 0], [3, 5])

    def test_too_short(self):
        with pytest.raises(ShapeError):
            conv1d_forward(col([1, 2]), np.ones((1, 1, 3)), np.zeros(1))

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            conv1d_forward(np.ones((5, 2)), np.ones((1, 1, 3)), np.zeros(1))

    @given(st.integers(1, 20), st.integers(1, 6), st.integers(1, 3), st.integers(1, 3))
    def test_output_length(self, steps, k, cin, cout):
        if steps < k:
            return
        x = np.random.default_rng(steps).normal(size=(steps, cin))
        out, _ = conv1d_forward(x, np.ones((cout, cin, k)), np.zeros(cout))
        assert out.shape == (steps - k + 1, cout)

    def test_cross_correlation_by_loops(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(7, 2))
        W = rng.normal(size=(3, 2, 3))
        b = rng.normal(size=3)
        out, _ = conv1d_forward(x, W, b)
        for t in range(5):
            for o in range(3):
                z = b[o] + sum(W[o, c, j] * x[t + j, c] for c in range(2) for j in range(3))
                assert out[t, o] == pytest.approx(max(z, 0.0), abs=1e-12)


class TestPool:
    def test_max(self):
        out, _ = pool_forward(col([1, 3, 2, 5]), 2, "max")
        np.testing.assert_array_equal(out[:, 0], [3, 5])

    def test_average(self):
        out, _ = pool_forward(col([1, 3, 2, 5]), 2, "average")
        np.testing.assert_array_equal(out[:, 0], [2, 3.5])

    def test_remainder(self):
        out, _ = pool_forward(col([1, 3, 2]), 2, "max")
        np.testing.assert_array_equal(out[:, 0], [3])

    def test_too_short(self):
        with pytest.raises(ShapeError):
            pool_forward(col([1]), 2)

    @given(st.integers(1, 30), st.integers(1, 5))
    def test_length(self, steps, size):
        if steps < size:
            return
        out, _ = pool_forward(np.ones((steps, 2)), size)
        assert out.shape[0] == steps // size


class TestLstmStep:
    def test_zero_cell(self):
        H, D = 4, 3
        h, c, cache = lstm_step(np.ones((1, D)), np.zeros((1, H)), np.zeros((1, H)),
                                np.zeros((4 * H, D + H)), np.zeros(4 * H))
        _, f, i, g, o, _, _ = cache
        np.testing.assert_array_equal(f, 0.5)
        np.testing.assert_array_equal(i, 0.5)
        np.testing.assert_array_equal(o, 0.5)
        np.testing.assert_array_equal(g, 0.0)
        np.testing.assert_array_equal(c, 0.0)
        np.testing.assert_array_equal(h, 0.0)

    def test_forget_gate_keeps_memory(self):
        b = np.zeros(4)
        b[0] = 10.0
        h, c, _ = lstm_step(np.zeros((1, 1)), np.zeros((1, 1)), np.full((1, 1), 4.0),
                            np.zeros((4, 2)), b)
        expected = 4.0 / (1.0 + math.exp(-10.0))
        assert c[0, 0] == pytest.approx(expected, rel=1e-12)
        assert c[0, 0] == pytest.approx(3.9998, abs=1e-4)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            lstm_step(np.ones((1, 2)), np.zeros((1, 3)), np.zeros((1, 3)),
                      np.zeros((12, 4)), np.zeros(12))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 20))
    def test_state_bounds(self, seed, scale):
        rng = np.random.default_rng(seed)
        H, D = 5, 3
        c_prev = rng.normal(scale=scale, size=(4, H))
        h_prev = rng.uniform(-1, 1, size=(4, H))
        W = rng.normal(scale=scale, size=(4 * H, D + H))
        b = rng.normal(scale=scale, size=4 * H)
        h, c, (_, f, i, g, o, _, _) = lstm_step(rng.normal(size=(4, D)), h_prev, c_prev, W, b)
        assert np.all(np.abs(i * g) <= 1.0)
        assert np.all(np.abs(c) <= np.abs(c_prev) + 1.0 + 1e-12)
        assert np.all(np.abs(h) <= 1.0)


class TestForward:
    def test_zero_network(self):
        net = Network.zeros()
        assert forward(net, np.arange(12.0)) == 0.0

    def test_zero_network_dense_bias(self):
        net = Network.zeros()
        net.params["dense.b"][0] = 0.37
        assert forward(net, np.random.default_rng(0).normal(size=12)) == 0.37

    def test_deterministic(self):
        w = np.random.default_rng(1).normal(size=12)
        a = forward(Network.initialize(seed=42), w)
        b = forward(Network.initialize(seed=42), w)
        assert a == b

    def test_default_lstm_steps(self):
        spec = NetworkSpec()
        assert spec.lstm_steps == 4
        _, cache = Network.initialize(spec, 0).forward_batch(np.zeros((1, 12)))
        assert cache[-1].shape[1] == 4  # second LSTM hidden states over 4 steps

    def test_shrinkage_exhausted(self):
        with pytest.raises(ShapeError):
            NetworkSpec(lookback=5)

    def test_wrong_window(self):
        with pytest.raises(ShapeError):
            Network.initialize(seed=0).predict(np.zeros(10))

    def test_batch_matches_single(self):
        net = Network.initialize(seed=3)
        X = np.random.default_rng(3).normal(size=(5, 12))
        batch = net.predict(X)
        for k in range(5):
            assert batch[k] == pytest.approx(forward(net, X[k]), abs=1e-14)

    def test_average_pool_network(self):
        spec = NetworkSpec(pool_mode="average", conv_filters=(2, 2), hidden_sizes=(3, 3))
        net = Network.initialize(spec, 1)
        w = np.random.default_rng(1).normal(size=12)
        assert gradient_check(net, w, 0.3) < 1e-4


class TestBackward:
    def test_requires_forward(self):
        with pytest.raises(StateError):
            backward(Network.initialize(SMALL, 0), np.zeros(12), 0.0)

    def test_window_must_match(self):
        net = Network.initialize(SMALL, 0)
        forward(net, np.zeros(12))
        with pytest.raises(StateError):
            backward(net, np.ones(12), 0.0)

    def test_zero_network_zero_target(self):
        net = Network.zeros()
        w = np.random.default_rng(0).normal(size=12)
        forward(net, w)
        grads = backward(net, w, 0.0)
        assert all(np.all(g == 0) for g in grads.values())

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_check_small(self, seed):
        net = Network.initialize(SMALL, seed)
        rng = np.random.default_rng(100 + seed)
        assert gradient_check(net, rng.normal(size=12), float(rng.normal())) < 1e-4

    def test_gradient_check_default_architecture(self):
        net = Network.initialize(NetworkSpec(), 7)
        # perturb biases so no gradient is structurally zero
        rng = np.random.default_rng(7)
        for name, p in net.params.items():
            if name.endswith(".b"):
                p += rng.normal(scale=0.1, size=p.shape)
        # central differences carry ~1e-11 absolute round-off at step 1e-5,
        # so entries far below 1e-6 are measured against that floor
        assert gradient_check(net, rng.normal(size=12), 1.5, floor=1e-6) < 1e-4

    def test_zero_network_bias_gradient_exact(self):
        net = Network.zeros(SMALL)
        w = np.random.default_rng(2).normal(size=12)
        forward(net, w)
        grads = backward(net, w, 2.0)
        assert grads["dense.b"][0] == -2.0  # d/db 0.5*(0 - 2)^2
        assert gradient_check(net, w, 2.0) < 1e-9

    def test_dead_relu_unit(self):
        net = Network.initialize(SMALL, 4)
        net.params["conv1.b"][0] = -100.0  # unit 0 never activates
        w = np.random.default_rng(4).normal(size=12)
        forward(net, w)
        grads = backward(net, w, 1.0)
        np.testing.assert_array_equal(grads["conv1.W"][0], 0.0)
        assert grads["conv1.b"][0] == 0.0

    def test_corrupted_gradient_detected(self):
        net = Network.initialize(SMALL, 0)
        w = np.random.default_rng(0).normal(size=12)
        forward(net, w)
        grads = backward(net, w, 1.0)
        grads["lstm1.W"] = grads["lstm1.W"] * 1.5
        assert gradient_check(net, w, 1.0, analytic=grads) > 1e-2


class TestAdam:
    def test_first_step_is_sign(self):
        params = {"w": np.array([1.0, -2.0, 0.5])}
        grads = {"w": np.array([3.0, -0.001, 250.0])}
        new, state = adam_step(params, grads, AdamState.zeros_like(params), lr=0.01)
        np.testing.assert_allclose(new["w"] - params["w"], -0.01 * np.sign(grads["w"]), rtol=1e-4)
        assert state.t == 1

    def test_zero_gradient(self):
        params = {"w": np.array([1.0, 2.0])}
        state = AdamState.zeros_like(params)
        for _ in range(3):
            new, state = adam_step(params, {"w": np.zeros(2)}, state)
            np.testing.assert_array_equal(new["w"], params["w"])

    def test_constant_gradient_steps(self):
        params = {"w": np.array([0.0])}
        state = AdamState.zeros_like(params)
        p1, state = adam_step(params, {"w": np.array([0.7])}, state, lr=0.1)
        p2, state = adam_step(p1, {"w": np.array([0.7])}, state, lr=0.1)
        step1 = p1["w"][0] - params["w"][0]
        step2 = p2["w"][0] - p1["w"][0]
        # m_hat = g and v_hat = g^2 exactly for constant g
        assert step2 == pytest.approx(step1, rel=1e-6)


def sine(n=200):
    return np.sin(2 * np.pi * np.arange(n) / 12)


class TestTrain:
    def test_learns_sine(self):
        windows = make_windows(sine(), 12)
        _, history = train(Network.initialize(seed=0), windows,
                           TrainingConfig(epochs=200, seed=0))
        assert history[-1] <= 0.1 * history[0]

    def test_zero_learning_rate(self):
        windows = make_windows(sine(60), 12)
        net0 = Network.initialize(SMALL, 1)
        _, history = train(net0, windows, TrainingConfig(epochs=5, learning_rate=0.0,
                                                         patience=10))
        assert len(set(history)) == 1
        assert history[0] == net0.evaluate_mse(windows.inputs, windows.targets)

    def test_deterministic(self):
        windows = make_windows(sine(80), 12)
        cfg = TrainingConfig(epochs=15, seed=3, batch_size=8)
        a, ha = train(Network.initialize(SMALL, 3), windows, cfg)
        b, hb = train(Network.initialize(SMALL, 3), windows, cfg)
        assert ha == hb
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])

    def test_input_network_untouched(self):
        windows = make_windows(sine(40), 12)
        net = Network.initialize(SMALL, 0)
        before = {k: v.copy() for k, v in net.params.items()}
        train(net, windows, TrainingConfig(epochs=3))
        for k in before:
            np.testing.assert_array_equal(net.params[k], before[k])

    def test_early_stopping(self):
        windows = make_windows(sine(40), 12)
        _, history = train(Network.initialize(SMALL, 0), windows,
                           TrainingConfig(epochs=50, learning_rate=0.0, patience=4))
        assert len(history) == 5

    def test_divergence(self):
        windows = make_windows(sine(40) * 1e200, 12)
        with pytest.raises(DivergenceError) as info:
            train(Network.initialize(SMALL, 0), windows, TrainingConfig(epochs=3))
        assert info.value.epoch == 1

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            TrainingConfig(learning_rate=-0.1)
        with pytest.raises(ConfigError):
            TrainingConfig(epochs=0)


class TestForecastRecursive:
    def test_zero_network(self):
        fc = forecast_recursive(Network.zeros(), np.zeros(12), 5, NormalizationParams(10, 5))
        np.testing.assert_array_equal(fc.point_forecasts, [10.0] * 5)

    def test_horizon_one(self):
        net = Network.initialize(seed=5)
        hist = np.random.default_rng(5).normal(size=20)
        params = NormalizationParams(12.0, 7.5)
        fc = forecast_recursive(net, hist, 1, params)
        assert fc.point_forecasts[0] == pytest.approx(forward(net, hist[-12:]) * 7.5 + 12.0)

    def test_feeds_back_predictions(self):
        net = Network.initialize(SMALL, 5)
        hist = np.random.default_rng(6).normal(size=12)
        params = NormalizationParams(0.0, 1.0)
        fc = forecast_recursive(net, hist, 2, params).point_forecasts
        second = forward(net, np.concatenate([hist[1:], [fc[0]]]))
        assert fc[1] == pytest.approx(second, abs=1e-14)

    def test_short_history(self):
        with pytest.raises(InsufficientData):
            forecast_recursive(Network.zeros(), np.zeros(5), 1, NormalizationParams(0, 1))


class TestSerialization:
    def test_round_trip(self):
        net = Network.initialize(SMALL, 9)
        net.normalization = NormalizationParams(11.5, 7.25)
        back = loads_network(dumps_network(net))
        assert back.spec == net.spec
        assert back.normalization == net.normalization
        for k in net.params:
            np.testing.assert_array_equal(back.params[k], net.params[k])

    def test_history_csv(self):
        assert dumps_history([0.5, 0.25]) == "epoch,mse\n1,0.5\n2,0.25\n"
