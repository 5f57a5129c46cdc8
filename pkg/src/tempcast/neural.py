"""Convolutional + LSTM one-step forecaster written directly in numpy.

The network reads a window of ``lookback`` normalized monthly values and
predicts the next one::

    window -> conv1d+ReLU -> conv1d+ReLU -> pool -> LSTM -> LSTM -> dense -> scalar

Everything runs in float64 on batches of windows. Gradients come from a
hand-written reverse pass (backpropagation through time over the few
pooled steps), checked against central finite differences.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from .arima import ForecastResult
from .errors import (
    ConfigError,
    DivergenceError,
    InsufficientData,
    ParseError,
    ShapeError,
    StateError,
)
from .series_io import NormalizationParams, SupervisedWindowSet, as_values, denormalize_values

GATES = ("f", "i", "g", "o")


# --------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class NetworkSpec:
    """Layer sizes for the conv-conv-pool-LSTM-LSTM-dense stack."""

    lookback: int = 12
    conv_filters: tuple = (16, 16)
    kernel_sizes: tuple = (3, 3)
    pool_size: int = 2
    pool_mode: str = "max"
    hidden_sizes: tuple = (32, 32)

    def __post_init__(self):
        object.__setattr__(self, "conv_filters", tuple(int(v) for v in self.conv_filters))
        object.__setattr__(self, "kernel_sizes", tuple(int(v) for v in self.kernel_sizes))
        object.__setattr__(self, "hidden_sizes", tuple(int(v) for v in self.hidden_sizes))
        if len(self.conv_filters) != 2 or len(self.kernel_sizes) != 2 or len(self.hidden_sizes) != 2:
            raise ConfigError("the network has exactly two conv and two LSTM layers")
        if min(self.conv_filters + self.kernel_sizes + self.hidden_sizes) < 1:
            raise ConfigError("layer sizes must be positive")
        if self.pool_size < 1:
            raise ConfigError("pool size must be positive")
        if self.pool_mode not in ("max", "average"):
            raise ConfigError(f"unknown pool mode {self.pool_mode!r}")
        if self.lstm_steps < 1:
            raise ShapeError(
                f"lookback {self.lookback} leaves no time steps after conv and pooling"
            )

    @property
    def lstm_steps(self) -> int:
        steps = self.lookback - (self.kernel_sizes[0] - 1) - (self.kernel_sizes[1] - 1)
        return steps // self.pool_size if steps >= 1 else 0

    def shapes(self) -> dict:
        f1, f2 = self.conv_filters
        k1, k2 = self.kernel_sizes
        h1, h2 = self.hidden_sizes
        return {
            "conv1.W": (f1, 1, k1),
            "conv1.b": (f1,),
            "conv2.W": (f2, f1, k2),
            "conv2.b": (f2,),
            "lstm1.W": (4 * h1, f2 + h1),
            "lstm1.b": (4 * h1,),
            "lstm2.W": (4 * h2, h1 + h2),
            "lstm2.b": (4 * h2,),
            "dense.W": (1, h2),
            "dense.b": (1,),
        }


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 500
    learning_rate: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    lookback: int = 12
    patience: int = 50

    def __post_init__(self):
        for name in ("epochs", "batch_size", "lookback", "patience"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ConfigError("learning_rate must be a finite non-negative number")


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


# --------------------------------------------------------------------------
# Layer primitives (batched: arrays are (batch, steps, channels))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def conv1d_forward(x, W, b):
    """Valid, stride-1 cross-correlation followed by ReLU.

    ``x`` is (batch, steps, in_ch), ``W`` is (out_ch, in_ch, k). Returns the
    activation and a cache for :func:`conv1d_backward`.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    bsz, steps, cin = x.shape
    cout, win, k = W.shape
    if win != cin:
        raise ShapeError(f"conv expects {win} input channels, got {cin}")
    if steps < k:
        raise ShapeError(f"{steps} steps is shorter than kernel size {k}")
    tout = steps - k + 1
    patches = np.stack([x[:, j:j + tout, :] for j in range(k)], axis=-1)  # (B,T,C,k)
    z = np.einsum("btcj,ocj->bto", patches, W) + b
    out = np.maximum(z, 0.0)
    cache = (patches, z, W, steps)
    return (out[0] if squeeze else out), cache


def conv1d_backward(dout, cache):
    patches, z, W, steps = cache
    k = W.shape[2]
    dz = dout * (z > 0)
    dW = np.einsum("btcj,bto->ocj", patches, dz)
    db = dz.sum(axis=(0, 1))
    dpatches = np.einsum("bto,ocj->btcj", dz, W)
    tout = z.shape[1]
    dx = np.zeros((z.shape[0], steps, W.shape[1]))
    for j in range(k):
        dx[:, j:j + tout, :] += dpatches[..., j]
    return dx, dW, db


def pool_forward(x, size: int, mode: str = "max"):
    """Non-overlapping pooling along time; a short trailing remainder is dropped."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if size < 1:
        raise ConfigError("pool size must be positive")
    bsz, steps, ch = x.shape
    if steps < size:
        raise ShapeError(f"{steps} steps is shorter than pool size {size}")
    tout = steps // size
    blocks = x[:, :tout * size, :].reshape(bsz, tout, size, ch)
    if mode == "max":
        idx = blocks.argmax(axis=2)
        out = np.take_along_axis(blocks, idx[:, :, None, :], axis=2)[:, :, 0, :]
    elif mode == "average":
        idx = None
        out = blocks.mean(axis=2)
    else:
        raise ConfigError(f"unknown pool mode {mode!r}")
    cache = (idx, size, mode, x.shape)
    return (out[0] if squeeze else out), cache


def pool_backward(dout, cache):
    idx, size, mode, shape = cache
    bsz, steps, ch = shape
    tout = dout.shape[1]
    dblocks = np.zeros((bsz, tout, size, ch))
    if mode == "max":
        np.put_along_axis(dblocks, idx[:, :, None, :], dout[:, :, None, :], axis=2)
    else:
        dblocks[:] = dout[:, :, None, :] / size
    dx = np.zeros(shape)
    dx[:, :tout * size, :] = dblocks.reshape(bsz, tout * size, ch)
    return dx


def lstm_step(x, h_prev, c_prev, W, b):
    """One LSTM cell update for a batch; returns ``(h, c, cache)``.

    Rows of ``W`` and ``b`` are stacked gate-wise in the order forget,
    input, candidate, output, each acting on ``[x, h_prev]``.
    """
    H = h_prev.shape[-1]
    if W.shape != (4 * H, x.shape[-1] + H) or b.shape != (4 * H,):
        raise ShapeError(
            f"LSTM weights {W.shape} do not fit input {x.shape[-1]} and hidden {H}"
        )
    xh = np.concatenate([x, h_prev], axis=-1)
    z = xh @ W.T + b
    f = sigmoid(z[..., :H])
    i = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (xh, f, i, g, o, c_prev, tc)


def lstm_forward(xs, W, b):
    """Run an LSTM over (batch, steps, features) from zero state."""
    bsz, steps, _ = xs.shape
    H = W.shape[0] // 4
    h = np.zeros((bsz, H))
    c = np.zeros((bsz, H))
    hs = np.empty((bsz, steps, H))
    caches = []
    for t in range(steps):
        h, c, cache = lstm_step(xs[:, t, :], h, c, W, b)
        hs[:, t, :] = h
        caches.append(cache)
    return hs, caches


def lstm_backward(dhs, caches, W):
    """Backpropagation through time; ``dhs`` is the loss gradient per hidden state."""
    bsz, steps, H = dhs.shape
    D = W.shape[1] - H
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[0])
    dxs = np.zeros((bsz, steps, D))
    dh_next = np.zeros((bsz, H))
    dc_next = np.zeros((bsz, H))
    for t in reversed(range(steps)):
        xh, f, i, g, o, c_prev, tc = caches[t]
        dh = dhs[:, t, :] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * c_prev * f * (1.0 - f),
            dc * g * i * (1.0 - i),
            dc * i * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=-1)
        dW += dz.T @ xh
        db += dz.sum(axis=0)
        dxh = dz @ W
        dxs[:, t, :] = dxh[:, :D]
        dh_next = dxh[:, D:]
        dc_next = dc * f
    return dxs, dW, db


# --------------------------------------------------------------------------
# Network


def _glorot(rng, shape, fan_in, fan_out):
    r = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape)


class Network:
    """Parameter store plus Adam moments for the fixed layer stack."""

    def __init__(self, spec: NetworkSpec, params: dict, adam: AdamState | None = None):
        self.spec = spec
        shapes = spec.shapes()
        if set(params) != set(shapes):
            raise ShapeError(f"parameter names {sorted(params)} do not match the network layout")
        self.params = {}
        for name, shape in shapes.items():
            arr = np.array(params[name], dtype=float)
            if arr.shape != tuple(shape):
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            self.params[name] = arr
        self.adam = adam or AdamState.zeros_like(self.params)
        # z-score parameters of the training data, when known
        self.normalization = None
        self._trace = None

    @classmethod
    def initialize(cls, spec: NetworkSpec | None = None, seed: int = 0) -> "Network":
        """Glorot-uniform weights, zero biases, forget-gate biases at 1."""
        spec = spec or NetworkSpec()
        rng = np.random.default_rng(seed)
        f1, f2 = spec.conv_filters
        k1, k2 = spec.kernel_sizes
        h1, h2 = spec.hidden_sizes
        params = {
            "conv1.W": _glorot(rng, (f1, 1, k1), k1, f1 * k1),
            "conv1.b": np.zeros(f1),
            "conv2.W": _glorot(rng, (f2, f1, k2), f1 * k2, f2 * k2),
            "conv2.b": np.zeros(f2),
        }
        for name, d_in, h in (("lstm1", f2, h1), ("lstm2", h1, h2)):
            # one Glorot draw per gate matrix
            W = np.concatenate([_glorot(rng, (h, d_in + h), d_in + h, h) for _ in GATES])
            b = np.zeros(4 * h)
            b[:h] = 1.0
            params[f"{name}.W"] = W
            params[f"{name}.b"] = b
        params["dense.W"] = _glorot(rng, (1, h2), h2, 1)
        params["dense.b"] = np.zeros(1)
        return cls(spec, params)

    @classmethod
    def zeros(cls, spec: NetworkSpec | None = None) -> "Network":
        spec = spec or NetworkSpec()
        return cls(spec, {k: np.zeros(s) for k, s in spec.shapes().items()})

    def copy(self) -> "Network":
        net = Network(self.spec, copy.deepcopy(self.params), copy.deepcopy(self.adam))
        net.normalization = self.normalization
        return net

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    # batched passes ---------------------------------------------------

    def _check_windows(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.spec.lookback:
            raise ShapeError(
                f"windows have length {X.shape[1]}, network expects {self.spec.lookback}"
            )
        return X

    def forward_batch(self, X):
        """Predictions for a (batch, lookback) array and the cache for backprop."""
        X = self._check_windows(X)
        P = self.params
        a1, c1 = conv1d_forward(X[:, :, None], P["conv1.W"], P["conv1.b"])
        a2, c2 = conv1d_forward(a1, P["conv2.W"], P["conv2.b"])
        pooled, cp = pool_forward(a2, self.spec.pool_size, self.spec.pool_mode)
        hs1, cl1 = lstm_forward(pooled, P["lstm1.W"], P["lstm1.b"])
        hs2, cl2 = lstm_forward(hs1, P["lstm2.W"], P["lstm2.b"])
        last = hs2[:, -1, :]
        pred = last @ P["dense.W"][0] + P["dense.b"][0]
        return pred, (c1, c2, cp, cl1, cl2, hs2)

    def backward_batch(self, cache, dpred):
        """Parameter gradients given d(loss)/d(prediction) for each window."""
        c1, c2, cp, cl1, cl2, hs2 = cache
        P = self.params
        dpred = np.asarray(dpred, dtype=float)
        last = hs2[:, -1, :]
        g = {"dense.W": (dpred @ last)[None, :], "dense.b": np.array([dpred.sum()])}
        dhs2 = np.zeros_like(hs2)
        dhs2[:, -1, :] = dpred[:, None] * P["dense.W"][0][None, :]
        dhs1, g["lstm2.W"], g["lstm2.b"] = lstm_backward(dhs2, cl2, P["lstm2.W"])
        dpooled, g["lstm1.W"], g["lstm1.b"] = lstm_backward(dhs1, cl1, P["lstm1.W"])
        da2 = pool_backward(dpooled, cp)
        da1, g["conv2.W"], g["conv2.b"] = conv1d_backward(da2, c2)
        _, g["conv1.W"], g["conv1.b"] = conv1d_backward(da1, c1)
        return {k: g[k] for k in P}

    def predict(self, X) -> np.ndarray:
        return self.forward_batch(X)[0]

    def loss_and_grad(self, X, y):
        """Mean of 0.5 * (pred - y)^2 over the batch and its gradient."""
        pred, cache = self.forward_batch(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        err = pred - y
        loss = 0.5 * float(np.mean(err * err))
        return loss, self.backward_batch(cache, err / len(err))

    def evaluate_mse(self, X, y) -> float:
        err = self.predict(X) - np.asarray(y, dtype=float).reshape(-1)
        return float(np.mean(err * err))


def forward(network: Network, window) -> float:
    """Predict one step from a single window and record the pass for :func:`backward`."""
    w = np.asarray(window, dtype=float).reshape(-1)
    pred, cache = network.forward_batch(w[None, :])
    network._trace = (w.copy(), float(pred[0]), cache)
    return float(pred[0])


def backward(network: Network, window, target: float) -> dict:
    """Gradient of 0.5 * (prediction - target)^2 for the recorded window."""
    if network._trace is None:
        raise StateError("backward called before forward")
    w, pred, cache = network._trace
    if not np.array_equal(w, np.asarray(window, dtype=float).reshape(-1)):
        raise StateError("backward window differs from the recorded forward pass")
    return network.backward_batch(cache, np.array([pred - float(target)]))


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    new_params, m, v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        m_hat = m[k] / (1.0 - beta1 ** t)
        v_hat = v[k] / (1.0 - beta2 ** t)
        new_params[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m, v, t)


def train(network: Network, windows: SupervisedWindowSet, config: TrainingConfig):
    """Mini-batch Adam training with seeded shuffling and early stopping.

    The loss recorded for each epoch is the MSE over all windows evaluated
    after that epoch's updates. Training stops after ``config.epochs`` or
    after ``config.patience`` epochs without improvement; the returned
    network carries the best parameters seen. The input network is not
    modified.
    """
    if len(windows) == 0:
        raise InsufficientData("no training windows")
    if windows.lookback != network.spec.lookback:
        raise ShapeError(
            f"windows use lookback {windows.lookback}, network expects {network.spec.lookback}"
        )
    X, y = windows.inputs, windows.targets
    net = network.copy()
    rng = np.random.default_rng(config.seed)
    history = []
    best = (math.inf, None)
    stale = 0
    n = len(y)
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        # overflow is reported below as DivergenceError, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, config.batch_size):
                idx = perm[start:start + config.batch_size]
                _, grads = net.loss_and_grad(X[idx], y[idx])
                net.params, net.adam = adam_step(net.params, grads, net.adam,
                                                 config.learning_rate)
            mse = net.evaluate_mse(X, y)
        if not math.isfinite(mse):
            raise DivergenceError(epoch)
        history.append(mse)
        if mse < best[0]:
            best = (mse, copy.deepcopy(net.params))
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    net.params = best[1]
    net._trace = None
    return net, history


def forecast_recursive(network: Network, history, horizon: int,
                       params: NormalizationParams) -> ForecastResult:
    """Feed one-step predictions back as inputs ``horizon`` times, then denormalize."""
    z = as_values(history)
    L = network.spec.lookback
    if len(z) < L:
        raise InsufficientData(f"history of length {len(z)} shorter than lookback {L}")
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    window = list(z[-L:])
    out = []
    for _ in range(horizon):
        nxt = float(network.predict(np.array(window))[0])
        out.append(nxt)
        window = window[1:] + [nxt]
    return ForecastResult(horizon, denormalize_values(out, params))


def gradient_check(network: Network, window, target: float, step: float = 1e-5,
                   analytic: dict | None = None, floor: float = 1e-12) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``analytic`` overrides the gradients under test (useful for negative
    controls); by default they come from :func:`backward`. ``floor`` bounds
    the denominator from below so that entries smaller than the
    finite-difference round-off do not dominate the result.
    """
    window = np.asarray(window, dtype=float).reshape(-1)
    if analytic is None:
        forward(network, window)
        analytic = backward(network, window, target)

    def loss():
        pred = float(network.predict(window[None, :])[0])
        return 0.5 * (pred - target) ** 2

    worst = 0.0
    for name, p in network.params.items():
        flat = p.reshape(-1)
        a_flat = np.asarray(analytic[name]).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = loss()
            flat[j] = orig - step
            down = loss()
            flat[j] = orig
            num = (up - down) / (2.0 * step)
            a = a_flat[j]
            err = abs(a - num) / max(abs(a), abs(num), floor)
            worst = max(worst, err)
    return worst


# --------------------------------------------------------------------------
# Serialization


def dumps_network(network: Network) -> str:
    """Text manifest of the layer spec followed by flat 17-digit parameter arrays."""
    s = network.spec
    lines = [
        "tempcast-network 1",
        f"lookback {s.lookback}",
        f"conv {s.conv_filters[0]} {s.kernel_sizes[0]}",
        f"conv {s.conv_filters[1]} {s.kernel_sizes[1]}",
        f"pool {s.pool_size} {s.pool_mode}",
        f"lstm {s.hidden_sizes[0]}",
        f"lstm {s.hidden_sizes[1]}",
        "dense 1",
    ]
    if network.normalization is not None:
        nm = network.normalization
        lines.append(f"normalize {nm.mean:.17g} {nm.sample_std:.17g}")
    for name, p in network.params.items():
        lines.append(f"param {name} {' '.join(str(d) for d in p.shape)}")
        lines.append(" ".join(f"{v:.17g}" for v in p.reshape(-1)))
    return "\n".join(lines) + "\n"


def loads_network(text: str) -> Network:
    lines = [ln for ln in text.splitlines()]
    try:
        if lines[0].split() != ["tempcast-network", "1"]:
            raise ParseError("not a tempcast network file")
        lookback = int(lines[1].split()[1])
        c1, c2 = lines[2].split(), lines[3].split()
        pool = lines[4].split()
        l1, l2 = lines[5].split(), lines[6].split()
        spec = NetworkSpec(
            lookback=lookback,
            conv_filters=(int(c1[1]), int(c2[1])),
            kernel_sizes=(int(c1[2]), int(c2[2])),
            pool_size=int(pool[1]),
            pool_mode=pool[2],
            hidden_sizes=(int(l1[1]), int(l2[1])),
        )
        params = {}
        i = 8
        norm = None
        if i < len(lines) and lines[i].startswith("normalize "):
            _, m, sd = lines[i].split()
            norm = NormalizationParams(float(m), float(sd))
            i += 1
        while i < len(lines) and lines[i].startswith("param "):
            head = lines[i].split()
            shape = tuple(int(v) for v in head[2:])
            flat = [float(v) for v in lines[i + 1].split()]
            params[head[1]] = np.array(flat).reshape(shape)
            i += 2
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed network file: {exc}") from None
    net = Network(spec, params)
    net.normalization = norm
    return net


def dumps_history(history) -> str:
    rows = ["epoch,mse"] + [f"{i},{v:.17g}" for i, v in enumerate(history, start=1)]
    return "\n".join(rows) + "\n"


__all__ = [
    "AdamState", "Network", "NetworkSpec", "TrainingConfig", "adam_step", "backward",
    "conv1d_forward", "dumps_history", "dumps_network", "forecast_recursive", "forward",
    "gradient_check", "loads_network", "lstm_step", "pool_forward", "train",
]
