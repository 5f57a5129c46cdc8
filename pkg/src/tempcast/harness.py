"""Hold-out benchmark: ARIMA vs the conv/LSTM network on the last 12 months.

A run manifest (INI-style key/value file) names the data file, the ARIMA
order (or ``auto``), the network sizes and training settings. The pipeline
aggregates to monthly means, holds out the final ``horizon`` points, fits
both models on the remainder only, forecasts recursively and scores each
forecast by mean squared error alongside a seasonal-naive yardstick.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import arima, diagnostics, neural
from .errors import ConfigError, InsufficientData, IoError, ShapeError, TempcastError
from .series_io import (
    DEFAULT_TEMPERATURE_COL,
    DEFAULT_TIMESTAMP_COL,
    TimeSeries,
    as_values,
    format_month,
    load_series,
    make_windows,
    zscore_normalize,
)

ARIMA_NAME = "ARIMA"
NETWORK_NAME = "Deep Learning"
BASELINE_NAME = "Seasonal Naive"
SEASON = 12

_FILE_NAMES = {
    ARIMA_NAME: "arima.csv",
    NETWORK_NAME: "deep_learning.csv",
    BASELINE_NAME: "seasonal_naive.csv",
}


class PipelineError(TempcastError):
    """A module error re-raised with the pipeline stage it came from."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


# --------------------------------------------------------------------------
# Manifest

_SCHEMA = {
    "data": {"path": None, "frequency": "hourly",
             "timestamp_col": DEFAULT_TIMESTAMP_COL,
             "temperature_col": DEFAULT_TEMPERATURE_COL},
    "arima": {"order": "auto"},
    "network": {"conv_filters": "16,16", "kernel_sizes": "3,3", "pool_size": "2",
                "pool_mode": "max", "hidden_sizes": "32,32"},
    "training": {"epochs": "500", "learning_rate": "0.001", "batch_size": "16",
                 "seed": "0", "lookback": "12", "patience": "50"},
    "evaluation": {"horizon": "12"},
}


@dataclass(frozen=True)
class RunManifest:
    data_path: Path | None
    frequency: str = "hourly"
    timestamp_col: str = DEFAULT_TIMESTAMP_COL
    temperature_col: str = DEFAULT_TEMPERATURE_COL
    arima_order: tuple | None = None  # None means auto
    network: neural.NetworkSpec = field(default_factory=neural.NetworkSpec)
    training: neural.TrainingConfig = field(default_factory=neural.TrainingConfig)
    horizon: int = 12

    def with_seed(self, seed: int) -> "RunManifest":
        t = self.training
        return RunManifest(
            self.data_path, self.frequency, self.timestamp_col, self.temperature_col,
            self.arima_order, self.network,
            neural.TrainingConfig(t.epochs, t.learning_rate, t.batch_size, seed,
                                  t.lookback, t.patience),
            self.horizon,
        )


def _ints(text, key):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {text!r}") from None


def parse_manifest(text: str, base_dir=None) -> RunManifest:
    """Parse manifest text; relative data paths resolve against ``base_dir``.

    Unknown sections or keys and invalid values raise :class:`ConfigError`
    listing every offending key.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"manifest is not valid key/value text: {exc}") from None

    problems = []
    for section in cp.sections():
        if section not in _SCHEMA:
            problems.append(f"[{section}] (unknown section)")
            continue
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                problems.append(f"{section}.{key} (unknown key)")
    if problems:
        raise ConfigError("invalid manifest keys: " + ", ".join(problems))

    def get(section, key):
        if cp.has_section(section) and key in cp[section]:
            return cp[section][key].strip()
        return _SCHEMA[section][key]

    errors = []

    def check(key, fn):
        try:
            return fn()
        except (ConfigError, ShapeError, ValueError) as exc:
            errors.append(f"{key} ({exc})")
            return None

    path = get("data", "path")
    data_path = None
    if path:
        data_path = Path(path)
        if base_dir is not None and not data_path.is_absolute():
            data_path = Path(base_dir) / data_path
    frequency = get("data", "frequency")
    if frequency not in ("hourly", "monthly"):
        errors.append(f"data.frequency (must be hourly or monthly, got {frequency!r})")

    order_text = get("arima", "order")
    order = None
    if order_text.lower() != "auto":
        order = check("arima.order", lambda: tuple(arima.ArimaOrder(*_ints(order_text, "arima.order"))))
        if order is not None and len(order) != 3:
            errors.append("arima.order (expected p,d,q)")

    def net():
        return neural.NetworkSpec(
            lookback=int(get("training", "lookback")),
            conv_filters=_ints(get("network", "conv_filters"), "network.conv_filters"),
            kernel_sizes=_ints(get("network", "kernel_sizes"), "network.kernel_sizes"),
            pool_size=int(get("network", "pool_size")),
            pool_mode=get("network", "pool_mode"),
            hidden_sizes=_ints(get("network", "hidden_sizes"), "network.hidden_sizes"),
        )

    def train():
        lr = float(get("training", "learning_rate"))
        if lr < 0:
            raise ConfigError("learning_rate must be non-negative")
        return neural.TrainingConfig(
            epochs=int(get("training", "epochs")),
            learning_rate=lr,
            batch_size=int(get("training", "batch_size")),
            seed=int(get("training", "seed")),
            lookback=int(get("training", "lookback")),
            patience=int(get("training", "patience")),
        )

    spec = check("network", net)
    training = check("training", train)
    horizon = check("evaluation.horizon", lambda: int(get("evaluation", "horizon")))
    if horizon is not None and horizon < 1:
        errors.append("evaluation.horizon (must be positive)")
    if errors:
        raise ConfigError("invalid manifest values: " + "; ".join(errors))
    return RunManifest(data_path, frequency, get("data", "timestamp_col"),
                       get("data", "temperature_col"), order, spec, training, horizon)


def load_manifest(path) -> RunManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc.strerror}") from None
    return parse_manifest(text, base_dir=path.parent)


# --------------------------------------------------------------------------
# Protocol pieces


def split_holdout(series: TimeSeries, h: int = 12) -> tuple[TimeSeries, TimeSeries]:
    """Final ``h`` points become the test set, the rest the training set."""
    if h < 1:
        raise ConfigError("hold-out length must be positive")
    if len(series) <= h:
        raise InsufficientData(f"series of length {len(series)} cannot hold out {h} points")
    return series.slice(None, -h), series.slice(-h, None)


def mse(actual, predicted) -> float:
    a = np.asarray(actual, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if a.shape != p.shape or a.size == 0:
        raise ShapeError(f"mse needs equal non-empty lengths, got {a.size} and {p.size}")
    return float(np.mean((a - p) ** 2))


def seasonal_naive(train, h: int) -> np.ndarray:
    """Repeat the last observed value of each calendar month."""
    x = as_values(train)
    if len(x) < SEASON:
        raise InsufficientData(f"seasonal naive needs {SEASON} training points")
    if not 1 <= h <= SEASON:
        raise InsufficientData(f"seasonal naive covers horizons 1..{SEASON}, got {h}")
    n = len(x)
    return x[n - SEASON:n - SEASON + h].copy()


# --------------------------------------------------------------------------
# Report


@dataclass(frozen=True)
class ModelResult:
    name: str
    forecasts: np.ndarray
    actuals: np.ndarray
    mse: float


@dataclass
class EvaluationReport:
    months: tuple
    models: list  # the compared models, ARIMA first
    baseline: ModelResult
    winner: str
    relative_gap: float
    arima_order: tuple = ()
    # fitted objects kept for inspection; not part of the emitted files
    arima_model: arima.ArimaModel | None = field(default=None, repr=False)
    network: neural.Network | None = field(default=None, repr=False)
    loss_history: list = field(default_factory=list, repr=False)
    adf_results: list = field(default_factory=list, repr=False)

    def result(self, name) -> ModelResult:
        for r in self.models + [self.baseline]:
            if r.name == name:
                return r
        raise KeyError(name)


def decide_winner(results) -> tuple[str, float]:
    """Name of the lowest-MSE model and the relative gap to the worst one."""
    ranked = sorted(results, key=lambda r: (r.mse, r.name))
    win, lose = ranked[0], ranked[-1]
    gap = 0.0 if lose.mse == 0 else (lose.mse - win.mse) / lose.mse
    return win.name, gap


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except TempcastError as exc:
        raise PipelineError(name, exc) from exc


def _fit_arima(train: TimeSeries, order):
    adf = []
    if order is None:
        order, adf, _ = diagnostics.auto_order(train)
    model = arima.fit(train, order)
    return model, tuple(order), adf


def evaluate_series(series: TimeSeries, manifest: RunManifest) -> EvaluationReport:
    """Run the full comparison on an already-loaded monthly series."""
    h = manifest.horizon
    train, test = _stage("split", split_holdout, series, h)
    actual = np.array(test.values)

    model, order, adf = _stage("arima", _fit_arima, train, manifest.arima_order)
    arima_fc = _stage("arima", arima.forecast, model, h).point_forecasts

    def network_path():
        z, params = zscore_normalize(train)
        windows = make_windows(z, manifest.training.lookback)
        net0 = neural.Network.initialize(manifest.network, manifest.training.seed)
        net, history = neural.train(net0, windows, manifest.training)
        net.normalization = params
        fc = neural.forecast_recursive(net, z, h, params).point_forecasts
        return net, history, fc

    net, history, net_fc = _stage("network", network_path)
    base_fc = _stage("baseline", seasonal_naive, train, h)

    results = [
        ModelResult(ARIMA_NAME, np.asarray(arima_fc), actual, mse(actual, arima_fc)),
        ModelResult(NETWORK_NAME, np.asarray(net_fc), actual, mse(actual, net_fc)),
    ]
    baseline = ModelResult(BASELINE_NAME, base_fc, actual, mse(actual, base_fc))
    for r in results + [baseline]:
        if not np.all(np.isfinite(r.forecasts)):
            raise PipelineError(r.name, ShapeError("non-finite forecasts"))
    winner, gap = decide_winner(results)
    return EvaluationReport(
        months=test.timestamps, models=results, baseline=baseline, winner=winner,
        relative_gap=gap, arima_order=order, arima_model=model, network=net,
        loss_history=history, adf_results=adf,
    )


def run_comparison(manifest: RunManifest) -> EvaluationReport:
    if manifest.data_path is None:
        raise ConfigError("manifest does not name a data file")
    series = _stage("load", load_series, manifest.data_path, manifest.frequency,
                    manifest.timestamp_col, manifest.temperature_col)
    return evaluate_series(series, manifest)


# --------------------------------------------------------------------------
# Output


def _num(v: float) -> str:
    # shortest decimal that round-trips exactly
    return repr(float(v))


def summary_table(report: EvaluationReport) -> str:
    """Fixed-layout model/MSE table."""
    rows = [(r.name, f"{r.mse:.4f}") for r in report.models + [report.baseline]]
    width = max(len("Model"), *(len(n) for n, _ in rows))
    lines = [f"{'Model':<{width}}  Mean Squared Error (MSE)", "-" * (width + 26)]
    lines += [f"{n:<{width}}  {v}" for n, v in rows]
    lines.append("")
    lines.append(f"ARIMA order: ({','.join(str(v) for v in report.arima_order)})")
    lines.append(f"Winner: {report.winner}")
    lines.append(f"Relative gap: {100.0 * report.relative_gap:.1f}%")
    return "\n".join(lines) + "\n"


def emit_plot_data(report: EvaluationReport, out_dir) -> list:
    """Write ``month,actual,forecast`` per model plus ``summary.csv``.

    Returns the written paths. Output is byte-identical for equal reports.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for r in report.models + [report.baseline]:
            path = out / _FILE_NAMES.get(r.name, r.name.lower().replace(" ", "_") + ".csv")
            rows = ["month,actual,forecast"]
            rows += [f"{format_month(m)},{_num(a)},{_num(f)}"
                     for m, a, f in zip(report.months, r.actuals, r.forecasts)]
            _write(path, "\n".join(rows) + "\n")
            written.append(path)
        summary = ["model,mse"] + [f"{r.name},{_num(r.mse)}"
                                   for r in report.models + [report.baseline]]
        path = out / "summary.csv"
        _write(path, "\n".join(summary) + "\n")
        written.append(path)
        path = out / "report.txt"
        _write(path, summary_table(report))
        written.append(path)
        if report.loss_history:
            path = out / "loss_history.csv"
            _write(path, neural.dumps_history(report.loss_history))
            written.append(path)
    except OSError as exc:
        raise IoError(f"cannot write plot data to {out}: {exc.strerror}") from None
    return written


def _write(path: Path, text: str):
    # newline="" keeps "\n" on every platform so files are byte-stable
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# Bundled synthetic data


def synthetic_seasonal_series(seed: int = 2006, n: int = 132, start=(2006, 1)) -> TimeSeries:
    """Monthly temperature-like series: AR(1) noise around a 12-month cycle.

    The annual cycle (mean 12 degC, amplitude 10 degC, peak in July) is
    deterministic; the anomaly is an AR(1) path with phi 0.5 and sigma 1.2.
    """
    noise = arima.simulate((1, 0, 0), [0.5], [], 0.0, 1.2, n, seed, start=start)
    months = np.array([ym[1] for ym in noise.timestamps])
    cycle = 12.0 + 10.0 * np.sin(2.0 * math.pi * (months - 4) / 12.0)
    return noise.with_values(np.round(cycle + noise.values, 6))


def majority_ordering(manifest: RunManifest, seeds, series: TimeSeries | None = None):
    """Evaluate several training seeds; returns (reports, count where the network wins)."""
    if series is None:
        series = load_series(manifest.data_path, manifest.frequency,
                             manifest.timestamp_col, manifest.temperature_col)
    reports = [evaluate_series(series, manifest.with_seed(s)) for s in seeds]
    wins = sum(1 for r in reports if r.result(NETWORK_NAME).mse < r.result(ARIMA_NAME).mse)
    return reports, wins


def default_output_dir(manifest_path) -> Path:
    p = Path(manifest_path)
    return p.parent / (p.stem + "_report")


__all__ = [
    "EvaluationReport", "ModelResult", "PipelineError", "RunManifest", "emit_plot_data",
    "evaluate_series", "load_manifest", "mse", "parse_manifest", "run_comparison",
    "seasonal_naive", "split_holdout", "summary_table", "synthetic_seasonal_series",
]
