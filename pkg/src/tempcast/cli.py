"""Command-line entry point: ``tempcast <subcommand> [options]``.

Exit codes: 0 on success, 1 for user errors (bad flags, bad input data,
invalid manifests), 2 for unexpected internal failures.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from . import arima, diagnostics, harness, neural
from .errors import TempcastError
from .series_io import (
    DEFAULT_TEMPERATURE_COL,
    DEFAULT_TIMESTAMP_COL,
    format_month,
    load_series,
    make_windows,
    read_monthly_csv,
    write_monthly_csv,
    zscore_normalize,
)

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; ours is 1
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _order(text):
    if text.lower() == "auto":
        return None
    try:
        p, d, q = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("order must be 'auto' or p,d,q") from None
    return (p, d, q)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tempcast", description="ARIMA vs conv/LSTM temperature forecasting")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="hourly CSV -> canonical monthly series file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--timestamp-col", default=DEFAULT_TIMESTAMP_COL)
    p.add_argument("--temp-col", default=DEFAULT_TEMPERATURE_COL)
    p.add_argument("--frequency", choices=("hourly", "monthly"), default="hourly",
                   help="frequency of the input file (monthly = validate and copy)")

    p = sub.add_parser("diagnose", help="ADF tests, correlogram and suggested order")
    p.add_argument("--input", required=True, help="canonical monthly series file")
    p.add_argument("--max-lag", type=int, default=None)
    p.add_argument("--out-csv", default=None,
                   help="correlogram CSV path (default: <input>_correlogram.csv)")

    p = sub.add_parser("fit-arima", help="fit an ARIMA model by conditional sum of squares")
    p.add_argument("--input", required=True)
    p.add_argument("--order", type=_order, default=None, help="p,d,q or auto (default)")
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("train-net", help="train the conv/LSTM network")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="network file to write")
    p.add_argument("--history", default=None, help="epoch,mse CSV to write")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lookback", type=int, default=12)
    p.add_argument("--patience", type=int, default=50)

    p = sub.add_parser("forecast", help="forecast from a saved ARIMA model or network")
    p.add_argument("--model", required=True)
    p.add_argument("--input", default=None, help="series file (required for networks)")
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--out", default=None, help="month,forecast CSV to write")

    p = sub.add_parser("compare", help="run the hold-out comparison from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="report directory (default: <manifest>_report)")
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    return parser


# --------------------------------------------------------------------------
# Subcommands


def cmd_ingest(args, out):
    series = load_series(args.input, args.frequency, args.timestamp_col, args.temp_col)
    write_monthly_csv(series, args.out)
    first, last = series.timestamps[0], series.timestamps[-1]
    print(f"{len(series)} monthly points, {format_month(first)} to {format_month(last)}",
          file=out)
    print(f"wrote {args.out}", file=out)


def correlogram_csv(cg: diagnostics.Correlogram) -> str:
    rows = ["lag,acf,pacf,bound"]
    rows.append(f"0,1,,{cg.confidence_bound:.17g}")
    for k, a, p in cg.rows():
        rows.append(f"{k},{a:.17g},{p:.17g},{cg.confidence_bound:.17g}")
    return "\n".join(rows) + "\n"


def correlogram_table(cg: diagnostics.Correlogram) -> str:
    b = cg.confidence_bound
    lines = [f"{'lag':>4} {'acf':>9}   {'pacf':>9}   (band +/-{b:.4f}, * = outside)"]
    for k, a, p in cg.rows():
        lines.append(f"{k:>4} {a:>9.4f} {'*' if abs(a) > b else ' '} "
                     f"{p:>9.4f} {'*' if abs(p) > b else ' '}")
    return "\n".join(lines)


def cmd_diagnose(args, out):
    series = read_monthly_csv(args.input)
    order, adf_results, cg = diagnostics.auto_order(series, args.max_lag)
    print("Augmented Dickey-Fuller (constant, no trend):", file=out)
    for d, res in enumerate(adf_results):
        cv = res.critical_values
        verdict = "stationary" if res.reject_unit_root else "unit root not rejected"
        print(f"  d={d}: stat={res.statistic:.4f} lags={res.lag_order} "
              f"cv(1%,5%,10%)=({cv['1%']}, {cv['5%']}, {cv['10%']}) -> {verdict}", file=out)
    print(f"Correlogram of the d={order[1]} differenced series:", file=out)
    print(correlogram_table(cg), file=out)
    print(f"Suggested order (p,d,q) = ({order[0]},{order[1]},{order[2]})", file=out)
    path = Path(args.out_csv) if args.out_csv else (
        Path(args.input).with_name(Path(args.input).stem + "_correlogram.csv"))
    path.write_text(correlogram_csv(cg), encoding="utf-8")
    print(f"wrote {path}", file=out)


def cmd_fit_arima(args, out):
    series = read_monthly_csv(args.input)
    order = args.order
    if order is None:
        order, _, _ = diagnostics.auto_order(series)
    model = arima.fit(series, order)
    Path(args.out).write_text(arima.dumps_model(model), encoding="utf-8")
    print(f"ARIMA{model.order}", file=out)
    print(f"  phi   = {np.array2string(model.phi, precision=6)}", file=out)
    print(f"  theta = {np.array2string(model.theta, precision=6)}", file=out)
    print(f"  mu    = {model.mu:.6f}", file=out)
    print(f"  sigma2= {model.sigma2:.6f}", file=out)
    m = max(model.order.p, model.order.q)
    resid = model.residuals[m:]
    h = min(10, len(resid) - 1)
    if h > model.n_params:
        rep = diagnostics.ljung_box(resid, h, model.n_params)
        print(f"  residual mean {rep.residual_mean:.4f} "
              f"({'ok' if rep.mean_within_tolerance else 'NOT near zero'})", file=out)
        print(f"  Ljung-Box Q({h})={rep.ljung_box_statistic:.4f} p={rep.ljung_box_p:.4f} "
              f"({'uncorrelated' if rep.uncorrelated else 'correlated'})", file=out)
    print(f"wrote {args.out}", file=out)


def cmd_train_net(args, out):
    series = read_monthly_csv(args.input)
    config = neural.TrainingConfig(args.epochs, args.lr, args.batch_size, args.seed,
                                   args.lookback, args.patience)
    spec = neural.NetworkSpec(lookback=args.lookback)
    z, params = zscore_normalize(series)
    windows = make_windows(z, args.lookback)
    net, history = neural.train(neural.Network.initialize(spec, args.seed), windows, config)
    net.normalization = params
    Path(args.out).write_text(neural.dumps_network(net), encoding="utf-8")
    if args.history:
        Path(args.history).write_text(neural.dumps_history(history), encoding="utf-8")
    print(f"trained {len(history)} epochs; first mse {history[0]:.6f}, "
          f"best mse {min(history):.6f}", file=out)
    print(f"wrote {args.out}", file=out)


def cmd_forecast(args, out):
    text = Path(args.model).read_text(encoding="utf-8")
    series = read_monthly_csv(args.input) if args.input else None
    if text.startswith("tempcast-network"):
        net = neural.loads_network(text)
        if series is None:
            raise UsageError("forecast: --input is required for a network model")
        if net.normalization is None:
            raise UsageError("forecast: network file carries no normalization parameters")
        z = (series.values - net.normalization.mean) / net.normalization.sample_std
        values = neural.forecast_recursive(net, z, args.horizon, net.normalization).point_forecasts
    else:
        model = arima.loads_model(text)
        values = arima.forecast(model, args.horizon).point_forecasts
    if series is not None:
        labels = [format_month(series.step_forward(k)) for k in range(1, args.horizon + 1)]
    else:
        labels = [f"+{k}" for k in range(1, args.horizon + 1)]
    rows = ["month,forecast"] + [f"{m},{v:.17g}" for m, v in zip(labels, values)]
    for m, v in zip(labels, values):
        print(f"{m:>8}  {v:8.3f}", file=out)
    if args.out:
        Path(args.out).write_text("\n".join(rows) + "\n", encoding="utf-8")
        print(f"wrote {args.out}", file=out)


def cmd_compare(args, out):
    manifest = harness.load_manifest(args.manifest)
    if args.seed is not None:
        manifest = manifest.with_seed(args.seed)
    report = harness.run_comparison(manifest)
    out_dir = Path(args.out) if args.out else harness.default_output_dir(args.manifest)
    harness.emit_plot_data(report, out_dir)
    print(harness.summary_table(report), end="", file=out)
    print(f"wrote report files to {out_dir}", file=out)


COMMANDS = {
    "ingest": cmd_ingest,
    "diagnose": cmd_diagnose,
    "fit-arima": cmd_fit_arima,
    "train-net": cmd_train_net,
    "forecast": cmd_forecast,
    "compare": cmd_compare,
}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=err)
        return EXIT_USER
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args, out)
    except (TempcastError, UsageError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USER
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=err)
        return EXIT_USER
    except (PermissionError, IsADirectoryError) as exc:
        print(f"error: cannot access {exc.filename}: {exc.strerror}", file=err)
        return EXIT_USER
    except Exception:
        print("internal error:", file=err)
        traceback.print_exc(file=err)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
