"""Command-line entry point wiring data, model, and training together.

Subcommands: train, eval, forecast, export-attention, lookback-sweep. Every
command is driven by a flat config file plus ``--set key=value`` overrides,
and writes its resolved config beside its artifacts so runs can be replayed.
Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import time
from typing import List, Optional

from gridcast.config import (
    RunConfig,
    apply_overrides,
    load_run_config,
    save_run_config,
)
from gridcast.data import (
    SplitSpec,
    borrow_prefix,
    chronological_split,
    load_csv,
    save_stats,
    standardize,
)
from gridcast.embed import patch_count
from gridcast.errors import ConfigError, DataError, GridcastError
from gridcast.model import (
    build,
    export_attention,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from gridcast.tensor import no_grad
from gridcast.train import evaluate, persistence_baseline, train

RESULTS_HEADER = ["dataset", "T", "F", "mode", "ratio", "seed", "mse", "mae", "wall_s"]


def _resolve_config(args) -> RunConfig:
    run = load_run_config(args.config) if args.config else RunConfig()
    apply_overrides(run, args.set)
    if getattr(args, "data", None):
        run.data_path = args.data
    if getattr(args, "out", None):
        run.out_dir = args.out
    if getattr(args, "seed", None) is not None:
        run.seed = args.seed
    return run


def _prepare_splits(run: RunConfig):
    if not run.data_path:
        raise ConfigError("data.path is required (config key data.path or --data)")
    ds = load_csv(
        run.data_path,
        value_columns=run.columns("value"),
        drop_columns=run.columns("drop"),
        name=run.data_name or None,
        frequency=run.data_frequency,
    )
    spec = SplitSpec.parse(run.data_split)
    tr, va, te = chronological_split(ds, spec)
    tr, va, te, stats = standardize(tr, va, te)
    if run.data_borrow_prefix:
        tr, va, te = borrow_prefix(tr, va, te, run.model_T)
    return ds, (tr, va, te), stats


def _write_results(path_or_none, rows: List[list], extra_columns=()) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(RESULTS_HEADER + list(extra_columns))
    writer.writerows(rows)
    text = buf.getvalue()
    if path_or_none:
        with open(path_or_none, "w", newline="") as fh:
            fh.write(text)
    return text


def _result_row(dataset, cfg, ratio, seed, mse_value, mae_value, wall_s) -> list:
    return [
        dataset,
        cfg.T,
        cfg.F,
        cfg.mode,
        ratio,
        seed,
        repr(float(mse_value)),
        repr(float(mae_value)),
        round(wall_s, 3),
    ]


def cmd_train(args) -> int:
    run = _resolve_config(args)
    os.makedirs(run.out_dir, exist_ok=True)
    ds, splits, stats = _prepare_splits(run)
    save_stats(stats, os.path.join(run.out_dir, "train_stats.csv"))
    save_run_config(run, os.path.join(run.out_dir, "config.txt"))
    horizons = (
        [int(h) for h in args.horizon_sweep.split(",")]
        if args.horizon_sweep
        else [run.model_F]
    )
    rows = []
    for F in horizons:
        cfg = dataclasses.replace(run.to_model_config(ds.channels), F=F)
        params = build(cfg)
        log_path = os.path.join(run.out_dir, f"epochs_F{F}.jsonl")
        report = train(params, cfg, splits, run.to_hyper(log_path))
        save_checkpoint(os.path.join(run.out_dir, f"model_F{F}.ckpt"), params, cfg)
        with open(os.path.join(run.out_dir, f"report_F{F}.json"), "w") as fh:
            json.dump(dataclasses.asdict(report), fh, indent=2)
        rows.append(
            _result_row(
                ds.name, cfg, run.train_variate_ratio, run.seed,
                report.test_mse, report.test_mae, report.wall_time_s,
            )
        )
        print(
            f"trained {ds.name} T={cfg.T} F={F}: test mse {report.test_mse:.6f} "
            f"mae {report.test_mae:.6f} ({report.epochs_run} epochs)"
        )
    text = _write_results(os.path.join(run.out_dir, "results.csv"), rows)
    sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    params, cfg = load_checkpoint(args.checkpoint)
    run = _resolve_config(args)
    ds, (tr, va, te), _ = _prepare_splits(run)
    if ds.channels != cfg.N:
        raise ConfigError(
            f"dataset {ds.name!r} has {ds.channels} variates but the checkpoint "
            f"expects N={cfg.N}"
        )
    t0 = time.monotonic()
    mse_value, mae_value = evaluate(params, cfg, te, batch_size=run.train_batch_size)
    rows = [_result_row(ds.name, cfg, 1.0, run.seed, mse_value, mae_value, time.monotonic() - t0)]
    if args.persistence:
        p_mse, p_mae = persistence_baseline(te, cfg.T, cfg.F)
        row = _result_row(ds.name, cfg, 1.0, run.seed, p_mse, p_mae, 0.0)
        row[3] = "persistence"
        rows.append(row)
    text = _write_results(args.out_file, rows)
    sys.stdout.write(text)
    return 0


def _load_window(args, cfg):
    win = load_csv(
        args.window,
        drop_columns=[c.strip() for c in args.drop_columns.split(",")] if args.drop_columns else None,
    )
    if win.timesteps != cfg.T:
        raise ConfigError(
            f"window {args.window} has {win.timesteps} rows but the checkpoint "
            f"expects T={cfg.T}"
        )
    if win.channels != cfg.N:
        raise ConfigError(
            f"window {args.window} has {win.channels} columns but the checkpoint "
            f"expects N={cfg.N}"
        )
    return win


def cmd_forecast(args) -> int:
    params, cfg = load_checkpoint(args.checkpoint)
    win = _load_window(args, cfg)
    with no_grad():
        pred, _ = forward(win.values[None], params, cfg)
    out = pred.data[0]  # [F, N]
    buf = io.StringIO()
    writer = csv.writer(buf)
    for row in out:
        writer.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if args.out_file:
        with open(args.out_file, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_export_attention(args) -> int:
    params, cfg = load_checkpoint(args.checkpoint)
    win = _load_window(args, cfg)
    with no_grad():
        _, maps = forward(win.values[None], params, cfg, capture_attention=True)
    paths = export_attention(maps, args.out_dir)
    for path in paths:
        print(path)
    return 0


def cmd_lookback_sweep(args) -> int:
    run = _resolve_config(args)
    lengths = [int(x) for x in args.lengths.split(",")]
    for T in lengths:
        if T < run.model_P:
            raise ConfigError(
                f"lookback {T} is shorter than patch length P={run.model_P}"
            )
    os.makedirs(run.out_dir, exist_ok=True)
    rows = []
    for T in lengths:
        run_T = dataclasses.replace(run, model_T=T)
        ds, splits, _ = _prepare_splits(run_T)
        cfg = run_T.to_model_config(ds.channels)
        save_run_config(run_T, os.path.join(run.out_dir, f"config_T{T}.txt"))
        params = build(cfg)
        report = train(params, cfg, splits, run_T.to_hyper())
        save_checkpoint(os.path.join(run.out_dir, f"model_T{T}.ckpt"), params, cfg)
        row = _result_row(
            ds.name, cfg, run.train_variate_ratio, run.seed,
            report.test_mse, report.test_mae, report.wall_time_s,
        )
        row.append(patch_count(T, run.model_P, run.model_S))
        rows.append(row)
        print(f"lookback {T}: test mse {report.test_mse:.6f}")
    text = _write_results(os.path.join(run.out_dir, "sweep.csv"), rows, extra_columns=["M"])
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridcast",
        description="Grid-attention multivariate time-series forecasting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )
        if data:
            p.add_argument("--data", help="dataset CSV path (overrides data.path)")
        p.add_argument("--out", help="output directory (overrides out.dir)")
        p.add_argument("--seed", type=int, help="seed (overrides seed)")

    p_train = sub.add_parser("train", help="train a model and write artifacts")
    common(p_train)
    p_train.add_argument(
        "--horizon-sweep",
        metavar="F1,F2,...",
        help="train once per horizon, e.g. 96,192,336,720",
    )
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument(
        "--persistence",
        action="store_true",
        help="also report the repeat-last-value baseline",
    )
    p_eval.add_argument("--out-file", help="metrics CSV path (default: stdout only)")
    p_eval.set_defaults(func=cmd_eval)

    def window_command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--window", required=True, help="CSV with exactly T rows, N columns")
        p.add_argument("--drop-columns", help="comma-separated columns to drop from the window")
        return p

    p_fc = window_command("forecast", "forecast F steps from one lookback window")
    p_fc.add_argument("--out-file", help="forecast CSV path (default: stdout)")
    p_fc.set_defaults(func=cmd_forecast)

    p_att = window_command("export-attention", "write attention-map CSVs for one window")
    p_att.add_argument("--out-dir", required=True)
    p_att.set_defaults(func=cmd_export_attention)

    p_sweep = sub.add_parser("lookback-sweep", help="train/eval once per lookback length")
    common(p_sweep)
    p_sweep.add_argument("--lengths", required=True, metavar="T1,T2,...")
    p_sweep.set_defaults(func=cmd_lookback_sweep)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GridcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
