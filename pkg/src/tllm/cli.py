"""Command-line entry points: train, eval, export, analyze, synth.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (RunConfig, build_dataset, load_config, model_spec,
                     save_config_snapshot, train_config)
from .data import load_csv, make_splits, window_arrays, windows, zeroshot_pair
from .distill import train, write_history_csv
from .errors import ConfigError, DataError, TllmError
from .export import export_student, load_student_artifact
from .metrics import (PROTOCOLS, MetricReport, average_reports, evaluate,
                      repeat_last_forecast, write_horizon_csv)
from .model import JointModel, build_model
from .optim import Adam
from .tensor import set_default_dtype

CHECKPOINT_NAME = "checkpoint.tllm"
CONFIG_NAME = "config.json"
HISTORY_NAME = "history.csv"
TRACES_NAME = "traces.npz"


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run configuration (JSON, comments allowed)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default 1: fully deterministic)")
    p.add_argument("--precision", choices=("f32", "f64"), help="tensor precision override")


def _resolve_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.precision:
        cfg.precision = args.precision
    if args.threads is not None:
        cfg.threads = args.threads
    cfg.validate()
    set_default_dtype(np.float32 if cfg.precision == "f32" else np.float64)
    return cfg


def _dataset_path(path: str) -> str:
    """Fall back to $TLLM_DATA_DIR when the path is not directly present."""
    if path == "synthetic" or Path(path).exists():
        return path
    root = os.environ.get("TLLM_DATA_DIR")
    if root and (Path(root) / path).exists():
        return str(Path(root) / path)
    return path


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    cfg.dataset = _dataset_path(cfg.dataset)
    out_dir = Path(args.out or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config_snapshot(cfg, out_dir / CONFIG_NAME)

    ds = build_dataset(cfg)
    model = build_model(model_spec(cfg, ds.channels), cfg.seed)
    model.set_norm_stats(ds.norm_mean, ds.norm_std)

    train_x, train_y = window_arrays(windows(ds, "train", cfg.lookback, cfg.horizon,
                                             stride=cfg.stride))
    val_x, val_y = window_arrays(windows(ds, "val", cfg.lookback, cfg.horizon,
                                         stride=cfg.stride))
    tcfg = train_config(cfg)
    result = train(model, train_x, train_y, val_x, val_y, tcfg)

    write_history_csv(result.history, out_dir / HISTORY_NAME)
    tensors = model.params.state()
    tensors["meta.trained"] = np.array([1.0], dtype=np.float64)
    trainable = {n: t.requires_grad for n, t in model.params.items()}
    save_checkpoint(out_dir / CHECKPOINT_NAME, tensors, trainable)
    if result.attention_traces:
        np.savez(out_dir / TRACES_NAME,
                 **{f"epoch_{e}": a for e, a in result.attention_traces.items()})
    print(f"trained {len(result.history)} epochs "
          f"(best student epoch {result.best_epoch}, stopped at {result.stopped_epoch})")
    print(f"outputs in {out_dir}")
    return 0


def _load_run(run_dir: Path) -> tuple[JointModel, RunConfig]:
    cfg = load_config(run_dir / CONFIG_NAME)
    set_default_dtype(np.float32 if cfg.precision == "f32" else np.float64)
    state = load_checkpoint(run_dir / CHECKPOINT_NAME)
    ds = build_dataset(cfg)
    model = build_model(model_spec(cfg, ds.channels), cfg.seed)
    model.params.load_state({n: a for n, a in state.items()
                             if not n.startswith(("opt.", "meta."))})
    model.trained = bool(state.get("meta.trained", np.zeros(1))[0])
    return model, cfg


def cmd_export(args) -> int:
    run_dir = Path(args.run)
    model, _ = _load_run(run_dir)
    out = Path(args.out or (run_dir / "student.tllm"))
    info = export_student(model, out, merge=args.merge_lora)
    print(f"exported student artifact to {info.path}")
    print(f"parameters: total {info.total_params}, trainable in joint "
          f"{info.trainable_params}, removed teacher/guidance {info.removed_params}")
    return 0


class _RepeatLastStub:
    def predict(self, x: np.ndarray) -> np.ndarray:
        return repeat_last_forecast(x, self._horizon)


def cmd_eval(args) -> int:
    if args.protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {args.protocol!r}; valid: "
                          f"{', '.join(PROTOCOLS)}")
    horizons = [int(h) for h in args.horizons.split(",")] if args.horizons else [args.horizon]

    if args.protocol == "zero_shot":
        if not (args.source and args.target):
            raise ConfigError("zero_shot needs --source and --target datasets")
        source = make_splits(load_csv(_dataset_path(args.source)))
        target = make_splits(load_csv(_dataset_path(args.target)))
        binding = zeroshot_pair(source, target)
        eval_target = binding
    else:
        if not args.dataset:
            raise ConfigError("--dataset is required")
        ds = load_csv(_dataset_path(args.dataset), name=args.dataset_name)
        eval_target = make_splits(ds)

    artifacts = args.artifact or []
    if not artifacts and not args.stub:
        raise ConfigError("provide --artifact (repeatable) or --stub")
    if artifacts and len(artifacts) not in (0, len(horizons)):
        raise ConfigError(f"{len(artifacts)} artifacts for {len(horizons)} horizons; "
                          "counts must match")

    reports: list[MetricReport] = []
    for i, horizon in enumerate(horizons):
        if args.stub == "oracle":
            predictor, oracle = None, True
        elif args.stub == "repeat_last":
            predictor = _RepeatLastStub()
            predictor._horizon = horizon
            oracle = False
        else:
            predictor = load_student_artifact(artifacts[i])
            if predictor.meta["horizon"] != horizon:
                raise ConfigError(f"artifact {artifacts[i]} was trained for horizon "
                                  f"{predictor.meta['horizon']}, not {horizon}")
            oracle = False
        reports.append(evaluate(predictor, eval_target, args.protocol,
                                args.lookback, horizon,
                                seasonal_period=args.seasonal_period,
                                denormalize=not args.normalized_units,
                                oracle=oracle))

    final = average_reports(reports) if len(reports) > 1 else reports[0]
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(final.to_json() + "\n")
        (out_dir / "report.txt").write_text(final.to_text() + "\n")
        write_horizon_csv(reports, out_dir / "horizons.csv")
    print(final.to_text())
    return 0


def cmd_analyze(args) -> int:
    run_dir = Path(args.run)
    model, cfg = _load_run(run_dir)
    out_dir = Path(args.out or (run_dir / "analysis"))
    out_dir.mkdir(parents=True, exist_ok=True)

    ds = build_dataset(cfg)
    probe_x, _ = window_arrays(windows(ds, "test", cfg.lookback, cfg.horizon)[:64])

    traces_file = run_dir / TRACES_NAME
    if traces_file.exists():
        with np.load(traces_file) as z:
            snapshots = {int(k.split("_", 1)[1]): z[k] for k in z.files}
        trace = analysis.trace_from_snapshots(snapshots)
    else:
        trace = analysis.trace_attention(model, probe_x)

    analysis.emit_heatmap_data(analysis.cka_vs_reference(trace),
                               out_dir / "layer_cka.csv", col_ids=trace.epochs)
    analysis.emit_heatmap_data(analysis.group_attention_means(trace),
                               out_dir / "group_attention.csv", row_label="group",
                               col_ids=trace.epochs)
    # cross-branch view: each student layer's current attention vs the
    # input block's self-attention on the same batch
    input_attn = model.input_attention_snapshot(probe_x).mean(axis=0)
    current = model.attention_snapshot(probe_x)
    col = np.array([[analysis.cka(current[l].mean(axis=0), input_attn)]
                    for l in range(current.shape[0])])
    analysis.emit_heatmap_data(col, out_dir / "layer_input_cka.csv", col_label="now")
    print(f"analysis written to {out_dir}")
    return 0


def cmd_synth(args) -> int:
    from .data import synthesize

    ds = synthesize(args.kind, args.seed if args.seed is not None else 0,
                    args.length, args.channels, amplitude=args.amplitude,
                    period=args.period, slope=args.slope, noise=args.noise)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join(f"ch{i}" for i in range(ds.channels))
    rows = "\n".join(",".join(f"{v:.10g}" for v in row) for row in ds.values)
    out.write_text(header + "\n" + rows + "\n")
    print(f"wrote {ds.length} rows x {ds.channels} channels to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tllm",
                                description="train/evaluate/export the "
                                            "teacher-supervised forecaster")
    sub = p.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("train", help="train from a run config")
    _common_flags(pt)
    pt.add_argument("--out", help="output directory (default: config output_dir)")
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("export", help="write the student-only inference artifact")
    _common_flags(pe)
    pe.add_argument("--run", required=True, help="training run directory")
    pe.add_argument("--out", help="artifact path (default: <run>/student.tllm)")
    pe.add_argument("--merge-lora", action="store_true",
                    help="fold adapters into the frozen matrices")
    pe.set_defaults(func=cmd_export)

    pv = sub.add_parser("eval", help="score an artifact on a dataset")
    _common_flags(pv)
    pv.add_argument("--artifact", action="append", help="exported artifact (repeatable, "
                                                        "one per horizon)")
    pv.add_argument("--stub", choices=("oracle", "repeat_last"),
                    help="replace the model with a reference stub")
    pv.add_argument("--dataset", help="CSV path")
    pv.add_argument("--dataset-name", help="benchmark name for split sizing")
    pv.add_argument("--protocol", default="long_term")
    pv.add_argument("--lookback", type=int, default=96)
    pv.add_argument("--horizon", type=int, default=96)
    pv.add_argument("--horizons", help="comma-separated list to average, e.g. 96,192,336,720")
    pv.add_argument("--seasonal-period", type=int, default=1)
    pv.add_argument("--normalized-units", action="store_true",
                    help="score in normalized units instead of original units")
    pv.add_argument("--source", help="zero-shot source dataset CSV")
    pv.add_argument("--target", help="zero-shot target dataset CSV")
    pv.add_argument("--out", help="directory for report files")
    pv.set_defaults(func=cmd_eval)

    pa = sub.add_parser("analyze", help="attention similarity tables for a run")
    _common_flags(pa)
    pa.add_argument("--run", required=True)
    pa.add_argument("--out", help="output directory (default: <run>/analysis)")
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    _common_flags(ps)
    ps.add_argument("--kind", default="sine_trend", choices=("sine_trend", "noise", "step"))
    ps.add_argument("--length", type=int, default=1600)
    ps.add_argument("--channels", type=int, default=2)
    ps.add_argument("--amplitude", type=float, default=1.0)
    ps.add_argument("--period", type=float, default=24.0)
    ps.add_argument("--slope", type=float, default=0.0)
    ps.add_argument("--noise", type=float, default=0.0)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except TllmError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
