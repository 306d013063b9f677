"""Command-line entry points: run, sweep, ablate, synth, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plotting
from .config import ConfigError, dump_config, load_config, parse_overrides
from .detectors import DetectorError, builtin_arch_set, dump_arch_set, parse_arch_set
from .pool import default_capacity
from .pipeline import MODES, PipelineConfig, PipelineError, ablation_mode, run
from .stream import StreamError, load_stream, parse_generator_spec, save_stream

OUT_ENV = "POOLGRAPH_OUT"
SWEEP_PARAMS = ("theta_drift", "resolution", "alpha", "beta", "gamma", "batch_size")
ABLATION_MODES = ("full", "single_community", "centrality_only", "pseudo_only",
                  "average_ensemble")

BATCH_KEYS = ("t", "start", "n", "d_cent", "d_comm", "D", "drifted", "forced", "update",
              "pruned", "added", "pool_size", "n_communities", "partition_sizes",
              "community_sizes", "representatives", "h_scores", "alarm", "n_flagged",
              "flagged", "elapsed_ms")
SUMMARY_KEYS = ("auc", "adt_ms", "drift_batches", "major_updates", "scored_steps",
                "n_batches", "alarms", "final_pool", "config", "stream", "n_points")
SCORES_COLUMNS = ("index", "t", "score", "prediction", "label")
SWEEP_COLUMNS = ("value", "auc", "adt_ms")
ABLATION_COLUMNS = ("mode", "auc", "adt_ms", "mean_communities", "mean_representatives",
                    "major_updates")
DRIFT_COLUMNS = ("t", "d_cent", "d_comm", "D", "drifted", "update", "pool_size",
                 "n_communities", "n_representatives")

log = logging.getLogger("poolgraph")


class UsageError(ValueError):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _read_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _auc_text(auc) -> str:
    return "n/a" if auc is None else f"{auc:.4f}"


def _float_or_none(text: str):
    return float(text) if text not in ("", None) else None


# --------------------------------------------------------------------------
# shared setup


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "poolgraph-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> PipelineConfig:
    overrides = parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_config(args.config, overrides)
    if getattr(args, "mode", None):
        cfg = ablation_mode(cfg, args.mode)
    return cfg


def _stream(args):
    if args.input:
        columns = args.columns.split(",") if args.columns else None
        return load_stream(args.input, columns, args.label_column)
    return parse_generator_spec(args.synth)


def _arch_set(args, seed: int):
    if args.arch:
        path = Path(args.arch)
        if not path.is_file():
            raise FileNotFoundError(f"no such architecture file: {path}")
        return parse_arch_set(path.read_text(encoding="utf-8"))
    return builtin_arch_set(seed)


def _parse_values(text: str, param: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError("--values is empty")
    if param == "batch_size":
        if any(v != int(v) for v in vals):
            raise UsageError("batch_size values must be integers")
        vals = [int(v) for v in vals]
    return vals


# --------------------------------------------------------------------------
# commands


def write_run_outputs(report, stream, out: Path) -> dict:
    with (out / "batches.jsonl").open("w", encoding="utf-8") as fh:
        for b in report.batches:
            fh.write(json.dumps(b.record()) + "\n")
    summary = report.summary()
    summary["stream"] = stream.name
    summary["n_points"] = len(stream)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    rows = []
    for b in report.batches:
        labels = None if stream.labels is None else stream.labels[b.start:b.start + len(b.s_final)]
        for k, (s, p) in enumerate(zip(b.s_final, b.predictions)):
            rows.append((b.start + k, b.batch_index, float(s), int(p),
                         None if labels is None else int(labels[k])))
    _write_csv(out / "scores.csv", SCORES_COLUMNS, rows)
    (out / "config.ini").write_text(dump_config(report.config), encoding="utf-8")
    return summary


def cmd_run(args) -> int:
    cfg = _config(args)
    stream = _stream(args)
    arch = _arch_set(args, cfg.seed)
    out = _out_dir(args)
    (out / "architectures.txt").write_text(dump_arch_set(arch), encoding="utf-8")
    report = run(stream, arch, cfg)
    write_run_outputs(report, stream, out)
    print(f"auc={_auc_text(report.auc)} adt_ms={report.adt_ms:.4f} majors={len(report.major_updates)} out={out}")
    return 0


def cmd_sweep(args) -> int:
    params = [p.strip() for p in args.param.split(",")]
    for p in params:
        if p not in SWEEP_PARAMS:
            raise UsageError(f"cannot sweep {p!r}; choose from {SWEEP_PARAMS}")
    if len(params) > 2:
        raise UsageError("sweep takes one parameter, or two for a grid")
    cfg = _config(args)
    stream = _stream(args)
    arch = _arch_set(args, cfg.seed)
    out = _out_dir(args)
    values = _parse_values(args.values, params[0])

    def one(**changes):
        rep = run(stream, arch, replace(cfg, **changes))
        return rep.auc, rep.adt_ms

    if len(params) == 1:
        rows = [(v, *one(**{params[0]: v})) for v in values]
        path = _write_csv(out / f"sweep_{params[0]}.csv", SWEEP_COLUMNS, rows)
        for v, a, t in rows:
            print(f"{params[0]}={v:g} auc={_auc_text(a)} adt_ms={t:.4f}")
        print(f"wrote {path}")
        return 0

    cols = _parse_values(args.values2, params[1]) if args.values2 else list(values)
    auc = np.full((len(values), len(cols)), np.nan)
    adt = np.zeros_like(auc)
    for i, v in enumerate(values):
        for j, w in enumerate(cols):
            a, t = one(**{params[0]: v, params[1]: w})
            auc[i, j] = np.nan if a is None else a
            adt[i, j] = t
    head = [f"{params[0]}\\{params[1]}"] + [_fmt(c) for c in cols]
    stem = f"grid_{params[0]}_{params[1]}"
    _write_csv(out / f"{stem}.csv", head, [[v, *row] for v, row in zip(values, auc)])
    _write_csv(out / f"{stem}_adt.csv", head, [[v, *row] for v, row in zip(values, adt)])
    print(f"wrote {out / stem}.csv")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    stream = _stream(args)
    arch = _arch_set(args, cfg.seed)
    out = _out_dir(args)
    rows = []
    for mode in ABLATION_MODES:
        rep = run(stream, arch, ablation_mode(cfg, mode))
        rows.append((mode, rep.auc, rep.adt_ms,
                     float(np.mean([len(b.partition_sizes) for b in rep.batches])),
                     float(np.mean([len(b.representatives) for b in rep.batches])),
                     len(rep.major_updates)))
        print(f"{mode:18s} auc={_auc_text(rep.auc)} adt_ms={rep.adt_ms:.4f}")
    path = _write_csv(out / "ablation.csv", ABLATION_COLUMNS, rows)
    print(f"wrote {path}")
    return 0


def cmd_synth(args) -> int:
    stream = parse_generator_spec(args.synth)
    target = Path(args.out or os.environ.get(OUT_ENV) or ".")
    if target.suffix.lower() != ".csv":
        target.mkdir(parents=True, exist_ok=True)
        target = target / f"{stream.name}.csv"
    else:
        target.parent.mkdir(parents=True, exist_ok=True)
    save_stream(stream, target)
    print(f"wrote {target} ({len(stream)} points, {int(stream.labels.sum())} anomalies)")
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    written = []
    batches = out / "batches.jsonl"
    if batches.is_file():
        records = [json.loads(ln) for ln in batches.read_text(encoding="utf-8").splitlines() if ln]
        summary_path = out / "summary.json"
        summary = json.loads(summary_path.read_text()) if summary_path.is_file() else {}
        config = summary.get("config") or {}
        theta = config.get("theta_drift", PipelineConfig.theta_drift)
        capacity = config.get("capacity") or None
        arch_file = out / "architectures.txt"
        if capacity is None and arch_file.is_file():
            capacity = default_capacity(len(parse_arch_set(arch_file.read_text())))
        rows = [(r["t"], r["d_cent"], r["d_comm"], r["D"], r["drifted"], r["update"],
                 r["pool_size"], len(r["community_sizes"]), len(r["representatives"]))
                for r in records]
        written.append(_write_csv(out / "drift.csv", DRIFT_COLUMNS, rows))
        written.append(plotting.plot_drift(records, theta, out / "drift.png"))
        written.append(plotting.plot_pool(records, capacity, out / "pool.png"))
    scores = out / "scores.csv"
    if scores.is_file():
        rows = _read_csv(scores)
        labels = None if rows and rows[0]["label"] == "" else [int(r["label"]) for r in rows]
        written.append(plotting.plot_scores([int(r["index"]) for r in rows],
                                            [float(r["score"]) for r in rows], labels,
                                            [int(r["prediction"]) for r in rows],
                                            out / "scores.png"))
    for path in sorted(out.glob("sweep_*.csv")):
        rows = _read_csv(path)
        param = path.stem[len("sweep_"):]
        written.append(plotting.plot_sweep(param, [float(r["value"]) for r in rows],
                                           [_float_or_none(r["auc"]) for r in rows],
                                           [float(r["adt_ms"]) for r in rows],
                                           path.with_suffix(".png")))
    for path in sorted(out.glob("grid_*.csv")):
        if path.stem.endswith("_adt"):
            continue
        with path.open(newline="", encoding="utf-8") as fh:
            table = list(csv.reader(fh))
        row_param, col_param = table[0][0].split("\\")
        cols = [float(c) for c in table[0][1:]]
        rows = [float(r[0]) for r in table[1:]]
        matrix = [[_float_or_none(c) if c else np.nan for c in r[1:]] for r in table[1:]]
        written.append(plotting.plot_heatmap(row_param, col_param, rows, cols, matrix,
                                             path.with_suffix(".png")))
    ablation = out / "ablation.csv"
    if ablation.is_file():
        rows = _read_csv(ablation)
        written.append(plotting.plot_ablation([r["mode"] for r in rows],
                                              [_float_or_none(r["auc"]) for r in rows],
                                              [float(r["adt_ms"]) for r in rows],
                                              out / "ablation.png"))
    if not written:
        raise UsageError(f"{out}: nothing to report (run, sweep or ablate first)")
    for p in written:
        print(f"wrote {p}")
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poolgraph",
        description="Streaming anomaly detection with a graph-structured model pool.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        p.add_argument("--config", help="config file (sectioned key = value lines)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config field; repeatable")
        p.add_argument("--seed", type=int, help="run seed (overrides config)")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./poolgraph-out)")
        p.add_argument("--arch", help="architecture set file, one 'family key=value ...' per line")
        p.add_argument("--columns", help="comma-separated value columns of --input")
        p.add_argument("--label-column", default="label", help="label column of --input")
        src = p.add_mutually_exclusive_group(required=needs_input)
        src.add_argument("--input", help="CSV stream with a header row")
        src.add_argument("--synth", help="generator spec, e.g. sinusoid:length=20000,seed=1")

    p = sub.add_parser("run", help="run detection on one stream")
    common(p)
    p.add_argument("--mode", choices=MODES, help="ablation mode (default full)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="one run per parameter value")
    common(p)
    p.add_argument("--param", required=True,
                   help=f"one of {', '.join(SWEEP_PARAMS)}; two comma-separated names make a grid")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--values2", help="values of the second grid parameter (default --values)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="compare ablation modes on one stream")
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write a synthetic stream to CSV")
    p.add_argument("--synth", required=True, help="generator spec")
    p.add_argument("--out", help="target .csv file or directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="tables and PNG figures from an output directory")
    p.add_argument("--out", help="directory holding run, sweep or ablate outputs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, StreamError, DetectorError, PipelineError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
