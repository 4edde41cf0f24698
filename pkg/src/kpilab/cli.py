"""Command line front end.

Every command that writes files also writes a manifest (config, seed, input
hashes) next to its outputs, so a run can be repeated byte-identically from
the manifest alone.  Exit codes: 0 success, 1 usage error, 2 data error with
a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .detect import SeasonalNaiveForecaster, detect_pipeline
from .evaluate import (
    DEFAULT_GRIDS,
    ExperimentConfig,
    bin_by_noise,
    confusion_matrix,
    grid_search,
    make_classifier,
    micro_f1,
    noise_bin,
    per_class_f1,
    report_to_csv_rows,
    run_sim_real,
    run_sim_sim,
)
from .labeling import apply_labels, run_service
from .preprocess import SeriesRejectedError, clean_gaps, estimate_noise_level
from .series import read_csv, write_csv
from .simulate import SimConfig, read_records, simulate, write_records
from .windows import read_windows_jsonl, write_windows_jsonl

__all__ = ["main"]

PORT_ENV_VAR = "KPILAB_PORT"
DEFAULT_PORT = 8765


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the CLI contract reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _load_config(path) -> dict:
    """Read a config file, unwrapping a previously written manifest."""
    data = _load_json(path)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    if "command" in data and "config" in data:
        return data["config"]
    return data


def _write_manifest(path, command: str, config, seed, inputs: dict, outputs) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items()},
        "outputs": sorted(Path(o).name for o in outputs),
    }
    _dump_json(manifest, path)


def _manifest_for(out_file) -> Path:
    out_file = Path(out_file)
    return out_file.with_name(out_file.stem + ".manifest.json")


def _read_series(path):
    series, gap_mask = read_csv(path)
    if gap_mask.any():
        raise ValueError(f"{path}: series has gaps; run `preprocess` first")
    return series


def _labeled_matrix(windows, path):
    unlabeled = sum(1 for w in windows if not w.labels)
    if unlabeled:
        raise ValueError(f"{path}: {unlabeled} windows have no label")
    X = np.vstack([w.values for w in windows])
    y = [w.labels[0] for w in windows]
    return X, y


def cmd_simulate(args) -> int:
    raw = _load_config(args.config)
    if args.seed is not None:
        raw = {**raw, "seed": args.seed}
    if "proportions" in raw and isinstance(raw["proportions"], dict):
        raw["proportions"] = {k: float(v) for k, v in raw["proportions"].items()}
    if "strength_range" in raw:
        raw["strength_range"] = tuple(raw["strength_range"])
    try:
        cfg = SimConfig(**raw)
    except TypeError as exc:
        raise ValueError(f"{args.config}: {exc}")
    series, records = simulate(cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(series, out / "series.csv")
    write_records(records, out / "records.json")
    config_dict = {**raw, "proportions": cfg.proportions, "strength_range": list(cfg.strength_range)}
    _write_manifest(
        out / "manifest.json",
        "simulate",
        config_dict,
        cfg.seed,
        {"config": args.config},
        [out / "series.csv", out / "records.json"],
    )
    print(f"simulated {len(series)} samples, {len(records)} anomalies -> {out}")
    return 0


def cmd_detect(args) -> int:
    series = _read_series(args.series)
    records = read_records(args.records) if args.records else None
    forecaster = SeasonalNaiveForecaster(template=args.template)
    windows, score = detect_pipeline(
        series,
        forecaster=forecaster,
        m=args.m,
        folds=args.folds,
        records=records,
        series_id=Path(args.series).stem,
    )
    if len(series) >= 50:
        sigma = estimate_noise_level(series)
        windows = bin_by_noise(windows, source_sigma=sigma)
        print(f"estimated noise sigma {sigma:.6g} (bin {noise_bin(sigma)})", file=sys.stderr)
    write_windows_jsonl(windows, args.out)
    inputs = {"series": args.series}
    if args.records:
        inputs["records"] = args.records
    config = {
        "m": args.m,
        "folds": args.folds,
        "template": args.template,
    }
    _write_manifest(_manifest_for(args.out), "detect", config, None, inputs, [args.out])
    if score is not None:
        print(json.dumps(score.to_dict(), sort_keys=True))
    else:
        print(f"wrote {len(windows)} windows -> {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    series, gap_mask = read_csv(args.series)
    cleaned, report = clean_gaps(series, gap_mask)
    write_csv(cleaned, args.out)
    _dump_json(report.to_dict(), args.report)
    _write_manifest(
        _manifest_for(args.out),
        "preprocess",
        {},
        None,
        {"series": args.series},
        [args.out, args.report],
    )
    print(f"filled {report.n_missing} missing samples -> {args.out}")
    return 0


def cmd_noise(args) -> int:
    series = _read_series(args.series)
    print(f"{estimate_noise_level(series):.8g}")
    return 0


def cmd_classify(args) -> int:
    train = read_windows_jsonl(args.train)
    test = read_windows_jsonl(args.test)
    X_train, y_train = _labeled_matrix(train, args.train)
    X_test, y_test = _labeled_matrix(test, args.test)
    if X_train.shape[1] != X_test.shape[1]:
        raise ValueError("train and test windows have different lengths")
    grid = _load_json(args.grid) if args.grid else DEFAULT_GRIDS[args.model]
    search = grid_search(X_train, y_train, args.model, grid, cv_folds=args.cv, seed=args.seed or 0)
    model = make_classifier(args.model, search.best_params)
    model.fit(X_train, y_train)
    pred = model.predict(X_test)
    labels = sorted(set(y_train) | set(y_test))
    cm = confusion_matrix(y_test, list(pred), labels)
    report = {
        "model": args.model,
        "best_params": search.best_params,
        "cv_table": search.table,
        "micro_f1": micro_f1(cm),
        "per_class_f1": dict(zip(labels, per_class_f1(cm).tolist())),
        "confusion": cm.tolist(),
        "confusion_labels": labels,
        "n_train": len(y_train),
        "n_test": len(y_test),
    }
    _dump_json(report, args.out)
    inputs = {"train": args.train, "test": args.test}
    if args.grid:
        inputs["grid"] = args.grid
    config = {"model": args.model, "grid": grid, "cv": args.cv}
    _write_manifest(_manifest_for(args.out), "classify", config, args.seed or 0, inputs, [args.out])
    print(f"micro F1 {report['micro_f1']:.4f} ({args.model}) -> {args.out}")
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_config(args.config))
    if args.seed is not None:
        cfg.seed = args.seed
    inputs = {"config": args.config}
    if cfg.mode == "sim-real":
        if not args.real_windows or not args.labels:
            raise _UsageError("sim-real experiments need --real-windows and --labels")
        real = apply_labels(read_windows_jsonl(args.real_windows), _load_json(args.labels))
        report = run_sim_real(cfg, real)
        inputs["real_windows"] = args.real_windows
        inputs["labels"] = args.labels
    else:
        report = run_sim_sim(cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(report, out / "report.json")
    (out / "report.csv").write_text("\n".join(report_to_csv_rows(report)) + "\n")
    _write_manifest(
        out / "manifest.json",
        "experiment",
        cfg.to_dict(),
        cfg.seed,
        inputs,
        [out / "report.json", out / "report.csv"],
    )
    for sigma, score in sorted(report.get("detection", {}).items(), key=lambda kv: float(kv[0])):
        print(f"detection sigma={sigma}: f1={score['f1']:.4f}")
    for bin_name in sorted(report.get("bins", {})):
        entry = report["bins"][bin_name]
        for family in sorted(k for k in entry if isinstance(entry[k], dict) and "micro_f1" in entry[k]):
            print(f"{bin_name} {family}: micro F1 {entry[family]['micro_f1']:.4f}")
    return 0


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report = _load_json(args.report)
    bins = sorted(report.get("bins", {}))
    detection = report.get("detection", {})
    if not bins and not detection:
        raise ValueError(f"{args.report}: report has neither bins nor detection scores")

    with plt.rc_context({"svg.hashsalt": "kpilab"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        positions = {name: i for i, name in enumerate(bins)}
        families = sorted(
            {
                family
                for name in bins
                for family, entry in report["bins"][name].items()
                if isinstance(entry, dict) and "micro_f1" in entry
            }
        )
        for family in families:
            xs = [
                positions[name]
                for name in bins
                if isinstance(report["bins"][name].get(family), dict)
                and "micro_f1" in report["bins"][name][family]
            ]
            ys = [report["bins"][bins[i]][family]["micro_f1"] for i in xs]
            ax.plot(xs, ys, marker="o", label=f"{family} micro F1")
        if detection and bins:
            # detection runs are keyed by sigma; fold them onto the bin axis
            per_bin: dict[str, list[float]] = {}
            for sigma, score in detection.items():
                per_bin.setdefault(noise_bin(float(sigma)), []).append(score["f1"])
            xs = [positions[b] for b in bins if b in per_bin]
            ys = [float(np.mean(per_bin[bins[i]])) for i in xs]
            ax.plot(xs, ys, marker="s", linestyle="--", label="detection F1")
        elif detection:
            sigmas = sorted(detection, key=float)
            ax.plot(
                [float(s) for s in sigmas],
                [detection[s]["f1"] for s in sigmas],
                marker="s",
                linestyle="--",
                label="detection F1",
            )
            ax.set_xlabel("noise sigma")
        if bins:
            ax.set_xticks(range(len(bins)))
            ax.set_xticklabels(bins)
            ax.set_xlabel("noise bin")
        ax.set_ylabel("F1")
        ax.set_ylim(0.0, 1.05)
        ax.legend(loc="lower left")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(args.out, format="svg", metadata={"Date": None})
        plt.close(fig)
    print(f"wrote {args.out}")
    return 0


def cmd_label(args) -> int:
    windows = read_windows_jsonl(args.windows)
    port = args.port
    if port is None:
        port = int(os.environ.get(PORT_ENV_VAR, DEFAULT_PORT))
    if args.ui is not None and not Path(args.ui).is_dir():
        raise ValueError(f"{args.ui}: UI directory does not exist")
    _write_manifest(
        _manifest_for(args.out),
        "label",
        {"port": port, "host": args.host},
        None,
        {"windows": args.windows},
        [args.out],
    )
    print(f"labeling {len(windows)} windows at http://{args.host}:{port} -> {args.out}", flush=True)
    run_service(windows, args.out, port=port, host=args.host, static_dir=args.ui)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="kpilab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("simulate", help="simulate a KPI series with labeled anomalies")
    p.add_argument("--config", required=True, help="SimConfig JSON (or a simulate manifest)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="run the forecast-residual detector over a series")
    p.add_argument("--series", required=True, help="input series CSV")
    p.add_argument("--records", default=None, help="ground-truth records JSON for scoring")
    p.add_argument("--out", required=True, help="output windows JSONL")
    p.add_argument("--m", type=int, default=24, help="half window size in samples")
    p.add_argument("--folds", type=int, default=10, help="expanding validation folds")
    p.add_argument("--template", choices=("median", "last"), default="median")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("preprocess", help="fill gaps or reject a series")
    p.add_argument("--series", required=True)
    p.add_argument("--out", required=True, help="cleaned series CSV")
    p.add_argument("--report", required=True, help="cleaning report JSON")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("noise", help="print the estimated noise level of a series")
    p.add_argument("--series", required=True)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("classify", help="grid-search a classifier on labeled windows")
    p.add_argument("--train", required=True, help="labeled windows JSONL")
    p.add_argument("--test", required=True, help="labeled windows JSONL")
    p.add_argument("--model", choices=("stsf", "knn"), required=True)
    p.add_argument("--grid", default=None, help="hyperparameter grid JSON")
    p.add_argument("--cv", type=int, default=5, help="cross-validation folds")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("experiment", help="run a SIM-SIM or SIM-REAL experiment")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON (or an experiment manifest)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--real-windows", default=None, help="labeled real windows JSONL (sim-real)")
    p.add_argument("--labels", default=None, help="labels JSON from the labeling service (sim-real)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="render an F1-vs-noise figure from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True, help="output SVG")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("label", help="serve the labeling API (and UI) for a windows file")
    p.add_argument("--windows", required=True, help="windows JSONL to label")
    p.add_argument("--out", required=True, help="labels JSON store")
    p.add_argument("--port", type=int, default=None, help=f"default ${PORT_ENV_VAR} or {DEFAULT_PORT}")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", default=None, help="built UI directory to serve at /")
    p.set_defaults(func=cmd_label)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"kpilab {args.command}: {exc}", file=sys.stderr)
        return 1
    except SeriesRejectedError as exc:
        payload = {
            "error": "series_rejected",
            "message": str(exc),
            "missing_fraction": exc.missing_fraction,
            "max_fraction": exc.max_fraction,
        }
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 2
    except (ValueError, TypeError, KeyError, OSError) as exc:
        kind = "missing_file" if isinstance(exc, FileNotFoundError) else "data_error"
        payload = {"error": kind, "message": str(exc)}
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
