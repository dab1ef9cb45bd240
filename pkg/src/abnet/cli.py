"""Command-line pipeline: synthesize data, estimate networks, classify, report.

Commands
--------
synth      generate a seeded synthetic dataset (scans + manifest)
estimate   estimate one network per chunk of every scan in a manifest
classify   run the cross-validated decoding experiment over a lambda grid
report     merge saved experiment reports into a lambda-by-estimator table

Exit codes: 0 success, 1 runtime failure, 2 usage error. Re-running any
command with the same configuration and seed reproduces its output files
byte for byte, at any thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .classify import CVReport, SVMConfig, load_report, run_experiment, save_report
from .estimators import ESTIMATOR_KINDS, EstimatorConfig, estimate_network, save_adjacency
from .synth import SynthConfig, build_synthetic_dataset
from .timeseries import interpolate_temporal, load_manifest, load_scan, partition_into_chunks

PRESETS = {
    "hcp": {"window": 40, "alpha": 1e-5, "epochs": 100, "n_insert": 0},
    "tol": {"window": 5, "alpha": 1e-6, "epochs": 10, "n_insert": 4},
}
REPORT_ESTIMATOR_ORDER = ("pearson", "ridge", "dabn", "uabn")
DEFAULT_LAMBDA_GRID = "0,32,64,128,256,512"


class UsageError(ValueError):
    """Invalid configuration; maps to exit code 2."""


def _resolve(value, preset: str | None, key: str, fallback):
    if value is not None:
        return value
    if preset is not None:
        return PRESETS[preset][key]
    return fallback


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abnet",
        description="Windowed connectivity networks from region time series, plus SVM decoding.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tasks", type=int, default=2)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--regions", type=int, default=15)
    p.add_argument("--samples", type=int, default=120, help="time points per scan")
    p.add_argument("--noise", type=float, default=0.1, help="innovation std")
    p.add_argument("--density", type=float, default=0.2, help="edge density in (0, 1]")
    p.add_argument("--symmetric", action="store_true", help="symmetric ground-truth networks")
    p.add_argument(
        "--overlapping-supports",
        action="store_true",
        help="let task networks share edge slots (default: disjoint)",
    )
    p.add_argument("--seed", type=int, default=0)

    for name in ("estimate", "classify"):
        p = sub.add_parser(
            name,
            help="estimate per-chunk networks" if name == "estimate" else "run CV decoding experiments",
        )
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--kind", choices=ESTIMATOR_KINDS, default="dabn")
        p.add_argument("--alpha", type=float, default=None, help="learning rate")
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--window", type=int, default=None, help="chunk window length")
        p.add_argument("--n-insert", type=int, default=None, help="interpolated samples per gap")
        p.add_argument("--no-zscore", action="store_true", help="skip per-chunk row standardization")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: cores)")
        if name == "estimate":
            p.add_argument("--lambda", dest="lam", type=float, default=0.0)
        else:
            p.add_argument(
                "--lambdas",
                default=DEFAULT_LAMBDA_GRID,
                help=f"comma-separated regularization grid (default {DEFAULT_LAMBDA_GRID})",
            )
            p.add_argument("--protocol", choices=("within", "across"), default="across")
            p.add_argument("--k", type=int, default=3, help="folds")
            p.add_argument("--C", type=float, default=1.0, help="SVM margin penalty")
            p.add_argument("--svm-epochs", type=int, default=200)
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="merge experiment reports into a table")
    p.add_argument("files", nargs="+", help="CVReport JSON files")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--out", default=None, help="write the table here instead of stdout")
    return parser


def cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        regions=args.regions,
        subjects=args.subjects,
        tasks=args.tasks,
        samples_per_scan=args.samples,
        noise_sigma=args.noise,
        density=args.density,
        seed=args.seed,
        symmetric=args.symmetric,
        disjoint_task_supports=not args.overlapping_supports,
    )
    manifest = build_synthetic_dataset(config, args.out)
    print(
        f"wrote {len(manifest.entries)} scans "
        f"({args.tasks} tasks x {args.subjects} subjects, M={args.regions}, "
        f"N={args.samples}) under {args.out}"
    )
    return 0


def _estimator_config(args: argparse.Namespace, lam: float) -> EstimatorConfig:
    return EstimatorConfig(
        kind=args.kind,
        lam=lam,
        alpha=_resolve(args.alpha, args.preset, "alpha", 1e-5),
        epochs=_resolve(args.epochs, args.preset, "epochs", 100),
        zscore=not args.no_zscore,
    )


def cmd_estimate(args: argparse.Namespace) -> int:
    window = _resolve(args.window, args.preset, "window", 40)
    n_insert = _resolve(args.n_insert, args.preset, "n_insert", 0)
    try:
        config = _estimator_config(args, args.lam)
    except ValueError as e:
        raise UsageError(str(e)) from None
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    chunks = []
    for entry in manifest.entries:
        scan = load_scan(entry, manifest.region_count)
        if n_insert > 0:
            scan = interpolate_temporal(scan, n_insert)
        chunks.extend(partition_into_chunks(scan, window))

    def job(chunk):
        name = (
            f"{chunk.subject_id}__{chunk.session_id}__{chunk.task_label}"
            f"__chunk{chunk.chunk_index:04d}__{config.kind}.csv"
        )
        adj, _ = estimate_network(chunk, config)
        return name, adj

    threads = args.threads or os.cpu_count() or 1
    results, failures = [], []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [(chunk, pool.submit(job, chunk)) for chunk in chunks]
        for chunk, fut in futures:
            try:
                results.append(fut.result())
            except Exception as e:
                failures.append(
                    f"{chunk.subject_id}/{chunk.task_label}/{chunk.session_id}"
                    f"#{chunk.chunk_index}: {e}"
                )

    for name, adj in sorted(results, key=lambda r: r[0]):
        save_adjacency(adj, out_dir / name)
    for line in failures:
        print(f"estimate failed: {line}", file=sys.stderr)
    print(f"estimated {len(results)} networks from {len(manifest.entries)} scans into {out_dir}")
    return 1 if failures else 0


def cmd_classify(args: argparse.Namespace) -> int:
    window = _resolve(args.window, args.preset, "window", 40)
    n_insert = _resolve(args.n_insert, args.preset, "n_insert", 0)
    try:
        lambdas = [float(v) for v in args.lambdas.split(",") if v.strip() != ""]
    except ValueError as e:
        raise UsageError(f"bad --lambdas value: {e}") from None
    if not lambdas:
        raise UsageError("--lambdas is empty")
    try:
        configs = [_estimator_config(args, lam) for lam in lambdas]
    except ValueError as e:
        raise UsageError(str(e)) from None
    protocol = "within_subject" if args.protocol == "within" else "across_subject"
    svm = SVMConfig(C=args.C, epochs=args.svm_epochs, seed=args.seed)
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def job(config):
        return run_experiment(
            manifest, config, window, protocol, svm, k=args.k, seed=args.seed, n_insert=n_insert
        )

    threads = args.threads or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=threads) as pool:
        reports = list(pool.map(job, configs))

    print("estimator,lambda,protocol,mean,std")
    for lam, report in zip(lambdas, reports):
        path = out_dir / f"report__{args.kind}__lambda{lam:g}__{args.protocol}.json"
        save_report(report, path)
        print(report.csv_row())
    return 0


def _format_grid(reports: list[CVReport], fmt: str) -> str:
    protocols = {r.protocol for r in reports}
    if len(protocols) > 1:
        raise ValueError(f"cannot merge reports from different protocols: {sorted(protocols)}")
    cells: dict[tuple[str, float], CVReport] = {}
    for r in reports:
        key = (str(r.config.get("estimator", "")), float(r.config.get("lambda", 0.0)))
        if key in cells:
            prev = cells[key]
            if prev.mean != r.mean or prev.std != r.std:
                raise ValueError(
                    f"conflicting duplicate cell for estimator={key[0]} lambda={key[1]:g}: "
                    f"mean {prev.mean} vs {r.mean}"
                )
            continue
        cells[key] = r
    estimators = [e for e in REPORT_ESTIMATOR_ORDER if any(k[0] == e for k in cells)]
    estimators += sorted({k[0] for k in cells} - set(estimators))
    lambdas = sorted({k[1] for k in cells})

    header = ["lambda"]
    for est in estimators:
        header += [f"{est} mean", f"{est} std"]
    rows = []
    for lam in lambdas:
        row = [f"{lam:g}"]
        for est in estimators:
            r = cells.get((est, lam))
            if r is None:
                row += ["-", "-"]
            else:
                row += [f"{r.mean:.4f}", f"{r.std:.4f}"]
        rows.append(row)

    if fmt == "csv":
        return "\n".join(",".join(r) for r in [header] + rows) + "\n"
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = [
        "| " + " | ".join(h.ljust(w) for h, w in zip(header, widths)) + " |",
        "|" + "|".join("-" * (w + 2) for w in widths) + "|",
    ]
    for r in rows:
        lines.append("| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |")
    return "\n".join(lines) + "\n"


def cmd_report(args: argparse.Namespace) -> int:
    reports = [load_report(f) for f in args.files]
    table = _format_grid(reports, args.format)
    if args.out:
        Path(args.out).write_text(table, newline="\n")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(table)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "synth": cmd_synth,
        "estimate": cmd_estimate,
        "classify": cmd_classify,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
