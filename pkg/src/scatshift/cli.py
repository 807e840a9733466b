"""Command-line front door for the shift-detection pipeline.

Subcommands: features, shift-test, embed, ood, eval, adapt-report.

Exit codes for shift-test: 0 = null retained, 2 = shift detected (reject),
1 = error. Every artifact embeds the resolved configuration and seed;
identical inputs + config + seed produce byte-identical outputs regardless
of --threads.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import corpus_io, embedding, mmd, scattering, shift_eval
from .corpus_io import CorpusLoadError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECT = 2


class CliError(RuntimeError):
    pass


def _log(args, event: str, **fields):
    if getattr(args, "json_logs", False):
        print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)
    else:
        detail = " ".join(f"{k}={v}" for k, v in fields.items())
        print(f"[scatshift] {event} {detail}".rstrip(), file=sys.stderr)


def _artifact(prefix: Path, ext: str) -> Path:
    return Path(str(prefix) + ext)


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_feature_matrix(path: Path, matrix: np.ndarray, labels: list[str]):
    lines = [",".join(labels)]
    lines += [",".join(_fmt(v) for v in row) for row in matrix]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_feature_matrix(path: str | Path) -> np.ndarray:
    """Parse a feature CSV written by `features`; errors carry file:line."""
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1:  # header
                width = len(line.split(","))
                continue
            parts = line.split(",")
            if width is not None and len(parts) != width:
                raise CliError(f"{path}:{lineno}: expected {width} columns, found {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise CliError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise CliError(f"{path}: no data rows")
    return np.asarray(rows)


def _resolved_config(args, keys: list[str]) -> dict:
    cfg = {k: getattr(args, k) for k in keys}
    cfg["seed"] = args.seed
    return cfg


# ---------------------------------------------------------------- features


def cmd_features(args) -> int:
    manifest = corpus_io.read_manifest(args.manifest)
    config = scattering.ScatteringConfig(J=args.J, L=args.L, max_order=args.max_order, side=args.side)
    bank = scattering.build_filter_bank(config)

    def one(entry):
        try:
            raw = corpus_io.load_image(entry.path)
            img = corpus_io.prepare_image(raw, side=args.side, jpeg95=args.jpeg95, quantize8=args.quantize8)
            return scattering.scattering_transform(img, bank).values, None
        except CorpusLoadError as exc:
            return None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(one, manifest.entries))

    rows, errors = [], []
    for (values, err) in results:
        if err is None:
            rows.append(values)
        else:
            errors.append(err)
    for err in errors:
        _log(args, "image_error", error=err)
    if errors and not args.skip_bad:
        raise CliError(f"{len(errors)} image(s) failed; rerun with --skip-bad to drop them")
    if not rows:
        raise CliError("no images could be processed")

    out = Path(args.out_prefix)
    labels = scattering.path_labels(args.J, args.L, args.max_order)
    write_feature_matrix(_artifact(out, ".features.csv"), np.stack(rows), labels)
    sidecar = {
        "config": _resolved_config(args, ["J", "L", "max_order", "side", "jpeg95", "quantize8", "skip_bad"]),
        "filter_params": bank.params,
        "manifest": str(args.manifest),
        "corpus_id": manifest.corpus_id,
        "paths": [e.path for e in manifest.entries],
        "skipped": errors,
        "feature_count": scattering.feature_count(args.J, args.L, args.max_order),
    }
    _write_json(_artifact(out, ".json"), sidecar)
    _log(args, "features_written", rows=len(rows), columns=len(labels))
    return EXIT_OK


# -------------------------------------------------------------- shift-test


def _kernel_config(args) -> mmd.KernelConfig:
    gamma = args.gamma if args.gamma == "auto" else float(args.gamma)
    return mmd.KernelConfig(gamma=gamma, standardize=not args.no_standardize)


def cmd_shift_test(args) -> int:
    xs = read_feature_matrix(args.features_a)
    ys = read_feature_matrix(args.features_b)
    cfg = _kernel_config(args)
    result = mmd.btest(xs, ys, cfg, alpha=args.alpha, B=args.B, seed=args.seed)
    dists = mmd.statistic_distributions(xs, ys, cfg, B=result.block_size, draws=args.draws, seed=args.seed)

    out = Path(args.out_prefix)
    payload = result.to_dict()
    payload["config"] = _resolved_config(args, ["gamma", "alpha", "B", "draws", "no_standardize"])
    _write_json(_artifact(out, ".btest.json"), payload)
    lines = ["hypothesis,value"]
    lines += [f"h0,{_fmt(v)}" for v in dists["h0_samples"]]
    lines += [f"h1,{_fmt(v)}" for v in dists["h1_samples"]]
    _artifact(out, ".h0h1.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _log(args, "btest_done", p_value=result.p_value, reject=result.reject)
    return EXIT_REJECT if result.reject else EXIT_OK


# ------------------------------------------------------------------- embed


def _fit_and_project(args):
    xs = read_feature_matrix(args.features_a)
    ys = read_feature_matrix(args.features_b)
    model = embedding.fit_embedding(np.vstack([xs, ys]), corpus_ids=("a", "b"))
    return model, embedding.project(model, xs), embedding.project(model, ys)


def cmd_embed(args) -> int:
    model, pa, pb = _fit_and_project(args)
    x_range = (args.range[0], args.range[1])
    y_range = (args.range[2], args.range[3])
    grid = embedding.estimate_density({"a": pa, "b": pb}, x_range=x_range, y_range=y_range, bins=args.bins)
    overlap = embedding.overlap_report(grid)

    out = Path(args.out_prefix)
    config = _resolved_config(args, ["bins", "range"])
    _write_json(_artifact(out, ".model.json"), {**model.to_dict(), "config": config})
    lines = ["corpus,ix,iy,count"]
    for corpus in sorted(grid.counts):
        c = grid.counts[corpus]
        for ix in range(args.bins):
            for iy in range(args.bins):
                lines.append(f"{corpus},{ix},{iy},{c[ix, iy]}")
    _artifact(out, ".density.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_json(
        _artifact(out, ".overlap.json"),
        {**overlap, "out_of_range": grid.out_of_range, "config": config},
    )
    _log(args, "embed_done", bhattacharyya=overlap["bhattacharyya"])
    return EXIT_OK


def cmd_ood(args) -> int:
    model, pa, pb = _fit_and_project(args)
    config = _resolved_config(args, ["bins", "range", "ood_rect", "ood_nonoverlap", "tau"])
    if args.ood_rect is not None:
        x0, x1, y0, y1 = args.ood_rect
        criterion = embedding.RectangleCriterion(x0, x1, y0, y1)
    elif args.ood_nonoverlap:
        x_range = (args.range[0], args.range[1])
        y_range = (args.range[2], args.range[3])
        grid = embedding.estimate_density({"a": pa, "b": pb}, x_range=x_range, y_range=y_range, bins=args.bins)
        criterion = embedding.NonOverlapCriterion(grid=grid, other_corpus="b", tau=args.tau)
    else:
        raise CliError("pass --ood-rect X0 X1 Y0 Y1 or --ood-nonoverlap")
    selection = embedding.select_ood(pa, criterion)
    if not selection.indices:
        _log(args, "ood_empty")
    out = Path(args.out_prefix)
    _write_json(
        _artifact(out, ".ood.json"),
        {"indices": list(selection.indices), "criterion": selection.criterion, "config": config},
    )
    _log(args, "ood_done", selected=len(selection.indices))
    return EXIT_OK


# -------------------------------------------------------------------- eval


def read_predictions(path: str | Path) -> list[shift_eval.PredictionRecord]:
    import csv

    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "score", "label"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise CliError(f"{path}: predictions CSV must have columns id,score,label")
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(
                    shift_eval.PredictionRecord(id=row["id"], score=float(row["score"]), label=int(row["label"]))
                )
            except (TypeError, ValueError) as exc:
                raise CliError(f"{path}:{lineno}: {exc}") from None
    if not records:
        raise CliError(f"{path}: no prediction rows")
    return records


_METRIC_NAMES = ["auc", "accuracy", "precision", "sensitivity", "specificity", "ppv", "npv"]


def cmd_eval(args) -> int:
    preds = read_predictions(args.predictions)
    config = _resolved_config(args, ["threshold", "keep"])
    reports = {"full": shift_eval.metrics_report(preds, threshold=args.threshold)}
    if args.keep < 1.0:
        kept = shift_eval.abstain_by_confidence(preds, args.keep)
        reports["abstained"] = shift_eval.metrics_report(
            kept, threshold=args.threshold, abstention_fraction=1.0 - args.keep
        )
    out = Path(args.out_prefix)
    _write_json(
        _artifact(out, ".metrics.json"),
        {"config": config, **{k: r.to_dict() for k, r in reports.items()}},
    )
    lines = ["metric," + ",".join(reports)]
    for name in _METRIC_NAMES:
        vals = [getattr(r, name) for r in reports.values()]
        lines.append(name + "," + ",".join("undefined" if v is None else _fmt(v) for v in vals))
    _artifact(out, ".metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _log(args, "eval_done", cohorts=list(reports))
    return EXIT_OK


def cmd_adapt_report(args) -> int:
    fs = read_feature_matrix(args.features_src)
    fa = read_feature_matrix(args.features_adapted)
    ft = read_feature_matrix(args.features_target)
    report = shift_eval.adaptation_report(
        fs,
        fa,
        ft,
        kernel_cfg=_kernel_config(args),
        x_range=(args.range[0], args.range[1]),
        y_range=(args.range[2], args.range[3]),
        bins=args.bins,
        alpha=args.alpha,
        B=args.B,
        seed=args.seed,
    )
    report["config"] = _resolved_config(args, ["gamma", "alpha", "B", "bins", "range", "no_standardize"])
    _write_json(_artifact(Path(args.out_prefix), ".adapt.json"), report)
    _log(args, "adapt_report_done", delta_statistic=report["delta"]["statistic"])
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scatshift", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="master seed; all stage RNG derives from it")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for per-image extraction")
    parser.add_argument("--json-logs", action="store_true", help="emit JSON log lines on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract scattering features from a manifest")
    p.add_argument("manifest")
    p.add_argument("out_prefix")
    p.add_argument("--J", type=int, default=4)
    p.add_argument("--L", type=int, default=8)
    p.add_argument("--max-order", dest="max_order", type=int, default=2, choices=(1, 2))
    p.add_argument("--side", type=int, default=256)
    p.add_argument("--jpeg95", action="store_true", help="emulate JPEG quality-95 storage")
    p.add_argument("--quantize8", action="store_true", help="truncate prepared images to 8-bit")
    p.add_argument("--skip-bad", action="store_true", help="drop unreadable images instead of failing")
    p.set_defaults(func=cmd_features)

    def add_kernel_flags(p):
        p.add_argument("--gamma", default="1.0", help="RBF scale, or 'auto' for the median heuristic")
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--B", type=int, default=None, help="block size (default round(sqrt(n)))")
        p.add_argument("--no-standardize", dest="no_standardize", action="store_true")

    p = sub.add_parser("shift-test", help="kernel two-sample B-test between two feature files")
    p.add_argument("features_a")
    p.add_argument("features_b")
    p.add_argument("out_prefix")
    add_kernel_flags(p)
    p.add_argument("--draws", type=int, default=200, help="resampling draws for H0/H1 distributions")
    p.set_defaults(func=cmd_shift_test)

    def add_grid_flags(p):
        p.add_argument("--bins", type=int, default=embedding.DEFAULT_BINS)
        p.add_argument(
            "--range",
            type=float,
            nargs=4,
            default=[-4.0, 4.0, -4.0, 4.0],
            metavar=("X0", "X1", "Y0", "Y1"),
        )

    p = sub.add_parser("embed", help="fit whitening+PCA, export densities and overlap")
    p.add_argument("features_a")
    p.add_argument("features_b")
    p.add_argument("out_prefix")
    add_grid_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("ood", help="select OOD samples of corpus A relative to corpus B")
    p.add_argument("features_a")
    p.add_argument("features_b")
    p.add_argument("out_prefix")
    add_grid_flags(p)
    p.add_argument("--ood-rect", dest="ood_rect", type=float, nargs=4, default=None, metavar=("X0", "X1", "Y0", "Y1"))
    p.add_argument("--ood-nonoverlap", dest="ood_nonoverlap", action="store_true")
    p.add_argument("--tau", type=int, default=0)
    p.set_defaults(func=cmd_ood)

    p = sub.add_parser("eval", help="abstention-aware classifier metrics from a predictions CSV")
    p.add_argument("predictions")
    p.add_argument("out_prefix")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--keep", type=float, default=1.0, help="fraction of most-confident predictions to keep")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("adapt-report", help="before/after adaptation shift report")
    p.add_argument("features_src")
    p.add_argument("features_adapted")
    p.add_argument("features_target")
    p.add_argument("out_prefix")
    add_kernel_flags(p)
    add_grid_flags(p)
    p.set_defaults(func=cmd_adapt_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, CorpusLoadError, ValueError) as exc:
        _log(args, "error", message=str(exc))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
