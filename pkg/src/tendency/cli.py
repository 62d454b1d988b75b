"""Command-line entry point: ``tendency <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error and 2 when an input file
is missing or malformed.  Every subcommand writes ``manifest.txt`` into its
output directory with the flags used and the SHA-256 of each artifact.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from tendency import __version__

log = logging.getLogger("tendency")

FLOAT_FMT = "%.17g"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# ---------------------------------------------------------------------------
# helpers

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load(path: str, reader):
    """Run `reader(path)`, turning any read or parse failure into a DataError naming the path."""
    if not os.path.exists(path):
        raise DataError(f"{path}: no such file")
    try:
        return reader(path)
    except (OSError, ValueError, KeyError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        msg = str(exc).strip("'\"")
        raise DataError(msg if str(path) in msg else f"{path}: {msg}") from None


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, lineterminator="\n", float_format=FLOAT_FMT)


def _write_lines(items, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(f"{item}\n")


def _write_manifest(out: Path, args: argparse.Namespace, inputs: list[str]) -> None:
    lines = [f"tendency_version={__version__}", f"command={args.command}"]
    for key in sorted(vars(args)):
        if key in ("command", "handler"):
            continue
        lines.append(f"flag.{key}={getattr(args, key)}")
    for i, path in enumerate(inputs):
        lines.append(f"input.{i}.path={path}")
        lines.append(f"input.{i}.sha256={_sha256(Path(path))}")
    for path in sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.txt"):
        rel = path.relative_to(out).as_posix()
        lines.append(f"output.{rel}.sha256={_sha256(path)}")
    _write_lines(lines, out / "manifest.txt")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _derived_bookings(args):
    from tendency.bookings import preprocess, read_bookings
    from tendency.features import derive

    raw = _load(args.input, read_bookings)
    kept, report = preprocess(raw)
    if len(kept) == 0:
        raise DataError(f"{args.input}: no bookings left after preprocessing")
    return derive(kept, args.tz_offset_min, args.precision), report


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> list[str]:
    from tendency import generators
    from tendency.matrix import write_labels, write_matrix

    out = _outdir(args)
    if args.kind == "example1":
        d, rl, cl = generators.gen_example1(args.seed)
        write_matrix(d, out / "matrix.txt")
        write_labels(rl, out / "row_labels.txt")
        write_labels(cl, out / "col_labels.txt")
    elif args.kind in ("example2", "example2-scaled"):
        fn = generators.gen_example2 if args.kind == "example2" else generators.gen_example2_scaled
        d, blocks = fn(args.seed)
        write_matrix(d, out / "matrix.txt")
        rl = np.zeros(d.shape[0], dtype=np.int64)
        cl = np.zeros(d.shape[1], dtype=np.int64)
        for b, blk in enumerate(blocks, start=1):
            rl[blk.rows] = b
            cl[blk.cols] = b
        write_labels(rl, out / "row_labels.txt")
        write_labels(cl, out / "col_labels.txt")
    elif args.kind == "gaussian2d":
        pts, labels = generators.gen_gaussian2d(args.count or 5000, args.clusters, args.seed)
        write_matrix(pts, out / "points.txt")
        write_labels(labels, out / "labels.txt")
    else:
        _gen_bookings(args, out)
    return []


def _gen_bookings(args, out: Path) -> None:
    import dataclasses

    from tendency.bookings import BookingConfig, gen_synthetic_bookings, preprocess, write_bookings
    from tendency.features import derive

    cfg = BookingConfig(tz_offset=args.tz_offset_min, precision=args.precision)
    if args.count:
        cfg = dataclasses.replace(cfg, n_bookings=args.count)
    df, truth = gen_synthetic_bookings(cfg, args.seed)
    write_bookings(df, out / "bookings.csv")
    _write_csv(pd.DataFrame({"driver_id": list(truth.skill), "skill": list(truth.skill.values())}),
               out / "truth_skill.csv")
    _write_csv(pd.DataFrame({"geohash": list(truth.congestion), "congestion": list(truth.congestion.values())}),
               out / "truth_congestion.csv")

    # sample scoring requests: every driver at its most used location, for the busiest pickup grids
    d = derive(preprocess(df)[0], cfg.tz_offset, cfg.precision)
    home = (d.groupby(["driver_id", "driverGh"]).size().rename("n").reset_index()
             .sort_values(["driver_id", "n", "driverGh"], ascending=[True, False, True], kind="mergesort")
             .groupby("driver_id").first())
    busiest = d["pickupGh"].value_counts().sort_index().sort_values(ascending=False, kind="mergesort").index[:3]
    rows = [(drv, home.loc[drv, "driverGh"], gh, "weekday", 4) for gh in busiest for drv in home.index]
    _write_csv(pd.DataFrame(rows, columns=["driver_id", "driverGh", "pickupGh", "dow", "hourgroup"]),
               out / "requests.csv")


def cmd_ivat(args) -> list[str]:
    from tendency.imaging import render_grayscale
    from tendency.matrix import check_dissimilarity, pairwise_dissimilarity, read_matrix, write_labels, write_matrix
    from tendency.mmrs import mmrs_sample
    from tendency.vat import cut_clusters, ivat_reordered, suggest_k

    data = _load(args.input, read_matrix)
    out = _outdir(args)
    if args.features:
        picked = np.arange(data.shape[0])
        if args.m and args.m < data.shape[0]:
            picked = mmrs_sample(data, min(args.kprime, args.m), args.m, args.seed).sample
        d = pairwise_dissimilarity(data[picked])
    else:
        try:
            d = check_dissimilarity(data, atol=1e-9)
        except ValueError as exc:
            raise DataError(f"{args.input}: {exc}") from None
        picked = np.arange(d.shape[0])

    ordering, rdi = ivat_reordered(d)
    k = args.krows or (suggest_k(ordering) if ordering.n > 1 else 1)
    if not 1 <= k <= ordering.n:
        raise UsageError(f"--krows must lie in [1, {ordering.n}], got {k}")
    labels = cut_clusters(ordering, k)

    _write_csv(pd.DataFrame({
        "position": np.arange(ordering.n),
        "object": picked[ordering.permutation],
        "insertion_distance": ordering.insertion_distances,
        "parent_position": ordering.parents,
        "cluster": labels[ordering.permutation],
    }), out / "ordering.csv")
    write_matrix(rdi, out / "ivat.txt")
    write_labels(labels, out / "labels.txt")
    write_labels(picked[ordering.permutation], out / "ordering.txt")
    if args.features:
        write_labels(picked, out / "sample.txt")
    upscale = max(1, 256 // max(ordering.n, 1))
    render_grayscale(d[np.ix_(ordering.permutation, ordering.permutation)], upscale).save(out / "vat.pgm")
    render_grayscale(rdi, upscale).save(out / "ivat.pgm")
    _write_lines([f"k={k}", f"suggested_k={suggest_k(ordering) if ordering.n > 1 else 1}"], out / "summary.txt")
    return [args.input]


def cmd_scoivat(args) -> list[str]:
    from tendency.coclust import sco_ivat
    from tendency.imaging import render_grayscale, render_performance
    from tendency.matrix import SENTINEL, read_matrix, write_labels, write_matrix

    d = _load(args.input, read_matrix)
    out = _outdir(args)
    big_m, big_n = d.shape
    m = args.m or min(big_m, 105)
    n = args.n or min(big_n, 105)
    has_sentinel = bool(np.any(d == SENTINEL))
    metric = args.metric
    try:
        res = sco_ivat(d, m, n, args.kprime, args.krows, args.kcols, args.seed,
                       metric=metric, extend=args.extend, tau=args.tau)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    write_labels(res.row_perm, out / "row_perm.txt")
    write_labels(res.col_perm, out / "col_perm.txt")
    write_labels(res.row_labels, out / "row_labels.txt")
    write_labels(res.col_labels, out / "col_labels.txt")
    write_matrix(res.reordered, out / "reordered.txt")
    _write_csv(pd.DataFrame([{
        "row_cluster": b.row_cluster, "col_cluster": b.col_cluster,
        "rows": f"{b.rows[0]}:{b.rows[1]}", "cols": f"{b.cols[0]}:{b.cols[1]}",
        "block_mean": b.block_mean, "global_mean": b.global_mean, "flagged": int(b.flagged),
    } for b in res.blocks], columns=["row_cluster", "col_cluster", "rows", "cols", "block_mean", "global_mean",
                                     "flagged"]), out / "blocks.csv")
    if args.extend:
        write_labels(res.all_row_labels, out / "all_row_labels.txt")
        write_labels(res.all_col_labels, out / "all_col_labels.txt")

    render_grayscale(res.row_rdi, max(1, 256 // m)).save(out / "row_ivat.pgm")
    render_grayscale(res.col_rdi, max(1, 256 // n)).save(out / "col_ivat.pgm")
    scale = max(1, 256 // max(m, n))
    if has_sentinel:
        render_performance(res.reordered, scale).save(out / "rri.ppm")
    else:
        render_grayscale(res.reordered, scale).save(out / "rri.pgm")
    flagged = sum(b.flagged for b in res.blocks)
    _write_lines([f"m={m}", f"n={n}", f"metric={metric}", f"k_rows={int(res.row_labels.max()) + 1}",
                  f"k_cols={int(res.col_labels.max()) + 1}", f"flagged_blocks={flagged}"], out / "summary.txt")
    return [args.input]


def cmd_aggregate(args) -> list[str]:
    from tendency.features import (
        GROUPINGS, aggregate_all, booking_histograms, build_performance_matrix, high_speed_late_grids,
    )
    from tendency.imaging import render_performance
    from tendency.matrix import write_matrix
    from tendency.plotting import plot_booking_histograms

    d, report = _derived_bookings(args)
    out = _outdir(args)
    _write_csv(pd.DataFrame({"reason": list(report), "count": list(report.values())}), out / "preprocess.csv")

    tdir = out / "tables"
    tdir.mkdir(exist_ok=True)
    for name, table in aggregate_all(d).items():
        _write_csv(table, tdir / f"{name}.csv")

    matrix, drivers, grids = build_performance_matrix(d, grid="pickupGh" if args.grid == "pickupGh" else "driverGh")
    write_matrix(matrix, out / "performance.txt")
    _write_lines(drivers, out / "performance_rows.txt")
    _write_lines(grids, out / "performance_cols.txt")
    render_performance(matrix, max(1, 256 // max(matrix.shape))).save(out / "performance.ppm")

    days, groups = booking_histograms(d)
    _write_csv(pd.DataFrame({
        "histogram": ["day"] * 7 + ["hourgroup"] * 8,
        "bucket": [str(i) for i in range(7)] + [str(i) for i in range(8)],
        "count": np.concatenate([days, groups]),
    }), out / "histograms.csv")
    plot_booking_histograms(days, groups, out / "histograms.png")
    _write_lines(high_speed_late_grids(d, args.speed_min, args.min_late), out / "highway_grids.txt")
    log.info("aggregated %d bookings into %d tables", len(d), len(GROUPINGS))
    return [args.input]


def cmd_train(args) -> list[str]:
    from tendency.plotting import plot_confusion
    from tendency.prediction import evaluate, prepare_splits, save_model, train_logistic

    d, _ = _derived_bookings(args)
    out = _outdir(args)
    try:
        train, test, val, _ = prepare_splits(d, args.seed, args.aggregate_source)
    except ValueError as exc:
        raise DataError(f"{args.input}: {exc}") from None
    model = train_logistic(train)
    save_model(model, out / "model.txt")
    rows = []
    for split, ds in (("train", train), ("test", test), ("validation", val)):
        ev = evaluate(model, ds)
        rows.append({"split": split, "tn": ev.tn, "fp": ev.fp, "fn": ev.fn, "tp": ev.tp, "accuracy": ev.accuracy})
        if split == "validation":
            plot_confusion(ev.tn, ev.fp, ev.fn, ev.tp, out / "confusion_validation.png", "validation")
    _write_csv(pd.DataFrame(rows), out / "evaluation.csv")
    return [args.input]


def cmd_mrmr(args) -> list[str]:
    from tendency.plotting import plot_mrmr
    from tendency.prediction import mrmr_rank, prepare_splits

    d, _ = _derived_bookings(args)
    out = _outdir(args)
    try:
        train, _, _, _ = prepare_splits(d, args.seed, args.aggregate_source)
    except ValueError as exc:
        raise DataError(f"{args.input}: {exc}") from None
    top_k = min(args.top_k, len(train.feature_names))
    ranking = mrmr_rank(train, top_k, args.bins)
    _write_csv(pd.DataFrame({"rank": np.arange(1, len(ranking) + 1), "feature": [r[0] for r in ranking],
                             "score": [r[1] for r in ranking]}), out / "mrmr.csv")
    plot_mrmr(ranking, out / "mrmr.png")
    return [args.input]


def _read_tables(directory: str) -> dict[str, pd.DataFrame]:
    from tendency.features import GROUPINGS

    tables = {}
    for name, keys in GROUPINGS.items():
        path = os.path.join(directory, f"{name}.csv")
        dtypes = {k: str for k in keys if k != "hourgroup"}
        tables[name] = _load(path, lambda p: pd.read_csv(p, dtype=dtypes, keep_default_na=False))
    return tables


def cmd_score(args) -> list[str]:
    from tendency.prediction import load_model
    from tendency.scoring import ScoreConfig, read_requests, score_batch

    reqs = _load(args.input, read_requests)
    if not reqs:
        raise DataError(f"{args.input}: no requests")
    tables = _read_tables(args.tables)
    inputs = [args.input]
    model = None
    if args.mechanism == "logistic":
        if not args.model:
            raise UsageError("--mechanism logistic needs --model")
        model = _load(args.model, load_model)
        inputs.append(args.model)
    cfg = ScoreConfig(min_bookings=args.min_bookings, smoothing=args.smoothing)
    try:
        scores = score_batch(reqs, args.mechanism, tables, cfg=cfg, model=model)
    except KeyError as exc:
        raise DataError(f"{args.tables}: {str(exc).strip(chr(34))}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    out = _outdir(args)
    _write_csv(scores, out / "scores.csv")
    return inputs


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tendency", description="Cluster-tendency assessment and pickup-performance analytics.")
    parser.add_argument("--version", action="version", version=f"tendency {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(p, needs_in=True):
        if needs_in:
            p.add_argument("--in", dest="input", required=True, help="input file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None, help="cap on native worker threads")
        return p

    def bookings_flags(p):
        p.add_argument("--tz-offset-min", type=int, default=480)
        p.add_argument("--precision", type=int, default=6)

    p = common(sub.add_parser("gen", help="generate synthetic data"), needs_in=False)
    p.add_argument("--kind", required=True, choices=["example1", "example2", "example2-scaled", "gaussian2d", "bookings"])
    p.add_argument("--count", type=int, default=None, help="points (gaussian2d) or bookings (bookings)")
    p.add_argument("--clusters", type=int, default=5, help="cluster count for gaussian2d")
    bookings_flags(p)
    p.set_defaults(handler=cmd_gen)

    p = common(sub.add_parser("ivat", help="VAT/iVAT of a square dissimilarity matrix"))
    p.add_argument("--features", action="store_true", help="input rows are feature vectors, not dissimilarities")
    p.add_argument("--m", type=int, default=None, help="MMRS sample size (with --features)")
    p.add_argument("--kprime", type=int, default=10)
    p.add_argument("--krows", type=int, default=None, help="clusters to cut (default: suggested)")
    p.set_defaults(handler=cmd_ivat)

    p = common(sub.add_parser("scoivat", help="sco-iVAT of a rectangular relational matrix"))
    p.add_argument("--m", type=int, default=None, help="row sample size")
    p.add_argument("--n", type=int, default=None, help="column sample size")
    p.add_argument("--kprime", type=int, default=10)
    p.add_argument("--krows", type=int, default=None)
    p.add_argument("--kcols", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--metric", choices=["euclidean", "masked"], default="euclidean",
                   help="masked ignores -1 sentinel cells in row/column distances")
    p.add_argument("--extend", action="store_true", help="label every row and column")
    p.set_defaults(handler=cmd_scoivat)

    p = common(sub.add_parser("aggregate", help="aggregated tables, performance matrix and histograms"))
    bookings_flags(p)
    p.add_argument("--grid", choices=["driverGh", "pickupGh"], default="driverGh")
    p.add_argument("--speed-min", type=float, default=35.0)
    p.add_argument("--min-late", type=int, default=100)
    p.set_defaults(handler=cmd_aggregate)

    for name, handler, text in (("train", cmd_train, "train the timely-pickup classifier"),
                                ("mrmr", cmd_mrmr, "mRmR predictor ranking")):
        p = common(sub.add_parser(name, help=text))
        bookings_flags(p)
        p.add_argument("--aggregate-source", choices=["train_only", "all"], default="train_only")
        if name == "mrmr":
            p.add_argument("--top-k", type=int, default=15)
            p.add_argument("--bins", type=int, default=10)
        p.set_defaults(handler=handler)

    p = common(sub.add_parser("score", help="score and rank candidate drivers"))
    p.add_argument("--tables", required=True, help="directory of aggregated tables")
    p.add_argument("--mechanism", choices=["ratio", "logistic"], default="ratio")
    p.add_argument("--model", default=None)
    p.add_argument("--min-bookings", type=int, default=5)
    p.add_argument("--smoothing", choices=["laplace", "none"], default="laplace")
    p.set_defaults(handler=cmd_score)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("TENDENCY_LOG", "error").lower()
    logging.basicConfig(
        level={"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            inputs = args.handler(args)
        _write_manifest(Path(args.out), args, inputs)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except DataError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
