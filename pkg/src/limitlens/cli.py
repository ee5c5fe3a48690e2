"""Command-line interface and pipeline orchestration.

Subcommands: ingest, hist, fit, daily, simulate, solve-limit, did,
threads, curves, correlate, report. Results go to files or stdout,
diagnostics to stderr. Exit codes: 0 success, 1 partial (some days or
shards failed), 2 fatal.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from . import __version__
from .analytics import (
    DailySeries, bootstrap_ci, category_curves, count_paginations,
    daily_series, did_estimate, enforced_limit, estimate_threads,
    load_lexicon, panel_from_store, rolling_mean, spearman,
)
from .charcount import extract_display_text, resolve_counting_config
from .cramsim import SimConfig, simulate
from .histstore import HistStore
from .ingest import (
    CountingSchedule, FilterConfig, Skip, default_filters, expand_inputs,
    filter_record, ingest_paths, iter_shard_lines, load_filter_config,
    parse_record,
)
from .lengthmodel import FitError, FitResult, analyze_histogram, solve_limit
from .report import (
    read_series_csv, render_series_svg, series_csv_text, standard_meta,
    write_json, write_series_csv,
)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2


class FatalError(Exception):
    pass


def _parse_day(value: str) -> date:
    try:
        return date.fromisoformat(value)
    except ValueError as exc:
        raise FatalError(f"bad date {value!r}: {exc}") from None


def _load_filters(path) -> FilterConfig:
    if path is None:
        return default_filters()
    try:
        return load_filter_config(path)
    except (OSError, ValueError) as exc:
        raise FatalError(f"cannot read filter config {path}: {exc}") from None


def _load_store(path) -> HistStore:
    try:
        return HistStore.load(path)
    except (OSError, ValueError) as exc:
        raise FatalError(f"cannot read store {path}: {exc}") from None


def _langs_arg(args, filters: FilterConfig):
    if args.langs:
        return sorted({part for chunk in args.langs for part in chunk.split(",") if part})
    return sorted(filters.treated_languages)


def _print_json(payload: dict, meta: dict):
    doc = {"meta": dict(sorted(meta.items())), **payload}
    print(json.dumps(doc, indent=2, sort_keys=True))


# --- ingest ----------------------------------------------------------

@dataclass
class RunConfig:
    """Everything one pipeline run needs; hashed into output metadata."""

    inputs: list
    store_path: str
    counting: str = "era"          # era | built-in name | config file path
    filter_config: str | None = None
    out_dir: str | None = None
    seed: int = 0
    workers: int = 1
    daily_quantities: list = field(default_factory=list)
    daily_devices: tuple = ("web", "mobile")

    def describe(self) -> dict:
        return {
            "counting": self.counting,
            "filter_config": self.filter_config or "builtin",
            "daily_quantities": list(self.daily_quantities),
            "daily_devices": list(self.daily_devices),
        }


def _schedule_for(counting: str, filters: FilterConfig) -> CountingSchedule:
    if counting == "era":
        return CountingSchedule.era(filters.switch_day)
    try:
        return CountingSchedule.fixed(resolve_counting_config(counting))
    except ValueError as exc:
        raise FatalError(str(exc)) from None


def run_pipeline(config: RunConfig):
    """ingest -> store -> requested analyses; returns (exit code, artifacts)."""
    filters = _load_filters(config.filter_config)
    schedule = _schedule_for(config.counting, filters)
    try:
        expand_inputs(config.inputs)
    except FileNotFoundError as exc:
        raise FatalError(str(exc)) from None

    store, summary = ingest_paths(
        config.inputs, filters, schedule, workers=config.workers,
        progress=lambda res: print(
            f"ingested {res.path}: {res.n_lines} lines, {res.n_kept} kept"
            + (f" [FAILED: {res.error}]" if res.error else ""),
            file=sys.stderr))

    meta = standard_meta(seed=config.seed, config=config.describe())
    store.meta.update(meta)
    store_path = Path(config.store_path)
    store_path.parent.mkdir(parents=True, exist_ok=True)
    store.save(store_path)
    artifacts = [store_path]

    summary_path = store_path.with_name(store_path.name + ".summary.json")
    write_json({"summary": summary.to_dict()}, summary_path, meta)
    artifacts.append(summary_path)
    for reason, count in sorted(summary.skips.items()):
        print(f"skipped ({reason}): {count}", file=sys.stderr)
    for reason, count in sorted(summary.drops.items()):
        print(f"dropped ({reason}): {count}", file=sys.stderr)
    print(f"kept {summary.n_kept} of {summary.n_lines} lines "
          f"across {summary.n_shards} shards", file=sys.stderr)

    partial = bool(summary.corrupt_shards)
    out_dir = Path(config.out_dir) if config.out_dir else store_path.parent
    langs = sorted(filters.treated_languages)
    for quantity in config.daily_quantities:
        for device in config.daily_devices:
            series = daily_series(store, quantity, device=device, langs=langs,
                                  switch_day=filters.switch_day)
            if any(reason.startswith("fit_error") for _, reason in series.gaps):
                partial = True
            out_path = out_dir / f"daily_{quantity}_{device}.csv"
            out_dir.mkdir(parents=True, exist_ok=True)
            write_series_csv(series, out_path, meta, rolling=rolling_mean(series))
            artifacts.append(out_path)

    return (EXIT_PARTIAL if partial else EXIT_OK), artifacts


def cmd_ingest(args) -> int:
    config = RunConfig(
        inputs=args.input,
        store_path=args.out,
        counting=args.counting,
        filter_config=args.config,
        out_dir=args.out_dir,
        seed=args.seed,
        workers=args.workers,
        daily_quantities=args.daily or [],
    )
    code, artifacts = run_pipeline(config)
    for artifact in artifacts:
        print(f"wrote {artifact}", file=sys.stderr)
    return code


# --- hist ------------------------------------------------------------

def cmd_hist(args) -> int:
    store = _load_store(args.store)
    day_range = None
    if args.day_from or args.day_to:
        day_range = (_parse_day(args.day_from) if args.day_from else date.min,
                     _parse_day(args.day_to) if args.day_to else date.max)
    langs = None
    if args.langs:
        langs = {part for chunk in args.langs for part in chunk.split(",") if part}
    devices = [args.device] if args.device else None
    h = store.query(day_range=day_range, langs=langs, devices=devices)
    out = io.StringIO()
    for key in sorted(store.meta):
        out.write(f"# {key}: {store.meta[key]}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["length", "count"])
    for length in range(1, h.max_len + 1):
        if h.counts[length]:
            writer.writerow([length, int(h.counts[length])])
    sys.stdout.write(out.getvalue())
    return EXIT_OK


# --- fit / solve-limit -----------------------------------------------

def _fit_from_store(args, filters: FilterConfig):
    store = _load_store(args.store)
    day = _parse_day(args.day)
    langs = _langs_arg(args, filters)
    h = store.query(day_range=(day, day), langs=langs,
                    devices=[args.device] if args.device else None)
    if h.total == 0:
        raise FatalError(f"no data for {day} (device={args.device}, langs={langs})")
    limit = args.limit or enforced_limit(day, filters.switch_day)
    estimate = analyze_histogram(h, limit, lo=args.fit_lo, window=args.window)
    return h, estimate


def cmd_fit(args) -> int:
    filters = _load_filters(args.config)
    try:
        h, estimate = _fit_from_store(args, filters)
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    fit = estimate.fit
    payload = {
        "fit": fit.to_dict(),
        "cramming": estimate.cramming,
        "runover_at_limit": estimate.runover_at(fit.limit),
        "n_tweets": h.total,
        "day": args.day,
        "device": args.device or "all",
    }
    _print_json(payload, standard_meta(config=vars(args)))
    return EXIT_OK


def cmd_solve_limit(args) -> int:
    if args.mu is not None and args.sigma is not None:
        fit = FitResult(mu=args.mu, sigma=args.sigma, amplitude=1.0,
                        threshold=0, fit_range=(0, 0), sse=0.0, limit=0)
    elif args.store and args.day:
        filters = _load_filters(args.config)
        try:
            _, estimate = _fit_from_store(args, filters)
        except FitError as exc:
            print(f"fit failed: {exc}", file=sys.stderr)
            return EXIT_PARTIAL
        fit = estimate.fit
    else:
        raise FatalError("need either --mu and --sigma, or --store and --day")
    try:
        exact = solve_limit(fit, args.target)
    except ValueError as exc:
        raise FatalError(str(exc)) from None
    payload = {
        "target_runover": args.target,
        "mu": fit.mu,
        "sigma": fit.sigma,
        "limit_exact": exact,
        "limit": math.ceil(exact),
    }
    _print_json(payload, standard_meta(config=vars(args)))
    return EXIT_OK


# --- daily -----------------------------------------------------------

def cmd_daily(args) -> int:
    filters = _load_filters(args.config)
    store = _load_store(args.store)
    langs = _langs_arg(args, filters)
    day_range = None
    if args.day_from or args.day_to:
        day_range = (_parse_day(args.day_from) if args.day_from else store.days()[0],
                     _parse_day(args.day_to) if args.day_to else store.days()[-1])
    series = daily_series(store, args.quantity, device=args.device, langs=langs,
                          switch_day=filters.switch_day, threshold=args.threshold,
                          at=args.at, target=args.target, fit_lo=args.fit_lo,
                          window=args.window, day_range=day_range)
    meta = standard_meta(seed=args.seed, config=vars(args))
    rolling = rolling_mean(series, window=args.rolling)
    if args.out:
        write_series_csv(series, args.out, meta, rolling=rolling)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(series_csv_text(series, meta, rolling=rolling))
    for day, reason in series.gaps:
        print(f"gap {day}: {reason}", file=sys.stderr)
    if args.ci and series.points:
        mean, lo, hi = bootstrap_ci(series.values(), seed=args.seed)
        _print_json({"quantity": args.quantity, "mean": mean,
                     "ci_lo": lo, "ci_hi": hi, "n_days": len(series.points)},
                    meta)
    fit_failures = sum(1 for _, r in series.gaps if r.startswith("fit_error"))
    return EXIT_PARTIAL if fit_failures else EXIT_OK


# --- simulate --------------------------------------------------------

def cmd_simulate(args) -> int:
    try:
        cfg = SimConfig(mu=args.mu, sigma=args.sigma, limit=args.limit,
                        p=args.p, q=args.q, alpha=args.alpha,
                        max_rounds=args.max_rounds, seed=args.seed,
                        jitter_alpha=args.jitter_alpha)
    except ValueError as exc:
        raise FatalError(str(exc)) from None
    result = simulate(cfg, args.n, workers=args.workers)
    meta = standard_meta(seed=args.seed, config=vars(args))
    if args.out:
        buf = io.StringIO()
        for key, value in sorted(meta.items()):
            buf.write(f"# {key}: {value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["length", "count"])
        counts = result.histogram.counts
        for length in range(1, len(counts)):
            if counts[length]:
                writer.writerow([length, int(counts[length])])
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
        print(f"wrote {args.out}", file=sys.stderr)
    _print_json({"result": result.to_dict()}, meta)
    return EXIT_OK


# --- did -------------------------------------------------------------

def cmd_did(args) -> int:
    filters = _load_filters(args.config)
    store = _load_store(args.store)
    pre = (_parse_day(args.pre_start), _parse_day(args.pre_end))
    post = (_parse_day(args.post_start), _parse_day(args.post_end))
    devices = [args.device] if args.device else None
    panel = panel_from_store(store, filters, pre_range=pre, post_range=post,
                             devices=devices)
    try:
        result = did_estimate(panel)
    except ValueError as exc:
        raise FatalError(f"cannot estimate: {exc}") from None
    meta = standard_meta(config=vars(args))
    payload = {"did": result.to_dict()}
    if args.out:
        write_json(payload, args.out, meta)
        print(f"wrote {args.out}", file=sys.stderr)
    _print_json(payload, meta)
    return EXIT_OK


# --- threads ---------------------------------------------------------

def _iter_kept_records(inputs, filters: FilterConfig):
    for shard in expand_inputs(inputs):
        for line in iter_shard_lines(shard):
            record = parse_record(line)
            if isinstance(record, Skip):
                continue
            verdict = filter_record(record, filters)
            if not hasattr(verdict, "device"):
                continue
            yield record


def cmd_threads(args) -> int:
    if args.counts:
        counts = {}
        with open(args.counts, "r", encoding="utf-8", newline="") as f:
            for row in csv.reader(f):
                if not row or row[0].startswith("#") or row[0] == "k":
                    continue
                counts[int(row[0])] = int(row[1])
    elif args.input:
        filters = _load_filters(args.config)
        try:
            counts = count_paginations(
                (extract_display_text(r) for r in _iter_kept_records(args.input, filters)),
                k_max=args.k_max)
        except FileNotFoundError as exc:
            raise FatalError(str(exc)) from None
    else:
        raise FatalError("need --input shards or a --counts CSV")
    estimate = estimate_threads(counts, epsilon=args.epsilon, k_max=args.k_max)
    meta = standard_meta(config=vars(args))
    payload = {"threads": estimate.to_dict()}
    if args.out:
        write_json(payload, args.out, meta)
        print(f"wrote {args.out}", file=sys.stderr)
    _print_json(payload, meta)
    return EXIT_OK


# --- curves ----------------------------------------------------------

def cmd_curves(args) -> int:
    filters = _load_filters(args.config)
    try:
        lexicon = load_lexicon(args.lexicon)
    except (OSError, ValueError) as exc:
        raise FatalError(f"cannot read lexicon {args.lexicon}: {exc}") from None
    try:
        counting = resolve_counting_config(args.counting)
    except ValueError as exc:
        raise FatalError(str(exc)) from None
    try:
        curves = category_curves(_iter_kept_records(args.input, filters),
                                 lexicon, counting)
    except FileNotFoundError as exc:
        raise FatalError(str(exc)) from None
    meta = standard_meta(config=vars(args))
    buf = io.StringIO()
    for key, value in sorted(meta.items()):
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["category", "length", "tweets", "matched", "freq", "enrichment"])
    for name in sorted(curves):
        curve = curves[name]
        for length in range(1, len(curve.freq)):
            if curve.tweets_per_length[length] == 0:
                continue
            writer.writerow([name, length,
                             int(curve.tweets_per_length[length]),
                             int(curve.matched_per_length[length]),
                             repr(float(curve.freq[length])),
                             repr(float(curve.enrichment[length]))])
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# --- correlate -------------------------------------------------------

def cmd_correlate(args) -> int:
    xs, ys, labels = [], [], []
    with open(args.pairs, "r", encoding="utf-8", newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].startswith("#"):
                continue
            try:
                if len(row) >= 3:
                    labels.append(row[0])
                    xs.append(float(row[1]))
                    ys.append(float(row[2]))
                else:
                    xs.append(float(row[0]))
                    ys.append(float(row[1]))
            except ValueError:
                continue  # header row
    try:
        rho, p = spearman(xs, ys, method=args.method)
    except ValueError as exc:
        raise FatalError(str(exc)) from None
    _print_json({"rho": rho, "p_value": p, "n": len(xs)},
                standard_meta(config=vars(args)))
    return EXIT_OK


# --- report ----------------------------------------------------------

def cmd_report(args) -> int:
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise FatalError(f"output directory not writable: {exc}") from None
    series_list = []
    for path in args.series:
        try:
            series_list.append((Path(path).stem, read_series_csv(path)))
        except (OSError, ValueError) as exc:
            raise FatalError(f"cannot read series {path}: {exc}") from None
    meta = standard_meta(config={"series": list(args.series)})
    written = []
    for fmt in args.format:
        if fmt == "csv":
            for stem, series in series_list:
                out = out_dir / f"{stem}.csv"
                write_series_csv(series, out, meta,
                                 rolling=rolling_mean(series))
                written.append(out)
        elif fmt == "json":
            for stem, series in series_list:
                out = out_dir / f"{stem}.json"
                write_json({"quantity": series.quantity,
                            "points": [[p.day.isoformat(), p.value]
                                       for p in series.points]},
                           out, meta)
                written.append(out)
        elif fmt == "svg":
            stem = (args.title or "report").replace(" ", "_")
            out = out_dir / f"{stem}.svg"
            render_series_svg([s for _, s in series_list], out,
                              title=args.title or "")
            written.append(out)
    for path in written:
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


# --- parser ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="limitlens",
        description="Length-limit impact analysis for tweet archives.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse archive shards into a histogram store")
    p.add_argument("--input", nargs="+", required=True,
                   help="shard files, directories or tar archives")
    p.add_argument("--out", required=True, help="store CSV path (.gz ok)")
    p.add_argument("--config", help="filter config file (default: built-in)")
    p.add_argument("--counting", default="era",
                   help="'era' (per-date rules), a built-in name, or a config file")
    p.add_argument("--out-dir", help="directory for analysis artifacts")
    p.add_argument("--daily", action="append",
                   choices=["cramming", "fraction_exceeding", "runover", "solved_limit"],
                   help="also emit this daily series (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("hist", help="query the histogram store")
    hist_sub = p.add_subparsers(dest="hist_command", required=True)
    q = hist_sub.add_parser("query", help="merged histogram as CSV on stdout")
    q.add_argument("--store", required=True)
    q.add_argument("--from", dest="day_from")
    q.add_argument("--to", dest="day_to")
    q.add_argument("--langs", action="append")
    q.add_argument("--device", choices=["web", "mobile"])
    q.set_defaults(func=cmd_hist)

    p = sub.add_parser("fit", help="fit the length model for one day")
    p.add_argument("--store", required=True)
    p.add_argument("--day", required=True)
    p.add_argument("--device", choices=["web", "mobile"])
    p.add_argument("--langs", action="append")
    p.add_argument("--config", help="filter config file")
    p.add_argument("--limit", type=int, help="override the enforced limit")
    p.add_argument("--fit-lo", type=int, default=5)
    p.add_argument("--window", type=int, default=5)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("daily", help="daily estimate series")
    p.add_argument("--store", required=True)
    p.add_argument("--quantity", required=True,
                   choices=["cramming", "fraction_exceeding", "runover", "solved_limit"])
    p.add_argument("--device", choices=["web", "mobile"])
    p.add_argument("--langs", action="append")
    p.add_argument("--config", help="filter config file")
    p.add_argument("--from", dest="day_from")
    p.add_argument("--to", dest="day_to")
    p.add_argument("--threshold", type=int, default=140,
                   help="cutoff for fraction_exceeding")
    p.add_argument("--at", type=int, default=280, help="run-over evaluation point")
    p.add_argument("--target", type=float, default=0.05,
                   help="target run-over for solved_limit")
    p.add_argument("--fit-lo", type=int, default=5)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--rolling", type=int, default=10)
    p.add_argument("--ci", action="store_true",
                   help="print a bootstrap CI of the series mean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="series CSV path (default: stdout)")
    p.set_defaults(func=cmd_daily)

    p = sub.add_parser("simulate", help="run the generative cramming simulator")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--limit", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rounds", type=int, default=20)
    p.add_argument("--jitter-alpha", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="emitted-length histogram CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve-limit", help="characters needed for a target run-over")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--store")
    p.add_argument("--day")
    p.add_argument("--device", choices=["web", "mobile"])
    p.add_argument("--langs", action="append")
    p.add_argument("--config", help="filter config file")
    p.add_argument("--limit", type=int, help="override the enforced limit")
    p.add_argument("--fit-lo", type=int, default=5)
    p.add_argument("--window", type=int, default=5)
    p.set_defaults(func=cmd_solve_limit)

    p = sub.add_parser("did", help="difference-in-differences on log mean length")
    p.add_argument("--store", required=True,
                   help="store counted with one fixed counting config")
    p.add_argument("--config", help="filter config file")
    p.add_argument("--device", choices=["web", "mobile"])
    p.add_argument("--pre-start", default="2017-01-01")
    p.add_argument("--pre-end", default="2017-10-31")
    p.add_argument("--post-start", default="2019-01-01")
    p.add_argument("--post-end", default="2019-10-31")
    p.add_argument("--out", help="result JSON path")
    p.set_defaults(func=cmd_did)

    p = sub.add_parser("threads", help="estimate thread totals from pagination")
    p.add_argument("--input", nargs="+", help="archive shards to scan")
    p.add_argument("--counts", help="CSV of k,n_k instead of scanning")
    p.add_argument("--config", help="filter config file")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--k-max", type=int, default=50)
    p.add_argument("--out", help="result JSON path")
    p.set_defaults(func=cmd_threads)

    p = sub.add_parser("curves", help="length-conditioned lexicon category curves")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--counting", default="post2017")
    p.add_argument("--config", help="filter config file")
    p.add_argument("--out", help="curves CSV path (default: stdout)")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("correlate", help="Spearman rank correlation of paired values")
    p.add_argument("--pairs", required=True,
                   help="CSV of x,y or label,x,y rows")
    p.add_argument("--method", choices=["t", "exact"], default="t")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("report", help="re-emit series as CSV/JSON/SVG")
    p.add_argument("--series", nargs="+", required=True, help="series CSV files")
    p.add_argument("--format", nargs="+", choices=["csv", "json", "svg"],
                   default=["csv"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--title", help="SVG chart title")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FatalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
