"""``spendlens`` command line.

Exit codes: 0 success, 2 input/IO error, 3 analysis infeasible, 4 bad flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .errors import AnalysisError, InputError
from .genmodels import GenFit, compare_models, fit_ac, fit_dgbd, genfit_to_dict
from .ingest import default_profile, ingest_directory, load_profile, write_reports_csv
from .ledger import Direction, KeyKind, Ledger, aggregate, read_ledger, write_ledger
from .rankfit import (
    RankSeries, SegmentedFit, davies_test, fit_power, rank_series, segmented_to_dict, select_segments,
)
from .svg import Overlay, PlotKind, PlotSpec, render_histogram, render_rank, write_svg
from .synth import Family, SynthSpec, generate, load_spec, write_series_csv
from .transparency import (
    DEFAULT_THRESHOLD_MINOR, amount_histogram, excess_indices, indices_to_json, write_histogram_csv,
    write_indices_csv,
)

EXIT_OK, EXIT_INPUT, EXIT_ANALYSIS, EXIT_USAGE = 0, 2, 3, 4

log = logging.getLogger("spendlens")

SYNTH_DEFAULTS = {
    Family.POWER: {"y0": 100.0, "beta": -1.0},
    Family.SEGMENTED: {"y0": 100.0, "slopes": [-0.3, -1.5], "breakpoints_log10": [2.0]},
    Family.DGBD: {"A": 1000.0, "a": 0.5, "b": 0.3},
    Family.AC5: {"A": 500.0, "a": 0.8, "b": 0.4, "c": 2.0, "d": 5.0},
    Family.YULE: {"alpha": 0.1},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _json_safe(obj: Any) -> Any:
    # JSON has no inf/nan; write them as strings
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(obj: Any, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_json_safe(obj), fh, indent=1, allow_nan=False)
        fh.write("\n")


def _directions(name: str) -> list[Direction] | None:
    return None if name == "all" else [Direction(name)]


def build_series(ledger: Ledger, group: str, metric: str, direction: str) -> RankSeries:
    """Rank series for one grouping.  Income amounts are ranked by magnitude."""
    table = aggregate(ledger, KeyKind(group), _directions(direction))
    if metric == "amount" and direction == "income":
        metric = "abs-amount"
    return rank_series(table, metric)


def _segmented_record(series: RankSeries, max_k: int, continuous: bool) -> tuple[SegmentedFit, dict]:
    fit = select_segments(series, max_k, continuous)
    try:
        dv = davies_test(series)
    except AnalysisError:
        dv = None
    rec = segmented_to_dict(fit, dv)
    if dv is None:
        rec["davies"] = None
    return fit, rec


def _power_record(series: RankSeries) -> dict:
    f = fit_power(series)
    return {"model": "power", "log_y0": f.log_y0, "beta": f.beta, "sse": f.sse, "r2": f.r2,
            "aic": f.aic, "n": f.n}


def fit_record(series: RankSeries, model: str, max_k: int, continuous: bool) -> tuple[dict, list[Overlay]]:
    """JSON record plus plot overlays for one ``--model`` choice."""
    ranks = series.ranks
    if model == "power":
        rec = _power_record(series)
        curve = 10.0 ** (rec["log_y0"] + rec["beta"] * series.log_ranks)
        return rec, [Overlay("power", tuple(ranks), tuple(curve))]
    if model == "segmented":
        fit, rec = _segmented_record(series, max_k, continuous)
        return rec, _segmented_overlays(series, fit)
    if model in ("dgbd", "ac4", "ac5"):
        g = fit_dgbd(series) if model == "dgbd" else fit_ac(series, fix_c_zero=(model == "ac4"))
        return genfit_to_dict(g), [Overlay(g.model.value, tuple(ranks), tuple(g.predict(ranks)))]
    if model == "auto":
        table = compare_models(series, max_breakpoints=max_k, continuous=continuous)
        rec: dict = {
            "model": "auto",
            "best_model": table.best,
            "comparison": [
                {"model": r.model, "n_params": r.n_params, "sse": r.sse, "aic": r.aic,
                 "delta_aic": r.delta_aic, "akaike_weight": r.akaike_weight}
                for r in table.rows
            ],
        }
        overlays = []
        gen = [r.model for r in table.rows if isinstance(table.fits[r.model], GenFit)]
        if gen:
            g = table.fits[gen[0]]
            rec["generalized"] = genfit_to_dict(g)
            overlays.append(Overlay(g.model.value, tuple(ranks), tuple(g.predict(ranks)), dashed=True))
        try:
            fit, seg = _segmented_record(series, max_k, continuous)
            rec["segmented"] = seg
            overlays = _segmented_overlays(series, fit) + overlays
        except AnalysisError as exc:
            rec["segmented"] = {"error": f"{type(exc).__name__}: {exc}"}
        return rec, overlays
    raise UsageError(f"unknown model {model!r}")


def _segmented_overlays(series: RankSeries, fit: SegmentedFit) -> list[Overlay]:
    label = "power" if fit.k == 0 else f"segmented k={fit.k}"
    out = [Overlay(label, tuple(series.ranks), tuple(10.0 ** fit.predict(series.log_ranks)))]
    if fit.k:
        out.append(Overlay("breakpoints", tuple(fit.breakpoints_rank)))
    return out


def run_rankfit(ledger: Ledger, group: str, metric: str, direction: str, model: str, max_k: int,
                continuous: bool, out: str | os.PathLike, plot: str | os.PathLike | None = None) -> dict:
    series = build_series(ledger, group, metric, direction)
    rec, overlays = fit_record(series, model, max_k, continuous)
    doc = {
        "group": group, "metric": metric, "direction": direction, "n": series.n,
        "dropped_nonpositive": series.dropped_nonpositive, "fit": rec,
    }
    _write_json(doc, out)
    if plot:
        spec = PlotSpec(PlotKind.RANK_LOGLOG, title=f"{group} by {metric}", x_label="rank",
                        y_label=metric if metric == "count" else f"{metric} (GBP)", overlays=overlays)
        write_svg(render_rank(series.values, spec), plot)
    return doc


def run_hist(ledger: Ledger, out_csv, out_svg=None, direction: str = "expenditure",
             bins_per_decade: int = 10, threshold: int = DEFAULT_THRESHOLD_MINOR):
    hist = amount_histogram(ledger, _directions(direction), bins_per_decade, threshold)
    write_histogram_csv(hist, out_csv)
    if out_svg:
        spec = PlotSpec(PlotKind.HISTOGRAM, title=f"{direction} amounts", x_label="amount (GBP)",
                        y_label="transactions", overlays=[Overlay("threshold", (threshold / 100.0,))])
        write_svg(render_histogram(hist.bin_edges, hist.counts, spec), out_svg)
    return hist


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args) -> int:
    profile = load_profile(args.profile) if args.profile else default_profile()
    ledger, reports = ingest_directory(args.input, profile, entity=args.entity, workers=args.workers)
    write_ledger(ledger, args.out)
    report = args.report or str(Path(args.out).with_suffix(".report.csv"))
    write_reports_csv(reports, report)
    bad = [r.file for r in reports if not r.ok]
    log.info("ingested %d rows from %d file(s); %d file(s) failed", len(ledger), len(reports) - len(bad),
             len(bad))
    return EXIT_OK


def cmd_indices(args) -> int:
    ledger = read_ledger(args.ledger)
    ix = excess_indices(ledger, args.threshold, strict=args.strict)
    write_indices_csv(ix, args.out)
    if args.json:
        with open(args.json, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(indices_to_json(ix) + "\n")
    return EXIT_OK


def cmd_rankfit(args) -> int:
    ledger = read_ledger(args.ledger)
    run_rankfit(ledger, args.group, args.metric, args.direction, args.model, args.max_breakpoints,
                not args.discontinuous, args.out, args.plot)
    return EXIT_OK


def cmd_hist(args) -> int:
    ledger = read_ledger(args.ledger)
    run_hist(ledger, args.out, args.svg, args.direction, args.bins_per_decade, args.threshold)
    return EXIT_OK


def _parse_param(text: str) -> tuple[str, Any]:
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise UsageError(f"--param expects key=value, got {text!r}")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        raise UsageError(f"--param value for {key!r} is not JSON: {val!r}") from None


def cmd_synth(args) -> int:
    if args.spec:
        spec = load_spec(args.spec)
    else:
        if not args.family:
            raise UsageError("synth needs --family or --spec")
        fam = Family(args.family)
        params = dict(SYNTH_DEFAULTS[fam])
        params.update(_parse_param(p) for p in args.param)
        spec = SynthSpec(fam, params, args.n, args.sigma, args.seed)
    series = generate(spec)
    write_series_csv(series, args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    ledger = read_ledger(args.ledger)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_indices_csv(excess_indices(ledger, args.threshold), out / "indices.csv")
    try:
        run_hist(ledger, out / "hist.csv", out / "hist.svg", "expenditure", threshold=args.threshold)
    except AnalysisError as exc:
        log.warning("histogram skipped: %s", exc)
    for metric in ("count", "amount"):
        name = f"rankfit_supplier_{metric}"
        try:
            run_rankfit(ledger, "supplier", metric, "expenditure", "auto", args.max_breakpoints, True,
                        out / f"{name}.json", out / f"{name}.svg")
        except AnalysisError as exc:
            # keep the manifest complete; the record says why there is no fit
            _write_json({"group": "supplier", "metric": metric, "direction": "expenditure",
                         "error": f"{type(exc).__name__}: {exc}"}, out / f"{name}.json")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spendlens", description="Public-spend ledgers, transparency indices and rank-size fits.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="normalize a directory of CSV/TSV files into a ledger")
    s.add_argument("--input", required=True, help="directory of .csv/.tsv/.txt files")
    s.add_argument("--profile", help="JSON column-synonym profile")
    s.add_argument("--out", required=True, help="ledger file to write (NDJSON)")
    s.add_argument("--entity", help="entity name for every row")
    s.add_argument("--report", help="per-file report CSV (default: <out>.report.csv)")
    s.add_argument("--workers", type=int, help="worker processes (default SPENDLENS_THREADS, 0 = auto)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("indices", help="excess-transparency indices per entity")
    s.add_argument("--ledger", required=True)
    s.add_argument("--threshold", type=int, default=DEFAULT_THRESHOLD_MINOR, help="pence (default 2500000)")
    s.add_argument("--strict", action="store_true", help="count only |amount| > threshold as above")
    s.add_argument("--out", required=True)
    s.add_argument("--json")
    s.set_defaults(func=cmd_indices)

    s = sub.add_parser("rankfit", help="fit rank-size models to a grouping")
    s.add_argument("--ledger", required=True)
    s.add_argument("--group", choices=[k.value for k in KeyKind], default="supplier")
    s.add_argument("--metric", choices=["count", "amount"], default="count")
    s.add_argument("--direction", choices=["expenditure", "income", "all"], default="expenditure")
    s.add_argument("--max-breakpoints", type=int, default=2)
    s.add_argument("--model", choices=["auto", "power", "segmented", "dgbd", "ac4", "ac5"], default="auto")
    s.add_argument("--discontinuous", action="store_true", help="independent line per segment")
    s.add_argument("--plot", help="SVG file for a log-log rank plot")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_rankfit)

    s = sub.add_parser("hist", help="log-binned amount histogram")
    s.add_argument("--ledger", required=True)
    s.add_argument("--out", required=True, help="CSV of bins")
    s.add_argument("--svg")
    s.add_argument("--direction", choices=["expenditure", "income", "all"], default="expenditure")
    s.add_argument("--bins-per-decade", type=int, default=10)
    s.add_argument("--threshold", type=int, default=DEFAULT_THRESHOLD_MINOR)
    s.set_defaults(func=cmd_hist)

    s = sub.add_parser("synth", help="generate a seeded synthetic rank series")
    s.add_argument("--spec", help="JSON SynthSpec (overrides the other flags)")
    s.add_argument("--family", choices=[f.value for f in Family])
    s.add_argument("--n", type=int, default=1000, help="series length or Yule step count")
    s.add_argument("--sigma", type=float, default=0.0, help="lognormal noise sigma")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--param", action="append", default=[], metavar="KEY=JSON")
    s.add_argument("--out", required=True, help="CSV (rank, label, value)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("report", help="indices, histogram and supplier fits in one directory")
    s.add_argument("--ledger", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--threshold", type=int, default=DEFAULT_THRESHOLD_MINOR)
    s.add_argument("--max-breakpoints", type=int, default=2)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    for flag in ("threshold", "workers"):
        v = getattr(args, flag, None)
        if v is not None and v < (1 if flag == "threshold" else 0):
            parser.error(f"--{flag} out of range: {v}")
    if getattr(args, "max_breakpoints", 0) < 0:
        parser.error("--max-breakpoints must be >= 0")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"spendlens: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, OSError) as exc:
        print(f"spendlens: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AnalysisError as exc:
        print(f"spendlens: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
