#!/usr/bin/env python3
"""Check headline figures against a local copy of the NHS spend publications.

Usage: reproduce_nhs.py DATA_DIR [--profile PROFILE.json] [--workers N]

DATA_DIR holds the monthly over-threshold spend files converted to CSV or
TSV (one directory, any number of files).  The script ingests them, prints
each figure next to its target and exits 1 if any figure is outside its
tolerance.  Publishers revise files, so small drift in the counts is
expected; the tolerances below are deliberately loose where noted.
"""

from __future__ import annotations

import argparse
import sys

from spendlens.errors import AnalysisError
from spendlens.ingest import default_profile, ingest_directory, load_profile
from spendlens.ledger import Direction, KeyKind, aggregate, totals
from spendlens.rankfit import fit_segmented, rank_series
from spendlens.transparency import DEFAULT_THRESHOLD_MINOR, top_share

TARGETS = {
    "entries": (1_956_196, 0.005),
    "at_or_above_threshold": (665_231, 0.005),
    "below_threshold": (1_290_965, 0.005),
}
TOP5_SHARE = (0.7077, 0.0001)
BREAK_RANKS = {"count": 5900, "amount": 221}
BREAK_TOL = 0.15


def _check(name, value, target, ok) -> bool:
    print(f"{'ok ' if ok else 'BAD'} {name:28s} {value!s:>14}  target {target}")
    return ok


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("data_dir")
    ap.add_argument("--profile")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args(argv)

    profile = load_profile(args.profile) if args.profile else default_profile()
    ledger, reports = ingest_directory(args.data_dir, profile, workers=args.workers)
    failed = [r.file for r in reports if not r.ok]
    print(f"{len(reports)} files, {len(failed)} unreadable, {len(ledger)} rows kept")

    ok = True
    tot = totals(ledger, DEFAULT_THRESHOLD_MINOR)
    counts = {
        "entries": sum(t.all.count for t in tot.values()),
        "at_or_above_threshold": sum(t.above.count for t in tot.values()),
        "below_threshold": sum(t.below.count for t in tot.values()),
    }
    for name, (target, rel) in TARGETS.items():
        ok &= _check(name, counts[name], f"{target} ±{rel:.1%}", abs(counts[name] - target) <= rel * target)

    share, _ = top_share(aggregate(ledger, KeyKind.EXPENSE_TYPE, [Direction.EXPENDITURE]), 5, "signed-amount")
    ok &= _check("top-5 expense-type share", f"{share:.4%}", f"{TOP5_SHARE[0]:.2%} ±{TOP5_SHARE[1]:.2%}",
                 abs(share - TOP5_SHARE[0]) <= TOP5_SHARE[1])

    table = aggregate(ledger, KeyKind.SUPPLIER, [Direction.EXPENDITURE])
    for metric, target in BREAK_RANKS.items():
        try:
            rank = 10 ** fit_segmented(rank_series(table, metric), 1).breakpoints[0]
        except AnalysisError as exc:
            ok &= _check(f"supplier {metric} breakpoint", type(exc).__name__, target, False)
            continue
        ok &= _check(f"supplier {metric} breakpoint", f"{rank:.0f}", f"{target} ±{BREAK_TOL:.0%}",
                     abs(rank - target) <= BREAK_TOL * target)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
