"""Excess-transparency indices, threshold splits, top-k shares and
log-binned amount histograms.

An excess index compares everything an entity published with what the
disclosure threshold alone would have forced it to publish: 1.0 means
the entity published exactly the mandated rows, larger values mean
voluntary extra disclosure.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyTable, NoData
from .ledger import AggregateRow, AggregateTable, Direction, Ledger, filter_ledger, is_above

DEFAULT_THRESHOLD_MINOR = 25_000_00


class Scope(str, enum.Enum):
    INCOME = "income"
    EXPENDITURE = "expenditure"
    ALL = "all"


@dataclass(frozen=True)
class TransparencyIndex:
    entity: str
    direction: Scope
    n_all: int
    n_above: int
    count_index: float | None
    amount_index: float | None

    @property
    def defined(self) -> bool:
        return self.count_index is not None and self.amount_index is not None


def _ratio(num: int, den: int) -> float | None:
    # int / int true division is correctly rounded, so scaling both by the
    # same integer gives bit-identical results.
    return None if den == 0 else num / den


def excess_indices(ledger: Ledger, threshold_minor: int = DEFAULT_THRESHOLD_MINOR,
                   strict: bool = False) -> list[TransparencyIndex]:
    """Count and amount excess indices for every entity and scope.

    Income and expenditure use absolute amounts.  The ``all`` scope uses
    signed sums, so an entity with substantial income can score below 1.
    Indices whose denominator is zero are ``None``.
    """
    if threshold_minor <= 0:
        raise ValueError("threshold_minor must be positive")
    # per entity: [n, n_above, abs, abs_above] for exp and inc, then signed all/above
    acc: dict[str, list[int]] = {}
    for t in ledger.transactions:
        a = t.amount_minor
        s = acc.get(t.entity)
        if s is None:
            s = acc[t.entity] = [0] * 10
        base = 0 if a > 0 else 4
        above = is_above(a, threshold_minor, strict)
        s[base] += 1
        s[base + 2] += abs(a)
        s[8] += a
        if above:
            s[base + 1] += 1
            s[base + 3] += abs(a)
            s[9] += a

    out: list[TransparencyIndex] = []
    for entity in sorted(acc):
        s = acc[entity]
        inc = (s[4], s[5], s[6], s[7])
        exp = (s[0], s[1], s[2], s[3])
        for scope, (n, n_above, amt, amt_above) in ((Scope.INCOME, inc), (Scope.EXPENDITURE, exp)):
            defined = n_above > 0
            out.append(TransparencyIndex(
                entity, scope, n, n_above,
                _ratio(n, n_above) if defined else None,
                _ratio(amt, amt_above) if defined else None,
            ))
        n = s[0] + s[4]
        n_above = s[1] + s[5]
        out.append(TransparencyIndex(
            entity, Scope.ALL, n, n_above,
            _ratio(n, n_above),
            _ratio(s[8], s[9]) if n_above > 0 else None,
        ))
    return out


@dataclass(frozen=True)
class SplitSide:
    count: int = 0
    abs_sum: int = 0


@dataclass(frozen=True)
class ThresholdSplit:
    above: SplitSide
    below: SplitSide


def threshold_split(ledger: Ledger, threshold_minor: int = DEFAULT_THRESHOLD_MINOR,
                    strict: bool = False) -> dict[Direction, ThresholdSplit]:
    if threshold_minor <= 0:
        raise ValueError("threshold_minor must be positive")
    acc = {d: [0, 0, 0, 0] for d in Direction}
    for t in ledger.transactions:
        a = t.amount_minor
        s = acc[Direction.EXPENDITURE if a > 0 else Direction.INCOME]
        if is_above(a, threshold_minor, strict):
            s[0] += 1
            s[1] += abs(a)
        else:
            s[2] += 1
            s[3] += abs(a)
    return {d: ThresholdSplit(SplitSide(v[0], v[1]), SplitSide(v[2], v[3])) for d, v in acc.items()}


_METRICS = {
    "count": lambda r: r.count,
    "signed-amount": lambda r: r.amount_minor_sum,
    "abs-amount": lambda r: r.amount_minor_abs_sum,
}


def top_share(table: AggregateTable, k: int, metric: str = "count") -> tuple[float, list[AggregateRow]]:
    """Share of ``metric`` held by the top ``k`` rows, plus those rows."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not table.rows:
        raise EmptyTable("aggregate table has no rows")
    try:
        value = _METRICS[metric]
    except KeyError:
        raise ValueError(f"metric must be one of {sorted(_METRICS)}") from None
    rows = sorted(table.rows, key=lambda r: (-value(r), r.key))
    total = sum(value(r) for r in rows)
    if total == 0:
        raise EmptyTable(f"{metric} sums to zero")
    top = rows[:k]
    return sum(value(r) for r in top) / total, top


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    threshold_marker: float

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def amount_histogram(
    ledger: Ledger,
    directions: Iterable[Direction] | None = None,
    bins_per_decade: int = 10,
    threshold_minor: int = DEFAULT_THRESHOLD_MINOR,
) -> Histogram:
    """Histogram of log10(|amount| in pounds).

    Edges run from the decade holding the smallest amount up to the top
    of the decade holding the largest, ``bins_per_decade`` per decade.
    """
    if bins_per_decade < 1:
        raise ValueError("bins_per_decade must be >= 1")
    if directions is not None:
        ledger = filter_ledger(ledger, directions=directions)
    amounts = np.fromiter((abs(t.amount_minor) for t in ledger.transactions), dtype=np.float64,
                          count=len(ledger))
    if amounts.size == 0:
        raise NoData("no transactions to histogram")
    x = np.log10(amounts / 100.0)
    lo = math.floor(x.min())
    hi = math.floor(x.max()) + 1
    nbins = (hi - lo) * bins_per_decade
    edges = lo + np.arange(nbins + 1) / bins_per_decade
    idx = np.floor((x - lo) * bins_per_decade).astype(np.int64)
    np.clip(idx, 0, nbins - 1, out=idx)
    counts = np.bincount(idx, minlength=nbins)
    return Histogram(edges, counts, math.log10(threshold_minor / 100.0))


# ---------------------------------------------------------------------------
# output


def _fmt(v: float | None) -> str:
    return "NA" if v is None else repr(float(v))


def write_indices_csv(indices: Sequence[TransparencyIndex], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity", "direction", "n_all", "n_above", "count_index", "amount_index", "defined"])
        for ix in indices:
            w.writerow([ix.entity, ix.direction.value, ix.n_all, ix.n_above,
                        _fmt(ix.count_index), _fmt(ix.amount_index), str(ix.defined).lower()])


def indices_to_json(indices: Sequence[TransparencyIndex]) -> str:
    rows = []
    for ix in indices:
        d = asdict(ix)
        d["direction"] = ix.direction.value
        d["defined"] = ix.defined
        rows.append(d)
    return json.dumps(rows, indent=1)


def write_histogram_csv(hist: Histogram, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
            w.writerow([f"{lo:.6g}", f"{hi:.6g}", int(c)])
