"""Canonical transaction store, filtering and grouped aggregation."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import FileError, MalformedRow, VersionError
from .ingest import Transaction, format_amount

FORMAT_VERSION = 1
LEDGER_COLUMNS = (
    "entity", "date", "supplier", "expense_type", "expense_area",
    "amount", "source_file", "row_number",
)
_CANONICAL_AMOUNT = re.compile(r"^-?\d+\.\d{2}$")


class Direction(str, enum.Enum):
    EXPENDITURE = "expenditure"
    INCOME = "income"


class KeyKind(str, enum.Enum):
    SUPPLIER = "supplier"
    EXPENSE_TYPE = "expense_type"
    EXPENSE_AREA = "expense_area"
    ENTITY = "entity"


def direction_of(t: Transaction) -> Direction:
    """Positive amounts are outgoing spend, negative amounts are income."""
    return Direction.EXPENDITURE if t.amount_minor > 0 else Direction.INCOME


@dataclass(frozen=True)
class Ledger:
    """Immutable, canonically ordered list of transactions.

    Build with :meth:`from_transactions`; the plain constructor trusts
    that ``transactions`` is already in canonical order.
    """

    transactions: tuple[Transaction, ...] = ()
    provenance: tuple[str, ...] = ()

    @classmethod
    def from_transactions(cls, transactions: Iterable[Transaction], provenance: Iterable[str] = ()) -> "Ledger":
        rows = sorted(transactions, key=Transaction.sort_key)
        if any(t.amount_minor == 0 for t in rows):
            raise ValueError("ledger rows must have non-zero amounts")
        return cls(tuple(rows), tuple(sorted(set(provenance))))

    def __len__(self) -> int:
        return len(self.transactions)

    def __iter__(self) -> Iterator[Transaction]:
        return iter(self.transactions)

    @property
    def entities(self) -> list[str]:
        return sorted({t.entity for t in self.transactions})

    def filter(self, **kwargs) -> "Ledger":
        return filter_ledger(self, **kwargs)


def filter_ledger(
    ledger: Ledger,
    entities: Iterable[str] | None = None,
    directions: Iterable[Direction] | None = None,
    start: dt.date | None = None,
    end: dt.date | None = None,
    min_abs_amount: int | None = None,
) -> Ledger:
    """Subset of ``ledger`` in canonical order; every criterion is optional.

    ``start``/``end`` are inclusive; ``min_abs_amount`` keeps rows with
    ``|amount_minor| >= min_abs_amount``.
    """
    ents = set(entities) if entities is not None else None
    dirs = {Direction(d) for d in directions} if directions is not None else None
    want_exp = dirs is None or Direction.EXPENDITURE in dirs
    want_inc = dirs is None or Direction.INCOME in dirs

    def keep(t: Transaction) -> bool:
        if ents is not None and t.entity not in ents:
            return False
        if not (want_exp if t.amount_minor > 0 else want_inc):
            return False
        if start is not None and t.date < start:
            return False
        if end is not None and t.date > end:
            return False
        if min_abs_amount is not None and abs(t.amount_minor) < min_abs_amount:
            return False
        return True

    return Ledger(tuple(t for t in ledger.transactions if keep(t)), ledger.provenance)


@dataclass(frozen=True)
class AggregateRow:
    key: str
    count: int
    amount_minor_sum: int
    amount_minor_abs_sum: int


@dataclass(frozen=True)
class AggregateTable:
    key_kind: KeyKind
    rows: tuple[AggregateRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def total_count(self) -> int:
        return sum(r.count for r in self.rows)


def group_key(t: Transaction, key_kind: KeyKind) -> str:
    if key_kind is KeyKind.SUPPLIER:
        return t.supplier_key
    return getattr(t, key_kind.value)


def aggregate(
    ledger: Ledger,
    key_kind: KeyKind | str,
    directions: Iterable[Direction] | None = None,
) -> AggregateTable:
    """Group by ``key_kind``; rows ordered by absolute amount descending,
    then key ascending."""
    key_kind = KeyKind(key_kind)
    if directions is not None:
        ledger = filter_ledger(ledger, directions=directions)
    attr = None if key_kind is KeyKind.SUPPLIER else key_kind.value
    acc: dict[str, list[int]] = {}
    for t in ledger.transactions:
        k = t.supplier.upper() if attr is None else getattr(t, attr)
        a = t.amount_minor
        slot = acc.get(k)
        if slot is None:
            acc[k] = [1, a, abs(a)]
        else:
            slot[0] += 1
            slot[1] += a
            slot[2] += abs(a)
    rows = [AggregateRow(k, c, s, s_abs) for k, (c, s, s_abs) in acc.items()]
    rows.sort(key=lambda r: (-r.amount_minor_abs_sum, r.key))
    return AggregateTable(key_kind, tuple(rows))


@dataclass
class SideTotals:
    count: int = 0
    signed_sum: int = 0
    abs_sum: int = 0

    def add(self, amount: int) -> None:
        self.count += 1
        self.signed_sum += amount
        self.abs_sum += abs(amount)


@dataclass
class DirectionTotals:
    all: SideTotals = field(default_factory=SideTotals)
    above: SideTotals = field(default_factory=SideTotals)
    below: SideTotals = field(default_factory=SideTotals)


def is_above(amount_minor: int, threshold_minor: int, strict: bool = False) -> bool:
    """Threshold test on |amount|: ``>=`` by default, ``>`` when strict."""
    a = abs(amount_minor)
    return a > threshold_minor if strict else a >= threshold_minor


def totals(ledger: Ledger, threshold_minor: int, strict: bool = False) -> dict[Direction, DirectionTotals]:
    if threshold_minor <= 0:
        raise ValueError("threshold_minor must be positive")
    out = {d: DirectionTotals() for d in Direction}
    for t in ledger.transactions:
        a = t.amount_minor
        d = out[Direction.EXPENDITURE if a > 0 else Direction.INCOME]
        d.all.add(a)
        (d.above if is_above(a, threshold_minor, strict) else d.below).add(a)
    return out


def count_duplicates(ledger: Ledger) -> int:
    """Rows identical to an earlier row in every field except provenance."""
    seen = Counter(
        (t.entity, t.date, t.supplier, t.expense_type, t.expense_area, t.amount_minor)
        for t in ledger.transactions
    )
    return sum(n - 1 for n in seen.values() if n > 1)


# ---------------------------------------------------------------------------
# on-disk form


def _row_dict(t: Transaction) -> dict:
    return {
        "entity": t.entity,
        "date": t.date.isoformat(),
        "supplier": t.supplier,
        "expense_type": t.expense_type,
        "expense_area": t.expense_area,
        "amount": format_amount(t.amount_minor),
        "source_file": t.source_file,
        "row_number": t.row_number,
    }


def default_created(ledger: Ledger) -> str | None:
    """Deterministic ``created`` stamp: SOURCE_DATE_EPOCH when set, else the
    latest transaction date, so identical inputs give identical files."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    if not ledger.transactions:
        return None
    return max(t.date for t in ledger.transactions).isoformat()


def write_ledger(ledger: Ledger, path: str | os.PathLike, created: str | None = None) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "created": created if created is not None else default_created(ledger),
        "row_count": len(ledger),
        "provenance": list(ledger.provenance),
    }
    dumps = json.JSONEncoder(ensure_ascii=False).encode
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(header) + "\n")
        for t in ledger.transactions:
            fh.write(dumps(_row_dict(t)) + "\n")


def _parse_row(obj: dict, lineno: int) -> Transaction:
    try:
        missing = [c for c in LEDGER_COLUMNS if c not in obj]
        if missing:
            raise MalformedRow(f"line {lineno}: missing {', '.join(missing)}")
        amount = obj["amount"]
        if not isinstance(amount, str) or not _CANONICAL_AMOUNT.match(amount):
            raise MalformedRow(f"line {lineno}: amount {amount!r} is not in canonical form")
        whole, frac = amount.lstrip("-").split(".")
        minor = int(whole) * 100 + int(frac)
        if amount.startswith("-"):
            minor = -minor
        if minor == 0:
            raise MalformedRow(f"line {lineno}: zero amount")
        row_number = obj["row_number"]
        if not isinstance(row_number, int) or isinstance(row_number, bool) or row_number < 1:
            raise MalformedRow(f"line {lineno}: bad row_number {row_number!r}")
        strings = [obj[c] for c in ("entity", "supplier", "expense_type", "expense_area", "source_file")]
        if not all(isinstance(s, str) for s in strings):
            raise MalformedRow(f"line {lineno}: text fields must be strings")
        return Transaction(
            entity=obj["entity"],
            date=dt.date.fromisoformat(obj["date"]),
            supplier=obj["supplier"],
            expense_type=obj["expense_type"],
            expense_area=obj["expense_area"],
            amount_minor=minor,
            source_file=obj["source_file"],
            row_number=row_number,
        )
    except (TypeError, ValueError) as exc:
        raise MalformedRow(f"line {lineno}: {exc}") from exc


def read_ledger(path: str | os.PathLike) -> Ledger:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise FileError(f"cannot open ledger {path}: {exc}") from exc
    with fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except ValueError as exc:
            raise MalformedRow(f"line 1: header is not JSON ({exc})") from exc
        if not isinstance(header, dict) or header.get("format_version") != FORMAT_VERSION:
            version = header.get("format_version") if isinstance(header, dict) else None
            raise VersionError(f"unsupported ledger format_version {version!r} (expected {FORMAT_VERSION})")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise MalformedRow(f"line {lineno}: not JSON ({exc})") from exc
            if not isinstance(obj, dict):
                raise MalformedRow(f"line {lineno}: expected an object")
            rows.append(_parse_row(obj, lineno))
    if header.get("row_count") != len(rows):
        raise MalformedRow(f"header row_count {header.get('row_count')} but {len(rows)} rows present")
    return Ledger.from_transactions(rows, header.get("provenance", ()))


def write_ledger_csv(ledger: Ledger, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for t in ledger.transactions:
            d = _row_dict(t)
            w.writerow([d[c] for c in LEDGER_COLUMNS])


def write_aggregate_csv(table: AggregateTable, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([table.key_kind.value, "count", "amount", "abs_amount"])
        for r in table.rows:
            w.writerow([r.key, r.count, format_amount(r.amount_minor_sum), format_amount(r.amount_minor_abs_sum)])

