"""Normalize heterogeneous spend publications into canonical transactions.

Publishers use their own column names, date notations and amount
formatting, and often put logos or notes above the header row.  A
:class:`RawFileProfile` lists the accepted header strings for each
canonical field; :func:`normalize_file` finds the header, parses every
row and reports what was dropped and why.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import os
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import FileError, MalformedAmount, MalformedDate, NoHeaderFound

logger = logging.getLogger(__name__)

CANONICAL_FIELDS = ("entity", "date", "supplier", "expense_type", "expense_area", "amount")
MIN_HEADER_MATCHES = 4
RECOGNIZED_EXTENSIONS = (".csv", ".tsv", ".txt")
_DELIMITERS = (",", "\t")


def _norm_header(cell: str) -> str:
    return " ".join(cell.replace("﻿", "").split()).casefold()


@dataclass(frozen=True)
class RawFileProfile:
    """How to read one family of publisher files.

    ``income_markers`` only matters when ``column_synonyms`` also maps an
    optional ``direction`` column: rows whose direction cell matches a marker are stored as
    income (negative) whatever the sign in the amount column.
    """

    column_synonyms: Mapping[str, tuple[str, ...]]
    date_order: str = "day-first"
    decimal_separator: str = "."
    max_header_scan_rows: int = 30
    entity: str | None = None
    income_markers: tuple[str, ...] = ("income", "receipt", "credit", "cr")

    def __post_init__(self):
        synonyms = {k: tuple(v) for k, v in self.column_synonyms.items()}
        missing = [f for f in CANONICAL_FIELDS if not synonyms.get(f)]
        if missing:
            raise ValueError(f"profile has no synonyms for {', '.join(missing)}")
        if self.date_order not in ("day-first", "year-first"):
            raise ValueError(f"date_order must be day-first or year-first, got {self.date_order!r}")
        if self.decimal_separator not in (".", ","):
            raise ValueError("decimal_separator must be '.' or ','")
        if self.max_header_scan_rows < 1:
            raise ValueError("max_header_scan_rows must be >= 1")
        object.__setattr__(self, "column_synonyms", synonyms)
        object.__setattr__(self, "income_markers", tuple(m.casefold() for m in self.income_markers))

    @property
    def header_lookup(self) -> dict[str, str]:
        """Normalized header string -> canonical field (first field wins)."""
        lookup: dict[str, str] = {}
        for name, syns in self.column_synonyms.items():
            for s in syns:
                lookup.setdefault(_norm_header(s), name)
        return lookup

    @classmethod
    def from_dict(cls, data: Mapping) -> "RawFileProfile":
        base = default_profile()
        synonyms = dict(base.column_synonyms)
        for name, syns in data.get("column_synonyms", {}).items():
            if data.get("extend_defaults", True):
                synonyms[name] = tuple(dict.fromkeys([*synonyms.get(name, ()), *syns]))
            else:
                synonyms[name] = tuple(syns)
        return cls(
            column_synonyms=synonyms,
            date_order=data.get("date_order", base.date_order),
            decimal_separator=data.get("decimal_separator", base.decimal_separator),
            max_header_scan_rows=int(data.get("max_header_scan_rows", base.max_header_scan_rows)),
            entity=data.get("entity"),
            income_markers=tuple(data.get("income_markers", base.income_markers)),
        )


@lru_cache(maxsize=1)
def _default_profile_data() -> dict:
    text = resources.files("spendlens").joinpath("data/default_profile.json").read_text("utf-8")
    return json.loads(text)


def default_profile() -> RawFileProfile:
    data = _default_profile_data()
    return RawFileProfile(
        column_synonyms=data["column_synonyms"],
        date_order=data["date_order"],
        decimal_separator=data["decimal_separator"],
        max_header_scan_rows=data["max_header_scan_rows"],
    )


def load_profile(path: str | os.PathLike) -> RawFileProfile:
    """Read a JSON profile.  Synonyms extend the defaults unless the file
    sets ``"extend_defaults": false``."""
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except (OSError, ValueError) as exc:
        raise FileError(f"cannot read profile {path}: {exc}") from exc
    return RawFileProfile.from_dict(data)


@dataclass(frozen=True, slots=True)
class Transaction:
    entity: str
    date: dt.date
    supplier: str
    expense_type: str
    expense_area: str
    amount_minor: int
    source_file: str
    row_number: int

    @property
    def supplier_key(self) -> str:
        return self.supplier.upper()

    def sort_key(self) -> tuple:
        return (self.entity, self.date, self.source_file, self.row_number)


@dataclass
class IngestReport:
    file: str
    rows_read: int = 0
    rows_kept: int = 0
    rows_dropped: int = 0
    drop_reasons: dict[str, int] = field(default_factory=dict)
    detected_header_row: int | None = None
    delimiter: str | None = None
    duplicate_rows: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


# ---------------------------------------------------------------------------
# field parsers


def detect_header(rows: Sequence[Sequence[str]], profile: RawFileProfile) -> tuple[int, dict[str, int]]:
    """Return ``(header_index, {canonical_field: column})`` for the first row
    in the scan window matching at least four canonical fields."""
    if not rows:
        raise NoHeaderFound("no rows to scan")
    lookup = profile.header_lookup
    for i, row in enumerate(rows[: profile.max_header_scan_rows]):
        colmap: dict[str, int] = {}
        for j, cell in enumerate(row):
            name = lookup.get(_norm_header(cell))
            if name is not None and name not in colmap:
                colmap[name] = j
        if sum(1 for f in colmap if f in CANONICAL_FIELDS) >= MIN_HEADER_MATCHES:
            return i, colmap
    raise NoHeaderFound(
        f"no row within the first {profile.max_header_scan_rows} matches "
        f"{MIN_HEADER_MATCHES} canonical fields"
    )


@lru_cache(maxsize=4)
def _amount_regex(decimal_separator: str) -> re.Pattern:
    thou = "," if decimal_separator == "." else r"\."
    dec = re.escape(decimal_separator)
    return re.compile(
        rf"^(?P<int>\d{{1,3}}(?:{thou}\d{{3}})+|\d+)?(?:{dec}(?P<frac>\d*))?$"
    )


_CURRENCY = ("£", "$", "€", "GBP", "gbp")
_MINUS = ("-", "−")


def _strip_currency(s: str) -> str:
    for sym in _CURRENCY:
        if s.startswith(sym):
            return s[len(sym):].strip()
        if s.endswith(sym):
            return s[: -len(sym)].strip()
    return s


def parse_amount(text: str, profile: RawFileProfile | None = None) -> int:
    """Parse a money string into signed pence.

    >>> parse_amount("£1,234.56")
    123456
    >>> parse_amount("(500.00)")
    -50000
    """
    sep = profile.decimal_separator if profile is not None else "."
    s = text.strip()
    if not s:
        raise MalformedAmount("empty amount")
    negative = False
    if s[0] == "(" and s[-1] == ")":
        negative = True
        s = s[1:-1].strip()
    s = _strip_currency(s)
    if s[:1] in _MINUS:
        if negative:
            raise MalformedAmount(f"double negation in {text!r}")
        negative = True
        s = _strip_currency(s[1:].strip())
    m = _amount_regex(sep).match(s)
    if m is None or (m["int"] is None and not m["frac"]):
        raise MalformedAmount(f"unparseable amount {text!r}")
    frac = m["frac"] or ""
    if len(frac) > 2:
        raise MalformedAmount(f"more than two decimal places in {text!r}")
    whole = int(re.sub(r"\D", "", m["int"])) if m["int"] else 0
    minor = whole * 100 + int(frac.ljust(2, "0"))
    return -minor if negative else minor


def format_amount(minor: int) -> str:
    """Canonical text form: optional leading minus, no separators, 2 decimals."""
    sign = "-" if minor < 0 else ""
    whole, pence = divmod(abs(minor), 100)
    return f"{sign}{whole}.{pence:02d}"


_MONTHS = {
    name: i
    for i, names in enumerate(
        [
            ("jan", "january"), ("feb", "february"), ("mar", "march"), ("apr", "april"),
            ("may",), ("jun", "june"), ("jul", "july"), ("aug", "august"),
            ("sep", "sept", "september"), ("oct", "october"), ("nov", "november"),
            ("dec", "december"),
        ],
        start=1,
    )
    for name in names
}
_TIME = r"(?:[T ]\d{1,2}:\d{2}(?::\d{2}(?:\.\d+)?)?)?"
_ISO_RE = re.compile(rf"^(\d{{4}})-(\d{{1,2}})-(\d{{1,2}}){_TIME}$")
_DMY_RE = re.compile(rf"^(\d{{1,2}})([/.\-])(\d{{1,2}})\2(\d{{4}}|\d{{2}}){_TIME}$")
_YMD_RE = re.compile(rf"^(\d{{4}})([/.])(\d{{1,2}})\2(\d{{1,2}}){_TIME}$")
_NAMED_RE = re.compile(r"^(\d{1,2})[\s\-/]*([A-Za-z]{3,9})\.?[\s\-/,]*(\d{4}|\d{2})$")


def _expand_year(y: str) -> int:
    if len(y) == 4:
        return int(y)
    yy = int(y)
    return 2000 + yy if yy <= 68 else 1900 + yy


def _make_date(y: int, m: int, d: int, text: str) -> dt.date:
    try:
        return dt.date(y, m, d)
    except ValueError as exc:
        raise MalformedDate(f"invalid calendar date {text!r}") from exc


@lru_cache(maxsize=65536)
def _parse_date_cached(s: str, date_order: str) -> dt.date:
    m = _ISO_RE.match(s)
    if m:
        return _make_date(int(m[1]), int(m[2]), int(m[3]), s)
    if date_order == "day-first":
        m = _DMY_RE.match(s)
        if m:
            return _make_date(_expand_year(m[4]), int(m[3]), int(m[1]), s)
    else:
        m = _YMD_RE.match(s)
        if m:
            return _make_date(int(m[1]), int(m[3]), int(m[4]), s)
    m = _NAMED_RE.match(s)
    if m:
        month = _MONTHS.get(m[2].lower())
        if month is not None:
            return _make_date(_expand_year(m[3]), month, int(m[1]), s)
    raise MalformedDate(f"unrecognized date {s!r}")


def parse_date(text: str, profile: RawFileProfile | None = None) -> dt.date:
    """Parse ISO, numeric (profile order) or day-month-name-year dates.

    Two-digit years 00-68 map to 20xx and 69-99 to 19xx.
    """
    s = text.strip()
    if not s:
        raise MalformedDate("empty date")
    return _parse_date_cached(s, profile.date_order if profile is not None else "day-first")


# ---------------------------------------------------------------------------
# files


def _read_text(path: Path) -> str:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FileError(f"cannot read {path}: {exc}") from exc
    if b"\x00" in raw:
        raise FileError(f"{path.name}: binary content (NUL bytes)")
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise FileError(f"{path.name}: not valid UTF-8 ({exc.reason} at byte {exc.start})") from exc
    if not text.strip():
        raise FileError(f"{path.name}: empty file")
    return text


def _choose_layout(text: str, profile: RawFileProfile) -> tuple[str, int, dict[str, int]]:
    best = None
    for delim in _DELIMITERS:
        head = []
        reader = csv.reader(io.StringIO(text), delimiter=delim)
        try:
            for _ in range(profile.max_header_scan_rows):
                head.append(next(reader))
        except StopIteration:
            pass
        except csv.Error:
            continue
        try:
            idx, colmap = detect_header(head, profile)
        except NoHeaderFound:
            continue
        width = len(head[idx])
        if best is None or width > best[0]:
            best = (width, delim, idx, colmap)
    if best is None:
        raise NoHeaderFound(
            f"no row within the first {profile.max_header_scan_rows} matches "
            f"{MIN_HEADER_MATCHES} canonical fields"
        )
    return best[1], best[2], best[3]


def normalize_file(
    path: str | os.PathLike,
    profile: RawFileProfile | None = None,
    entity: str | None = None,
) -> tuple[list[Transaction], IngestReport]:
    """Parse one delimited file into transactions plus an ingest report.

    The entity comes from ``entity``, then ``profile.entity``, then a
    detected entity column, and finally the file stem.
    """
    profile = profile or default_profile()
    path = Path(path)
    text = _read_text(path)
    delim, hdr, colmap = _choose_layout(text, profile)
    report = IngestReport(file=path.name, detected_header_row=hdr, delimiter=delim)

    fixed_entity = entity or profile.entity
    if fixed_entity is None and "entity" not in colmap:
        fixed_entity = path.stem
    fixed_entity = fixed_entity.strip() if fixed_entity is not None else None

    c_date = colmap.get("date")
    c_amount = colmap.get("amount")
    c_supplier = colmap.get("supplier")
    c_entity = colmap.get("entity")
    c_type = colmap.get("expense_type")
    c_area = colmap.get("expense_area")
    c_direction = colmap.get("direction")
    markers = set(profile.income_markers)

    def cell(row, j):
        if j is None or j >= len(row):
            return ""
        return row[j].strip()

    reasons: Counter = Counter()
    out: list[Transaction] = []
    seen: Counter = Counter()
    interned: dict[str, str] = {}
    reader = csv.reader(io.StringIO(text), delimiter=delim)
    try:
        for i, row in enumerate(reader):
            if i <= hdr:
                continue
            report.rows_read += 1
            if not any(c.strip() for c in row):
                reasons["BlankRow"] += 1
                continue
            s_date = cell(row, c_date)
            if not s_date:
                reasons["MissingDate"] += 1
                continue
            try:
                date = parse_date(s_date, profile)
            except MalformedDate:
                reasons["MalformedDate"] += 1
                continue
            s_amount = cell(row, c_amount)
            if not s_amount:
                reasons["MissingAmount"] += 1
                continue
            try:
                amount = parse_amount(s_amount, profile)
            except MalformedAmount:
                reasons["MalformedAmount"] += 1
                continue
            supplier = cell(row, c_supplier)
            if not supplier:
                reasons["MissingSupplier"] += 1
                continue
            ent = fixed_entity if fixed_entity is not None else cell(row, c_entity)
            if not ent:
                reasons["MissingEntity"] += 1
                continue
            if amount == 0:
                reasons["ZeroAmount"] += 1
                continue
            if c_direction is not None:
                flag = cell(row, c_direction).casefold()
                amount = -abs(amount) if flag in markers else abs(amount)
            etype = cell(row, c_type).upper()
            earea = cell(row, c_area).upper()
            t = Transaction(
                entity=interned.setdefault(ent, ent),
                date=date,
                supplier=interned.setdefault(supplier, supplier),
                expense_type=interned.setdefault(etype, etype),
                expense_area=interned.setdefault(earea, earea),
                amount_minor=amount,
                source_file=report.file,
                row_number=i + 1,
            )
            seen[(t.entity, date, supplier, etype, earea, amount)] += 1
            out.append(t)
    except csv.Error as exc:
        raise FileError(f"{path.name}: malformed delimited text ({exc})") from exc

    report.rows_kept = len(out)
    report.drop_reasons = dict(sorted(reasons.items()))
    report.rows_dropped = sum(reasons.values())
    report.duplicate_rows = sum(n - 1 for n in seen.values() if n > 1)
    return out, report


def _worker(args):
    path, profile, entity = args
    try:
        rows, report = normalize_file(path, profile, entity)
    except (FileError, NoHeaderFound) as exc:
        return [], IngestReport(file=Path(path).name, error=f"{type(exc).__name__}: {exc}")
    return rows, report


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit value, else ``SPENDLENS_THREADS`` (0 = auto)."""
    if workers is None:
        try:
            workers = int(os.environ.get("SPENDLENS_THREADS", "0"))
        except ValueError:
            workers = 0
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def list_input_files(directory: str | os.PathLike) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileError(f"not a directory: {directory}")
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in RECOGNIZED_EXTENSIONS)


def ingest_directory(
    directory: str | os.PathLike,
    profile: RawFileProfile | None = None,
    entity: str | None = None,
    workers: int | None = None,
):
    """Ingest every recognized file in ``directory``.

    Returns ``(Ledger, reports)``.  Per-file failures become reports with
    ``error`` set; :class:`FileError` is raised only if no file could be read.
    """
    from .ledger import Ledger

    profile = profile or default_profile()
    files = list_input_files(directory)
    jobs = [(str(p), profile, entity) for p in files]
    n = min(resolve_workers(workers), max(len(jobs), 1))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_worker, jobs, chunksize=1))
    else:
        results = [_worker(j) for j in jobs]

    reports = [r for _, r in results]
    if not any(r.ok for r in reports):
        raise FileError(f"no readable input files in {directory}")
    transactions: list[Transaction] = []
    for rows, _ in results:
        transactions.extend(rows)
    for r in reports:
        if not r.ok:
            logger.warning("skipped %s: %s", r.file, r.error)
    ledger = Ledger.from_transactions(transactions, provenance=[r.file for r in reports if r.ok])
    return ledger, reports


def write_reports_csv(reports: Iterable[IngestReport], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file", "status", "rows_read", "rows_kept", "rows_dropped", "drop_reasons",
                    "detected_header_row", "delimiter", "duplicate_rows", "error"])
        for r in reports:
            w.writerow([
                r.file,
                "ok" if r.ok else "error",
                r.rows_read,
                r.rows_kept,
                r.rows_dropped,
                ";".join(f"{k}={v}" for k, v in r.drop_reasons.items()),
                "" if r.detected_header_row is None else r.detected_header_row,
                {",": "comma", "\t": "tab"}.get(r.delimiter, ""),
                r.duplicate_rows,
                r.error or "",
            ])
