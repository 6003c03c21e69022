import datetime as dt
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from spendlens.errors import FileError, MalformedAmount, MalformedDate, NoHeaderFound
from spendlens.ingest import (
    RawFileProfile, default_profile, detect_header, format_amount, ingest_directory, load_profile,
    normalize_file, parse_amount, parse_date, resolve_workers,
)
from spendlens.ledger import write_ledger

PROFILE = default_profile()


# --- header detection ------------------------------------------------------


def test_header_exact_synonyms():
    row = ["Date", "Expense Type", "Expense Area", "Supplier", "Transaction Number", "Amount"]
    idx, colmap = detect_header([row], PROFILE)
    assert idx == 0
    assert colmap == {"date": 0, "expense_type": 1, "expense_area": 2, "supplier": 3, "amount": 5}


def test_header_after_logo_rows():
    header = ["Date", "Expense Type", "Expense Area", "Supplier", "Amount"]
    idx, _ = detect_header([["NHS LOGO"], [""], header], PROFILE)
    assert idx == 2


def test_header_free_text_fails():
    rows = [[f"note {i}", "some words"] for i in range(10)]
    with pytest.raises(NoHeaderFound):
        detect_header(rows, PROFILE)


def test_header_needs_four_fields():
    assert detect_header([["Date", "Supplier", "Amount"], ["Date", "Supplier", "Amount", "Area"]], PROFILE)[0] == 1


def test_header_outside_scan_window():
    prof = RawFileProfile(PROFILE.column_synonyms, max_header_scan_rows=2)
    rows = [["x"], ["y"], ["Date", "Supplier", "Amount", "Expense Type"]]
    with pytest.raises(NoHeaderFound):
        detect_header(rows, prof)


def test_header_case_and_space_insensitive():
    idx, colmap = detect_header([["  DATE ", "supplier   NAME", "Expense\tType", "AMOUNT (£)"]], PROFILE)
    assert set(colmap) == {"date", "supplier", "expense_type", "amount"}


# --- amounts ---------------------------------------------------------------


@pytest.mark.parametrize("text,expected", [
    ("£1,234.56", 123456),
    ("(500.00)", -50000),
    ("25000", 2500000),
    ("-2,000.00", -200000),
    ("£140.00", 14000),
    ("0.5", 50),
    (".75", 75),
    ("1,000,000", 100000000),
    ("  £ 12.3 ", 1230),
    ("-£5.00", -500),
    ("(£5.00)", -500),
    ("12 GBP", 1200),
])
def test_parse_amount(text, expected):
    assert parse_amount(text) == expected


@pytest.mark.parametrize("text", ["", "abc", "12.345", "1,23.00", "1,2345", "--5", "(-5)", "£", "1.2.3", "12,34"])
def test_parse_amount_rejects(text):
    with pytest.raises(MalformedAmount):
        parse_amount(text)


def test_parse_amount_decimal_comma():
    prof = RawFileProfile(PROFILE.column_synonyms, decimal_separator=",")
    assert parse_amount("1.234,56", prof) == 123456


amount_strings = st.builds(
    lambda whole, pence, sep, sym: (
        (sym + (f"{whole:,}" if sep else str(whole)) + f".{pence:02d}"), whole * 100 + pence),
    st.integers(0, 10**12), st.integers(0, 99), st.booleans(), st.sampled_from(["", "£"]),
)


@given(amount_strings)
def test_amount_round_trip(pair):
    text, minor = pair
    assert parse_amount(text) == minor
    assert parse_amount(format_amount(minor)) == minor
    assert format_amount(parse_amount(text)) == format_amount(minor)


@given(amount_strings)
def test_negation_forms(pair):
    text, _ = pair
    v = parse_amount(text)
    assert parse_amount("-" + text) == -v
    assert parse_amount(f"({text})") == -v


@given(st.integers(-10**15, 10**15))
def test_format_amount_canonical(minor):
    s = format_amount(minor)
    assert parse_amount(s) == minor
    assert s.count(".") == 1 and len(s.split(".")[1]) == 2


# --- dates -----------------------------------------------------------------


@pytest.mark.parametrize("text,expected", [
    ("2023-01-31", dt.date(2023, 1, 31)),
    ("31/01/2023", dt.date(2023, 1, 31)),
    ("31-Jan-23", dt.date(2023, 1, 31)),
    ("1 February 2024", dt.date(2024, 2, 1)),
    ("05.04.23", dt.date(2023, 4, 5)),
    ("01/01/69", dt.date(1969, 1, 1)),
    ("01/01/68", dt.date(2068, 1, 1)),
    ("2023-01-31 00:00:00", dt.date(2023, 1, 31)),
    ("3-sept-2022", dt.date(2022, 9, 3)),
])
def test_parse_date(text, expected):
    assert parse_date(text) == expected


def test_parse_date_year_first_profile():
    prof = RawFileProfile(PROFILE.column_synonyms, date_order="year-first")
    assert parse_date("2023/01/31", prof) == dt.date(2023, 1, 31)
    with pytest.raises(MalformedDate):
        parse_date("31/01/2023", prof)


@pytest.mark.parametrize("text", ["31/02/2023", "2023-13-01", "yesterday", "", "31-Foo-23", "13/13/13"])
def test_parse_date_rejects(text):
    with pytest.raises(MalformedDate):
        parse_date(text)


@given(st.dates(dt.date(1969, 1, 1), dt.date(2068, 12, 31)))
def test_date_formats_agree(d):
    assert parse_date(d.isoformat()) == d
    assert parse_date(d.strftime("%d/%m/%Y")) == d
    assert parse_date(d.strftime("%d-%b-%y")) == d


# --- files -----------------------------------------------------------------


def test_normalize_three_rows_one_bad_date(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("Date,Supplier,Expense Type,Amount\n01/01/2023,A,X,10\n32/01/2023,B,X,10\n02/01/2023,C,X,£140.00\n")
    rows, rep = normalize_file(p)
    assert len(rows) == 2
    assert rep.rows_dropped == 1 and rep.drop_reasons == {"MalformedDate": 1}
    assert rows[1].amount_minor == 14000
    assert rows[0].entity == "t"


def test_normalize_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(FileError):
        normalize_file(p)


def test_normalize_binary_file(tmp_path):
    p = tmp_path / "b.csv"
    p.write_bytes(b"\x00\x01\x02garbage")
    with pytest.raises(FileError):
        normalize_file(p)


def test_normalize_bom_and_crlf(tmp_path):
    p = tmp_path / "bom.csv"
    p.write_bytes("﻿Date,Supplier,Expense Area,Amount\r\n2023-01-01,A,Z,5\r\n".encode("utf-8"))
    rows, rep = normalize_file(p)
    assert rep.detected_header_row == 0 and rows[0].amount_minor == 500


def test_report_accounting(fixture_dir):
    for path in sorted(fixture_dir.iterdir()):
        rows, rep = normalize_file(path)
        assert rep.rows_read == rep.rows_kept + rep.rows_dropped
        assert sum(rep.drop_reasons.values()) == rep.rows_dropped
        assert rep.rows_kept == len(rows)


def test_strings_normalized(fixture_dir):
    rows, _ = normalize_file(fixture_dir / "b_south_east.tsv")
    east = [r for r in rows if r.entity == "East ICB"][0]
    assert east.expense_type == "DELEGATED GP"
    assert east.supplier == "gp practice one" and east.supplier_key == "GP PRACTICE ONE"


def test_entity_override(fixture_dir):
    rows, _ = normalize_file(fixture_dir / "b_south_east.tsv", entity="Override")
    assert {r.entity for r in rows} == {"Override"}


def test_direction_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("Date,Supplier,Expense Type,Amount,Dr/Cr\n2023-01-01,A,X,10,DR\n2023-01-02,B,X,10,CR\n")
    prof = RawFileProfile({**PROFILE.column_synonyms, "direction": ("dr/cr",)})
    rows, _ = normalize_file(p, prof)
    assert [r.amount_minor for r in rows] == [1000, -1000]


def test_duplicates_reported(tmp_path):
    p = tmp_path / "dup.csv"
    p.write_text("Date,Supplier,Expense Type,Amount\n2023-01-01,A,X,10\n2023-01-01,A,X,10\n")
    rows, rep = normalize_file(p)
    assert len(rows) == 2 and rep.duplicate_rows == 1


def test_load_profile_extends_defaults(tmp_path):
    p = tmp_path / "prof.json"
    p.write_text(json.dumps({"column_synonyms": {"supplier": ["Paid To"]}, "date_order": "year-first"}))
    prof = load_profile(p)
    assert "paid to" in prof.header_lookup and "supplier" in prof.header_lookup
    assert prof.date_order == "year-first"


def test_load_profile_missing(tmp_path):
    with pytest.raises(FileError):
        load_profile(tmp_path / "nope.json")


def test_profile_invariants():
    with pytest.raises(ValueError):
        RawFileProfile({"date": ("date",)})
    with pytest.raises(ValueError):
        RawFileProfile(PROFILE.column_synonyms, max_header_scan_rows=0)


# --- directories -----------------------------------------------------------


def test_ingest_directory_additive(fixture_dir):
    ledger, reports = ingest_directory(fixture_dir, workers=1)
    assert len(ledger) == sum(r.rows_kept for r in reports) == 10
    assert [r.file for r in reports] == ["a_north_trust.csv", "b_south_east.tsv", "c_west_csu.csv"]


def test_ingest_directory_corrupt_plus_good(tmp_path, fixture_dir):
    (tmp_path / "good.csv").write_bytes((fixture_dir / "c_west_csu.csv").read_bytes())
    (tmp_path / "bad.csv").write_bytes(b"\xff\xfe\x00\x00junk")
    ledger, reports = ingest_directory(tmp_path, workers=1)
    assert len(ledger) == 2
    bad = [r for r in reports if r.file == "bad.csv"][0]
    assert not bad.ok and bad.error.startswith("FileError")


def test_ingest_directory_empty(tmp_path):
    with pytest.raises(FileError):
        ingest_directory(tmp_path)


def test_ingest_directory_missing(tmp_path):
    with pytest.raises(FileError):
        ingest_directory(tmp_path / "nope")


def test_ingest_worker_count_invariant(tmp_path, fixture_dir):
    outs = []
    for w in (1, 2, 3):
        ledger, _ = ingest_directory(fixture_dir, workers=w)
        path = tmp_path / f"l{w}.ndjson"
        write_ledger(ledger, path)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("SPENDLENS_THREADS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    monkeypatch.setenv("SPENDLENS_THREADS", "0")
    assert resolve_workers() >= 1
