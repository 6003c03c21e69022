import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spendlens.errors import AllNonPositive, InfeasibleSegmentation, InvalidArgs, TooFewPoints
from spendlens.ledger import AggregateRow, AggregateTable, KeyKind
from spendlens.rankfit import (
    RankSeries, aic, davies_bound, davies_test, fit_power, fit_segmented, rank_series, segment_ladder,
    segmented_to_dict, select_segments,
)
from spendlens.synth import Family, SynthSpec, generate, grid_breakpoint

TWO_REGIME = {"y0": 1000.0, "slopes": [-0.3, -1.5], "breakpoints_log10": [2.0]}


def _table(pairs):
    return AggregateTable(KeyKind.SUPPLIER, tuple(AggregateRow(k, c, a, abs(a)) for k, c, a in pairs))


# --- rank series -----------------------------------------------------------


def test_rank_series_tie_rule():
    s = rank_series(_table([("A", 5, 1), ("B", 9, 1), ("C", 5, 1)]), "count")
    assert s.labels == ("B", "A", "C") and list(s.values) == [9, 5, 5]


def test_rank_series_single_row():
    assert rank_series(_table([("A", 1, 100)]), "count").n == 1


def test_rank_series_drops_nonpositive():
    s = rank_series(_table([("A", 1, 10000), ("B", 1, -5000)]), "amount")
    assert s.labels == ("A",) and s.dropped_nonpositive == 1 and s.values[0] == 100.0


def test_rank_series_errors():
    with pytest.raises(AllNonPositive):
        rank_series(_table([("B", 1, -5000)]), "amount")
    with pytest.raises(AllNonPositive):
        rank_series(_table([]), "count")
    with pytest.raises(InvalidArgs):
        rank_series(_table([("A", 1, 1)]), "median")


def test_rank_series_invariants():
    with pytest.raises(ValueError):
        RankSeries(("a", "b"), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        RankSeries(("a",), np.array([0.0]))
    s = RankSeries.from_values([1.0, 3.0, 2.0])
    assert list(s.values) == [3.0, 2.0, 1.0] and s.labels == ("R2", "R3", "R1")
    with pytest.raises(ValueError):
        s.values[0] = 5.0


# --- AIC -------------------------------------------------------------------


def test_aic_examples():
    assert aic(100, 1.0, 2) == pytest.approx(100 * math.log(0.01) + 4)
    assert aic(100, 1.0, 2) == pytest.approx(-456.517, abs=1e-3)
    assert aic(100, 1.0, 4) - aic(100, 1.0, 2) == pytest.approx(4.0)
    assert math.isfinite(aic(10, 0.0, 2)) and aic(10, 0.0, 2) < -6000


@pytest.mark.parametrize("args", [(2, 1.0, 2), (5, -1.0, 2), (5, float("nan"), 1)])
def test_aic_invalid(args):
    with pytest.raises(InvalidArgs):
        aic(*args)


# --- power -----------------------------------------------------------------


def _power(y0, beta, n):
    r = np.arange(1, n + 1, dtype=np.float64)
    return RankSeries.from_values(y0 * r ** beta)


def test_power_exact():
    f = fit_power(_power(100, -1.2, 50))
    assert abs(f.log_y0 - 2) < 1e-9 and abs(f.beta + 1.2) < 1e-9


def test_power_constant():
    f = fit_power(RankSeries.from_values([7.0] * 20))
    assert abs(f.beta) < 1e-12 and f.log_y0 == pytest.approx(math.log10(7))


def test_power_noisy_seeded():
    s = generate(SynthSpec(Family.POWER, {"y0": 100.0, "beta": -1.2}, 1000, 0.05, seed=11))
    assert abs(fit_power(s).beta + 1.2) <= 0.02


def test_power_too_few():
    with pytest.raises(TooFewPoints):
        fit_power(RankSeries.from_values([2.0, 1.0]))


@given(st.floats(0.01, 1e6), st.floats(-3, 0), st.integers(3, 300))
def test_power_recovery_property(y0, beta, n):
    f = fit_power(_power(y0, beta, n))
    assert abs(f.beta - beta) <= 1e-9 and abs(f.log_y0 - math.log10(y0)) <= 1e-9


# --- segmented -------------------------------------------------------------


def test_k0_matches_power():
    s = _power(50, -0.8, 40)
    seg, pf = fit_segmented(s, 0), fit_power(s)
    assert seg.segments == ((pf.log_y0, pf.beta),) and seg.sse == pf.sse


def test_two_regime_seeded_recovery():
    s = generate(SynthSpec(Family.SEGMENTED, TWO_REGIME, 1000, 0.05, seed=3))
    f = fit_segmented(s, 1)
    assert abs(f.breakpoints[0] - 2.0) <= 0.2
    assert abs(f.segments[0][1] + 0.3) <= 0.05 and abs(f.segments[1][1] + 1.5) <= 0.05


@pytest.mark.parametrize("k,params", [
    (1, {**TWO_REGIME, "breakpoints_log10": [grid_breakpoint(100)]}),
    (2, {"y0": 500.0, "slopes": [-0.2, -1.0, -2.0], "breakpoints_log10": [grid_breakpoint(10), grid_breakpoint(120)]}),
])
def test_exact_continuous(k, params):
    s = generate(SynthSpec(Family.SEGMENTED, params, 400, 0.0))
    f = fit_segmented(s, k)
    assert f.sse < 1e-18
    x = s.log_ranks
    for bp, split in zip(params["breakpoints_log10"], f.splits):
        assert x[split] < bp < x[split + 1]
        assert f.breakpoints[list(f.splits).index(split)] == pytest.approx(bp, abs=1e-12)


def test_continuity_at_breakpoints():
    s = generate(SynthSpec(Family.SEGMENTED, TWO_REGIME, 300, 0.1, seed=5))
    for k in (1, 2, 3):
        f = fit_segmented(s, k)
        for bp, (a0, b0), (a1, b1) in zip(f.breakpoints, f.segments, f.segments[1:]):
            assert abs((a0 + b0 * bp) - (a1 + b1 * bp)) < 1e-9


def test_min_segment_size_respected():
    s = generate(SynthSpec(Family.SEGMENTED, TWO_REGIME, 200, 0.2, seed=9))
    for cont in (True, False):
        for k in (1, 2, 3):
            f = fit_segmented(s, k, continuous=cont, min_segment_size=7)
            bounds = [0, *[sp + 1 for sp in f.splits], s.n]
            assert min(b - a for a, b in zip(bounds, bounds[1:])) >= 7
            assert list(f.breakpoints) == sorted(f.breakpoints)
            assert all(0 < b < math.log10(s.n) for b in f.breakpoints)


def _brute(x, y, k, m, continuous):
    n = x.size
    best = math.inf
    for splits in itertools.combinations(range(m - 1, n - m), k):
        bounds = [0, *[s + 1 for s in splits], n]
        if min(b - a for a, b in zip(bounds, bounds[1:])) < m:
            continue
        if continuous:
            cols = [np.ones(n), x] + [np.maximum(x - 0.5 * (x[s] + x[s + 1]), 0) for s in splits]
            X = np.column_stack(cols)
            c, *_ = np.linalg.lstsq(X, y, rcond=None)
            sse = float(((y - X @ c) ** 2).sum())
        else:
            sse = 0.0
            for a, b in zip(bounds, bounds[1:]):
                X = np.column_stack([np.ones(b - a), x[a:b]])
                c, *_ = np.linalg.lstsq(X, y[a:b], rcond=None)
                sse += float(((y[a:b] - X @ c) ** 2).sum())
        best = min(best, sse)
    return best


@pytest.mark.parametrize("continuous", [True, False])
@pytest.mark.parametrize("k", [1, 2])
def test_exhaustive_matches_brute_force(k, continuous):
    rng = np.random.default_rng(k + 10 * continuous)
    s = RankSeries.from_values(np.exp(rng.normal(0, 1.0, 40)) * np.arange(40, 0, -1))
    f = fit_segmented(s, k, continuous=continuous, min_segment_size=4)
    assert f.sse == pytest.approx(_brute(s.log_ranks, s.log_values, k, 4, continuous), rel=1e-9, abs=1e-12)


def test_nesting_k_le_2():
    for seed in range(5):
        s = generate(SynthSpec(Family.POWER, {"y0": 10.0, "beta": -1.0}, 120, 0.3, seed=seed))
        for cont in (True, False):
            sse = [fit_segmented(s, k, cont).sse for k in (0, 1, 2)]
            assert sse[1] <= sse[0] + 1e-12 and sse[2] <= sse[1] + 1e-12


def test_infeasible():
    s = _power(1, -1, 9)
    with pytest.raises(InfeasibleSegmentation):
        fit_segmented(s, 1)
    with pytest.raises(TooFewPoints):
        fit_segmented(_power(1, -1, 2), 0, min_segment_size=2)
    with pytest.raises(InvalidArgs):
        fit_segmented(s, -1)


def test_ladder_stops_at_infeasible():
    fits = segment_ladder(_power(1, -1, 12), 5)
    assert [f.k for f in fits] == [0, 1]


def test_select_noise_free_line():
    assert select_segments(_power(100, -1.2, 200), 3).k == 0


def test_select_prefers_break_over_line():
    s = generate(SynthSpec(Family.SEGMENTED, TWO_REGIME, 1000, 0.05, seed=21))
    assert select_segments(s, 1).k == 1


def test_discontinuous_param_count():
    s = generate(SynthSpec(Family.SEGMENTED, TWO_REGIME, 300, 0.05, seed=2))
    assert fit_segmented(s, 1, continuous=False).n_params == 5
    assert fit_segmented(s, 1).n_params == 4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.01, 1000), st.integers(0, 2))
def test_scale_invariance(seed, factor, k):
    s = generate(SynthSpec(Family.SEGMENTED, TWO_REGIME, 150, 0.1, seed=seed))
    a, b = fit_segmented(s, k), fit_segmented(s.scaled(factor), k)
    assert a.splits == b.splits
    for (ia, sa), (ib, sb) in zip(a.segments, b.segments):
        assert sb == pytest.approx(sa, abs=1e-8)
        assert ib - ia == pytest.approx(math.log10(factor), abs=1e-8)
    assert select_segments(s, 2).k == select_segments(s.scaled(factor), 2).k


# --- Davies ----------------------------------------------------------------


def test_davies_exact_null():
    d = davies_test(_power(100, -1.2, 100))
    assert d.p_bound == 1.0 and d.statistic == 0.0


def test_davies_strong_two_regime():
    s = generate(SynthSpec(Family.SEGMENTED, TWO_REGIME, 1000, 0.05, seed=4))
    assert davies_test(s).p_bound < 0.01


def test_davies_args():
    with pytest.raises(TooFewPoints):
        davies_test(_power(1, -1, 9))
    with pytest.raises(InvalidArgs):
        davies_test(_power(1, -1, 20), candidates=2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(1e-3, 1e3), st.integers(3, 15))
def test_davies_bounds_and_scale(seed, factor, cands):
    rng = np.random.default_rng(seed)
    x = np.log10(np.arange(1, 61))
    y = 2 - x + rng.normal(0, 0.1, x.size)
    a = davies_bound(x, y, cands)
    b = davies_bound(x, y + math.log10(factor), cands)
    assert 0.0 <= a.p_bound <= 1.0
    assert b.statistic == pytest.approx(a.statistic, rel=1e-6)


def test_to_dict():
    s = generate(SynthSpec(Family.SEGMENTED, TWO_REGIME, 300, 0.05, seed=2))
    d = segmented_to_dict(fit_segmented(s, 1), davies_test(s))
    assert set(d) >= {"model", "k", "breakpoints_log10", "breakpoints_rank", "segments", "sse", "aic", "davies"}
    assert d["breakpoints_rank"][0] == pytest.approx(10 ** d["breakpoints_log10"][0])


def test_davies_bound_formula():
    rng = np.random.default_rng(8)
    x = np.log10(np.arange(1, 201))
    d = davies_bound(x, 1 - 0.8 * x + rng.normal(0, 0.1, x.size), 10)
    t = np.asarray(d.t_values)
    m, v = np.abs(t).max(), np.abs(np.diff(t)).sum()
    tail = 0.5 * math.erfc(m / math.sqrt(2))
    assert d.statistic == m
    assert d.p_bound == pytest.approx(min(1.0, 2 * tail + 2 * v * math.exp(-m * m / 2) / math.sqrt(8 * math.pi)))
