"""Rank-order series, power-law and segmented (broken-line) fits.

All fits work on log10(value) against log10(rank).  Segmented fits place
breakpoints on the grid of midpoints between consecutive log-ranks, so
the search is finite and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import AllNonPositive, InfeasibleSegmentation, InvalidArgs, TooFewPoints
from .ledger import AggregateTable

AIC_SSE_FLOOR = 1e-300
_ZERO_SSE_REL = 1e-20


@dataclass(frozen=True, eq=False)
class RankSeries:
    """Positive values in non-increasing order; rank i+1 holds ``values[i]``."""

    labels: tuple[str, ...]
    values: np.ndarray
    metric: str = "value"
    dropped_nonpositive: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or len(self.labels) != v.size:
            raise ValueError("labels and values must be equal-length 1-D sequences")
        if v.size and not (np.all(np.isfinite(v)) and np.all(v > 0)):
            raise ValueError("rank series values must be finite and positive")
        if np.any(np.diff(v) > 0):
            raise ValueError("rank series values must be non-increasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_values(cls, values: Sequence[float], labels: Sequence[str] | None = None,
                    metric: str = "value") -> "RankSeries":
        """Sort arbitrary positive values descending (stable on input order)."""
        v = np.asarray(values, dtype=np.float64)
        if labels is None:
            width = len(str(v.size))
            labels = [f"R{i + 1:0{width}d}" for i in range(v.size)]
        order = np.argsort(-v, kind="stable")
        return cls(tuple(labels[i] for i in order), v[order], metric)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def ranks(self) -> np.ndarray:
        return np.arange(1, self.n + 1, dtype=np.float64)

    @property
    def log_ranks(self) -> np.ndarray:
        return np.log10(self.ranks)

    @property
    def log_values(self) -> np.ndarray:
        return np.log10(self.values)

    def scaled(self, factor: float) -> "RankSeries":
        return RankSeries(self.labels, self.values * factor, self.metric, self.dropped_nonpositive)


def rank_series(table: AggregateTable, metric: str = "count") -> RankSeries:
    """Rank the rows of an aggregate table.

    ``metric`` is ``count``, ``amount`` (signed sum, in pounds) or
    ``abs-amount``.  Rows with a non-positive metric are dropped and
    counted; ties are broken by key ascending.
    """
    if not table.rows:
        raise AllNonPositive("aggregate table is empty")
    if metric == "count":
        pairs = [(r.key, r.count) for r in table.rows]
    elif metric == "amount":
        pairs = [(r.key, r.amount_minor_sum) for r in table.rows]
    elif metric == "abs-amount":
        pairs = [(r.key, r.amount_minor_abs_sum) for r in table.rows]
    else:
        raise InvalidArgs(f"unknown metric {metric!r}")
    kept = [(k, v) for k, v in pairs if v > 0]
    if not kept:
        raise AllNonPositive(f"no row has a positive {metric}")
    kept.sort(key=lambda kv: (-kv[1], kv[0]))
    scale = 1.0 if metric == "count" else 0.01
    return RankSeries(
        tuple(k for k, _ in kept),
        np.array([v * scale for _, v in kept], dtype=np.float64),
        metric,
        len(pairs) - len(kept),
    )


# ---------------------------------------------------------------------------
# information criterion


def aic(n: int, sse: float, p: int) -> float:
    """Gaussian least-squares AIC, ``n ln(SSE/n) + 2p`` with SSE floored at 1e-300."""
    if n <= p or p < 0:
        raise InvalidArgs(f"need n > p >= 0 (n={n}, p={p})")
    if not sse >= 0:
        raise InvalidArgs(f"sse must be non-negative, got {sse}")
    return n * math.log(max(sse, AIC_SSE_FLOOR) / n) + 2 * p


def effective_sse(sse: float, y: np.ndarray) -> float:
    """Residuals at rounding level count as an exact fit (SSE = 0)."""
    return 0.0 if sse <= _ZERO_SSE_REL * float(y @ y) else sse


# ---------------------------------------------------------------------------
# power law


@dataclass(frozen=True)
class PowerFit:
    log_y0: float
    beta: float
    sse: float
    r2: float
    n: int

    @property
    def aic(self) -> float:
        return aic(self.n, self.sse, 2)


def _ols_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return float(coef[0]), float(coef[1]), float(resid @ resid)


def fit_power(series: RankSeries) -> PowerFit:
    """OLS of log10 y on log10 R."""
    if series.n < 3:
        raise TooFewPoints(f"power fit needs at least 3 points, got {series.n}")
    x, y = series.log_ranks, series.log_values
    b0, b1, sse = _ols_line(x, y)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - sse / tss if tss > 0 else 1.0
    return PowerFit(b0, b1, sse, r2, series.n)


# ---------------------------------------------------------------------------
# segmented fits


@dataclass(frozen=True)
class SegmentedFit:
    k: int
    breakpoints: tuple[float, ...]
    segments: tuple[tuple[float, float], ...]
    continuous: bool
    sse: float
    aic: float
    n: int
    splits: tuple[int, ...] = field(default=(), repr=False)

    @property
    def breakpoints_rank(self) -> tuple[float, ...]:
        return tuple(10.0 ** b for b in self.breakpoints)

    @property
    def n_params(self) -> int:
        return segmented_param_count(self.k, self.continuous)

    def predict(self, log_rank: np.ndarray) -> np.ndarray:
        """log10 y at the given log10 ranks."""
        x = np.asarray(log_rank, dtype=np.float64)
        seg = np.searchsorted(np.asarray(self.breakpoints), x, side="right")
        coefs = np.asarray(self.segments)
        return coefs[seg, 0] + coefs[seg, 1] * x


def segmented_param_count(k: int, continuous: bool) -> int:
    return 2 + k * (2 if continuous else 3)


def _check_feasible(n: int, k: int, m: int) -> None:
    if k < 0:
        raise InvalidArgs("number of breakpoints must be >= 0")
    if m < 2:
        raise InvalidArgs("min_segment_size must be >= 2")
    if n < 3:
        raise TooFewPoints(f"segmented fit needs at least 3 points, got {n}")
    if n < (k + 1) * m:
        raise InfeasibleSegmentation(
            f"{n} points cannot hold {k + 1} segment{'s' if k else ''} of at least {m} points"
        )


def _midpoint(x: np.ndarray, s: int) -> float:
    return 0.5 * (float(x[s]) + float(x[s + 1]))


def _hinge_matrix(x: np.ndarray, splits: Sequence[int]) -> np.ndarray:
    cols = [np.ones_like(x), x]
    cols += [np.maximum(x - _midpoint(x, s), 0.0) for s in splits]
    return np.column_stack(cols)


def _solve_continuous(x, y, splits):
    X = _hinge_matrix(x, splits)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    a, b = float(coef[0]), float(coef[1])
    segments = [(a, b)]
    for s, c in zip(splits, coef[2:]):
        p = _midpoint(x, s)
        a, b = a - float(c) * p, b + float(c)
        segments.append((a, b))
    return segments, float(resid @ resid)


def _solve_discontinuous(x, y, splits):
    bounds = [0, *[s + 1 for s in splits], x.size]
    segments = []
    sse = 0.0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        a, b, e = _ols_line(x[lo:hi], y[lo:hi])
        segments.append((a, b))
        sse += e
    return segments, sse


def _feasible_mask(n: int, m: int, fixed: Sequence[int]) -> np.ndarray:
    """Split positions that keep every piece at >= m points given ``fixed``."""
    s = np.arange(n - 1)
    ok = (s >= m - 1) & (s <= n - 1 - m)
    for f in fixed:
        ok &= np.abs(s - f) >= m
    return ok


def _hinge_gains(x: np.ndarray, y: np.ndarray, fixed: Sequence[int]) -> np.ndarray:
    """SSE reduction from adding one hinge at each split, given ``fixed`` hinges.

    Uses ``SSE_new = SSE_base - (h'e)^2 / (h'M h)`` where ``e`` is the
    base residual and ``M`` the base annihilator; the sums over
    ``x > psi`` come from suffix sums, so all splits cost O(n q^2).
    """
    Z = _hinge_matrix(x, fixed)
    G = np.linalg.pinv(Z.T @ Z)
    e = y - Z @ (G @ (Z.T @ y))
    n = x.size
    psi = 0.5 * (x[:-1] + x[1:])

    def after(v):  # sum over points s+1..n-1, for s = 0..n-2
        return np.cumsum(v[::-1])[::-1][1:]

    # shift to the last abscissa so tail hinges are summed without cancellation
    d, q = x - x[-1], psi - x[-1]
    s0 = np.arange(n - 1, 0, -1, dtype=np.float64)
    s1, s2 = after(d), after(d * d)
    hh = np.maximum(s2 - 2 * q * s1 + q * q * s0, 0.0)
    he = after(d * e) - q * after(e)
    C = np.column_stack([after(z * d) - q * after(z) for z in Z.T])
    v = hh - np.einsum("ij,jk,ik->i", C, G, C)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(v > 1e-12 * hh, he * he / v, 0.0)
    return gain


def _segment_sse_range(tab, lo: int, hi: int) -> float:
    return float(_kernels.python_backend.segment_sse(tab, lo, hi))


def _best_split_in(tab, lo: int, hi: int, m: int) -> tuple[int, float]:
    """Best single split of points lo..hi-1 into two pieces of >= m points."""
    ss = np.arange(lo + m - 1, hi - m)
    if ss.size == 0:
        return -1, math.inf
    seg = _kernels.python_backend.segment_sse
    sse = seg(tab, lo, ss + 1) + seg(tab, ss + 1, hi)
    k = int(np.argmin(sse))
    return int(ss[k]), float(sse[k])


def _search_one(x, y, m, continuous):
    n = x.size
    if continuous:
        gain = _hinge_gains(x, y, [])
        gain[~_feasible_mask(n, m, [])] = -np.inf
        return [int(np.argmax(gain))]
    tab = _kernels.python_backend.segment_sse_table(x, y)
    s, _ = _best_split_in(tab, 0, n, m)
    return [s]


def _add_one(x, y, m, continuous, splits):
    n = x.size
    if continuous:
        gain = _hinge_gains(x, y, splits)
        mask = _feasible_mask(n, m, splits)
        if not mask.any():
            raise InfeasibleSegmentation("no room for another breakpoint")
        gain[~mask] = -np.inf
        return sorted([*splits, int(np.argmax(gain))])
    tab = _kernels.python_backend.segment_sse_table(x, y)
    bounds = [0, *[s + 1 for s in splits], n]
    best = (-math.inf, -1)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        s, sse = _best_split_in(tab, lo, hi, m)
        if s >= 0:
            improvement = _segment_sse_range(tab, lo, hi) - sse
            if improvement > best[0]:
                best = (improvement, s)
    if best[1] < 0:
        raise InfeasibleSegmentation("no room for another breakpoint")
    return sorted([*splits, best[1]])


def _refine(x, y, m, continuous, splits, solve, max_sweeps=50):
    """Coordinate descent: move one breakpoint at a time to its best grid
    position with the others held fixed, until a sweep changes nothing."""
    n = x.size
    _, current = solve(x, y, splits)
    tab = None if continuous else _kernels.python_backend.segment_sse_table(x, y)
    for _ in range(max_sweeps):
        changed = False
        for idx in range(len(splits)):
            others = splits[:idx] + splits[idx + 1:]
            if continuous:
                gain = _hinge_gains(x, y, others)
                gain[~_feasible_mask(n, m, others)] = -np.inf
                cand = int(np.argmax(gain))
            else:
                lo = splits[idx - 1] + 1 if idx > 0 else 0
                hi = splits[idx + 1] + 1 if idx + 1 < len(splits) else n
                cand, _ = _best_split_in(tab, lo, hi, m)
            if cand == splits[idx] or cand < 0:
                continue
            trial = sorted(others + [cand])
            _, sse = solve(x, y, trial)
            if sse < current * (1 - 1e-12):
                splits, current, changed = trial, sse, True
        if not changed:
            break
    return splits


def fit_segmented(series: RankSeries, k: int, continuous: bool = True,
                  min_segment_size: int = 5) -> SegmentedFit:
    """Least-squares broken line in log-log space with ``k`` breakpoints.

    Breakpoints are searched exhaustively over the midpoint grid for
    k <= 2; larger k extends the best two-breakpoint solution greedily
    and then refines each breakpoint in turn.  ``continuous=False`` fits
    an independent line on every piece.
    """
    n = series.n
    _check_feasible(n, k, min_segment_size)
    x, y = series.log_ranks, series.log_values
    m = min_segment_size
    if k == 0:
        pf = fit_power(series)
        sse_eff = effective_sse(pf.sse, y)
        return SegmentedFit(0, (), ((pf.log_y0, pf.beta),), continuous, pf.sse,
                            aic(n, sse_eff, 2), n)

    solve = _solve_continuous if continuous else _solve_discontinuous
    if k == 1:
        splits = _search_one(x, y, m, continuous)
    else:
        xc, yc = x - x.mean(), y - y.mean()
        pair = (_kernels.best_pair_continuous if continuous else _kernels.best_pair_discontinuous)
        i, j, _ = pair(xc, yc, m)
        if i < 0:
            raise InfeasibleSegmentation(f"no feasible placement of 2 breakpoints in {n} points")
        splits = [int(i), int(j)]
        if k > 2:
            for _ in range(k - 2):
                splits = _add_one(x, y, m, continuous, splits)
            splits = _refine(x, y, m, continuous, splits, solve)

    segments, sse = solve(x, y, splits)
    p = segmented_param_count(k, continuous)
    return SegmentedFit(
        k=k,
        breakpoints=tuple(_midpoint(x, s) for s in splits),
        segments=tuple(segments),
        continuous=continuous,
        sse=sse,
        aic=aic(n, effective_sse(sse, y), p),
        n=n,
        splits=tuple(splits),
    )


def segment_ladder(series: RankSeries, max_k: int, continuous: bool = True,
                   min_segment_size: int = 5) -> list[SegmentedFit]:
    """Fits for k = 0..max_k, stopping early once k is infeasible."""
    if max_k < 0:
        raise InvalidArgs("max_k must be >= 0")
    fits = [fit_segmented(series, 0, continuous, min_segment_size)]
    for k in range(1, max_k + 1):
        try:
            fits.append(fit_segmented(series, k, continuous, min_segment_size))
        except InfeasibleSegmentation:
            break
    return fits


def select_segments(series: RankSeries, max_k: int = 3, continuous: bool = True,
                    min_segment_size: int = 5) -> SegmentedFit:
    """Minimum-AIC fit among k = 0..max_k; ties go to the smaller k."""
    fits = segment_ladder(series, max_k, continuous, min_segment_size)
    return min(fits, key=lambda f: (f.aic, f.k))


# ---------------------------------------------------------------------------
# Davies test


@dataclass(frozen=True)
class DaviesResult:
    statistic: float
    p_bound: float
    candidates: int
    psi: tuple[float, ...] = field(default=(), repr=False)
    t_values: tuple[float, ...] = field(default=(), repr=False)


def _hinge_t(x: np.ndarray, y: np.ndarray, psi: float) -> float:
    X = np.column_stack([np.ones_like(x), x, np.maximum(x - psi, 0.0)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = x.size - 3
    sigma2 = float(resid @ resid) / dof
    cov = np.linalg.inv(X.T @ X)
    c = float(coef[2])
    scale = max(float(np.abs(y - y.mean()).max()), 1e-300)
    if sigma2 <= (1e-12 * scale) ** 2:
        # exact fit: t is 0/0 or c/0
        return 0.0 if abs(c) <= 1e-9 * max(1.0, float(np.abs(coef[1]))) else math.copysign(math.inf, c)
    return c / math.sqrt(sigma2 * cov[2, 2])


def davies_bound(x: np.ndarray, y: np.ndarray, candidates: int = 10) -> DaviesResult:
    """Davies-type upper bound on the p-value for a slope change.

    At ``candidates`` equally spaced interior quantiles psi of ``x`` the
    model ``y ~ 1 + x + (x - psi)+`` is fitted and the t-statistic of the
    hinge coefficient recorded.  With M = max|t| and V the total variation
    of t across candidates, ``p <= 2 Phi(-M) + 2 V exp(-M^2/2) / sqrt(8 pi)``.
    The crossing term is doubled along with the tail term because |t| can
    cross M from either side; without it the bound is anti-conservative.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 10:
        raise TooFewPoints(f"Davies test needs at least 10 points, got {x.size}")
    if candidates < 3:
        raise InvalidArgs("candidates must be >= 3")
    psi = np.quantile(x, np.arange(1, candidates + 1) / (candidates + 1))
    t = np.array([_hinge_t(x, y, float(p)) for p in psi])
    m = float(np.abs(t).max())
    if math.isinf(m):
        return DaviesResult(m, 0.0, candidates, tuple(psi), tuple(t))
    v = float(np.abs(np.diff(t)).sum())
    p = 2 * (0.5 * math.erfc(m / math.sqrt(2)) + v * math.exp(-m * m / 2) / math.sqrt(8 * math.pi))
    return DaviesResult(m, min(1.0, p), candidates, tuple(psi), tuple(t))


def davies_test(series: RankSeries, candidates: int = 10) -> DaviesResult:
    return davies_bound(series.log_ranks, series.log_values, candidates)


# ---------------------------------------------------------------------------
# serialization


def segmented_to_dict(fit: SegmentedFit, davies: DaviesResult | None = None) -> dict:
    out = {
        "model": "power" if fit.k == 0 else "segmented",
        "k": fit.k,
        "continuous": fit.continuous,
        "breakpoints_log10": list(fit.breakpoints),
        "breakpoints_rank": list(fit.breakpoints_rank),
        "segments": [{"intercept": a, "slope": b} for a, b in fit.segments],
        "sse": fit.sse,
        "aic": fit.aic,
        "n": fit.n,
    }
    if davies is not None:
        out["davies"] = {"statistic": davies.statistic, "p_bound": davies.p_bound,
                         "candidates": davies.candidates}
    return out
