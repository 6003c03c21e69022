"""Generalized rank-size laws and cross-model AIC comparison.

The family fitted here is

    y(r) = A (N + 1 - r + d)^b / (r + c)^a,     r = 1..N

which is the three-parameter discrete generalized beta law when
c = d = 0.  ``c`` shifts low ranks (Zipf-Mandelbrot) and ``d`` shifts
high ranks.  Fitting minimizes squared residuals of log10 y.  For fixed
(c, d) the model is linear in (log10 A, a, b), so only (c, d) need a
nonlinear search.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import AnalysisError, OutOfRange, TooFewPoints
from .rankfit import RankSeries, aic, effective_sse, fit_power, fit_segmented, segmented_param_count

SHIFT_LOWER = -1.0
SHIFT_UPPER = 1e6
RESTART_GRID = (0.0, 1.0, 10.0)
MAX_LOG10_A = 300.0


class GenModel(str, enum.Enum):
    DGBD3 = "dgbd3"
    AC4_C0 = "ac4_c0"
    AC5 = "ac5"

    @property
    def n_params(self) -> int:
        return {"dgbd3": 3, "ac4_c0": 4, "ac5": 5}[self.value]


@dataclass(frozen=True)
class GenFit:
    A: float
    a: float
    b: float
    c: float
    d: float
    N: int
    sse: float = 0.0
    aic: float = math.nan
    model: GenModel = GenModel.AC5
    converged: bool = True

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive")
        if not (self.c > SHIFT_LOWER and self.d > SHIFT_LOWER):
            raise ValueError("c and d must exceed -1")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    def predict(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        return self.A * (self.N + 1 - r + self.d) ** self.b / (r + self.c) ** self.a


def eval_gen(fit: GenFit, r: int) -> float:
    if not 1 <= r <= fit.N:
        raise OutOfRange(f"rank {r} outside 1..{fit.N}")
    return float(fit.A * (fit.N + 1 - r + fit.d) ** fit.b / (r + fit.c) ** fit.a)


def _profile(log_y: np.ndarray, N: int, c: float, d: float):
    """Best (log10 A, a, b) and SSE for fixed shifts."""
    r = np.arange(1, N + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        X = np.column_stack([np.ones(N), -np.log10(r + c), np.log10(N + 1 - r + d)])
    if not np.all(np.isfinite(X)):
        return np.full(3, np.nan), math.inf
    try:
        coef, *_ = np.linalg.lstsq(X, log_y, rcond=None)
    except np.linalg.LinAlgError:
        return np.full(3, np.nan), math.inf
    if abs(coef[0]) > MAX_LOG10_A:
        # A would overflow a double: near-collinear limit (d -> large), treated as infeasible
        return coef, math.inf
    resid = log_y - X @ coef
    return coef, float(resid @ resid)


def fit_dgbd(series: RankSeries) -> GenFit:
    """Three-parameter law by log-space OLS; exact on noise-free input."""
    if series.n < 4:
        raise TooFewPoints(f"DGBD fit needs at least 4 points, got {series.n}")
    y = series.log_values
    coef, sse = _profile(y, series.n, 0.0, 0.0)
    return GenFit(
        A=10.0 ** coef[0], a=float(coef[1]), b=float(coef[2]), c=0.0, d=0.0, N=series.n,
        sse=sse, aic=aic(series.n, effective_sse(sse, y), 3), model=GenModel.DGBD3,
    )


# ---------------------------------------------------------------------------
# Nelder-Mead


@dataclass(frozen=True)
class NMResult:
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0: Sequence[float],
    step: float = 0.5,
    max_iter: int = 500,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-26,
    x_tol: float = 1e-12,
) -> NMResult:
    """Plain Nelder-Mead (reflect 1, expand 2, contract 1/2, shrink 1/2).

    Converged when the spread of f over the simplex falls below
    ``rel_tol * |f_best|`` (or ``abs_tol``), or the simplex collapses
    below ``x_tol``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    dim = x0.size
    simplex = np.vstack([x0] + [x0 + step * np.eye(dim)[i] for i in range(dim)])
    fs = np.array([f(p) for p in simplex])
    for it in range(1, max_iter + 1):
        order = np.argsort(fs, kind="stable")
        simplex, fs = simplex[order], fs[order]
        spread = fs[-1] - fs[0]
        if (spread <= rel_tol * abs(fs[0]) or spread <= abs_tol
                or np.max(np.abs(simplex[1:] - simplex[0])) <= x_tol):
            return NMResult(simplex[0], float(fs[0]), True, it - 1)
        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + (centroid - simplex[-1])
        fr = f(xr)
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - simplex[-1])
            fe = f(xe)
            simplex[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < fs[-2]:
            simplex[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (simplex[-1] - centroid)
            fc = f(xc)
            if fc < min(fr, fs[-1]):
                simplex[-1], fs[-1] = xc, fc
            else:
                simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
                fs[1:] = [f(p) for p in simplex[1:]]
    order = np.argsort(fs, kind="stable")
    return NMResult(simplex[order[0]], float(fs[order[0]]), False, max_iter)


def _to_shift(u: np.ndarray) -> np.ndarray:
    # floor keeps the shift strictly above -1 when softplus underflows
    return np.minimum(SHIFT_LOWER + np.maximum(np.logaddexp(0.0, u), 1e-12), SHIFT_UPPER)


def _from_shift(v: float) -> float:
    # inverse of softplus(u) = v + 1
    z = v - SHIFT_LOWER
    return float(z if z > 700 else np.log(np.expm1(z)))


def _search_shifts(log_y, N, starts, fix_c_zero):
    def objective(u):
        c, d = (0.0, _to_shift(u)[0]) if fix_c_zero else tuple(_to_shift(u))
        return _profile(log_y, N, c, d)[1]

    best = None
    for start in starts:
        u0 = [_from_shift(start[1])] if fix_c_zero else [_from_shift(start[0]), _from_shift(start[1])]
        res = nelder_mead(objective, u0)
        if best is None or res.fun < best.fun:
            best = res
    return best


def fit_ac(series: RankSeries, fix_c_zero: bool = False) -> GenFit:
    """Four (c = 0) or five-parameter law by profile least squares.

    The outer Nelder-Mead search runs on softplus-transformed shifts so
    c, d stay in (-1, 1e6), starting at c = d = 0 (the DGBD optimum).
    The five-parameter search also starts from the four-parameter optimum,
    so its SSE never exceeds the nested models'.  If no start converges,
    the restart grid {0, 1, 10}^2 is tried and the best result returned
    with ``converged=False`` if that fails too.
    """
    n_min = 6
    if series.n < n_min:
        raise TooFewPoints(f"AC fit needs at least {n_min} points, got {series.n}")
    y = series.log_values
    N = series.n
    starts = [(0.0, 0.0)]
    if not fix_c_zero:
        ac4 = fit_ac(series, fix_c_zero=True)
        starts.append((0.0, ac4.d))
    best = _search_shifts(y, N, starts, fix_c_zero)
    if not best.converged:
        grid = [(0.0, d) for d in RESTART_GRID] if fix_c_zero else [
            (c, d) for c in RESTART_GRID for d in RESTART_GRID]
        retry = _search_shifts(y, N, grid, fix_c_zero)
        if retry.fun < best.fun or (retry.converged and retry.fun <= best.fun):
            best = retry
    shifts = _to_shift(best.x)
    c, d = (0.0, float(shifts[0])) if fix_c_zero else (float(shifts[0]), float(shifts[1]))
    coef, sse = _profile(y, N, c, d)
    model = GenModel.AC4_C0 if fix_c_zero else GenModel.AC5
    return GenFit(
        A=10.0 ** coef[0], a=float(coef[1]), b=float(coef[2]), c=c, d=d, N=N, sse=sse,
        aic=aic(N, effective_sse(sse, y), model.n_params), model=model, converged=best.converged,
    )


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class ModelRow:
    model: str
    n_params: int
    sse: float
    aic: float
    delta_aic: float
    akaike_weight: float


@dataclass(frozen=True)
class ModelTable:
    rows: tuple[ModelRow, ...]
    fits: dict

    @property
    def best(self) -> str:
        return self.rows[0].model


def compare_models(series: RankSeries, max_breakpoints: int = 2, continuous: bool = True,
                   min_segment_size: int = 5) -> ModelTable:
    """Fit every candidate model and rank them by AIC.

    Candidates: power law, segmented with 1..max_breakpoints breakpoints,
    DGBD3, AC4 (c = 0) and AC5.  Models that cannot be fitted are left
    out of the table.
    """
    y = series.log_values
    n = series.n
    fits: dict = {}
    entries = []  # (name, p, sse)

    def attempt(name, fn, p_of):
        try:
            fit = fn()
            p = p_of(fit)
            entries.append((name, p, fit.sse))
            fits[name] = fit
        except AnalysisError:
            pass

    attempt("power", lambda: fit_power(series), lambda f: 2)
    for k in range(1, max_breakpoints + 1):
        attempt(f"segmented_k{k}", lambda k=k: fit_segmented(series, k, continuous, min_segment_size),
                lambda f: segmented_param_count(f.k, continuous))
    attempt(GenModel.DGBD3.value, lambda: fit_dgbd(series), lambda f: 3)
    attempt(GenModel.AC4_C0.value, lambda: fit_ac(series, True), lambda f: 4)
    attempt(GenModel.AC5.value, lambda: fit_ac(series, False), lambda f: 5)

    scored = []
    for name, p, sse in entries:
        try:
            scored.append((name, p, sse, aic(n, effective_sse(sse, y), p)))
        except AnalysisError:
            fits.pop(name, None)
    if not scored:
        raise TooFewPoints("no candidate model could be fitted")
    scored.sort(key=lambda e: (e[3], e[1]))
    best = scored[0][3]
    rel = np.array([math.exp(-(s[3] - best) / 2) for s in scored])
    weights = rel / rel.sum()
    rows = tuple(
        ModelRow(name, p, sse, a, a - best, float(w))
        for (name, p, sse, a), w in zip(scored, weights)
    )
    return ModelTable(rows, fits)


def genfit_to_dict(fit: GenFit) -> dict:
    return {
        "model": fit.model.value, "A": fit.A, "a": fit.a, "b": fit.b, "c": fit.c, "d": fit.d,
        "N": fit.N, "sse": fit.sse, "aic": fit.aic, "converged": fit.converged,
    }

