"""Reference (numpy) implementations of the hot loops.

Both backends take centered log-rank ``x`` (strictly increasing) and
centered ``y``.  A split index ``s`` places a breakpoint midway between
``x[s]`` and ``x[s + 1]``; the left piece holds points ``0..s``.
Every piece must hold at least ``m`` points.
"""

from __future__ import annotations

import numpy as np


def _suffix(a: np.ndarray) -> np.ndarray:
    # out[t] = sum(a[t:]), with out[n] = 0
    out = np.zeros(a.size + 1)
    out[:-1] = np.cumsum(a[::-1])[::-1]
    return out


def hinge_moments(x: np.ndarray, y: np.ndarray):
    """Per-split sums of the hinge regressor h_s = max(x - psi_s, 0).

    Returns ``psi, h1, hx, hh, hy`` where ``h1 = sum h``, ``hx = sum x h``,
    ``hh = sum h^2`` and ``hy = sum y h`` for s = 0..n-2.
    """
    n = x.size
    # sums run about the last abscissa: near the tail x - psi is tiny and
    # expanding it around the origin would cancel catastrophically
    x0 = x[-1]
    d = x - x0
    psi = 0.5 * (x[:-1] + x[1:])
    q = psi - x0
    s0 = np.arange(n - 1, 0, -1, dtype=np.float64)  # points after s: n-1-s
    s1 = _suffix(d)[1:n]
    s2 = _suffix(d * d)[1:n]
    sy = _suffix(y)[1:n]
    sdy = _suffix(d * y)[1:n]
    h1 = s1 - q * s0
    hd = s2 - q * s1
    hh = np.maximum(hd - q * h1, 0.0)
    hx = hd + x0 * h1
    hy = sdy - q * sy
    return psi, h1, hx, hh, hy


def best_pair_continuous(x: np.ndarray, y: np.ndarray, m: int) -> tuple[int, int, float]:
    """Exhaustive search for two hinges of a continuous broken line.

    Returns ``(i, j, sse)`` with i < j minimizing the residual sum of
    squares; ties keep the lexicographically smallest pair.  ``(-1, -1,
    inf)`` when no pair is feasible.
    """
    n = x.size
    psi, h1, hx, hh, hy = hinge_moments(x, y)
    sxx = float(x @ x)
    sxy = float(x @ y)
    syy = float(y @ y)
    best = (-1, -1, np.inf)
    for i in range(m - 1, n - 1 - 2 * m + 1):
        j0 = i + m
        j1 = n - 1 - m  # inclusive
        if j1 < j0:
            break
        zz = np.array([[n, 0.0, h1[i]], [0.0, sxx, hx[i]], [h1[i], hx[i], hh[i]]])
        zy = np.array([0.0, sxy, hy[i]])
        g = np.linalg.inv(zz)
        beta = g @ zy
        sse_i = syy - beta @ zy
        p = psi[i]
        a0 = beta[0] - p * beta[2]
        a1 = beta[1] + beta[2]
        k00 = g[0, 0] - 2 * p * g[0, 2] + p * p * g[2, 2]
        k01 = g[0, 1] + g[0, 2] - p * g[1, 2] - p * g[2, 2]
        k11 = g[1, 1] + 2 * g[1, 2] + g[2, 2]
        a = h1[j0 : j1 + 1]
        b = hx[j0 : j1 + 1]
        w = hy[j0 : j1 + 1] - a0 * a - a1 * b
        hjj = hh[j0 : j1 + 1]
        v = hjj - (k00 * a * a + 2 * k01 * a * b + k11 * b * b)
        gain = np.where(v > 1e-12 * hjj, w * w / np.where(v > 0, v, 1.0), 0.0)
        sse = sse_i - gain
        k = int(np.argmin(sse))
        if sse[k] < best[2]:
            best = (i, j0 + k, float(sse[k]))
    return best


def _prefix(a: np.ndarray) -> np.ndarray:
    out = np.zeros(a.size + 1)
    np.cumsum(a, out=out[1:])
    return out


def segment_sse_table(x: np.ndarray, y: np.ndarray):
    """Prefix sums for O(1) least-squares line SSE over index ranges."""
    return (
        np.arange(x.size + 1, dtype=np.float64),
        _prefix(x),
        _prefix(x * x),
        _prefix(y),
        _prefix(x * y),
        _prefix(y * y),
    )


def segment_sse(tab, a, b):
    """SSE of an OLS line through points ``a..b-1`` (vectorized over a, b)."""
    p0, p1, p2, py, pxy, pyy = tab
    n = p0[b] - p0[a]
    sx = p1[b] - p1[a]
    sxx = p2[b] - p2[a]
    sy = py[b] - py[a]
    sxy = pxy[b] - pxy[a]
    syy = pyy[b] - pyy[a]
    cxx = sxx - sx * sx / n
    cxy = sxy - sx * sy / n
    cyy = syy - sy * sy / n
    return cyy - cxy * cxy / cxx


def best_pair_discontinuous(x: np.ndarray, y: np.ndarray, m: int) -> tuple[int, int, float]:
    """Exhaustive two-split search with an independent line per piece."""
    n = x.size
    tab = segment_sse_table(x, y)
    p0, p1, p2, py, pxy, pyy = tab
    js = np.arange(n - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        right = segment_sse(tab, js + 1, n)  # right[j]: points j+1..n-1
    best = (-1, -1, np.inf)
    for i in range(m - 1, n - 2 * m):
        j0 = i + m
        j1 = n - 1 - m
        a = i + 1
        sl = slice(j0 + 1, j1 + 2)
        cnt = p0[sl] - p0[a]
        sx = p1[sl] - p1[a]
        sy = py[sl] - py[a]
        cxy = (pxy[sl] - pxy[a]) - sx * sy / cnt
        middle = (pyy[sl] - pyy[a]) - sy * sy / cnt - cxy * cxy / ((p2[sl] - p2[a]) - sx * sx / cnt)
        sse = segment_sse(tab, 0, a) + middle + right[j0 : j1 + 1]
        k = int(np.argmin(sse))
        if sse[k] < best[2]:
            best = (i, j0 + k, float(sse[k]))
    return best


def yule_counts(alpha: float, u_create: np.ndarray, u_pick: np.ndarray) -> np.ndarray:
    """Preferential-attachment counts in order of entity creation.

    Step 0 always creates an entity.  Afterwards a step creates a new
    entity when ``u_create[t] < alpha``; otherwise it credits the owner of
    a uniformly chosen earlier event, which picks entities with
    probability proportional to their current count.
    """
    uc = np.asarray(u_create, dtype=np.float64).tolist()
    up = np.asarray(u_pick, dtype=np.float64).tolist()
    owners = [0] * len(uc)
    counts = []
    for t, u in enumerate(uc):
        if t == 0 or u < alpha:
            owners[t] = len(counts)
            counts.append(1)
        else:
            e = owners[int(up[t] * t)]
            counts[e] += 1
            owners[t] = e
    return np.asarray(counts, dtype=np.int64)
