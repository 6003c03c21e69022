# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loops in ``_pykernels``; same contracts."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def best_pair_continuous(x, y, Py_ssize_t m):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = xa.shape[0]
    if n < 3:
        return (-1, -1, float("inf"))
    cdef double[::1] xv = xa
    cdef double[::1] yv = ya
    cdef double[::1] h1 = np.empty(n - 1)
    cdef double[::1] hx = np.empty(n - 1)
    cdef double[::1] hh = np.empty(n - 1)
    cdef double[::1] hy = np.empty(n - 1)
    cdef double[::1] psi = np.empty(n - 1)
    cdef double s0 = 0, s1 = 0, s2 = 0, sy = 0, sxy = 0
    cdef double sxx = 0, sxyt = 0, syy = 0
    cdef Py_ssize_t s, i, j, bi = -1, bj = -1
    cdef double p, q, xt, yt, hd
    cdef double x0 = xv[n - 1] if n > 0 else 0.0
    for s in range(n):
        sxx += xv[s] * xv[s]
        sxyt += xv[s] * yv[s]
        syy += yv[s] * yv[s]
    # suffix sums over points s+1..n-1 about the last abscissa, walking s downward
    for s in range(n - 2, -1, -1):
        xt = xv[s + 1] - x0
        yt = yv[s + 1]
        s0 += 1
        s1 += xt
        s2 += xt * xt
        sy += yt
        sxy += xt * yt
        p = 0.5 * (xv[s] + xv[s + 1])
        q = p - x0
        psi[s] = p
        h1[s] = s1 - q * s0
        hd = s2 - q * s1
        hh[s] = max(hd - q * h1[s], 0.0)
        hx[s] = hd + x0 * h1[s]
        hy[s] = sxy - q * sy

    cdef double a00, a02, a11, a12, a22, det
    cdef double g00, g01, g02, g11, g12, g22
    cdef double b0, b1, b2, sse_i, a0, a1, k00, k01, k11
    cdef double qa, qb, w, v, sse, best = INFINITY
    cdef double dn = <double> n
    for i in range(m - 1, n - 2 * m):
        # Z = [1, x, h_i];  Z'Z = [[n, 0, a02], [0, sxx, a12], [a02, a12, a22]]
        a00 = dn
        a02 = h1[i]
        a11 = sxx
        a12 = hx[i]
        a22 = hh[i]
        det = a00 * (a11 * a22 - a12 * a12) - a02 * a02 * a11
        if det <= 0:
            continue
        g00 = (a11 * a22 - a12 * a12) / det
        g01 = (a02 * a12) / det
        g02 = (-a02 * a11) / det
        g11 = (a00 * a22 - a02 * a02) / det
        g12 = (-a00 * a12) / det
        g22 = (a00 * a11) / det
        # Z'y = [0, sxyt, hy_i]
        b0 = g01 * sxyt + g02 * hy[i]
        b1 = g11 * sxyt + g12 * hy[i]
        b2 = g12 * sxyt + g22 * hy[i]
        sse_i = syy - (b1 * sxyt + b2 * hy[i])
        p = psi[i]
        a0 = b0 - p * b2
        a1 = b1 + b2
        k00 = g00 - 2 * p * g02 + p * p * g22
        k01 = g01 + g02 - p * g12 - p * g22
        k11 = g11 + 2 * g12 + g22
        for j in range(i + m, n - m):
            qa = h1[j]
            qb = hx[j]
            w = hy[j] - a0 * qa - a1 * qb
            v = hh[j] - (k00 * qa * qa + 2 * k01 * qa * qb + k11 * qb * qb)
            if v > 1e-12 * hh[j]:
                sse = sse_i - w * w / v
            else:
                sse = sse_i
            if sse < best:
                best = sse
                bi = i
                bj = j
    return (bi, bj, best)


cdef inline double _seg(const double* p0, const double* p1, const double* p2, const double* py,
                        const double* pxy, const double* pyy, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef double n = p0[b] - p0[a]
    cdef double sx = p1[b] - p1[a]
    cdef double sy = py[b] - py[a]
    cdef double cxx = (p2[b] - p2[a]) - sx * sx / n
    cdef double cxy = (pxy[b] - pxy[a]) - sx * sy / n
    cdef double cyy = (pyy[b] - pyy[a]) - sy * sy / n
    return cyy - cxy * cxy / cxx


def best_pair_discontinuous(x, y, Py_ssize_t m):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = xa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tab = np.zeros((6, n + 1))
    cdef double[::1] right_arr = np.empty(n + 1)
    cdef double* p0 = &tab[0, 0]
    cdef double* p1 = &tab[1, 0]
    cdef double* p2 = &tab[2, 0]
    cdef double* py = &tab[3, 0]
    cdef double* pxy = &tab[4, 0]
    cdef double* pyy = &tab[5, 0]
    cdef double* right = &right_arr[0]
    cdef Py_ssize_t t, i, j, bi = -1, bj = -1
    cdef double xt, yt, left, sse, best = INFINITY
    for t in range(n):
        xt = xa[t]
        yt = ya[t]
        p0[t + 1] = p0[t] + 1
        p1[t + 1] = p1[t] + xt
        p2[t + 1] = p2[t] + xt * xt
        py[t + 1] = py[t] + yt
        pxy[t + 1] = pxy[t] + xt * yt
        pyy[t + 1] = pyy[t] + yt * yt
    for j in range(m, n - 1):
        right[j] = _seg(p0, p1, p2, py, pxy, pyy, j + 1, n)
    with nogil:
        for i in range(m - 1, n - 2 * m):
            left = _seg(p0, p1, p2, py, pxy, pyy, 0, i + 1)
            for j in range(i + m, n - m):
                sse = left + _seg(p0, p1, p2, py, pxy, pyy, i + 1, j + 1) + right[j]
                if sse < best:
                    best = sse
                    bi = i
                    bj = j
    return (bi, bj, best)


def yule_counts(double alpha, u_create, u_pick):
    cdef double[::1] uc = np.ascontiguousarray(u_create, dtype=np.float64)
    cdef double[::1] up = np.ascontiguousarray(u_pick, dtype=np.float64)
    cdef Py_ssize_t steps = uc.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts_arr = np.zeros(max(steps, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef cnp.int64_t[::1] owners = np.zeros(max(steps, 1), dtype=np.int64)
    cdef Py_ssize_t t, e, n_ent = 0
    for t in range(steps):
        if t == 0 or uc[t] < alpha:
            counts[n_ent] = 1
            owners[t] = n_ent
            n_ent += 1
        else:
            e = owners[<Py_ssize_t> (up[t] * t)]
            counts[e] += 1
            owners[t] = e
    return counts_arr[:n_ent].copy()
