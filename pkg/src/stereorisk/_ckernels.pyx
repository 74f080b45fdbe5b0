# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: per-row risk bisection, census transform, census matching cost.

Mirrors ``_pykernels``; the GIL is released inside every loop so callers can
split rows across a thread pool.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, erf, erfc, floor, sqrt

cnp.import_array()

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327


cdef inline double _cumint_laplace(double x, double sigma) noexcept nogil:
    cdef double pos = x if x > 0.0 else 0.0
    return pos + 0.5 * sigma * exp(-fabs(x) / sigma)


cdef inline double _cumint_gauss(double x, double sigma) noexcept nogil:
    cdef double z = x / sigma
    return x * 0.5 * erfc(-z * INV_SQRT2) + sigma * INV_SQRT_2PI * exp(-0.5 * z * z)


cdef inline double _derivative(double y, const double[:] d, const double[:] p,
                               Py_ssize_t n, double sigma, int kernel_code,
                               double beta) noexcept nogil:
    cdef Py_ssize_t i
    cdef double u, t, g = 0.0
    for i in range(n):
        u = y - d[i]
        if beta > 0.0:
            if kernel_code == 0:
                t = (_cumint_laplace(u + beta, sigma) - _cumint_laplace(u - beta, sigma)) / beta - 1.0
            else:
                t = (_cumint_gauss(u + beta, sigma) - _cumint_gauss(u - beta, sigma)) / beta - 1.0
        elif kernel_code == 0:
            if u > 0.0:
                t = 1.0 - exp(-fabs(u) / sigma)
            elif u < 0.0:
                t = -(1.0 - exp(-fabs(u) / sigma))
            else:
                t = 0.0
        else:
            t = erf(u * (INV_SQRT2 / sigma))
        g += p[i] * t
    return g


def derivative_rows(const double[:] y, const double[:, :] hyp, const double[:, :] probs,
                    double sigma, int kernel_code, double beta):
    """Risk derivative at ``y[j]`` for every row ``j``; see ``_pykernels.derivative_rows``."""
    cdef Py_ssize_t n_rows = probs.shape[0], n_hyp = probs.shape[1], j
    out_arr = np.empty(n_rows, dtype=np.float64)
    cdef double[:] out = out_arr
    with nogil:
        for j in range(n_rows):
            out[j] = _derivative(y[j], hyp[j], probs[j], n_hyp, sigma, kernel_code, beta)
    return out_arr


def bisect_batch(const double[:, :] hyp, const double[:, :] probs, double sigma,
                 double tau, long max_iters, int kernel_code=0, double beta=0.0):
    """Row-wise bisection on the risk derivative; see ``_pykernels.bisect_batch``."""
    cdef Py_ssize_t n_rows = probs.shape[0]
    cdef Py_ssize_t n_hyp = probs.shape[1]
    y_arr = np.empty(n_rows, dtype=np.float64)
    it_arr = np.zeros(n_rows, dtype=np.int64)
    g_arr = np.zeros(n_rows, dtype=np.float64)
    cdef double[:] y = y_arr
    cdef long long[:] iters = it_arr
    cdef double[:] gout = g_arr
    cdef Py_ssize_t j
    cdef double lo, hi, mid, g
    cdef long it
    with nogil:
        for j in range(n_rows):
            lo = hyp[j, 0]
            hi = hyp[j, n_hyp - 1]
            mid = lo
            if n_hyp == 1:
                y[j] = mid
                continue
            g = tau + 1.0
            it = 0
            while fabs(g) > tau and it < max_iters:
                mid = (lo + hi) / 2.0
                g = _derivative(mid, hyp[j], probs[j], n_hyp, sigma, kernel_code, beta)
                it += 1
                if g > 0.0:
                    hi = mid
                else:
                    lo = mid
            y[j] = mid
            iters[j] = it
            gout[j] = fabs(g)
    return y_arr, it_arr, g_arr


def census(const double[:, :] img, int window):
    """Census bits ``neighbor < center`` with clamped borders, shape (H, W, K)."""
    cdef Py_ssize_t height = img.shape[0], width = img.shape[1]
    cdef int h = window // 2
    cdef Py_ssize_t n_bits = window * window - 1
    out_arr = np.empty((height, width, n_bits), dtype=np.uint8)
    cdef unsigned char[:, :, :] out = out_arr
    cdef Py_ssize_t r, c, rr, cc, k
    cdef int dy, dx
    cdef double center
    with nogil:
        for r in range(height):
            for c in range(width):
                center = img[r, c]
                k = 0
                for dy in range(-h, h + 1):
                    rr = r + dy
                    if rr < 0:
                        rr = 0
                    elif rr > height - 1:
                        rr = height - 1
                    for dx in range(-h, h + 1):
                        if dy == 0 and dx == 0:
                            continue
                        cc = c + dx
                        if cc < 0:
                            cc = 0
                        elif cc > width - 1:
                            cc = width - 1
                        out[r, c, k] = 1 if img[rr, cc] < center else 0
                        k += 1
    return out_arr


cdef inline double _interp(const double[:, :] img, Py_ssize_t r, double x,
                           Py_ssize_t width) noexcept nogil:
    cdef Py_ssize_t x0 = <Py_ssize_t>floor(x)
    cdef Py_ssize_t x1 = x0 + 1
    cdef double f = x - x0
    if x1 > width - 1:
        x1 = width - 1
    return img[r, x0] * (1.0 - f) + img[r, x1] * f


def census_cost(const unsigned char[:, :, :] left_desc, const double[:, :] right,
                const double[:, :, :] shifts, int window):
    """Hamming cost against the right census sampled at ``c - shift``; see ``_pykernels``."""
    cdef Py_ssize_t height = right.shape[0], width = right.shape[1]
    cdef Py_ssize_t n_hyp = shifts.shape[2]
    cdef int h = window // 2
    cdef double sentinel = window * window - 1
    out_arr = np.empty((height, width, n_hyp), dtype=np.float64)
    cdef double[:, :, :] out = out_arr
    cdef Py_ssize_t r, c, n, rr, k
    cdef int dy, dx
    cdef double xs, xn, center, v, hi = width - 1
    cdef int cost
    cdef unsigned char bit
    with nogil:
        for r in range(height):
            for c in range(width):
                for n in range(n_hyp):
                    xs = c - shifts[r, c, n]
                    if not (xs >= 0.0 and xs <= hi):
                        out[r, c, n] = sentinel
                        continue
                    center = _interp(right, r, xs, width)
                    cost = 0
                    k = 0
                    for dy in range(-h, h + 1):
                        rr = r + dy
                        if rr < 0:
                            rr = 0
                        elif rr > height - 1:
                            rr = height - 1
                        for dx in range(-h, h + 1):
                            if dy == 0 and dx == 0:
                                continue
                            xn = xs + dx
                            if xn < 0.0:
                                xn = 0.0
                            elif xn > hi:
                                xn = hi
                            v = _interp(right, rr, xn, width)
                            bit = 1 if v < center else 0
                            if bit != (left_desc[r, c, k] != 0):
                                cost += 1
                            k += 1
                    out[r, c, n] = cost
    return out_arr
