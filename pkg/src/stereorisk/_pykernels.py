"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used when
the extension is not built or ``STEREO_RISK_PURE_PYTHON=1`` is set.
"""
import numpy as np
from scipy.special import erf, ndtr

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


def _cumint_laplace(x, sigma):
    # integral of the Laplace(0, sigma) CDF from -inf to x
    return np.maximum(x, 0.0) + 0.5 * sigma * np.exp(-np.abs(x) / sigma)


def _cumint_gauss(x, sigma):
    z = x / sigma
    return x * ndtr(z) + sigma * _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def derivative_rows(y, hyp, probs, sigma, kernel_code, beta):
    """Risk derivative at ``y[j]`` for every row ``j`` of ``(hyp, probs)``.

    ``beta == 0`` selects the absolute error; ``beta > 0`` the Huber error with
    influence ``clip(r / beta, -1, 1)``.
    """
    u = y[:, None] - hyp
    if beta > 0:
        cumint = _cumint_laplace if kernel_code == 0 else _cumint_gauss
        terms = (cumint(u + beta, sigma) - cumint(u - beta, sigma)) / beta - 1.0
    elif kernel_code == 0:
        terms = np.sign(u) * (1.0 - np.exp(-np.abs(u) / sigma))
    else:
        terms = erf(u * (_INV_SQRT2 / sigma))
    # left-to-right accumulation, the same order as the compiled loop
    acc = np.zeros(terms.shape[0])
    for i in range(terms.shape[1]):
        acc += probs[:, i] * terms[:, i]
    return acc


def bisect_batch(hyp, probs, sigma, tau, max_iters, kernel_code=0, beta=0.0):
    """Row-wise bisection on the risk derivative.

    Parameters
    ----------
    hyp, probs : (P, N) float64
        Increasing hypotheses and probabilities, one distribution per row.

    Returns
    -------
    y : (P,) float64
    iterations : (P,) int64
    final_abs_g : (P,) float64
    """
    hyp = np.asarray(hyp, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    n_rows, n_hyp = probs.shape
    lo = hyp[:, 0].copy()
    hi = hyp[:, -1].copy()
    mid = lo.copy()
    g = np.zeros(n_rows)
    iters = np.zeros(n_rows, dtype=np.int64)
    if n_hyp == 1:
        return mid, iters, g
    g[:] = tau + 1.0
    active = np.arange(n_rows)
    while active.size:
        m = (lo[active] + hi[active]) / 2.0
        gm = derivative_rows(m, hyp[active], probs[active], sigma, kernel_code, beta)
        mid[active] = m
        g[active] = gm
        iters[active] += 1
        up = gm > 0
        hi[active[up]] = m[up]
        lo[active[~up]] = m[~up]
        keep = (np.abs(gm) > tau) & (iters[active] < max_iters)
        active = active[keep]
    return mid, iters, np.abs(g)


def _offsets(window):
    h = window // 2
    return [(dy, dx) for dy in range(-h, h + 1) for dx in range(-h, h + 1)
            if (dy, dx) != (0, 0)]


def census(img, window):
    """Census bits ``neighbor < center`` with clamped borders, shape (H, W, K)."""
    img = np.asarray(img, dtype=np.float64)
    height, width = img.shape
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    offs = _offsets(window)
    out = np.empty((height, width, len(offs)), dtype=np.uint8)
    for k, (dy, dx) in enumerate(offs):
        rr = np.clip(rows + dy, 0, height - 1)
        cc = np.clip(cols + dx, 0, width - 1)
        out[:, :, k] = img[rr, cc] < img
    return out


def _interp_row(img, rr, x):
    x0 = np.floor(x).astype(np.intp)
    f = x - x0
    x1 = np.minimum(x0 + 1, img.shape[1] - 1)
    return img[rr, x0] * (1.0 - f) + img[rr, x1] * f


def census_cost(left_desc, right, shifts, window):
    """Hamming cost between left census and right census sampled at ``c - shift``.

    ``shifts`` is (H, W, N) in the image's own pixel units and may be
    fractional; the right image is linearly interpolated along rows. Samples
    that fall outside the frame get the sentinel cost ``window**2 - 1``.
    """
    right = np.asarray(right, dtype=np.float64)
    height, width = right.shape
    offs = _offsets(window)
    sentinel = float(len(offs))
    rows = np.broadcast_to(np.arange(height)[:, None], (height, width))
    cols = np.arange(width, dtype=np.float64)[None, :]
    n_hyp = shifts.shape[2]
    out = np.empty((height, width, n_hyp), dtype=np.float64)
    for n in range(n_hyp):
        xs = cols - shifts[:, :, n]
        inside = (xs >= 0) & (xs <= width - 1)
        xs = np.clip(xs, 0.0, width - 1.0)
        center = _interp_row(right, rows, xs)
        cost = np.zeros((height, width))
        for k, (dy, dx) in enumerate(offs):
            rr = np.clip(rows + dy, 0, height - 1)
            xn = np.clip(xs + dx, 0.0, width - 1.0)
            bit = _interp_row(right, rr, xn) < center
            cost += bit != left_desc[:, :, k].astype(bool)
        cost[~inside] = sentinel
        out[:, :, n] = cost
    return out
