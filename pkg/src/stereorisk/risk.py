"""Risk functionals over interpolated disparity densities and their minimizers.

The risk of predicting ``y`` is ``F(y) = integral L(y - x) p(x) dx``. For the
absolute error the minimizer is found by bisection on the derivative

    G(y) = sum_i p_i * sign(y - d_i) * (1 - exp(-|y - d_i| / sigma))

(Laplacian kernel), which is continuous and non-decreasing. Squared error is
minimized by the mean of the hypotheses. A Huber error is handled by the same
bisection with a different derivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy import integrate, signal, special

from ._backend import get_kernels
from .distribution import DisparityPmf, Kernel, pmf_density
from .errors import InputError

NORMS = ("l1", "l2", "huber")

DEFAULT_SIGMA = 1.1
DEFAULT_TAU = 0.1
DEFAULT_CLIP = 0.1
DEFAULT_MAX_ITERS = 64


@dataclass(frozen=True)
class RiskConfig:
    kernel: Kernel = field(default_factory=lambda: Kernel("laplacian", DEFAULT_SIGMA))
    tau: float = DEFAULT_TAU
    norm: str = "l1"
    beta: float = 1.0
    max_iters: int = DEFAULT_MAX_ITERS
    clip_floor: float = DEFAULT_CLIP

    def __post_init__(self):
        if self.norm not in NORMS:
            raise InputError(f"unknown error norm {self.norm!r}; expected one of {NORMS}")
        if not self.tau > 0:
            raise InputError("tau must be positive")
        if not self.beta > 0:
            raise InputError("Huber beta must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InputError("max_iters must be a positive integer")
        if not self.clip_floor > 0:
            raise InputError("clip_floor must be positive")

    @property
    def sigma(self) -> float:
        return self.kernel.sigma

    def with_(self, **changes) -> "RiskConfig":
        params = {f: getattr(self, f) for f in self.__dataclass_fields__}
        params.update(changes)
        return RiskConfig(**params)


@dataclass(frozen=True)
class SolveResult:
    y_star: float
    iterations: int
    final_derivative: float


def _finite(y: float) -> float:
    y = float(y)
    if not math.isfinite(y):
        raise InputError(f"expected a finite disparity, got {y}")
    return y


def _check_pmf(pmf) -> DisparityPmf:
    if not isinstance(pmf, DisparityPmf):
        raise InputError("pmf must be a DisparityPmf")
    return pmf


# -- closed forms -----------------------------------------------------------

def risk_l1(pmf: DisparityPmf, kernel: Kernel, y: float) -> float:
    """Expected absolute error of predicting ``y``.

    Laplacian: ``sum_i p_i (sigma exp(-|u_i|/sigma) + |u_i|)`` with ``u_i = y - d_i``.
    Gaussian: ``sum_i p_i (u_i erf(u_i / (sigma sqrt 2)) + 2 sigma phi(u_i / sigma))``.
    """
    _check_pmf(pmf)
    u = _finite(y) - pmf.hypotheses
    s = kernel.sigma
    if kernel.variant == "laplacian":
        terms = s * np.exp(-np.abs(u) / s) + np.abs(u)
    else:
        z = u / s
        terms = u * special.erf(z / math.sqrt(2.0)) + 2.0 * s * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return float(np.dot(pmf.probs, terms))


def risk_derivative_l1(pmf: DisparityPmf, kernel: Kernel, y: float) -> float:
    """Derivative of :func:`risk_l1` with respect to ``y``."""
    _check_pmf(pmf)
    u = _finite(y) - pmf.hypotheses
    s = kernel.sigma
    if kernel.variant == "laplacian":
        terms = np.sign(u) * (1.0 - np.exp(-np.abs(u) / s))
    else:
        terms = special.erf(u / (s * math.sqrt(2.0)))
    return float(np.dot(pmf.probs, terms))


def risk_curvature_l1(pmf: DisparityPmf, kernel: Kernel, y: float) -> float:
    """Second derivative of the absolute-error risk (twice the density at ``y``)."""
    return 2.0 * pmf_density(pmf, kernel, y)


def huber_loss(r, beta: float):
    """Huber error whose derivative is ``clip(r / beta, -1, 1)``."""
    a = np.abs(r)
    return np.where(a <= beta, 0.5 * a * a / beta, a - 0.5 * beta)


def huber_influence(r, beta: float):
    return np.clip(np.asarray(r, dtype=np.float64) / beta, -1.0, 1.0)


def risk_derivative_huber(pmf: DisparityPmf, kernel: Kernel, beta: float, y: float) -> float:
    """Derivative of the Huber risk, closed form via the integrated kernel CDF."""
    _check_pmf(pmf)
    y = np.array([_finite(y)])
    k = get_kernels("python")
    g = k.derivative_rows(y, pmf.hypotheses[None, :], pmf.probs[None, :],
                          kernel.sigma, kernel.code, float(beta))
    return float(g[0])


def risk_l2(pmf: DisparityPmf, kernel: Kernel, y: float) -> float:
    """Expected squared error: squared distance to each hypothesis plus the kernel variance."""
    _check_pmf(pmf)
    u = _finite(y) - pmf.hypotheses
    var = 2.0 * kernel.sigma ** 2 if kernel.variant == "laplacian" else kernel.sigma ** 2
    return float(np.dot(pmf.probs, u * u) + var)


def risk(pmf: DisparityPmf, cfg: RiskConfig, y: float) -> float:
    """Risk value under ``cfg.norm``; Huber falls back to quadrature."""
    if cfg.norm == "l1":
        return risk_l1(pmf, cfg.kernel, y)
    if cfg.norm == "l2":
        return risk_l2(pmf, cfg.kernel, y)
    return risk_quad(pmf, cfg.kernel, y, "huber", cfg.beta)


# -- quadrature -------------------------------------------------------------

def _error_fn(norm: str, beta: float):
    if norm == "l1":
        return np.abs
    if norm == "l2":
        return np.square
    if norm == "huber":
        return lambda r: huber_loss(r, beta)
    raise InputError(f"unknown error norm {norm!r}")


def _support(pmf: DisparityPmf, kernel: Kernel, extra: float = 0.0):
    pad = 40.0 * kernel.sigma if kernel.variant == "laplacian" else 12.0 * kernel.sigma
    return pmf.lo - pad - extra, pmf.hi + pad + extra


def risk_quad(pmf: DisparityPmf, kernel: Kernel, y: float, norm: str = "l1",
              beta: float = 1.0, epsrel: float = 1e-11) -> float:
    """Risk by adaptive quadrature of ``L(y - x) p(x)``; no closed forms used."""
    _check_pmf(pmf)
    y = _finite(y)
    err = _error_fn(norm, beta)
    a, b = _support(pmf, kernel, abs(y - pmf.lo) + abs(y - pmf.hi))
    breaks = sorted(set(pmf.hypotheses.tolist()) | {y, y - beta, y + beta})
    edges = [a] + [t for t in breaks if a < t < b] + [b]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda x: float(err(y - x)) * pmf_density(pmf, kernel, x),
                                lo, hi, epsabs=1e-14, epsrel=epsrel, limit=200)
        total += val
    return total


def derivative_quad(pmf: DisparityPmf, kernel: Kernel, y: float, norm: str = "huber",
                    beta: float = 1.0, epsrel: float = 1e-9) -> float:
    """Risk derivative ``integral psi(y - x) p(x) dx`` by adaptive quadrature."""
    _check_pmf(pmf)
    y = _finite(y)
    if norm == "l1":
        psi = np.sign
    elif norm == "huber":
        psi = lambda r: huber_influence(r, beta)  # noqa: E731
    else:
        psi = lambda r: 2.0 * r  # noqa: E731
    a, b = _support(pmf, kernel, abs(y - pmf.lo) + abs(y - pmf.hi))
    breaks = sorted(set(pmf.hypotheses.tolist()) | {y, y - beta, y + beta})
    edges = [a] + [t for t in breaks if a < t < b] + [b]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda x: float(psi(y - x)) * pmf_density(pmf, kernel, x),
                                lo, hi, epsabs=1e-13, epsrel=epsrel, limit=200)
        total += val
    return total


# -- solvers ----------------------------------------------------------------

def _weighted_mean_rows(hyp: np.ndarray, probs: np.ndarray) -> np.ndarray:
    # left-to-right accumulation so one row matches sum(p_i * d_i) bit for bit
    acc = np.zeros(probs.shape[0])
    for i in range(probs.shape[1]):
        acc = acc + probs[:, i] * hyp[:, i]
    return acc


def solve_batch(hyp: np.ndarray, probs: np.ndarray, cfg: RiskConfig, backend=None):
    """Minimize the risk for every row of ``(hyp, probs)``.

    ``hyp`` may be a shared (N,) vector or a per-row (P, N) array. Returns
    ``(y, iterations, final_abs_g)`` arrays; for ``l2`` the last two are zeros.
    """
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    hyp = np.asarray(hyp, dtype=np.float64)
    if hyp.ndim == 1:
        hyp = np.broadcast_to(hyp, probs.shape)
    if cfg.norm == "l2":
        n = probs.shape[0]
        return _weighted_mean_rows(hyp, probs), np.zeros(n, dtype=np.int64), np.zeros(n)
    beta = cfg.beta if cfg.norm == "huber" else 0.0
    k = get_kernels(backend)
    return k.bisect_batch(hyp, probs, cfg.kernel.sigma, cfg.tau, int(cfg.max_iters),
                          cfg.kernel.code, float(beta))


def _solve_bisect(pmf: DisparityPmf, cfg: RiskConfig) -> SolveResult:
    y, it, g = solve_batch(pmf.hypotheses, pmf.probs[None, :], cfg)
    return SolveResult(float(y[0]), int(it[0]), float(g[0]))


def solve_l1(pmf: DisparityPmf, cfg: RiskConfig | None = None) -> SolveResult:
    """Absolute-error minimizer by bisection on ``G``.

    Starts from the bracket ``[d_1, d_N]`` and stops once ``|G(mid)| <= tau``
    or after ``max_iters`` midpoints. A single hypothesis is returned as is.
    """
    _check_pmf(pmf)
    cfg = cfg or RiskConfig()
    if cfg.norm != "l1":
        raise InputError("solve_l1 needs a config with norm='l1'")
    return _solve_bisect(pmf, cfg)


def solve_l2(pmf: DisparityPmf) -> float:
    """Squared-error minimizer: the probability-weighted mean of the hypotheses."""
    _check_pmf(pmf)
    return float(_weighted_mean_rows(pmf.hypotheses[None, :], pmf.probs[None, :])[0])


def solve_generic(pmf: DisparityPmf, cfg: RiskConfig) -> SolveResult:
    _check_pmf(pmf)
    if cfg.norm == "l1":
        return solve_l1(pmf, cfg)
    if cfg.norm == "l2":
        return SolveResult(solve_l2(pmf), 0, 0.0)
    return _solve_bisect(pmf, cfg)


def iter_bisection(pmf: DisparityPmf, cfg: RiskConfig) -> Iterator[tuple[float, float, float, float]]:
    """Step through the bisection, yielding ``(lo, hi, mid, g)`` after each midpoint.

    Reference loop in plain Python; the vectorized solvers must agree with it.
    """
    _check_pmf(pmf)
    if len(pmf) == 1 or cfg.norm == "l2":
        return
    beta = cfg.beta if cfg.norm == "huber" else 0.0
    k = get_kernels("python")
    lo, hi = pmf.lo, pmf.hi
    g = cfg.tau + 1.0
    it = 0
    while abs(g) > cfg.tau and it < cfg.max_iters:
        mid = (lo + hi) / 2.0
        g = float(k.derivative_rows(np.array([mid]), pmf.hypotheses[None, :], pmf.probs[None, :],
                                    cfg.kernel.sigma, cfg.kernel.code, beta)[0])
        it += 1
        if g > 0:
            hi = mid
        else:
            lo = mid
        yield lo, hi, mid, g


# -- oracle -----------------------------------------------------------------

def oracle_grid_minimize(pmf: DisparityPmf, cfg: RiskConfig, step: float) -> float:
    """Brute-force minimizer over the grid ``d_1, d_1 + step, ..., d_N``.

    The risk is integrated numerically from the density alone: its derivative
    ``integral psi(y - x) p(x) dx`` is a discrete convolution on a uniform
    grid (mass beyond the grid comes from adaptive quadrature), and the risk
    on the y-grid is the running trapezoid integral of that derivative.
    Ties go to the smaller disparity.
    """
    _check_pmf(pmf)
    if not step > 0:
        raise InputError("step must be positive")
    if len(pmf) == 1:
        return pmf.lo
    span = pmf.hi - pmf.lo
    if step > span:
        raise InputError(f"step {step} exceeds the hypothesis range {span}")
    n_y = int(math.floor(span / step + 1e-9)) + 1
    ys = pmf.lo + step * np.arange(n_y)
    if cfg.norm == "l2":
        # piecewise between kernel centres, where the Laplacian has its cusps
        a, b = _support(pmf, cfg.kernel)
        edges = np.concatenate([[a], pmf.hypotheses, [b]])
        mean = math.fsum(integrate.quad(lambda x: x * pmf_density(pmf, cfg.kernel, x), lo, hi)[0]
                         for lo, hi in zip(edges[:-1], edges[1:]))
        slope = 2.0 * (ys - mean)
    else:
        beta = cfg.beta if cfg.norm == "huber" else 0.0
        n_pad = int(math.ceil(beta / step))
        xs = pmf.lo + step * np.arange(-n_pad, n_y + n_pad)
        m = xs.size
        dens = pmf_density(pmf, cfg.kernel, xs)
        w = np.full(m, step)
        w[0] = w[-1] = step / 2.0
        # y_k - x_j = (k - j + n_pad) * step, for every pair of grid indices
        offsets = step * np.arange(n_pad - (m - 1), n_y + n_pad)
        psi = np.sign(offsets) if cfg.norm == "l1" else huber_influence(offsets, beta)
        conv = signal.fftconvolve(dens * w, psi)
        inner = conv[np.arange(n_y) + m - 1]
        a, b = _support(pmf, cfg.kernel, beta)
        mass_left = _tail_mass(pmf, cfg.kernel, a, xs[0])
        mass_right = _tail_mass(pmf, cfg.kernel, xs[-1], b)
        slope = inner + mass_left - mass_right
    risk_vals = np.concatenate([[0.0], np.cumsum(0.5 * (slope[1:] + slope[:-1]) * step)])
    return float(ys[int(np.argmin(risk_vals))])


def _tail_mass(pmf: DisparityPmf, kernel: Kernel, a: float, b: float) -> float:
    inner = [t for t in pmf.hypotheses.tolist() if a < t < b][:50]
    val, _ = integrate.quad(lambda x: pmf_density(pmf, kernel, x), a, b,
                            points=inner or None, epsabs=1e-14, limit=400)
    return val
