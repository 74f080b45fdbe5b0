"""Discrete disparity distributions and their kernel-interpolated densities.

A :class:`DisparityPmf` holds hypotheses ``d_1 < ... < d_N`` with probabilities
``p_i``. Placing a :class:`Kernel` at every hypothesis turns it into a
continuous density ``p(x) = sum_i k(x, d_i) p_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError

PROB_SUM_TOL = 1e-6

KERNELS = ("laplacian", "gaussian")

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Kernel:
    """Interpolation kernel: ``laplacian`` (scale ``sigma``) or ``gaussian`` (std ``sigma``)."""

    variant: str = "laplacian"
    sigma: float = 1.1

    def __post_init__(self):
        if self.variant not in KERNELS:
            raise InputError(f"unknown kernel {self.variant!r}; expected one of {KERNELS}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InputError(f"kernel bandwidth must be positive, got {self.sigma}")

    @property
    def code(self) -> int:
        """Integer tag understood by the compiled kernels (0 laplacian, 1 gaussian)."""
        return KERNELS.index(self.variant)


def renormalize_rows(probs: np.ndarray) -> np.ndarray:
    """Check that each row sums to 1 within tolerance and divide out the residual.

    Works on a single vector or on a stack of vectors (last axis).
    """
    probs = np.asarray(probs, dtype=np.float64)
    total = probs.sum(axis=-1, keepdims=True)
    if np.any(np.abs(total - 1.0) > PROB_SUM_TOL):
        raise InputError("probabilities do not sum to 1")
    return probs / total


def normalize(raw: Sequence[float]) -> np.ndarray:
    """Scale nonnegative weights so they sum to one.

    >>> normalize([1, 0, 3]).tolist()
    [0.25, 0.0, 0.75]
    """
    w = np.asarray(raw, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise InputError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InputError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise InputError("degenerate weights")
    return w / total


@dataclass(frozen=True, eq=False)
class DisparityPmf:
    """Categorical distribution over strictly increasing disparity hypotheses.

    Unsorted input is sorted; repeated hypotheses are merged by summing their
    probabilities. Probabilities must sum to one within ``1e-6`` and are then
    renormalized exactly.
    """

    hypotheses: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.hypotheses, dtype=np.float64))
        p = np.atleast_1d(np.asarray(self.probs, dtype=np.float64))
        if d.ndim != 1 or p.ndim != 1:
            raise InputError("hypotheses and probs must be vectors")
        if d.size == 0:
            raise InputError("a PMF needs at least one hypothesis")
        if d.size != p.size:
            raise InputError(
                f"hypotheses and probs differ in length ({d.size} vs {p.size})")
        if not np.all(np.isfinite(d)):
            raise InputError("hypotheses must be finite")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InputError("probabilities must be finite and nonnegative")
        if np.any(np.diff(d) <= 0):
            order = np.argsort(d, kind="stable")
            d, p = d[order], p[order]
            d, first = np.unique(d, return_index=True)
            p = np.add.reduceat(p, first)
        p = renormalize_rows(p)
        d.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "hypotheses", d)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.hypotheses.size

    @property
    def lo(self) -> float:
        return float(self.hypotheses[0])

    @property
    def hi(self) -> float:
        return float(self.hypotheses[-1])

    def mean(self) -> float:
        return float(np.dot(self.probs, self.hypotheses))

    def shifted(self, c: float) -> "DisparityPmf":
        return DisparityPmf(self.hypotheses + c, self.probs)

    def scaled(self, s: float) -> "DisparityPmf":
        if s <= 0:
            raise InputError("scale must be positive")
        return DisparityPmf(self.hypotheses * s, self.probs)


def _check_finite(*values: float) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise InputError(f"expected a finite value, got {v}")


def kernel_eval(kernel: Kernel, x, center):
    """Kernel density at ``x`` for a kernel centred at ``center``. Broadcasts."""
    _check_finite(x, center)
    r = np.asarray(x, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    s = kernel.sigma
    if kernel.variant == "laplacian":
        out = np.exp(-np.abs(r) / s) / (2.0 * s)
    else:
        out = np.exp(-0.5 * (r / s) ** 2) / (s * _SQRT_2PI)
    return float(out) if out.ndim == 0 else out


def pmf_density(pmf: DisparityPmf, kernel: Kernel, x):
    """Interpolated density ``sum_i k(x, d_i) p_i``; ``x`` may be an array."""
    if not isinstance(pmf, DisparityPmf):
        raise InputError("pmf must be a DisparityPmf")
    xs = np.asarray(x, dtype=np.float64)
    _check_finite(xs)
    k = kernel_eval(kernel, xs[..., None], pmf.hypotheses)
    out = np.asarray(k) @ pmf.probs
    return float(out) if np.ndim(out) == 0 else out
