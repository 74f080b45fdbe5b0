"""Backward pass through the risk minimizer, the training loss, and a fitting demo.

At the minimizer ``G(y, p) = 0``, so by the implicit function theorem

    dy/dp_i = -(dG/dp_i) / (dG/dy)
            = sigma * sign(d_i - y) * (1 - exp(-|y - d_i|/sigma)) / sum_j p_j exp(-|y - d_j|/sigma)

for the Laplacian kernel. The denominator is floored at ``clip_floor`` to keep
gradients bounded when ``y`` sits in a low-density gap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distribution import DisparityPmf
from .errors import InputError
from .risk import RiskConfig, solve_l1

COARSE_WEIGHT = 0.1
REFINED_WEIGHT = 1.0


@dataclass(frozen=True, eq=False)
class PmfGradient:
    """``dy/dp_i`` for each hypothesis, plus the (possibly clipped) denominator used."""

    components: np.ndarray
    denominator: float
    clipped: bool

    def __len__(self):
        return self.components.size

    def directional(self, direction) -> float:
        """Derivative of ``y`` along a perturbation of the probabilities."""
        return float(np.dot(self.components, direction))

    def simplex_directional(self, probs, i: int) -> float:
        """Derivative along ``e_i - p``, a direction that stays on the simplex."""
        e = np.zeros_like(self.components)
        e[i] = 1.0
        return self.directional(e - np.asarray(probs))


def implicit_gradient(pmf: DisparityPmf, cfg: RiskConfig, y_star: float) -> PmfGradient:
    if cfg.norm != "l1":
        raise InputError("implicit_gradient is defined for the absolute-error risk")
    y = float(y_star)
    if not (math.isfinite(y) and pmf.lo <= y <= pmf.hi):
        raise InputError(f"y_star={y} lies outside [{pmf.lo}, {pmf.hi}]")
    s = cfg.kernel.sigma
    u = y - pmf.hypotheses
    if cfg.kernel.variant == "laplacian":
        decay = np.exp(-np.abs(u) / s)
        numer = s * np.sign(-u) * (1.0 - decay)
        denom = float(np.dot(pmf.probs, decay))
    else:
        # G = sum_i p_i erf(u_i / (sigma sqrt 2)); sigma * dG/dy = sum_j p_j sqrt(2/pi) exp(-u_j^2 / 2 sigma^2)
        numer = -s * special.erf(u / (s * math.sqrt(2.0)))
        denom = float(np.dot(pmf.probs, math.sqrt(2.0 / math.pi) * np.exp(-0.5 * (u / s) ** 2)))
    clipped = denom < cfg.clip_floor
    denom = max(denom, cfg.clip_floor)
    return PmfGradient(numer / denom, denom, clipped)


def smooth_l1_loss(pred: float, gt: float) -> float:
    diff = abs(pred - gt)
    return 0.5 * diff * diff if diff < 1.0 else diff - 0.5


def smooth_l1_grad(pred: float, gt: float) -> float:
    """Derivative of :func:`smooth_l1_loss` with respect to ``pred``."""
    diff = pred - gt
    if abs(diff) < 1.0:
        return diff
    return math.copysign(1.0, diff)


def total_loss(loss_coarse: float, loss_refined: float) -> float:
    if loss_coarse < 0 or loss_refined < 0:
        raise InputError("losses must be nonnegative")
    return COARSE_WEIGHT * loss_coarse + REFINED_WEIGHT * loss_refined


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max())
    return z / z.sum()


def fit_pmf_demo(target: float, hypotheses, steps: int = 500, lr: float = 0.5,
                 cfg: RiskConfig | None = None) -> list[tuple[float, float]]:
    """Fit softmax logits so the absolute-error minimizer lands on ``target``.

    Plain gradient descent; the gradient flows through the smooth L1 loss, the
    implicit gradient of the solver and the softmax Jacobian. Returns
    ``steps + 1`` ``(loss, y)`` pairs, the first before any update.
    """
    d = np.asarray(hypotheses, dtype=np.float64)
    if d.ndim != 1 or d.size == 0 or np.any(np.diff(d) <= 0):
        raise InputError("hypotheses must be a strictly increasing vector")
    if not (d[0] <= target <= d[-1]):
        raise InputError(f"target {target} outside the hypothesis range [{d[0]}, {d[-1]}]")
    if steps < 0 or not lr > 0:
        raise InputError("steps must be >= 0 and lr > 0")
    cfg = cfg or RiskConfig(tau=1e-6)
    logits = np.zeros(d.size)
    trace = []
    for step in range(steps + 1):
        p = softmax(logits)
        pmf = DisparityPmf(d, p)
        y = solve_l1(pmf, cfg).y_star
        trace.append((smooth_l1_loss(y, target), y))
        if step == steps:
            break
        dy_dp = implicit_gradient(pmf, cfg, y).components
        # softmax Jacobian transpose times v: p * (v - p.v)
        dy_dlogits = pmf.probs * (dy_dp - np.dot(pmf.probs, dy_dp))
        logits = logits - lr * smooth_l1_grad(y, target) * dy_dlogits
    return trace
