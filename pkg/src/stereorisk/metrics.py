"""Disparity evaluation: end-point error, >k px outlier rates and D1.

Only pixels with valid ground truth inside the requested region are
evaluated. A pixel whose prediction is invalid counts as an outlier for every
rate but is left out of the EPE mean.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costvol import DisparityMap
from .errors import InputError

THRESHOLDS = (0.5, 1.0, 2.0, 3.0, 4.0)
D1_ABS = 3.0
D1_REL = 0.05


@dataclass(frozen=True, eq=False)
class EvalMask:
    """Regions to score: ``evaluate`` (All) and its subset ``non_occluded`` (Noc)."""

    evaluate: np.ndarray
    non_occluded: np.ndarray | None = None

    def __post_init__(self):
        ev = np.asarray(self.evaluate, dtype=bool)
        object.__setattr__(self, "evaluate", ev)
        if self.non_occluded is not None:
            noc = np.asarray(self.non_occluded, dtype=bool)
            if noc.shape != ev.shape:
                raise InputError("Noc mask shape differs from the evaluation mask")
            if np.any(noc & ~ev):
                raise InputError("non-occluded pixels must be a subset of evaluated pixels")
            object.__setattr__(self, "non_occluded", noc)

    @classmethod
    def full(cls, shape, noc=None) -> "EvalMask":
        ev = np.ones(shape, dtype=bool)
        return cls(ev, None if noc is None else np.asarray(noc, dtype=bool))

    def region(self, name: str) -> np.ndarray:
        if name == "all":
            return self.evaluate
        if name == "noc":
            if self.non_occluded is None:
                raise InputError("no non-occluded mask supplied")
            return self.non_occluded
        raise InputError(f"unknown region {name!r}")


def _errors(pred: DisparityMap, gt: DisparityMap, mask: EvalMask, region: str):
    if pred.shape != gt.shape:
        raise InputError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    if mask.evaluate.shape != gt.shape:
        raise InputError("mask size differs from the ground truth")
    sel = mask.region(region) & gt.valid
    n = int(sel.sum())
    if n == 0:
        raise InputError("no pixels to evaluate")
    ok = pred.valid[sel]
    err = np.abs(pred.values[sel] - gt.values[sel])
    return err, ok, gt.values[sel], n


def epe(pred: DisparityMap, gt: DisparityMap, mask: EvalMask, region: str = "all") -> float:
    err, ok, _, _ = _errors(pred, gt, mask, region)
    if not ok.any():
        raise InputError("no valid predictions inside the evaluated region")
    return float(np.mean(err[ok]))


def outlier_rate(pred: DisparityMap, gt: DisparityMap, mask: EvalMask, k: float,
                 region: str = "all") -> float:
    """Percentage of evaluated pixels with ``|pred - gt| > k``."""
    if not k > 0:
        raise InputError("threshold must be positive")
    err, ok, _, n = _errors(pred, gt, mask, region)
    bad = ~ok | (err > k)
    return 100.0 * int(bad.sum()) / n


def d1_rate(pred: DisparityMap, gt: DisparityMap, mask: EvalMask, region: str = "all") -> float:
    """Percentage of pixels off by more than 3 px and more than 5% of the true disparity."""
    err, ok, g, n = _errors(pred, gt, mask, region)
    bad = ~ok | ((err > D1_ABS) & (err > D1_REL * np.abs(g)))
    return 100.0 * int(bad.sum()) / n


def _key(k: float) -> str:
    return f"gt{k:g}"


@dataclass
class EvalReport:
    epe: float
    epe_noc: float | None
    outlier_rates: dict = field(default_factory=dict)
    d1: dict = field(default_factory=dict)
    n_eval: int = 0
    n_noc: int | None = None
    n_invalid: int = 0

    def to_dict(self) -> dict:
        """Flat mapping with stable keys; Noc entries are ``None`` without a Noc mask."""
        out = {"epe": self.epe, "epe_noc": self.epe_noc}
        for k in THRESHOLDS:
            for region in ("noc", "all"):
                out[f"{_key(k)}_{region}"] = self.outlier_rates.get((k, region))
        out["d1_noc"] = self.d1.get("noc")
        out["d1_all"] = self.d1.get("all")
        out["d1_bg"] = None
        out["d1_fg"] = None
        out["n_eval"] = self.n_eval
        out["n_noc"] = self.n_noc
        out["n_invalid"] = self.n_invalid
        out["unsupported"] = ["d1_bg", "d1_fg"]
        return out


def evaluate(pred: DisparityMap, gt: DisparityMap, mask: EvalMask | None = None) -> EvalReport:
    mask = mask or EvalMask.full(gt.shape)
    regions = ["all"] + (["noc"] if mask.non_occluded is not None else [])
    rates, d1 = {}, {}
    for region in regions:
        for k in THRESHOLDS:
            rates[(k, region)] = outlier_rate(pred, gt, mask, k, region)
        d1[region] = d1_rate(pred, gt, mask, region)
    sel = mask.evaluate & gt.valid
    return EvalReport(
        epe=epe(pred, gt, mask, "all"),
        epe_noc=epe(pred, gt, mask, "noc") if "noc" in regions else None,
        outlier_rates=rates,
        d1=d1,
        n_eval=int(sel.sum()),
        n_noc=int((mask.non_occluded & gt.valid).sum()) if "noc" in regions else None,
        n_invalid=int((sel & ~pred.valid).sum()),
    )
