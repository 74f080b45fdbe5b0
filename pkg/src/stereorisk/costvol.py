"""Classical census front end and the coarse-to-fine disparity pipeline.

Disparities, hypotheses and the kernel bandwidth are expressed in pixels of
the full-resolution image at every stage. A stage working at 1/s resolution
matches hypothesis ``d`` with a shift of ``d / s`` stage pixels.
"""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ._backend import get_kernels
from .distribution import DisparityPmf, renormalize_rows
from .errors import InputError
from .risk import RiskConfig, solve_batch

log = logging.getLogger(__name__)

N_COARSE = 192
N_REFINED = 16
REFINE_WINDOW = 12
COARSE_SCALE = 4
REFINED_SCALE = 2
CENSUS_WINDOW = 7
TEMPERATURE = 2.0
BOX_SIZE = 5
REFINE_PAD = 0.5

PREDICTORS = {"expectation": "l2", "l2risk": "l2", "l1risk": "l1", "huber": "huber"}


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major intensities in ``[0, 1]``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise InputError("a gray image must be a non-empty 2-D array")
        if not np.all(np.isfinite(px)) or px.min() < 0 or px.max() > 1:
            raise InputError("intensities must be finite and within [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class DisparityMap:
    """Continuous disparities with a validity mask; invalid pixels hold ``inf``."""

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InputError("a disparity map must be 2-D")
        valid = np.isfinite(v) if self.valid is None else np.asarray(self.valid, dtype=bool)
        if valid.shape != v.shape:
            raise InputError("validity mask shape does not match the map")
        if not np.all(np.isfinite(v[valid])):
            raise InputError("valid disparities must be finite")
        if np.any(v[valid] < 0):
            raise InputError("disparities must be nonnegative")
        v = np.where(valid, v, np.inf)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, DisparityMap):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self.valid, other.valid)
                and np.array_equal(self.values[self.valid], other.values[other.valid]))


@dataclass(frozen=True, eq=False)
class CostVolume:
    """Matching costs (H, W, N) over shared (N,) or per-pixel (H, W, N) hypotheses."""

    costs: np.ndarray
    hypotheses: np.ndarray
    sentinel: float | None = None

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=np.float64)
        d = np.asarray(self.hypotheses, dtype=np.float64)
        if c.ndim != 3:
            raise InputError("costs must be (H, W, N)")
        if d.shape not in ((c.shape[2],), c.shape):
            raise InputError(f"hypotheses of shape {d.shape} do not fit costs {c.shape}")
        if np.any(np.diff(d, axis=-1) <= 0):
            raise InputError("hypotheses must be strictly increasing per pixel")
        if np.any(c[np.isfinite(c)] < 0):
            raise InputError("costs must be nonnegative")
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "hypotheses", d)

    @property
    def shape(self):
        return self.costs.shape

    def pixel_hypotheses(self, r: int, c: int) -> np.ndarray:
        return self.hypotheses if self.hypotheses.ndim == 1 else self.hypotheses[r, c]


def _pixels(img) -> np.ndarray:
    if isinstance(img, GrayImage):
        return img.pixels
    return GrayImage(img).pixels


def census_transform(img, window: int = CENSUS_WINDOW, backend=None) -> np.ndarray:
    """Census descriptor per pixel: bit k is set when neighbor k is darker than the center.

    Neighbors are visited row-major over the window, skipping the center;
    coordinates past the border are clamped. Returns (H, W, window**2 - 1) uint8.
    """
    px = _pixels(img)
    if window < 3 or window % 2 == 0:
        raise InputError("census window must be odd and >= 3")
    if window > min(px.shape):
        raise InputError(f"census window {window} larger than image {px.shape}")
    return get_kernels(backend).census(np.ascontiguousarray(px), int(window))


def matching_cost(left_desc: np.ndarray, right_desc: np.ndarray, d: int) -> np.ndarray:
    """Hamming distance between left (r, c) and right (r, c - d) descriptors."""
    if d < 0 or int(d) != d:
        raise InputError("integer disparity must be >= 0")
    d = int(d)
    n_bits = left_desc.shape[2]
    cost = np.full(left_desc.shape[:2], float(n_bits))
    if d < left_desc.shape[1]:
        diff = left_desc[:, d:, :] != right_desc[:, : right_desc.shape[1] - d, :]
        cost[:, d:] = diff.sum(axis=2)
    return cost


def census_cost_volume(left, right, hypotheses, window: int = CENSUS_WINDOW,
                       scale: float = 1.0, backend=None) -> CostVolume:
    """Census Hamming cost volume for full-resolution ``hypotheses`` at 1/scale resolution.

    Fractional shifts sample the right image by linear interpolation along the
    row before the census comparison. Out-of-frame samples cost ``window**2 - 1``.
    """
    lp, rp = _pixels(left), _pixels(right)
    if lp.shape != rp.shape:
        raise InputError(f"image sizes differ: {lp.shape} vs {rp.shape}")
    hyp = np.asarray(hypotheses, dtype=np.float64)
    if hyp.ndim == 1:
        shifts = np.broadcast_to(hyp / scale, lp.shape + hyp.shape)
    else:
        shifts = hyp / scale
    left_desc = census_transform(lp, window, backend)
    costs = get_kernels(backend).census_cost(left_desc, np.ascontiguousarray(rp),
                                             np.ascontiguousarray(shifts), int(window))
    return CostVolume(costs, hyp, sentinel=float(window * window - 1))


def box_filter_volume(volume: CostVolume, size: int = BOX_SIZE) -> CostVolume:
    """Average costs over a ``size`` x ``size`` spatial window per hypothesis slice."""
    smoothed = ndimage.uniform_filter(volume.costs, size=(size, size, 1), mode="nearest")
    np.maximum(smoothed, 0.0, out=smoothed)
    return CostVolume(smoothed, volume.hypotheses, volume.sentinel)


def sample_coarse(max_disp: float, count: int = N_COARSE) -> np.ndarray:
    """``count`` uniformly spaced hypotheses ``0, max_disp/count, ...`` below ``max_disp``."""
    if not max_disp > 0:
        raise InputError("max_disp must be positive")
    return np.arange(count) * (float(max_disp) / count)


def sample_refined(coarse, window: int = REFINE_WINDOW, count: int = N_REFINED,
                   pad: float = 0.0) -> np.ndarray:
    """Per-pixel hypotheses spanning the coarse min/max over a ``window`` neighborhood.

    The even-sized window covers offsets ``-window//2 .. window//2 - 1`` with
    clamped borders. The span is widened by ``pad`` px on both sides, and a
    span that is still empty becomes ``value +/- 1``. Hypotheses may dip below
    zero; the solver output is clamped instead. Returns (H, W, count).
    """
    values = coarse.values if isinstance(coarse, DisparityMap) else np.asarray(coarse, dtype=np.float64)
    if values.ndim != 2 or not np.all(np.isfinite(values)):
        raise InputError("coarse map must be 2-D with finite values everywhere")
    if count < 2:
        raise InputError("refined stage needs at least two hypotheses")
    if not 0.0 <= pad <= 1.0:
        raise InputError("pad must lie in [0, 1]")
    lo = ndimage.minimum_filter(values, size=window, mode="nearest") - pad
    hi = ndimage.maximum_filter(values, size=window, mode="nearest") + pad
    flat = hi <= lo
    lo = np.where(flat, lo - 1.0, lo)
    hi = np.where(flat, hi + 1.0, hi)
    t = np.linspace(0.0, 1.0, count)
    return lo[..., None] + (hi - lo)[..., None] * t


def softmax_costs(costs: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise ``exp(-cost / T)`` normalized over the last axis (min-cost subtracted first)."""
    if not temperature > 0:
        raise InputError("temperature must be positive")
    c = np.asarray(costs, dtype=np.float64)
    if not np.all(np.isfinite(c)):
        raise InputError("costs must be finite")
    e = np.exp(-(c - c.min(axis=-1, keepdims=True)) / temperature)
    return renormalize_rows(e / e.sum(axis=-1, keepdims=True))


def costs_to_pmf(costs, hypotheses, temperature: float = TEMPERATURE) -> DisparityPmf:
    c = np.atleast_1d(np.asarray(costs, dtype=np.float64))
    if c.ndim != 1 or c.size == 0:
        raise InputError("costs must be a non-empty vector")
    return DisparityPmf(hypotheses, softmax_costs(c, temperature))


def resolve_threads(threads=None) -> int:
    """Worker count: explicit value, else ``STEREO_RISK_THREADS``, else 1; ``auto`` is cpu_count."""
    if threads is None:
        threads = os.environ.get("STEREO_RISK_THREADS") or 1
    if threads == "auto":
        return os.cpu_count() or 1
    try:
        n = int(threads)
    except (TypeError, ValueError):
        raise InputError(f"threads must be a positive integer or 'auto', got {threads!r}") from None
    if n < 1:
        raise InputError(f"threads must be a positive integer or 'auto', got {threads!r}")
    return n


def _solve_chunked(hyp, probs, cfg, threads, backend):
    n = probs.shape[0]
    if threads <= 1 or n < 2 * threads:
        return solve_batch(hyp, probs, cfg, backend)
    bounds = np.linspace(0, n, threads + 1).astype(int)
    shared = hyp.ndim == 1

    def work(k):
        a, b = bounds[k], bounds[k + 1]
        return solve_batch(hyp if shared else hyp[a:b], probs[a:b], cfg, backend)

    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(work, range(threads)))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


@dataclass
class StageStats:
    name: str
    seconds: float
    iterations: np.ndarray = field(repr=False)
    pixels: int = 0


def predict_map(volume: CostVolume, cfg: RiskConfig | None = None, predictor: str = "l1risk",
                temperature: float = TEMPERATURE, threads=1, backend=None,
                stats: list | None = None) -> DisparityMap:
    """Convert every pixel's costs to a PMF and apply the chosen estimator.

    ``expectation`` and ``l2risk`` both give the weighted mean. Pixels with
    non-finite costs or whose best cost is the out-of-frame sentinel are
    marked invalid instead of raising.
    """
    if predictor not in PREDICTORS:
        raise InputError(f"unknown predictor {predictor!r}; expected one of {sorted(PREDICTORS)}")
    cfg = (cfg or RiskConfig()).with_(norm=PREDICTORS[predictor])
    height, width, n_hyp = volume.shape
    costs = volume.costs.reshape(-1, n_hyp)
    hyp = volume.hypotheses if volume.hypotheses.ndim == 1 else volume.hypotheses.reshape(-1, n_hyp)
    ok = np.all(np.isfinite(costs), axis=1)
    if volume.sentinel is not None:
        ok &= costs.min(axis=1, initial=np.inf, where=np.isfinite(costs)) < volume.sentinel
    safe = np.where(np.isfinite(costs), costs, 0.0)
    probs = softmax_costs(safe, temperature)
    t0 = time.perf_counter()
    y, iters, _ = _solve_chunked(hyp, probs, cfg, resolve_threads(threads), backend)
    if stats is not None:
        stats.append(StageStats("solve", time.perf_counter() - t0, iters.reshape(height, width), y.size))
    # hypotheses may dip below zero in the refined stage; disparities may not
    values = np.maximum(y.reshape(height, width), 0.0)
    return DisparityMap(values, ok.reshape(height, width) & np.isfinite(values))


def downsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Box-filter reduction by an integer factor (trailing partial blocks dropped)."""
    h, w = img.shape[0] // factor, img.shape[1] // factor
    if h == 0 or w == 0:
        raise InputError(f"image {img.shape} too small to reduce by {factor}")
    return img[: h * factor, : w * factor].reshape(h, factor, w, factor).mean(axis=(1, 3))


def upsample_nearest(arr: np.ndarray, factor: int, shape) -> np.ndarray:
    up = np.repeat(np.repeat(arr, factor, axis=0), factor, axis=1)
    pad = ((0, shape[0] - up.shape[0]), (0, shape[1] - up.shape[1]))
    return np.pad(up, pad, mode="edge")


@dataclass
class MatchResult:
    disparity: DisparityMap
    coarse: DisparityMap
    refined: DisparityMap | None
    timings: dict
    iterations: dict = field(repr=False, default_factory=dict)


def match(left, right, max_disp: float = 192, cfg: RiskConfig | None = None,
          predictor: str = "l1risk", temperature: float = TEMPERATURE,
          census_window: int = CENSUS_WINDOW, cascade: bool = True, box_filter: bool = True,
          threads=1, backend=None, refine_pad: float = REFINE_PAD) -> MatchResult:
    """Run the coarse (1/4) and, with ``cascade``, refined (1/2) stages.

    The returned disparity map has the input resolution (nearest upsampling).
    """
    lp, rp = _pixels(left), _pixels(right)
    if lp.shape != rp.shape:
        raise InputError(f"image sizes differ: {lp.shape} vs {rp.shape}")
    cfg = cfg or RiskConfig()
    timings, iterations = {}, {}

    def run_stage(name, scale, hyps):
        t0 = time.perf_counter()
        lo, ro = downsample(lp, scale), downsample(rp, scale)
        vol = census_cost_volume(lo, ro, hyps, census_window, scale, backend)
        if box_filter:
            vol = box_filter_volume(vol)
        t1 = time.perf_counter()
        stats = []
        dmap = predict_map(vol, cfg, predictor, temperature, threads, backend, stats)
        timings[f"{name}_cost"] = t1 - t0
        timings[f"{name}_solve"] = stats[0].seconds
        iterations[name] = stats[0].iterations
        log.debug("%s stage: %dx%d px, %d hypotheses", name, *vol.shape)
        return dmap

    coarse = run_stage("coarse", COARSE_SCALE, sample_coarse(max_disp))
    refined = None
    if cascade:
        half_shape = (lp.shape[0] // REFINED_SCALE, lp.shape[1] // REFINED_SCALE)
        factor = COARSE_SCALE // REFINED_SCALE
        coarse_up = upsample_nearest(np.where(coarse.valid, coarse.values, 0.0), factor, half_shape)
        refined = run_stage("refined", REFINED_SCALE, sample_refined(coarse_up, pad=refine_pad))
        final, scale = refined, REFINED_SCALE
    else:
        final, scale = coarse, COARSE_SCALE
    values = upsample_nearest(np.where(final.valid, final.values, 0.0), scale, lp.shape)
    valid = upsample_nearest(final.valid, scale, lp.shape)
    return MatchResult(DisparityMap(values, valid), coarse, refined, timings, iterations)


def synthetic_pair(height: int = 256, width: int = 256, shift: int = 5, seed: int = 0,
                   blur: float = 2.0):
    """Seeded band-limited noise pair with a constant integer disparity ``shift``.

    ``left(r, c) == right(r, c - shift)``. Returns ``(left, right, gt)``.
    """
    if shift < 0 or int(shift) != shift:
        raise InputError("shift must be a nonnegative integer")
    rng = np.random.default_rng(seed)
    pattern = ndimage.gaussian_filter(rng.random((height, width + shift)), blur, mode="wrap")
    pattern = (pattern - pattern.min()) / (pattern.max() - pattern.min())
    left = pattern[:, :width].copy()
    right = pattern[:, shift: shift + width].copy()
    return left, right, np.full((height, width), float(shift))
