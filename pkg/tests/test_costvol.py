import math

import numpy as np
import pytest

from oracles import census_loops, window_minmax_loops
from stereorisk import (CostVolume, DisparityMap, DisparityPmf, GrayImage, InputError, RiskConfig,
                        census_cost_volume, census_transform, costs_to_pmf, match, matching_cost,
                        predict_map, sample_coarse, sample_refined, synthetic_pair)
from stereorisk._backend import available_backends
from stereorisk.costvol import (TEMPERATURE, box_filter_volume, downsample, resolve_threads,
                                softmax_costs, upsample_nearest)
from stereorisk.risk import solve_l1, solve_l2

BACKENDS = available_backends()
INTERIOR = (slice(16, -16), slice(32, -16))


@pytest.fixture(scope="module")
def pair():
    return synthetic_pair()


class TestImages:
    @pytest.mark.parametrize("bad", [np.zeros((0, 3)), np.zeros(4), np.full((2, 2), 1.5),
                                     np.full((2, 2), np.nan)])
    def test_gray_image_rejects(self, bad):
        with pytest.raises(InputError):
            GrayImage(bad)

    def test_disparity_map_invalid_holds_inf(self):
        m = DisparityMap(np.array([[1.0, 2.0]]), np.array([[True, False]]))
        assert m.values[0, 1] == math.inf
        assert m == DisparityMap(np.array([[1.0, math.inf]]))

    @pytest.mark.parametrize("vals", [[[-1.0]], [[np.nan]]])
    def test_disparity_map_rejects(self, vals):
        with pytest.raises(InputError):
            DisparityMap(np.array(vals), np.array([[True]]))

    def test_synthetic_pair_relation(self, pair):
        left, right, gt = pair
        assert np.array_equal(left[:, 5:], right[:, :-5])
        assert np.all(gt == 5.0)
        assert left.min() >= 0 and left.max() <= 1

    def test_synthetic_pair_seeded(self):
        a = synthetic_pair(32, 32, 3, seed=7)
        b = synthetic_pair(32, 32, 3, seed=7)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not np.array_equal(a[0], synthetic_pair(32, 32, 3, seed=8)[0])


@pytest.mark.parametrize("backend", BACKENDS)
class TestCensus:
    def test_constant_image(self, backend):
        assert not census_transform(np.full((9, 9), 0.5), 7, backend).any()

    def test_bright_center(self, backend):
        img = np.zeros((5, 5))
        img[2, 2] = 1.0
        desc = census_transform(img, 3, backend)
        assert desc[2, 2].sum() == 8

    def test_against_loops(self, backend, rng):
        img = rng.random((16, 16))
        for window in (3, 5, 7):
            assert np.array_equal(census_transform(img, window, backend), census_loops(img, window))

    def test_bit_order(self, backend):
        img = np.ones((3, 3))
        img[0, 0] = 0.0  # first neighbor in row-major order
        img[1, 1] = 0.5
        assert census_transform(img, 3, backend)[1, 1].tolist() == [1, 0, 0, 0, 0, 0, 0, 0]

    @pytest.mark.parametrize("window", [4, 1, 11])
    def test_bad_window(self, backend, window):
        with pytest.raises(InputError):
            census_transform(np.zeros((9, 9)), window, backend)


class TestMatchingCost:
    def test_identical_zero(self, rng):
        d = census_transform(rng.random((12, 12)), 5)
        assert not matching_cost(d, d, 0).any()

    def test_three_bits(self):
        a = np.zeros((1, 1, 8), dtype=np.uint8)
        b = a.copy()
        b[0, 0, [1, 4, 6]] = 1
        assert matching_cost(a, b, 0)[0, 0] == 3

    def test_exact_shift(self, pair):
        left, right, _ = pair
        ld, rd = census_transform(left, 7), census_transform(right, 7)
        cost = matching_cost(ld, rd, 5)
        assert not cost[3:-3, 5 + 3:-3].any()

    def test_sentinel(self, rng):
        d = census_transform(rng.random((6, 10)), 3)
        cost = matching_cost(d, d, 4)
        assert np.all(cost[:, :4] == 8)
        assert np.all(matching_cost(d, d, 40) == 8)

    def test_negative(self, rng):
        d = census_transform(rng.random((6, 10)), 3)
        with pytest.raises(InputError):
            matching_cost(d, d, -1)


@pytest.mark.parametrize("backend", BACKENDS)
class TestCostVolume:
    def test_integer_shifts_match_hamming(self, backend, rng):
        left, right = rng.random((20, 30)), rng.random((20, 30))
        hyps = np.arange(6.0)
        vol = census_cost_volume(left, right, hyps, 5, 1.0, backend)
        ld, rd = census_transform(left, 5), census_transform(right, 5)
        for n, d in enumerate(hyps):
            assert np.array_equal(vol.costs[:, :, n], matching_cost(ld, rd, int(d)))

    def test_shift_argmin(self, backend):
        for s in range(1, 9):
            left, right, _ = synthetic_pair(40, 64, s, seed=s)
            vol = census_cost_volume(left, right, np.arange(12.0), 7, 1.0, backend)
            inner = vol.costs[3:-3, s + 3:-3]
            # s is always a minimizer; census can tie it on smooth patches
            assert np.all(inner[..., s] == 0)
            assert np.all(inner[..., s] == inner.min(axis=2))
            assert np.mean(np.argmin(inner, axis=2) == s) > 0.95

    def test_scale(self, backend, rng):
        left, right = rng.random((16, 24)), rng.random((16, 24))
        a = census_cost_volume(left, right, np.array([0.0, 4.0, 8.0]), 3, 2.0, backend)
        b = census_cost_volume(left, right, np.array([0.0, 2.0, 4.0]), 3, 1.0, backend)
        assert np.array_equal(a.costs, b.costs)
        assert a.hypotheses.tolist() == [0.0, 4.0, 8.0]

    def test_fractional_between_neighbors(self, backend, pair):
        left, right, _ = pair
        vol = census_cost_volume(left[:32, :64], right[:32, :64], np.array([4.5, 5.0, 5.5]), 7, 1.0, backend)
        assert np.all(vol.costs[4:-4, 12:-4, 1] <= vol.costs[4:-4, 12:-4, 0])

    def test_size_mismatch(self, backend):
        with pytest.raises(InputError):
            census_cost_volume(np.zeros((8, 8)), np.zeros((8, 9)), np.arange(3.0), 3, 1.0, backend)


class TestSampling:
    def test_coarse_integer(self):
        assert sample_coarse(192).tolist() == list(range(192))

    def test_coarse_half(self):
        h = sample_coarse(96)
        assert h.size == 192 and np.allclose(np.diff(h), 0.5) and h[0] == 0

    def test_coarse_unit(self):
        h = sample_coarse(1)
        assert h.size == 192 and h[0] == 0 and h[-1] < 1

    def test_coarse_invalid(self):
        with pytest.raises(InputError):
            sample_coarse(0)

    def test_refined_flat(self):
        h = sample_refined(np.full((5, 5), 10.0))
        assert h.shape == (5, 5, 16)
        assert np.allclose(h[2, 2], np.linspace(9, 11, 16))

    def test_refined_span(self):
        coarse = np.full((4, 4), 8.0)
        coarse[0, 0] = 24.0
        h = sample_refined(coarse)
        assert h[2, 2].tolist() == pytest.approx([8 + 16 * k / 15 for k in range(16)])

    def test_refined_step_edge_vs_loops(self):
        coarse = np.zeros((20, 40))
        coarse[:, 20:] = 30.0
        coarse[5:9, 3:7] = 12.5
        h = sample_refined(coarse)
        lo, hi = window_minmax_loops(coarse, 12)
        flat = hi <= lo
        assert np.array_equal(h[..., 0], np.where(flat, lo - 1, lo))
        assert np.allclose(h[..., -1], np.where(flat, hi + 1, hi), rtol=0, atol=1e-12)

    def test_refined_containment_with_pad(self, rng):
        coarse = rng.uniform(0, 40, (16, 16))
        lo, hi = window_minmax_loops(coarse, 12)
        for pad in (0.0, 0.5, 1.0):
            h = sample_refined(coarse, pad=pad)
            assert np.all(h >= lo[..., None] - 1) and np.all(h <= hi[..., None] + 1 + 1e-12)
            assert np.all(np.diff(h, axis=-1) > 0)

    def test_refined_invalid(self):
        with pytest.raises(InputError):
            sample_refined(np.array([[np.inf]]))
        with pytest.raises(InputError):
            sample_refined(np.zeros((3, 3)), pad=2.0)


class TestCostsToPmf:
    def test_equal_costs(self):
        assert costs_to_pmf([3.0, 3.0, 3.0, 3.0], np.arange(4.0)).probs.tolist() == [0.25] * 4

    def test_ln2(self):
        t = 2.5
        pmf = costs_to_pmf([0.0, t * math.log(2)], [0.0, 1.0], t)
        assert pmf.probs.tolist() == pytest.approx([2 / 3, 1 / 3], abs=1e-15)

    def test_single(self):
        assert costs_to_pmf([7.0], [3.0]).probs.tolist() == [1.0]

    def test_non_finite(self):
        with pytest.raises(InputError):
            costs_to_pmf([0.0, np.inf], [0.0, 1.0])

    def test_temperature(self):
        with pytest.raises(InputError):
            costs_to_pmf([0.0, 1.0], [0.0, 1.0], 0.0)

    def test_offset_invariance_bit_exact(self, rng):
        # integer (Hamming-like) costs and integer offsets keep every subtraction exact
        for _ in range(100):
            c = rng.integers(0, 48, size=int(rng.integers(1, 30))).astype(float)
            k = float(rng.integers(-1000, 1000))
            assert np.array_equal(softmax_costs(c, TEMPERATURE), softmax_costs(c + k, TEMPERATURE))

    def test_no_overflow(self):
        p = softmax_costs(np.array([1e5, 1e5 + 1.0]), 0.01)
        assert np.isfinite(p).all() and p[0] == pytest.approx(1.0)


class TestPredictMap:
    def _bimodal_volume(self):
        t = TEMPERATURE
        costs = np.array([0.0, t * math.log(0.6 / 0.4)]).reshape(1, 1, 2)
        return CostVolume(costs, np.array([10.0, 50.0]))

    def test_bimodal(self):
        vol = self._bimodal_volume()
        l1 = predict_map(vol, RiskConfig(tau=1e-6), "l1risk")
        ex = predict_map(vol, RiskConfig(), "expectation")
        assert l1.values[0, 0] == pytest.approx(11.2085, abs=1e-3)
        assert ex.values[0, 0] == pytest.approx(26.0, abs=1e-12)

    def test_expectation_equals_l2risk(self, rng):
        vol = CostVolume(rng.uniform(0, 40, (6, 7, 12)), np.arange(12.0))
        a = predict_map(vol, predictor="expectation")
        b = predict_map(vol, predictor="l2risk")
        assert a == b

    @pytest.mark.parametrize("per_pixel", [False, True])
    def test_pure_composition(self, rng, per_pixel):
        h, w, n = 5, 6, 10
        costs = rng.uniform(0, 40, (h, w, n))
        hyps = (np.sort(rng.uniform(0, 30, (h, w, n)), axis=-1) + np.arange(n) * 1e-3) if per_pixel else np.arange(n) * 1.5
        vol = CostVolume(costs, hyps)
        cfg = RiskConfig(tau=1e-3)
        l1 = predict_map(vol, cfg, "l1risk")
        l2 = predict_map(vol, cfg, "l2risk")
        for r in range(h):
            for c in range(w):
                d = vol.pixel_hypotheses(r, c)
                probs = softmax_costs(costs[r, c], TEMPERATURE)
                pmf = DisparityPmf(d, probs)
                assert l1.values[r, c] == solve_l1(pmf, cfg).y_star
                assert l2.values[r, c] == pytest.approx(solve_l2(pmf), rel=1e-15)

    def test_huber_between(self):
        vol = self._bimodal_volume()
        y = predict_map(vol, RiskConfig(tau=1e-6, beta=10.0), "huber").values[0, 0]
        assert 11.2 < y < 26.0

    def test_sentinel_marks_invalid(self):
        costs = np.full((1, 2, 3), 48.0)
        costs[0, 1, 1] = 3.0
        m = predict_map(CostVolume(costs, np.arange(3.0), sentinel=48.0))
        assert m.valid.tolist() == [[False, True]]

    def test_unknown_predictor(self):
        with pytest.raises(InputError):
            predict_map(self._bimodal_volume(), predictor="median")

    def test_identical_images_zero(self, rng):
        img = synthetic_pair(32, 48, 0, seed=3)[0]
        vol = box_filter_volume(census_cost_volume(img, img, np.arange(8.0), 7))
        for pred in ("l1risk", "expectation"):
            m = predict_map(vol, RiskConfig(tau=1e-6), pred)
            # hypotheses start at 0, so any spread pulls the estimate up a little
            assert np.all(m.values < 0.5)

    def test_threads_deterministic(self, rng):
        vol = CostVolume(rng.uniform(0, 40, (17, 9, 24)), np.arange(24.0))
        ref = predict_map(vol, threads=1)
        for t in (2, 3, 8):
            assert predict_map(vol, threads=t) == ref


class TestResampling:
    def test_downsample_block_mean(self):
        img = np.arange(16.0).reshape(4, 4) / 16
        assert np.allclose(downsample(img, 2), np.array([[2.5, 4.5], [10.5, 12.5]]) / 16)

    def test_upsample_nearest_edge_pad(self):
        up = upsample_nearest(np.array([[1.0, 2.0]]), 2, (3, 5))
        assert up.tolist() == [[1, 1, 2, 2, 2]] * 3

    def test_box_filter_constant(self):
        vol = CostVolume(np.full((6, 6, 3), 4.0), np.arange(3.0))
        assert np.allclose(box_filter_volume(vol).costs, 4.0)


class TestThreads:
    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("STEREO_RISK_THREADS", "3")
        assert resolve_threads(None) == 3
        assert resolve_threads(2) == 2

    def test_auto(self, monkeypatch):
        monkeypatch.delenv("STEREO_RISK_THREADS", raising=False)
        assert resolve_threads("auto") >= 1
        assert resolve_threads(None) == 1

    @pytest.mark.parametrize("bad", ["0", "x", -2])
    def test_invalid(self, bad):
        with pytest.raises(InputError):
            resolve_threads(bad)


class TestMatch:
    def test_identical_images(self, pair):
        left = pair[0]
        res = match(left, left, max_disp=64)
        assert res.disparity.valid.all()
        assert np.abs(res.disparity.values).mean() < 0.1

    def test_shift_five(self, pair):
        left, right, gt = pair
        res = match(left, right)
        assert np.abs(res.disparity.values - gt)[INTERIOR].mean() < 0.5
        assert res.disparity.shape == left.shape
        assert set(res.timings) == {"coarse_cost", "coarse_solve", "refined_cost", "refined_solve"}

    def test_no_cascade(self, pair):
        left, right, gt = pair
        res = match(left, right, cascade=False)
        assert res.refined is None
        assert np.abs(res.disparity.values - gt)[INTERIOR].mean() < 0.5

    def test_size_mismatch(self):
        with pytest.raises(InputError):
            match(np.zeros((32, 32)), np.zeros((32, 36)))

    def test_thread_determinism(self, pair):
        left, right, _ = pair
        a = match(left, right, threads=1).disparity
        b = match(left, right, threads=4).disparity
        assert np.array_equal(a.values, b.values) and np.array_equal(a.valid, b.valid)
