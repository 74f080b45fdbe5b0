import numpy as np
import pytest

from stereorisk import DisparityMap, EvalMask, InputError, d1_rate, epe, evaluate, outlier_rate


def dm(values, valid=None):
    return DisparityMap(np.atleast_2d(np.asarray(values, dtype=float)),
                        None if valid is None else np.atleast_2d(valid))


FULL2 = EvalMask.full((1, 2))


class TestEpe:
    def test_identity(self):
        g = dm([[3.0, 4.0], [5.0, 6.0]])
        assert epe(g, g, EvalMask.full(g.shape)) == 0.0

    def test_plus_one(self):
        g = dm([[3.0, 4.0], [5.0, 6.0]])
        assert epe(dm(g.values + 1), g, EvalMask.full(g.shape)) == 1.0

    def test_pair(self):
        assert epe(dm([1.0, 2.0]), dm([1.0, 4.0]), FULL2) == 1.0

    def test_no_pixels(self):
        mask = EvalMask(np.zeros((1, 2), dtype=bool))
        with pytest.raises(InputError):
            epe(dm([1.0, 2.0]), dm([1.0, 2.0]), mask)

    def test_invalid_prediction_excluded(self):
        pred = dm([1.0, 9.0], [True, False])
        assert epe(pred, dm([2.0, 2.0]), FULL2) == 1.0

    def test_invalid_gt_excluded(self):
        gt = dm([1.0, np.inf])
        assert epe(dm([1.0, 50.0]), gt, FULL2) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            epe(dm([1.0]), dm([1.0, 2.0]), FULL2)


class TestOutlierRate:
    def test_identity(self):
        g = dm([1.0, 2.0])
        for k in (0.5, 1, 3):
            assert outlier_rate(g, g, FULL2, k) == 0.0

    def test_half(self):
        assert outlier_rate(dm([1.4, 3.6]), dm([1.0, 2.0]), FULL2, 1.0) == 50.0

    def test_strict(self):
        assert outlier_rate(dm([3.0, 4.0]), dm([1.0, 2.0]), FULL2, 2.0) == 0.0

    def test_plus_two(self):
        g = dm(np.arange(12.0).reshape(3, 4))
        p = dm(g.values + 2)
        m = EvalMask.full(g.shape)
        assert outlier_rate(p, g, m, 1.0) == 100.0
        assert outlier_rate(p, g, m, 2.0) == 0.0

    def test_invalid_prediction_is_outlier(self):
        assert outlier_rate(dm([1.0, 0.0], [True, False]), dm([1.0, 1.0]), FULL2, 3.0) == 50.0

    def test_monotone_in_k(self, rng):
        g = dm(rng.uniform(0, 50, (20, 20)))
        p = dm(np.abs(g.values + rng.normal(0, 2, g.shape)))
        m = EvalMask.full(g.shape)
        rates = [outlier_rate(p, g, m, k) for k in np.linspace(0.1, 8, 40)]
        assert all(b <= a for a, b in zip(rates, rates[1:]))

    def test_order_invariant(self, rng):
        g = rng.uniform(0, 50, 100)
        p = np.abs(g + rng.normal(0, 2, 100))
        perm = rng.permutation(100)
        m = EvalMask.full((1, 100))
        for f in (lambda a, b: epe(a, b, m), lambda a, b: outlier_rate(a, b, m, 1.0),
                  lambda a, b: d1_rate(a, b, m)):
            assert f(dm(p), dm(g)) == pytest.approx(f(dm(p[perm]), dm(g[perm])), rel=1e-12)

    def test_bad_k(self):
        with pytest.raises(InputError):
            outlier_rate(dm([1.0]), dm([1.0]), EvalMask.full((1, 1)), 0.0)


class TestD1:
    @pytest.mark.parametrize("err,gt,bad", [(5.0, 10.0, True), (4.0, 100.0, False), (2.0, 10.0, False)])
    def test_rule(self, err, gt, bad):
        assert d1_rate(dm([gt + err]), dm([gt]), EvalMask.full((1, 1))) == (100.0 if bad else 0.0)


class TestMasks:
    def test_noc_subset_enforced(self):
        ev = np.array([[True, False]])
        with pytest.raises(InputError):
            EvalMask(ev, np.array([[True, True]]))

    def test_region_without_noc(self):
        with pytest.raises(InputError):
            FULL2.region("noc")

    def test_unknown_region(self):
        with pytest.raises(InputError):
            FULL2.region("occ")


class TestReport:
    def test_keys_and_counts(self):
        g = dm([[1.0, 2.0, 10.0, 20.0]])
        p = dm([[1.0, 3.5, 15.0, 0.0]], [[True, True, True, False]])
        noc = np.array([[True, True, False, False]])
        rep = evaluate(p, g, EvalMask.full(g.shape, noc)).to_dict()
        assert rep["epe"] == pytest.approx((0 + 1.5 + 5) / 3)
        assert rep["epe_noc"] == pytest.approx(0.75)
        assert rep["gt1_all"] == 75.0 and rep["gt1_noc"] == 50.0
        assert rep["gt0.5_all"] == 75.0
        assert rep["d1_all"] == 50.0 and rep["d1_noc"] == 0.0
        assert (rep["n_eval"], rep["n_noc"], rep["n_invalid"]) == (4, 2, 1)
        assert rep["d1_bg"] is None and rep["unsupported"] == ["d1_bg", "d1_fg"]
        for k in (0.5, 1, 2, 3, 4):
            assert f"gt{k:g}_noc" in rep and f"gt{k:g}_all" in rep

    def test_all_only(self):
        g = dm([[1.0, 2.0]])
        rep = evaluate(g, g).to_dict()
        assert rep["epe"] == 0.0 and rep["epe_noc"] is None and rep["gt1_noc"] is None
        assert rep["n_noc"] is None

    def test_noc_count_le_all(self, rng):
        g = dm(rng.uniform(1, 50, (10, 10)))
        noc = rng.random((10, 10)) < 0.5
        noc[0, 0] = True
        rep = evaluate(g, g, EvalMask.full(g.shape, noc)).to_dict()
        assert rep["n_noc"] <= rep["n_eval"]
        for v in rep.values():
            if isinstance(v, float):
                assert 0.0 <= v <= 100.0
