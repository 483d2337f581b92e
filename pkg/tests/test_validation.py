import numpy as np
import pytest

from bkbm import (
    DriftParams,
    Interval,
    OffspringLaw,
    Regime,
    SimConfig,
    expectation_level_check,
    kesten_rate_check,
    martingale_conservation_check,
    pathwise_check,
    predict_expansion,
    start_value,
)
from bkbm.errors import PopulationCapExceeded, RegimeMismatchError


class TestExpectationLevel:
    def test_residuals_decay(self):
        p = DriftParams(theta=1.0)
        for m in (0, 1):
            rep = expectation_level_check(m, p, 1.0, Interval(0.0), [5.0, 10.0, 20.0, 40.0])
            assert rep.verdict
            scaled = [abs(r) for r in rep.residual_scaled]
            assert scaled[-2] > scaled[-1]

    def test_higher_order_refines(self):
        p = DriftParams(theta=1.0)
        r0 = expectation_level_check(0, p, 1.0, Interval(1.0), [10.0, 20.0, 40.0])
        r1 = expectation_level_check(1, p, 1.0, Interval(1.0), [10.0, 20.0, 40.0])
        assert abs(r1.residual[-1]) <= abs(r0.residual[-1])

    def test_nested_sum_consistency(self):
        # the m-report minus its top term is the (m-1)-report
        p = DriftParams(theta=0.8)
        iv = Interval(0.5)
        t_grid = [6.0, 12.0, 24.0]
        rep2 = expectation_level_check(2, p, 1.0, iv, t_grid)
        rep1 = expectation_level_check(1, p, 1.0, iv, t_grid)
        M = [start_value(1.0, k, 0.8) for k in range(3)]
        for t, p2, p1 in zip(t_grid, rep2.predicted, rep1.predicted):
            top = predict_expansion(2, p, iv, M, t).terms[2]
            assert p2 - top == pytest.approx(p1, rel=1e-12)

    def test_zero_drift_unbounded_branch(self):
        p = DriftParams(theta=0.0)
        rep = expectation_level_check(1, p, 1.0, Interval(1.0), [10.0, 20.0, 40.0])
        assert rep.regime == Regime.ZERO_DRIFT_UNBOUNDED.value
        assert rep.verdict

    def test_regime_mismatch(self):
        with pytest.raises(RegimeMismatchError):
            expectation_level_check(0, DriftParams(theta=0.0), 1.0, Interval(1.0),
                                    [5.0, 10.0], regime=Regime.POSITIVE_DRIFT)
        with pytest.raises(RegimeMismatchError):
            expectation_level_check(0, DriftParams(theta=1.0), 1.0, Interval(1.0),
                                    [5.0, 10.0], regime=Regime.ZERO_DRIFT_UNBOUNDED)

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            expectation_level_check(0, DriftParams(theta=1.0), 1.0, Interval(0.0),
                                    [10.0, 5.0])

    def test_csv_rows_shape(self):
        rep = expectation_level_check(0, DriftParams(theta=1.0), 1.0, Interval(0.0),
                                      [5.0, 10.0])
        header, rows = rep.csv_rows()
        assert header == ("t", "observed", "predicted", "residual", "residual_tm")
        assert len(rows) == 2
        assert rows[0][3] == pytest.approx(rows[0][1] - rows[0][2])


class TestKestenRate:
    def test_positive_drift(self):
        rep = kesten_rate_check(DriftParams(theta=1.0), 1.0, [10.0, 20.0, 40.0, 80.0])
        assert rep.verdict
        assert rep.b_exponent == 1.5
        rel = abs(rep.fitted_constant / rep.theory_constant - 1.0)
        assert rel <= 0.01

    def test_zero_drift_uses_half_exponent(self):
        rep = kesten_rate_check(DriftParams(theta=0.0), 1.0, [10.0, 20.0, 40.0, 80.0])
        assert rep.b_exponent == 0.5
        assert rep.verdict
        assert rep.fitted_constant is None

    def test_zero_drift_bounded_window_is_three_halves(self):
        rep = kesten_rate_check(DriftParams(theta=0.0), 1.0, [10.0, 20.0, 40.0, 80.0],
                                Interval(0.5, 2.0))
        assert rep.b_exponent == 1.5

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            kesten_rate_check(DriftParams(theta=1.0), 1.0, [10.0, 20.0])


class TestConservationCheck:
    def test_threaded_matches_serial(self):
        kwargs = dict(k_max=1, replicates=4000, seed=50)
        a = martingale_conservation_check(DriftParams(theta=0.5), OffspringLaw.binary(),
                                          1.0, [1.0, 2.0], threads=1, **kwargs)
        b = martingale_conservation_check(DriftParams(theta=0.5), OffspringLaw.binary(),
                                          1.0, [1.0, 2.0], threads=4, chunk_size=1000,
                                          **kwargs)
        # identical replicate streams regardless of chunking: identical rows
        serial = martingale_conservation_check(DriftParams(theta=0.5),
                                               OffspringLaw.binary(), 1.0, [1.0, 2.0],
                                               threads=1, chunk_size=1000, **kwargs)
        for ra, rb in zip(serial.rows, b.rows):
            assert ra == rb
        assert a.verdict and b.verdict


class TestPathwise:
    def _config(self, theta=1.0, horizon=10.0, seed=70):
        return SimConfig(params=DriftParams(theta=theta), law=OffspringLaw.binary(),
                         start_x=1.0, schedule=(horizon,), seed=seed)

    def test_smoke_report_fields(self):
        rep = pathwise_check(0, self._config(), Interval(0.5, 2.0), replicates=60,
                             n_checkpoints=48)
        assert rep.mode == "pathwise"
        assert 0.0 <= rep.extras["survival_fraction"] <= 1.0
        assert len(rep.t) == len(rep.observed) == len(rep.predicted)
        assert isinstance(rep.verdict, bool) or rep.verdict in (True, False)

    def test_kappa_hypothesis_enforced(self):
        with pytest.raises(ValueError):
            pathwise_check(1, self._config(), Interval(0.0), kappa=4.0, replicates=10)

    def test_extinct_law_gives_zero_report(self):
        cfg = SimConfig(params=DriftParams(theta=0.0, mu=0.0), law=OffspringLaw((1.0,)),
                        start_x=1.0, schedule=(6.0,), seed=71)
        rep = pathwise_check(0, cfg, Interval(0.0), replicates=30, n_checkpoints=24)
        assert rep.extras["survival_fraction"] == 0.0
        assert all(v == 0.0 for v in rep.observed)
        assert all(v == 0.0 for v in rep.predicted)
        assert rep.verdict  # zero residuals satisfy the decay bound trivially

    def test_mean_observed_additive_over_windows(self):
        cfg = self._config(seed=72)
        a, b = 0.8, 2.0
        kw = dict(replicates=50, n_checkpoints=32)
        full = pathwise_check(0, cfg, Interval(a), **kw)
        low = pathwise_check(0, cfg, Interval(a, b), **kw)
        high = pathwise_check(0, cfg, Interval(b), **kw)
        np.testing.assert_allclose(
            np.asarray(full.extras["mean_observed_all"]),
            np.asarray(low.extras["mean_observed_all"]) + np.asarray(high.extras["mean_observed_all"]),
            rtol=1e-12, atol=1e-15)

    def test_threads_equivalent(self):
        cfg = self._config(seed=73)
        kw = dict(replicates=60, n_checkpoints=32, chunk_size=20)
        one = pathwise_check(0, cfg, Interval(0.5, 2.0), threads=1, **kw)
        many = pathwise_check(0, cfg, Interval(0.5, 2.0), threads=4, **kw)
        np.testing.assert_array_equal(one.observed, many.observed)
        np.testing.assert_array_equal(one.predicted, many.predicted)
        assert one.extras["median_ratio_last"] == many.extras["median_ratio_last"]

    def test_population_cap_attaches_partial_report(self):
        cfg = SimConfig(params=DriftParams(theta=0.0), law=OffspringLaw.binary(),
                        start_x=2.0, schedule=(12.0,), max_population=200, seed=74)
        with pytest.raises(PopulationCapExceeded) as err:
            pathwise_check(0, cfg, Interval(0.0), replicates=10, n_checkpoints=24)
        assert err.value.partial.mode == "pathwise"
        assert err.value.partial.extras["error"] == "population cap exceeded"
