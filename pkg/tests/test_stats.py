"""Tests for the statistical toolbox: calibration, power, and reports."""

import json
import math

import numpy as np
import pytest
from scipy import stats as sstats

from fbm2d.sampling import SeedSpec
from fbm2d.stats import (
    MCReport,
    REJECTION_INCONCLUSIVE_RATE,
    RunningMoments,
    circular_uniformity,
    decide_verdict,
    ks_test,
    ks_test_two_sample,
    log_slope_regression,
    moments_accumulate,
    normality_test,
)


def _rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


SEED = SeedSpec(master_seed=42, stream_index=7)


class TestKolmogorovSmirnov:

    def test_null_calibration(self):
        # True-null p-values are roughly uniform: almost none below 0.01.
        hits = sum(
            ks_test(_rng(k).standard_normal(400), sstats.norm.cdf) > 0.01
            for k in range(50)
        )
        assert hits >= 48

    def test_power_against_shift(self):
        x = _rng(3).standard_normal(2000) + 0.5
        assert ks_test(x, sstats.norm.cdf) < 1e-6

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            ks_test(np.zeros(49), sstats.norm.cdf)

    def test_two_sample_null_and_power(self):
        g = _rng(11)
        a = g.standard_normal(1500)
        b = g.standard_normal(1500)
        assert ks_test_two_sample(a, b) > 0.01
        assert ks_test_two_sample(a, b + 0.4) < 1e-6

    def test_two_sample_minimum_size(self):
        with pytest.raises(ValueError):
            ks_test_two_sample(np.zeros(49), np.zeros(200))


class TestNormality:

    def test_null_calibration(self):
        # 100 standard-normal batches: a 1% test should clear nearly all.
        hits = sum(
            normality_test(_rng(1000 + k).standard_normal(500)) > 0.01
            for k in range(100)
        )
        assert hits >= 98

    def test_p_values_spread_under_null(self):
        ps = [normality_test(_rng(2000 + k).standard_normal(500))
              for k in range(100)]
        assert min(ps) < 0.5 < max(ps)

    def test_power_against_shift(self):
        x = _rng(5).standard_normal(2000) + 0.3
        assert normality_test(x) < 0.01

    def test_power_against_heavy_tails(self):
        t3 = _rng(6).standard_t(3, size=2000)
        t3 /= math.sqrt(3.0)  # unit variance, still leptokurtic
        assert normality_test(t3) < 0.01

    def test_small_sample_is_nan(self):
        assert math.isnan(normality_test(np.zeros(99)))

    def test_p_value_bounds(self):
        p = normality_test(_rng(7).standard_normal(150))
        assert 0.0 <= p <= 1.0


class TestCircularUniformity:

    def test_null_calibration(self):
        hits = sum(
            circular_uniformity(
                _rng(3000 + k).uniform(-math.pi, math.pi, 400)) > 0.01
            for k in range(50)
        )
        assert hits >= 48

    def test_power_against_clustered_angles(self):
        theta = 0.3 * _rng(8).standard_normal(1000)
        assert circular_uniformity(theta) < 1e-6

    def test_power_against_bimodal_antipodes(self):
        # Zero resultant defeats Rayleigh alone; the KS component catches it.
        g = _rng(9)
        theta = 0.2 * g.standard_normal(1000)
        theta[::2] += math.pi
        assert circular_uniformity(theta) < 1e-6

    def test_wrapping_invariance(self):
        g = _rng(10)
        theta = g.uniform(-math.pi, math.pi, 500)
        assert circular_uniformity(theta) == pytest.approx(
            circular_uniformity(theta + 2.0 * math.pi), rel=1e-12)

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            circular_uniformity(np.zeros(49))


class TestLogSlopeRegression:

    def test_recovers_exact_slope(self):
        t = np.array([1.0, 10.0, 100.0, 1000.0])
        rows = np.stack([3.0 + 0.75 * np.log(t), -1.0 + 0.75 * np.log(t)])
        mean, se = log_slope_regression(t, rows)
        assert mean == pytest.approx(0.75, abs=1e-12)
        assert se == pytest.approx(0.0, abs=1e-12)

    def test_single_row_zero_stderr(self):
        t = np.array([0.01, 1.0, 100.0, 10000.0])
        mean, se = log_slope_regression(t, 2.0 * np.log(t))
        assert mean == pytest.approx(2.0, abs=1e-12)
        assert se == 0.0

    def test_stderr_matches_spread_of_per_row_slopes(self):
        t = np.array([1.0, 10.0, 100.0, 1000.0])
        g = _rng(12)
        slopes = 0.6 + 0.05 * g.standard_normal(800)
        rows = slopes[:, None] * np.log(t)[None, :]
        mean, se = log_slope_regression(t, rows)
        assert mean == pytest.approx(slopes.mean(), abs=1e-12)
        assert se == pytest.approx(slopes.std(ddof=1) / math.sqrt(800),
                                   rel=1e-12)

    def test_intercepts_do_not_bias_slope(self):
        t = np.geomspace(0.5, 5000.0, 6)
        g = _rng(13)
        rows = g.standard_normal(50)[:, None] + 1.5 * np.log(t)[None, :]
        mean, _ = log_slope_regression(t, rows)
        assert mean == pytest.approx(1.5, abs=1e-10)

    def test_requires_four_checkpoints(self):
        with pytest.raises(ValueError):
            log_slope_regression([1.0, 10.0, 1000.0], np.zeros((2, 3)))

    def test_requires_positive_times(self):
        with pytest.raises(ValueError):
            log_slope_regression([0.0, 1.0, 10.0, 1000.0], np.zeros((2, 4)))

    def test_requires_three_decades(self):
        with pytest.raises(ValueError):
            log_slope_regression([1.0, 5.0, 20.0, 999.0], np.zeros((2, 4)))

    def test_requires_matching_columns(self):
        with pytest.raises(ValueError):
            log_slope_regression([1.0, 10.0, 100.0, 1000.0], np.zeros((2, 5)))


class TestRunningMoments:

    def test_matches_numpy(self):
        xs = _rng(14).standard_normal(1000)
        mean, var, se = moments_accumulate(xs)
        assert mean == pytest.approx(xs.mean(), rel=1e-12)
        assert var == pytest.approx(xs.var(ddof=1), rel=1e-12)
        assert se == pytest.approx(xs.std(ddof=1) / math.sqrt(1000),
                                   rel=1e-12)

    def test_merge_equals_serial(self):
        xs = _rng(15).standard_normal(777)
        serial = RunningMoments()
        serial.push_many(xs)
        left = RunningMoments()
        left.push_many(xs[:300])
        right = RunningMoments()
        right.push_many(xs[300:])
        left.merge(right)
        assert left.n == serial.n
        assert left.mean == pytest.approx(serial.mean, rel=1e-13)
        assert left.variance == pytest.approx(serial.variance, rel=1e-12)

    def test_merge_with_empty_is_identity(self):
        acc = RunningMoments()
        acc.push_many([1.0, 2.0, 4.0])
        before = (acc.n, acc.mean, acc.variance)
        acc.merge(RunningMoments())
        assert (acc.n, acc.mean, acc.variance) == before
        fresh = RunningMoments()
        fresh.merge(acc)
        assert (fresh.n, fresh.mean, fresh.variance) == before

    def test_too_few_samples(self):
        acc = RunningMoments()
        acc.push(1.0)
        with pytest.raises(ValueError):
            _ = acc.variance
        with pytest.raises(ValueError):
            moments_accumulate([5.0])


class TestDecideVerdict:

    def test_pass_within_tolerance(self):
        assert decide_verdict(1.05, 1.0, 0.1, 0.001, 100, 0) == "pass"

    def test_pass_within_four_stderr(self):
        # Band widens to 4*stderr when that exceeds the stated tolerance.
        assert decide_verdict(1.3, 1.0, 0.1, 0.1, 100, 0) == "pass"

    def test_band_boundary_is_inclusive(self):
        # Dyadic values so the comparison sits exactly on the band edge.
        assert decide_verdict(1.25, 1.0, 0.25, 0.0, 100, 0) == "pass"

    def test_fail_outside_band(self):
        assert decide_verdict(1.5, 1.0, 0.1, 0.01, 100, 0) == "fail"

    def test_rejections_force_inconclusive(self):
        # One percent rejected is already inconclusive, even dead on target.
        assert REJECTION_INCONCLUSIVE_RATE == pytest.approx(0.01)
        assert decide_verdict(1.0, 1.0, 0.1, 0.001, 99, 1) == "inconclusive"

    def test_rejections_below_threshold_still_judged(self):
        assert decide_verdict(1.0, 1.0, 0.1, 0.001, 991, 9) == "pass"
        assert decide_verdict(9.0, 1.0, 0.1, 0.001, 991, 9) == "fail"

    def test_nan_estimate_is_inconclusive(self):
        assert decide_verdict(float("nan"), 1.0, 0.1, 0.01, 100, 0) \
            == "inconclusive"

    def test_nan_stderr_is_inconclusive(self):
        assert decide_verdict(1.0, 1.0, 0.1, float("nan"), 100, 0) \
            == "inconclusive"


def _report(**overrides):
    base = dict(
        name="radial_slope", estimate=0.749, stderr=0.004, n_samples=500,
        n_rejected=0, seed=SEED, target=0.75, tolerance=0.02,
    )
    base.update(overrides)
    return MCReport(**base)


class TestMCReport:

    def test_verdict_derived_when_omitted(self):
        assert _report().verdict == "pass"
        assert _report(estimate=0.9).verdict == "fail"
        assert _report(n_rejected=50).verdict == "inconclusive"

    def test_explicit_verdict_kept(self):
        assert _report(verdict="fail").verdict == "fail"

    def test_invalid_verdict_rejected(self):
        with pytest.raises(ValueError):
            _report(verdict="maybe")

    def test_negative_stderr_rejected(self):
        with pytest.raises(ValueError):
            _report(stderr=-0.1)

    def test_rejection_rate(self):
        assert _report(n_samples=95, n_rejected=5).rejection_rate \
            == pytest.approx(0.05)
        empty = _report(n_samples=0, n_rejected=0, estimate=float("nan"))
        assert empty.rejection_rate == 0.0

    def test_with_name(self):
        renamed = _report().with_name("clock_slope")
        assert renamed.name == "clock_slope"
        assert renamed.estimate == _report().estimate

    def test_json_key_order_is_stable(self):
        keys = list(_report().to_json_dict().keys())
        assert keys == ["name", "estimate", "stderr", "n_samples",
                        "n_rejected", "seed", "verdict", "target",
                        "tolerance"]

    def test_json_seed_block(self):
        d = _report().to_json_dict()
        assert d["seed"] == {"master_seed": 42, "stream_index": 7}

    def test_json_detail_handles_numpy_and_complex(self):
        r = _report(detail={
            "z": 1.0 + 2.0j,
            "arr": np.arange(3.0),
            "count": np.int64(4),
            "nested": {"x": np.float64(0.5)},
        })
        d = r.to_json_dict()["detail"]
        assert d["z"] == {"re": 1.0, "im": 2.0}
        assert d["arr"] == [0.0, 1.0, 2.0]
        assert d["count"] == 4
        assert d["nested"] == {"x": 0.5}
        json.dumps(r.to_json_dict())  # must be serializable as-is

    def test_json_roundtrip(self):
        parsed = json.loads(_report().to_json())
        assert parsed["name"] == "radial_slope"
        assert parsed["verdict"] == "pass"

    def test_csv_header_matches_row_layout(self):
        assert MCReport.csv_header() == ("name,estimate,stderr,n_samples,"
                                         "n_rejected,master_seed,"
                                         "stream_index,verdict,target,"
                                         "tolerance")
        row = _report().to_csv_row()
        assert row.split(",")[0] == "radial_slope"
        assert len(row.split(",")) == 10

    def test_csv_quotes_awkward_names(self):
        row = _report(name='slope, "raw"').to_csv_row()
        assert row.startswith('"slope, ""raw"""')

    def test_csv_numbers_roundtrip_exactly(self):
        row = _report(estimate=0.1 + 0.2).to_csv_row()
        assert float(row.split(",")[1]) == 0.1 + 0.2
