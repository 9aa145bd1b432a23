"""Sampler laws, covariance identities, and reproducibility guarantees."""

import numpy as np
import pytest
from scipy import stats

from fbm2d.sampling import (
    ComplexPath,
    EmbeddingError,
    Hurst,
    RealPath1D,
    SeedSpec,
    TimeGrid,
    cholesky_sample,
    complex_fbm,
    davies_harte_sample,
    fbm_covariance,
    mixing_covariance,
    scale_transform,
    time_inversion,
)


class TestHurst:
    def test_rejects_out_of_range(self):
        for bad in (0.0, 1.0, -0.2, 1.5, float("nan")):
            with pytest.raises(ValueError):
                Hurst(bad)

    def test_transient_flag(self):
        assert Hurst(0.75).transient
        assert not Hurst(0.5).transient
        assert not Hurst(0.3).transient

    def test_kernel_coefficient(self):
        assert Hurst(0.75).kernel_coefficient == pytest.approx(0.375)
        assert Hurst(0.5).kernel_coefficient == 0.0


class TestTimeGrid:
    def test_rejects_bad_times(self):
        with pytest.raises(ValueError):
            TimeGrid(np.array([-1.0, 1.0]))
        with pytest.raises(ValueError):
            TimeGrid(np.array([0.0, 0.0, 1.0]))
        with pytest.raises(ValueError):
            TimeGrid(np.array([1.0, 0.5]))

    def test_uniform_constructor(self):
        g = TimeGrid.uniform(4, 0.25)
        np.testing.assert_allclose(g.times, [0.25, 0.5, 0.75, 1.0])
        assert not g.has_zero
        assert g.uniform_spacing() == pytest.approx(0.25)
        g0 = TimeGrid.uniform(4, 0.25, include_zero=True)
        assert g0.has_zero and g0.n == 5
        assert g0.uniform_spacing() == pytest.approx(0.25)

    def test_geometric_constructor_exact_ratio(self):
        g = TimeGrid.geometric(0.01, 1.05, 286)
        ratios = g.times[1:] / g.times[:-1]
        np.testing.assert_allclose(ratios, 1.05, rtol=1e-12)
        assert g.uniform_spacing() is None

    def test_index_of(self):
        g = TimeGrid.uniform(512, 1.0 / 512, include_zero=True)
        assert g.index_of(0.0) == 0
        assert g.index_of(1.0) == 512
        with pytest.raises(ValueError):
            g.index_of(0.33)

    def test_mesh_counts_leading_panel(self):
        g = TimeGrid(np.array([0.5, 0.6]))
        assert g.mesh == pytest.approx(0.5)


class TestCovariance:
    def test_diagonal_is_power_law(self):
        for h in (0.51, 0.6, 0.75, 0.9):
            for t in (0.3, 1.0, 7.0):
                assert fbm_covariance(t, t, h) == pytest.approx(t ** (2 * h))

    def test_brownian_case_is_min(self):
        assert fbm_covariance(1.0, 2.0, 0.5) == pytest.approx(1.0)

    def test_hand_value(self):
        # (1 + 2^1.5 - 1)/2 = sqrt(2)
        assert fbm_covariance(1.0, 2.0, 0.75) == pytest.approx(1.41421, abs=5e-6)
        assert fbm_covariance(1.0, 2.0, 0.75) == pytest.approx(np.sqrt(2.0), rel=1e-15)

    def test_symmetry_property(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            t, s = rng.uniform(0, 10, 2)
            h = rng.uniform(0.51, 0.99)
            assert fbm_covariance(t, s, h) == pytest.approx(
                fbm_covariance(s, t, h), rel=1e-14
            )

    def test_rejects_negative_times(self):
        with pytest.raises(ValueError):
            fbm_covariance(-1.0, 1.0, 0.75)


class TestSeedSpec:
    def test_same_spec_same_draws(self):
        a = SeedSpec(42, 3).generator(1).standard_normal(8)
        b = SeedSpec(42, 3).generator(1).standard_normal(8)
        np.testing.assert_array_equal(a, b)

    def test_distinct_components_differ(self):
        s = SeedSpec(42, 3)
        a = s.generator(0).standard_normal(8)
        b = s.generator(1).standard_normal(8)
        assert not np.allclose(a, b)

    def test_stream_offsets(self):
        assert SeedSpec(7, 2).stream(5) == SeedSpec(7, 7)

    def test_validation(self):
        with pytest.raises(ValueError):
            SeedSpec(-1)
        with pytest.raises(ValueError):
            SeedSpec(0, -2)


class TestCholeskySampler:
    def test_single_time_variance(self):
        t = 1.7
        draws = np.array([
            cholesky_sample(TimeGrid(np.array([t])), 0.75, seed=SeedSpec(0, i))
            .values[0]
            for i in range(4000)
        ])
        var = draws.var(ddof=1)
        se = var * np.sqrt(2.0 / (len(draws) - 1))
        assert abs(var - t ** 1.5) < 4 * se

    def test_empirical_covariance_matches(self):
        # 8-point grid, 10^4 draws, entrywise 4 standard errors.
        grid = TimeGrid(np.array([0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0]))
        h = 0.75
        n = 10_000
        draws = np.stack([
            cholesky_sample(grid, h, seed=SeedSpec(314, i)).values
            for i in range(n)
        ])
        emp = (draws.T @ draws) / n
        ref = fbm_covariance(grid.times[:, None], grid.times[None, :], h)
        # Gaussian fourth-moment stderr of a covariance entry.
        se = np.sqrt((ref ** 2 + np.outer(np.diag(ref), np.diag(ref))) / n)
        assert np.all(np.abs(emp - ref) < 4.0 * se)

    def test_grid_covariance_hand_value(self):
        grid = TimeGrid(np.array([1.0, 2.0]))
        n = 20_000
        draws = np.stack([
            cholesky_sample(grid, 0.75, seed=SeedSpec(11, i)).values
            for i in range(n)
        ])
        cov = draws[:, 0] @ draws[:, 1] / n
        assert cov == pytest.approx(1.41421, abs=0.05)

    def test_zero_time_value_is_start(self):
        grid = TimeGrid(np.array([0.0, 1.0, 2.0]))
        p = cholesky_sample(grid, 0.75, start=3.5, seed=SeedSpec(1))
        assert p.values[0] == 3.5
        assert p.start == 3.5

    def test_start_offsets_all_values(self):
        grid = TimeGrid(np.array([1.0, 2.0]))
        base = cholesky_sample(grid, 0.75, start=0.0, seed=SeedSpec(5))
        moved = cholesky_sample(grid, 0.75, start=2.0, seed=SeedSpec(5))
        np.testing.assert_allclose(moved.values, base.values + 2.0, rtol=1e-12)

    def test_geometric_grid_factorizes(self):
        grid = TimeGrid.geometric(0.01, 1.05, 286)
        p = cholesky_sample(grid, 0.75, seed=SeedSpec(2))
        assert np.all(np.isfinite(p.values))


class TestDaviesHarteSampler:
    def test_marginal_variance_at_endpoint(self):
        n, dt, h = 64, 0.5, 0.75
        end = np.array([
            davies_harte_sample(n, dt, h, seed=SeedSpec(0, i)).values[-1]
            for i in range(4000)
        ])
        var = end.var(ddof=1)
        target = (n * dt) ** (2 * h)
        se = var * np.sqrt(2.0 / (len(end) - 1))
        assert abs(var - target) < 4 * se

    def test_increment_stationarity(self):
        n, dt, h = 128, 0.25, 0.7
        paths = np.stack([
            davies_harte_sample(n, dt, h, seed=SeedSpec(9, i)).values
            for i in range(3000)
        ])
        inc = np.diff(paths, axis=1)
        target = dt ** (2 * h)
        for col in (0, 40, 90, 126):
            var = inc[:, col].var(ddof=1)
            se = var * np.sqrt(2.0 / (inc.shape[0] - 1))
            assert abs(var - target) < 4 * se, f"lag column {col}"

    def test_matches_cholesky_in_distribution(self):
        # Two-sample KS on the time-1 marginal, 10^4 draws each.
        n, dt, h = 16, 1.0 / 16, 0.75
        grid = TimeGrid.uniform(n, dt)
        a = np.array([
            davies_harte_sample(n, dt, h, seed=SeedSpec(21, i)).values[-1]
            for i in range(10_000)
        ])
        b = np.array([
            cholesky_sample(grid, h, seed=SeedSpec(22, i)).values[-1]
            for i in range(10_000)
        ])
        p = stats.ks_2samp(a, b, method="asymp").pvalue
        assert p > 0.01

    def test_deterministic_given_seed(self):
        x = davies_harte_sample(256, 0.01, 0.8, seed=SeedSpec(3, 1)).values
        y = davies_harte_sample(256, 0.01, 0.8, seed=SeedSpec(3, 1)).values
        np.testing.assert_array_equal(x, y)

    def test_grid_excludes_zero(self):
        p = davies_harte_sample(10, 0.1, 0.75, start=1.0, seed=SeedSpec(0))
        assert p.grid.times[0] == pytest.approx(0.1)
        t, v = p.track()
        assert t[0] == 0.0 and v[0] == 1.0


class TestComplexFbm:
    def test_component_variance_sum(self):
        # E|B_t - z0|^2 = 2 t^2H within 4 standard errors.
        h, t, n = 0.75, 1.0, 10_000
        grid = TimeGrid(np.array([t]))
        sq = np.array([
            abs(complex_fbm(grid, h, 1 + 1j, SeedSpec(60, i)).values[0] - (1 + 1j)) ** 2
            for i in range(n)
        ])
        se = sq.std(ddof=1) / np.sqrt(n)
        assert abs(sq.mean() - 2.0) < 4 * se

    def test_standard_normal_at_one(self):
        # z0 = 0, t = 1: |B_1|^2 is exponential with mean 2.
        grid = TimeGrid(np.array([1.0]))
        sq = np.array([
            abs(complex_fbm(grid, 0.75, 0j, SeedSpec(61, i)).values[0]) ** 2
            for i in range(10_000)
        ])
        p = stats.kstest(sq, stats.expon(scale=2.0).cdf, method="asymp").pvalue
        assert p > 0.01

    def test_origin_exact(self):
        grid = TimeGrid.uniform(8, 0.125, include_zero=True)
        p = complex_fbm(grid, 0.6, 2 - 1j, SeedSpec(0))
        assert p.values[0] == 2 - 1j

    def test_auto_matches_explicit_methods(self):
        grid = TimeGrid.uniform(32, 0.05, include_zero=True)
        auto = complex_fbm(grid, 0.75, 1 + 0j, SeedSpec(4))
        circ = complex_fbm(grid, 0.75, 1 + 0j, SeedSpec(4), method="circulant")
        np.testing.assert_array_equal(auto.values, circ.values)
        geo = TimeGrid.geometric(1.0, 1.3, 12)
        auto2 = complex_fbm(geo, 0.75, 1 + 0j, SeedSpec(4))
        chol = complex_fbm(geo, 0.75, 1 + 0j, SeedSpec(4), method="cholesky")
        np.testing.assert_array_equal(auto2.values, chol.values)


class TestScaleTransform:
    def test_identity_at_k_one(self):
        grid = TimeGrid.geometric(1.0, 2.0, 8)
        p = cholesky_sample(grid, 0.75, seed=SeedSpec(0))
        assert scale_transform(p, 1.0, 0.75) is p

    def test_definition_pointwise(self):
        k, h = 2.0, 0.75
        grid = TimeGrid.geometric(1.0, k, 10)
        p = cholesky_sample(grid, h, seed=SeedSpec(8))
        q = scale_transform(p, k, h)
        np.testing.assert_allclose(q.grid.times, grid.times[:-1])
        np.testing.assert_allclose(q.values, p.values[1:] / k ** h, rtol=1e-12)

    def test_semigroup(self):
        k, h = 2.0, 0.7
        grid = TimeGrid.geometric(0.5, k, 12)
        p = cholesky_sample(grid, h, seed=SeedSpec(9))
        twice = scale_transform(scale_transform(p, k, h), k, h)
        once = scale_transform(p, k * k, h)
        np.testing.assert_allclose(twice.values, once.values, rtol=1e-12)
        np.testing.assert_allclose(twice.grid.times, once.grid.times, rtol=1e-12)

    def test_variance_preserved(self):
        # Self-similarity: transformed marginal keeps variance t^2H.
        k, h, n = 2.0, 0.75, 4000
        grid = TimeGrid.geometric(1.0, k, 6)
        vals = np.array([
            scale_transform(
                cholesky_sample(grid, h, seed=SeedSpec(77, i)), k, h
            ).values[0]
            for i in range(n)
        ])
        var = vals.var(ddof=1)
        se = var * np.sqrt(2.0 / (n - 1))
        assert abs(var - 1.0) < 4 * se  # transformed time 1, variance 1^2H

    def test_rejects_unclosed_grid(self):
        grid = TimeGrid(np.array([1.0, 1.7, 2.9]))
        p = cholesky_sample(grid, 0.75, seed=SeedSpec(0))
        with pytest.raises(ValueError):
            scale_transform(p, 3.0, 0.75)


class TestMixingCovariance:
    def test_no_rescaling_reduces_to_covariance(self):
        assert mixing_covariance(1.0, 1.0, 2.0, 0, 0.75) == pytest.approx(1.0)
        assert mixing_covariance(0.7, 1.3, 2.0, 0, 0.6) == pytest.approx(
            fbm_covariance(0.7, 1.3, 0.6)
        )

    def test_hand_value(self):
        assert mixing_covariance(1.0, 1.0, 2.0, 10, 0.75) == pytest.approx(
            0.13532, abs=1e-4
        )

    def test_decays_to_zero(self):
        vals = [mixing_covariance(1.0, 1.0, 2.0, n, 0.75) for n in range(0, 31, 5)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-2

    def test_validation(self):
        with pytest.raises(ValueError):
            mixing_covariance(0.0, 1.0, 2.0, 1, 0.75)
        with pytest.raises(ValueError):
            mixing_covariance(1.0, 1.0, 1.0, 1, 0.75)


class TestTimeInversion:
    def _path(self, seed=0):
        grid = TimeGrid.geometric(0.125, 2.0, 7)  # 0.125 .. 8
        return complex_fbm(grid, 0.75, 0j, SeedSpec(seed, 3))

    def test_pointwise_definition(self):
        h = 0.75
        p = self._path()
        q = time_inversion(p, h)
        for t, v in zip(q.grid.times, q.values):
            orig = p.values[p.grid.index_of(1.0 / t)]
            assert v == pytest.approx(t ** (2 * h) * orig, rel=1e-12)

    def test_involution(self):
        p = self._path(4)
        back = time_inversion(time_inversion(p, 0.75), 0.75)
        np.testing.assert_allclose(back.grid.times, p.grid.times, rtol=1e-12)
        np.testing.assert_allclose(back.values, p.values, rtol=1e-9)

    def test_marginal_variance_preserved(self):
        # Complex marginal at time t of the inverted path has E|.|^2 = 2 t^2H.
        h, n = 0.75, 4000
        t_check = 2.0
        sq = np.empty(n)
        for i in range(n):
            q = time_inversion(
                complex_fbm(TimeGrid.geometric(0.5, 2.0, 3), h, 0j, SeedSpec(88, i)),
                h,
            )
            sq[i] = abs(q.values[q.grid.index_of(t_check)]) ** 2
        se = sq.std(ddof=1) / np.sqrt(n)
        assert abs(sq.mean() - 2.0 * t_check ** (2 * h)) < 4 * se

    def test_rejects_nonzero_origin(self):
        grid = TimeGrid.geometric(0.5, 2.0, 4)
        p = complex_fbm(grid, 0.75, 1 + 0j, SeedSpec(0))
        with pytest.raises(ValueError):
            time_inversion(p, 0.75)


class TestPathTypes:
    def test_real_path_track_prepends_origin(self):
        p = RealPath1D(TimeGrid(np.array([0.5, 1.0])), np.array([1.0, 2.0]), start=3.0)
        t, v = p.track()
        np.testing.assert_allclose(t, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(v, [3.0, 1.0, 2.0])

    def test_complex_path_origin_invariant(self):
        grid = TimeGrid(np.array([0.0, 1.0]))
        with pytest.raises(ValueError):
            ComplexPath(grid, np.array([1 + 0j, 2 + 0j]), origin=0j)

    def test_values_are_immutable(self):
        p = RealPath1D(TimeGrid(np.array([1.0])), np.array([2.0]))
        with pytest.raises(ValueError):
            p.values[0] = 5.0


def test_embedding_guard_never_trips_in_range():
    # Eigenvalue nonnegativity holds for this noise model; the guard is
    # belt-and-braces and must stay silent across the supported range.
    for h in (0.51, 0.6, 0.75, 0.9, 0.99):
        davies_harte_sample(128, 0.01, h, seed=SeedSpec(0))


def test_embedding_error_message():
    assert issubclass(EmbeddingError, ValueError)
