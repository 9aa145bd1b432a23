"""Numerical laboratory for planar fractional Brownian motion with H > 1/2.

Exact path samplers (Cholesky and circulant embedding), pathwise stochastic
integration along sampled paths, closed-form and quadrature constants for the
long-time limit theorems of the transient regime, and reproducible Monte
Carlo experiment runners with pass/fail verdicts.
"""

from fbm2d.sampling import (
    ComplexPath,
    EmbeddingError,
    FactorizationError,
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
from fbm2d.integrals import (
    IntegralResult,
    RunningIntegral,
    circle_average_integral,
    clock_integral,
    divergence_integral_gradient,
    f_over_B_integral,
    f_over_B_running,
    log_derivative_integral,
    pathwise_integral,
    skew_product_residual,
    variation_sum,
    winding_angle,
    winding_functional,
)
from fbm2d.constants import (
    PrecisionError,
    QuadratureSpec,
    VarianceBreakdown,
    abs_normal_moment,
    beta_h,
    rho_integral,
    sigma_squared,
    sigma_squared_table,
    winding_cf_exact,
    winding_variance_quadrature,
)
from fbm2d.stats import (
    MCReport,
    RunningMoments,
    circular_uniformity,
    decide_verdict,
    ks_test,
    ks_test_two_sample,
    log_slope_regression,
    moments_accumulate,
    normality_test,
)
from fbm2d.experiments import (
    ExperimentConfig,
    clt_grid,
    run_circle_average,
    run_clt_winding,
    run_ergodic_angular,
    run_ergodic_clock,
    run_ergodic_radial,
    run_ito_checks,
    run_mixing_check,
    run_reciprocal_drift,
    run_shifted_radial,
    run_symmetry_check,
    run_uniform_angle,
    run_variation,
    run_winding_cf,
    slope_grid,
)

__version__ = "0.1.0"
