"""Statistical machinery behind the experiment verdicts.

Streaming moments with deterministic merging, distribution tests (the
Kolmogorov-Smirnov asymptotic series, a simple-hypothesis Anderson-Darling
p-value, circular uniformity), the slope regression used for log-time
limits, and the MCReport record every runner emits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import stats as sstats

from fbm2d.sampling import SeedSpec

__all__ = [
    "RunningMoments",
    "moments_accumulate",
    "ks_test",
    "ks_test_two_sample",
    "normality_test",
    "circular_uniformity",
    "log_slope_regression",
    "MCReport",
    "decide_verdict",
]

REJECTION_INCONCLUSIVE_RATE = 0.01


class RunningMoments:
    """One-pass mean/variance accumulator with associative merging.

    Uses the standard shifted-update recurrences; merging two accumulators
    is exact, so chunked parallel accumulation reproduces the serial result
    when merged in a fixed order.
    """

    __slots__ = ("n", "mean", "_m2")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self._m2 = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self._m2 += delta * (x - self.mean)

    def push_many(self, xs: Iterable[float]) -> None:
        for x in xs:
            self.push(x)

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self._m2 = other.n, other.mean, other._m2
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self._m2 += other._m2 + delta * delta * self.n * other.n / n
        self.mean += delta * other.n / n
        self.n = n
        return self

    @property
    def variance(self) -> float:
        if self.n < 2:
            raise ValueError("variance needs at least two samples")
        return self._m2 / (self.n - 1)

    @property
    def stderr(self) -> float:
        if self.n < 2:
            raise ValueError("stderr needs at least two samples")
        return math.sqrt(self.variance / self.n)


def moments_accumulate(stream: Iterable[float]) -> tuple[float, float, float]:
    """(mean, sample variance, standard error of the mean) of a stream."""
    acc = RunningMoments()
    acc.push_many(stream)
    if acc.n < 2:
        raise ValueError("need at least two samples")
    return acc.mean, acc.variance, acc.stderr


def ks_test(samples: Sequence[float], reference_cdf: Callable) -> float:
    """Two-sided Kolmogorov-Smirnov p-value via the asymptotic series."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 50:
        raise ValueError("Kolmogorov-Smirnov needs at least 50 samples")
    return float(sstats.kstest(samples, reference_cdf, method="asymp").pvalue)


def ks_test_two_sample(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov p-value, asymptotic."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if min(a.size, b.size) < 50:
        raise ValueError("Kolmogorov-Smirnov needs at least 50 samples")
    return float(sstats.ks_2samp(a, b, method="asymp").pvalue)


def _anderson_darling_statistic(z: np.ndarray) -> float:
    """A^2 against the standard normal for externally standardized samples."""
    z = np.sort(z)
    n = z.size
    logcdf = sstats.norm.logcdf(z)
    logsf = sstats.norm.logsf(z)
    i = np.arange(1, n + 1)
    s = np.sum((2 * i - 1) * (logcdf + logsf[::-1]))
    return -n - s / n


def _adinf(z: float) -> float:
    """Limiting simple-hypothesis Anderson-Darling CDF P(A^2_inf < z)."""
    if z <= 0.0:
        return 0.0
    if z < 2.0:
        return (
            math.exp(-1.2337141 / z) / math.sqrt(z)
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962
               - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
        )
    return math.exp(
        -math.exp(1.0776 - (2.30695 - (0.43424 - (0.082433
            - (0.008056 - 0.0003146 * z) * z) * z) * z) * z)
    )


def _ad_errfix(n: int, x: float) -> float:
    """Finite-n correction to the limiting Anderson-Darling CDF."""
    if x > 0.8:
        return (
            (-130.2137 + (745.2337 - (1705.091 - (1950.646
                - (1116.360 - 255.7844 * x) * x) * x) * x) * x) / n
        )
    c = 0.01265 + 0.1757 / n
    if x < c:
        t = x / c
        t = math.sqrt(t) * (1.0 - t) * (49.0 * t - 102.0)
        return t * (0.0037 / n ** 3 + 0.00078 / n ** 2 + 0.00006 / n)
    t = (x - c) / (0.8 - c)
    t = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t)
        * t) * t) * t) * t
    return t * (0.04213 + 0.01365 / n) / n


def normality_test(samples: Sequence[float]) -> float:
    """Anderson-Darling p-value against the standard normal.

    Samples must be standardized externally (the simple hypothesis, with no
    parameters estimated).  Returns nan for fewer than 100 samples, which
    downstream verdict logic treats as inconclusive.
    """
    z = np.asarray(samples, dtype=float)
    if z.size < 100:
        return float("nan")
    a2 = _anderson_darling_statistic(z)
    cdf = _adinf(a2)
    cdf += _ad_errfix(z.size, cdf)
    return float(min(1.0, max(0.0, 1.0 - cdf)))


def circular_uniformity(angles: Sequence[float]) -> float:
    """Uniformity p-value for angles on the circle.

    Rayleigh resultant-length test plus Kolmogorov-Smirnov on the wrapped
    angle against the uniform law; the smaller p-value is returned with a
    Bonferroni factor of 2 for running both.
    """
    theta = np.asarray(angles, dtype=float)
    n = theta.size
    if n < 50:
        raise ValueError("circular uniformity needs at least 50 angles")
    rbar = abs(np.exp(1j * theta).mean())
    z = n * rbar * rbar
    # First-order finite-n corrected Rayleigh tail.
    p_rayleigh = math.exp(-z) * (1.0 + (2.0 * z - z * z) / (4.0 * n))
    p_rayleigh = min(1.0, max(0.0, p_rayleigh))
    wrapped = np.mod(theta, 2.0 * math.pi) / (2.0 * math.pi)
    p_ks = float(sstats.kstest(wrapped, "uniform", method="asymp").pvalue)
    return min(1.0, 2.0 * min(p_rayleigh, p_ks))


def log_slope_regression(times: Sequence[float],
                         values: np.ndarray) -> tuple[float, float]:
    """Mean per-path slope of value against log t, with its standard error.

    values has one row per path and one column per checkpoint time; at
    least 4 geometric checkpoints spanning at least 3 decades are required,
    because slower designs cannot resolve the log-time limits this backs.
    """
    t = np.asarray(times, dtype=float)
    v = np.atleast_2d(np.asarray(values, dtype=float))
    if t.size < 4:
        raise ValueError("need at least 4 checkpoints")
    if t.min() <= 0.0:
        raise ValueError("checkpoints must be positive")
    if math.log10(t.max() / t.min()) < 3.0 - 1e-9:
        raise ValueError("checkpoints must span at least 3 decades")
    if v.shape[1] != t.size:
        raise ValueError("one column per checkpoint required")
    x = np.log(t)
    xc = x - x.mean()
    denom = float(xc @ xc)
    slopes = (v @ xc) / denom
    mean = float(slopes.mean())
    if slopes.size > 1:
        se = float(slopes.std(ddof=1) / math.sqrt(slopes.size))
    else:
        se = 0.0
    return mean, se


def decide_verdict(estimate: float, target: float, tolerance: float,
                   stderr: float, n_samples: int, n_rejected: int) -> str:
    """pass/fail/inconclusive per the fixed rule.

    pass iff |estimate - target| <= max(tolerance, 4*stderr); a rejection
    rate of 1% or more, or a nan estimate, is inconclusive regardless.
    """
    total = n_samples + n_rejected
    if total > 0 and n_rejected / total >= REJECTION_INCONCLUSIVE_RATE:
        return "inconclusive"
    if math.isnan(estimate) or math.isnan(stderr):
        return "inconclusive"
    return "pass" if abs(estimate - target) <= max(tolerance, 4.0 * stderr) else "fail"


_CSV_FIELDS = (
    "name", "estimate", "stderr", "n_samples", "n_rejected",
    "master_seed", "stream_index", "verdict", "target", "tolerance",
)


@dataclass(frozen=True)
class MCReport:
    """One Monte Carlo verdict: estimate vs target with its provenance."""

    name: str
    estimate: float
    stderr: float
    n_samples: int
    n_rejected: int
    seed: SeedSpec
    target: float
    tolerance: float
    verdict: str = ""
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0.0:
            raise ValueError("stderr must be nonnegative")
        if not self.verdict:
            object.__setattr__(
                self,
                "verdict",
                decide_verdict(self.estimate, self.target, self.tolerance,
                               self.stderr, self.n_samples, self.n_rejected),
            )
        elif self.verdict not in ("pass", "fail", "inconclusive"):
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def rejection_rate(self) -> float:
        total = self.n_samples + self.n_rejected
        return self.n_rejected / total if total else 0.0

    def with_name(self, name: str) -> "MCReport":
        return replace(self, name=name)

    def to_json_dict(self) -> dict:
        # Stable field order: insertion order of this dict is the contract.
        out = {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "n_rejected": self.n_rejected,
            "seed": {"master_seed": self.seed.master_seed,
                     "stream_index": self.seed.stream_index},
            "verdict": self.verdict,
            "target": self.target,
            "tolerance": self.tolerance,
        }
        if self.detail:
            out["detail"] = _jsonable(self.detail)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=False)

    @staticmethod
    def csv_header() -> str:
        return ",".join(_CSV_FIELDS)

    def to_csv_row(self) -> str:
        vals = (
            self.name, _num(self.estimate), _num(self.stderr),
            str(self.n_samples), str(self.n_rejected),
            str(self.seed.master_seed), str(self.seed.stream_index),
            self.verdict, _num(self.target), _num(self.tolerance),
        )
        return ",".join(_csv_quote(v) for v in vals)


def _num(x: float) -> str:
    return repr(float(x))


def _csv_quote(v: str) -> str:
    if any(c in v for c in ',"\n\r'):
        return '"' + v.replace('"', '""') + '"'
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj
