"""Exact samplers for one- and two-dimensional fractional Brownian motion.

Two exact-in-law Gaussian samplers share one covariance model: a dense
Cholesky factorization for arbitrary (typically geometric) time grids, and
circulant embedding of fractional Gaussian noise for uniform grids, which
is O(n log n) and the only practical route to fine meshes.  Deterministic
utilities (covariance, rescaling, time inversion) live here as well because
the experiments treat them as part of the path model.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "Hurst",
    "TimeGrid",
    "SeedSpec",
    "RealPath1D",
    "ComplexPath",
    "FactorizationError",
    "EmbeddingError",
    "fbm_covariance",
    "cholesky_sample",
    "davies_harte_sample",
    "complex_fbm",
    "scale_transform",
    "mixing_covariance",
    "time_inversion",
]

# Relative tolerance for "these two times are the same grid point" decisions.
_GRID_RTOL = 1e-9


class FactorizationError(ValueError):
    """Covariance factorization failed; carries the failing pivot index."""

    def __init__(self, pivot: int, jittered: bool):
        self.pivot = pivot
        self.jittered = jittered
        suffix = " after diagonal jitter" if jittered else ""
        super().__init__(
            f"covariance not positive definite at pivot {pivot}{suffix}"
        )


class EmbeddingError(ValueError):
    """Circulant embedding produced a disqualifying negative eigenvalue."""


@dataclass(frozen=True)
class Hurst:
    """Validated Hurst exponent.

    The planar limit theorems verified by this package need the transient
    regime value > 1/2; the samplers themselves accept all of (0, 1).
    """

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 < v < 1.0) or not math.isfinite(v):
            raise ValueError(f"Hurst exponent must lie in (0, 1), got {self.value!r}")
        object.__setattr__(self, "value", v)

    @property
    def transient(self) -> bool:
        """True iff the planar process escapes to infinity (value > 1/2)."""
        return self.value > 0.5

    @property
    def kernel_coefficient(self) -> float:
        """H(2H-1), the coefficient of the |r-s|^(2H-2) increment kernel."""
        return self.value * (2.0 * self.value - 1.0)


HurstLike = Union[Hurst, float]


def as_hurst(h: HurstLike) -> Hurst:
    """Coerce a float to a validated Hurst, passing Hurst through unchanged."""
    return h if isinstance(h, Hurst) else Hurst(float(h))


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sampling times, first time >= 0.

    kind records how the grid was built (uniform spacing, geometric ratio,
    or explicit times); it is advisory except where an operation requires a
    specific structure.
    """

    times: np.ndarray
    kind: str = "explicit"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("grid needs a one-dimensional, nonempty time array")
        if t[0] < 0.0:
            raise ValueError("grid times must be nonnegative")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("grid times must be strictly increasing")
        if self.kind not in ("uniform", "geometric", "explicit"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "times", t)

    @staticmethod
    def uniform(n: int, dt: float, include_zero: bool = False) -> "TimeGrid":
        """Uniform grid {dt, ..., n*dt}, optionally with a leading 0."""
        if n < 1 or dt <= 0.0:
            raise ValueError("uniform grid needs n >= 1 and dt > 0")
        start = 0 if include_zero else 1
        return TimeGrid(dt * np.arange(start, n + 1, dtype=float), kind="uniform")

    @staticmethod
    def geometric(t_min: float, ratio: float, count: int,
                  include_zero: bool = False) -> "TimeGrid":
        """Geometric grid t_min * ratio^j for j in [0, count)."""
        if t_min <= 0.0 or ratio <= 1.0 or count < 1:
            raise ValueError("geometric grid needs t_min > 0, ratio > 1, count >= 1")
        times = t_min * ratio ** np.arange(count, dtype=float)
        if include_zero:
            times = np.concatenate([[0.0], times])
        return TimeGrid(times, kind="geometric")

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def has_zero(self) -> bool:
        return self.times[0] == 0.0

    @property
    def positive_times(self) -> np.ndarray:
        return self.times[1:] if self.has_zero else self.times

    @property
    def mesh(self) -> float:
        """Largest spacing, counting the implicit [0, t_0] panel."""
        if self.n == 1:
            return float(self.times[0])
        gaps = np.diff(self.times)
        return float(max(gaps.max(), self.times[0]))

    def uniform_spacing(self) -> Optional[float]:
        """The common spacing if the grid is uniform from 0, else None.

        A uniform grid here means times k*dt for consecutive k starting at
        0 or 1, which is what the circulant sampler can serve directly.
        """
        t = self.times
        if t.size == 1:
            return float(t[0]) if t[0] > 0 else None
        gaps = np.diff(t)
        dt = gaps[0]
        if not np.allclose(gaps, dt, rtol=_GRID_RTOL, atol=0.0):
            return None
        first = t[0]
        if first != 0.0 and not np.isclose(first, dt, rtol=_GRID_RTOL, atol=0.0):
            return None
        return float(dt)

    def index_of(self, t: float) -> int:
        """Index of the grid point equal to t (relative tolerance 1e-9)."""
        i = int(np.searchsorted(self.times, t))
        for j in (i - 1, i, i + 1):
            if 0 <= j < self.n and np.isclose(self.times[j], t, rtol=_GRID_RTOL,
                                              atol=1e-15):
                return j
        raise ValueError(f"time {t!r} is not a grid point")

    def key(self) -> bytes:
        return self.times.tobytes()


@dataclass(frozen=True)
class SeedSpec:
    """Reproducible random stream identity.

    Every (master_seed, stream_index, component) triple owns a dedicated
    counter-based substream, so draws are identical no matter how work is
    scheduled across workers.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ValueError("master_seed must fit in 64 bits")
        if int(self.stream_index) < 0:
            raise ValueError("stream_index must be nonnegative")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "stream_index", int(self.stream_index))

    def stream(self, offset: int) -> "SeedSpec":
        """The spec for a path substream offset steps from this one."""
        return SeedSpec(self.master_seed, self.stream_index + offset)

    def generator(self, component: int = 0) -> np.random.Generator:
        """Philox generator for one component of this stream."""
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(self.stream_index, component)
        )
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class RealPath1D:
    """One sampled scalar path: values on grid times, plus the time-0 value."""

    grid: TimeGrid
    values: np.ndarray
    start: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError("values must align with the grid")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if self.grid.has_zero and not np.isclose(v[0], self.start, rtol=0, atol=1e-12):
            raise ValueError("value at time 0 must equal start")

    def track(self) -> tuple[np.ndarray, np.ndarray]:
        """(times, values) including time 0 even when the grid omits it."""
        if self.grid.has_zero:
            return self.grid.times, self.values
        t = np.concatenate([[0.0], self.grid.times])
        v = np.concatenate([[self.start], self.values])
        return t, v


@dataclass(frozen=True)
class ComplexPath:
    """One sampled planar path with start point `origin`."""

    grid: TimeGrid
    values: np.ndarray
    origin: complex = 0j

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise ValueError("values must align with the grid")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", complex(self.origin))
        if self.grid.has_zero and not np.isclose(
            v[0], self.origin, rtol=0, atol=1e-12
        ):
            raise ValueError("value at time 0 must equal origin")

    def track(self) -> tuple[np.ndarray, np.ndarray]:
        """(times, values) including time 0 even when the grid omits it."""
        if self.grid.has_zero:
            return self.grid.times, self.values
        t = np.concatenate([[0.0], self.grid.times])
        v = np.concatenate([[self.origin], self.values])
        return t, v


def fbm_covariance(t, s, h: HurstLike):
    """Covariance (t^2H + s^2H - |t-s|^2H)/2 of fractional Brownian motion.

    Accepts scalars or broadcastable arrays; rejects negative times.
    """
    hh = 2.0 * as_hurst(h).value
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0.0) or np.any(s < 0.0):
        raise ValueError("times must be nonnegative")
    out = 0.5 * (t ** hh + s ** hh - np.abs(t - s) ** hh)
    return float(out) if out.ndim == 0 else out


# Cholesky factors are expensive on the wide geometric grids the slope
# experiments use, and every path of a run shares one grid: cache them.
# dict reads are safe under concurrent insertion; writes take the lock.
_factor_cache: dict = {}
_factor_lock = threading.Lock()
_FACTOR_CACHE_MAX = 8


def _cholesky_factor(times: np.ndarray, h: Hurst) -> np.ndarray:
    key = (times.tobytes(), h.value)
    hit = _factor_cache.get(key)
    if hit is not None:
        return hit
    cov = fbm_covariance(times[:, None], times[None, :], h)
    factor, info = lapack.dpotrf(cov, lower=1, overwrite_a=0)
    if info > 0:
        # One jitter retry: near-singular is expected on wide geometric
        # grids; anything the jitter cannot fix is a genuine failure.
        cov[np.diag_indices_from(cov)] += 1e-12 * cov.diagonal().max()
        factor, info = lapack.dpotrf(cov, lower=1, overwrite_a=1)
        if info > 0:
            raise FactorizationError(pivot=int(info), jittered=True)
        if info < 0:
            raise ValueError(f"illegal factorization argument {-int(info)}")
    elif info < 0:
        raise ValueError(f"illegal factorization argument {-int(info)}")
    factor = np.tril(factor)
    factor.flags.writeable = False
    with _factor_lock:
        if len(_factor_cache) >= _FACTOR_CACHE_MAX:
            _factor_cache.clear()
        _factor_cache[key] = factor
    return factor


def cholesky_sample(grid: TimeGrid, h: HurstLike, start: float = 0.0,
                    seed: SeedSpec = SeedSpec(0), component: int = 0) -> RealPath1D:
    """Draw one exact fBm path on an arbitrary grid by dense factorization.

    The draw is the lower Cholesky factor of the covariance at the grid's
    positive times applied to one Gaussian vector from the seed's
    substream; a leading time-0 point takes the start value directly.
    """
    h = as_hurst(h)
    pos = grid.positive_times
    if pos.size == 0:
        raise ValueError("grid needs at least one positive time")
    factor = _cholesky_factor(pos, h)
    z = seed.generator(component).standard_normal(pos.size)
    sample = start + factor @ z
    if grid.has_zero:
        sample = np.concatenate([[start], sample])
    return RealPath1D(grid, sample, start=start)


# Circulant eigenvalues depend only on (n, H); cache across paths.
_eigen_cache: dict = {}
_eigen_lock = threading.Lock()
_EIGEN_CACHE_MAX = 8


def _circulant_eigenvalues(n: int, h: Hurst) -> np.ndarray:
    key = (n, h.value)
    hit = _eigen_cache.get(key)
    if hit is not None:
        return hit
    # Autocovariance of unit-step fractional Gaussian noise.
    k = np.arange(n + 1, dtype=float)
    hh = 2.0 * h.value
    gamma = 0.5 * ((k + 1.0) ** hh - 2.0 * k ** hh + np.abs(k - 1.0) ** hh)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    floor = -1e-9 * lam.max()
    if lam.min() < floor:
        raise EmbeddingError(
            f"circulant eigenvalue {lam.min():.3e} below tolerance {floor:.3e}"
        )
    lam = np.where(lam < 0.0, 0.0, lam)
    lam.flags.writeable = False
    with _eigen_lock:
        if len(_eigen_cache) >= _EIGEN_CACHE_MAX:
            _eigen_cache.clear()
        _eigen_cache[key] = lam
    return lam


def davies_harte_sample(n: int, dt: float, h: HurstLike, start: float = 0.0,
                        seed: SeedSpec = SeedSpec(0), component: int = 0) -> RealPath1D:
    """Draw one exact fBm path on the uniform grid {dt, ..., n*dt}.

    Circulant embedding of fractional Gaussian noise: the embedded
    covariance diagonalizes under the FFT, one complex Gaussian vector in
    the spectral domain transforms back to n correlated increments, and the
    cumulative sum scaled by dt^H is the path.  Cost O(n log n).
    """
    h = as_hurst(h)
    if n < 1 or dt <= 0.0:
        raise ValueError("need n >= 1 and dt > 0")
    lam = _circulant_eigenvalues(n, h)
    m = 2 * n
    d = seed.generator(component).standard_normal(m)
    a = np.empty(m, dtype=complex)
    a[0] = math.sqrt(lam[0] / m) * d[0]
    a[n] = math.sqrt(lam[n] / m) * d[1]
    a[1:n] = np.sqrt(lam[1:n] / (2.0 * m)) * (d[2:n + 1] + 1j * d[n + 1:])
    a[m - 1:n:-1] = np.conj(a[1:n])
    noise = np.fft.fft(a)[:n].real * dt ** h.value
    values = start + np.cumsum(noise)
    return RealPath1D(TimeGrid.uniform(n, dt), values, start=start)


def complex_fbm(grid: TimeGrid, h: HurstLike, z0: complex = 0j,
                seed: SeedSpec = SeedSpec(0), method: str = "auto") -> ComplexPath:
    """Draw one planar fBm path started at z0.

    Real and imaginary parts are independent draws from components 0 and 1
    of the seed's stream.  method selects the sampler: "cholesky",
    "circulant", or "auto" (circulant whenever the grid is uniform).
    """
    h = as_hurst(h)
    z0 = complex(z0)
    if method not in ("auto", "cholesky", "circulant"):
        raise ValueError(f"unknown sampling method {method!r}")
    dt = grid.uniform_spacing()
    use_circulant = method == "circulant" or (method == "auto" and dt is not None)
    if use_circulant:
        if dt is None:
            raise ValueError("circulant sampling needs a uniform grid")
        n = grid.positive_times.size
        re = davies_harte_sample(n, dt, h, start=z0.real, seed=seed, component=0)
        im = davies_harte_sample(n, dt, h, start=z0.imag, seed=seed, component=1)
        values = re.values + 1j * im.values
        if grid.has_zero:
            values = np.concatenate([[z0], values])
    else:
        re = cholesky_sample(grid, h, start=z0.real, seed=seed, component=0)
        im = cholesky_sample(grid, h, start=z0.imag, seed=seed, component=1)
        values = re.values + 1j * im.values
    return ComplexPath(grid, values, origin=z0)


def scale_transform(path: RealPath1D, k: float, h: HurstLike) -> RealPath1D:
    """Rescaled path t -> path(k*t) / k^H on the times closed under *k.

    The input grid must contain k*t for the retained times (a geometric
    grid with ratio k drops only its last point), and the path must start
    at 0; law preservation under this map is what the ergodic experiments
    lean on.
    """
    h = as_hurst(h)
    if k <= 0.0:
        raise ValueError("scale factor must be positive")
    if path.start != 0.0:
        raise ValueError("scaling is defined for paths started at 0")
    if k == 1.0:
        return path
    times = path.grid.times
    scaled = k * times
    idx = np.searchsorted(times, scaled)
    keep = []
    source = []
    for i, (st, j) in enumerate(zip(scaled, idx)):
        for cand in (j - 1, j, j + 1):
            if 0 <= cand < times.size and np.isclose(
                times[cand], st, rtol=_GRID_RTOL, atol=0.0
            ):
                keep.append(i)
                source.append(cand)
                break
    if not keep:
        raise ValueError("grid is not closed under multiplication by k")
    new_times = times[keep]
    new_values = path.values[source] / k ** h.value
    kind = path.grid.kind if path.grid.kind == "geometric" else "explicit"
    return RealPath1D(TimeGrid(new_times, kind=kind), new_values, start=0.0)


def mixing_covariance(s: float, t: float, k: float, n: int, h: HurstLike) -> float:
    """Covariance of the path at s with the n-fold k-rescaled path at t.

    Closed form (s^2H + k^2nH t^2H - |s - k^n t|^2H) / (2 k^nH); decays to
    0 as n grows, which is the quantitative mixing behind the ergodic
    averages.
    """
    hv = as_hurst(h).value
    if s <= 0.0 or t <= 0.0:
        raise ValueError("times must be positive")
    if k <= 1.0:
        raise ValueError("scale base must exceed 1")
    if n < 0:
        raise ValueError("n must be nonnegative")
    hh = 2.0 * hv
    kn = float(k) ** n
    num = s ** hh + kn ** hh * t ** hh - abs(s - kn * t) ** hh
    return num / (2.0 * kn ** hv)


def time_inversion(path: ComplexPath, h: HurstLike) -> ComplexPath:
    """The inverted path t -> t^2H * path(1/t) on the reciprocal grid.

    Defined for paths started at 0; the map preserves the law, and applying
    it twice returns the original samples up to floating round-trip.
    """
    hv = as_hurst(h).value
    if path.origin != 0:
        raise ValueError("time inversion needs origin 0")
    pos = path.grid.positive_times
    if pos.size == 0:
        raise ValueError("grid needs positive times")
    values = path.values[-pos.size:]
    new_times = (1.0 / pos)[::-1]
    new_values = new_times ** (2.0 * hv) * values[::-1]
    kind = path.grid.kind if path.grid.kind == "geometric" else "explicit"
    return ComplexPath(TimeGrid(new_times, kind=kind), new_values, origin=0j)
