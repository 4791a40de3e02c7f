"""Exact and approximate samplers for H-self-similar processes.

Three families are supported.  Fractional Brownian motion (including plain
Brownian motion at hurst = 1/2) is sampled exactly through circulant
embedding of the increment covariance: the stationary Gaussian increments
are synthesised in the Fourier domain and cumulated.  The Rosenblatt
process, which is non-Gaussian and only defined for hurst in (1/2, 1), is
approximated by normalised partial sums of squared long-memory Gaussians
on a micro-lattice finer than the output grid.

All sampling is driven by a caller-supplied 64-bit seed.  Identical
(spec, seed) pairs reproduce bit-identical paths; nothing here touches the
wall clock or OS entropy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Family",
    "ProcessSpec",
    "SamplePath",
    "fbm_covariance",
    "fgn_covariance",
    "derive_path_seed",
    "rosenblatt_calibration",
    "sample_fbm",
    "sample_rosenblatt",
    "sample",
]

# Relative tolerance for negative circulant eigenvalues.  Anything more
# negative than -NEG_EIG_TOL * max(eig) aborts the draw; smaller wiggles are
# rounding noise and are clipped to zero.
NEG_EIG_TOL = 1e-10

_MASK64 = (1 << 64) - 1


class Family(enum.Enum):
    FBM = "fbm"
    BM = "bm"
    ROSENBLATT = "rosenblatt"


@dataclass(frozen=True)
class ProcessSpec:
    """Parameters identifying the law and discretisation of one process.

    Attributes
    ----------
    family : Family
        Which process to sample.
    hurst : float
        Self-similarity index H in (0, 1).  BM pins it to 1/2 and the
        Rosenblatt process requires H in (1/2, 1).
    horizon : float
        Right end T_max of the simulation interval [0, T_max].
    grid_size : int
        Number n of time steps; paths carry n + 1 values.
    micro_factor : int
        Rosenblatt only: micro-lattice refinement per output step.
    """

    family: Family
    hurst: float
    horizon: float
    grid_size: int
    micro_factor: int = 16

    def __post_init__(self) -> None:
        if not isinstance(self.family, Family):
            raise ValueError(f"family must be a Family member, got {self.family!r}")
        if not 0.0 < self.hurst < 1.0:
            raise ValueError(f"hurst must lie in (0, 1), got {self.hurst}")
        if self.family is Family.BM and self.hurst != 0.5:
            raise ValueError("BM requires hurst = 0.5")
        if self.family is Family.ROSENBLATT and not 0.5 < self.hurst < 1.0:
            raise ValueError("the Rosenblatt process requires hurst in (1/2, 1)")
        if not self.horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.grid_size < 1:
            raise ValueError(f"grid_size must be at least 1, got {self.grid_size}")
        if self.micro_factor < 1:
            raise ValueError(f"micro_factor must be at least 1, got {self.micro_factor}")

    @property
    def delta(self) -> float:
        """Grid step T_max / n."""
        return self.horizon / self.grid_size


@dataclass
class SamplePath:
    """One realised path on the uniform grid k * delta, k = 0..n.

    ``values[0]`` is exactly 0.  ``calibration`` records the variance-matching
    constant applied by the Rosenblatt scheme (1.0 for the exact families).
    """

    spec: ProcessSpec
    seed: int
    values: np.ndarray
    calibration: float = 1.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) != self.spec.grid_size + 1:
            raise ValueError("values must be a 1-d array of length grid_size + 1")
        if self.values[0] != 0.0:
            raise ValueError("paths must start at zero")

    @property
    def delta(self) -> float:
        return self.spec.delta

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.spec.grid_size + 1) * self.spec.delta


def fbm_covariance(hurst: float, s: float, t: float) -> float:
    """Covariance of fractional Brownian motion at times s, t.

    Equals (|s|^2H + |t|^2H - |t - s|^2H) / 2 for a process normalised to
    unit variance at time 1.
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (0, 1), got {hurst}")
    two_h = 2.0 * hurst
    return 0.5 * (abs(s) ** two_h + abs(t) ** two_h - abs(t - s) ** two_h)


def fgn_covariance(hurst: float, k: int) -> float:
    """Autocovariance of unit-spacing fractional Gaussian noise at lag k."""
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (0, 1), got {hurst}")
    two_h = 2.0 * hurst
    k = abs(k)
    return 0.5 * (abs(k + 1) ** two_h - 2.0 * k**two_h + abs(k - 1) ** two_h)


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_path_seed(master_seed: int, path_index: int) -> int:
    """Per-path seed derived from a master seed by avalanche mixing.

    Every finalisation step of the SplitMix mix is a bijection on 64-bit
    words, so for a fixed master seed the map index -> seed is injective as
    long as fewer than 2^64 indices are used.
    """
    if path_index < 0:
        raise ValueError("path_index must be non-negative")
    return _splitmix64((_splitmix64(master_seed & _MASK64) + path_index) & _MASK64)


# ---------------------------------------------------------------------------
# circulant embedding machinery
# ---------------------------------------------------------------------------

# (kind, hurst, n) -> (m, sqrt(eigenvalues)); shared across paths of one run.
_EIG_CACHE: dict[tuple, tuple[int, np.ndarray]] = {}


def _embedding_size(n: int) -> int:
    """Smallest power of two >= 2 (n - 1), at least 2."""
    return 1 << max(1, int(math.ceil(math.log2(max(2, 2 * (n - 1))))))


def _circulant_sqrt_eig(acov: np.ndarray, m: int) -> np.ndarray:
    """Eigenvalue square roots of the circulant embedding of a covariance.

    ``acov`` holds the autocovariance at lags 0..m/2.  Raises if the
    embedding fails to be non-negative definite beyond rounding noise.
    """
    row = np.concatenate([acov, acov[-2:0:-1]])
    lam = np.fft.fft(row).real
    lam_max = lam.max()
    if lam.min() < -NEG_EIG_TOL * lam_max:
        raise RuntimeError(
            f"circulant embedding is not non-negative definite "
            f"(min eigenvalue {lam.min():.3e}, max {lam_max:.3e})"
        )
    np.clip(lam, 0.0, None, out=lam)
    return np.sqrt(lam)


def _stationary_gaussian(n: int, sqrt_lam: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n values of the stationary Gaussian sequence fixed by sqrt_lam.

    Synthesis in the Fourier domain: a Hermitian-symmetric complex normal
    vector is shaped by the eigenvalue roots and transformed back.  The draw
    order (one block of m standard normals, split into the real node at 0,
    the Nyquist node, then real and imaginary parts) is part of the
    reproducibility contract and must not be reordered.
    """
    half = m // 2
    w = rng.standard_normal(m)
    z = np.empty(m, dtype=np.complex128)
    z[0] = w[0]
    z[half] = w[1]
    re = w[2 : half + 1] * math.sqrt(0.5)
    im = w[half + 1 :] * math.sqrt(0.5)
    z[1:half] = re + 1j * im
    z[half + 1 :] = (re - 1j * im)[::-1]
    y = np.fft.ifft(sqrt_lam * z)
    return y.real[:n] * math.sqrt(m)


def _fgn_sqrt_eig(hurst: float, n: int) -> tuple[int, np.ndarray]:
    key = ("fgn", hurst, n)
    hit = _EIG_CACHE.get(key)
    if hit is not None:
        return hit
    m = _embedding_size(n)
    lags = np.arange(m // 2 + 1, dtype=np.float64)
    two_h = 2.0 * hurst
    acov = 0.5 * (np.abs(lags + 1) ** two_h - 2.0 * lags**two_h + np.abs(lags - 1) ** two_h)
    out = (m, _circulant_sqrt_eig(acov, m))
    _EIG_CACHE[key] = out
    return out


def _rosenblatt_sqrt_eig(hurst: float, n: int) -> tuple[int, np.ndarray]:
    key = ("ros", hurst, n)
    hit = _EIG_CACHE.get(key)
    if hit is not None:
        return hit
    m = _embedding_size(n)
    lags = np.arange(m // 2 + 1, dtype=np.float64)
    acov = (1.0 + lags) ** (-(1.0 - hurst))
    out = (m, _circulant_sqrt_eig(acov, m))
    _EIG_CACHE[key] = out
    return out


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def sample_fbm(spec: ProcessSpec, seed: int) -> SamplePath:
    """Exact fractional (or plain) Brownian motion path.

    Unit-variance fractional Gaussian noise is drawn through the circulant
    embedding, scaled by delta^H and cumulated.  The embedding reproduces the
    target covariance exactly, so each path is a draw from the true
    finite-dimensional law on the grid.
    """
    if spec.family not in (Family.FBM, Family.BM):
        raise ValueError(f"sample_fbm handles FBM and BM, got {spec.family}")
    n = spec.grid_size
    m, sqrt_lam = _fgn_sqrt_eig(spec.hurst, n)
    rng = np.random.default_rng(seed)
    noise = _stationary_gaussian(n, sqrt_lam, m, rng)
    increments = spec.delta**spec.hurst * noise
    values = np.empty(n + 1, dtype=np.float64)
    values[0] = 0.0
    np.cumsum(increments, out=values[1:])
    return SamplePath(spec=spec, seed=seed, values=values)


_CALIB_CACHE: dict[tuple[float, int], float] = {}


def rosenblatt_calibration(hurst: float, micro_points: int) -> float:
    """Variance-matching constant of the Hermite-rank-2 lattice scheme.

    The raw statistic S = N^-H sum_{i<N} (xi_i^2 - 1) built from a Gaussian
    sequence with autocovariance rho(k) = (1 + k)^-(1-H) has second moment

        Var S = 2 N^-2H sum_{|k| < N} (N - |k|) rho(k)^2,

    available in closed form, so the constant 1 / sqrt(Var S) that enforces
    unit variance at t = 1 is computed exactly rather than estimated.  It
    depends on the total micro-lattice size N, and is cached per (H, N).
    """
    key = (hurst, micro_points)
    hit = _CALIB_CACHE.get(key)
    if hit is not None:
        return hit
    k = np.arange(micro_points, dtype=np.float64)
    rho2 = (1.0 + k) ** (-2.0 * (1.0 - hurst))
    weights = micro_points - k
    var_raw = 2.0 * (weights[0] * rho2[0] + 2.0 * np.sum(weights[1:] * rho2[1:]))
    out = 1.0 / math.sqrt(var_raw / micro_points ** (2.0 * hurst))
    _CALIB_CACHE[key] = out
    return out


def sample_rosenblatt(spec: ProcessSpec, seed: int) -> SamplePath:
    """Approximate Rosenblatt path via quadratic partial sums.

    A long-memory standard Gaussian sequence xi with autocovariance
    rho(k) = (1 + k)^-(1-H) is drawn on the micro-lattice of
    N = grid_size * micro_factor points, the centred squares xi^2 - 1 are
    cumulated, and every micro_factor-th partial sum is kept.  Normalising by
    N^H and the exact calibration constant gives unit variance at t = 1;
    horizon^H rescales to the requested interval.  The scheme converges to
    the Rosenblatt law as the micro-lattice refines but carries finite-N
    bias, which is why downstream tolerances for this family are wider.
    """
    if spec.family is not Family.ROSENBLATT:
        raise ValueError(f"sample_rosenblatt handles ROSENBLATT, got {spec.family}")
    n = spec.grid_size
    total = n * spec.micro_factor
    m, sqrt_lam = _rosenblatt_sqrt_eig(spec.hurst, total)
    rng = np.random.default_rng(seed)
    xi = _stationary_gaussian(total, sqrt_lam, m, rng)
    np.multiply(xi, xi, out=xi)
    xi -= 1.0
    partial = np.cumsum(xi)
    calib = rosenblatt_calibration(spec.hurst, total)
    scale = spec.horizon**spec.hurst * calib / total**spec.hurst
    values = np.empty(n + 1, dtype=np.float64)
    values[0] = 0.0
    values[1:] = scale * partial[spec.micro_factor - 1 :: spec.micro_factor]
    return SamplePath(spec=spec, seed=seed, values=values, calibration=calib)


def sample(spec: ProcessSpec, seed: int) -> SamplePath:
    """Dispatch to the sampler for spec.family."""
    if spec.family is Family.ROSENBLATT:
        return sample_rosenblatt(spec, seed)
    return sample_fbm(spec, seed)
