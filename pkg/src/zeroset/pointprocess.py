"""Marked point process view of the inverse local time.

A jump function restricted to a window of levels is the same data as a
finite marked point set: one point per jump, with the level as abscissa and
the jump size as mark.  For an H-self-similar path the pooled marks follow
a power tail with index 1 - H, which the Hill estimator and two counting
based checks (a threshold-ratio statistic and a log-log count regression)
estimate from ensembles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError
from .localtime import JumpFunction

__all__ = [
    "FitMethod",
    "MarkedPointSet",
    "IntensityFit",
    "jumps_to_empp",
    "empp_to_jumps",
    "rescale_empp",
    "count_heavy_subintervals",
    "hill_tail_index",
    "loglog_count_fit",
    "window_exceedance_counts",
    "intensity_ratio_from_counts",
    "intensity_ratio_test",
]

RATIO_MIN_POINTS = 100


class FitMethod(enum.Enum):
    HILL = "hill"
    LOGLOG_COUNTS = "loglog_counts"


@dataclass
class MarkedPointSet:
    """Finite set of (level, mark) points inside a level window."""

    locations: np.ndarray
    marks: np.ndarray
    window: tuple[float, float]

    def __post_init__(self) -> None:
        self.locations = np.asarray(self.locations, dtype=np.float64)
        self.marks = np.asarray(self.marks, dtype=np.float64)
        if self.locations.shape != self.marks.shape or self.locations.ndim != 1:
            raise ValueError("locations and marks must be 1-d arrays of equal length")
        lo, hi = self.window
        if not lo < hi:
            raise ValueError(f"window must satisfy lo < hi, got {self.window}")
        if len(self.locations):
            if np.any(np.diff(self.locations) <= 0.0):
                raise ValueError("locations must be strictly increasing")
            if self.locations[0] < lo or self.locations[-1] > hi:
                raise ValueError("locations must lie inside the window")
        if np.any(self.marks <= 0.0):
            raise ValueError("marks must be positive")

    @property
    def n_points(self) -> int:
        return len(self.locations)

    def count(self, x_hi: float, mark_gt: float) -> int:
        """Number of points with location in (0, x_hi] and mark > mark_gt."""
        keep = (self.locations > 0.0) & (self.locations <= x_hi) & (self.marks > mark_gt)
        return int(np.count_nonzero(keep))


@dataclass
class IntensityFit:
    """Fitted power-tail of the mark intensity.

    ``exponent`` estimates the tail index (1 - H for an H-self-similar
    source).  ``constant`` is the multiplicative prefactor in the fitted
    survival relation; its meaning depends on the method and is documented
    by the producing function.
    """

    exponent: float
    constant: float
    stderr: float
    k_used: int
    method: FitMethod


def jumps_to_empp(L: JumpFunction, window: tuple[float, float]) -> MarkedPointSet:
    """Marked point set of the jumps of L with levels inside the window.

    The window must sit inside [0, total_mass_cap]; both endpoints are
    inclusive.  The map keeps the exact float values, so composing with
    ``empp_to_jumps`` is a bit-exact round trip.
    """
    lo, hi = window
    if not 0.0 <= lo < hi:
        raise ValueError(f"window must satisfy 0 <= lo < hi, got {window}")
    if hi > L.total_mass_cap:
        raise ValueError(
            f"window {window} exceeds total_mass_cap {L.total_mass_cap}"
        )
    keep = (L.locations >= lo) & (L.locations <= hi)
    return MarkedPointSet(
        locations=L.locations[keep].copy(),
        marks=L.sizes[keep].copy(),
        window=(lo, hi),
    )


def empp_to_jumps(points: MarkedPointSet) -> JumpFunction:
    """Jump function with exactly the jumps of the point set and no drift.

    Inverse of ``jumps_to_empp`` on the window: the reconstructed function
    reproduces the restricted jump data bit-exactly, with the window top as
    its mass cap.
    """
    locs = points.locations
    if len(locs) and np.any(np.diff(locs) == 0.0):
        raise ValueError("duplicate jump locations cannot be inverted")
    return JumpFunction(
        locations=locs.copy(),
        sizes=points.marks.copy(),
        drift=0.0,
        total_mass_cap=points.window[1],
    )


def rescale_empp(points: MarkedPointSet, r: float, beta: float) -> MarkedPointSet:
    """Bi-scale rescaling: (x, m) -> (x / r, m / r^beta), window / r.

    This is the point-level form of the scaling that maps the point process
    of an H-self-similar path to itself in law when beta = 1 / (1 - H).
    """
    if r <= 0.0:
        raise ValueError(f"scale r must be positive, got {r}")
    mark_scale = r**beta
    return MarkedPointSet(
        locations=points.locations / r,
        marks=points.marks / mark_scale,
        window=(points.window[0] / r, points.window[1] / r),
    )


def count_heavy_subintervals(L: JumpFunction, n: int, r: float) -> int:
    """Number of n-th level subintervals of (0, 1] with L-increment above r.

    Computes sum_{k=1..n} 1{L(k/n) - L((k-1)/n) > r}.  Once 1/n is smaller
    than the smallest gap between jump locations, each subinterval holds at
    most one jump and the count stabilises at the number of jumps in (0, 1]
    with size above r (plus the negligible drift contribution).
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if r <= 0.0:
        raise ValueError(f"threshold r must be positive, got {r}")
    if L.total_mass_cap < 1.0:
        raise ValueError(
            f"L is only defined up to {L.total_mass_cap}; counting needs [0, 1]"
        )
    grid = np.arange(n + 1, dtype=np.float64) / n
    values = L.evaluate(grid)
    return int(np.count_nonzero(np.diff(values) > r))


def hill_tail_index(marks: Sequence[float] | np.ndarray, k: int) -> IntensityFit:
    """Hill estimator of the tail index from the k largest marks.

    With descending order statistics m_(1) >= m_(2) >= ...,

        exponent = [ (1/k) sum_{i<=k} log(m_(i) / m_(k+1)) ]^-1,

    and stderr = exponent / sqrt(k).  ``constant`` is the sample-level tail
    prefactor (k / n_marks) * m_(k+1)^exponent, i.e. the fitted survival
    fraction of the pooled marks is constant * m^-exponent near the tail.
    """
    marks = np.asarray(marks, dtype=np.float64)
    if marks.ndim != 1:
        raise ValueError("marks must be a 1-d array")
    if len(marks) < 3:
        raise InsufficientDataError(
            f"Hill needs at least 3 marks, got {len(marks)}"
        )
    if np.any(marks <= 0.0):
        raise ValueError("marks must be positive")
    if not 2 <= k < len(marks):
        raise InsufficientDataError(
            f"k must satisfy 2 <= k < n_marks = {len(marks)}, got {k}"
        )
    ordered = np.sort(marks)[::-1]
    mean_log = float(np.mean(np.log(ordered[:k] / ordered[k])))
    if mean_log <= 0.0:
        raise InsufficientDataError("top marks are all equal; tail index undefined")
    exponent = 1.0 / mean_log
    return IntensityFit(
        exponent=exponent,
        constant=(k / len(marks)) * float(ordered[k]) ** exponent,
        stderr=exponent / math.sqrt(k),
        k_used=k,
        method=FitMethod.HILL,
    )


def loglog_count_fit(mean_counts: np.ndarray, thresholds: np.ndarray) -> IntensityFit:
    """Tail index from a log-log regression of mean exceedance counts.

    ``mean_counts[i]`` is the ensemble-average number of points per unit
    level window with mark above ``thresholds[i]``.  Under the power-law
    intensity the means follow (c / alpha) * r^-alpha; the slope of
    log(count) on log(r) estimates -alpha and ``constant`` recovers c as
    alpha * exp(intercept).  Serves as the independent cross-check of the
    Hill route.
    """
    mean_counts = np.asarray(mean_counts, dtype=np.float64)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if mean_counts.shape != thresholds.shape or mean_counts.ndim != 1:
        raise ValueError("mean_counts and thresholds must be 1-d arrays of equal length")
    if len(mean_counts) < 2:
        raise InsufficientDataError("need at least 2 thresholds for the count fit")
    if np.any(mean_counts <= 0.0) or np.any(thresholds <= 0.0):
        raise InsufficientDataError("counts and thresholds must be positive")
    x = np.log(thresholds)
    y = np.log(mean_counts)
    slope, intercept = np.polyfit(x, y, 1)
    alpha = -float(slope)
    resid = y - (slope * x + intercept)
    dof = max(len(x) - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx) if sxx > 0 else float("nan")
    return IntensityFit(
        exponent=alpha,
        constant=alpha * math.exp(float(intercept)),
        stderr=stderr,
        k_used=len(x),
        method=FitMethod.LOGLOG_COUNTS,
    )


def window_exceedance_counts(
    L: JumpFunction, x_window: float, thresholds: Sequence[float]
) -> np.ndarray:
    """Counts of jumps with level in (0, x_window] and size above each threshold."""
    inside = (L.locations > 0.0) & (L.locations <= x_window)
    sizes = np.sort(L.sizes[inside])
    thr = np.asarray(thresholds, dtype=np.float64)
    return (len(sizes) - np.searchsorted(sizes, thr, side="right")).astype(np.int64)


def intensity_ratio_from_counts(low_total: int, high_total: int) -> float:
    """Ratio of pooled exceedance counts, guarding the sparse-tail case."""
    if high_total < RATIO_MIN_POINTS:
        raise InsufficientDataError(
            f"only {high_total} points above the upper threshold; "
            f"need {RATIO_MIN_POINTS}"
        )
    return low_total / high_total


def intensity_ratio_test(
    L_ensemble: Sequence[JumpFunction], r: float, x_window: float = 1.0
) -> float:
    """Ratio of mean exceedance counts at thresholds r and 4r.

    Counts jumps with level in (0, x_window] and size above the threshold,
    averaged over the paths whose mass cap covers the window.  Under the
    power-law intensity the ratio estimates 4^(1-H) independently of the
    unknown constant.
    """
    if r <= 0.0:
        raise ValueError(f"threshold r must be positive, got {r}")
    if x_window <= 0.0:
        raise ValueError(f"x_window must be positive, got {x_window}")
    low = 0
    high = 0
    used = 0
    for L in L_ensemble:
        if L.total_mass_cap < x_window:
            continue
        used += 1
        c_low, c_high = window_exceedance_counts(L, x_window, (r, 4.0 * r))
        low += int(c_low)
        high += int(c_high)
    if used == 0:
        raise InsufficientDataError("no path covers the requested level window")
    return intensity_ratio_from_counts(low, high)
