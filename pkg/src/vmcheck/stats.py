"""Distributional statistics behind the marks.

Conventions: type-7 quantiles, Gaussian-kernel KDE with Silverman's rule on
a 512-point grid padded by three bandwidths, Freedman-Diaconis histograms,
Hazen plotting positions ``(i - 0.5) / n`` for Q-Q plots and dotplots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vmcheck.errors import DataError

__all__ = [
    "DensityCurve",
    "IntervalSet",
    "Histogram",
    "DotplotBins",
    "DEFAULT_WIDTHS",
    "quantiles",
    "interval_set",
    "silverman_bandwidth",
    "kde",
    "histogram",
    "quantile_dotplot",
    "norm_ppf",
    "norm_pdf",
    "qq_pairs",
    "worm",
    "worm_band",
    "ks_statistic",
]

DEFAULT_WIDTHS = (0.5, 0.8, 0.95)
GRID_SIZE = 512


def _finite(values, what="values") -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise DataError(f"{what} must be non-empty")
    if not np.all(np.isfinite(v)):
        raise DataError(f"{what} must be finite")
    return v


def quantiles(values, probs) -> np.ndarray:
    """Type-7 sample quantiles: ``x[h] + (h - floor h)(x[h+1] - x[h])`` with ``h = (n - 1) p``."""
    x = np.sort(_finite(values))
    p = np.asarray(probs, dtype=float).reshape(-1)
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise DataError("probabilities must lie in [0, 1]")
    h = (x.size - 1) * p
    lo = np.floor(h).astype(int)
    hi = np.minimum(lo + 1, x.size - 1)
    return x[lo] + (h - lo) * (x[hi] - x[lo])


@dataclass(frozen=True)
class IntervalSet:
    point: float
    widths: tuple[float, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def as_rows(self) -> list[dict]:
        return [{"width": w, "lo": a, "hi": b} for w, a, b in zip(self.widths, self.lo, self.hi)]


def interval_set(values, widths: Sequence[float] = DEFAULT_WIDTHS) -> IntervalSet:
    """Median plus central intervals ``[q((1 - w)/2), q((1 + w)/2)]`` sorted by width."""
    w = sorted(float(x) for x in widths)
    if not w or any(not 0.0 < x < 1.0 for x in w):
        raise DataError("interval widths must lie strictly inside (0, 1)")
    probs = [0.5] + [(1 - x) / 2 for x in w] + [(1 + x) / 2 for x in w]
    q = quantiles(values, probs)
    k = len(w)
    return IntervalSet(float(q[0]), tuple(w), tuple(map(float, q[1 : 1 + k])), tuple(map(float, q[1 + k :])))


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


def silverman_bandwidth(values) -> float:
    """``0.9 min(sd, IQR/1.34) n^(-1/5)``, or 1.0 when that is zero."""
    x = _finite(values)
    if x.size < 2:
        raise DataError("automatic bandwidth needs at least two values")
    sd = float(np.std(x, ddof=1))
    q25, q75 = quantiles(x, [0.25, 0.75])
    bw = 0.9 * min(sd, (q75 - q25) / 1.34) * x.size ** -0.2
    return bw if bw > 0 else 1.0


_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def kde(values, bandwidth: float | None = None, grid_size: int = GRID_SIZE) -> DensityCurve:
    """Gaussian KDE on ``grid_size`` points over ``[min - 3 bw, max + 3 bw]``."""
    x = np.sort(_finite(values))
    bw = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not bw > 0:
        raise DataError("bandwidth must be positive")
    grid = np.linspace(x[0] - 3 * bw, x[-1] + 3 * bw, grid_size)
    dens = np.zeros(grid_size)
    chunk = max(1, 2_000_000 // grid_size)
    for start in range(0, x.size, chunk):
        z = (grid[:, None] - x[None, start : start + chunk]) / bw
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens *= _INV_SQRT_2PI / (x.size * bw)
    return DensityCurve(grid, dens, bw)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def density(self) -> np.ndarray:
        widths = np.diff(self.edges)
        n = self.counts.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(widths > 0, self.counts / (n * np.where(widths > 0, widths, 1.0)), 0.0)


def histogram(values) -> Histogram:
    """Freedman-Diaconis bins (``2 IQR n^(-1/3)``); Sturges when the IQR is zero.

    Bins are left-closed; the last one also includes the maximum.  A sample
    with zero range yields one degenerate bin holding every value.
    """
    x = _finite(values)
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return Histogram(np.array([lo, hi]), np.array([x.size]))
    q25, q75 = quantiles(x, [0.25, 0.75])
    iqr = q75 - q25
    if iqr > 0:
        width = 2.0 * iqr * x.size ** (-1.0 / 3.0)
        nbins = max(1, math.ceil((hi - lo) / width - 1e-12))
    else:
        nbins = math.ceil(math.log2(x.size)) + 1
    edges = np.linspace(lo, hi, nbins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, nbins - 1)
    return Histogram(edges, np.bincount(idx, minlength=nbins))


@dataclass(frozen=True)
class DotplotBins:
    positions: np.ndarray
    bins: np.ndarray
    stacks: np.ndarray
    heights: np.ndarray
    edges: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def quantile_dotplot(values, n_dots: int = 100) -> DotplotBins:
    """``n_dots`` dots at quantiles ``(i - 0.5)/n_dots`` stacked in ``ceil(sqrt(n_dots))`` bins.

    ``stacks[i]`` is dot ``i``'s 1-based height within its bin.
    """
    if n_dots < 1:
        raise DataError("n_dots must be at least 1")
    pos = quantiles(values, (np.arange(1, n_dots + 1) - 0.5) / n_dots)
    nbins = math.ceil(math.sqrt(n_dots))
    lo, hi = float(pos[0]), float(pos[-1])
    edges = np.linspace(lo, hi, nbins + 1)
    if hi > lo:
        bins = np.clip(np.floor((pos - lo) / (hi - lo) * nbins).astype(int), 0, nbins - 1)
    else:
        bins = np.zeros(n_dots, dtype=int)
    heights = np.bincount(bins, minlength=nbins)
    stacks = np.empty(n_dots, dtype=int)
    seen = np.zeros(nbins, dtype=int)
    for i, b in enumerate(bins):
        seen[b] += 1
        stacks[i] = seen[b]
    return DotplotBins(pos, bins, stacks, heights, edges)


# -- normal quantiles -------------------------------------------------------------

# Acklam's rational approximation, refined by one Halley step on erfc.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    if p > 1 - _P_LOW:
        q = math.sqrt(-2 * math.log1p(-p))
        return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)


def _norm_ppf_scalar(p: float) -> float:
    if not 0.0 < p < 1.0:
        if p == 0.0:
            return -math.inf
        if p == 1.0:
            return math.inf
        raise DataError("normal quantile needs p in [0, 1]")
    if p == 0.5:
        return 0.0
    x = _acklam(p)
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def norm_ppf(p):
    """Standard normal quantile function (absolute error well below 1e-9)."""
    arr = np.asarray(p, dtype=float)
    out = np.array([_norm_ppf_scalar(float(v)) for v in arr.reshape(-1)]).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def qq_pairs(sample) -> np.ndarray:
    """``(n, 2)`` array of (standard normal quantile at ``(i - 0.5)/n``, i-th smallest value)."""
    x = np.sort(_finite(sample, "sample"))
    n = x.size
    theo = np.asarray(norm_ppf((np.arange(1, n + 1) - 0.5) / n)).reshape(-1)
    return np.column_stack([theo, x])


def worm_band(p, n: int):
    """Pointwise 95% half-width ``1.96 sqrt(p(1-p)/n) / phi(Phi^-1(p))`` for a detrended Q-Q plot."""
    p = np.asarray(p, dtype=float)
    return 1.96 * np.sqrt(p * (1 - p) / n) / norm_pdf(norm_ppf(p))


def worm(pairs) -> np.ndarray:
    """Detrended Q-Q: columns (theoretical, empirical - theoretical, band half-width)."""
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    n = pairs.shape[0]
    p = (np.arange(1, n + 1) - 0.5) / n
    return np.column_stack([pairs[:, 0], pairs[:, 1] - pairs[:, 0], np.atleast_1d(worm_band(p, n))])


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance ``sup |F_a - F_b|``."""
    a = np.sort(_finite(a))
    b = np.sort(_finite(b))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))
