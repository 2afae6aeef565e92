"""Counter-based random numbers keyed by ``(seed, purpose, draw, row, counter)``.

Every uniform is a pure function of its key, so results do not depend on
evaluation order or on how work is split between workers.  The mixing
function is the splitmix64 finalizer applied once per label:

    h = mix(seed + GOLDEN)
    h = mix(h ^ (label_k + GOLDEN * k))     for labels k = 1..4
    u = (mix(h) >> 11) * 2**-53

The purpose tag enters as its 64-bit FNV-1a hash.  All arithmetic wraps
modulo 2**64.  The array functions below broadcast over label arrays; the
scalar :func:`rng_uniform` goes through the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngKey",
    "fnv1a64",
    "rng_uniform",
    "uniforms",
    "normals",
    "gammas",
    "poissons",
]

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x)).astype(np.uint64)


def uniforms(seed: int, purpose: str, draw, row, counter) -> np.ndarray:
    """Uniforms on [0, 1) for broadcast label arrays ``draw``, ``row``, ``counter``."""
    labels = [_u64(fnv1a64(purpose)), _u64(draw), _u64(row), _u64(counter)]
    with np.errstate(over="ignore"):
        h = _mix(_u64((int(seed) + GOLDEN) & MASK64))
        for k, lab in enumerate(labels, start=1):
            h = _mix(h ^ (lab + _u64((GOLDEN * k) & MASK64)))
        out = _mix(h) >> np.uint64(11)
    return out.astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class RngKey:
    """Address of one uniform variate."""

    seed: int
    purpose: str
    draw: int = 0
    row: int = 0
    counter: int = 0

    def child(self, purpose: str) -> "RngKey":
        return RngKey(self.seed, f"{self.purpose}/{purpose}", self.draw, self.row, self.counter)


def rng_uniform(key: RngKey) -> float:
    return float(uniforms(key.seed, key.purpose, key.draw, key.row, key.counter)[0])


# -- derived distributions ------------------------------------------------------
#
# Each sampler takes ``draw``/``row`` label arrays of a common shape and
# reserves its own counter range; samplers with rejection loops consume a
# fixed number of counters per attempt so attempt k of element e always reads
# the same uniforms regardless of what the other elements did.


def normals(seed: int, purpose: str, draw, row, counter_base: int = 0) -> np.ndarray:
    """Box-Muller standard normals from counters ``base`` and ``base + 1``."""
    u1 = uniforms(seed, purpose, draw, row, counter_base)
    u2 = uniforms(seed, purpose, draw, row, counter_base + 1)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def _broadcast(draw, row, *params):
    arrays = np.broadcast_arrays(np.asarray(draw), np.asarray(row), *[np.asarray(p, float) for p in params])
    return [np.array(a) for a in arrays]


def gammas(seed: int, purpose: str, shape, draw, row, max_attempts: int = 256) -> np.ndarray:
    """Gamma(shape, 1) variates by Marsaglia-Tsang squeeze/rejection.

    Shapes below one use the boost ``Gamma(a + 1) * U**(1/a)`` with ``U``
    taken from the ``<purpose>/boost`` stream.
    """
    draw, row, shape = _broadcast(draw, row, shape)
    if np.any(shape <= 0):
        raise ValueError("gamma shape must be positive")
    a = np.where(shape < 1.0, shape + 1.0, shape)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.full(a.shape, np.nan)
    pending = np.ones(a.shape, dtype=bool)
    for attempt in range(max_attempts):
        if not pending.any():
            break
        idx = np.nonzero(pending)
        dr, rw, dd, cc = draw[idx], row[idx], d[idx], c[idx]
        x = normals(seed, purpose, dr, rw, 3 * attempt)
        u = uniforms(seed, purpose, dr, rw, 3 * attempt + 2)
        v = (1.0 + cc * x) ** 3
        ok = v > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            logv = np.log(np.where(ok, v, 1.0))
            accept = ok & (
                (u < 1.0 - 0.0331 * x**4)
                | (np.log(u) < 0.5 * x * x + dd * (1.0 - v + logv))
            )
        hit = tuple(i[accept] for i in idx)
        out[hit] = (dd * v)[accept]
        pending[hit] = False
    if pending.any():
        raise RuntimeError("gamma sampler did not converge")
    small = shape < 1.0
    if small.any():
        ub = uniforms(seed, purpose + "/boost", draw[small], row[small], 0)
        out[small] = out[small] * np.exp(np.log1p(-ub) / shape[small])
    return out


def _poisson_inversion(u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    k = np.zeros(u.shape)
    p = np.exp(-lam)
    cdf = p.copy()
    pending = u > cdf
    step = 0
    while pending.any() and step < 1000:
        step += 1
        k[pending] += 1
        p[pending] *= lam[pending] / k[pending]
        cdf[pending] += p[pending]
        pending &= u > cdf
        # cdf can stall just below 1 in binary64; stop once the mass is spent
        pending &= p > 0
    return k


def _poisson_ptrs(seed, purpose, draw, row, lam, max_attempts=256) -> np.ndarray:
    """Hörmann's transformed rejection with squeeze for large means."""
    from scipy.special import gammaln

    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    out = np.full(lam.shape, np.nan)
    pending = np.ones(lam.shape, dtype=bool)
    for attempt in range(max_attempts):
        if not pending.any():
            break
        idx = np.nonzero(pending)[0]
        U = uniforms(seed, purpose, draw[idx], row[idx], 2 * attempt) - 0.5
        V = uniforms(seed, purpose, draw[idx], row[idx], 2 * attempt + 1)
        aa, bb, ll = a[idx], b[idx], lam[idx]
        us = 0.5 - np.abs(U)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.floor((2.0 * aa / us + bb) * U + ll + 0.43)
            quick = (us >= 0.07) & (V <= vr[idx])
            reject = (k < 0) | ((us < 0.013) & (V > us))
            lhs = np.log(V) + np.log(invalpha[idx]) - np.log(aa / (us * us) + bb)
            rhs = -ll + k * loglam[idx] - gammaln(k + 1.0)
        accept = quick | (~reject & (lhs <= rhs))
        out[idx[accept]] = k[accept]
        pending[idx[accept]] = False
    if pending.any():
        raise RuntimeError("poisson sampler did not converge")
    return out


def poissons(seed: int, purpose: str, lam, draw, row) -> np.ndarray:
    """Poisson variates: inversion for ``lam <= 30``, PTRS rejection above."""
    draw, row, lam = _broadcast(draw, row, lam)
    flat = [x.reshape(-1) for x in (draw, row, lam)]
    draw_f, row_f, lam_f = flat
    out = np.empty(lam_f.shape)
    small = lam_f <= 30.0
    if small.any():
        u = uniforms(seed, purpose, draw_f[small], row_f[small], 0)
        out[small] = _poisson_inversion(u, lam_f[small])
    if (~small).any():
        out[~small] = _poisson_ptrs(seed, purpose, draw_f[~small], row_f[~small], lam_f[~small])
    return out.reshape(lam.shape)
