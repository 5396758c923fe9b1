"""Additive quantization noise model of B-bit DACs and fronthaul noise statistics.

The distortion factor ``rho`` is the normalized mean squared error of the
minimum-distortion (Lloyd-Max) quantizer with ``2**B`` levels on a
unit-variance Gaussian. For a centroid quantizer the quantization error is
uncorrelated with the output, so the linearization ``(1 - rho) x + q`` holds
with ``E|q|^2 = rho (1 - rho) E|x|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import block_diag, solve_banded
from scipy.special import ndtr, ndtri

from .errors import DomainError, InvalidResolutionError

#: Above this resolution the high-resolution approximation replaces the oracle.
EXACT_MAX_BITS = 8

_INV_SQRT_2PI = 1.0 / math.sqrt(2 * math.pi)


def _pdf(x):
    return np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def _cell_moments(edges):
    """Probability, first and second partial moments of N(0,1) on each cell."""
    a, b = edges[:-1], edges[1:]
    pa, pb = _pdf(a), _pdf(b)
    prob = ndtr(b) - ndtr(a)
    m1 = pa - pb
    with np.errstate(invalid="ignore"):
        xa = np.where(np.isinf(a), 0.0, a * pa)
        xb = np.where(np.isinf(b), 0.0, b * pb)
    m2 = prob + xa - xb
    return prob, m1, m2


def quantizer_distortion(levels, thresholds) -> float:
    """MSE of a scalar quantizer on N(0, 1), from closed-form partial moments."""
    edges = np.concatenate([[-np.inf], thresholds, [np.inf]])
    prob, m1, m2 = _cell_moments(edges)
    return float(np.sum(m2 - 2 * levels * m1 + levels**2 * prob))


def lloyd_max_gaussian(num_levels: int, lloyd_iters: int = 50, newton_iters: int = 100,
                       tol: float = 1e-14):
    """Minimum-MSE quantizer of a unit Gaussian.

    Starts from the compander-optimal levels (quantiles of N(0, 3)), runs a few
    Lloyd sweeps, then solves the centroid fixed point ``c(r) = r`` by Newton's
    method with the exact tridiagonal Jacobian.

    Returns
    -------
    thresholds, levels : ndarray
    distortion : float
    """
    n = int(num_levels)
    if n < 2:
        raise DomainError("a quantizer needs at least two levels")
    r = math.sqrt(3) * ndtri((np.arange(n) + 0.5) / n)

    def centroids(r):
        t = 0.5 * (r[:-1] + r[1:])
        edges = np.concatenate([[-np.inf], t, [np.inf]])
        prob, m1, _ = _cell_moments(edges)
        return edges, prob, m1 / prob

    for _ in range(lloyd_iters):
        r = centroids(r)[2]

    for _ in range(newton_iters):
        edges, prob, c = centroids(r)
        resid = c - r
        if np.max(np.abs(resid)) <= tol:
            break
        a, b = edges[:-1], edges[1:]
        with np.errstate(invalid="ignore"):
            dca = np.where(np.isinf(a), 0.0, _pdf(a) * (c - a) / prob)
            dcb = np.where(np.isinf(b), 0.0, _pdf(b) * (b - c) / prob)
        # d c_i / d r_{i-1}, d r_i, d r_{i+1}; thresholds are midpoints
        band = np.zeros((3, n))
        band[0, 1:] = 0.5 * dcb[:-1]
        band[1] = 0.5 * (dca + dcb) - 1.0
        band[2, :-1] = 0.5 * dca[1:]
        r = r - solve_banded((1, 1), band, resid)
        r = 0.5 * (r - r[::-1])  # symmetric density, symmetric quantizer

    t = 0.5 * (r[:-1] + r[1:])
    return t, r, quantizer_distortion(r, t)


@lru_cache(maxsize=None)
def _exact_rho(bits: int) -> float:
    return lloyd_max_gaussian(2**bits)[2]


def high_resolution_rho(bits) -> float:
    return math.pi * math.sqrt(3) / 2 * 2.0 ** (-2 * bits)


def distortion_factor(bits) -> float:
    """Distortion factor ``rho`` of a B-bit quantizer (``inf`` gives 0)."""
    if bits == math.inf:
        return 0.0
    if bits < 1 or bits != int(bits):
        raise InvalidResolutionError(f"resolution must be a positive integer or inf, got {bits}")
    bits = int(bits)
    if bits <= EXACT_MAX_BITS:
        return _exact_rho(bits)
    return high_resolution_rho(bits)


@dataclass(frozen=True)
class QuantizationModel:
    bits: float
    rho: float

    def __post_init__(self):
        if self.bits == math.inf and self.rho != 0:
            raise DomainError("infinite resolution must have rho = 0")
        if not 0 <= self.rho < 1:
            raise DomainError(f"rho must lie in [0, 1), got {self.rho}")

    @classmethod
    def from_bits(cls, bits) -> "QuantizationModel":
        return cls(bits if bits == math.inf else int(bits), distortion_factor(bits))


def aggregate_noise_cov(F_m, eta, sigma_m: float, rho: float) -> np.ndarray:
    """Second moment of DAC plus compressed fronthaul noise at one base station.

    ``rho (1 - rho) diag(F_m eta F_m^H) + (1 - rho) sigma_m^2 I``, with ``eta``
    the length-K vector of power coefficients.
    """
    F_m = np.asarray(F_m)
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise DomainError("power coefficients must be non-negative")
    if sigma_m < 0:
        raise DomainError("compression noise deviation must be non-negative")
    diag = np.sum(np.abs(F_m) ** 2 * eta, axis=1)
    return np.diag(rho * (1 - rho) * diag + (1 - rho) * sigma_m**2).astype(complex)


def stacked_noise_cov(blocks) -> np.ndarray:
    blocks = [np.asarray(b) for b in blocks]
    if not blocks:
        raise DomainError("no covariance blocks given")
    shape = blocks[0].shape
    if any(b.shape != shape or b.shape[0] != b.shape[1] for b in blocks):
        raise DomainError("covariance blocks must be square and equally sized")
    return block_diag(*blocks)


def rate_lower_bound(sqnr):
    """Worst-case-Gaussian-noise rate ``log2(1 + sqnr)`` in bps/Hz."""
    sqnr = np.asarray(sqnr, dtype=float)
    if np.any(sqnr < 0):
        raise DomainError("SQNR must be non-negative")
    out = np.log2(1 + sqnr)
    return float(out) if out.ndim == 0 else out
