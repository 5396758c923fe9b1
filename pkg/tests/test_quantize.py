import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from cellfree.errors import DomainError, InvalidResolutionError
from cellfree.quantize import (QuantizationModel, aggregate_noise_cov, distortion_factor,
                               high_resolution_rho, lloyd_max_gaussian, quantizer_distortion,
                               rate_lower_bound, stacked_noise_cov)


def mse_by_quadrature(levels, thresholds):
    """Independent check: integrate (x - Q(x))^2 phi(x) cell by cell."""
    edges = np.concatenate([[-np.inf], thresholds, [np.inf]])
    total = 0.0
    for r, a, b in zip(levels, edges[:-1], edges[1:]):
        total += integrate.quad(lambda x: (x - r) ** 2 * norm.pdf(x), a, b, epsabs=1e-14)[0]
    return total


def test_infinite_resolution():
    assert distortion_factor(math.inf) == 0.0


def test_one_bit_closed_form():
    assert distortion_factor(1) == pytest.approx(1 - 2 / math.pi, abs=1e-12)


def test_one_bit_levels():
    t, r, _ = lloyd_max_gaussian(2)
    assert t == pytest.approx([0.0], abs=1e-14)
    assert r == pytest.approx([-math.sqrt(2 / math.pi), math.sqrt(2 / math.pi)])


def test_eight_bits_near_high_resolution_formula():
    assert distortion_factor(8) == pytest.approx(math.pi * math.sqrt(3) / 2 * 2.0**-16, rel=0.02)
    assert high_resolution_rho(8) == pytest.approx(4.151e-5, rel=1e-3)


# values from Max's table of optimum (non-uniform) quantizers for a Gaussian
@pytest.mark.parametrize("bits, expected", [(2, 0.1175), (3, 0.03454), (4, 0.009497), (5, 0.002499)])
def test_matches_classical_table(bits, expected):
    assert distortion_factor(bits) == pytest.approx(expected, rel=3e-3)


@pytest.mark.parametrize("bits", [2, 3, 4])
def test_distortion_matches_quadrature(bits):
    t, r, d = lloyd_max_gaussian(2**bits)
    assert d == pytest.approx(mse_by_quadrature(r, t), rel=1e-9)


@pytest.mark.parametrize("bits", [2, 3, 5])
def test_lloyd_max_optimality_conditions(bits):
    t, r, d = lloyd_max_gaussian(2**bits)
    assert t == pytest.approx(0.5 * (r[:-1] + r[1:]))
    edges = np.concatenate([[-np.inf], t, [np.inf]])
    centroid = [integrate.quad(lambda x: x * norm.pdf(x), a, b)[0] / (norm.cdf(b) - norm.cdf(a))
                for a, b in zip(edges[:-1], edges[1:])]
    assert r == pytest.approx(centroid, abs=1e-9)
    # perturbing any level increases the MSE
    rng = np.random.default_rng(bits)
    for _ in range(5):
        rp = r + 1e-3 * rng.standard_normal(r.size)
        assert quantizer_distortion(rp, 0.5 * (rp[:-1] + rp[1:])) > d


def test_strictly_decreasing_in_bits():
    rhos = [distortion_factor(b) for b in range(1, 13)] + [distortion_factor(math.inf)]
    assert np.all(np.diff(rhos) < 0)


@pytest.mark.parametrize("bits", [0, -1, 2.5])
def test_invalid_resolution(bits):
    with pytest.raises(InvalidResolutionError):
        distortion_factor(bits)


def test_quantization_model_invariants():
    assert QuantizationModel.from_bits(math.inf).rho == 0
    with pytest.raises(DomainError):
        QuantizationModel(math.inf, 0.1)
    assert QuantizationModel.from_bits(3).rho == distortion_factor(3)


def test_aggregate_rho_zero():
    F = np.random.default_rng(0).standard_normal((3, 4))
    C = aggregate_noise_cov(F, np.ones(4), 0.7, 0.0)
    assert np.allclose(C, 0.49 * np.eye(3))


def test_aggregate_all_zero():
    assert np.allclose(aggregate_noise_cov(np.ones((2, 2)), np.zeros(2), 0.0, 0.3), 0)


def test_aggregate_scalar_example():
    C = aggregate_noise_cov(np.array([[1.0]]), np.array([2.0]), 1.0, 0.5)
    assert C[0, 0] == pytest.approx(1.0)


def test_aggregate_rejects_negative_eta():
    with pytest.raises(DomainError):
        aggregate_noise_cov(np.ones((2, 2)), np.array([1.0, -1.0]), 0.0, 0.1)


@given(st.integers(0, 2**32 - 1), st.floats(0, 0.9), st.floats(0, 3))
def test_aggregate_diagonal_nonnegative(seed, rho, sigma):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    C = aggregate_noise_cov(F, rng.random(5), sigma, rho)
    assert np.allclose(C, np.diag(np.diag(C)))
    assert np.all(np.real(np.diag(C)) >= 0)
    # diag(F eta F^H) equals the diagonal of the full outer-product sum
    eta = rng.random(5)
    full = (F * eta) @ F.conj().T
    C = aggregate_noise_cov(F, eta, sigma, rho)
    assert np.allclose(np.diag(C), rho * (1 - rho) * np.diag(full) + (1 - rho) * sigma**2)


def test_stacked_single_block():
    B = np.diag([1.0, 2.0])
    assert np.array_equal(stacked_noise_cov([B]), B)


def test_stacked_scalar_blocks():
    assert np.array_equal(stacked_noise_cov([np.array([[3.0]]), np.array([[5.0]])]), np.diag([3.0, 5.0]))


def test_stacked_psd():
    rng = np.random.default_rng(1)
    blocks = []
    for _ in range(3):
        A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        blocks.append(A @ A.conj().T)
    C = stacked_noise_cov(blocks)
    eig = np.linalg.eigvalsh(C)
    expected = np.sort(np.concatenate([np.linalg.eigvalsh(b) for b in blocks]))
    assert eig == pytest.approx(expected)
    assert eig.min() >= -1e-12


def test_stacked_size_mismatch():
    with pytest.raises(DomainError):
        stacked_noise_cov([np.eye(2), np.eye(3)])


@pytest.mark.parametrize("sqnr, rate", [(0, 0), (1, 1), (3, 2)])
def test_rate_lower_bound_values(sqnr, rate):
    assert rate_lower_bound(sqnr) == pytest.approx(rate)


def test_rate_lower_bound_negative():
    with pytest.raises(DomainError):
        rate_lower_bound(-0.1)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_rate_lower_bound_monotone(a, b):
    lo, hi = sorted((a, b))
    assert rate_lower_bound(lo) <= rate_lower_bound(hi)
