import math

import numpy as np

from cellfree.channel import design_rf_chains, draw_channel, nearest_bs_assignment
from cellfree.config import SystemConfig
from cellfree.precode import EffectiveChannel, effective_channel


def random_links(rng, K, M, R, scale=1.0):
    h = rng.standard_normal((K, M, R)) + 1j * rng.standard_normal((K, M, R))
    return EffectiveChannel.from_links(scale * h / np.sqrt(2), 1.0)


def semi_unitary_rf(rng, M, N, R):
    """Random constant-modulus RF precoders with entries of modulus 1/sqrt(N)."""
    return np.exp(2j * np.pi * rng.random((M, N, R))) / np.sqrt(N)


def desk_instance(seed, index=0, **overrides):
    """Channel, RF chains and effective channel of one desk-scale drop."""
    config = SystemConfig(seed=seed, **overrides)
    rng = np.random.default_rng([seed, index])
    channel = draw_channel(config, rng)
    assignment = nearest_bs_assignment(channel.bs_positions, channel.ue_positions)
    rf = design_rf_chains(channel, assignment, config.n_rf)
    return config, channel, assignment, rf, effective_channel(channel, rf, config.awgn_var)


def grid_oracle(problem, sigma, coarse=81, tol=1e-5):
    """Brute-force max-min SQNR of a two-user problem.

    Evaluates every point of a 2-D grid of ``(eta_1, eta_2)``, keeps the best
    feasible one and zooms in around it until the step is below ``tol`` of
    the search range. Only uses the closed-form evaluators, vectorized.
    """
    sigma = np.asarray(sigma, dtype=float)
    rho, noise = problem.rho, problem.effective.awgn_var
    upper = problem.power_budget / problem.power_coeff.max(axis=0)
    F = problem.precoders.blocks
    if problem.fronthaul_capacity < math.inf:
        # a single active user at eta_k already spends log2(1 + eta_k |f_k|^2 / sigma^2)
        col = np.sum(np.abs(F) ** 2, axis=1)  # (M, K)
        cap = np.min(np.expm1(problem.fronthaul_capacity * math.log(2)) * sigma[:, None] ** 2 / col, axis=0)
        upper = np.minimum(upper, cap)
    lo, hi = np.zeros(2), upper.copy()
    best, best_t = None, -1.0
    while True:
        g1, g2 = np.meshgrid(np.linspace(lo[0], hi[0], coarse), np.linspace(lo[1], hi[1], coarse))
        etas = np.stack([g1.ravel(), g2.ravel()], axis=1)
        power = etas @ problem.power_coeff.T + problem.noise_power_coeff * sigma**2
        ok = np.all(power <= problem.power_budget, axis=1)
        if problem.fronthaul_capacity < math.inf:
            for m in range(problem.num_bs):
                S = np.einsum("rk,nk,sk->nrs", F[m], etas, F[m].conj())
                _, logdet = np.linalg.slogdet(np.eye(F.shape[1]) + S / sigma[m] ** 2)
                ok &= logdet / math.log(2) <= problem.fronthaul_capacity
        denom = (rho * (1 - rho) * etas @ problem.coupling.T
                 + (1 - rho) * (problem.gains @ sigma**2) + noise)
        t = np.where(ok, ((1 - rho) ** 2 * etas / denom).min(axis=1), -1.0)
        i = int(np.argmax(t))
        if t[i] > best_t:
            best, best_t = etas[i], float(t[i])
        step = (hi - lo) / (coarse - 1)
        if np.all(step <= tol * upper):
            return best_t
        lo = np.maximum(best - 4 * step, 0.0)
        hi = np.minimum(best + 4 * step, upper)
