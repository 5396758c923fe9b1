"""Max-min SQNR power allocation under per-BS power and fronthaul-rate limits.

The cell-free ZF precoder fixes the beam directions; what remains is the
user power coefficients ``eta`` (one per user, shared by all base stations)
and the per-BS fronthaul compression noise deviations ``sigma``. The problem

    maximize min_k SQNR_k(eta, sigma)  s.t.  P_m <= P,  C_m <= C

is solved by alternating between

* ``eta`` for fixed ``sigma``: bisection on the target ``t``. For a given
  ``t`` the equalities ``SQNR_k = t`` are K linear equations in ``eta``; the
  target is feasible iff their solution is non-negative and meets both the
  power and the fronthaul-rate limits (the equality solution is elementwise
  minimal among all ``eta`` reaching ``t``, and power and rate are monotone).
* ``sigma`` for fixed ``eta``: every ``sigma_m`` is lowered until its
  fronthaul rate equals ``C``, which can only help the objective.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, InfiniteRateError, InitializationError, NumericalError
from .precode import EffectiveChannel, PrecoderSet
from .quantize import QuantizationModel

logger = logging.getLogger(__name__)

#: Relative slack on the power and rate checks of a candidate allocation.
CHECK_SLACK = 1e-12


@dataclass(frozen=True)
class SolverSettings:
    bisection_tol: float = 1e-6
    ao_tol: float = 1e-7
    sigma_tol: float = 1e-9
    max_bisection_iters: int = 200
    max_ao_iters: int = 100
    max_root_iters: int = 200

    def __post_init__(self):
        for name in ("bisection_tol", "ao_tol", "sigma_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("max_bisection_iters", "max_ao_iters", "max_root_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")


@dataclass
class Allocation:
    eta: np.ndarray  # (K,)
    sigma: np.ndarray  # (M,)
    target: float


@dataclass
class AOStep:
    """One alternating-optimization iteration, recorded after the sigma update."""

    t: float
    max_power: float
    max_rate: float
    sigma: np.ndarray


@dataclass
class EtaSolution:
    """Outcome of one feasibility test; ``failed`` names the violated check."""

    eta: np.ndarray | None
    feasible: bool
    failed: str | None = None


# --- evaluators ---------------------------------------------------------------

def coupling_matrix(effective: EffectiveChannel, precoders: PrecoderSet) -> np.ndarray:
    """``u[k, i] = sum_j |h_k[j]|^2 |F[j, i]|^2`` over all M * N_RF coordinates."""
    return np.abs(effective.stacked) ** 2 @ np.abs(precoders.full) ** 2


def link_gains(effective: EffectiveChannel) -> np.ndarray:
    """``|h_{k,m}|^2`` as a (K, M) array."""
    return np.sum(np.abs(effective.per_link) ** 2, axis=2)


def _sqnr(eta, sigma, coupling, gains, rho, awgn_var):
    eta = np.asarray(eta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    denom = rho * (1 - rho) * (coupling @ eta) + (1 - rho) * (gains @ sigma**2) + awgn_var
    return (1 - rho) ** 2 * eta / denom


def sqnr_all(eta, sigma, effective: EffectiveChannel, precoders: PrecoderSet,
             quant: QuantizationModel) -> np.ndarray:
    """SQNR of every user under ZF precoding (no inter-user interference)."""
    return _sqnr(eta, sigma, coupling_matrix(effective, precoders), link_gains(effective),
                 quant.rho, effective.awgn_var)


def fronthaul_rate(eta, sigma_m: float, F_m) -> float:
    """``log2 det(I + F_m diag(eta) F_m^H / sigma_m^2)`` via eigenvalues."""
    F_m = np.asarray(F_m)
    S = (F_m * np.asarray(eta, dtype=float)) @ F_m.conj().T
    lam = np.clip(np.linalg.eigvalsh(S), 0.0, None)
    if sigma_m == 0:
        if np.any(lam > 0):
            raise InfiniteRateError("zero compression noise with a nonzero fronthaul signal")
        return 0.0
    return float(np.sum(np.log2(1 + lam / sigma_m**2)))


def _is_zero_signal(lam, eta, F_m) -> bool:
    scale = float(np.max(eta, initial=0.0)) * float(np.sum(np.abs(F_m) ** 2))
    return scale == 0 or float(np.max(lam, initial=0.0)) <= 1e-15 * scale


def solve_sigma_for_capacity(F_m, eta, capacity: float,
                             settings: SolverSettings = SolverSettings()) -> float:
    """Compression noise deviation at which the fronthaul rate equals ``capacity``.

    Newton's method on the precision ``v = 1 / sigma^2``: the rate
    ``sum_i log2(1 + lam_i v)`` is concave and increasing in ``v``, so Newton
    steps approach the root from below and the returned ``sigma`` overshoots
    the rate limit by rounding error at most. Steps leaving the bracket fall back to
    geometric bisection. The bracket comes from bounding the sum by its
    largest eigenvalue term.
    """
    if not capacity > 0:
        raise NumericalError("fronthaul capacity must be positive")
    F_m = np.asarray(F_m)
    eta = np.asarray(eta, dtype=float)
    lam = np.clip(np.linalg.eigvalsh((F_m * eta) @ F_m.conj().T), 0.0, None)
    if _is_zero_signal(lam, eta, F_m):
        return 0.0
    if capacity == math.inf:
        return 0.0
    lam = lam[lam > 0]

    def rate(v):
        return float(np.sum(np.log2(1 + lam * v)))

    def slope(v):
        return float(np.sum(lam / (1 + lam * v))) / math.log(2)

    # n log2(1 + lam_max v) >= rate(v) >= log2(1 + lam_max v) brackets the root
    try:
        v_hi = math.expm1(capacity * math.log(2)) / lam.max()
    except OverflowError:
        raise NumericalError(f"fronthaul capacity {capacity} is beyond double precision") from None
    v_lo = math.expm1(capacity * math.log(2) / lam.size) / lam.max()
    if not (math.isfinite(v_hi) and v_lo > 0):
        raise NumericalError(f"could not bracket the fronthaul rate {capacity}")

    v = v_lo
    for _ in range(settings.max_root_iters):
        gap = capacity - rate(v)
        if gap <= settings.sigma_tol:
            break
        nxt = v + gap / slope(v)
        if not v_lo <= nxt < v_hi:
            nxt = math.sqrt(v_lo * v_hi) if v_lo > 0 else 0.5 * v_hi
        if rate(nxt) > capacity:
            v_hi = nxt
        else:
            v_lo = v = nxt
    else:
        raise NumericalError(f"fronthaul rate root not found within {settings.max_root_iters} iterations")

    # polishing steps; concavity keeps the rate at or below capacity up to rounding
    rounding = 1e-13 * max(1.0, capacity)
    for _ in range(3):
        nxt = v + (capacity - rate(v)) / slope(v)
        if nxt <= v or rate(nxt) > capacity + rounding:
            break
        v = nxt
    return 1.0 / math.sqrt(v)


# --- the problem instance -------------------------------------------------------

@dataclass
class MaxMinProblem:
    """Fixed data of one max-min allocation problem.

    The power of base station ``m`` is linear in ``eta`` and ``sigma_m^2``:
    ``P_m = power_coeff[m] @ eta + noise_power_coeff[m] * sigma_m^2``.
    """

    effective: EffectiveChannel
    precoders: PrecoderSet
    bs_precoders: np.ndarray  # (M, N_BS, N_RF)
    quant: QuantizationModel
    power_budget: float
    fronthaul_capacity: float = math.inf

    @property
    def rho(self) -> float:
        return self.quant.rho

    @property
    def num_users(self) -> int:
        return self.effective.num_users

    @property
    def num_bs(self) -> int:
        return self.effective.num_bs

    @cached_property
    def coupling(self) -> np.ndarray:
        return coupling_matrix(self.effective, self.precoders)

    @cached_property
    def gains(self) -> np.ndarray:
        return link_gains(self.effective)

    @cached_property
    def power_coeff(self) -> np.ndarray:
        rho = self.rho
        F = self.precoders.blocks
        W = self.bs_precoders
        beam = np.sum(np.abs(np.einsum("mbr,mrk->mbk", W, F)) ** 2, axis=1)
        col = np.sum(np.abs(W) ** 2, axis=1)  # (M, N_RF)
        spread = np.einsum("mr,mrk->mk", col, np.abs(F) ** 2)
        return (1 - rho) ** 2 * beam + rho * (1 - rho) * spread

    @cached_property
    def noise_power_coeff(self) -> np.ndarray:
        return (1 - self.rho) * np.sum(np.abs(self.bs_precoders) ** 2, axis=(1, 2))

    def sqnr(self, eta, sigma) -> np.ndarray:
        return _sqnr(eta, sigma, self.coupling, self.gains, self.rho, self.effective.awgn_var)

    def bs_powers(self, eta, sigma) -> np.ndarray:
        return self.power_coeff @ np.asarray(eta, dtype=float) + self.noise_power_coeff * np.asarray(sigma) ** 2

    def fronthaul_rates(self, eta, sigma) -> np.ndarray:
        F = self.precoders.blocks
        out = np.empty(self.num_bs)
        for m in range(self.num_bs):
            try:
                out[m] = fronthaul_rate(eta, float(sigma[m]), F[m])
            except InfiniteRateError:
                out[m] = math.inf
        return out

    def solve_eta_for_target(self, t: float, sigma) -> EtaSolution:
        """Equality solution of ``SQNR_k(eta, sigma) = t`` and its feasibility."""
        rho, K = self.rho, self.num_users
        sigma = np.asarray(sigma, dtype=float)
        A = (1 - rho) ** 2 * np.eye(K) - t * rho * (1 - rho) * self.coupling
        b = t * ((1 - rho) * (self.gains @ sigma**2) + self.effective.awgn_var)
        if np.linalg.cond(A) > 1e12:
            return EtaSolution(None, False, "singular")
        eta = np.linalg.solve(A, b)
        if np.any(eta < 0):
            return EtaSolution(eta, False, "negative")
        eta = np.maximum(eta, 0.0)
        if np.any(self.bs_powers(eta, sigma) > self.power_budget * (1 + CHECK_SLACK)):
            return EtaSolution(eta, False, "power")
        if self.fronthaul_capacity < math.inf:
            if np.any(self.fronthaul_rates(eta, sigma) > self.fronthaul_capacity * (1 + CHECK_SLACK)):
                return EtaSolution(eta, False, "fronthaul")
        return EtaSolution(eta, True)

    def bisection_eta(self, sigma, settings: SolverSettings = SolverSettings(),
                      t_start: float = 0.0) -> tuple[np.ndarray, float]:
        """Largest common SQNR target reachable for fixed ``sigma``.

        ``t_start`` is a target already known to be feasible (used as the
        lower bracket when it checks out). Returns the last feasible
        ``(eta, t_lo)``.
        """
        zero = self.solve_eta_for_target(0.0, sigma)
        if not zero.feasible:
            raise InitializationError(
                f"compression noise alone violates the power budget ({zero.failed})")
        t_lo, eta_lo = 0.0, zero.eta
        if t_start > 0:
            warm = self.solve_eta_for_target(t_start, sigma)
            if warm.feasible:
                t_lo, eta_lo = t_start, warm.eta

        t_hi = max(1.0, t_lo)
        for _ in range(61):
            trial = self.solve_eta_for_target(t_hi, sigma)
            if not trial.feasible:
                break
            t_lo, eta_lo = t_hi, trial.eta
            t_hi *= 2
        else:
            raise NumericalError("SQNR target unbounded after 60 doublings")

        for _ in range(settings.max_bisection_iters):
            if t_hi - t_lo <= settings.bisection_tol * max(1.0, t_lo):
                break
            t_mid = 0.5 * (t_lo + t_hi)
            trial = self.solve_eta_for_target(t_mid, sigma)
            if trial.feasible:
                t_lo, eta_lo = t_mid, trial.eta
            else:
                t_hi = t_mid
        return eta_lo, t_lo

    def initial_sigma(self, settings: SolverSettings = SolverSettings()) -> np.ndarray:
        """Starting compression noise for alternating optimization.

        Uniform ``eta`` using half the power budget at the most loaded base
        station, the matching capacity-equality ``sigma``, then capped so the
        compression noise alone consumes at most a quarter of the budget.
        """
        M = self.num_bs
        if self.fronthaul_capacity == math.inf:
            return np.zeros(M)
        load = self.power_coeff.sum(axis=1).max()
        eta0 = np.full(self.num_users, 0.5 * self.power_budget / load)
        F = self.precoders.blocks
        sigma = np.array([solve_sigma_for_capacity(F[m], eta0, self.fronthaul_capacity, settings)
                          for m in range(M)])
        cap = 0.5 * np.sqrt(self.power_budget / self.noise_power_coeff)
        return np.minimum(sigma, cap)

    def ao_solve(self, settings: SolverSettings = SolverSettings()) -> tuple[Allocation, list[AOStep]]:
        """Alternating optimization of ``eta`` and ``sigma``.

        The recorded targets never decrease and every ``sigma_m`` never
        increases across iterations.
        """
        F = self.precoders.blocks
        sigma = self.initial_sigma(settings)
        trace: list[AOStep] = []
        t_prev = 0.0
        eta = np.zeros(self.num_users)
        for it in range(settings.max_ao_iters):
            eta, t = self.bisection_eta(sigma, settings, t_start=t_prev)
            if self.fronthaul_capacity < math.inf:
                new = np.array([solve_sigma_for_capacity(F[m], eta, self.fronthaul_capacity, settings)
                                for m in range(self.num_bs)])
                sigma = np.minimum(new, sigma)
            trace.append(AOStep(t, float(self.bs_powers(eta, sigma).max()),
                                float(self.fronthaul_rates(eta, sigma).max()), sigma.copy()))
            logger.debug("AO iteration %d: t=%.9g", it, t)
            if self.fronthaul_capacity == math.inf:
                break
            if it > 0 and t - t_prev <= settings.ao_tol * max(1.0, t):
                break
            t_prev = t
        target = float(np.min(self.sqnr(eta, sigma)))
        return Allocation(eta, sigma, target), trace


def ao_solve(effective: EffectiveChannel, precoders: PrecoderSet, bs_precoders, quant: QuantizationModel,
             power_budget: float, fronthaul_capacity: float,
             settings: SolverSettings = SolverSettings()) -> tuple[Allocation, list[AOStep]]:
    problem = MaxMinProblem(effective, precoders, np.asarray(bs_precoders), quant,
                            power_budget, fronthaul_capacity)
    return problem.ao_solve(settings)
