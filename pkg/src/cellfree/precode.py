"""Effective channels, baseband precoders and the generic rate-bound evaluator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, RfChains
from .errors import DegenerateChannelError, DomainError, PrecoderSingularError
from .quantize import QuantizationModel, aggregate_noise_cov, rate_lower_bound, stacked_noise_cov

KINDS = ("cellfree-zf", "smallcell-mrt", "smallcell-zf", "smallcell-rzf")

#: Gram matrices with a larger condition number are rejected.
MAX_CONDITION = 1e12


@dataclass
class EffectiveChannel:
    """Baseband channel seen through the fixed RF stages.

    ``per_link[k, m]`` is ``h_{k,m} = W_m^H H_{k,m}^H w_k`` (length N_RF) and
    row ``k`` of ``stacked`` is ``[h_{k,1}^H ... h_{k,M}^H]``.
    """

    per_link: np.ndarray  # (K, M, N_RF)
    stacked: np.ndarray  # (K, M * N_RF)
    awgn_var: float

    @classmethod
    def from_links(cls, per_link, awgn_var: float) -> "EffectiveChannel":
        per_link = np.asarray(per_link, dtype=complex)
        K = per_link.shape[0]
        return cls(per_link, per_link.conj().reshape(K, -1), float(awgn_var))

    @property
    def num_users(self) -> int:
        return self.per_link.shape[0]

    @property
    def num_bs(self) -> int:
        return self.per_link.shape[1]

    @property
    def n_rf(self) -> int:
        return self.per_link.shape[2]


@dataclass
class PrecoderSet:
    full: np.ndarray  # (M * N_RF, K)
    num_bs: int
    kind: str = "cellfree-zf"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown precoder kind {self.kind!r}")

    @property
    def blocks(self) -> np.ndarray:
        """``F_m`` of shape ``(M, N_RF, K)``; a view into ``full``."""
        return self.full.reshape(self.num_bs, -1, self.full.shape[1])


def effective_channel(channel: ChannelRealization, rf: RfChains, awgn_var: float) -> EffectiveChannel:
    # conj(h_{k,m}) = W_m^T conj(H_{k,m}^H w_k) = W_m^T H_{k,m}^T conj(w_k)
    h_conj = np.einsum("mbr,kmub,ku->kmr", rf.bs_precoders, channel.matrices,
                       rf.ue_combiners.conj())
    return EffectiveChannel.from_links(h_conj.conj(), awgn_var)


def _right_inverse(H: np.ndarray, what: str) -> np.ndarray:
    """Minimum-norm right inverse ``H^H (H H^H)^{-1}``, SVD route when poorly conditioned."""
    K, N = H.shape
    if K > N:
        raise PrecoderSingularError(f"{what}: {K} users exceed {N} transmit dimensions")
    gram = H @ H.conj().T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise PrecoderSingularError(f"{what}: channel Gram matrix is singular (condition number {cond:.3g})")
    if cond < 1e8:
        return H.conj().T @ np.linalg.solve(gram, np.eye(K))
    return np.linalg.pinv(H)


def zf_precoder(effective: EffectiveChannel, label: str = "realization") -> PrecoderSet:
    F = _right_inverse(effective.stacked, label)
    return PrecoderSet(F, effective.num_bs, "cellfree-zf")


def smallcell_precoders(effective: EffectiveChannel, serving, kind: str,
                        regularization: float = 0.0) -> PrecoderSet:
    """Per-BS MRT / ZF / RZF over the served users; other users get zero columns."""
    if kind not in KINDS[1:]:
        raise DomainError(f"not a small-cell precoder kind: {kind!r}")
    if regularization < 0:
        raise DomainError("regularization must be non-negative")
    K, M, R = effective.per_link.shape
    blocks = np.zeros((M, R, K), dtype=complex)
    for m in range(M):
        users = np.asarray(serving[m])
        H_loc = effective.per_link[users, m].conj()  # rows h_{k,m}^H
        if kind == "smallcell-mrt":
            F_loc = H_loc.conj().T
        elif kind == "smallcell-zf":
            F_loc = _right_inverse(H_loc, f"base station {m}")
        else:
            gram = H_loc @ H_loc.conj().T + regularization * np.eye(len(users))
            F_loc = H_loc.conj().T @ np.linalg.inv(gram)
        blocks[m][:, users] = F_loc
    return PrecoderSet(blocks.reshape(M * R, K), M, kind)


def _as_bs_eta(eta, M: int, K: int) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        eta = np.broadcast_to(eta, (M, K))
    if eta.shape != (M, K):
        raise DomainError(f"power coefficients must have shape (K,) or (M, K), got {eta.shape}")
    if np.any(eta < 0):
        raise DomainError("power coefficients must be non-negative")
    return eta


def general_sinqr(effective: EffectiveChannel, precoders: PrecoderSet, eta, sigma,
                  quant: QuantizationModel) -> np.ndarray:
    """Signal to interference-plus-quantization-plus-noise ratio of every user.

    Works for arbitrary precoders and per-(m, k) power coefficients ``eta``;
    the quantization noise is treated as Gaussian with the covariance of the
    linearized DAC model.
    """
    K, M, R = effective.per_link.shape
    eta = _as_bs_eta(eta, M, K)
    sigma = np.asarray(sigma, dtype=float)
    rho = quant.rho
    F = precoders.blocks
    # amplitude[k, i] = sum_m h_{k,m}^H f_{m,i} sqrt(eta_{m,i})
    amplitude = effective.stacked @ (F * np.sqrt(eta)[:, None, :]).reshape(M * R, K)
    power = (1 - rho) ** 2 * np.abs(amplitude) ** 2
    desired = np.diag(power)
    interference = power.sum(axis=1) - desired
    Cq = stacked_noise_cov([aggregate_noise_cov(F[m], eta[m], sigma[m], rho) for m in range(M)])
    H = effective.stacked
    quant_noise = np.real(np.einsum("kj,jl,kl->k", H, Cq, H.conj()))
    return desired / (interference + quant_noise + effective.awgn_var)


def general_rate_bounds(effective, precoders, eta, sigma, quant) -> np.ndarray:
    return rate_lower_bound(general_sinqr(effective, precoders, eta, sigma, quant))


def bs_power(eta, sigma_m: float, W_m, F_m, quant: QuantizationModel) -> float:
    """Transmit power of one base station after the RF precoder.

    Sum of the precoded-signal, DAC-distortion and compressed-fronthaul-noise
    terms; ``eta`` is the length-K vector of power coefficients used at this
    base station.
    """
    rho = quant.rho
    W_m = np.asarray(W_m)
    F_m = np.asarray(F_m)
    S = F_m @ np.diag(np.asarray(eta, dtype=float)) @ F_m.conj().T
    signal = np.trace(W_m @ S @ W_m.conj().T)
    distortion = np.trace(W_m @ np.diag(np.diag(S)) @ W_m.conj().T)
    noise = sigma_m**2 * np.trace(W_m @ W_m.conj().T)
    return float(np.real((1 - rho) ** 2 * signal + rho * (1 - rho) * distortion + (1 - rho) * noise))


def smallcell_full_power_scaling(precoders: PrecoderSet, rf: RfChains, serving,
                                 quant: QuantizationModel, power: float) -> np.ndarray:
    """Common per-BS power coefficient that makes every base station transmit ``power``.

    Returns the ``(M, K)`` coefficients; users not served by a base station get 0.
    """
    F = precoders.blocks
    M, _, K = F.shape
    eta = np.zeros((M, K))
    for m in range(M):
        unit = np.zeros(K)
        unit[np.asarray(serving[m])] = 1.0
        p_unit = bs_power(unit, 0.0, rf.bs_precoders[m], F[m], quant)
        if p_unit <= 0:
            raise DegenerateChannelError(f"base station {m} has a zero precoder")
        eta[m] = unit * (power / p_unit)
    return eta
