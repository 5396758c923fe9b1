"""Multipath mmWave channels over a planar deployment and fixed RF stage design.

Channels are sums of rank-one path contributions between uniform planar arrays.
The RF combiners of the users and the RF precoders of the base stations are
built from singular vectors and then forced onto the constant-modulus set by
alternating projection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, DegenerateChannelError, DegenerateProjectionError,
                     InvalidGeometryError)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array; ``spacing`` is in carrier wavelengths."""

    n_horizontal: int
    n_vertical: int = 1
    spacing: float = 0.5

    def __post_init__(self):
        if int(self.n_horizontal) < 1 or int(self.n_vertical) < 1:
            raise InvalidGeometryError(
                f"array dimensions must be positive, got {self.n_horizontal}x{self.n_vertical}")
        if not self.spacing > 0:
            raise InvalidGeometryError(f"element spacing must be positive, got {self.spacing}")

    @property
    def size(self) -> int:
        return self.n_horizontal * self.n_vertical


@dataclass(frozen=True)
class PathParams:
    gain: complex
    aoa_azimuth: float
    aoa_elevation: float
    aod_azimuth: float
    aod_elevation: float


@dataclass
class ChannelRealization:
    """Path parameters and assembled channel matrices of one drop.

    All path arrays have shape ``(K, M, L)``; ``matrices`` has shape
    ``(K, M, N_UE, N_BS)`` with ``matrices[k, m]`` the channel from base
    station ``m`` to user ``k``.
    """

    gains: np.ndarray
    aoa_azimuth: np.ndarray
    aoa_elevation: np.ndarray
    aod_azimuth: np.ndarray
    aod_elevation: np.ndarray
    matrices: np.ndarray
    bs_positions: np.ndarray
    ue_positions: np.ndarray

    @property
    def num_users(self) -> int:
        return self.matrices.shape[0]

    @property
    def num_bs(self) -> int:
        return self.matrices.shape[1]

    def paths(self, k: int, m: int) -> list[PathParams]:
        return [
            PathParams(complex(self.gains[k, m, l]), float(self.aoa_azimuth[k, m, l]),
                       float(self.aoa_elevation[k, m, l]), float(self.aod_azimuth[k, m, l]),
                       float(self.aod_elevation[k, m, l]))
            for l in range(self.gains.shape[2])
        ]


@dataclass
class Assignment:
    """User/base-station association.

    ``nearest[k]`` is the geometrically nearest base station of user ``k``;
    ``serving[m]`` holds the users of base station ``m`` under the
    capacity-constrained greedy rule (exactly K/M each).
    """

    nearest: np.ndarray
    serving: list[np.ndarray]


@dataclass
class RfChains:
    bs_precoders: np.ndarray  # (M, N_BS, N_RF)
    ue_combiners: np.ndarray  # (K, N_UE)
    warnings: list[str] = field(default_factory=list)


def upa_response(geometry: ArrayGeometry, azimuth, elevation) -> np.ndarray:
    """Unit-modulus array response of a UPA.

    Element ``(p, q)`` (column ``p``, row ``q``) carries the phase
    ``2*pi*spacing*(p*sin(el)*sin(az) + q*cos(el))``; elements are flattened
    row-major over ``(q, p)``. Array-valued angles broadcast and add a
    trailing axis of length ``n_h * n_v``.
    """
    az = np.asarray(azimuth, dtype=float)[..., None]
    el = np.asarray(elevation, dtype=float)[..., None]
    q, p = np.divmod(np.arange(geometry.size), geometry.n_horizontal)
    phase = 2 * np.pi * geometry.spacing * (p * np.sin(el) * np.sin(az) + q * np.cos(el))
    return np.exp(1j * phase)


def hex_grid(num_sites: int, isd: float) -> np.ndarray:
    """The ``num_sites`` hexagonal lattice points closest to the origin.

    Ties in distance are broken by polar angle so the layout is deterministic.
    """
    radius = int(np.ceil(np.sqrt(num_sites))) + 1
    i, j = np.meshgrid(np.arange(-radius, radius + 1), np.arange(-radius, radius + 1))
    i, j = i.ravel(), j.ravel()
    pts = np.stack([i + 0.5 * j, (np.sqrt(3) / 2) * j], axis=1) * isd
    dist = np.round(np.hypot(pts[:, 0], pts[:, 1]) / isd, 9)
    angle = np.round(np.arctan2(pts[:, 1], pts[:, 0]), 9)
    order = np.lexsort((angle, dist))
    return pts[order[:num_sites]]


def in_hex_cells(points, bs_positions, isd: float) -> np.ndarray:
    """Whether each point lies in the hexagonal cell of some base station."""
    angles = np.arange(6) * np.pi / 3
    normals = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    rel = points[:, None, :] - bs_positions[None, :, :]
    return np.any(np.max(rel @ normals.T, axis=-1) <= isd / 2, axis=1)


def drop_users(bs_positions, num_users: int, isd: float, rng: np.random.Generator,
               area: str = "hex-cells") -> np.ndarray:
    """Uniform user positions.

    ``"hex-cells"`` draws over the union of the base stations' hexagonal
    cells (rejection sampling from the bounding box); ``"bounding-box"``
    draws over the grid's bounding box padded by half an ISD.
    """
    lo = bs_positions.min(axis=0) - isd / 2
    hi = bs_positions.max(axis=0) + isd / 2
    if area == "bounding-box":
        return lo + (hi - lo) * rng.random((num_users, 2))
    if area != "hex-cells":
        raise ConfigError(f"unknown user area {area!r}")
    out = np.empty((0, 2))
    while len(out) < num_users:
        cand = lo + (hi - lo) * rng.random((2 * num_users, 2))
        out = np.concatenate([out, cand[in_hex_cells(cand, bs_positions, isd)]])
    return out[:num_users]


def pathloss_db(distance, pl0_db: float, exponent: float, ref_distance: float):
    d = np.maximum(np.asarray(distance, dtype=float), ref_distance)
    return pl0_db + 10 * exponent * np.log10(d / ref_distance)


def assemble_channel(gains, aoa_az, aoa_el, aod_az, aod_el,
                     ue_array: ArrayGeometry, bs_array: ArrayGeometry) -> np.ndarray:
    """Sum of ``g * a_UE * a_BS^H`` over the last (path) axis."""
    a_ue = upa_response(ue_array, aoa_az, aoa_el)
    a_bs = upa_response(bs_array, aod_az, aod_el)
    return np.einsum("...l,...lu,...lb->...ub", gains, a_ue, a_bs.conj())


def draw_channel(config, rng: np.random.Generator) -> ChannelRealization:
    """Draw one deployment and its multipath channels.

    Base stations sit on a hexagonal grid with the configured inter-site
    distance and users are dropped by :func:`drop_users`. Every link has ``paths_per_link`` paths with uniform angles and
    CN(0, 10^(-PL/10) / L) gains.
    """
    M, K, L = config.num_bs, config.num_users, config.paths_per_link
    bs = hex_grid(M, config.isd_m)
    ue = drop_users(bs, K, config.isd_m, rng, config.user_area)

    dist = np.linalg.norm(ue[:, None, :] - bs[None, :, :], axis=-1)
    pl = pathloss_db(dist, config.pathloss_ref_db, config.pathloss_exponent,
                     config.ref_distance_m)
    scale = np.sqrt(10 ** (-pl / 10) / L)[..., None]
    gains = scale * (rng.standard_normal((K, M, L)) + 1j * rng.standard_normal((K, M, L))) / np.sqrt(2)

    aoa_az = rng.uniform(-np.pi, np.pi, (K, M, L))
    aoa_el = rng.uniform(0, np.pi, (K, M, L))
    aod_az = rng.uniform(-np.pi, np.pi, (K, M, L))
    aod_el = rng.uniform(0, np.pi, (K, M, L))

    H = assemble_channel(gains, aoa_az, aoa_el, aod_az, aod_el, config.ue_array, config.bs_array)
    return ChannelRealization(gains, aoa_az, aoa_el, aod_az, aod_el, H, bs, ue)


def nearest_bs_assignment(bs_positions, ue_positions) -> Assignment:
    """Nearest-BS map plus greedy capacity-constrained serving sets.

    Users are visited in increasing distance to their nearest base station
    and placed at the closest base station that still has room for K/M users.
    """
    bs = np.atleast_2d(np.asarray(bs_positions, dtype=float))
    ue = np.atleast_2d(np.asarray(ue_positions, dtype=float))
    M, K = len(bs), len(ue)
    if K % M:
        raise ConfigError(f"number of users ({K}) must be divisible by number of base stations ({M})")
    cap = K // M
    dist = np.linalg.norm(ue[:, None, :] - bs[None, :, :], axis=-1)
    nearest = np.argmin(dist, axis=1)

    load = np.zeros(M, dtype=int)
    serving: list[list[int]] = [[] for _ in range(M)]
    for k in np.argsort(dist[np.arange(K), nearest], kind="stable"):
        for m in np.argsort(dist[k], kind="stable"):
            if load[m] < cap:
                serving[m].append(int(k))
                load[m] += 1
                break
    return Assignment(nearest, [np.array(sorted(s), dtype=int) for s in serving])


def _fix_phase(X):
    """Rotate each column so its first nonzero entry is real and positive."""
    X = np.array(X, dtype=complex)
    cols = X if X.ndim == 2 else X[:, None]
    for c in range(cols.shape[1]):
        nz = np.flatnonzero(np.abs(cols[:, c]) > 0)
        if nz.size:
            v = cols[nz[0], c]
            cols[:, c] *= np.conj(v) / abs(v)
    return X


def project_constant_modulus(X, target_modulus: float) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    mag = np.abs(X)
    out = np.full(X.shape, target_modulus, dtype=complex)
    nz = mag > 0
    out[nz] = target_modulus * X[nz] / mag[nz]
    return out


def project_semi_unitary(X, rcond: float = 1e-12) -> np.ndarray:
    """Nearest matrix with orthonormal columns (polar factor ``U V^H``)."""
    X = np.asarray(X, dtype=complex)
    vector = X.ndim == 1
    if vector:
        X = X[:, None]
    n, r = X.shape
    if n < r:
        raise DegenerateProjectionError(f"cannot make a {n}x{r} matrix semi-unitary")
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0 or s[-1] <= rcond * s[0]:
        raise DegenerateProjectionError(f"rank-deficient input (singular values {s})")
    Y = U @ Vh
    return Y[:, 0] if vector else Y


def alternating_projection(X0, target_modulus: float, max_iters: int = 200, tol: float = 1e-8,
                           trace: list | None = None) -> np.ndarray:
    """Alternate constant-modulus and semi-unitary projections.

    Returns the last constant-modulus iterate. When ``trace`` is given, the
    distances ``|CM_i - SU_i|_F`` and ``|SU_i - CM_{i+1}|_F`` are appended in
    the order they occur; for alternating projections this sequence never
    increases.
    """
    su = np.asarray(X0, dtype=complex)
    cm = project_constant_modulus(su, target_modulus)
    for _ in range(max_iters):
        if trace is not None:
            trace.append(np.linalg.norm(cm - su))
        su = project_semi_unitary(cm)
        if trace is not None:
            trace.append(np.linalg.norm(cm - su))
        nxt = project_constant_modulus(su, target_modulus)
        step = np.linalg.norm(nxt - cm)
        cm = nxt
        if step <= tol:
            break
    return cm


def design_combiners(channel: ChannelRealization, nearest, max_iters: int = 200,
                     tol: float = 1e-8) -> np.ndarray:
    """Constant-modulus RF combiners, one row per user, each of unit norm."""
    K = channel.num_users
    n_ue = channel.matrices.shape[2]
    out = np.empty((K, n_ue), dtype=complex)
    for k in range(K):
        H = channel.matrices[k, nearest[k]]
        U, s, _ = np.linalg.svd(H)
        if s[0] == 0:
            raise DegenerateChannelError(f"channel of user {k} to base station {nearest[k]} is zero")
        out[k] = alternating_projection(_fix_phase(U[:, 0]), 1 / np.sqrt(n_ue), max_iters, tol)
    return out


def design_rf_precoders(channel: ChannelRealization, combiners, serving, n_rf: int,
                        max_iters: int = 200, tol: float = 1e-8,
                        warnings: list | None = None) -> np.ndarray:
    """Constant-modulus RF precoders of shape ``(M, N_BS, N_RF)``.

    Each base station takes the top ``n_rf`` right singular vectors of the
    matrix whose rows are ``w_k^H H_{k,m}`` over its served users. If that
    matrix has rank below ``n_rf`` the remaining columns come from the
    null-space singular vectors and a warning record is appended.
    """
    M = channel.num_bs
    n_bs = channel.matrices.shape[3]
    out = np.empty((M, n_bs, n_rf), dtype=complex)
    for m in range(M):
        users = np.asarray(serving[m])
        G = np.einsum("ku,kub->kb", combiners[users].conj(), channel.matrices[users, m])
        _, s, Vh = np.linalg.svd(G, full_matrices=True)
        rank = int(np.sum(s > s.max(initial=0.0) * max(G.shape) * np.finfo(float).eps)) if s.size else 0
        if rank < n_rf:
            msg = f"base station {m}: effective RF channel rank {rank} < N_RF={n_rf}, padded with null-space vectors"
            logger.debug(msg)
            if warnings is not None:
                warnings.append(msg)
        V = _fix_phase(Vh.conj().T[:, :n_rf])
        out[m] = alternating_projection(V, 1 / np.sqrt(n_bs), max_iters, tol)
    return out


def design_rf_chains(channel: ChannelRealization, assignment: Assignment, n_rf: int,
                     max_iters: int = 200, tol: float = 1e-8) -> RfChains:
    notes: list[str] = []
    w = design_combiners(channel, assignment.nearest, max_iters, tol)
    W = design_rf_precoders(channel, w, assignment.serving, n_rf, max_iters, tol, notes)
    return RfChains(W, w, notes)
