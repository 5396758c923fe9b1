"""Scenario, hardware and solver configuration.

Config files are JSON or YAML documents whose keys are exactly the field names
below; nested sections (``bs_array``, ``ue_array``, ``solver``,
``power_model``) are mappings. ``bits`` and ``fronthaul_bpshz`` accept
``"inf"``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import ArrayGeometry
from .errors import ConfigError
from .maxmin import SolverSettings

MODES = ("cellfree", "smallcell-mrt", "smallcell-zf", "smallcell-rzf")
USER_AREAS = ("hex-cells", "bounding-box")


def dbm_to_watts(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


@dataclass(frozen=True)
class PowerModel:
    """Power consumption constants; DAC power per converter is ``a 2^B + b B``."""

    pa_efficiency: float = 0.4
    p_rf_chain: float = 0.2
    dac_coeff_exp: float = 1e-4
    dac_coeff_lin: float = 1e-3
    p_fixed_bs: float = 1.0
    fronthaul_watts_per_bpshz: float = 0.02
    bits_inf_cap: int = 12

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"power_model.{f.name} must be non-negative")
        if not 0 < self.pa_efficiency <= 1:
            raise ConfigError("power_model.pa_efficiency must lie in (0, 1]")


@dataclass(frozen=True)
class SystemConfig:
    num_bs: int = 4
    num_users: int = 8
    bs_array: ArrayGeometry = ArrayGeometry(4, 4, 0.5)
    n_rf: int = 4
    ue_array: ArrayGeometry = ArrayGeometry(2, 1, 0.5)
    carrier_hz: float = 30e9
    bandwidth_hz: float = 80e6
    tx_power_w: float = dbm_to_watts(33.0)
    noise_psd_w_per_hz: float = dbm_to_watts(-174.0)
    isd_m: float = 200.0
    user_area: str = "hex-cells"
    paths_per_link: int = 4
    pathloss_ref_db: float = 61.4
    pathloss_exponent: float = 2.8
    ref_distance_m: float = 1.0
    bits: float = 4
    fronthaul_bpshz: float = 64.0
    mode: str = "cellfree"
    rzf_alpha: float | None = None
    seed: int = 0
    trials: int = 50
    workers: int = 1
    solver: SolverSettings = field(default_factory=SolverSettings)
    power_model: PowerModel = field(default_factory=PowerModel)

    def __post_init__(self):
        M, K = self.num_bs, self.num_users
        if M < 1 or K < 1:
            raise ConfigError("num_bs and num_users must be positive")
        if K % M:
            raise ConfigError(f"num_users ({K}) must be divisible by num_bs ({M})")
        if not 1 <= self.n_rf <= self.bs_array.size:
            raise ConfigError(f"n_rf must lie in [1, {self.bs_array.size}]")
        if self.user_area not in USER_AREAS:
            raise ConfigError(f"user_area must be one of {USER_AREAS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "cellfree" and M * self.n_rf < K:
            raise ConfigError("cell-free ZF needs num_bs * n_rf >= num_users")
        for name in ("carrier_hz", "bandwidth_hz", "tx_power_w", "noise_psd_w_per_hz", "isd_m",
                     "ref_distance_m", "fronthaul_bpshz"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.paths_per_link < 1 or self.trials < 1 or self.workers < 1:
            raise ConfigError("paths_per_link, trials and workers must be at least 1")
        if self.bits != math.inf and (self.bits < 1 or self.bits != int(self.bits)):
            raise ConfigError(f"bits must be a positive integer or inf, got {self.bits}")
        if self.rzf_alpha is not None and self.rzf_alpha < 0:
            raise ConfigError("rzf_alpha must be non-negative")

    @property
    def awgn_var(self) -> float:
        """Noise power after a unit-norm combiner, ``N0 W``."""
        return self.noise_psd_w_per_hz * self.bandwidth_hz

    @property
    def users_per_bs(self) -> int:
        return self.num_users // self.num_bs

    @property
    def regularization(self) -> float:
        if self.rzf_alpha is not None:
            return self.rzf_alpha
        return self.users_per_bs * self.awgn_var / self.tx_power_w

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                value = dataclasses.asdict(value)
            elif isinstance(value, float) and math.isinf(value):
                value = "inf"
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        nested = {"bs_array": ArrayGeometry, "ue_array": ArrayGeometry,
                  "solver": SolverSettings, "power_model": PowerModel}
        kwargs = {}
        for key, value in data.items():
            if key in nested:
                kwargs[key] = _build(nested[key], value, key)
            elif key in ("bits", "fronthaul_bpshz"):
                kwargs[key] = parse_limit(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)


def _build(kind, value, key):
    if isinstance(value, kind):
        return value
    if not isinstance(value, dict):
        raise ConfigError(f"{key} must be a mapping")
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = set(value) - names
    if unknown:
        raise ConfigError(f"unknown keys in {key}: {sorted(unknown)}")
    return kind(**value)


def parse_limit(value):
    """Parse a resolution or capacity that may be ``inf``."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "∞"):
            return math.inf
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"expected a number or 'inf', got {value!r}") from None
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def load_config(path) -> SystemConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return SystemConfig.from_dict(data)
