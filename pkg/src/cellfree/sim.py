"""Monte-Carlo trial orchestration, aggregation and result files."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import subprocess
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import design_rf_chains, draw_channel, nearest_bs_assignment
from .config import SystemConfig
from .errors import CellFreeError, DomainError, SimulationError
from .maxmin import MaxMinProblem
from .precode import (bs_power, effective_channel, general_rate_bounds, smallcell_full_power_scaling,
                      smallcell_precoders, zf_precoder)
from .quantize import QuantizationModel

logger = logging.getLogger(__name__)

#: A run fails when more than this fraction of its trials raise solver errors.
MAX_FLAGGED_FRACTION = 0.05

EE_DEFINITION = "W * sum_k rate_k / (K * total_consumption)"

CDF_COLUMNS = ("mode", "bits", "fronthaul_bpshz", "rate_bpshz", "cdf")
EE_COLUMNS = ("mode", "bits", "fronthaul_bpshz", "ee_bits_per_joule")


@dataclass
class TrialMetrics:
    index: int
    rates: np.ndarray
    bs_power: np.ndarray
    fronthaul_used: np.ndarray
    total_consumption: float
    ee_per_user: float
    solver_trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


@dataclass
class FlaggedTrial:
    index: int
    error: str


@dataclass
class RunResult:
    config: SystemConfig
    metrics: list[TrialMetrics]
    flagged: list[FlaggedTrial]

    @property
    def rates(self) -> np.ndarray:
        """All per-user rate bounds of successful trials, pooled in trial order."""
        if not self.metrics:
            return np.empty(0)
        return np.concatenate([m.rates for m in self.metrics])

    @property
    def mean_ee(self) -> float:
        return float(np.mean([m.ee_per_user for m in self.metrics]))


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per trial so results do not depend on scheduling."""
    return np.random.default_rng([int(seed), int(index)])


def energy_efficiency(rates, bs_powers, fronthaul_used, config: SystemConfig) -> tuple[float, float]:
    """Total consumption in watts and per-user energy efficiency in bits/J."""
    pm = config.power_model
    bits = config.bits
    if bits == math.inf:
        warnings.warn(f"infinite DAC resolution: DAC power evaluated at {pm.bits_inf_cap} bits",
                      stacklevel=2)
        bits = pm.bits_inf_cap
    fronthaul = np.asarray(fronthaul_used, dtype=float)
    if np.any(np.isinf(fronthaul)):
        warnings.warn("unbounded fronthaul rate: fronthaul power left out", stacklevel=2)
        fronthaul = np.where(np.isinf(fronthaul), 0.0, fronthaul)
    dac = 2 * (pm.dac_coeff_exp * 2.0**bits + pm.dac_coeff_lin * bits)
    per_bs = (np.asarray(bs_powers, dtype=float) / pm.pa_efficiency
              + config.n_rf * (pm.p_rf_chain + dac)
              + pm.p_fixed_bs
              + pm.fronthaul_watts_per_bpshz * fronthaul)
    total = float(np.sum(per_bs))
    if total <= 0:
        raise DomainError("total power consumption must be positive")
    rates = np.asarray(rates, dtype=float)
    return total, float(config.bandwidth_hz * rates.sum() / (len(rates) * total))


def run_trial(config: SystemConfig, index: int) -> TrialMetrics:
    rng = trial_rng(config.seed, index)
    channel = draw_channel(config, rng)
    assignment = nearest_bs_assignment(channel.bs_positions, channel.ue_positions)
    rf = design_rf_chains(channel, assignment, config.n_rf)
    eff = effective_channel(channel, rf, config.awgn_var)
    quant = QuantizationModel.from_bits(config.bits)
    M = config.num_bs

    trace = []
    if config.mode == "cellfree":
        prec = zf_precoder(eff, f"trial {index}")
        problem = MaxMinProblem(eff, prec, rf.bs_precoders, quant, config.tx_power_w,
                                config.fronthaul_bpshz)
        alloc, trace = problem.ao_solve(config.solver)
        eta = np.tile(alloc.eta, (M, 1))
        sigma = alloc.sigma
        fronthaul = problem.fronthaul_rates(alloc.eta, sigma)
    else:
        kind = "smallcell-" + config.mode.split("-", 1)[1]
        prec = smallcell_precoders(eff, assignment.serving, kind, config.regularization)
        eta = smallcell_full_power_scaling(prec, rf, assignment.serving, quant, config.tx_power_w)
        sigma = np.zeros(M)
        fronthaul = np.zeros(M)

    rates = general_rate_bounds(eff, prec, eta, sigma, quant)
    F = prec.blocks
    powers = np.array([bs_power(eta[m], sigma[m], rf.bs_precoders[m], F[m], quant) for m in range(M)])
    total, ee = energy_efficiency(rates, powers, fronthaul, config)
    return TrialMetrics(index, rates, powers, fronthaul, total, ee, trace, list(rf.warnings))


def _guarded_trial(config: SystemConfig, index: int):
    try:
        return run_trial(config, index)
    except CellFreeError as exc:
        return FlaggedTrial(index, f"{type(exc).__name__}: {exc}")


def run_trials(config: SystemConfig, workers: int | None = None) -> RunResult:
    """Run ``config.trials`` independent drops.

    Trials raising solver errors are flagged rather than dropped silently; the
    run fails if more than 5% of the trials are flagged.
    """
    workers = config.workers if workers is None else workers
    indices = range(config.trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_guarded_trial, [config] * config.trials, indices))
    else:
        outcomes = [_guarded_trial(config, i) for i in indices]
    metrics = [o for o in outcomes if isinstance(o, TrialMetrics)]
    flagged = [o for o in outcomes if isinstance(o, FlaggedTrial)]
    for f in flagged:
        logger.warning("trial %d flagged: %s", f.index, f.error)
    if len(flagged) > MAX_FLAGGED_FRACTION * config.trials:
        raise SimulationError(f"{len(flagged)} of {config.trials} trials failed; first: {flagged[0].error}")
    return RunResult(config, metrics, flagged)


def aggregate_cdf(rates) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF points ``(sorted value, fraction <= value)`` of pooled rates."""
    x = np.sort(np.asarray(rates, dtype=float).ravel())
    if x.size == 0:
        raise DomainError("cannot build a CDF from no samples")
    return x, np.arange(1, x.size + 1) / x.size


# --- output -----------------------------------------------------------------------

def format_number(value) -> str:
    """12 significant digits; infinities as ``inf``."""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.12g}"


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True,
                             timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def cdf_rows(result: RunResult) -> list[dict]:
    c = result.config
    x, p = aggregate_cdf(result.rates)
    return [dict(mode=c.mode, bits=c.bits, fronthaul_bpshz=c.fronthaul_bpshz, rate_bpshz=xi, cdf=pi)
            for xi, pi in zip(x, p)]


def ee_rows(result: RunResult) -> list[dict]:
    c = result.config
    return [dict(mode=c.mode, bits=c.bits, fronthaul_bpshz=c.fronthaul_bpshz,
                 ee_bits_per_joule=result.mean_ee)]


def manifest(result: RunResult) -> dict:
    return {
        "version": version_string(),
        "config": result.config.to_dict(),
        "ee_definition": EE_DEFINITION,
        "trials_ok": len(result.metrics),
        "trials_flagged": [dataclasses.asdict(f) for f in result.flagged],
        "rf_rank_warnings": sum(len(m.warnings) for m in result.metrics),
    }


def _write_csv(path: Path, columns, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([format_number(row[c]) for c in columns])


def _write_structured(path: Path, columns, rows):
    doc = {"columns": list(columns), "rows": [[format_number(row[c]) for c in columns] for row in rows]}
    path.write_text(json.dumps(doc, indent=1) + "\n")


def emit_results(result: RunResult, out_dir, fmt: str = "csv") -> list[Path]:
    """Write ``manifest.json`` plus the CDF and EE tables; returns the paths written."""
    if fmt not in ("csv", "structured"):
        raise DomainError(f"unknown output format {fmt!r}")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "manifest.json"
        path.write_text(json.dumps(manifest(result), indent=2) + "\n")
        written.append(path)
        writer, ext = (_write_csv, "csv") if fmt == "csv" else (_write_structured, "json")
        for name, columns, rows in (("cdf", CDF_COLUMNS, cdf_rows(result)),
                                    ("ee", EE_COLUMNS, ee_rows(result))):
            path = out / f"{name}.{ext}"
            writer(path, columns, rows)
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return written


def load_manifest_config(path) -> SystemConfig:
    doc = json.loads(Path(path).read_text())
    return SystemConfig.from_dict(doc["config"])
