"""Flat key = value configuration files for the command-line harness.

Lines hold one ``key = value`` pair each; ``#`` starts a comment and blank
lines are ignored.  Unknown keys are errors.  All keys, their units, and
their defaults:

    physics.temperature_k          reservoir electron temperature, K (0.26)
    physics.fermi_level_uev        reservoir Fermi level, ueV (0)
    physics.b_field_t              magnetic field, T (1.423)
    physics.gyromagnetic_ghz_per_t gyromagnetic ratio, GHz/T (28)
    physics.asymmetry              spin-up/down coupling ratio chi (0.388)
    physics.donor_potential_uev    donor potential mu_D, ueV (0)
    physics.base_rate_down_per_s   spin-down base tunnel rate, 1/s
                                   (resolved from rates.in_total_per_s when
                                   omitted)
    rates.in_total_per_s           total loading rate the base rate is
                                   calibrated to at the configured donor
                                   potential, 1/s (2700; blank to disable)
    amplifier.cutoff_hz            low-pass cutoff f_c, Hz (50e3)
    amplifier.threshold            blip threshold S_th in (0, 1) (0.3)
    amplifier.sample_period_s      digitizer period T_s, s (1e-5)
    demon.required_samples         silent samples needed to trigger (1000)
    demon.trigger_duration_s       trigger output hold time, s (1e-5)
    demon.latency_s                trigger assertion latency, s (1e-7)
    run.shots                      shots per point (10000)
    run.master_seed                master RNG seed (1)
    run.workers                    worker processes (1)
    run.abandon_factor             abandon after this multiple of t_obs (1000)
    run.noise_std                  additive sensor noise std (0 = off)
    run.detector                   'amplifier' or 'ideal' (amplifier)
    sweep.variable                 't_obs' or 'mu_d' (t_obs)
    sweep.grid                     comma-separated grid values; seconds for
                                   t_obs, ueV for mu_d
    sweep.demon_on                 true/false, bias sweeps only (true)
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .demon import DemonConfig
from .harness import ExperimentConfig, SweepSpec
from .physics import ReservoirParams, TunnelModelParams, ZeemanParams, build_rates
from .telegraph import AmplifierParams


class ConfigError(ValueError):
    """Malformed configuration file or option set (CLI exit code 2)."""


_DEFAULTS: dict[str, str] = {
    "physics.temperature_k": "0.26",
    "physics.fermi_level_uev": "0.0",
    "physics.b_field_t": "1.423",
    "physics.gyromagnetic_ghz_per_t": "28.0",
    "physics.asymmetry": "0.388",
    "physics.donor_potential_uev": "0.0",
    "physics.base_rate_down_per_s": "",
    "rates.in_total_per_s": "2700.0",
    "amplifier.cutoff_hz": "50e3",
    "amplifier.threshold": "0.3",
    "amplifier.sample_period_s": "1e-5",
    "demon.required_samples": "1000",
    "demon.trigger_duration_s": "1e-5",
    "demon.latency_s": "1e-7",
    "run.shots": "10000",
    "run.master_seed": "1",
    "run.workers": "1",
    "run.abandon_factor": "1000",
    "run.noise_std": "0.0",
    "run.detector": "amplifier",
    "sweep.variable": "t_obs",
    "sweep.grid": "1e-3,2e-3,3e-3,5e-3,7e-3,10e-3,15e-3,20e-3",
    "sweep.demon_on": "true",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse key = value lines into a raw string mapping."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _as_float(values: dict[str, str], key: str) -> float:
    try:
        return float(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not a number: {values[key]!r}") from exc


def _as_int(values: dict[str, str], key: str) -> int:
    try:
        return int(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not an integer: {values[key]!r}") from exc


def _as_bool(values: dict[str, str], key: str) -> bool:
    lowered = values[key].strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: not a boolean: {values[key]!r}")


def build_experiment_config(raw: dict[str, str]) -> ExperimentConfig:
    """Resolve raw strings (plus defaults) into a validated ExperimentConfig."""
    values = dict(_DEFAULTS)
    values.update(raw)
    try:
        zeeman = ZeemanParams(
            b_field=_as_float(values, "physics.b_field_t"),
            gyromagnetic_ratio=_as_float(values, "physics.gyromagnetic_ghz_per_t"),
        )
        reservoir = ReservoirParams(
            temperature=_as_float(values, "physics.temperature_k"),
            fermi_level=_as_float(values, "physics.fermi_level_uev"),
        )
        base_rate_text = values["physics.base_rate_down_per_s"].strip()
        in_total_text = values["rates.in_total_per_s"].strip()
        base_rate = float(base_rate_text) if base_rate_text else 1.0
        physics = TunnelModelParams(
            base_rate_down=base_rate,
            asymmetry=_as_float(values, "physics.asymmetry"),
            donor_potential=_as_float(values, "physics.donor_potential_uev"),
            zeeman=zeeman,
            reservoir=reservoir,
        )
        if in_total_text:
            # Calibrate the base rate so the loading rate at the configured
            # potential matches the measured total; the potential can then be
            # swept with the base rate held fixed.
            target = float(in_total_text)
            if target <= 0.0:
                raise ConfigError("rates.in_total_per_s must be > 0")
            scale = target / build_rates(physics).in_total
            physics = TunnelModelParams(
                base_rate_down=physics.base_rate_down * scale,
                asymmetry=physics.asymmetry,
                donor_potential=physics.donor_potential,
                zeeman=zeeman,
                reservoir=reservoir,
            )
        elif not base_rate_text:
            raise ConfigError(
                "give physics.base_rate_down_per_s or rates.in_total_per_s"
            )
        amplifier = AmplifierParams(
            cutoff=_as_float(values, "amplifier.cutoff_hz"),
            threshold=_as_float(values, "amplifier.threshold"),
            sample_period=_as_float(values, "amplifier.sample_period_s"),
        )
        demon = DemonConfig(
            required_samples=_as_int(values, "demon.required_samples"),
            sample_period=amplifier.sample_period,
            trigger_duration=_as_float(values, "demon.trigger_duration_s"),
            latency=_as_float(values, "demon.latency_s"),
        )
        grid = tuple(
            float(part) for part in values["sweep.grid"].split(",") if part.strip()
        )
        sweep = SweepSpec(
            variable=values["sweep.variable"].strip(),
            grid=grid,
            demon_on=_as_bool(values, "sweep.demon_on"),
        )
        return ExperimentConfig(
            physics=physics,
            amplifier=amplifier,
            demon=demon,
            shots=_as_int(values, "run.shots"),
            master_seed=_as_int(values, "run.master_seed"),
            noise_std=_as_float(values, "run.noise_std"),
            sweep=sweep,
            workers=_as_int(values, "run.workers"),
            abandon_factor=_as_float(values, "run.abandon_factor"),
            detector=values["run.detector"].strip(),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(raw: dict[str, str]) -> str:
    """Stable digest of the effective configuration (defaults included)."""
    values = dict(_DEFAULTS)
    values.update(raw)
    canonical = "\n".join(f"{key}={values[key]}" for key in sorted(values))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(path: str | Path | None) -> tuple[ExperimentConfig, str]:
    """Read a config file (or use pure defaults) and return (config, hash)."""
    if path is None:
        raw: dict[str, str] = {}
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        raw = parse_config_text(text)
    return build_experiment_config(raw), config_hash(raw)
