"""Scenario configuration: TOML text with [scenario], [grid], [solver] and [tolerances] tables."""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .profiles import Regime, classify_regime

SCENARIOS = ("thm-integrable", "thm-nonintegrable", "example-longer", "yamabe", "appendix-onesided",
             "barenblatt-selftest")

_POS = "positive"
_NONNEG = "nonnegative"

# key -> (type, constraint)
_SCHEMA: Dict[str, Dict[str, tuple]] = {
    "scenario": {
        "name": (str, SCENARIOS),
        "N": (int, 3),
        "m": (float, _POS),
        "T": (float, _POS),
        "k1": (float, _POS),
        "k2": (float, _POS),
        "k0": (float, _POS),
        "amplitude": (float, _NONNEG),
        "bump_amplitude": (float, _POS),
        "bump_scale": (float, _POS),
        "depth": (float, (0.0, 1.0)),
        "r0": (float, _NONNEG),
        "tau_max": (float, _POS),
        "tau_step": (float, _POS),
        "snapshots": (int, 10),
        "horizon": (float, (0.0, 1.0)),
        "output": (str, None),
    },
    "grid": {
        "Rmax": (float, _POS),
        "M": (int, 64),
        "r_lin": (float, _POS),
    },
    "solver": {
        "dt_init": (float, _POS),
        "dt_max": (float, _POS),
        "newton_tol": (float, _POS),
        "newton_max_iter": (int, 1),
        "adapt_target": (float, (0.0, 0.5)),
        "change_floor": (float, _POS),
        "max_halvings": (int, 0),
        "corrected_mass": (bool, None),
    },
    "tolerances": {
        "trapped": (float, _POS),
        "contraction": (float, _POS),
        "aronson_benilan": (float, _POS),
        "potential": (float, _POS),
        "convergence_factor": (float, (0.0, 1.0)),
        "convergence_window": (float, _POS),
        "control_factor": (float, _POS),
        "k0_recovery": (float, _POS),
        "extinction": (float, _POS),
        "longer_margin": (float, _NONNEG),
        "tail": (float, _POS),
        "fast_tail_fraction": (float, (0.0, 1.0)),
        "profile": (float, _POS),
        "residual": (float, _POS),
        "identity": (float, _POS),
        "solver_error": (float, _POS),
        "halving_low": (float, _POS),
        "halving_high": (float, _POS),
    },
}

_COMMON_TOL = {
    "trapped": 1e-3, "contraction": 1e-4, "aronson_benilan": 1e-3, "potential": 0.05,
    "convergence_factor": 0.2, "convergence_window": 3.0, "control_factor": 5.0, "k0_recovery": 1e-3,
    "extinction": 0.02, "longer_margin": 0.05, "tail": 0.05, "fast_tail_fraction": 0.9, "profile": 0.05,
    "residual": 1e-8, "identity": 1e-10, "solver_error": 0.02, "halving_low": 1.7, "halving_high": 2.3,
}

_COMMON_SOLVER = {
    "dt_init": 1e-6, "dt_max": 1e-2, "newton_tol": 1e-10, "newton_max_iter": 30, "adapt_target": 4e-3,
    "change_floor": 1e-8, "max_halvings": 20, "corrected_mass": True,
}

# grids and step targets are sized from pilot runs against the closed-form solutions
_DEFAULTS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "thm-integrable": {
        "scenario": {"N": 3, "m": 0.2, "T": 1.0, "k1": 4.0, "k2": 1.0, "k0": 2.0, "amplitude": 0.2,
                     "tau_max": 3.0, "tau_step": 0.25},
        "grid": {"Rmax": 1e5, "M": 6400, "r_lin": 1e-2},
        "solver": {"adapt_target": 2.5e-4},
    },
    "thm-nonintegrable": {
        "scenario": {"N": 6, "m": 0.4, "T": 1.0, "k1": 1.0, "k2": 0.5, "k0": 1.0, "amplitude": 0.2,
                     "tau_max": 3.0, "tau_step": 0.25},
        "grid": {"Rmax": 100.0, "M": 1600, "r_lin": 1e-2},
        "solver": {"adapt_target": 5e-4},
    },
    "example-longer": {
        "scenario": {"N": 3, "m": 0.2, "T": 1.0, "k0": 1.0, "bump_amplitude": 4.96, "bump_scale": 1.0,
                     "snapshots": 100},
        "grid": {"Rmax": 1e3, "M": 1600, "r_lin": 5.0},
        "solver": {},
    },
    "yamabe": {
        "scenario": {"N": 3, "m": 0.2, "T": 1.0, "k0": 1.0, "bump_amplitude": 4.96, "bump_scale": 1.0,
                     "snapshots": 100},
        "grid": {"Rmax": 1e3, "M": 1600, "r_lin": 5.0},
        "solver": {},
    },
    "appendix-onesided": {
        "scenario": {"N": 6, "m": 0.4, "T": 1.0, "k0": 1.0, "depth": 0.3, "r0": 5.0, "tau_max": 3.0,
                     "tau_step": 0.25},
        "grid": {"Rmax": 100.0, "M": 1600, "r_lin": 1e-2},
        "solver": {},
    },
    "barenblatt-selftest": {
        "scenario": {"N": 3, "m": 0.2, "T": 1.0, "k0": 1.0, "k1": 2.0, "k2": 1.0, "snapshots": 60,
                     "horizon": 0.95},
        "grid": {"Rmax": 1e5, "M": 1600, "r_lin": 1e-2},
        "solver": {},
    },
}


@dataclass
class ScenarioConfig:
    name: str
    scenario: Dict[str, Any]
    grid: Dict[str, Any]
    solver: Dict[str, Any]
    tolerances: Dict[str, Any]
    output: Optional[str] = None

    def __getitem__(self, key):
        return self.scenario[key]

    def as_dict(self) -> dict:
        return {"scenario": dict(self.scenario), "grid": dict(self.grid), "solver": dict(self.solver),
                "tolerances": dict(self.tolerances)}


def _coerce(path: str, value, kind, rule):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{path}: expected true/false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{path}: expected a string, got {value!r}")
        if isinstance(rule, tuple) and value not in rule:
            raise ConfigurationError(f"{path}: unknown value {value!r}; choose from {', '.join(rule)}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}: expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        value = int(value)
        if value < rule:
            raise ConfigurationError(f"{path}: must be >= {rule}, got {value}")
        return value
    value = float(value)
    if not math.isfinite(value):
        raise ConfigurationError(f"{path}: must be finite")
    if rule == _POS and not value > 0:
        raise ConfigurationError(f"{path}: must be positive, got {value}")
    if rule == _NONNEG and not value >= 0:
        raise ConfigurationError(f"{path}: must be nonnegative, got {value}")
    if isinstance(rule, tuple) and not (rule[0] < value <= rule[1]):
        raise ConfigurationError(f"{path}: must lie in ({rule[0]}, {rule[1]}], got {value}")
    return value


def _parse_override(item: str):
    if "=" not in item:
        raise ConfigurationError(f"override {item!r}: expected section.key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if "." not in key:
        raise ConfigurationError(f"override {key!r}: expected section.key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def parse_config(text: str, overrides: Iterable[str] = ()) -> ScenarioConfig:
    """Validate config text and fill scenario defaults.

    Raises :class:`ConfigurationError` naming the offending key path.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config is not valid TOML: {exc}") from exc
    raw = copy.deepcopy(raw)
    for item in overrides:
        key, value = _parse_override(item)
        section, name = key.split(".", 1)
        raw.setdefault(section, {})[name] = value
    for section, body in raw.items():
        if section not in _SCHEMA:
            raise ConfigurationError(f"{section}: unknown section")
        if not isinstance(body, dict):
            raise ConfigurationError(f"{section}: expected a table")
        for key in body:
            if key not in _SCHEMA[section]:
                raise ConfigurationError(f"{section}.{key}: unknown key")
    sc = raw.get("scenario", {})
    if "name" not in sc:
        raise ConfigurationError("scenario.name: missing")
    name = _coerce("scenario.name", sc["name"], str, SCENARIOS)
    base = _DEFAULTS[name]
    merged = {
        "scenario": dict(base["scenario"]),
        "grid": dict(base["grid"]),
        "solver": {**_COMMON_SOLVER, **base["solver"]},
        "tolerances": dict(_COMMON_TOL),
    }
    for section, body in raw.items():
        for key, value in body.items():
            kind, rule = _SCHEMA[section][key]
            merged[section][key] = _coerce(f"{section}.{key}", value, kind, rule)
    merged["scenario"]["name"] = name
    cfg = ScenarioConfig(name, merged["scenario"], merged["grid"], merged["solver"], merged["tolerances"],
                         merged["scenario"].get("output"))
    _validate(cfg)
    return cfg


def default_config(name: str, overrides: Iterable[str] = ()) -> ScenarioConfig:
    return parse_config(f'[scenario]\nname = "{name}"\n', overrides)


def _validate(cfg: ScenarioConfig):
    s = cfg.scenario
    N, m = s["N"], s["m"]
    regime = classify_regime(N, m)
    if cfg.name in ("thm-nonintegrable", "appendix-onesided") and N <= 4:
        raise ConfigurationError(f"scenario.N: {cfg.name} needs the nonintegrable regime, which requires N > 4, "
                                 f"got N={N}")
    if regime is Regime.OUT_OF_RANGE:
        raise ConfigurationError(f"scenario.m: m={m} is outside the fast diffusion regime (0, (N-2)/N) for N={N}")
    if cfg.name == "thm-integrable" and regime is not Regime.INTEGRABLE:
        raise ConfigurationError(f"scenario.m: thm-integrable needs the integrable regime, got {regime.value}")
    if cfg.name in ("thm-nonintegrable", "appendix-onesided") and regime is not Regime.NONINTEGRABLE:
        raise ConfigurationError(f"scenario.N: {cfg.name} needs the nonintegrable regime (N > 4 and "
                                 f"m <= (N-4)/(N-2)), got {regime.value}")
    if cfg.name == "yamabe" and abs(m - (N - 2) / (N + 2)) > 1e-12:
        raise ConfigurationError(f"scenario.m: yamabe needs m = (N-2)/(N+2) = {(N - 2) / (N + 2)}")
    if "k1" in s and "k2" in s and not s["k1"] >= s["k2"]:
        raise ConfigurationError(f"scenario.k1: need k1 >= k2, got k1={s['k1']}, k2={s['k2']}")
    g = cfg.grid
    if not g["Rmax"] > g["r_lin"]:
        raise ConfigurationError("grid.Rmax: must exceed grid.r_lin")
    if cfg.solver["dt_init"] > cfg.solver["dt_max"]:
        raise ConfigurationError("solver.dt_init: must not exceed solver.dt_max")
    t = cfg.tolerances
    if not t["halving_low"] < t["halving_high"]:
        raise ConfigurationError("tolerances.halving_low: must be below tolerances.halving_high")
