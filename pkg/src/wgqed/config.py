"""Experiment configuration: strict JSON schema, defaults and model construction."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .hilbert import EIT, TWO_LEVEL, DEFAULT_DIM_CAP, Geometry, LevelScheme
from .model import DriveSpec, InteractionSpec, SpinModel

SCHEMA_VERSION = 1
EXPERIMENTS = ("spectrum", "evolve", "g2", "smatrix", "linear", "compare", "fock", "appendixD")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ModelConfig:
    n_sites: int
    kind: str = TWO_LEVEL
    gamma_1d: float = 1.0
    gamma_prime: float = 0.0
    rabi: float = 0.0
    delta_L: float = 0.0
    spacing: float = 1.0
    phase: float = math.pi / 2
    hardcore: bool = True
    u0: float = 0.0


@dataclass(frozen=True)
class NumericsConfig:
    tol: float = 1e-8
    n_max: int = 2
    dim_cap: int = DEFAULT_DIM_CAP
    method: str = "auto"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: ModelConfig
    drive_amplitude: float = 1e-6
    grids: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    output: dict = field(default_factory=dict)
    version: int = SCHEMA_VERSION


# grids either explicit lists or {"start", "stop", "num"}
GRID_KEYS = ("detuning", "interaction", "time", "x", "tau", "momentum")

REQUIRED_GRIDS = {
    "spectrum": ("detuning",),
    "evolve": ("time",),
    "g2": ("tau",),
    "smatrix": ("momentum",),
    "linear": ("detuning",),
    "compare": ("tau",),
    "fock": (),
    "appendixD": ("detuning",),
}

PARAM_KEYS = {
    "spectrum": {"source"},
    "evolve": {"sigma_p", "mu", "total_linewidth"},
    "g2": {"detuning", "interaction"},
    "smatrix": {"k1", "k2", "interaction"},
    "linear": {"total_linewidth"},
    "compare": {"detuning", "interaction"},
    "fock": {"n_photons", "detuning", "t_final", "radii"},
    "appendixD": {"regime_split"},
}

SPECTRUM_SOURCES = ("steady", "frequency")
METHODS = ("auto", "direct", "pair")


def _fail(msg: str):
    raise ConfigError(msg)


def _check_keys(obj: dict, allowed, where: str) -> None:
    if not isinstance(obj, dict):
        _fail(f"{where} must be a JSON object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        _fail(f"unknown key {extra[0]!r} in {where}; allowed keys: {', '.join(sorted(allowed))}")


def _number(v, name: str, lo: float | None = None, hi: float | None = None, strict_lo: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(f"{name} must be a finite number, got {v!r}")
    if lo is not None and (v <= lo if strict_lo else v < lo):
        _fail(f"{name}={v} out of range: must be {'>' if strict_lo else '>='} {lo}")
    if hi is not None and v > hi:
        _fail(f"{name}={v} out of range: must be <= {hi}")
    return float(v)


def _integer(v, name: str, lo: int) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(f"{name} must be an integer, got {v!r}")
    if v < lo:
        _fail(f"{name}={v} out of range: must be >= {lo}")
    return int(v)


def grid_values(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return np.linspace(spec["start"], spec["stop"], spec["num"])
    return np.asarray(spec, dtype=float)


def _check_grid(spec, name: str):
    if isinstance(spec, dict):
        _check_keys(spec, ("start", "stop", "num"), f"grids.{name}")
        for k in ("start", "stop", "num"):
            if k not in spec:
                _fail(f"grids.{name} needs 'start', 'stop' and 'num'")
        _number(spec["start"], f"grids.{name}.start")
        _number(spec["stop"], f"grids.{name}.stop")
        _integer(spec["num"], f"grids.{name}.num", 1)
        return dict(spec)
    if not isinstance(spec, list) or not spec:
        _fail(f"grids.{name} must be a nonempty list or a {{start, stop, num}} object")
    return [_number(v, f"grids.{name}[{i}]") for i, v in enumerate(spec)]


def _model_config(raw: dict) -> ModelConfig:
    allowed = ModelConfig.__dataclass_fields__
    _check_keys(raw, allowed, "model")
    if "n_sites" not in raw:
        _fail("model.n_sites is required")
    n = _integer(raw["n_sites"], "model.n_sites", 1)
    kind = raw.get("kind", TWO_LEVEL)
    if kind not in (TWO_LEVEL, EIT):
        _fail(f"model.kind must be {TWO_LEVEL!r} or {EIT!r}, got {kind!r}")
    vals = dict(
        n_sites=n,
        kind=kind,
        gamma_1d=_number(raw.get("gamma_1d", 1.0), "model.gamma_1d", 0.0, strict_lo=True),
        gamma_prime=_number(raw.get("gamma_prime", 0.0), "model.gamma_prime", 0.0),
        rabi=_number(raw.get("rabi", 0.0), "model.rabi", 0.0),
        delta_L=_number(raw.get("delta_L", 0.0), "model.delta_L"),
        spacing=_number(raw.get("spacing", 1.0), "model.spacing", 0.0, strict_lo=True),
        phase=_number(raw.get("phase", math.pi / 2), "model.phase"),
        u0=_number(raw.get("u0", 0.0), "model.u0", 0.0),
    )
    hc = raw.get("hardcore", True)
    if not isinstance(hc, bool):
        _fail("model.hardcore must be true or false")
    if kind == TWO_LEVEL and vals["rabi"] != 0:
        _fail("model.rabi is only meaningful for kind 'eit'; remove it or set kind to 'eit'")
    return ModelConfig(hardcore=hc, **vals)


def _numerics(raw: dict) -> NumericsConfig:
    _check_keys(raw, NumericsConfig.__dataclass_fields__, "numerics")
    method = raw.get("method", "auto")
    if method not in METHODS:
        _fail(f"numerics.method must be one of {METHODS}, got {method!r}")
    return NumericsConfig(
        tol=_number(raw.get("tol", 1e-8), "numerics.tol", 1e-12, 1e-4),
        n_max=_integer(raw.get("n_max", 2), "numerics.n_max", 1),
        dim_cap=_integer(raw.get("dim_cap", DEFAULT_DIM_CAP), "numerics.dim_cap", 1),
        method=method,
    )


def _params(exp: str, raw: dict, model: ModelConfig) -> dict:
    _check_keys(raw, PARAM_KEYS[exp], "params")
    out = {}
    for k, v in raw.items():
        if k == "source":
            if v not in SPECTRUM_SOURCES:
                _fail(f"params.source must be one of {SPECTRUM_SOURCES}, got {v!r}")
            out[k] = v
        elif k in ("n_photons",):
            out[k] = _integer(v, f"params.{k}", 0)
            if out[k] > 2:
                _fail("params.n_photons must be 0, 1 or 2")
        elif k == "radii":
            if not isinstance(v, list) or not v:
                _fail("params.radii must be a nonempty list")
            out[k] = [_number(r, "params.radii[]", 0.0, strict_lo=True) for r in v]
        elif k in ("sigma_p", "total_linewidth", "t_final"):
            out[k] = _number(v, f"params.{k}", 0.0, strict_lo=True)
        elif k in ("interaction", "regime_split"):
            out[k] = _number(v, f"params.{k}", 0.0)
        else:
            out[k] = _number(v, f"params.{k}")
    if exp == "evolve":
        if model.kind != EIT:
            _fail("evolve propagates spin waves and needs model.kind 'eit'")
        for k in ("sigma_p", "mu"):
            if k not in out:
                _fail(f"evolve needs params.{k}")
    if exp == "smatrix" and not {"k1", "k2"} <= set(out):
        _fail("smatrix needs params.k1 and params.k2")
    if exp == "fock" and "t_final" not in out:
        _fail("fock needs params.t_final")
    if exp == "appendixD" and model.kind != EIT:
        _fail("appendixD needs model.kind 'eit'")
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    _check_keys(raw, ExperimentConfig.__dataclass_fields__, "config")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        _fail(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    version = _integer(raw.get("version", SCHEMA_VERSION), "version", 1)
    if version != SCHEMA_VERSION:
        _fail(f"unsupported config version {version}; this build reads version {SCHEMA_VERSION}")
    if "model" not in raw:
        _fail("config needs a 'model' section")
    model = _model_config(raw["model"])
    amp = _number(raw.get("drive_amplitude", 1e-6), "drive_amplitude", 0.0)
    grids_raw = raw.get("grids", {})
    _check_keys(grids_raw, GRID_KEYS, "grids")
    grids = {k: _check_grid(v, k) for k, v in grids_raw.items()}
    for g in REQUIRED_GRIDS[exp]:
        if g not in grids:
            _fail(f"experiment {exp!r} needs grids.{g}")
    if exp in ("evolve", "g2", "compare") and "time" in grids and np.any(np.diff(grid_values(grids["time"])) <= 0):
        _fail("grids.time must be strictly increasing")
    if exp in ("g2", "compare") and np.any(grid_values(grids["tau"]) < 0):
        _fail("grids.tau must be nonnegative")
    params = _params(exp, raw.get("params", {}), model)
    numerics = _numerics(raw.get("numerics", {}))
    if exp in ("spectrum", "g2", "compare", "appendixD") and amp == 0:
        _fail(f"experiment {exp!r} needs a nonzero drive_amplitude")
    if exp in ("spectrum", "g2", "compare", "appendixD") and numerics.n_max < 2:
        _fail(f"experiment {exp!r} needs numerics.n_max >= 2")
    out = raw.get("output", {})
    _check_keys(out, ("prefix",), "output")
    if "prefix" in out and (not isinstance(out["prefix"], str) or not out["prefix"]):
        _fail("output.prefix must be a nonempty string")
    return ExperimentConfig(exp, model, amp, grids, params, numerics, dict(out), version)


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    return asdict(cfg)


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)


def build_model(cfg: ExperimentConfig, interaction: float | None = None, detuning: float = 0.0) -> SpinModel:
    """SpinModel for the configured chain; ``interaction`` is the constant C."""
    m = cfg.model
    geom = Geometry.lattice(m.n_sites, m.spacing, m.phase)
    levels = LevelScheme(m.kind, m.gamma_1d, m.gamma_prime, m.rabi, m.delta_L)
    c = 0.0 if interaction is None else interaction
    inter = InteractionSpec.constant(m.n_sites, c, hardcore=m.hardcore, u0=m.u0)
    drive = DriveSpec(cfg.drive_amplitude, detuning) if cfg.drive_amplitude > 0 else None
    return SpinModel(geom, levels, inter, drive)
