"""JSON run configuration.

Schema (``schema_version`` 1)::

    {
      "schema_version": 1,
      "variant": "plane" | "uniaxial" | "3d",
      "schedule": [{"target": {"11": 0.02}, "steps": 50}, ...],
      "params": {
        "values": {"E": ..., "nu": ..., "Y": ..., "K": ..., "S": ..., "D": ...},
        "active": ["Y", "S", "D"],
        "lower": {...}, "upper": {...}, "ref": {...}      # optional, active names only
      },
      "truth": {...},                  # optional; needed to generate synthetic data
      "observation": {"mask": ["11", "22", "12"], "norm": "frobenius"},
      "noise": 0.0,
      "seed": 0,
      "optimizer": "newton" | "lbfgs",
      "settings": {"tol_grad_inf": 1e-4, "max_iterations": 100, "memory": 10, "reg_floor": 1e-8},
      "ga": {"enabled": false, "population": 25, "parents": 8, "children": 8, "fresh": 9,
             "generations": 4, "mutation_rate": 0.1, "lower": {...}, "upper": {...}},
      "solver": {"tol": 1e-10, "max_iter": 50},
      "data": null,                    # CSV path, relative to the config file
      "truncate_strain": null
    }

``params.values`` holds the starting point of a calibration; fixed
parameters keep these values throughout.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .forward import LoadSchedule, SolverOpts
from .model import COMPONENTS, PARAM_NAMES, ModelVariant, ParamSet
from .optimize import GASettings, OptSettings

SCHEMA_VERSION = 1
OPTIMIZERS = ("newton", "lbfgs")


class ConfigError(ValueError):
    pass


def _param_vector(d: dict, what: str, required=PARAM_NAMES) -> dict:
    unknown = set(d) - set(PARAM_NAMES)
    if unknown:
        raise ConfigError(f"{what}: unknown parameter(s) {sorted(unknown)}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ConfigError(f"{what}: missing parameter(s) {missing}")
    return {k: float(v) for k, v in d.items()}


@dataclass
class RunConfig:
    variant: ModelVariant
    schedule: list
    values: dict
    active: list
    lower: dict = field(default_factory=dict)
    upper: dict = field(default_factory=dict)
    ref: dict = field(default_factory=dict)
    truth: dict | None = None
    mask: list | None = None
    norm: str = "frobenius"
    noise: float = 0.0
    seed: int | None = None
    optimizer: str = "newton"
    settings: dict = field(default_factory=dict)
    ga: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    data: str | None = None
    truncate_strain: float | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    # -- parsing -----------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> RunConfig:
        raw = copy.deepcopy(raw)
        version = raw.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        try:
            variant = ModelVariant.parse(raw.pop("variant"))
            schedule = raw.pop("schedule")
            params = raw.pop("params")
        except KeyError as exc:
            raise ConfigError(f"missing required key {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        obs = raw.pop("observation", {}) or {}
        cfg = cls(
            variant=variant,
            schedule=schedule,
            values=_param_vector(params.get("values", {}), "params.values"),
            active=list(params.get("active", [])),
            lower=_param_vector(params.get("lower", {}), "params.lower", ()),
            upper=_param_vector(params.get("upper", {}), "params.upper", ()),
            ref=_param_vector(params.get("ref", {}), "params.ref", ()),
            truth=None if raw.get("truth") is None else _param_vector(raw.pop("truth"), "truth"),
            mask=obs.get("mask"),
            norm=obs.get("norm", "frobenius"),
            base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
        )
        raw.pop("truth", None)
        for key in ("noise", "seed", "optimizer", "settings", "ga", "solver", "data", "truncate_strain"):
            if key in raw:
                setattr(cfg, key, raw.pop(key))
        if raw:
            raise ConfigError(f"unknown key(s) {sorted(raw)}")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> RunConfig:
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def builtin(cls, name: str) -> RunConfig:
        """One of the configurations shipped with the package (see :func:`builtin_names`)."""
        ref = resources.files("mpcal") / "configs" / f"{name}.json"
        if not ref.is_file():
            raise ConfigError(f"no built-in config {name!r} (have {builtin_names()})")
        return cls.from_dict(json.loads(ref.read_text()), base_dir=None)

    def validate(self) -> None:
        if not self.schedule:
            raise ConfigError("schedule needs at least one ramp")
        for ramp in self.schedule:
            if int(ramp.get("steps", 0)) < 1:
                raise ConfigError("schedule step counts must be >= 1")
            bad = set(ramp.get("target", {})) - set(COMPONENTS)
            if bad:
                raise ConfigError(f"schedule: unknown strain component(s) {sorted(bad)}")
        unknown = set(self.active) - set(PARAM_NAMES)
        if unknown:
            raise ConfigError(f"params.active: unknown parameter(s) {sorted(unknown)}")
        if not self.active:
            raise ConfigError("params.active must name at least one parameter")
        if self.noise is None or float(self.noise) < 0:
            raise ConfigError("noise must be >= 0")
        if float(self.noise) > 0 and self.seed is None:
            raise ConfigError("a seed is required when noise > 0")
        if self.ga.get("enabled") and self.seed is None:
            raise ConfigError("a seed is required when the GA is enabled")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.mask is not None and set(self.mask) - set(COMPONENTS):
            raise ConfigError(f"observation.mask: unknown component(s) {sorted(set(self.mask) - set(COMPONENTS))}")
        try:
            self.param_set().validate()
            self.opt_settings()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- builders ----------------------------------------------------------

    def load_schedule(self) -> LoadSchedule:
        return LoadSchedule.from_ramps(self.variant, [(r["target"], r["steps"]) for r in self.schedule])

    def param_set(self, values: dict | None = None) -> ParamSet:
        vals = self.values if values is None else values
        active = np.array([k in self.active for k in PARAM_NAMES])
        x = np.array([vals[k] for k in PARAM_NAMES], dtype=float)
        ref = np.array([self.ref.get(k, abs(vals[k])) for k in PARAM_NAMES], dtype=float)
        lower = np.array([self.lower.get(k, 1e-3 * r) for k, r in zip(PARAM_NAMES, ref)])
        upper = np.array([self.upper.get(k, 1e3 * r) for k, r in zip(PARAM_NAMES, ref)])
        return ParamSet(x, active, lower, upper, ref)

    def truth_set(self) -> ParamSet | None:
        return None if self.truth is None else self.param_set(self.truth)

    def mask_array(self) -> np.ndarray:
        m = np.zeros(6, dtype=bool)
        comps = self.mask if self.mask is not None else [COMPONENTS[c] for c in self.variant.observed]
        for c in comps:
            m[COMPONENTS.index(str(c))] = True
        return m

    def solver_opts(self) -> SolverOpts:
        return SolverOpts(**self.solver)

    def opt_settings(self) -> OptSettings:
        ga = {k: v for k, v in self.ga.items() if k not in ("enabled", "lower", "upper")}
        idx = [k for k in PARAM_NAMES if k in self.active]
        for side in ("lower", "upper"):
            box = self.ga.get(side)
            if box is not None:
                ga[side] = np.array([float(box[k]) for k in idx])
        return OptSettings(**self.settings, ga=GASettings(**ga))

    def data_path(self) -> Path | None:
        if self.data is None:
            return None
        p = Path(self.data)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "variant": self.variant.cli_name,
            "schedule": self.schedule,
            "params": {"values": self.values, "active": self.active, "lower": self.lower,
                       "upper": self.upper, "ref": self.ref},
            "observation": {"mask": self.mask, "norm": self.norm},
            "noise": self.noise,
            "seed": self.seed,
            "optimizer": self.optimizer,
            "settings": self.settings,
            "ga": self.ga,
            "solver": self.solver,
            "data": self.data,
            "truncate_strain": self.truncate_strain,
        }
        if self.truth is not None:
            out["truth"] = self.truth
        return out


def builtin_names() -> list[str]:
    folder = resources.files("mpcal") / "configs"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))
