"""Experiment configuration: a strict JSON document validated with pydantic.

Units: fields in mT, angles in radians, times in us, rates in 1/us, exchange
as ``j_ex / 2 pi`` in MHz, ``omega1`` in rad/us.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .optimizer import OptimizerConfig

SCHEMA_VERSION = 1
PRESET_DIR = Path(__file__).parent / "presets"

CONTRAST_OBJECTIVES = ("maximize-contrast", "maximize-contrast-swapped")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class HyperfineConfig(_Strict):
    electron: Literal[1, 2]
    multiplicity: int = Field(2, ge=2)
    a_iso_mt: float | None = None
    tensor_mt: list[list[float]] | None = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.a_iso_mt is None) == (self.tensor_mt is None):
            raise ValueError("give exactly one of a_iso_mt or tensor_mt")
        if self.tensor_mt is not None and (len(self.tensor_mt) != 3 or any(len(r) != 3 for r in self.tensor_mt)):
            raise ValueError("tensor_mt must be 3x3")
        return self


class ModelConfig(_Strict):
    name: Literal["masuzawa7", "fadh_z", "custom"]
    j_ex_mhz: float | None = None
    hyperfines: list[HyperfineConfig] = Field(default_factory=list)

    @model_validator(mode="after")
    def _custom_only(self):
        if self.hyperfines and self.name != "custom":
            raise ValueError("hyperfines can only be given for the custom model")
        return self


class FieldPoint(_Strict):
    B0: float = Field(ge=0.0)
    theta: float = Field(0.0, ge=0.0, le=math.pi)
    phi: float = 0.0


class Direction(_Strict):
    theta: float = Field(ge=0.0, le=math.pi)
    phi: float = 0.0


class OrientationConfig(_Strict):
    B0: float = Field(0.05, ge=0.0)
    z: Direction = Direction(theta=0.0, phi=0.0)
    x: Direction = Direction(theta=math.pi / 2, phi=0.0)


class NoiseConfig(_Strict):
    model: Literal["none", "STD", "URF", "CRF"] = "none"
    rate: float = Field(0.0, ge=0.0)


class ControlConfig(_Strict):
    kind: Literal["coherent-x", "CPC", "UPC", "UIC"]
    omega1: float | None = Field(None, gt=0.0)
    gamma_max: float | None = Field(None, ge=0.0)

    @model_validator(mode="after")
    def _amplitude(self):
        if self.kind == "coherent-x":
            if self.omega1 is None:
                raise ValueError("omega1 is required for coherent control")
            if self.gamma_max is not None:
                raise ValueError("gamma_max only applies to incoherent control")
        elif self.omega1 is not None:
            raise ValueError("omega1 only applies to coherent control")
        return self

    @property
    def amplitude(self) -> float:
        if self.kind == "coherent-x":
            return self.omega1
        return 6.0 if self.gamma_max is None else self.gamma_max


class ScheduleConfig(_Strict):
    n_steps: int = Field(ge=1)
    dt: float = Field(gt=0.0)


class HorizonConfig(_Strict):
    t1: float | None = Field(None, gt=0.0)
    tail: Literal["finite", "infinite"] = "finite"


class OptimizerSettings(_Strict):
    max_iterations: int = Field(500, ge=0)
    yield_rel_tol: float = Field(1e-4, gt=0.0)
    grad_norm_tol: float = Field(1e-8, gt=0.0)
    step_len_tol: float = Field(1e-10, gt=0.0)
    grad_change_tol: float = Field(1e-10, gt=0.0)
    max_initial_control_change: float = Field(0.1, gt=0.0)
    reset_period: int = Field(10, ge=1)
    init_std: float = Field(0.1, ge=0.0)
    rng_seed: int = Field(0, ge=0)

    def build(self, seed: int | None = None) -> OptimizerConfig:
        kw = self.model_dump()
        if seed is not None:
            kw["rng_seed"] = seed
        return OptimizerConfig(**kw)


class NumericsConfig(_Strict):
    expm_tol: float = Field(1e-8, gt=0.0)
    rk_rtol: float = Field(1e-10, gt=0.0)
    rk_atol: float = Field(1e-12, gt=0.0)
    gradient_rule: Literal["integrated", "left", "midpoint"] = "integrated"
    checkpoint_every: int = Field(1, ge=1)


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    experiment: Literal["field-sweep", "anisotropy-sweep"]
    model: ModelConfig
    k_b: float = Field(1.0, ge=0.0)
    k_f: float = Field(1.0, ge=0.0)
    field_sweep: list[FieldPoint] = Field(default_factory=list)
    orientations: OrientationConfig = OrientationConfig()
    j_ex_sweep_mhz: list[float] = Field(default_factory=list)
    variants: list[Literal["shared", "swapped"]] = Field(default_factory=lambda: ["shared", "swapped"])
    noise: NoiseConfig = NoiseConfig()
    control: ControlConfig
    schedule: ScheduleConfig
    horizon: HorizonConfig = HorizonConfig()
    objective: Literal["minimize-yield", "maximize-yield", "maximize-contrast", "maximize-contrast-swapped"]
    optimizer: OptimizerSettings = OptimizerSettings()
    numerics: NumericsConfig = NumericsConfig()
    replications: int = Field(1, ge=1)
    threads: int | None = Field(None, ge=1)
    output_dir: str | None = None

    @field_validator("variants")
    @classmethod
    def _distinct(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("variants must be distinct")
        return v

    @model_validator(mode="after")
    def _experiment_shape(self):
        if self.experiment == "field-sweep":
            if not self.field_sweep:
                raise ValueError("field_sweep must not be empty")
            if self.objective in CONTRAST_OBJECTIVES:
                raise ValueError("a field sweep optimises a yield, not a contrast")
        else:
            if self.model.name != "fadh_z":
                raise ValueError("the anisotropy sweep is defined for the fadh_z model")
            if not self.j_ex_sweep_mhz:
                raise ValueError("j_ex_sweep_mhz must not be empty")
            if self.objective not in CONTRAST_OBJECTIVES:
                raise ValueError("the anisotropy sweep needs a contrast objective")
            if self.control.kind == "coherent-x":
                raise ValueError("the anisotropy sweep uses incoherent control channels")
            if not self.variants:
                raise ValueError("variants must not be empty")
        t_c = self.schedule.n_steps * self.schedule.dt
        if self.horizon.t1 is not None and self.horizon.t1 < t_c * (1 - 1e-12):
            raise ValueError(f"horizon t1={self.horizon.t1} precedes the control window end {t_c}")
        return self

    @property
    def t1(self) -> float:
        t_c = self.schedule.n_steps * self.schedule.dt
        return t_c if self.horizon.t1 is None else max(self.horizon.t1, t_c)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(data)


def load_preset(name: str) -> ExperimentConfig:
    path = PRESET_DIR / f"{name}.json"
    if not path.exists():
        known = sorted(p.stem for p in PRESET_DIR.glob("*.json"))
        raise ConfigError(f"unknown preset {name!r}; available: {known}")
    return load_config(path)


def json_schema() -> dict:
    return ExperimentConfig.model_json_schema()


def full_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """Restore the full-length settings: 1000 x 1 ns controls, t1 = 10 us for masuzawa7."""
    if cfg.model.name != "masuzawa7":
        return cfg
    return cfg.model_copy(update={"schedule": ScheduleConfig(n_steps=1000, dt=0.001),
                                  "horizon": HorizonConfig(t1=10.0, tail=cfg.horizon.tail)})
