"""Experiment configuration: a TOML file validated by pydantic.

Unknown keys are rejected everywhere.  The config hash is the SHA-256 of the
canonical JSON dump (sorted keys, no whitespace), so it does not depend on
the order in which fields appear in the file.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Union

import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..model import ModelRecipe, ReservoirRecipe


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ReservoirSection(_Strict):
    # the size is a sweep axis (sweep.reservoir_sites)
    hopping: float = 1.0
    onsite: float = 0.0
    beta: float = Field(1.0, gt=0)
    mu: float = 0.0
    system_site: int = Field(0, ge=0)


class ModelSection(_Strict):
    system_sites: int = Field(1, ge=1)
    system_onsite: list[float] = []
    system_hopping: float = 0.0
    interaction: float = 0.0
    reservoirs: list[ReservoirSection] = Field(default_factory=lambda: [ReservoirSection()], min_length=1)


class ScheduleSection(_Strict):
    w0: list[list[float]]
    wf: list[list[float]]
    t0: float = Field(1.0, ge=0)
    profile: Literal["quintic", "cubic"] = "quintic"

    @model_validator(mode="after")
    def _square(self):
        for name in ("w0", "wf"):
            m = getattr(self, name)
            if not m or any(len(row) != len(m) for row in m):
                raise ValueError(f"{name} must be a non-empty square matrix")
        if len(self.w0) != len(self.wf):
            raise ValueError("w0 and wf must have the same shape")
        return self


WaitValue = Union[float, Literal["auto"]]


class SweepSection(_Strict):
    kappa: list[float]
    n_steps: list[int]
    reservoir_sites: list[int]
    t_wait: list[WaitValue]

    @field_validator("kappa", "n_steps", "reservoir_sites", "t_wait")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("sweep axis must not be empty")
        return v

    @field_validator("kappa")
    @classmethod
    def _kappa(cls, v):
        if any(k <= 0 for k in v) or len(set(v)) != len(v):
            raise ValueError("kappa values must be positive and distinct")
        return v

    @field_validator("n_steps", "reservoir_sites")
    @classmethod
    def _positive(cls, v):
        if any(x < 1 for x in v):
            raise ValueError("entries must be positive integers")
        return v

    @field_validator("t_wait")
    @classmethod
    def _waits(cls, v):
        if any(x != "auto" and x <= 0 for x in v):
            raise ValueError("waits must be positive or 'auto'")
        return v


class ToleranceSection(_Strict):
    ledger: float = Field(1e-7, gt=0)
    slope_low: float = -1.4
    slope_high: float = -0.6


class OutputSection(_Strict):
    directory: str = "results"


class ExperimentConfig(_Strict):
    name: str
    protocol: Literal["stepwise", "staircase", "convergence"]
    backend: Literal["auto", "fock", "quadratic"] = "auto"
    seed: int = 0
    workers: int | None = Field(None, ge=1)
    steps_per_unit: int = Field(16, ge=2)
    model: ModelSection = ModelSection()
    schedule: ScheduleSection
    sweep: SweepSection
    tolerances: ToleranceSection = ToleranceSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _protocol_axes(self):
        if self.protocol == "stepwise" and self.sweep.n_steps != [1]:
            raise ValueError("sweep.n_steps must be [1] for the stepwise protocol")
        if self.protocol == "convergence" and len(self.sweep.n_steps) < 4:
            raise ValueError("sweep.n_steps needs at least four entries for a convergence study")
        if len(self.model.reservoirs) != 1:
            raise ValueError("driven protocols need exactly one reservoir")
        if len(self.schedule.w0) != self.model.system_sites:
            raise ValueError("schedule.w0 must be system_sites x system_sites")
        return self

    # -------------------------------------------------------------- helpers
    def canonical_json(self) -> str:
        # the worker count cannot change results, so it stays out of the hash
        return json.dumps(self.model_dump(mode="json", exclude={"workers"}), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def recipe(self, sites: int, kappa: float) -> ModelRecipe:
        m = self.model
        res = tuple(
            ReservoirRecipe(sites, r.hopping, r.onsite, r.beta, r.mu, r.system_site) for r in m.reservoirs
        )
        return ModelRecipe(
            res,
            kappa=kappa,
            system_sites=m.system_sites,
            system_onsite=tuple(m.system_onsite),
            system_hopping=m.system_hopping,
            interaction=m.interaction,
        )


class ConfigError(Exception):
    """Schema violation; ``path`` names the first offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def _first_error(err: ValidationError) -> ConfigError:
    e = err.errors()[0]
    path = ".".join(str(p) for p in e["loc"]) or "<root>"
    return ConfigError(path, e["msg"])


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise _first_error(err) from None


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        data = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as err:
        raise ConfigError(str(p), f"not valid TOML ({err})") from None
    except OSError as err:
        raise ConfigError(str(p), f"cannot read ({err.strerror})") from None
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    data = cfg.model_dump(mode="json", exclude_none=True)
    return tomli_w.dumps(data)
