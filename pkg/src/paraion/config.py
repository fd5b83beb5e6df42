"""Run configuration: a single JSON document validated with pydantic."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import InvalidArgumentError
from .paraalgebra import ParaModel, parse_kind, short_kind, vacuum_labels

# trap frequencies of the reference setup, rad/s
OMEGA_X = 2 * math.pi * 3.05e6
OMEGA_Y = 2 * math.pi * 2.88e6
DEFAULT_PB_TRUNCATION = 35


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Strict):
    kind: str = Field(description="para_fermi / para_bose (aliases pF, pB)")
    order: int = Field(description="order of para-quantization p, even and >= 2")
    branch: Literal["spin_down", "spin_up"] = "spin_down"

    @field_validator("kind")
    @classmethod
    def _kind(cls, v: str) -> str:
        try:
            return short_kind(parse_kind(v))
        except InvalidArgumentError as exc:
            raise ValueError(str(exc)) from None

    @field_validator("order")
    @classmethod
    def _order(cls, v: int) -> int:
        if v < 2 or v % 2:
            raise ValueError("order must be an even integer >= 2")
        return v


class CouplingConfig(_Strict):
    """Either ``g`` or the calibrated sideband pair (omega_r, omega_b), all rad/s."""

    g: Optional[float] = Field(default=None, gt=0)
    omega_r: Optional[float] = Field(default=None, gt=0)
    omega_b: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _pair(self):
        if (self.omega_r is None) != (self.omega_b is None):
            raise ValueError("omega_r and omega_b must be given together")
        if self.g is None and self.omega_r is None:
            self.g = 1.0
        return self

    @property
    def has_pair(self) -> bool:
        return self.omega_r is not None

    @property
    def value(self) -> float:
        """g itself, or the mean sideband frequency when only the pair is given."""
        if self.g is not None:
            return float(self.g)
        return 0.5 * (self.omega_r + self.omega_b)


class TruncationConfig(_Strict):
    d_x: int = Field(ge=2)
    d_y: int = Field(ge=2)


class BasisLabel(_Strict):
    spin: Literal["down", "up"]
    n_x: int = Field(ge=0)
    n_y: int = Field(ge=0)


class TimeConfig(_Strict):
    """Grid in dimensionless gt (default) or seconds: t_max with points, or an explicit list."""

    unit: Literal["gt", "s"] = "gt"
    t_max: Optional[float] = Field(default=None, gt=0)
    points: int = Field(default=200, ge=2)
    times: Optional[List[float]] = None

    @model_validator(mode="after")
    def _grid(self):
        if (self.t_max is None) == (self.times is None):
            raise ValueError("give exactly one of t_max or times")
        if self.times is not None:
            t = np.asarray(self.times, dtype=float)
            if t.size < 2:
                raise ValueError("times needs at least 2 entries")
            if np.any(t < 0) or np.any(np.diff(t) < 0) or not np.all(np.isfinite(t)):
                raise ValueError("times must be finite, nonnegative and sorted")
        return self

    def seconds(self, g: float) -> np.ndarray:
        t = (np.linspace(0.0, self.t_max, self.points) if self.times is None
             else np.asarray(self.times, dtype=float))
        return t / g if self.unit == "gt" else t


class NoiseConfig(_Strict):
    enabled: bool = False
    heating_rate: float = Field(default=0.0, ge=0, description="phonons per second")
    n_th: Optional[float] = Field(default=None, gt=0)
    per_mode: Dict[Literal["x", "y"], float] = Field(default_factory=dict)
    method: Literal["rk4", "adaptive"] = "rk4"

    @field_validator("per_mode")
    @classmethod
    def _rates(cls, v):
        if any(r < 0 for r in v.values()):
            raise ValueError("per-mode heating rates must be >= 0")
        return v


class SamplingConfig(_Strict):
    enabled: bool = False
    shots: int = Field(default=300, ge=1)
    seed: int = Field(default=0, ge=0)


class OutputConfig(_Strict):
    csv: str = "trajectory.csv"
    svg: Optional[str] = "trajectory.svg"
    columns: List[Literal["P_up", "n_x", "n_y", "N_para", "leakage"]] = Field(
        default_factory=lambda: ["P_up"], min_length=1)
    snapshots: bool = False


class MetadataConfig(_Strict):
    omega_x: float = Field(default=OMEGA_X, gt=0, description="x trap frequency, rad/s")
    omega_y: float = Field(default=OMEGA_Y, gt=0, description="y trap frequency, rad/s")
    label: str = ""


class RunConfig(_Strict):
    model: ModelConfig
    coupling: CouplingConfig = Field(default_factory=CouplingConfig)
    truncation: Optional[TruncationConfig] = None
    initial_state: Union[Literal["vacuum"], BasisLabel] = "vacuum"
    time: TimeConfig
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    outputs: OutputConfig = Field(default_factory=OutputConfig)
    method: Literal["matrix_exponential", "ode_rk"] = "matrix_exponential"
    strict: bool = False
    metadata: MetadataConfig = Field(default_factory=MetadataConfig)

    @model_validator(mode="after")
    def _fits(self):
        if self.model.kind == "pF" and self.model.branch != "spin_down":
            raise ValueError("para-Fermi models only have the spin_down vacuum")
        d_x, d_y = self.dims()
        if isinstance(self.initial_state, BasisLabel):
            n_x, n_y = self.initial_state.n_x, self.initial_state.n_y
        else:
            _, n_x, n_y = vacuum_labels(self.para_model())
        if n_x >= d_x or n_y >= d_y:
            raise ValueError(f"initial state |{n_x}, {n_y}> lies outside truncation ({d_x}, {d_y})")
        if self.model.kind == "pF" and min(d_x, d_y) <= self.model.order // 2:
            raise ValueError("para-Fermi truncation must exceed p/2 in both modes")
        return self

    def dims(self) -> Tuple[int, int]:
        if self.truncation is not None:
            return self.truncation.d_x, self.truncation.d_y
        if self.model.kind == "pF":
            d = self.model.order // 2 + 3
            return d, d
        return DEFAULT_PB_TRUNCATION, DEFAULT_PB_TRUNCATION

    def para_model(self, g: Optional[float] = None) -> ParaModel:
        return ParaModel(self.model.kind, self.model.order, self.model.branch,
                         self.coupling.value if g is None else g)

    def times_s(self) -> np.ndarray:
        return self.time.seconds(self.coupling.value)

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise InvalidArgumentError(f"invalid config: {format_validation_error(exc)}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"config {path} must be a JSON object")
    return parse_config(data)


def json_schema() -> dict:
    return RunConfig.model_json_schema()
