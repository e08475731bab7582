"""JSON experiment configuration.

A config is one JSON document::

    {
      "charge":   {"lambda": 6.28, "puncture": [0, 0], "axis_sign": 1},
      "sources":  {"C": [1, 0], "D": [-1, 0]},
      "meetings": {"A": [0, 1], "B": [0, -1], "A_prime": ..., "B_prime": ...},
      "moments":  [{"magnitude": 1.0, "sign": 1}, ... four entries ...],
      "paths":    {"C->A": [[x, y], ...], "C->B": ..., "D->B": ..., "D->A": ...},
      "scan":     {"locus_a": [[x, y], ...], "locus_b": [[x, y], ...]},
      "numerics": {"nodes": 64, "exclusion_radius": 0.001},
      "output":   {"format": "json"}
    }

``paths``, ``scan``, the primed meetings, ``numerics`` and ``output`` are
optional.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, FiniteFloat, ValidationError, field_validator

from . import geometry as geo
from .engine import ChshSettings, ExperimentLayout
from .errors import ConfigError
from .geometry import LineCharge, MagneticMoment, Polyline

PointModel = tuple[FiniteFloat, FiniteFloat]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class ChargeConfig(_Strict):
    lam: FiniteFloat = Field(alias="lambda")
    puncture: PointModel = (0.0, 0.0)
    axis_sign: Literal[1, -1] = 1


class SourcesConfig(_Strict):
    C: PointModel
    D: PointModel


class MeetingsConfig(_Strict):
    A: PointModel
    B: PointModel
    A_prime: Optional[PointModel] = None
    B_prime: Optional[PointModel] = None


class MomentConfig(_Strict):
    magnitude: FiniteFloat = Field(ge=0)
    sign: Literal[1, -1] = 1


def _check_polyline(points: list) -> list:
    if len(points) < 2:
        raise ValueError("a path needs at least two points")
    for i in range(len(points) - 1):
        if tuple(points[i]) == tuple(points[i + 1]):
            raise ValueError(f"consecutive points {i} and {i + 1} coincide")
    return points


class PathsConfig(_Strict):
    c_to_a: list[PointModel] = Field(alias="C->A")
    c_to_b: list[PointModel] = Field(alias="C->B")
    d_to_b: list[PointModel] = Field(alias="D->B")
    d_to_a: list[PointModel] = Field(alias="D->A")

    _check = field_validator("c_to_a", "c_to_b", "d_to_b", "d_to_a")(_check_polyline)

    def ordered(self) -> list[list[PointModel]]:
        return [self.c_to_a, self.c_to_b, self.d_to_b, self.d_to_a]


class ScanConfig(_Strict):
    locus_a: list[PointModel] = Field(min_length=2)
    locus_b: list[PointModel] = Field(min_length=2)


class NumericsConfig(_Strict):
    nodes: int = Field(default=geo.DEFAULT_NODES, ge=2)
    exclusion_radius: FiniteFloat = Field(default=geo.DEFAULT_EXCLUSION_RADIUS, ge=0)


class OutputConfig(_Strict):
    format: Literal["json", "csv"] = "json"


class ExperimentConfig(_Strict):
    charge: ChargeConfig
    sources: SourcesConfig
    meetings: MeetingsConfig
    moments: list[MomentConfig] = Field(min_length=4, max_length=4)
    paths: Optional[PathsConfig] = None
    scan: Optional[ScanConfig] = None
    numerics: NumericsConfig = NumericsConfig()
    output: OutputConfig = OutputConfig()

    def to_layout(self) -> ExperimentLayout:
        paths = None
        if self.paths is not None:
            paths = tuple(Polyline(tuple(p)) for p in self.paths.ordered())
        try:
            return ExperimentLayout(
                source_c=self.sources.C,
                source_d=self.sources.D,
                meeting_a=self.meetings.A,
                meeting_b=self.meetings.B,
                moments=tuple(MagneticMoment(m.magnitude, m.sign) for m in self.moments),
                charge=LineCharge(self.charge.lam, self.charge.puncture, self.charge.axis_sign),
                paths=paths,
                exclusion_radius=self.numerics.exclusion_radius,
            )
        except ValueError as exc:
            raise ConfigError(f"paths: {exc}") from exc

    def chsh_settings(self) -> ChshSettings:
        m = self.meetings
        missing = [k for k in ("A_prime", "B_prime") if getattr(m, k) is None]
        if missing:
            raise ConfigError(
                "; ".join(f"meetings.{k}: required for geometric CHSH settings" for k in missing)
            )
        return ChshSettings.geometric(m.A, m.A_prime, m.B, m.B_prime)

    def with_overrides(self, nodes=None, exclusion_radius=None, fmt=None) -> "ExperimentConfig":
        numerics = self.numerics.model_copy(
            update={
                k: v
                for k, v in (("nodes", nodes), ("exclusion_radius", exclusion_radius))
                if v is not None
            }
        )
        try:
            numerics = NumericsConfig.model_validate(numerics.model_dump())
        except ValidationError as exc:
            raise ConfigError(format_validation_error(exc, prefix="numerics")) from exc
        output = self.output if fmt is None else OutputConfig(format=fmt)
        return self.model_copy(update={"numerics": numerics, "output": output})

    def dump(self) -> dict:
        return self.model_dump(by_alias=True, exclude_none=True, mode="json")


def format_validation_error(exc: ValidationError, prefix: str = "") -> str:
    lines = []
    for err in exc.errors():
        parts = ([prefix] if prefix else []) + [str(p) for p in err["loc"]]
        loc = ".".join(parts) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "\n".join(lines)


def parse_config(data) -> ExperimentConfig:
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from exc
    # catch path/endpoint mismatches up front, with the offending key
    config.to_layout()
    return config


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


def _reject_constant(name):
    raise ValueError(f"non-finite number {name} is not allowed")
