"""Run configuration: a YAML document validated against a strict schema."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

MODELS = ("model1", "model2", "model3", "model4", "select", "importance")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PointInput(_Strict):
    path: str
    column: str
    value_column: str = "value"
    cell: float = Field(0.1, gt=0)
    power: float = Field(2.0, gt=0)


class Inputs(_Strict):
    geometry: str
    attributes: list[str] = Field(min_length=1)
    fips_column: str = "FIPS"
    fips_property: Optional[str] = None
    daily: list[str] = []
    daily_fips_column: str = "fips"
    daily_date_column: str = "date"
    points: list[PointInput] = []


class WeightsConfig(_Strict):
    kind: Literal["queen", "rook", "distance"] = "queen"
    metric: Literal["euclidean", "arc", "manhattan"] = "euclidean"
    threshold: Optional[float] = Field(None, gt=0)
    min_neighbors: int = Field(1, ge=0)
    standardize: bool = True

    @model_validator(mode="after")
    def _band(self):
        if self.kind == "distance" and self.threshold is None:
            raise ValueError("distance weights need a threshold")
        return self


class ResponseConfig(_Strict):
    variable: str
    aggregation: Literal["cumulative", "monthly", "attribute"] = "cumulative"
    through: Optional[dt.date] = None
    months: list[tuple[int, int]] = []
    per_capita: bool = False
    population_column: str = "POP"
    scale: float = Field(10000.0, gt=0)

    @field_validator("months")
    @classmethod
    def _months(cls, value):
        for year, month in value:
            if not 1 <= month <= 12:
                raise ValueError(f"month must be 1..12, got {month}")
        if len(set(value)) != len(value):
            raise ValueError("months are repeated")
        return value

    @model_validator(mode="after")
    def _consistent(self):
        if self.aggregation == "monthly" and not self.months:
            raise ValueError("monthly aggregation needs a months list")
        if self.aggregation != "monthly" and self.months:
            raise ValueError("months are only used with monthly aggregation")
        return self


class LocalConfig(_Strict):
    kernel: Literal["bisquare"] = "bisquare"
    bandwidth: Union[Literal["auto"], int] = "auto"
    criterion: Literal["aicc"] = "aicc"
    metric: Literal["euclidean", "arc", "manhattan"] = "euclidean"
    alpha: float = Field(0.05, gt=0, lt=1)
    intervals: bool = False
    pin_bandwidths: bool = False
    mgwr: bool = True


class SelectionConfig(_Strict):
    p_enter: float = Field(0.05, gt=0, lt=1)
    vif_cap: float = Field(10.0, ge=1)
    group_vif_cap: float = Field(4.0, ge=1)


class ForestSettings(_Strict):
    n_trees: int = Field(500, ge=1)
    max_features: Optional[int] = Field(None, ge=1)
    min_leaf: int = Field(5, ge=1)
    bootstrap: bool = True


class RunConfig(_Strict):
    model: Literal["model1", "model2", "model3", "model4", "select", "importance"]
    inputs: Inputs
    response: ResponseConfig
    weights: WeightsConfig = WeightsConfig()
    covariates: list[str] = []
    groups: dict[str, list[str]] = {}
    local: LocalConfig = LocalConfig()
    selection: SelectionConfig = SelectionConfig()
    forest: ForestSettings = ForestSettings()
    seed: int = Field(0, ge=0, lt=2**64)
    threads: Optional[int] = Field(None, ge=1)
    output_dir: str = "out"

    @model_validator(mode="after")
    def _model_needs(self):
        if self.model == "model3":
            if not self.groups:
                raise ValueError("model3 needs groups")
        elif self.model == "select":
            if not (self.covariates or self.groups):
                raise ValueError("select needs covariates or groups")
        elif not self.covariates:
            raise ValueError(f"{self.model} needs covariates")
        if any(not cols for cols in self.groups.values()):
            raise ValueError("every group needs at least one column")
        if self.model == "model4" and self.response.aggregation != "monthly":
            raise ValueError("model4 needs monthly aggregation with a months list")
        if self.model != "model4" and len(self.response.months) > 1:
            raise ValueError(f"{self.model} takes at most one month")
        if self.response.aggregation in ("cumulative", "monthly") and not self.inputs.daily:
            raise ValueError(f"{self.response.aggregation} aggregation needs daily inputs")
        return self

    def canonical(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _path_of(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def parse_config(data, base_dir: str | Path | None = None) -> RunConfig:
    """Validate a config mapping; relative input paths resolve against ``base_dir``."""
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a mapping")
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = [f"{_path_of(e['loc'])}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("\n".join(lines)) from None
    if base_dir is None:
        return cfg
    base = Path(base_dir)

    def fix(p: str) -> str:
        return str((base / p).resolve()) if not Path(p).is_absolute() else p

    inputs = cfg.inputs.model_copy(update={
        "geometry": fix(cfg.inputs.geometry),
        "attributes": [fix(p) for p in cfg.inputs.attributes],
        "daily": [fix(p) for p in cfg.inputs.daily],
        "points": [pt.model_copy(update={"path": fix(pt.path)}) for pt in cfg.inputs.points],
    })
    return cfg.model_copy(update={"inputs": inputs, "output_dir": fix(cfg.output_dir)})


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return parse_config(data, path.parent)
