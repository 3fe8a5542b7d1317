"""Scenario configuration files: YAML validated against a strict schema."""

from __future__ import annotations

import hashlib
import json
import math
import re
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, model_validator

from .fields import VectorField
from .noise import NoiseModel, symmetric_confusion
from .protocols import STRATEGY_TAGS, Strategy

SCENARIOS = ("qfim", "precision-sweep", "landscape", "adaptive", "noise-sweep")
PRECISION_AXES = ("B", "T", "N", "Bz")
NOISE_AXES = ("dephasing_rate", "gate_error", "readout_flip")
BOUND_TAGS = ("NLE", "RS", "LE_opt", "LE_bell", "LE_opt3")

_PI_EXPR = re.compile(r"^\s*([-+]?\d*\.?\d*(?:[eE][-+]?\d+)?)\s*\*?\s*pi\s*(?:/\s*(\d*\.?\d+))?\s*$")


def parse_real(value):
    """Accept plain numbers or strings such as "pi/4", "1.5*pi", "-pi"."""
    if isinstance(value, str):
        m = _PI_EXPR.match(value)
        if m is None:
            raise ValueError(f"not a number or multiple of pi: {value!r}")
        coef = m.group(1)
        coef = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
        den = float(m.group(2)) if m.group(2) else 1.0
        return coef * math.pi / den
    return value


Real = Annotated[float, BeforeValidator(parse_real)]


class FieldIssue(ValueError):
    """Cross-field validation failure that remembers which field is at fault."""

    def __init__(self, path: str, message: str):
        super().__init__(message)
        self.path = path


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FieldSpec(_Strict):
    B: Real = Field(ge=0.0)
    theta: Real = math.pi / 2
    phi: Real = 0.0

    def vector_field(self) -> VectorField:
        return VectorField(self.B, self.theta, self.phi)


class NoiseSpec(_Strict):
    dephasing_rate: Real = Field(0.0, ge=0.0)
    gate_error: Real = Field(0.0, ge=0.0, le=0.75)
    readout_flip: Real = Field(0.0, ge=0.0, lt=0.5)

    def model(self, **overrides) -> NoiseModel:
        vals = self.model_dump() | overrides
        flip = vals["readout_flip"]
        return NoiseModel(
            dephasing_rate=vals["dephasing_rate"],
            gate_error=vals["gate_error"],
            readout_confusion=symmetric_confusion(flip) if flip > 0 else None,
        )


class SweepSpec(_Strict):
    parameter: str
    values: Optional[list[Real]] = None
    start: Optional[Real] = None
    stop: Optional[Real] = None
    points: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _range(self):
        if self.values is not None:
            if not self.values:
                raise FieldIssue("values", "sweep values must be non-empty")
            if any(v is not None for v in (self.start, self.stop, self.points)):
                raise FieldIssue("values", "give either values or start/stop/points, not both")
        elif None in (self.start, self.stop, self.points):
            raise FieldIssue("values", "sweep needs values or all of start, stop, points")
        return self

    def grid(self) -> list[float]:
        if self.values is not None:
            return [float(v) for v in self.values]
        return [float(v) for v in np.linspace(self.start, self.stop, self.points)]


class ScanSpec(_Strict):
    axes: tuple[str, str]
    half_width: tuple[Real, Real] = Field(default=(0.5, 0.5))
    points: int = Field(41, ge=3)


class PointSpec(_Strict):
    B: Real = Field(gt=0.0)
    theta: Real = math.pi / 2
    phi: Real = 0.0
    T: Real = Field(gt=0.0)


class AdaptiveSpec(_Strict):
    runs: int = Field(10, ge=1)
    rounds: int = Field(40, ge=1, le=40)
    start_box: Optional[list[tuple[Real, Real]]] = None


class ScenarioConfig(_Strict):
    """One runnable scenario. Unknown keys are rejected."""

    scenario: Literal["qfim", "precision-sweep", "landscape", "adaptive", "noise-sweep"]
    name: str = Field(min_length=1, pattern=r"^[A-Za-z0-9_.-]+$")
    strategy: Literal["RS", "NLE", "LE_bell", "LE_opt"] = "RS"
    strategies: list[Literal["NLE", "RS", "LE_opt", "LE_bell", "LE_opt3"]] = Field(
        default_factory=lambda: ["NLE", "RS", "LE_bell"]
    )
    components: Literal[2, 3] = 3
    field: Optional[FieldSpec] = None
    field2: Optional[FieldSpec] = None
    signal: Optional[list[Real]] = None
    control: Union[Literal["matched", "balanced"], list[Real]] = "balanced"
    T: Real = Field(1.5 * math.pi, gt=0.0)
    N: Union[int, list[int]] = 1
    shots: int = Field(600, ge=1)
    trials: int = Field(0, ge=0)
    starts: int = Field(10, ge=1)
    offset: Real = Field(1.5, gt=0.0)
    window: Real = Field(0.3, gt=0.0)
    noise: NoiseSpec = NoiseSpec()
    sweep: Optional[SweepSpec] = None
    scan: Optional[ScanSpec] = None
    points: Optional[list[PointSpec]] = None
    random_points: int = Field(0, ge=0)
    adaptive: AdaptiveSpec = AdaptiveSpec()
    output: Optional[str] = None
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _consistent(self):
        if self.strategy == "LE_opt" and self.components != 2:
            raise FieldIssue("components", "strategy LE_opt requires components: 2")
        for n in self.cycle_counts:
            if n < 1:
                raise FieldIssue("N", "N must be positive")
        if self.signal is not None and len(self.signal) != self.strategy_obj.num_params:
            raise FieldIssue(
                "signal",
                f"signal has {len(self.signal)} entries; {self.strategy} expects "
                f"{self.strategy_obj.num_params} {self.strategy_obj.axes}"
            )
        if isinstance(self.control, list) and len(self.control) != self.strategy_obj.num_params:
            raise FieldIssue("control", f"control must have {self.strategy_obj.num_params} entries")
        need_field = self.scenario in ("precision-sweep", "noise-sweep") or (
            self.scenario in ("landscape", "adaptive") and self.signal is None
        )
        if need_field and self.field is None:
            raise FieldIssue("field", f"scenario {self.scenario} needs 'field' (or 'signal')")
        getattr(self, "_check_" + self.scenario.replace("-", "_"))()
        return self

    def _check_qfim(self):
        if not self.points and self.random_points == 0:
            raise FieldIssue("points", "qfim needs 'points' or 'random_points'")

    def _check_precision_sweep(self):
        if self.sweep is None or self.sweep.parameter not in PRECISION_AXES:
            raise FieldIssue("sweep.parameter", f"precision-sweep needs one of {PRECISION_AXES}")
        if self.field2 is not None:
            raise FieldIssue("field2", "precision-sweep assumes equal module fields")
        if "LE_opt3" in self.strategies and self.components != 3:
            raise FieldIssue("strategies", "LE_opt3 is a 3-component bound")
        if "LE_opt" in self.strategies and self.components != 2:
            raise FieldIssue("strategies", "LE_opt is a 2-component bound")
        if self.sweep.parameter == "N" and any(int(v) != v or v < 1 for v in self.sweep.grid()):
            raise FieldIssue("sweep.values", "N sweep values must be positive integers")

    def _check_landscape(self):
        if self.scan is None:
            raise FieldIssue("scan", "landscape needs 'scan' with exactly two axes")
        bad = [a for a in self.scan.axes if a not in self.strategy_obj.axes]
        if bad or self.scan.axes[0] == self.scan.axes[1]:
            raise FieldIssue("scan.axes", f"must be two distinct names from {self.strategy_obj.axes}")

    def _check_adaptive(self):
        box = self.adaptive.start_box
        if box is not None:
            if len(box) != self.strategy_obj.num_params:
                raise FieldIssue("adaptive.start_box", f"needs {self.strategy_obj.num_params} rows")
            if any(lo >= hi for lo, hi in box):
                raise FieldIssue("adaptive.start_box", "ranges must be non-empty")

    def _check_noise_sweep(self):
        if self.sweep is None or self.sweep.parameter not in NOISE_AXES:
            raise FieldIssue("sweep.parameter", f"noise-sweep needs one of {NOISE_AXES}")
        if self.trials < 2:
            raise FieldIssue("trials", "noise-sweep needs trials >= 2")

    @property
    def strategy_obj(self) -> Strategy:
        return Strategy(self.strategy, self.components)

    @property
    def cycle_counts(self) -> list[int]:
        return list(self.N) if isinstance(self.N, list) else [self.N]

    def fields(self) -> tuple[VectorField, VectorField]:
        f1 = self.field.vector_field()
        f2 = self.field2.vector_field() if self.field2 is not None else f1
        if self.components == 2:
            f1 = VectorField(f1.B, math.pi / 2, f1.phi)
            f2 = VectorField(f2.B, math.pi / 2, f2.phi)
        return f1, f2

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


class ConfigError(Exception):
    """Unreadable or schema-violating configuration; ``path`` names the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


def load_config(path: str | Path, seed: int | None = None) -> ScenarioConfig:
    from pydantic import ValidationError

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be a mapping")
    if seed is not None:
        data["seed"] = seed
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = [str(p) for p in err["loc"]]
        issue = err.get("ctx", {}).get("error")
        if isinstance(issue, FieldIssue):
            raise ConfigError(".".join(loc + [issue.path]), str(issue)) from exc
        raise ConfigError(".".join(loc) or "<root>", err["msg"]) from exc


__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_real", "SCENARIOS", "STRATEGY_TAGS"]
