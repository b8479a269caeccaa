"""Experiment configuration: JSON schema, dataclasses and validation.

A config is one JSON document. Every field has a default, and the fully
resolved config (defaults included) is echoed into each run record.
Rationals may be written as numbers or as strings such as ``"3/10"``.
"""

from __future__ import annotations

import json
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass
from fractions import Fraction
from typing import Any, Optional

import jsonschema

from .measures import MeasureModel
from .symbolic import HoleSpec, PointSpec, SymbolicSystem, parse_word

KINDS = ("survival", "escape-rate", "theta", "lcurve", "lzero", "union-check", "hypotheses", "phi", "ball")


class ConfigError(ValueError):
    """Raised for any invalid configuration, before computation starts."""


_rational = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^\s*-?\d+(\s*/\s*\d+|\.\d+)?\s*$"}]}
_int_list = {"type": "array", "items": {"type": "integer"}}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ExperimentConfig",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(KINDS)},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alphabet_size": {"type": "integer", "minimum": 2},
                "transitions": {"type": ["array", "null"], "items": {"type": "array", "items": {"enum": [0, 1]}}},
                "map": {"enum": [None, "doubling"]},
            },
        },
        "measure": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["bernoulli", "markov"]},
                "prob": {"type": ["array", "null"], "items": _rational},
                "P": {"type": ["array", "null"], "items": {"type": "array", "items": _rational}},
            },
        },
        "point": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["periodic", "stream", "rational"]},
                "period": {"type": "string"},
                "preperiod": {"type": "string"},
                "generator": {"enum": ["thue-morse", "iid-uniform"]},
                "seed": {"type": "integer", "minimum": 0},
                "value": {"type": ["string", "null"]},
            },
        },
        "hole": {"type": "array", "items": {"type": "string", "minLength": 1}},
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_range": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                "alpha": {"type": "array", "items": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]}},
                "s": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "s_range": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "r_schedule": {"type": "array", "items": _rational},
                "t_max": {"type": "integer", "minimum": 1},
                "k_max": {"type": "integer", "minimum": 0},
                "k": _int_list,
                "p": {"type": ["integer", "null"], "minimum": 1},
                "v": {"type": "integer", "minimum": 1},
                "sides": {"type": "array", "items": {"enum": ["left", "right"]}},
            },
        },
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "caps": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "state_cap": {"type": "integer", "minimum": 1},
                "enumeration_cap": {"type": "integer", "minimum": 1},
                "mc_trials": {"type": "integer", "minimum": 0},
                "mc_horizon": {"type": "integer", "minimum": 1},
                "max_iter": {"type": "integer", "minimum": 1},
                "period_bound": {"type": "integer", "minimum": 1},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "extrapolation": {"type": "number", "exclusiveMinimum": 0},
                "rate": {"type": "number", "exclusiveMinimum": 0},
                "theta": {"type": "number", "exclusiveMinimum": 0},
                "decay_threshold": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "exact": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 1},
        "out_dir": {"type": "string"},
    },
}


@dataclass
class SystemConfig:
    alphabet_size: int = 2
    transitions: Optional[list[list[int]]] = None
    map: Optional[str] = None


@dataclass
class MeasureConfig:
    kind: str = "bernoulli"
    prob: Optional[list] = None
    P: Optional[list[list]] = None


@dataclass
class PointConfig:
    kind: str = "periodic"
    period: str = "0"
    preperiod: str = ""
    generator: str = "thue-morse"
    seed: int = 0
    value: Optional[str] = None


@dataclass
class GridConfig:
    n_range: list[int] = field(default_factory=lambda: [1, 10])
    alpha: list = field(default_factory=lambda: [1.0])
    s: list[float] = field(default_factory=lambda: [1.0])
    s_range: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5, 6, 7, 8])
    r_schedule: list = field(default_factory=lambda: [f"1/{2 ** k}" for k in range(3, 10)])
    t_max: int = 16
    k_max: int = 16
    k: list[int] = field(default_factory=lambda: [1, 2, 3])
    p: Optional[int] = None
    v: int = 2
    sides: list[str] = field(default_factory=lambda: ["left", "right"])


@dataclass
class CapsConfig:
    state_cap: int = 200_000
    enumeration_cap: int = 2**20
    mc_trials: int = 0
    mc_horizon: int = 200_000
    max_iter: int = 1_000_000
    period_bound: int = 64


@dataclass
class ToleranceConfig:
    extrapolation: float = 1e-3
    rate: float = 1e-12
    theta: float = 1e-9
    decay_threshold: float = 0.05


@dataclass
class ExperimentConfig:
    kind: str = "survival"
    system: SystemConfig = field(default_factory=SystemConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    point: PointConfig = field(default_factory=PointConfig)
    hole: list[str] = field(default_factory=lambda: ["00"])
    grids: GridConfig = field(default_factory=GridConfig)
    master_seed: int = 0
    caps: CapsConfig = field(default_factory=CapsConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    exact: bool = True
    threads: int = 1
    out_dir: str = "out"

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        cfg = _build(cls, data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        data = self.to_dict()
        data.update(changes)
        return ExperimentConfig.from_dict(data)

    # -- semantic checks and derived objects --------------------------------

    def validate(self) -> None:
        """Build every derived object once so that errors surface before any work."""
        try:
            sys_ = self.symbolic_system()
            mu = self.measure_model()
            mu.check_compatible(sys_)
            if self.kind in ("survival", "escape-rate") and self.hole:
                self.hole_spec()
            if self.kind == "ball":
                if self.system.map not in (None, "doubling") or sys_.alphabet_size != 2:
                    raise ConfigError("ball experiments need the doubling map on two symbols")
                if mu.kind != "bernoulli":
                    raise ConfigError("ball experiments need a Bernoulli coding measure")
                self.ball_center()
                rs = self.radii()
                if not rs or any(b >= a for a, b in zip(rs, rs[1:])) or not all(0 < r < Fraction(1, 2) for r in rs):
                    raise ConfigError("r_schedule must be strictly decreasing radii in (0, 1/2)")
            else:
                self.point_spec().check(sys_)
        except ConfigError:
            raise
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise ConfigError(str(exc)) from None
        lo, hi = self.grids.n_range
        if lo > hi:
            raise ConfigError("grids/n_range must be [low, high] with low <= high")
        if any(b <= a for a, b in zip(self.grids.s_range, self.grids.s_range[1:])):
            raise ConfigError("grids/s_range must be increasing")

    def number(self, x):
        value = Fraction(x.replace(" ", "")) if isinstance(x, str) else Fraction(str(x))
        return value if self.exact else float(value)

    def symbolic_system(self) -> SymbolicSystem:
        return SymbolicSystem(self.system.alphabet_size, self.system.transitions and tuple(map(tuple, self.system.transitions)))

    def measure_model(self) -> MeasureModel:
        k = self.system.alphabet_size
        m = self.measure
        if m.kind == "bernoulli":
            prob = m.prob if m.prob is not None else [f"1/{k}"] * k
            if len(prob) != k:
                raise ConfigError(f"measure/prob has {len(prob)} entries for {k} symbols")
            return MeasureModel.bernoulli([self.number(p) for p in prob])
        if m.P is None:
            raise ConfigError("a Markov measure needs measure/P")
        return MeasureModel.markov([[self.number(p) for p in row] for row in m.P], system=self.symbolic_system())

    def point_spec(self) -> PointSpec:
        pt = self.point
        if pt.kind == "periodic":
            return PointSpec.periodic(parse_word(pt.period), parse_word(pt.preperiod))
        if pt.kind == "stream":
            return PointSpec.stream(pt.generator, pt.seed, self.system.alphabet_size)
        raise ConfigError("point kind 'rational' is only meaningful for ball experiments")

    def ball_center(self) -> Fraction:
        from .balls import thue_morse_real

        pt = self.point
        if pt.kind == "rational":
            if pt.value is None:
                raise ConfigError("point/value is required for a rational point")
            if pt.value == "thue-morse":
                return thue_morse_real()
            z = Fraction(pt.value.replace(" ", ""))
            if not 0 <= z < 1:
                raise ConfigError("ball center must lie in [0, 1)")
            return z
        # symbolic points map to the real with the same binary digits
        from .balls import word_to_index

        w = self.point_spec().prefix(64)
        return Fraction(word_to_index(w), 2**64) if pt.kind == "stream" else _periodic_real(pt)

    def radii(self) -> list[Fraction]:
        return [Fraction(r.replace(" ", "")) if isinstance(r, str) else Fraction(str(r)) for r in self.grids.r_schedule]

    def hole_spec(self) -> HoleSpec:
        if not self.hole:
            raise ConfigError("hole must list at least one word")
        return HoleSpec.of(*self.hole, system=self.symbolic_system())

    def n_values(self) -> range:
        lo, hi = self.grids.n_range
        return range(lo, hi + 1)

    def alphas(self) -> list:
        return [a if a == "inf" else float(a) for a in self.grids.alpha]


def _periodic_real(pt: PointConfig) -> Fraction:
    """Exact rational whose binary expansion is preperiod followed by period repeated."""
    pre, per = parse_word(pt.preperiod), parse_word(pt.period)
    if any(s > 1 for s in pre + per):
        raise ConfigError("a ball center needs binary digits")
    def val(w):
        j = 0
        for s in w:
            j = 2 * j + s
        return j
    head = Fraction(val(pre), 2 ** len(pre))
    tail = Fraction(val(per), 2 ** len(per) - 1) / 2 ** len(pre)
    return (head + tail) % 1


def _build(cls, data: dict):
    kwargs: dict[str, Any] = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        default = f.default_factory() if f.default_factory is not MISSING else f.default
        if is_dataclass(default) and isinstance(value, dict):
            value = _build(type(default), value)
        kwargs[f.name] = value
    return cls(**kwargs)
