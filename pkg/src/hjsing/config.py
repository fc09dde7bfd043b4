"""Experiment configuration: a JSON document validated against a published schema."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field

import jsonschema
import numpy as np

from .applications import ExperimentFixture, fixture
from .geometry import manifold_from_dict
from .laxoleinik import CharacteristicOfSet, Evolution, Window, datum_from_dict
from .singularity import Tolerances
from .tonelli import lagrangian_from_dict

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_VECTOR = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ExperimentConfig",
    "type": "object",
    "additionalProperties": False,
    "required": ["manifold", "lagrangian", "datum", "window"],
    "properties": {
        "name": {"type": "string"},
        "manifold": {"type": "object", "required": ["kind"],
                     "properties": {"kind": {"enum": ["euclidean", "torus", "sphere", "product"]}}},
        "lagrangian": {"type": "object", "required": ["kind"],
                       "properties": {"kind": {"enum": ["kinetic", "mechanical"]},
                                      "potential": {"type": "string"}}},
        "datum": {"type": "object", "required": ["kind"],
                  "properties": {"kind": {"enum": ["characteristic", "expression", "sampled"]}}},
        "window": {"type": "object", "required": ["t_min", "t_max"], "additionalProperties": False,
                   "properties": {"t_min": _POSITIVE, "t_max": _POSITIVE, "lo": _VECTOR, "hi": _VECTOR}},
        "h": {"oneOf": [_POSITIVE, {"type": "null"}]},
        "tolerances": {"type": "object", "additionalProperties": False,
                       "properties": {k: {"oneOf": [_POSITIVE, {"type": "null"}]}
                                      for k in ("eps_opt", "eps_cal", "delta_sep", "delta_noise", "eps_ray")}},
        "horizon": {"oneOf": [_POSITIVE, {"type": "null"}]},
        "t": _POSITIVE,
        "t_check": _POSITIVE,
        "durations": {"type": "array", "items": _POSITIVE},
        "cut_step": _POSITIVE,
        "seeds": {"type": "integer", "minimum": 0},
        "rng_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "outputs": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}


class ConfigError(ValueError):
    """The configuration violates the schema or a semantic invariant."""


@dataclass
class ToleranceBlock:
    eps_opt: float = 1e-6
    eps_cal: float | None = None
    delta_sep: float | None = None
    delta_noise: float | None = None
    eps_ray: float | None = None


@dataclass
class ExperimentConfig:
    manifold: dict
    lagrangian: dict
    datum: dict
    window: dict
    name: str = "custom"
    h: float | None = None
    tolerances: ToleranceBlock = field(default_factory=ToleranceBlock)
    horizon: float | None = None
    t: float = 1.0
    t_check: float = 2.0
    durations: list = field(default_factory=lambda: [1.0])
    cut_step: float = 0.05
    seeds: int = 100
    rng_seed: int = 0
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(exc.message) from exc
        data = copy.deepcopy(data)
        data["tolerances"] = ToleranceBlock(**data.get("tolerances", {}))
        cfg = cls(**data)
        cfg.check()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not JSON: {exc}") from exc
        return cls.from_dict(data)

    def check(self):
        w = self.window
        if not w["t_min"] < w["t_max"]:
            raise ConfigError("window time interval is empty")
        if ("lo" in w) != ("hi" in w):
            raise ConfigError("window needs both lo and hi")
        if "lo" in w and (len(w["lo"]) != len(w["hi"]) or any(b <= a for a, b in zip(w["lo"], w["hi"]))):
            raise ConfigError("window box is empty")
        try:
            self.build()
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def build(self) -> Evolution:
        m = manifold_from_dict(self.manifold)
        L = lagrangian_from_dict(self.lagrangian, m)
        w = self.window
        window = Window(w["t_min"], w["t_max"], w.get("lo"), w.get("hi"))
        if window.lo is not None and len(window.lo) != m.ambient:
            raise ValueError("window box dimension does not match the manifold")
        h = self.h if self.h is not None else 0.05
        datum = datum_from_dict(self.datum, m, h)
        return Evolution(datum, L, m, window, h=self.h, eps_opt=self.tolerances.eps_opt)

    def tolerances_for(self, ev: Evolution) -> Tolerances:
        tb = self.tolerances
        return Tolerances.for_evolution(ev, delta_sep=tb.delta_sep, delta_noise=tb.delta_noise,
                                        eps_cal=tb.eps_cal, eps_ray=tb.eps_ray, horizon=self.horizon)

    def fixture(self) -> ExperimentFixture:
        """The named fixture when the config came from the registry, else an ad hoc one."""
        try:
            return fixture(self.name)
        except KeyError:
            ev = self.build()
            if not isinstance(ev.datum, CharacteristicOfSet):
                raise ConfigError("this experiment needs a characteristic-of-set datum")
            return ExperimentFixture(self.name, ev.m, ev.L, ev.datum.closed_set, ev.window, self.h)


def config_for_fixture(name: str, **over) -> ExperimentConfig:
    fx = fixture(name)
    w = {"t_min": fx.window.t_min, "t_max": fx.window.t_max}
    if fx.window.lo is not None:
        w["lo"] = np.asarray(fx.window.lo).tolist()
        w["hi"] = np.asarray(fx.window.hi).tolist()
    lag = {"kind": fx.lagrangian.kind}
    if lag["kind"] == "mechanical":
        lag["potential"] = fx.lagrangian.text
    data = {"name": name, "manifold": fx.manifold.to_dict(), "lagrangian": lag,
            "datum": {"kind": "characteristic", "set": fx.closed_set.to_dict()}, "window": w, "h": fx.h}
    data.update(over)
    return ExperimentConfig.from_dict(data)
