"""Experiment configuration, JSON round-tripping and the named example presets."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .bump import Deltas
from .core import OscillatorySystem, SimConfig, as_rational, make_system
from .costs import DriftField, linear_drift, make_cost, no_drift
from .eslaws import (
    assemble_es_system,
    assemble_vibrational_system,
    averaged_es_field_closed_form,
    control_directions,
    vibrational_matrix,
)


class ConfigError(ValueError):
    pass


def nonlipschitz_system() -> OscillatorySystem:
    """Scalar ``x' = -|x|^(1/2) sign(x) sin(tau)**2``: no fast part, non-Lipschitz at 0."""

    def f2(x, tau):
        x = np.asarray(x, dtype=float)
        return -np.sqrt(np.abs(x)) * np.sign(x) * np.sin(np.asarray(tau, dtype=float))[..., None] ** 2

    return make_system(None, f2, [1], name="example1_nonlipschitz", dim=1, meta={"kind": "nonlipschitz"})


def nonlipschitz_average(x):
    """Exact average ``-0.5 |x|^(1/2) sign(x)`` of :func:`nonlipschitz_system` away from the bump."""
    x = np.asarray(x, dtype=float)
    return -0.5 * np.sqrt(np.abs(x)) * np.sign(x)


def fraction_str(w) -> str:
    q = as_rational(w)
    return f"{q.numerator}/{q.denominator}"


@dataclass
class ExperimentConfig:
    """Everything needed to rebuild a system and run it; JSON-native fields only."""

    experiment: str
    kind: str
    sim: dict
    deltas: dict = field(default_factory=lambda: {"delta1": 0.0, "delta2": 0.0, "delta3": 1.0})
    frequencies: list = field(default_factory=lambda: ["1/1"])
    law: Optional[int] = None
    cost: Optional[dict] = None
    drift: Optional[dict] = None
    directions: Optional[list] = None
    gamma: Optional[float] = None
    vibrational: Optional[dict] = None
    output_dir: str = "out"
    n_runs: int = 1
    radius0: Optional[float] = None
    grid: Optional[list] = None
    sweep: Optional[dict] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known - {"preset"}
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        missing = {"experiment", "kind", "sim"} - set(d)
        if missing:
            raise ConfigError(f"missing config fields: {sorted(missing)}")
        cfg = cls(**{k: v for k, v in d.items() if k in known})
        cfg.frequencies = [fraction_str(Fraction(str(w))) for w in cfg.frequencies]
        return cfg

    def sim_config(self, **overrides) -> SimConfig:
        s = dict(self.sim)
        s.update({k: v for k, v in overrides.items() if v is not None})
        return SimConfig(**s)

    def deltas_obj(self) -> Deltas:
        return Deltas(**self.deltas)


def _preset_example1() -> ExperimentConfig:
    return ExperimentConfig(
        experiment="example1_nonlipschitz", kind="nonlipschitz",
        sim={"epsilon": 0.05, "t_final": 200.0, "x0": [100.0], "record_stride": 200},
        deltas={"delta1": 0.5, "delta2": 1.0, "delta3": 2.0},
        grid=[[-4.0, 4.0, 0.5]],
        sweep={"x0": [10.0], "t_final": 10.0, "eps_list": [0.2, 0.1, 0.05]},
    )


def _preset_example2() -> ExperimentConfig:
    return ExperimentConfig(
        experiment="example2_vibrational", kind="vibrational", frequencies=["1/1", "2/1"],
        vibrational={"B": [[1.0, 1.0], [1.0, -1.0]], "gamma1": 0.75, "gamma2": 1.0},
        sim={"epsilon": 1.0 / math.sqrt(8.0 * math.pi), "t_final": 40.0,
             "x0": [1e6, -1e6, 1e3, -1e3], "record_stride": 20},
        grid=[[-1.0, 1.0, 1.0]] * 4,
        sweep={"x0": [10.0, -10.0, 1.0, -1.0], "t_final": 2.0, "eps_list": [0.1, 0.05, 0.025]},
    )


def _preset_example5() -> ExperimentConfig:
    return ExperimentConfig(
        experiment="example5_law1_nonconvex", kind="es", law=1,
        cost={"name": "nonconvex_sin", "x_star": [1e10, -1e10]},
        drift={"name": "linear_destabilizing", "coefficient": 0.5, "kappa3": 0.8},
        directions=[[[1.0, 0.0], [0.0, 1.0]]], gamma=1.0,
        sim={"epsilon": 1.0 / math.sqrt(4.0 * math.pi), "t_final": 30.0, "x0": [600.0, -800.0],
             "record_stride": 10},
        n_runs=20, radius0=1e3, grid=[[-2.0, 2.0, 1.0]] * 2,
    )


def _preset_example6() -> ExperimentConfig:
    return ExperimentConfig(
        experiment="example6_law2_bounded", kind="es", law=2,
        cost={"name": "tanh_norm", "x_star": [1e3, -1e3]},
        drift={"name": "none", "coefficient": 0.0, "kappa3": 0.0},
        directions=[[[2.0, 0.0], [0.0, 2.0]]], gamma=2.0,
        sim={"epsilon": 1.0 / math.sqrt(4.0 * math.pi), "t_final": 400.0, "x0": [600.0, -800.0],
             "record_stride": 50},
        n_runs=20, radius0=1e3, grid=[[-2.0, 2.0, 1.0]] * 2,
    )


PRESETS: dict[str, Callable[[], ExperimentConfig]] = {
    "example1_nonlipschitz": _preset_example1,
    "example2_vibrational": _preset_example2,
    "example5_law1_nonconvex": _preset_example5,
    "example6_law2_bounded": _preset_example6,
}


def preset(name: str, desk_scale: bool = False) -> ExperimentConfig:
    """Named preset; ``desk_scale`` moves an ES minimiser to the origin."""
    if name not in PRESETS:
        raise ConfigError(f"unknown experiment {name!r}; available presets: {', '.join(PRESETS)}")
    cfg = PRESETS[name]()
    if desk_scale and cfg.cost is not None:
        cfg.cost["x_star"] = [0.0] * len(cfg.cost["x_star"])
    return cfg


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build a config; a ``preset`` key supplies defaults that the other keys override."""
    if "preset" in d:
        d = _merge(preset(d["preset"]).to_dict(), {k: v for k, v in d.items() if k != "preset"})
    return ExperimentConfig.from_dict(d)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(d)


@dataclass
class BuiltExperiment:
    system: OscillatorySystem
    fbar_closed: Optional[Callable]
    x_star: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)


def _drift(cfg: ExperimentConfig, x_star) -> DriftField:
    d = cfg.drift or {"name": "none"}
    if d["name"] == "none":
        return no_drift(len(x_star))
    if d["name"] == "linear_destabilizing":
        return linear_drift(x_star, d["coefficient"], d["kappa3"])
    raise ConfigError(f"unknown drift {d['name']!r}; expected none or linear_destabilizing")


def build(cfg: ExperimentConfig) -> BuiltExperiment:
    """Turn a config into a system plus its closed-form average where one is known."""
    if cfg.kind == "nonlipschitz":
        return BuiltExperiment(nonlipschitz_system(), nonlipschitz_average)
    if cfg.kind == "vibrational":
        v = cfg.vibrational or {}
        try:
            sys_ = assemble_vibrational_system(v["B"], v["gamma1"], v["gamma2"], name=cfg.experiment)
        except KeyError as exc:
            raise ConfigError(f"vibrational config lacks {exc}") from exc
        A = vibrational_matrix(v["B"], v["gamma1"], v["gamma2"])
        return BuiltExperiment(sys_, None, extras={"A": A})
    if cfg.kind == "es":
        if cfg.cost is None or cfg.directions is None or cfg.law is None:
            raise ConfigError("es config needs cost, directions and law")
        cost = make_cost(cfg.cost["name"], cfg.cost.get("x_star"), cfg.cost.get("H"))
        drift = _drift(cfg, cost.x_star)
        dirs = control_directions(cfg.directions, cfg.gamma)
        freqs = [Fraction(w) for w in cfg.frequencies]
        sys_ = assemble_es_system(cost, drift, dirs, freqs, cfg.law, name=cfg.experiment)
        return BuiltExperiment(sys_, averaged_es_field_closed_form(cost, drift, dirs, cfg.law), cost.x_star,
                               extras={"cost": cost, "drift": drift, "dirs": dirs})
    raise ConfigError(f"unknown kind {cfg.kind!r}; expected nonlipschitz, vibrational or es")
