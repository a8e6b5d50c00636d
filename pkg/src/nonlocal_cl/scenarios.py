"""Scenario configuration: a flat TOML file with dotted keys.

Grammar (one ``key = value`` per line, ``#`` comments)::

    scenario = "my-run"
    kernel.kind = "smoothed_step"      # step | smoothed_step | closed_form
    kernel.alpha = 0.5
    kernel.n = 36
    kernel.expr = "exp(-abs(x))"       # closed_form only, numpy names allowed
    kernel.support = [-1.0, 0.0]       # closed_form only
    velocity.kind = "identity"         # identity | affine_desired
    velocity.desired = 0.5             # affine_desired: V = desired + slope*x + xi
    velocity.slope = 0.0
    datum.pieces = [[0.0, 0.5, 2.0]]   # disjoint intervals [a, b] with values
    solver = "both"                    # lagrangian | eulerian | both
    particles = 4000
    dt = 1e-4
    t_end = 0.49
    snapshot_every = 0.05              # time between snapshots
    diagnostics_every = 1e-4           # time between diagnostics rows
    cells = 4000
    cfl = 0.5
    eulerian_t_end = 0.45
    domain = [-0.25, 0.75]
    deposit_cells = 400
    study.alpha = [0.0, 0.5, 1.0]
    study.n = [18, 36, 72]

Table syntax (``[kernel]`` followed by ``kind = ...``) is accepted and
flattened to the same dotted keys.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kernels import ClosedFormKernel, Kernel, make_smoothed_kernel, make_step_kernel
from .velocity import VelocityModel, make_affine_desired_velocity, make_identity_velocity

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


DEFAULTS: dict = {
    "scenario": "custom",
    "kernel.kind": "step",
    "kernel.alpha": 0.5,
    "kernel.n": 36,
    "kernel.expr": "",
    "kernel.support": [-math.inf, math.inf],
    "velocity.kind": "identity",
    "velocity.desired": 0.0,
    "velocity.slope": 0.0,
    "datum.pieces": [[0.0, 0.5, 2.0]],
    "solver": "lagrangian",
    "particles": 2000,
    "dt": 1e-3,
    "t_end": 0.4,
    "snapshot_every": 0.1,
    "diagnostics_every": 0.0,  # 0 -> every step
    "track_divergence": False,
    "cells": 1000,
    "cfl": 0.5,
    "eulerian_t_end": 0.45,
    "domain": [-0.25, 0.75],
    "deposit_cells": 400,
    "blowup_threshold": 50.0,
    "bounds.q": math.inf,
    "crossval.t": 0.25,
    "crossval.tolerance": 0.05,
    "study.alpha": [],
    "study.n": [],
    "output.plots": True,
}

BUILTINS: dict[str, dict] = {
    "blowup-exact": {
        "scenario": "blowup-exact",
        "kernel.kind": "step",
        "velocity.kind": "identity",
        "datum.pieces": [[0.0, 0.5, 2.0]],
        "solver": "both",
        "particles": 4000,
        "dt": 1e-4,
        "t_end": 0.49,
        "snapshot_every": 0.05,
        "diagnostics_every": 1e-3,
        "cells": 4000,
        "cfl": 0.5,
        "eulerian_t_end": 0.45,
        "domain": [-0.25, 0.75],
        "deposit_cells": 400,
    },
    "counterexample": {
        "scenario": "counterexample",
        "kernel.kind": "smoothed_step",
        "kernel.alpha": 0.5,
        "kernel.n": 36,
        "velocity.kind": "identity",
        "datum.pieces": [[0.0, 0.5, 2.0]],
        "solver": "lagrangian",
        "particles": 4000,
        "dt": 1e-4,
        "t_end": 1.0,
        "snapshot_every": 0.05,
        "diagnostics_every": 0.01,
        "domain": [-0.25, 1.25],
        "deposit_cells": 300,
        "study.alpha": [0.0, 0.5, 1.0],
        "study.n": [18, 36, 72],
    },
    "pedestrian-demo": {
        "scenario": "pedestrian-demo",
        "kernel.kind": "smoothed_step",
        "kernel.alpha": 0.5,
        "kernel.n": 18,
        "velocity.kind": "affine_desired",
        "velocity.desired": 0.5,
        "datum.pieces": [[0.0, 0.25, 1.0], [0.5, 0.75, 1.5]],
        "solver": "both",
        "particles": 2000,
        "dt": 1e-3,
        "t_end": 0.6,
        "snapshot_every": 0.1,
        "cells": 4000,
        "cfl": 0.5,
        "eulerian_t_end": 0.6,
        "domain": [-0.5, 2.5],
        "deposit_cells": 300,
        "crossval.t": 0.3,
    },
}


def _flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_value(text: str):
    """TOML scalar/array literal, or the bare text as a string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


@dataclass
class ScenarioConfig:
    values: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def name(self) -> str:
        return self.values["scenario"]

    @property
    def pieces(self) -> list[tuple[float, float, float]]:
        return [tuple(float(v) for v in pc) for pc in self.values["datum.pieces"]]

    @property
    def domain(self) -> tuple[float, float]:
        a, b = self.values["domain"]
        return float(a), float(b)

    def steps_between(self, interval: float) -> int:
        """Number of dt steps in a time interval (at least 1)."""
        if interval <= 0:
            return 1
        return max(1, int(round(interval / self["dt"])))

    def fingerprint(self) -> str:
        return "|".join(
            str(self.values[k])
            for k in ("kernel.kind", "kernel.alpha", "kernel.n", "kernel.expr", "velocity.kind",
                      "velocity.desired", "velocity.slope", "datum.pieces")
        )

    def as_dict(self) -> dict:
        return dict(sorted(self.values.items()))


def _coerce(key: str, value):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes")
            return bool(value)
        if isinstance(default, float):
            if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
                return math.inf
            return float(value)
        if isinstance(default, int):
            if float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if isinstance(default, list):
            if not isinstance(value, (list, tuple)):
                raise ValueError
            return list(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(default).__name__}") from exc


def build_config(base: dict | None = None, overrides: dict | None = None) -> ScenarioConfig:
    values = copy.deepcopy(DEFAULTS)
    for source in (base or {}, overrides or {}):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown configuration key {key!r}")
            values[key] = _coerce(key, value)
    cfg = ScenarioConfig(values)
    validate(cfg)
    return cfg


def load_config(source: str, overrides: dict | None = None) -> ScenarioConfig:
    """Load a config file, or a built-in scenario by name."""
    path = Path(source)
    if path.is_file():
        try:
            tree = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{source}: {exc}") from exc
        return build_config(_flatten(tree), overrides)
    if source in BUILTINS:
        return build_config(BUILTINS[source], overrides)
    raise ConfigError(f"{source!r} is neither a config file nor a built-in scenario ({', '.join(BUILTINS)})")


def validate(cfg: ScenarioConfig) -> None:
    v = cfg.values
    if v["kernel.kind"] not in ("step", "smoothed_step", "closed_form"):
        raise ConfigError(f"kernel.kind must be step, smoothed_step or closed_form, not {v['kernel.kind']!r}")
    if v["velocity.kind"] not in ("identity", "affine_desired"):
        raise ConfigError(f"velocity.kind must be identity or affine_desired, not {v['velocity.kind']!r}")
    if v["solver"] not in ("lagrangian", "eulerian", "both"):
        raise ConfigError(f"solver must be lagrangian, eulerian or both, not {v['solver']!r}")
    pieces = v["datum.pieces"]
    if not pieces:
        raise ConfigError("datum.pieces is empty")
    for pc in pieces:
        if not isinstance(pc, (list, tuple)) or len(pc) != 3:
            raise ConfigError(f"datum piece {pc!r} is not [a, b, value]")
        if not pc[1] > pc[0]:
            raise ConfigError(f"datum piece {pc!r} has an empty interval")
    spans = sorted((float(a), float(b)) for a, b, _ in pieces)
    for (a1, b1), (a2, b2) in zip(spans, spans[1:]):
        if a2 < b1:
            raise ConfigError(f"datum intervals [{a1}, {b1}] and [{a2}, {b2}] overlap")
    for key in ("t_end", "dt", "cfl", "particles", "cells", "deposit_cells"):
        if not v[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if v["cfl"] > 1:
        raise ConfigError("cfl must not exceed 1")
    if v["particles"] < 2 or v["cells"] < 2 or v["deposit_cells"] < 2:
        raise ConfigError("particles, cells and deposit_cells must be at least 2")
    a, b = v["domain"]
    if not b > a:
        raise ConfigError("domain must be [x_min, x_max] with x_max > x_min")
    if spans[0][0] < a or spans[-1][1] > b:
        raise ConfigError("datum support must lie inside the domain")
    n_steps = v["t_end"] / v["dt"]
    if abs(n_steps - round(n_steps)) > 1e-6:
        raise ConfigError("t_end must be a multiple of dt")
    if v["kernel.kind"] == "smoothed_step":
        try:
            make_smoothed_kernel(v["kernel.alpha"], v["kernel.n"])
        except ValueError as exc:
            raise ConfigError(f"kernel: {exc}") from exc
    if v["kernel.kind"] == "closed_form" and not v["kernel.expr"]:
        raise ConfigError("closed_form kernel needs kernel.expr")


def validate_study(cfg: ScenarioConfig) -> None:
    alphas, ns = cfg["study.alpha"], cfg["study.n"]
    if not alphas:
        raise ConfigError("study.alpha is empty")
    if not ns:
        raise ConfigError("study.n is empty")
    for a in alphas:
        if not 0.0 <= float(a) <= 1.0:
            raise ConfigError(f"study.alpha entry {a} outside [0, 1]")
    for n in ns:
        if int(n) != n or n < 18:
            raise ConfigError(f"study.n entry {n} must be an integer >= 18")


_EXPR_NAMES = {
    name: getattr(np, name)
    for name in ("exp", "abs", "sqrt", "sin", "cos", "tanh", "log", "where", "pi", "maximum", "minimum")
}


def build_kernel(cfg: ScenarioConfig) -> Kernel:
    kind = cfg["kernel.kind"]
    if kind == "step":
        return make_step_kernel()
    if kind == "smoothed_step":
        return make_smoothed_kernel(cfg["kernel.alpha"], cfg["kernel.n"])
    expr = cfg["kernel.expr"]
    code = compile(expr, "<kernel.expr>", "eval")

    def func(x):
        return eval(code, {"__builtins__": {}}, dict(_EXPR_NAMES, x=x))

    lo, hi = (float(s) for s in cfg["kernel.support"])
    return ClosedFormKernel(func, support=(lo, hi), name="closed_form", params={"expr": expr})


def build_velocity(cfg: ScenarioConfig) -> VelocityModel:
    if cfg["velocity.kind"] == "identity":
        return make_identity_velocity()
    return make_affine_desired_velocity(cfg["velocity.desired"], cfg["velocity.slope"])


def datum_norm(pieces, q: float) -> float:
    if math.isinf(q):
        return max(abs(v) for _, _, v in pieces)
    return sum(abs(v) ** q * (b - a) for a, b, v in pieces) ** (1.0 / q)
