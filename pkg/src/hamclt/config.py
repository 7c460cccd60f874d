"""Experiment configuration: TOML sections with validation and defaults.

Example::

    radii = [4, 8, 16, 32, 64]
    times = [1.0]

    [model]
    kernel = "riesz"
    beta = 0.5
    dimension = 1

    [grid]
    half_width = 65.0
    cells = 520
    x_resolution = 0.25

    [chaos]
    N = 4
    N_sim = 3
    samples = 10000
    mc_count = 100000
    seed = 20240101

    [output]
    dir = "out"
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .covariance import CovarianceModel, DalangError, from_config

DEFAULTS = {
    "radii": [4.0, 8.0, 16.0, 32.0, 64.0],
    "times": [1.0],
    "model": {"dimension": 1},
    "grid": {"half_width": None, "cells": None, "x_resolution": 0.25, "quad_order": 2},
    "chaos": {"N": 3, "N_sim": 3, "samples": 10000, "mc_count": 100000, "seed": 0},
    "output": {"dir": "out"},
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the source text when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line}: " if line else f"{path or '<config>'}: "
        super().__init__(where + message)


def _line_of(text: str, key: str, section: str | None = None) -> int | None:
    lines = text.splitlines()
    start = 0
    if section is not None:
        for i, ln in enumerate(lines):
            if re.match(rf"\s*\[{re.escape(section)}\]\s*(#.*)?$", ln):
                start = i
                break
        else:
            return None
    for i in range(start, len(lines)):
        if re.match(rf"\s*{re.escape(key)}\s*=", lines[i]):
            return i + 1
    return start + 1 if section is not None else None


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration; ``data`` holds every setting including defaults."""

    data: dict
    model: CovarianceModel

    @property
    def seed(self) -> int:
        return int(self.data["chaos"]["seed"])

    @property
    def radii(self) -> list[float]:
        return [float(r) for r in self.data["radii"]]

    @property
    def times(self) -> list[float]:
        return [float(t) for t in self.data["times"]]

    @property
    def chaos(self) -> dict:
        return self.data["chaos"]

    @property
    def grid(self) -> dict:
        return self.data["grid"]

    def config_hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_overrides(self, seed=None, radii=None, out=None) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        if seed is not None:
            data["chaos"]["seed"] = int(seed)
        if radii is not None:
            data["radii"] = [float(r) for r in radii]
        if out is not None:
            data["output"]["dir"] = str(out)
        return validate(data)


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def validate(data: dict, text: str = "", path: str | None = None) -> ExperimentConfig:
    """Check a parsed configuration and fill in derived defaults."""
    data = _merge(DEFAULTS, data)
    model_cfg = data["model"]
    if "kernel" not in model_cfg:
        raise ConfigError("[model] needs a 'kernel' key", _line_of(text, "kernel", "model") or _line_of(text, "[model]"), path)
    try:
        model = from_config(model_cfg)
    except (ValueError, KeyError, DalangError) as exc:
        raise ConfigError(f"invalid model: {exc}", _line_of(text, "kernel", "model"), path) from exc
    radii = data["radii"]
    if not isinstance(radii, list) or not radii or any(not isinstance(r, (int, float)) or r <= 0 for r in radii):
        raise ConfigError("radii must be a non-empty list of positive numbers", _line_of(text, "radii"), path)
    times = data["times"]
    if not isinstance(times, list) or not times or any(not isinstance(t, (int, float)) or t <= 0 for t in times):
        raise ConfigError("times must be a non-empty list of positive numbers", _line_of(text, "times"), path)
    chaos = data["chaos"]
    for key in ("N", "N_sim", "samples", "mc_count", "seed"):
        v = chaos[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < (0 if key == "seed" else 1):
            raise ConfigError(f"chaos.{key} must be a {'non-negative' if key == 'seed' else 'positive'} integer", _line_of(text, key, "chaos"), path)
    grid = data["grid"]
    reach = max(radii) + max(times)
    if grid["half_width"] is None:
        grid["half_width"] = float(reach + grid["x_resolution"])
    if grid["cells"] is None:
        grid["cells"] = int(round(2 * grid["half_width"] / grid["x_resolution"]))
    if not grid["half_width"] > 0 or not isinstance(grid["cells"], int) or grid["cells"] < 2:
        raise ConfigError("grid needs half_width > 0 and at least two cells", _line_of(text, "cells", "grid"), path)
    if max(radii) > grid["half_width"]:
        raise ConfigError("radii must not exceed grid.half_width", _line_of(text, "radii"), path)
    return ExperimentConfig(data, model)


def loads(text: str, path: str | None = None) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"parse error: {exc}", int(m.group(1)) if m else None, path) from exc
    return validate(data, text, path)


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, str(path))
