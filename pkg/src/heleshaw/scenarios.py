"""Scenarios shipped with the package, each with a recommended grid."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .geometry import GridSpec, IndicatorField, Scenario, rasterize_scenario

BUNDLED = ("flat", "cosine", "cosine_shifted", "cosine_small", "wedge60", "wedge135",
           "bubble", "sawtooth", "flat3d")


def _raw(name: str) -> dict:
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}; choose from {', '.join(BUNDLED)}")
    text = resources.files("heleshaw").joinpath("data").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def bundled_path(name: str) -> Path:
    _raw(name)
    return Path(str(resources.files("heleshaw").joinpath("data").joinpath(f"{name}.json")))


def grid_from_dict(data: dict, dx: float | None = None) -> GridSpec:
    """Grid with ``L`` and ``H_top`` rounded up to whole cells.

    ``dx`` overrides the stored spacing; it must divide ``2R`` into an even count.
    """
    step = float(data["dx"]) if dx is None else float(dx)
    return GridSpec.fitted(int(data["d"]), float(data["R"]), float(data["L"]),
                           float(data["H_top"]), step)


def load_bundled(name: str, dx: float | None = None, **overrides) -> tuple[Scenario, GridSpec]:
    raw = _raw(name)
    grid = dict(raw["grid"])
    grid.update(overrides)
    return Scenario.from_dict(raw), grid_from_dict(grid, dx)


def bundled_field(name: str, dx: float | None = None, **overrides) -> IndicatorField:
    s, g = load_bundled(name, dx, **overrides)
    return rasterize_scenario(s, g)


def recommended_grid(path: str | Path) -> dict | None:
    """The optional ``grid`` block of a scenario file."""
    with open(path) as fh:
        return json.load(fh).get("grid")
