"""Rasterized initial domains on a laterally periodic strip.

Coordinates are ``x = (x', x_N)`` with ``x'`` the horizontal part (``d``
components) and ``x_N`` the height. Arrays are indexed ``[i_N, i_1, ..., i_d]``
so that axis 0 is vertical and row 0 sits at the bottom ``x_N = -L``.

A node belongs to the fluid iff its center satisfies the constructive-geometry
predicate; exact ties go to the dry side.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import ndimage

from .errors import GeometryError, NotConnected, StripViolation

logger = logging.getLogger(__name__)

_FIT_RTOL = 1e-9


def _lattice_count(length: float, dx: float) -> int:
    n = length / dx
    k = int(round(n))
    if k < 1 or abs(n - k) > _FIT_RTOL * max(1.0, n):
        raise GeometryError(f"length {length!r} is not an integer multiple of dx={dx!r}")
    return k


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice on ``[-R, R)^d x [-L, H_top]``, periodic in ``x'``."""

    d: int
    R: float
    L: float
    H_top: float
    dx: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise GeometryError(f"horizontal dimension must be 1 or 2, got {self.d}")
        if not self.dx > 0:
            raise GeometryError("dx must be positive")
        if self.L <= 0 or self.H_top <= 0:
            raise GeometryError("L and H_top must be positive")
        n_lat = _lattice_count(2 * self.R, self.dx)
        # red-black ordering needs a proper 2-colouring across the periodic seam
        if n_lat != 1 and n_lat % 2:
            raise GeometryError(f"2R/dx = {n_lat} must be even (or 1 for a single column)")
        _lattice_count(self.L + self.H_top, self.dx)

    @classmethod
    def fitted(cls, d: int, R: float, L: float, H_top: float, dx: float) -> GridSpec:
        """Round ``L`` and ``H_top`` up to whole cells; ``2R/dx`` must already fit."""
        L = math.ceil(L / dx - _FIT_RTOL) * dx
        H_top = math.ceil(H_top / dx - _FIT_RTOL) * dx
        return cls(d, R, L, H_top, dx)

    @property
    def N(self) -> int:
        return self.d + 1

    @property
    def n_lat(self) -> int:
        return int(round(2 * self.R / self.dx))

    @property
    def n_rows(self) -> int:
        return int(round((self.L + self.H_top) / self.dx)) + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_rows,) + (self.n_lat,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.N

    def heights(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n_rows)

    def lateral(self) -> np.ndarray:
        return -self.R + self.dx * np.arange(self.n_lat)

    def mesh(self) -> tuple[np.ndarray, list[np.ndarray]]:
        """Broadcastable ``(x_N, [x_1, ..., x_d])`` node coordinates."""
        ndim = self.N
        xn = self.heights().reshape((-1,) + (1,) * self.d)
        lat = []
        for k in range(self.d):
            shape = [1] * ndim
            shape[k + 1] = self.n_lat
            lat.append(self.lateral().reshape(shape))
        return xn, lat

    def lateral_mesh(self) -> list[np.ndarray]:
        """Lateral coordinates of the columns, each of shape ``(n_lat,)*d``."""
        return list(np.meshgrid(*([self.lateral()] * self.d), indexing="ij"))

    def height_index(self, xn: float) -> int:
        return int(round((xn + self.L) / self.dx))

    def lateral_index(self, x: float) -> int:
        return int(round((x + self.R) / self.dx)) % self.n_lat

    def to_dict(self) -> dict:
        return {"d": self.d, "R": self.R, "L": self.L, "H_top": self.H_top, "dx": self.dx}

    @classmethod
    def from_dict(cls, data: dict) -> GridSpec:
        return cls(int(data["d"]), float(data["R"]), float(data["L"]),
                   float(data["H_top"]), float(data["dx"]))


# ---------------------------------------------------------------- shapes


def _cone_angle(dlat: Sequence[np.ndarray], dn: np.ndarray) -> np.ndarray:
    """Angle between ``x - apex`` and the downward vertical, in ``[0, pi]``."""
    rho = np.sqrt(sum(c * c for c in dlat))
    return np.arctan2(rho, -dn)


@dataclass(frozen=True)
class Shape:
    kind: str
    params: dict

    def contains(self, lat: Sequence[np.ndarray], xn: np.ndarray, closed: bool) -> np.ndarray:
        p = self.params
        if self.kind == "ball":
            c = p["center"]
            r2 = sum((x - c[k]) ** 2 for k, x in enumerate(lat)) + (xn - c[-1]) ** 2
            rr = p["radius"] ** 2
            return r2 <= rr if closed else r2 < rr
        if self.kind == "box":
            lo, hi = p["lo"], p["hi"]
            coords = list(lat) + [xn]
            out = True
            for k, x in enumerate(coords):
                out = out & ((x >= lo[k]) & (x <= hi[k]) if closed else (x > lo[k]) & (x < hi[k]))
            return out
        if self.kind == "wedge":
            a = p["apex"]
            dlat = [x - a[k] for k, x in enumerate(lat)]
            dn = xn - a[-1]
            theta = _cone_angle(dlat, dn)
            half = 0.5 * p["alpha"]
            apex = (dn == 0) & (sum(c * c for c in dlat) == 0)
            inside = ((theta <= half) | apex) if closed else ((theta < half) & ~apex)
            if p.get("height") is not None:
                floor = a[-1] - p["height"]
                inside = inside & ((xn >= floor) if closed else (xn > floor))
            return inside
        raise GeometryError(f"unknown shape {self.kind!r}")

    def bounds(self, d: int) -> tuple[list[float], list[float]]:
        """Axis-aligned bounding box ``(lo, hi)``; ``-inf`` where unbounded."""
        p = self.params
        if self.kind == "ball":
            c, r = p["center"], p["radius"]
            return [x - r for x in c], [x + r for x in c]
        if self.kind == "box":
            return list(p["lo"]), list(p["hi"])
        if self.kind == "wedge":
            a = p["apex"]
            h = p.get("height")
            if h is None or p["alpha"] >= math.pi:
                return [-math.inf] * (d + 1), [math.inf] * d + [a[-1] if p["alpha"] < math.pi else math.inf]
            w = h * math.tan(0.5 * p["alpha"])
            return [x - w for x in a[:-1]] + [a[-1] - h], [x + w for x in a[:-1]] + [a[-1]]
        raise GeometryError(f"unknown shape {self.kind!r}")


@dataclass(frozen=True)
class Modifier:
    op: str
    shape: Shape

    def __post_init__(self):
        if self.op not in ("add", "remove"):
            raise GeometryError(f"modifier op must be 'add' or 'remove', got {self.op!r}")


# ------------------------------------------------------------ base graphs


@dataclass(frozen=True)
class BaseGraph:
    kind: str
    params: dict = field(default_factory=dict)

    def __call__(self, lat: Sequence[np.ndarray], R: float, seed: int = 0) -> np.ndarray:
        p = self.params
        d = len(lat)
        if self.kind == "constant":
            return np.full(np.broadcast(*lat).shape, float(p.get("value", 0.0)))
        if self.kind == "cosine":
            k = p.get("k", 1.0)
            k = [k] * d if np.isscalar(k) else list(k)
            phase = sum(kk * x for kk, x in zip(k, lat))
            return p.get("offset", 0.0) + p["amplitude"] * np.cos(phase + p.get("phase", 0.0))
        if self.kind == "wedge":
            # the downward cone of aperture alpha around the apex, cut at floor/ceiling
            alpha = p["alpha"]
            a = p.get("apex", [0.0] * (d + 1))
            rho = np.sqrt(sum((x - a[k]) ** 2 for k, x in enumerate(lat)))
            f = a[-1] - rho / math.tan(0.5 * alpha)
            if "floor" in p:
                f = np.maximum(f, p["floor"])
            if "ceiling" in p:
                f = np.minimum(f, p["ceiling"])
            return f
        if self.kind == "sawtooth":
            period, slope = p["period"], p.get("slope", 1.0)
            out = p.get("offset", 0.0)
            for x in lat:
                tri = np.abs(np.mod(x - p.get("shift", 0.0), period) - 0.5 * period)
                out = out + slope * (tri - 0.25 * period)
            return out
        if self.kind == "samples":
            return _periodic_interp(np.asarray(p["values"], dtype=float), lat, R)
        if self.kind == "random_fourier":
            rng = np.random.default_rng(seed)
            out = np.zeros(np.broadcast(*lat).shape)
            for m in range(1, int(p.get("modes", 4)) + 1):
                k = math.pi * m / R
                ph = rng.uniform(0, 2 * math.pi, size=d)
                amp = p["amplitude"] * rng.uniform(-1, 1) / m
                out = out + amp * np.prod([np.cos(k * x + ph[j]) for j, x in enumerate(lat)], axis=0)
            return p.get("offset", 0.0) + out
        raise GeometryError(f"unknown base graph kind {self.kind!r}")


def _periodic_interp(values: np.ndarray, lat: Sequence[np.ndarray], R: float) -> np.ndarray:
    """Multilinear periodic interpolation of samples given on ``-R + j*2R/n``."""
    d = len(lat)
    if values.ndim != d:
        raise GeometryError(f"sample array has {values.ndim} axes, expected {d}")
    n = values.shape
    pos = [(x + R) / (2 * R) * n[k] for k, x in enumerate(lat)]
    base = [np.floor(q).astype(int) for q in pos]
    frac = [q - b for q, b in zip(pos, base)]
    out = 0.0
    for corner in np.ndindex(*([2] * d)):
        w = 1.0
        idx = []
        for k in range(d):
            w = w * (frac[k] if corner[k] else 1 - frac[k])
            idx.append(np.mod(base[k] + corner[k], n[k]))
        out = out + w * values[tuple(idx)]
    return out


@dataclass(frozen=True)
class Scenario:
    name: str
    d: int
    base_graph: BaseGraph
    modifiers: tuple[Modifier, ...] = ()
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        bg = data.get("base_graph", {"kind": "constant", "params": {"value": 0.0}})
        mods = tuple(
            Modifier(m["op"], Shape(m["shape"], dict(m.get("params", {}))))
            for m in data.get("modifiers", [])
        )
        return cls(
            name=str(data.get("name", "unnamed")),
            d=int(data.get("d", 1)),
            base_graph=BaseGraph(bg["kind"], dict(bg.get("params", {}))),
            modifiers=mods,
            seed=int(data.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "base_graph": {"kind": self.base_graph.kind, "params": self.base_graph.params},
            "modifiers": [
                {"op": m.op, "shape": m.shape.kind, "params": m.shape.params} for m in self.modifiers
            ],
            "seed": self.seed,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as fh:
        return Scenario.from_dict(json.load(fh))


# -------------------------------------------------------- indicator field


@dataclass(frozen=True)
class IndicatorField:
    """Dry set ``A`` (complement of the initial fluid) and its strip constant ``C``."""

    grid: GridSpec
    cells: np.ndarray
    C: float

    def __post_init__(self):
        cells = np.array(self.cells, dtype=bool)
        if cells.shape != self.grid.shape:
            raise GeometryError(f"cells shape {cells.shape} != grid shape {self.grid.shape}")
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    @property
    def fluid(self) -> np.ndarray:
        return ~self.cells

    @classmethod
    def from_fluid(cls, grid: GridSpec, fluid: np.ndarray) -> IndicatorField:
        fluid = np.asarray(fluid, dtype=bool)
        return cls(grid, ~fluid, strip_constant(grid, fluid))


def strip_constant(grid: GridSpec, fluid: np.ndarray) -> float:
    """Smallest ``C`` with fluid nodes at or below ``C - dx`` and dry nodes at or above ``-C + dx``.

    The one-cell margins make the sampled profiles ``v0(t, x_N -+ C)`` exact discrete
    super- and subsolutions, so comparison holds on the lattice without slack.
    """
    heights = grid.heights()
    rows_fluid = fluid.reshape(grid.n_rows, -1).any(axis=1)
    rows_dry = (~fluid).reshape(grid.n_rows, -1).any(axis=1)
    if not rows_dry.any():
        raise StripViolation("no dry node inside the box")
    if not rows_fluid.any():
        raise StripViolation("no fluid node inside the box")
    top_fluid = heights[rows_fluid].max()
    low_dry = heights[rows_dry].min()
    if low_dry <= heights[1] + 0.5 * grid.dx:
        raise StripViolation(f"dry node at height {low_dry:g} touches the bottom layers")
    if top_fluid >= heights[-2] - 0.5 * grid.dx:
        raise StripViolation(f"fluid node at height {top_fluid:g} touches the top of the box")
    return float(max(top_fluid + grid.dx, grid.dx - low_dry))


def _check_fits(s: Scenario, g: GridSpec) -> None:
    for m in s.modifiers:
        lo, hi = m.shape.bounds(g.d)
        for k in range(g.d):
            if not (lo[k] > -g.R and hi[k] < g.R):
                raise GeometryError(f"{m.shape.kind} modifier does not fit inside the lateral box")
        if m.op == "remove" and not lo[-1] > -g.L + 2 * g.dx:
            raise GeometryError(f"{m.shape.kind} modifier reaches below -L + 2dx")


def rasterize_scenario(s: Scenario, g: GridSpec) -> IndicatorField:
    """Sample the scenario at node centers and certify the strip and connectivity hypotheses."""
    if s.d != g.d:
        raise GeometryError(f"scenario has d={s.d}, grid has d={g.d}")
    _check_fits(s, g)
    xn, lat = g.mesh()
    fluid = np.broadcast_to(xn < s.base_graph(lat, g.R, s.seed), g.shape).copy()
    for m in s.modifiers:
        if m.op == "add":
            fluid |= m.shape.contains(lat, xn, closed=False)
        else:
            fluid &= ~m.shape.contains(lat, xn, closed=True)
    C = strip_constant(g, fluid)
    count = count_components(g, fluid)
    if count != 1:
        raise NotConnected(count)
    return IndicatorField(g, ~fluid, C)


def count_components(grid: GridSpec, fluid: np.ndarray) -> int:
    structure = ndimage.generate_binary_structure(fluid.ndim, 1)
    labels, n = ndimage.label(fluid, structure=structure)
    if n <= 1:
        return n
    parent = np.arange(n + 1)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for axis in range(1, fluid.ndim):
        if grid.n_lat < 2:
            continue
        first = np.take(labels, 0, axis=axis).ravel()
        last = np.take(labels, -1, axis=axis).ravel()
        both = (first > 0) & (last > 0)
        for a, b in set(zip(first[both].tolist(), last[both].tolist())):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    return len({find(i) for i in range(1, n + 1)})


def connectivity_check(a: IndicatorField) -> int:
    """Number of face-connected fluid components under lateral wraparound."""
    return count_components(a.grid, a.fluid)


def add_lateral_layers(a: IndicatorField, layer_width: float) -> IndicatorField:
    """Fill columns within ``layer_width`` of the lateral box edge up to the top fluid level."""
    g = a.grid
    if layer_width < g.dx * (1 - _FIT_RTOL):
        raise GeometryError("layer_width must be at least dx")
    xn, lat = g.mesh()
    edge = np.zeros(g.shape, dtype=bool)
    for x in lat:
        edge = edge | (np.abs(x) > g.R - layer_width)
    top = g.heights()[a.fluid.reshape(g.n_rows, -1).any(axis=1)].max()
    fluid = a.fluid | (edge & (xn <= top))
    if np.array_equal(fluid, a.fluid):
        return a
    return IndicatorField(g, ~fluid, strip_constant(g, fluid))


def rasterized_volume(a: IndicatorField, below: float | None = None) -> float:
    """Fluid volume above ``below`` (default ``-C``); used for refinement logging."""
    g = a.grid
    lo = -a.C if below is None else below
    xn, _ = g.mesh()
    n = np.count_nonzero(a.fluid & np.broadcast_to(xn >= lo, g.shape))
    return n * g.cell_volume


def shifted(a: IndicatorField, rows: int) -> IndicatorField:
    """Move the dry set up by ``rows`` cells on a grid whose box is moved with it."""
    g = a.grid
    h = rows * g.dx
    g2 = GridSpec(g.d, g.R, g.L - h, g.H_top + h, g.dx)
    return IndicatorField(g2, a.cells, strip_constant(g2, a.fluid))


def describe(a: IndicatorField) -> dict[str, Any]:
    return {
        "grid": a.grid.to_dict(),
        "C": a.C,
        "fluid_nodes": int(np.count_nonzero(a.fluid)),
        "components": connectivity_check(a),
    }
