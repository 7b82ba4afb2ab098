"""Time sweeps of the obstacle problem and the objects read off from them.

Time only enters as a parameter, so each ``u(t)`` is an independent elliptic solve;
the sweep warm-starts from the previous time because ``u`` is nondecreasing in ``t``.
"""

from __future__ import annotations

import concurrent.futures
import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DepthTooShallow, NotAGraph, SolverError
from .geometry import GridSpec, IndicatorField
from .obstacle import (
    KktResidual,
    ScalarField,
    SolverConfig,
    assemble,
    psor_solve,
    with_dirichlet_rows,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DomainMask:
    grid: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        c = np.array(self.cells, dtype=bool)
        c.flags.writeable = False
        object.__setattr__(self, "cells", c)

    def volume(self) -> float:
        return np.count_nonzero(self.cells) * self.grid.cell_volume


@dataclass(frozen=True)
class GraphFunction:
    """Column heights: ``f`` in the free-falling frame and ``h = f - t``."""

    grid: GridSpec
    f: np.ndarray
    t: float

    @property
    def h(self) -> np.ndarray:
        return self.f - self.t


@dataclass
class SemiflowRun:
    scenario_ref: str
    grid: GridSpec
    times: tuple[float, ...]
    fields: list[ScalarField]
    masks: list[DomainMask]
    diagnostics: list[dict]
    C: float
    indicator: IndicatorField = field(repr=False)

    def index(self, t: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.times) - t)))


def positivity_set(u: ScalarField) -> DomainMask:
    return DomainMask(u.grid, u.values > 0)


def initial_mask(a: IndicatorField) -> DomainMask:
    return DomainMask(a.grid, a.fluid)


def _mask_for(a: IndicatorField, t: float, u: ScalarField) -> DomainMask:
    # at t = 0 the transformed pressure vanishes identically; the domain is the initial fluid
    return initial_mask(a) if t == 0 else positivity_set(u)


def _solve_chain(a, times, cfg, warm, level):
    out = []
    prev = warm
    for t in times:
        p = assemble(a, t, level)
        start = None if prev is None else with_dirichlet_rows(prev, p)
        try:
            u, kkt, its = psor_solve(p, cfg, start)
        except SolverError as exc:
            exc.t = t
            raise
        out.append((u, kkt, its))
        prev = u
    return out


def _worker_count(chunks: int) -> int:
    cap = os.environ.get("HS_THREADS")
    n = chunks
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def evolve(
    a: IndicatorField,
    times: Sequence[float],
    cfg: SolverConfig = SolverConfig(),
    chunks: int = 1,
    scenario_ref: str = "",
    reference_level: float = 0.0,
) -> SemiflowRun:
    """Solve for every time in ascending order, warm-starting from the previous field.

    With ``chunks > 1`` the times are split into contiguous chunks whose heads are
    cold-started and which run on separate threads. ``reference_level`` is the height
    of the far-field front at ``t = 0``.
    """
    times = tuple(float(t) for t in times)
    if not times:
        raise ValueError("times must be nonempty")
    if any(b <= a_ for a_, b in zip(times, times[1:])):
        raise ValueError("times must be strictly ascending")
    if times[0] < 0:
        raise ValueError("times must be nonnegative")
    g = a.grid
    if not times[-1] < g.L - a.C:
        raise DepthTooShallow(f"final time {times[-1]:g} must be below L - C = {g.L - a.C:g}")
    for t in times:
        assemble(a, t, reference_level)  # fail fast on every precondition before solving

    chunks = max(1, min(chunks, len(times)))
    parts = [list(c) for c in np.array_split(np.asarray(times), chunks)]
    if chunks == 1:
        results = _solve_chain(a, parts[0], cfg, None, reference_level)
    else:
        with concurrent.futures.ThreadPoolExecutor(_worker_count(chunks)) as pool:
            futs = [pool.submit(_solve_chain, a, part, cfg, None, reference_level) for part in parts]
            results = [r for f in futs for r in f.result()]

    fields, masks, diags = [], [], []
    for t, (u, kkt, its) in zip(times, results):
        fields.append(u)
        masks.append(_mask_for(a, t, u))
        scale = max(1.0, t * (0.5 * t + g.L + reference_level))
        diags.append({"t": t, "residual": kkt.to_dict(), "scale": scale, "iterations": its})
    return SemiflowRun(scenario_ref, g, times, fields, masks, diags, a.C, a)


def extract_graph(m: DomainMask, t: float) -> GraphFunction:
    """Column heights ``x_N(top fluid node) + dx/2`` if every column is a bottom-anchored run."""
    g = m.grid
    cells = m.cells
    count = cells.sum(axis=0)
    rows = np.arange(g.n_rows).reshape((-1,) + (1,) * g.d)
    bad = np.any(cells != (rows < count), axis=0) | (count == 0)
    if bad.any():
        col = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NotAGraph(col)
    f = -g.L + (count - 0.5) * g.dx
    return GraphFunction(g, f.astype(float), float(t))


def subcell_graph(u: ScalarField, t: float, a: IndicatorField | None = None) -> GraphFunction:
    """Front heights resolved below one cell from the quadratic profile behind the front.

    Just behind the front ``u`` is close to ``(f - x_N)^2 / 2``, so the slope between the
    second and third highest wet nodes of a column locates the vertex ``f``. Columns where
    fewer than three wet nodes exist, or the profile is not in the dry region, keep the
    node-count height.
    """
    base = extract_graph(positivity_set(u), t)
    g = u.grid
    v = u.values
    dx = g.dx
    count = np.rint((base.f + g.L) / dx + 0.5).astype(int)  # wet nodes per column
    f = base.f.copy()
    k1 = count - 2
    k2 = count - 3
    ok = k2 >= 0
    if a is not None:
        ok &= np.take_along_axis(a.cells, np.maximum(k1, 0)[None], axis=0)[0]
    u1 = np.take_along_axis(v, np.maximum(k1, 0)[None], axis=0)[0]
    u2 = np.take_along_axis(v, np.maximum(k2, 0)[None], axis=0)[0]
    mid = -g.L + (k1 + k2) * 0.5 * dx
    vertex = mid - (u1 - u2) / dx
    f[ok] = vertex[ok]
    return GraphFunction(g, f, float(t))


def pressure(run: SemiflowRun, i: int) -> ScalarField:
    """Forward difference ``(u(t_{i+1}) - u(t_i)) / dt``, clamped to ``>= 0`` and to the mask."""
    if not 0 <= i < len(run.times) - 1:
        raise IndexError("pressure needs a following time")
    dt = run.times[i + 1] - run.times[i]
    p = (run.fields[i + 1].values - run.fields[i].values) / dt
    p = np.maximum(p, 0.0)
    p[~run.masks[i + 1].cells] = 0.0
    return ScalarField(run.grid, p)


def compose_check(a: IndicatorField, s: float, t: float, cfg: SolverConfig = SolverConfig()) -> float:
    """Max-norm defect of ``v(s) + v(t, s) - v(t)``.

    ``v(t, s)`` restarts from the domain at time ``s``: its dry set is the complement of
    ``Omega_s`` and its far-field front starts at height ``s``, so the bottom value is
    ``(t - s)((t - s)/2 + L + s)``.
    """
    if not 0 <= s < t:
        raise ValueError("need 0 <= s < t")
    if not t < a.grid.L - a.C:
        raise DepthTooShallow(f"t={t:g} must be below L - C = {a.grid.L - a.C:g}")
    vs, _, _ = psor_solve(assemble(a, s), cfg)
    vt, _, _ = psor_solve(assemble(a, t), cfg)
    a_s = a if s == 0 else IndicatorField.from_fluid(a.grid, vs.values > 0)
    vts, _, _ = psor_solve(assemble(a_s, t - s, reference_level=s), cfg)
    return float(np.abs(vs.values + vts.values - vt.values).max())


def mask_inclusion(m1: DomainMask, m2: DomainMask) -> bool:
    return bool(np.all(~m1.cells | m2.cells))
