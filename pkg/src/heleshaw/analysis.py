"""Measurements on computed runs. Probes report; they never decide a run's fate."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BallTooSmall, GridMismatch
from .obstacle import ScalarField
from .semiflow import DomainMask, GraphFunction, SemiflowRun, extract_graph, subcell_graph

# worst ratio deviation / ((t - s) C^0.4 R^0.6) on the bundled cosine and wedge runs at
# dx = 1/64 was 0.71; frozen at roughly twice that
TIME_REGULARITY_CONSTANT = 1.5


@dataclass
class ProbeReport:
    quantity: str
    measured: float
    bound: float
    slack: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.measured <= self.bound + self.slack)

    def to_json(self) -> str:
        return json.dumps({
            "probe": self.quantity,
            "params": self.params,
            "measured": self.measured,
            "bound": self.bound,
            "slack": self.slack,
            "pass": self.passed,
        }, default=float)


@dataclass(frozen=True)
class ModulusSpec:
    """Modulus of continuity: Lipschitz ``L r``, Holder ``K r^beta`` or tabulated samples."""

    kind: str
    L: float = 1.0
    beta: float = 1.0
    K: float = 1.0
    r: tuple[float, ...] = ()
    w: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("lipschitz", "holder", "tabulated"):
            raise ValueError(f"unknown modulus kind {self.kind!r}")
        if self.kind == "tabulated":
            if len(self.r) != len(self.w) or not self.r:
                raise ValueError("tabulated modulus needs matching r and w samples")
            if np.any(np.diff(self.w) < 0) or np.any(np.diff(self.r) <= 0):
                raise ValueError("tabulated modulus must be nondecreasing in increasing r")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "lipschitz":
            return self.L * r
        if self.kind == "holder":
            return self.K * np.power(r, self.beta)
        # piecewise linear through (0, 0) and the samples, flat beyond the last one
        return np.interp(r, (0.0,) + tuple(self.r), (0.0,) + tuple(self.w))


def _same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatch("objects live on different grids")


def symmetric_difference(m1: DomainMask, m2: DomainMask) -> float:
    _same_grid(m1, m2)
    return np.count_nonzero(m1.cells ^ m2.cells) * m1.grid.cell_volume


def one_sided_difference(m1: DomainMask, m2: DomainMask) -> float:
    """Volume of ``m1 \\ m2``."""
    _same_grid(m1, m2)
    return np.count_nonzero(m1.cells & ~m2.cells) * m1.grid.cell_volume


def interface_cells(m: DomainMask) -> int:
    """Fluid nodes with at least one dry face neighbour (lateral wraparound)."""
    c = m.cells
    edge = np.zeros_like(c)
    edge[:-1] |= c[:-1] & ~c[1:]
    edge[1:] |= c[1:] & ~c[:-1]
    if m.grid.n_lat > 1:
        for ax in range(1, c.ndim):
            edge |= c & ~np.roll(c, 1, axis=ax)
            edge |= c & ~np.roll(c, -1, axis=ax)
    return int(np.count_nonzero(edge))


def lp_norm(values: np.ndarray, dx: float, p: float) -> float:
    v = np.abs(np.asarray(values, dtype=float))
    if math.isinf(p):
        return float(v.max())
    return float((np.sum(v ** p) * dx ** v.ndim) ** (1.0 / p))


def lp_graph_distance(f1: GraphFunction, f2: GraphFunction, p: float) -> float:
    _same_grid(f1, f2)
    if p not in (1, 2, math.inf):
        raise ValueError("p must be 1, 2 or inf")
    return lp_norm(f1.f - f2.f, f1.grid.dx, p)


def _periodic_shifts(grid, max_pairs):
    n, d, dx = grid.n_lat, grid.d, grid.dx
    half = n // 2
    if d == 1:
        shifts = [(s,) for s in range(1, half + 1)]
    else:
        shifts = [(s1, s2) for s1 in range(-half + 1, half + 1) for s2 in range(0, half + 1)
                  if (s2 > 0 or s1 > 0)]
    out = []
    for s in shifts:
        r = dx * math.sqrt(sum(min(abs(k), n - abs(k)) ** 2 for k in s))
        if r <= grid.R:
            out.append((s, r))
    if max_pairs and len(out) * n ** d > max_pairs:
        step = max(1, int(len(out) * n ** d // max_pairs))
        out = out[::step]
    return out


def modulus_check(f: GraphFunction, m: ModulusSpec, max_pairs: int = 2_000_000) -> ProbeReport:
    """Largest excess ``|f(x) - f(y)| - w(|x - y|)`` over periodic pairs within ``R``."""
    g = f.grid
    worst = -math.inf
    for s, r in _periodic_shifts(g, max_pairs):
        shifted = np.roll(f.f, s, axis=tuple(range(g.d)))
        worst = max(worst, float(np.abs(f.f - shifted).max() - m(r)))
    if worst == -math.inf:
        worst = 0.0
    return ProbeReport("modulus_excess", worst, 0.0, 2 * g.dx, {"kind": m.kind, "t": f.t})


def _forward_gradients(h: np.ndarray, dx: float) -> list[np.ndarray]:
    return [(np.roll(h, -1, axis=k) - h) / dx for k in range(h.ndim)]


def lyapunov_report(run: SemiflowRun, p: float, heights: str = "mask") -> list[ProbeReport]:
    """``||h||_p`` and ``||d_k h||_p`` must not grow between consecutive run times."""
    g = run.grid
    graphs = []
    for i, t in enumerate(run.times):
        if heights == "subcell" and t > 0:
            graphs.append(subcell_graph(run.fields[i], t, run.indicator))
        else:
            graphs.append(extract_graph(run.masks[i], t))
    slack = 4 * g.dx * (2 * g.R) ** (g.d / p)
    reports = []
    for a, b in zip(graphs, graphs[1:]):
        params = {"p": p, "t0": a.t, "t1": b.t}
        reports.append(ProbeReport("lyapunov_h", lp_norm(b.h, g.dx, p), lp_norm(a.h, g.dx, p), slack, params))
        for k, (ga, gb) in enumerate(zip(_forward_gradients(a.h, g.dx), _forward_gradients(b.h, g.dx))):
            reports.append(ProbeReport(f"lyapunov_grad{k + 1}", lp_norm(gb, g.dx, p),
                                       lp_norm(ga, g.dx, p), slack, params))
    return reports


def ball_columns(grid, R_ball: float, center: Sequence[float]) -> np.ndarray:
    lat = grid.lateral_mesh()
    r2 = 0.0
    for k, x in enumerate(lat):
        dist = np.abs(x - center[k])
        dist = np.minimum(dist, 2 * grid.R - dist)
        r2 = r2 + dist ** 2
    return r2 < R_ball ** 2


def time_regularity_measure(run: SemiflowRun, i: int, j: int, R_ball: float,
                            center: Sequence[float] | None = None,
                            c_meas: float = TIME_REGULARITY_CONSTANT) -> ProbeReport:
    """Wetted volume in the cylinder over a lateral ball versus ``(t_j - t_i) |B|``."""
    g = run.grid
    if R_ball <= run.C:
        raise BallTooSmall(f"ball radius {R_ball:g} must exceed C = {run.C:g}")
    if R_ball > g.R:
        raise ValueError("ball does not fit laterally")
    center = [0.0] * g.d if center is None else list(center)
    cols = ball_columns(g, R_ball, center)
    ball = np.count_nonzero(cols) * g.dx ** g.d
    ti, tj = run.times[i], run.times[j]
    wet = run.masks[j].cells & ~run.masks[i].cells
    volume = np.count_nonzero(wet[:, cols]) * g.cell_volume
    deviation = abs(volume - (tj - ti) * ball)
    bound = abs(tj - ti) * c_meas * run.C ** 0.4 * R_ball ** (g.d - 0.4)
    return ProbeReport("time_regularity", deviation, bound, ball * g.dx,
                       {"s": ti, "t": tj, "R_ball": R_ball, "volume": volume, "ball": ball})


def waiting_time_probe(run: SemiflowRun, apex: Sequence[float]) -> float | None:
    """First run time whose domain contains the node nearest ``apex``; ``None`` if never."""
    g = run.grid
    idx = (g.height_index(apex[-1]),) + tuple(g.lateral_index(x) for x in apex[:-1])
    if run.indicator.fluid[idx]:
        raise ValueError("apex node must be dry initially")
    for t, m in zip(run.times, run.masks):
        if m.cells[idx]:
            return t
    return None


def taylor_probe(p_field: ScalarField, graph: GraphFunction,
                 exclude: Sequence[tuple[int, ...]] = ()) -> ProbeReport:
    """Per-column ``-d_N p`` from the two highest wet nodes; passes if the minimum is positive."""
    g = p_field.grid
    count = np.rint((graph.f + g.L) / g.dx + 0.5).astype(int)
    top = np.clip(count - 1, 1, g.n_rows - 1)
    below = top - 1
    v = p_field.values
    p_top = np.take_along_axis(v, top[None], axis=0)[0]
    p_below = np.take_along_axis(v, below[None], axis=0)[0]
    slope = (p_below - p_top) / g.dx
    keep = np.ones(slope.shape, dtype=bool)
    for col in exclude:
        keep[col] = False
    vals = slope[keep]
    lo, hi = float(vals.min()), float(vals.max())
    # stored as -min against bound 0 so the generic rule reads min >= 0
    return ProbeReport("taylor_min", -lo, 0.0, 0.0, {"min": lo, "max": hi, "t": graph.t})


def contraction_chain(pairs: Sequence[tuple[SemiflowRun, SemiflowRun]]) -> list[ProbeReport]:
    """``|Omega1_t D Omega2_t| <= |Omega1_0 D Omega2_0|`` + interface-cell slack, per time."""
    reports = []
    for r1, r2 in pairs:
        d0 = symmetric_difference(r1.masks[0], r2.masks[0])
        slack = (interface_cells(r1.masks[0]) + interface_cells(r2.masks[0])) * r1.grid.cell_volume
        for k in range(1, len(r1.times)):
            reports.append(ProbeReport(
                "contraction", symmetric_difference(r1.masks[k], r2.masks[k]), d0, slack,
                {"t": r1.times[k], "a": r1.scenario_ref, "b": r2.scenario_ref}))
    return reports


def reports_to_jsonl(reports: Sequence[ProbeReport]) -> str:
    return "".join(r.to_json() + "\n" for r in reports)


def report_from_dict(d: dict) -> ProbeReport:
    return ProbeReport(d["probe"], d["measured"], d["bound"], d.get("slack", 0.0), d.get("params", {}))

