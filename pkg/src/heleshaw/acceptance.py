"""Acceptance criteria as executable checks.

Each criterion returns a :class:`CriterionResult` holding the probe reports it produced
and its wall time. Runs are cached per suite invocation so criteria sharing a scenario
solve it once.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import (
    ProbeReport,
    contraction_chain,
    lp_graph_distance,
    time_regularity_measure,
    taylor_probe,
    waiting_time_probe,
    ball_columns,
)
from .errors import HeleShawError, NotAGraph
from .geometry import GridSpec, IndicatorField, rasterize_scenario
from .obstacle import ObstacleProblem, SolverConfig, oracle_active_set, psor_solve, sampled_v0
from .reference import mode_amplitude, v0
from .scenarios import load_bundled
from .semiflow import SemiflowRun, compose_check, evolve, extract_graph, mask_inclusion, pressure, subcell_graph

DEFAULT_DX = 1 / 64

# max |u - v0(1, x_N)| on the bundled flat grid at dx = 1/64 (measured 5.580e-3)
FLAT_ERROR_BOUND = 5.6e-3
# semi-flow defect / dx^2 on the flat scenario at dx = 1/64, (s, t) = (0.5, 1)
SEMIFLOW_K = 2.3
# first run time at which the wedge-135 apex wets, dx = 1/128, step 0.005
WEDGE135_FIRST_WET = 0.025

ORACLE_CASES = 50
ORACLE_SEED = 1729


@dataclass
class CriterionResult:
    number: int
    title: str
    reports: list[ProbeReport] = field(default_factory=list)
    seconds: float = 0.0
    limit: float | None = None
    error: str | None = None

    @property
    def passed(self) -> bool:
        if self.error is not None or not self.reports:
            return False
        if self.limit is not None and self.seconds > self.limit:
            return False
        return all(r.passed for r in self.reports)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        timing = f"{self.seconds:.1f}s" + (f" / {self.limit:g}s" if self.limit else "")
        head = f"[{status}] criterion {self.number:2d} {self.title} ({timing})"
        if self.error:
            return head + f" error: {self.error}"
        failing = [r for r in self.reports if not r.passed]
        if failing:
            r = failing[0]
            head += f" first failure: {r.quantity} measured={r.measured:.4g} bound={r.bound:.4g}+{r.slack:.3g}"
        return head


def snap_dx(R: float, dx: float) -> float:
    """Closest spacing to ``dx`` that splits ``2R`` into an even number of cells."""
    n = max(2, 2 * round(R / dx))
    return 2 * R / n


class Context:
    """Resolution and a cache of rasterized fields and runs."""

    def __init__(self, dx: float = DEFAULT_DX, cfg: SolverConfig = SolverConfig()):
        self.dx = dx
        self.cfg = cfg
        self._fields: dict = {}
        self._runs: dict = {}

    def field(self, name: str, dx: float | None = None, **grid) -> IndicatorField:
        step = self.dx if dx is None else dx
        key = (name, step, tuple(sorted(grid.items())))
        if key not in self._fields:
            s, g0 = load_bundled(name, **grid)
            g = GridSpec.fitted(g0.d, g0.R, g0.L, g0.H_top, snap_dx(g0.R, step))
            self._fields[key] = rasterize_scenario(s, g)
        return self._fields[key]

    def run(self, name: str, times, dx: float | None = None, **grid) -> SemiflowRun:
        times = tuple(float(t) for t in times)
        a = self.field(name, dx, **grid)
        key = (name, a.grid, times)
        if key not in self._runs:
            self._runs[key] = evolve(a, times, self.cfg, scenario_ref=name)
        return self._runs[key]


# ------------------------------------------------------------------ criteria


def criterion_oracle(ctx: Context) -> list[ProbeReport]:
    rng = np.random.default_rng(ORACLE_SEED)
    cfg = SolverConfig(tol=1e-11)
    worst, worst_case = 0.0, -1
    for case in range(ORACLE_CASES):
        interior = int(rng.integers(1, 13))
        h = 0.25
        rows = interior + 2
        k = int(rng.integers(1, rows - 1))
        g = GridSpec(1, h / 2, k * h, (rows - 1 - k) * h, h)
        chi = rng.random(g.shape) < 0.5
        p = ObstacleProblem(g, chi, float(rng.uniform(0.0, 1.5)))
        u, _, _ = psor_solve(p, cfg)
        ref = oracle_active_set(p)
        err = float(np.abs(u.values - ref.values).max()) / p.scale
        if err > worst:
            worst, worst_case = err, case
    return [ProbeReport("oracle_max_scaled_diff", worst, 1e-8, 0.0,
                        {"cases": ORACLE_CASES, "seed": ORACLE_SEED, "worst_case": worst_case})]


def criterion_flat(ctx: Context) -> list[ProbeReport]:
    run = ctx.run("flat", [1.0])
    g = run.grid
    u = run.fields[0].values
    xn, _ = g.mesh()
    err = float(np.abs(u - v0(1.0, xn)).max())
    graph = extract_graph(run.masks[0], 1.0)
    return [
        ProbeReport("flat_max_error", err, 1e-2, 0.0, {"dx": g.dx}),
        ProbeReport("flat_error_regression", err, FLAT_ERROR_BOUND, 0.0, {"dx": g.dx}),
        ProbeReport("flat_front_offset", float(np.abs(graph.f - 1.0).max()), g.dx, 0.0, {}),
        ProbeReport("flat_below_top_row", float(np.abs(u[-2]).max()), 0.0, 0.0, {}),
    ]


SANDWICH_SCENARIOS = ("flat", "cosine", "wedge60", "wedge135", "bubble")
SANDWICH_TIMES = (0.25, 0.5, 1.0)


def criterion_sandwich(ctx: Context) -> list[ProbeReport]:
    reports = []
    for name in SANDWICH_SCENARIOS:
        run = ctx.run(name, (0.0,) + SANDWICH_TIMES)
        g = run.grid
        for t, u in zip(run.times[1:], run.fields[1:]):
            tol = 2 * ctx.cfg.tol * max(1.0, t * (0.5 * t + g.L))
            lo = sampled_v0(g, t, run.C)
            hi = sampled_v0(g, t, -run.C)
            params = {"scenario": name, "t": t, "C": run.C}
            reports.append(ProbeReport("sandwich_lower", float((lo - u.values).max()), tol, 0.0, params))
            reports.append(ProbeReport("sandwich_upper", float((u.values - hi).max()), tol, 0.0, params))
    return reports


def _violations(inner, outer) -> int:
    return int(np.count_nonzero(inner & ~outer))


def criterion_monotonicity(ctx: Context) -> list[ProbeReport]:
    reports = []
    for name in SANDWICH_SCENARIOS:
        run = ctx.run(name, (0.0,) + SANDWICH_TIMES)
        bad = sum(_violations(m1.cells, m2.cells) for m1, m2 in zip(run.masks, run.masks[1:]))
        reports.append(ProbeReport("mask_nesting_violations", bad, 0, 0.0, {"scenario": name}))
    wedge = ctx.run("wedge60", (0.0,) + SANDWICH_TIMES)
    flat_grid = wedge.grid.to_dict()
    flat = ctx.run("flat", (0.0,) + SANDWICH_TIMES, dx=wedge.grid.dx,
                   R=flat_grid["R"], L=flat_grid["L"], H_top=flat_grid["H_top"])
    if not mask_inclusion(wedge.masks[0], flat.masks[0]):
        raise HeleShawError("wedge60 initial fluid is not contained in flat")
    bad = sum(_violations(m1.cells, m2.cells) for m1, m2 in zip(wedge.masks, flat.masks))
    reports.append(ProbeReport("inclusion_violations", bad, 0, 0.0, {"pair": "wedge60<=flat"}))
    return reports


CONTRACTION_PAIRS = (("cosine", "cosine_shifted"), ("wedge60", "wedge135"))
CONTRACTION_TIMES = (0.0, 0.5, 1.0)


def criterion_contraction(ctx: Context) -> list[ProbeReport]:
    reports = []
    for n1, n2 in CONTRACTION_PAIRS:
        r1, r2 = ctx.run(n1, CONTRACTION_TIMES), ctx.run(n2, CONTRACTION_TIMES)
        reports.extend(contraction_chain([(r1, r2)]))
        g = r1.grid
        graphs = [(extract_graph(m1, t), extract_graph(m2, t))
                  for t, m1, m2 in zip(r1.times, r1.masks, r2.masks)]
        for p in (1, 2, math.inf):
            d0 = lp_graph_distance(*graphs[0], p)
            slack = 2 * g.dx * (2 * g.R) ** (0 if math.isinf(p) else g.d / p)
            for t, (f1, f2) in zip(r1.times[1:], graphs[1:]):
                reports.append(ProbeReport("lp_contraction", lp_graph_distance(f1, f2, p), d0, slack,
                                           {"pair": f"{n1},{n2}", "p": p, "t": t}))
    return reports


SEMIFLOW_PAIRS = ((0.25, 0.75), (0.5, 1.0))


def criterion_semiflow(ctx: Context) -> list[ProbeReport]:
    reports = []
    for name in ("flat", "cosine"):
        a = ctx.field(name)
        g = a.grid
        for s, t in SEMIFLOW_PAIRS:
            defect = compose_check(a, s, t, ctx.cfg)
            scale = max(1.0, t * (0.5 * t + g.L))
            bound = 5 * ctx.cfg.tol * scale + SEMIFLOW_K * g.dx ** 2
            reports.append(ProbeReport("semiflow_defect", defect, bound, 0.0,
                                       {"scenario": name, "s": s, "t": t, "dx": g.dx}))
    return reports


def criterion_eventual_graph(ctx: Context) -> list[ProbeReport]:
    a = ctx.field("bubble")
    g = a.grid
    t_late = 2 * a.C + 4 * g.dx
    run = ctx.run("bubble", (0.0, t_late))

    def graph_failures(i):
        try:
            extract_graph(run.masks[i], run.times[i])
        except NotAGraph:
            return 1
        return 0

    return [
        ProbeReport("bubble_strip_constant", abs(a.C - 1.0), 0.0, g.dx, {"C": a.C}),
        ProbeReport("bubble_graph_at_0", 1 - graph_failures(0), 0, 0.0, {"t": 0.0}),
        ProbeReport("bubble_graph_late", graph_failures(1), 0, 0.0, {"t": t_late}),
    ]


WAITING_TIMES = tuple(0.005 * k for k in range(21))


def criterion_waiting(ctx: Context) -> list[ProbeReport]:
    fine = ctx.dx / 2
    first = {}
    for name in ("wedge60", "wedge135"):
        run = ctx.run(name, WAITING_TIMES, dx=fine, L=1.0, H_top=1.0)
        first[name] = waiting_time_probe(run, (0.0, 0.0))
    dry = first["wedge60"]
    wet = first["wedge135"]
    params = {"dx": fine, "t_max": WAITING_TIMES[-1], "frozen_wedge135": WEDGE135_FIRST_WET}
    return [
        ProbeReport("wedge60_apex_wets", 0 if dry is None else 1, 0, 0.0, dict(params, first_wet=dry)),
        ProbeReport("wedge135_first_wet", math.inf if wet is None else wet, 0.05, 0.0, params),
    ]


def criterion_linear(ctx: Context) -> list[ProbeReport]:
    t = 0.5
    run = ctx.run("cosine_small", (0.0, t))
    g = run.grid
    a0 = mode_amplitude(extract_graph(run.masks[0], 0.0).h, g.R, 1.0)
    a1 = mode_amplitude(subcell_graph(run.fields[1], t, run.indicator).h, g.R, 1.0)
    ratio = a1 / a0
    target = math.exp(-t)
    return [ProbeReport("linear_ratio_rel_error", abs(ratio / target - 1), 0.1, 0.0,
                        {"ratio": ratio, "target": target, "a0": a0, "a1": a1})]


REGULARITY_TIMES = (0.0, 0.25, 0.5, 1.0)
REGULARITY_PAIRS = ((0, 1), (1, 2), (0, 3))


def criterion_time_regularity(ctx: Context) -> list[ProbeReport]:
    reports = []
    flat = ctx.run("flat", REGULARITY_TIMES)
    g = flat.grid
    for R_ball in (0.5, 1.0):
        cols = ball_columns(g, R_ball, [0.0] * g.d)
        ball = np.count_nonzero(cols) * g.dx ** g.d
        for i, j in REGULARITY_PAIRS:
            wet = flat.masks[j].cells & ~flat.masks[i].cells
            volume = np.count_nonzero(wet[:, cols]) * g.cell_volume
            dev = abs(volume - (flat.times[j] - flat.times[i]) * ball)
            reports.append(ProbeReport("time_regularity_flat", dev, 0.0, ball * g.dx,
                                       {"R_ball": R_ball, "s": flat.times[i], "t": flat.times[j]}))
    cos = ctx.run("cosine", REGULARITY_TIMES)
    for R_ball in (0.5, 1.0, 2.0):
        for i, j in REGULARITY_PAIRS:
            reports.append(time_regularity_measure(cos, i, j, R_ball))
    return reports


def criterion_taylor(ctx: Context) -> list[ProbeReport]:
    reports = []
    for name in ("flat", "cosine_small"):
        a = ctx.field(name)
        t = 0.5
        run = ctx.run(name, (t, t + a.grid.dx))
        probe = taylor_probe(pressure(run, 0), extract_graph(run.masks[1], run.times[1]))
        lo = probe.params["min"]
        reports.append(ProbeReport("taylor_min", -lo, -0.5, 0.0, dict(probe.params, scenario=name)))
    return reports


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    func: Callable[[Context], list[ProbeReport]]
    limit: float | None = None


CRITERIA = (
    Criterion(1, "oracle equivalence", criterion_oracle, 5.0),
    Criterion(2, "flat exactness", criterion_flat, 30.0),
    Criterion(3, "sandwich", criterion_sandwich),
    Criterion(4, "monotonicity and inclusion", criterion_monotonicity),
    Criterion(5, "stability and contraction", criterion_contraction),
    Criterion(6, "semi-flow composition", criterion_semiflow),
    Criterion(7, "eventual subgraph", criterion_eventual_graph),
    Criterion(8, "waiting-time dichotomy", criterion_waiting, 300.0),
    Criterion(9, "linearized cross-validation", criterion_linear),
    Criterion(10, "time-regularity volume law", criterion_time_regularity),
    Criterion(11, "Taylor diagnostic", criterion_taylor),
)

SUITES = {
    "oracle": (1,),
    "flat": (2,),
    "sandwich": (3, 4),
    "contraction": (5,),
    "semiflow": (6, 10),
    "graph": (7, 11),
    "waiting": (8,),
    "linear": (9,),
    "all": tuple(c.number for c in CRITERIA),
}


def run_criterion(c: Criterion, ctx: Context) -> CriterionResult:
    start = time.perf_counter()
    try:
        reports = c.func(ctx)
        error = None
    except HeleShawError as exc:
        reports, error = [], f"{type(exc).__name__}: {exc}"
    return CriterionResult(c.number, c.title, reports, time.perf_counter() - start, c.limit, error)


def run_suite(name: str, dx: float = DEFAULT_DX, budget: float | None = None,
              ctx: Context | None = None) -> list[CriterionResult]:
    """Run the criteria of ``name``; criteria not started within ``budget`` seconds are failed."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    ctx = ctx or Context(dx)
    start = time.perf_counter()
    results = []
    for c in CRITERIA:
        if c.number not in SUITES[name]:
            continue
        if budget is not None and time.perf_counter() - start > budget:
            results.append(CriterionResult(c.number, c.title, error="budget exhausted"))
            continue
        results.append(run_criterion(c, ctx))
    return results
