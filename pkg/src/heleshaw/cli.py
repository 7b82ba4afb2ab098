"""Command line entry point: ``heleshaw run | check | ref``.

Exit codes: 0 success, 1 input error, 2 numerical failure (a solve did not converge or a
check failed).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import acceptance
from .analysis import reports_to_jsonl
from .errors import GeometryError, HeleShawError, NotAGraph, SolverError
from .geometry import GridSpec, load_scenario, rasterize_scenario
from .io import config_hash, dump_field, mask_image, write_graph_csv, write_manifest, write_pgm
from .obstacle import SolverConfig
from .reference import ConeSpec, cone_exponent_2d, cone_harmonic_2d, linearized_graph_evolution, quadratic_harmonic, v0
from .scenarios import recommended_grid
from .semiflow import evolve, extract_graph

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("heleshaw")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def parse_times(spec: str) -> list[float]:
    """``start:end:step`` (end included when it lies on the step) or ``t0,t1,...``."""
    try:
        if ":" in spec:
            start, end, step = (float(x) for x in spec.split(":"))
            if step <= 0 or end < start:
                raise InputError(f"bad time range {spec!r}")
            n = int(math.floor((end - start) / step + 1e-9))
            return [start + k * step for k in range(n + 1)]
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse times {spec!r}: {exc}") from None


@dataclass
class RunConfig:
    scenario: str
    times: list[float]
    dx: float
    R: float
    L: float
    H_top: float
    omega: float | None
    tol: float
    max_iters: int
    chunks: int
    out: str

    def solver(self) -> SolverConfig:
        return SolverConfig(omega=self.omega, tol=self.tol, max_iters=self.max_iters)


def _run_config(ns) -> RunConfig:
    path = Path(ns.scenario)
    if not path.is_file():
        raise InputError(f"scenario file {path} not found")
    try:
        stored = recommended_grid(path) or {}
    except json.JSONDecodeError as exc:
        raise InputError(f"scenario file {path} is not valid JSON: {exc}") from None
    values = {}
    for key, flag in (("dx", "dx"), ("R", "R"), ("L", "L"), ("H_top", "Htop")):
        v = getattr(ns, flag)
        if v is None:
            v = stored.get(key)
        if v is None:
            raise InputError(f"--{flag} is required (scenario has no stored grid)")
        values[key] = float(v)
    return RunConfig(str(path), parse_times(ns.times), omega=ns.omega, tol=ns.tol,
                     max_iters=ns.max_iters, chunks=ns.chunks, out=ns.out, **values)


def cmd_run(ns) -> int:
    try:
        cfg = _run_config(ns)
        solver = cfg.solver()
        scenario = load_scenario(cfg.scenario)
        grid = GridSpec.fitted(scenario.d, cfg.R, cfg.L, cfg.H_top, cfg.dx)
        a = rasterize_scenario(scenario, grid)
    except (InputError, GeometryError, ValueError, KeyError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        run = evolve(a, cfg.times, solver, chunks=cfg.chunks, scenario_ref=scenario.name)
    except SolverError as exc:
        numeric = not isinstance(exc, ValueError)
        print(f"{'solver' if numeric else 'input'} error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if numeric else EXIT_INPUT

    files = {"indicator": "indicator.bin", "times": []}
    dump_field(out / "indicator.bin", grid, a.cells.astype(float))
    for i, t in enumerate(run.times):
        entry = {"t": t, "field": f"field_{i:03d}.bin", "mask": f"mask_{i:03d}.pgm"}
        dump_field(out / entry["field"], grid, run.fields[i].values)
        write_pgm(out / entry["mask"], mask_image(run.masks[i].cells))
        try:
            write_graph_csv(out / f"graph_{i:03d}.csv", extract_graph(run.masks[i], t))
            entry["graph"] = f"graph_{i:03d}.csv"
        except NotAGraph as exc:
            log.info("t=%g: %s", t, exc)
        files["times"].append(entry)

    config = asdict(cfg)
    manifest = {
        "scenario": {"name": scenario.name, "path": cfg.scenario, "hash": scenario.digest()},
        "config": config,
        "config_hash": config_hash(config),
        "grid": grid.to_dict(),
        "C": a.C,
        "times": list(run.times),
        "diagnostics": run.diagnostics,
        "files": files,
    }
    write_manifest(out / "manifest.json", manifest)
    print(f"{len(run.times)} solves written to {out}")
    return EXIT_OK


def cmd_check(ns) -> int:
    if ns.suite not in acceptance.SUITES:
        print(f"unknown suite {ns.suite!r}; choose from {', '.join(acceptance.SUITES)}", file=sys.stderr)
        return EXIT_INPUT
    if ns.dx is not None and not ns.dx > 0:
        print("--dx must be positive", file=sys.stderr)
        return EXIT_INPUT
    dx = ns.dx or acceptance.DEFAULT_DX
    results = acceptance.run_suite(ns.suite, dx=dx, budget=ns.budget)
    print(f"{'criterion':>9}  {'quantity':<26} {'measured':>12} {'bound':>12} {'slack':>10}  pass")
    for res in results:
        print(res.line())
        for r in res.reports:
            print(f"{res.number:>9}  {r.quantity:<26} {r.measured:>12.5g} {r.bound:>12.5g} "
                  f"{r.slack:>10.3g}  {'yes' if r.passed else 'NO'}")
    if ns.jsonl:
        Path(ns.jsonl).write_text(reports_to_jsonl([r for res in results for r in res.reports]))
    ok = all(res.passed for res in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return EXIT_OK if ok else EXIT_NUMERIC


def _arange_inclusive(start, stop, step):
    n = int(math.floor((stop - start) / step + 1e-9))
    return start + step * np.arange(n + 1)


def _curve_rows(ns):
    if ns.curve == "v0":
        xs = _arange_inclusive(ns.start, ns.stop, ns.step)
        return ["x_N", "v0"], zip(xs, v0(ns.t, xs))
    if ns.curve == "cone_exponent":
        alphas = np.linspace(ns.start, ns.stop, ns.num)
        return ["alpha", "lambda"], ((a, cone_exponent_2d(a).lam) for a in alphas)
    if ns.curve == "quadratic_harmonic":
        xs = _arange_inclusive(ns.start, ns.stop, ns.step)
        pts = [(x1, xn) for xn in xs for x1 in xs]
        coords = np.array([[x1] * ns.d + [xn] for x1, xn in pts])
        vals = quadratic_harmonic(coords, ns.d)
        return ["x1", "x_N", "value"], ((p[0], p[1], v) for p, v in zip(pts, np.atleast_1d(vals)))
    if ns.curve == "cone_harmonic":
        xs = _arange_inclusive(ns.start, ns.stop, ns.step)
        cone = ConeSpec((0.0, 0.0), ns.alpha)
        pts = np.array([(x1, xn) for xn in xs for x1 in xs])
        return ["x1", "x_N", "value"], ((p[0], p[1], v) for p, v in zip(pts, cone_harmonic_2d(cone, pts)))
    if ns.curve == "linearized":
        x = -math.pi + 2 * math.pi / ns.num * np.arange(ns.num)
        h0 = ns.amplitude * np.cos(x)
        h = linearized_graph_evolution(h0, ns.t)
        return ["x1", "h0", "h"], zip(x, h0, h)
    raise InputError(f"unknown curve {ns.curve!r}")


REF_CURVES = ("v0", "cone_exponent", "quadratic_harmonic", "cone_harmonic", "linearized")


def cmd_ref(ns) -> int:
    defaults = {
        "v0": dict(start=-4.0, stop=2.0, step=0.25),
        "cone_exponent": dict(start=0.1, stop=2 * math.pi, num=64),
        "quadratic_harmonic": dict(start=-1.0, stop=1.0, step=0.25),
        "cone_harmonic": dict(start=-1.0, stop=1.0, step=0.25),
        "linearized": dict(num=64),
    }
    if ns.curve not in REF_CURVES:
        print(f"unknown curve {ns.curve!r}; choose from {', '.join(REF_CURVES)}", file=sys.stderr)
        return EXIT_INPUT
    for key, value in defaults[ns.curve].items():
        if getattr(ns, key) is None:
            setattr(ns, key, value)
    try:
        head, rows = _curve_rows(ns)
        rows = list(rows)
    except (HeleShawError, ValueError, InputError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(head)
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="heleshaw", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="evolve a scenario and write fields, masks, graphs and a manifest")
    r.add_argument("--scenario", required=True)
    r.add_argument("--times", required=True, help="start:end:step or a comma-separated list")
    r.add_argument("--dx", type=float)
    r.add_argument("--R", type=float)
    r.add_argument("--L", type=float)
    r.add_argument("--Htop", type=float)
    r.add_argument("--omega", type=float)
    r.add_argument("--tol", type=float, default=1e-8)
    r.add_argument("--max-iters", type=int, default=200_000)
    r.add_argument("--chunks", type=int, default=1)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run an acceptance suite and print a report table")
    c.add_argument("--suite", required=True)
    c.add_argument("--dx", type=float)
    c.add_argument("--budget", type=float, help="seconds; criteria not started in time fail")
    c.add_argument("--jsonl", help="also write every probe report as JSON lines")
    c.set_defaults(func=cmd_check)

    f = sub.add_parser("ref", help="print a reference curve as CSV")
    f.add_argument("--curve", required=True)
    f.add_argument("--t", type=float, default=1.0)
    f.add_argument("--start", type=float)
    f.add_argument("--stop", type=float)
    f.add_argument("--step", type=float)
    f.add_argument("--num", type=int)
    f.add_argument("--d", type=int, default=1)
    f.add_argument("--alpha", type=float, default=math.pi / 2)
    f.add_argument("--amplitude", type=float, default=0.01)
    f.set_defaults(func=cmd_ref)
    return p


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return ns.func(ns)
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
