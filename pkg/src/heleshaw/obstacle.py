"""Discrete obstacle problem ``Delta u = chi_A 1{u > 0}``, ``u >= 0`` on the periodic strip.

With ``K = -Delta_h`` (5- or 7-point stencil) and ``q = chi_A`` the problem is the
linear complementarity system

    u >= 0,   w = K u + q >= 0,   u . w = 0,

with Dirichlet rows ``u(-L) = t (t/2 + L + ref)`` and ``u(H_top) = 0``. It is solved by
projected SOR in red-black order; ``oracle_active_set`` enumerates active sets for
tiny instances as an independent check.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DepthTooShallow,
    GridMismatch,
    NoFeasibleActiveSet,
    NonFiniteValue,
    NotConverged,
    TooLarge,
)
from .geometry import GridSpec, IndicatorField

logger = logging.getLogger(__name__)

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


@dataclass(frozen=True)
class SolverConfig:
    """PSOR settings. ``omega=None`` picks the SOR optimum for the box height."""

    omega: float | None = None
    tol: float = 1e-8
    max_iters: int = 200_000
    check_every: int = 20

    def __post_init__(self):
        if self.omega is not None and not 0 < self.omega < 2:
            raise ValueError("omega must lie in (0, 2)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 0 or self.check_every < 1:
            raise ValueError("max_iters >= 0 and check_every >= 1 required")


@dataclass(frozen=True)
class KktResidual:
    primal_inf: float
    comp_inf: float
    feas_inf: float

    def max(self) -> float:
        return max(self.primal_inf, self.comp_inf, self.feas_inf)

    def to_dict(self) -> dict:
        return {"primal_inf": self.primal_inf, "comp_inf": self.comp_inf, "feas_inf": self.feas_inf}


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise GridMismatch(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if (v < 0).any():
            raise ValueError("field values must be nonnegative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ObstacleProblem:
    grid: GridSpec
    chi: np.ndarray
    t: float
    reference_level: float = 0.0
    C: float | None = field(default=None, compare=False)

    def __post_init__(self):
        chi = np.array(self.chi, dtype=bool)
        if chi.shape != self.grid.shape:
            raise GridMismatch("source mask does not match the grid")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        chi.flags.writeable = False
        object.__setattr__(self, "chi", chi)

    @property
    def bottom_value(self) -> float:
        return self.t * (0.5 * self.t + self.grid.L + self.reference_level)

    @property
    def top_value(self) -> float:
        return 0.0

    @property
    def scale(self) -> float:
        return max(1.0, self.bottom_value)


def assemble(a: IndicatorField, t: float, reference_level: float = 0.0) -> ObstacleProblem:
    """Pin the Dirichlet data for time ``t`` on the field's grid.

    ``reference_level`` is the height of the far-field front at the start of the
    sub-problem (nonzero only for restarted problems such as the semi-flow check).
    """
    g = a.grid
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not g.L > a.C + t:
        raise DepthTooShallow(f"L={g.L:g} must exceed C + t = {a.C + t:g}")
    if not g.H_top > a.C + t:
        raise DepthTooShallow(f"H_top={g.H_top:g} must exceed C + t = {a.C + t:g}")
    return ObstacleProblem(g, a.cells, float(t), float(reference_level), C=a.C)


def optimal_omega(grid: GridSpec) -> float:
    """SOR optimum ``2 / (1 + sqrt(1 - rho_J^2))`` for the Laplacian on the box."""
    lat = grid.d if grid.n_lat > 1 else 0
    m = grid.n_rows - 1
    rho = (math.cos(math.pi / m) + lat) / (1 + lat)
    return 2.0 / (1.0 + math.sqrt(1.0 - rho * rho))


def _lateral_axes(grid: GridSpec) -> list[int]:
    return list(range(1, grid.N)) if grid.n_lat > 1 else []


def _neighbor_sum(u: np.ndarray, axes: list[int]) -> np.ndarray:
    """Sum of the stencil neighbours on interior rows (rows 0 and -1 left at 0)."""
    out = np.zeros_like(u)
    inner = u[1:-1]
    out[1:-1] = u[:-2] + u[2:]
    for ax in axes:
        out[1:-1] += np.roll(inner, 1, axis=ax)
        out[1:-1] += np.roll(inner, -1, axis=ax)
    return out


def lcp_residual(u: np.ndarray, p: ObstacleProblem) -> np.ndarray:
    """``w = -Delta_h u + chi`` on interior rows, 0 on the Dirichlet rows."""
    axes = _lateral_axes(p.grid)
    diag = 2 * (1 + len(axes))
    w = np.zeros_like(u)
    nb = _neighbor_sum(u, axes)
    w[1:-1] = (diag * u[1:-1] - nb[1:-1]) / p.grid.dx ** 2 + p.chi[1:-1]
    return w


def residual(u: ScalarField, p: ObstacleProblem) -> KktResidual:
    if u.grid != p.grid:
        raise GridMismatch("field and problem live on different grids")
    v = u.values
    w = lcp_residual(v, p)[1:-1]
    inner = v[1:-1]
    return KktResidual(
        primal_inf=float(max(0.0, -w.min())),
        comp_inf=float(np.abs(inner * w).max()),
        feas_inf=float(max(0.0, -v.min())),
    )


def _natural_residual(v: np.ndarray, p: ObstacleProblem, diag: int) -> float:
    """Min-map residual ``|min(u / c, w)|`` in source units, ``c = dx^2 / diag``."""
    w = lcp_residual(v, p)[1:-1]
    c = p.grid.dx ** 2 / diag
    return float(np.abs(np.minimum(v[1:-1] / c, w)).max())


# ------------------------------------------------------------- sweep kernels


def _sweep_numpy(u, chi_h2, colors, axes, diag, omega):
    for color in colors:
        nb = _neighbor_sum(u, axes)
        gs = (nb - chi_h2) / diag
        new = u + omega * (gs - u)
        np.maximum(new, 0.0, out=new)
        np.copyto(u, new, where=color)


if numba is not None:

    @numba.njit(cache=True, nogil=True)
    def _sweep_2d(u, chi_h2, diag, omega, lateral):
        m, n = u.shape
        for c in range(2):
            for i in range(1, m - 1):
                for j in range(n):
                    if (i + j) % 2 != c:
                        continue
                    nb = u[i - 1, j] + u[i + 1, j]
                    if lateral:
                        nb = nb + u[i, (j - 1) % n]
                        nb = nb + u[i, (j + 1) % n]
                    gs = (nb - chi_h2[i, j]) / diag
                    new = u[i, j] + omega * (gs - u[i, j])
                    u[i, j] = new if new > 0.0 else 0.0

    @numba.njit(cache=True, nogil=True)
    def _sweep_3d(u, chi_h2, diag, omega, lateral):
        m, n, n2 = u.shape
        for c in range(2):
            for i in range(1, m - 1):
                for j in range(n):
                    for k in range(n2):
                        if (i + j + k) % 2 != c:
                            continue
                        nb = u[i - 1, j, k] + u[i + 1, j, k]
                        if lateral:
                            nb = nb + u[i, (j - 1) % n, k]
                            nb = nb + u[i, (j + 1) % n, k]
                            nb = nb + u[i, j, (k - 1) % n2]
                            nb = nb + u[i, j, (k + 1) % n2]
                        gs = (nb - chi_h2[i, j, k]) / diag
                        new = u[i, j, k] + omega * (gs - u[i, j, k])
                        u[i, j, k] = new if new > 0.0 else 0.0


def _color_masks(grid: GridSpec) -> list[np.ndarray]:
    idx = np.indices(grid.shape).sum(axis=0)
    interior = np.zeros(grid.shape, dtype=bool)
    interior[1:-1] = True
    return [interior & (idx % 2 == c) for c in (0, 1)]


def _make_sweeper(grid: GridSpec, chi_h2: np.ndarray, omega: float, backend: str):
    axes = _lateral_axes(grid)
    diag = float(2 * (1 + len(axes)))
    if backend == "auto":
        backend = "numba" if numba is not None else "numpy"
    if backend == "numba":
        kernel = _sweep_2d if grid.d == 1 else _sweep_3d
        lateral = bool(axes)
        return lambda u: kernel(u, chi_h2, diag, omega, lateral)
    if backend != "numpy":
        raise ValueError(f"unknown backend {backend!r}")
    colors = _color_masks(grid)
    return lambda u: _sweep_numpy(u, chi_h2, colors, axes, diag, omega)


def _initial_iterate(p: ObstacleProblem, warm_start: ScalarField | None) -> np.ndarray:
    if warm_start is None:
        u = np.zeros(p.grid.shape)
        u[0] = p.bottom_value
        return u
    if warm_start.grid != p.grid:
        raise GridMismatch("warm start lives on a different grid")
    v = warm_start.values
    if not np.isfinite(v).all():
        raise NonFiniteValue("warm start contains non-finite values")
    if not (np.all(v[0] == p.bottom_value) and np.all(v[-1] == p.top_value)):
        raise ValueError("warm start does not satisfy the Dirichlet rows")
    return np.array(v, dtype=float)


def with_dirichlet_rows(u: ScalarField, p: ObstacleProblem) -> ScalarField:
    """Copy of ``u`` with the boundary rows replaced by the data of ``p``."""
    v = np.array(u.values)
    v[0] = p.bottom_value
    v[-1] = p.top_value
    return ScalarField(p.grid, v)


def psor_solve(
    p: ObstacleProblem,
    cfg: SolverConfig = SolverConfig(),
    warm_start: ScalarField | None = None,
    backend: str = "auto",
) -> tuple[ScalarField, KktResidual, int]:
    """Projected SOR in red-black order.

    Stops once every KKT component is below ``tol * scale`` (``scale = max(1,
    bottom_value)``), the min-map residual is below ``tol * scale / max(1, H^2/8)``
    (so the max-norm error is at most about ``tol * scale``), and the positivity set did
    not change since the previous check. Projection writes literal zeros.
    """
    g = p.grid
    omega = cfg.omega if cfg.omega is not None else optimal_omega(g)
    axes = _lateral_axes(g)
    diag = 2 * (1 + len(axes))
    u = _initial_iterate(p, warm_start)
    chi_h2 = p.chi.astype(float) * g.dx ** 2
    sweep = _make_sweeper(g, chi_h2, omega, backend)

    target = cfg.tol * p.scale
    height = g.L + g.H_top
    accuracy = target / max(1.0, height * height / 8.0)

    def converged(v, prev_mask):
        kkt = residual(ScalarField(g, v), p)
        nat = _natural_residual(v, p, diag)
        mask = v > 0
        ok = kkt.max() <= target and nat <= accuracy and (
            prev_mask is not None and np.array_equal(mask, prev_mask)
        )
        return ok, kkt, mask

    ok, kkt, mask = converged(u, None)
    if kkt.max() <= target and _natural_residual(u, p, diag) <= accuracy:
        return ScalarField(g, u), kkt, 0
    it = 0
    while it < cfg.max_iters:
        steps = min(cfg.check_every, cfg.max_iters - it)
        for _ in range(steps):
            sweep(u)
        it += steps
        if not np.isfinite(u).all():
            raise NonFiniteValue(f"iterate became non-finite after {it} sweeps (omega={omega:g})")
        ok, kkt, mask = converged(u, mask)
        if ok:
            logger.debug("psor converged t=%g in %d sweeps", p.t, it)
            return ScalarField(g, u), kkt, it
    result = (ScalarField(g, u), kkt, it)
    raise NotConverged(f"no convergence in {it} sweeps at t={p.t:g} (kkt={kkt.max():.3g})", result)


# ------------------------------------------------------------------ oracle

MAX_ORACLE_NODES = 20


def _dense_system(p: ObstacleProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``K``, ``q`` over interior nodes (flattened), plus the interior index map."""
    g = p.grid
    inner_shape = (g.n_rows - 2,) + g.shape[1:]
    n = int(np.prod(inner_shape))
    index = np.arange(n).reshape(inner_shape)
    axes = _lateral_axes(g)
    diag = 2 * (1 + len(axes))
    h2 = g.dx ** 2
    K = np.zeros((n, n))
    q = p.chi[1:-1].astype(float).ravel().copy()
    bottom = np.zeros(inner_shape)
    bottom[0] = p.bottom_value
    top = np.zeros(inner_shape)
    top[-1] = p.top_value
    q -= (bottom + top).ravel() / h2
    for pos in np.ndindex(*inner_shape):
        r = index[pos]
        K[r, r] += diag / h2
        nbrs = []
        if pos[0] > 0:
            nbrs.append((pos[0] - 1,) + pos[1:])
        if pos[0] < inner_shape[0] - 1:
            nbrs.append((pos[0] + 1,) + pos[1:])
        for ax in axes:
            for step in (-1, 1):
                nb = list(pos)
                nb[ax] = (nb[ax] + step) % g.n_lat
                nbrs.append(tuple(nb))
        for nb in nbrs:
            K[r, index[nb]] -= 1.0 / h2
    return K, q, index


def oracle_active_set(p: ObstacleProblem) -> ScalarField:
    """Exact LCP solution by enumerating all ``2^n`` zero sets of the interior nodes."""
    g = p.grid
    n = (g.n_rows - 2) * int(np.prod(g.shape[1:]))
    if n > MAX_ORACLE_NODES:
        raise TooLarge(f"{n} interior nodes exceeds the enumeration limit {MAX_ORACLE_NODES}")
    K, q, _ = _dense_system(p)
    tol = 1e-10 * p.scale
    eye = np.eye(n)
    batch = 1 << min(n, 14)
    solution = None
    for start in range(0, 1 << n, batch):
        codes = np.arange(start, min(start + batch, 1 << n))
        active = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
        # active rows pin u_i = 0, the others impose w_i = 0
        M = np.where(active[:, :, None], eye[None], K[None])
        rhs = np.where(active, 0.0, -q[None])
        try:
            u = np.linalg.solve(M, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:  # pragma: no cover - K is SPD so never singular
            continue
        w = u @ K.T + q
        ok = (u >= -tol).all(axis=1) & (w >= -tol).all(axis=1)
        hits = np.flatnonzero(ok)
        if hits.size:
            c = hits[0]
            solution = np.where(active[c], 0.0, np.maximum(u[c], 0.0))
            break
    if solution is None:
        raise NoFeasibleActiveSet("no active set satisfies the complementarity conditions")
    values = np.zeros(g.shape)
    values[0] = p.bottom_value
    values[-1] = p.top_value
    values[1:-1] = solution.reshape((g.n_rows - 2,) + g.shape[1:])
    return ScalarField(g, values)


def sampled_v0(grid: GridSpec, t: float, shift: float) -> np.ndarray:
    """``v0(t, x_N + shift)`` broadcast over the whole grid."""
    from .reference import v0

    xn, _ = grid.mesh()
    return np.broadcast_to(v0(t, xn + shift), grid.shape).copy()


__all__ = [
    "SolverConfig",
    "KktResidual",
    "ScalarField",
    "ObstacleProblem",
    "assemble",
    "psor_solve",
    "residual",
    "oracle_active_set",
    "optimal_omega",
    "with_dirichlet_rows",
    "sampled_v0",
]
