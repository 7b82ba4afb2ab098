import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heleshaw.errors import DepthTooShallow, GridMismatch, NonFiniteValue, NotConverged, TooLarge
from heleshaw.geometry import GridSpec, IndicatorField, rasterize_scenario
from heleshaw.obstacle import (
    KktResidual,
    ObstacleProblem,
    ScalarField,
    SolverConfig,
    assemble,
    lcp_residual,
    optimal_omega,
    oracle_active_set,
    psor_solve,
    residual,
    sampled_v0,
    with_dirichlet_rows,
)
from heleshaw.reference import v0
from heleshaw.scenarios import bundled_field

from conftest import FLAT, scenario

TIGHT = SolverConfig(tol=1e-11)


def column_problem(chi, t, k):
    """Single-column problem with ``len(chi) - 2`` interior nodes and the bottom at ``-k*h``."""
    h = 0.25
    rows = len(chi)
    g = GridSpec(1, h / 2, k * h, (rows - 1 - k) * h, h)
    return ObstacleProblem(g, np.asarray(chi, dtype=bool).reshape(g.shape), t)


def test_bottom_value_closed_form(small_grid):
    g = GridSpec(1, 0.5, 4.0, 4.0, 0.25)
    a = rasterize_scenario(scenario(FLAT), g)
    assert assemble(a, 1.0).bottom_value == 4.5
    assert assemble(a, 0.0).bottom_value == 0.0
    g2 = GridSpec(1, 0.5, 4.0, 4.0, 0.25)
    s = scenario({"kind": "constant", "params": {"value": 0.8}})
    a2 = rasterize_scenario(s, g2)
    assert a2.C == 1.0  # top fluid at 0.75, plus one cell
    with pytest.raises(DepthTooShallow):
        assemble(a2, 3.0)
    assert assemble(a2, 2.0 - 1e-9).bottom_value == pytest.approx(10.0)


def test_depth_check_top():
    g = GridSpec(1, 0.5, 4.0, 1.0, 0.25)
    a = rasterize_scenario(scenario(FLAT), g)
    with pytest.raises(DepthTooShallow):
        assemble(a, 1.0)


def test_t_zero_solution_is_zero(flat_field):
    u, kkt, its = psor_solve(assemble(flat_field, 0.0))
    assert its == 0 and not u.values.any()
    assert kkt.max() == 0.0


def test_flat_matches_v0(flat_field):
    p = assemble(flat_field, 1.0)
    u, kkt, _ = psor_solve(p)
    xn, _ = p.grid.mesh()
    assert np.abs(u.values - v0(1.0, xn)).max() <= 0.5 * p.grid.dx
    assert kkt.max() <= 1e-8 * p.scale
    assert (u.values >= 0).all()
    assert u.values[0, 0] == p.bottom_value and not u.values[-1].any()


def test_projection_writes_literal_zero(flat_field):
    u, _, _ = psor_solve(assemble(flat_field, 0.5))
    small = u.values[(u.values < 1e-300)]
    assert np.all(small == 0.0)


def test_residual_of_zero_field():
    g = GridSpec(1, 0.5, 1.5, 1.5, 1 / 16)
    a = rasterize_scenario(scenario(FLAT), g)
    p = assemble(a, 1.0)
    u = with_dirichlet_rows(ScalarField(g, np.zeros(g.shape)), p)
    r = residual(u, p)
    assert r.feas_inf == 0 and r.comp_inf == 0 and r.primal_inf > 0
    w = lcp_residual(u.values, p)
    assert np.argmin(w.min(axis=1)) == 1  # violation sits on the bottom-adjacent row


def test_residual_of_shifted_v0_concentrates_at_kink(flat_field):
    p = assemble(flat_field, 1.0)
    g = p.grid
    u = sampled_v0(g, 1.0, -flat_field.C)
    w = lcp_residual(u, p)[:, 0]
    viol = np.abs(np.minimum(u[:, 0], w))
    kinks = np.array([g.height_index(flat_field.C), g.height_index(1.0 + flat_field.C)])
    bad = np.flatnonzero(viol > 1e-9)
    assert bad.size and np.all(np.abs(bad[:, None] - kinks[None]).min(axis=1) <= 1)


def test_kkt_dict():
    k = KktResidual(1.0, 2.0, 0.0)
    assert k.max() == 2.0 and k.to_dict() == {"primal_inf": 1.0, "comp_inf": 2.0, "feas_inf": 0.0}


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(omega=2.0)
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)


def test_optimal_omega_range():
    for g in (GridSpec(1, 0.5, 1.5, 1.5, 1 / 16), GridSpec(2, 0.25, 1.0, 1.0, 1 / 16),
              GridSpec(1, 0.125, 1.0, 1.0, 0.25)):
        assert 1.0 <= optimal_omega(g) < 2.0


def test_not_converged_carries_best_iterate(flat_field):
    p = assemble(flat_field, 1.0)
    with pytest.raises(NotConverged) as exc:
        psor_solve(p, SolverConfig(max_iters=3, check_every=1))
    u, kkt, its = exc.value.result
    assert its == 3 and (u.values >= 0).all()


def test_non_finite_warm_start_rejected(flat_field):
    p = assemble(flat_field, 1.0)
    vals = np.zeros(p.grid.shape)
    vals[0] = p.bottom_value
    vals[p.grid.n_rows // 2, 0] = np.inf
    with pytest.raises(NonFiniteValue):
        psor_solve(p, warm_start=ScalarField(p.grid, vals))


def test_warm_start_must_match(flat_field):
    p = assemble(flat_field, 1.0)
    with pytest.raises(ValueError):
        psor_solve(p, warm_start=ScalarField(p.grid, np.zeros(p.grid.shape)))
    other = GridSpec(1, 0.5, 1.5, 1.5, 1 / 8)
    with pytest.raises(GridMismatch):
        psor_solve(p, warm_start=ScalarField(other, np.zeros(other.shape)))


def test_numba_and_numpy_agree_bitwise():
    a = bundled_field("wedge135", dx=1 / 16)
    p = assemble(a, 0.5)
    u1, _, i1 = psor_solve(p, backend="numba")
    u2, _, i2 = psor_solve(p, backend="numpy")
    assert i1 == i2
    assert np.array_equal(u1.values, u2.values)


def test_numba_and_numpy_agree_bitwise_3d():
    a = bundled_field("flat3d", dx=1 / 8)
    p = assemble(a, 0.5)
    u1, _, _ = psor_solve(p, backend="numba")
    u2, _, _ = psor_solve(p, backend="numpy")
    assert np.array_equal(u1.values, u2.values)


def test_deterministic(flat_field):
    p = assemble(flat_field, 0.75)
    assert np.array_equal(psor_solve(p)[0].values, psor_solve(p)[0].values)


def test_warm_starts_agree():
    a = bundled_field("cosine", dx=2 * math.pi / 100)
    p = assemble(a, 0.5)
    tol = 2 * 1e-8 * p.scale
    cold, _, _ = psor_solve(p)
    upper = with_dirichlet_rows(ScalarField(p.grid, sampled_v0(p.grid, 0.5, -a.C)), p)
    prev, _, _ = psor_solve(assemble(a, 0.25))
    for start in (upper, with_dirichlet_rows(prev, p)):
        u, _, _ = psor_solve(p, warm_start=start)
        assert np.abs(u.values - cold.values).max() <= tol


def test_oracle_one_unknown():
    p = column_problem([1, 1, 1], 1.0, 1)
    u = oracle_active_set(p)
    # one interior node: 2u - b = -h^2 when positive
    b, h = p.bottom_value, p.grid.dx
    assert u.values[1, 0] == pytest.approx(max(0.0, (b - h * h) / 2))


def test_oracle_zero_time():
    p = column_problem([1] * 8, 0.0, 3)
    assert not oracle_active_set(p).values.any()


def test_oracle_too_large():
    with pytest.raises(TooLarge):
        oracle_active_set(column_problem([1] * 23, 1.0, 4))


def test_oracle_flat_column_matches_psor():
    chi = [0] * 6 + [1] * 8
    p = column_problem(chi, 0.6, 6)
    u_o = oracle_active_set(p)
    u_p, _, _ = psor_solve(p, TIGHT)
    assert np.abs(u_o.values - u_p.values).max() <= 1e-10 * p.scale
    assert (u_o.values[1:-1] == 0).any() and (u_o.values[1:-1] > 0).any()


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_oracle_equivalence_random_columns(data):
    n = data.draw(st.integers(1, 12))
    chi = data.draw(st.lists(st.booleans(), min_size=n + 2, max_size=n + 2))
    k = data.draw(st.integers(1, n))
    t = data.draw(st.floats(0.0, 2.0))
    p = column_problem(chi, t, k)
    u_o = oracle_active_set(p)
    u_p, _, _ = psor_solve(p, TIGHT)
    assert np.abs(u_o.values - u_p.values).max() <= 1e-8 * p.scale


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), t=st.floats(0.05, 1.5))
def test_oracle_equivalence_periodic_pairs(seed, t):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, 0.25, 0.75, 0.75, 0.25)  # 2 columns, 5 interior rows
    p = ObstacleProblem(g, rng.random(g.shape) < 0.5, t)
    u_o = oracle_active_set(p)
    u_p, _, _ = psor_solve(p, TIGHT)
    assert np.abs(u_o.values - u_p.values).max() <= 1e-8 * p.scale


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_comparison_principle(seed):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, 0.5, 1.5, 1.5, 1 / 16)
    base = rasterize_scenario(scenario(FLAT), g)
    extra = base.cells | (rng.random(g.shape) < 0.3) & (np.broadcast_to(g.mesh()[0], g.shape) > -0.5)
    p1 = ObstacleProblem(g, base.cells, 0.7)
    p2 = ObstacleProblem(g, extra, 0.7)
    u1, _, _ = psor_solve(p1)
    u2, _, _ = psor_solve(p2)
    assert (u1.values >= u2.values - 2 * 1e-8 * p1.scale).all()


def test_monotone_in_time(flat_field):
    prev = None
    for t in (0.25, 0.5, 1.0):
        p = assemble(flat_field, t)
        u, _, _ = psor_solve(p)
        if prev is not None:
            assert (u.values >= prev - 2 * 1e-8 * p.scale).all()
        prev = u.values


@pytest.mark.parametrize("name", ["flat", "wedge60", "bubble"])
def test_sandwich(name):
    a = bundled_field(name, dx=1 / 32)
    for t in (0.25, 1.0):
        p = assemble(a, t)
        u, _, _ = psor_solve(p)
        tol = 2 * 1e-8 * p.scale
        assert (sampled_v0(a.grid, t, a.C) - tol <= u.values).all()
        assert (u.values <= sampled_v0(a.grid, t, -a.C) + tol).all()


def test_scalar_field_rejects_negative_and_is_read_only(small_grid):
    with pytest.raises(ValueError):
        ScalarField(small_grid, -np.ones(small_grid.shape))
    f = ScalarField(small_grid, np.zeros(small_grid.shape))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
