import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from heleshaw.errors import DimensionUnsupported
from heleshaw.reference import (
    ConeSpec,
    cone_exponent_2d,
    cone_harmonic_2d,
    critical_angle,
    linearized_graph_evolution,
    mode_amplitude,
    quadratic_harmonic,
    v0,
    wavenumbers,
)


def test_v0_values():
    assert v0(1, 0) == 0.5
    assert v0(1, 2) == 0.0
    assert v0(2, -3) == 8.0
    assert v0(0, -5) == 0.0


def test_v0_c1_at_junctions():
    t, h = 0.7, 1e-7
    for x in (0.0, t):
        left = (v0(t, x) - v0(t, x - h)) / h
        right = (v0(t, x + h) - v0(t, x)) / h
        assert abs(left - right) < 1e-5


def test_v0_discrete_equation_away_from_kinks():
    dx, t = 1 / 64, 1.0
    x = -2 + dx * np.arange(int(4 / dx) + 1)
    v = v0(t, x)
    lap = (v[2:] - 2 * v[1:-1] + v[:-2]) / dx ** 2
    xi = x[1:-1]
    far = (np.abs(xi) > 1.5 * dx) & (np.abs(xi - t) > 1.5 * dx)
    chi = ((xi > 0) & (xi < t)).astype(float)
    assert np.abs(lap - chi)[far].max() < 1e-9
    # the kink rows carry an O(1) defect
    assert np.abs(lap - chi).max() <= 1.0


@settings(max_examples=50, deadline=None)
@given(t=st.floats(0, 3), frac=st.floats(0, 1), x=st.floats(-5, 5))
def test_v0_additivity(t, frac, x):
    s = frac * t
    assert abs(v0(t, x) - v0(s, x) - v0(t - s, x - s)) <= 1e-12 * max(1.0, v0(t, x))


def test_v0_rejects_negative_time():
    with pytest.raises(ValueError):
        v0(-1, 0)


def test_cone_exponents():
    assert cone_exponent_2d(math.pi).lam == 1.0
    assert cone_exponent_2d(math.pi / 2).lam == 2.0
    assert cone_exponent_2d(2 * math.pi).lam == 0.5
    assert cone_exponent_2d(critical_angle(1)).lam == pytest.approx(2.0, abs=1e-15)
    alphas = np.linspace(0.1, 2 * math.pi, 50)
    lams = [cone_exponent_2d(a).lam for a in alphas]
    assert np.all(np.diff(lams) < 0)
    with pytest.raises(DimensionUnsupported):
        cone_exponent_2d(1.0, d=2)


def test_critical_angles():
    assert critical_angle(1) == pytest.approx(math.pi / 2)
    assert critical_angle(2) == pytest.approx(2 * math.atan(math.sqrt(2)))


def test_cone_harmonic_walls_and_half_plane():
    c = ConeSpec((0.0, 0.0), math.pi / 3)
    wall = np.array([math.sin(math.pi / 6), -math.cos(math.pi / 6)]) * 0.8
    assert cone_harmonic_2d(c, wall) == pytest.approx(0.0, abs=1e-14)
    assert cone_harmonic_2d(c, np.array([0.0, 1.0])) == 0.0
    assert cone_harmonic_2d(c, np.array([0.0, -0.5])) > 0
    half = ConeSpec((0.0, 0.0), math.pi)
    for x1 in (-0.7, 0.3, 1.9):
        # half-plane below the apex: distance to the wall x_N = 0
        assert cone_harmonic_2d(half, np.array([x1, -0.4])) == pytest.approx(0.4)


def test_cone_harmonic_wall_gradient_normalization():
    alpha = 2 * math.pi / 3
    c = ConeSpec((0.0, 0.0), alpha)
    lam = math.pi / alpha
    r, h = 0.6, 1e-6
    wall_dir = np.array([math.sin(alpha / 2), -math.cos(alpha / 2)])
    normal_in = np.array([-math.cos(alpha / 2), -math.sin(alpha / 2)])
    grad = cone_harmonic_2d(c, r * wall_dir + h * normal_in) / h
    assert grad == pytest.approx(r ** (lam - 1), rel=1e-4)


@pytest.mark.parametrize("factor", [2.0, 1 / 3])
def test_cone_harmonic_homogeneity(factor):
    c = ConeSpec((0.0, 0.0), 1.2)
    lam = math.pi / 1.2
    pts = np.array([[0.05, -0.4], [-0.1, -0.7], [0.0, -1.3]])
    assert np.allclose(cone_harmonic_2d(c, factor * pts), factor ** lam * cone_harmonic_2d(c, pts),
                       rtol=1e-12, atol=0)


def test_cone_harmonic_discrete_laplacian():
    c = ConeSpec((0.0, 0.0), math.pi / 2)
    p = np.array([0.0, -1.0])
    errs = []
    for h in (1e-2, 5e-3):
        pts = np.array([p, p + [h, 0], p - [h, 0], p + [0, h], p - [0, h]])
        u = cone_harmonic_2d(c, pts)
        errs.append(abs(u[1:].sum() - 4 * u[0]) / h ** 2)
    assert errs[-1] <= 1e-6 or errs[-1] < errs[0] / 3


def test_quadratic_harmonic():
    assert quadratic_harmonic(np.array([0.0, -1.0]), 1) == 1.0
    assert quadratic_harmonic(np.array([1.0, 1.0, -1.0]), 2) == 0.0
    # zero on the critical cone wall |x'| = sqrt(d) |x_N|
    assert quadratic_harmonic(np.array([math.sqrt(2) * 0.3, 0.0, -0.3]), 2) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("d", [1, 2])
def test_quadratic_harmonic_discrete_laplacian_vanishes(d):
    rng = np.random.default_rng(d)
    h = 0.1
    for _ in range(5):
        p = rng.normal(size=d + 1)
        lap = -2 * (d + 1) * quadratic_harmonic(p, d)
        for k in range(d + 1):
            e = np.zeros(d + 1)
            e[k] = h
            lap += quadratic_harmonic(p + e, d) + quadratic_harmonic(p - e, d)
        assert abs(lap) / h ** 2 < 1e-9


def test_wavenumbers_physical():
    k = wavenumbers(8, math.pi)
    assert k[1] == pytest.approx(1.0)
    assert k[0] == 0.0


def test_linearized_cosine_decay():
    n = 128
    x = -math.pi + 2 * math.pi / n * np.arange(n)
    h = linearized_graph_evolution(0.01 * np.cos(x), 0.5)
    assert np.allclose(h, 0.01 * math.exp(-0.5) * np.cos(x), atol=1e-15)
    assert mode_amplitude(h, math.pi) == pytest.approx(0.01 * math.exp(-0.5))


def test_linearized_constants_and_zero():
    assert np.allclose(linearized_graph_evolution(np.zeros(16), 1.0), 0)
    assert np.allclose(linearized_graph_evolution(np.full(16, 0.3), 2.0), 0.3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(0, 2))
def test_linearized_mean_and_contraction(seed, t):
    rng = np.random.default_rng(seed)
    h0 = rng.normal(size=(16, 16)) * 0.01
    h = linearized_graph_evolution(h0, t)
    assert h.mean() == pytest.approx(h0.mean(), abs=1e-15)
    for p in (1, 2):
        assert np.sum(np.abs(h) ** p) <= np.sum(np.abs(h0) ** p) * (1 + 1e-12)
    assert np.abs(h).max() <= np.abs(h0).max() * (1 + 1e-12)


def _dtn_finite_difference(k, R=math.pi, depth=6.0, n=64, m=768):
    """Normal derivative at the top of the harmonic extension of cos(k x) into a deep strip."""
    dx = 2 * R / n
    dy = depth / m
    x = -R + dx * np.arange(n)
    # unknowns phi[j, i] at y = -dy*(j+1), j = 0..m-1; top Dirichlet cos(kx), bottom Neumann
    ix = sp.diags([1, -2, 1], [-1, 0, 1], shape=(n, n), format="lil")
    ix[0, -1] = ix[-1, 0] = 1
    iy = sp.diags([1, -2, 1], [-1, 0, 1], shape=(m, m), format="lil")
    iy[-1, -2] = 2
    A = sp.kron(sp.eye(m), ix.tocsr()) / dx ** 2 + sp.kron(iy.tocsr(), sp.eye(n)) / dy ** 2
    top = np.cos(k * x)
    b = np.zeros(m * n)
    b[:n] = -top / dy ** 2
    phi = spla.spsolve(A.tocsc(), b).reshape(m, n)
    # second-order one-sided derivative at y = 0
    dphi = (3 * top - 4 * phi[0] + phi[1]) / (2 * dy)
    return float(dphi @ top / (top @ top))


@pytest.mark.parametrize("k", [1, 2])
def test_dtn_of_flat_interface_is_abs_k(k):
    # the linearized evolution decays mode k at rate |k|: compare against a direct Laplace solve
    rate = _dtn_finite_difference(k)
    assert rate == pytest.approx(abs(k) * math.tanh(k * 6.0), rel=2e-2)
    assert rate == pytest.approx(abs(k), rel=2e-2)
