from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sint

from isolab.functionals import (
    FAIL,
    PASS,
    PASS_NOTE,
    Functionals,
    abp_normalization_residual,
    box_distance,
    disk_distance,
    isoperimetric_deficit,
    lq_norm,
    mesh_measures,
    mollified_indicator,
    normalize_for_abp,
    normalize_for_transport,
    polygon_measures,
    positive_lift,
    regular_polygon,
    smoothstep_cutoff,
    sobolev_constant,
    sobolev_deficit,
    sobolev_deficit_rn,
    unit_cube,
    unit_square,
)
from isolab.grid import ScalarField, make_ball_grid, unit_ball_volume


def field(g, func):
    return ScalarField.from_function(g, func)


def test_sobolev_constant():
    assert sobolev_constant(2) == pytest.approx(2 * math.sqrt(math.pi))
    assert sobolev_constant(3) == pytest.approx(3 * (4 * math.pi / 3) ** (1 / 3))


@pytest.mark.parametrize("n,h", [(2, 1 / 64), (3, 1 / 16)])
def test_constant_function_is_an_equality_case(n, h):
    g = make_ball_grid(n, h)
    fv = sobolev_deficit(field(g, lambda x: np.ones(len(x))))
    expected = n * unit_ball_volume(n)
    assert fv.lhs == pytest.approx(expected, rel=1e-12)
    assert fv.rhs == pytest.approx(expected, rel=1e-12)
    assert abs(fv.deficit) <= 1e-12 * fv.lhs


def test_bump_deficit_matches_polar_integrals(grid2_64):
    # f = 2 - |x|², n = 2: ∫|∇f| = 4π/3, ∫_∂B f = 2π, ∫ f² = 7π/3
    exact = 4 * math.pi / 3 + 2 * math.pi - 2 * math.sqrt(math.pi) * math.sqrt(7 * math.pi / 3)
    fv = sobolev_deficit(field(grid2_64, lambda x: 2 - np.sum(x * x, axis=1)))
    assert fv.deficit > 0
    assert fv.deficit == pytest.approx(exact, abs=10 * grid2_64.h * fv.lhs)
    assert fv.deficit == pytest.approx(exact, rel=1e-3)


def test_bump_deficit_in_three_dimensions():
    g = make_ball_grid(3, 1 / 32)
    i_p = 4 * math.pi * sint.quad(lambda r: (2 - r * r) ** 1.5 * r * r, 0, 1)[0]
    exact = 2 * math.pi + 4 * math.pi - sobolev_constant(3) * i_p ** (2 / 3)
    fv = sobolev_deficit(field(g, lambda x: 2 - np.sum(x * x, axis=1)))
    assert fv.deficit == pytest.approx(exact, abs=10 * g.h * fv.lhs)
    assert fv.deficit == pytest.approx(exact, rel=5e-3)


def test_sobolev_deficit_rejects_nonpositive(grid2_32):
    with pytest.raises(ValueError):
        sobolev_deficit(field(grid2_32, lambda x: x[:, 0]))


def test_status_classes():
    base = dict(grad_l1=1.0, boundary_l1=1.0, lq_norm=1.0, n=2, h=0.01)
    assert Functionals(deficit=0.1, **base).status() == PASS
    assert Functionals(deficit=-0.1, **base).status() == PASS_NOTE
    assert Functionals(deficit=-0.3, **base).status() == FAIL
    assert Functionals(deficit=-0.3, **base).status(tol_scale=2.0) == PASS_NOTE


# --- isoperimetric ---------------------------------------------------------------


def test_square_cube_and_fine_polygon():
    assert isoperimetric_deficit(unit_square()) == pytest.approx(4 - 2 * math.sqrt(math.pi), abs=1e-12)
    cube = isoperimetric_deficit(unit_cube())
    assert cube == pytest.approx(6 - 3 * (4 * math.pi / 3) ** (1 / 3), abs=1e-12)
    assert cube == pytest.approx(1.1640, abs=1e-4)
    d = isoperimetric_deficit(regular_polygon(4096))
    assert 0 <= d <= 1e-3


def test_polygon_measures_orientation_free():
    sq = unit_square()
    assert polygon_measures(sq) == polygon_measures(sq[::-1])


def test_self_intersecting_polygon_rejected():
    bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float)
    with pytest.raises(ValueError):
        polygon_measures(bowtie)


def test_open_mesh_rejected():
    v, f = unit_cube()
    with pytest.raises(ValueError):
        mesh_measures(v, f[:-1])


def test_mesh_measures_of_scaled_cube():
    v, f = unit_cube()
    vol, area = mesh_measures(2 * v, f)
    assert (vol, area) == pytest.approx((8.0, 24.0))


@given(st.integers(3, 200), st.floats(0.1, 10.0))
def test_regular_polygons_have_positive_deficit(m, r):
    d = isoperimetric_deficit(regular_polygon(m, r))
    per = 2 * m * r * math.sin(math.pi / m)
    assert d >= -1e-12 * per


@given(st.integers(3, 64), st.floats(0.1, 10.0))
def test_isoperimetric_deficit_scales_linearly(m, s):
    p = regular_polygon(m) * np.array([1.0, 0.5])
    assert isoperimetric_deficit(s * p) == pytest.approx(s * isoperimetric_deficit(p), rel=1e-9)


# --- normalisations ----------------------------------------------------------------


def test_normalize_for_transport_examples(grid2_32):
    g = grid2_32
    _, lam1 = normalize_for_transport(field(g, lambda x: np.ones(len(x))))
    assert lam1 == pytest.approx(1.0, abs=1e-12)
    _, lam2 = normalize_for_transport(field(g, lambda x: np.full(len(x), 2.0)))
    assert lam2 == pytest.approx(0.5, abs=1e-12)


@given(st.floats(0.2, 5.0), st.floats(-0.9, 0.9))
def test_normalize_for_transport_is_idempotent(c, a):
    g = make_ball_grid(2, 1 / 16)
    f = field(g, lambda x: c * (1.5 + a * x[:, 0]))
    fn, _ = normalize_for_transport(f)
    assert lq_norm(fn) == pytest.approx(math.pi, rel=1e-12)
    _, lam = normalize_for_transport(fn)
    assert lam == pytest.approx(1.0, rel=1e-12)


def test_normalize_for_abp_examples(grid2_32):
    g = grid2_32
    _, lam = normalize_for_abp(field(g, lambda x: np.ones(len(x))))
    assert lam == pytest.approx(1.0, abs=1e-12)
    _, lam3 = normalize_for_abp(field(g, lambda x: np.full(len(x), 3.0)))
    assert lam3 == pytest.approx(1 / 3, rel=1e-12)


@pytest.mark.parametrize("func", [
    lambda x: 2 - np.sum(x * x, axis=1),
    lambda x: np.exp(3 * x[:, 0]),
])
def test_normalize_for_abp_identity(grid2_64, func):
    fn, _ = normalize_for_abp(field(grid2_64, func))
    assert abp_normalization_residual(fn) <= 10 * grid2_64.h


def test_normalisation_rejects_nonpositive(grid2_32):
    bad = field(grid2_32, lambda x: x[:, 1])
    for fn in (normalize_for_transport, normalize_for_abp):
        with pytest.raises(ValueError):
            fn(bad)


# --- indicator approximation --------------------------------------------------------


def test_smoothstep_cutoff_shape():
    s = np.array([0.0, 1.0, 1.5, 2.0, 3.0])
    assert np.allclose(smoothstep_cutoff(s), [1.0, 1.0, 0.5, 0.0, 0.0])


def test_mollified_indicator_recovers_perimeter():
    # f_j = η(j dist) falls over dist in [1/j, 2/j] symmetrically, so ∫|∇f_j| = 2π(r0 + 1.5/j)
    g = make_ball_grid(2, 1 / 128)
    r0 = 0.4
    for j in (5, 10):
        f = field(g, mollified_indicator(disk_distance((0, 0), r0), j))
        fv = sobolev_deficit_rn(f)
        assert fv.grad_l1 == pytest.approx(2 * math.pi * (r0 + 1.5 / j), rel=10 * g.h)
        assert math.pi * (r0 + 1 / j) ** 2 <= fv.lq_norm <= math.pi * (r0 + 2 / j) ** 2
        assert fv.deficit >= -10 * g.h * fv.lhs


def test_box_distance_and_positive_lift():
    d = box_distance((0, 0), (0.2, 0.1))
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [0.5, 0.5]])
    assert np.allclose(d(pts), [0.0, 0.3, math.hypot(0.3, 0.4)])
    lift = positive_lift(lambda x: np.zeros(len(x)), 4)
    assert np.allclose(lift(pts), 0.25)
