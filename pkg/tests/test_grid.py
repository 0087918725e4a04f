from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isolab.geometry import arc_measure, chord_overlap, disk_rect_area, sphere_patch_area
from isolab.grid import (
    BAND,
    EXTERIOR,
    INTERIOR,
    ScalarField,
    boundary_integrate,
    gradient,
    hessian,
    integrate,
    make_ball_grid,
    parse_resolution,
    rotate_function,
    unit_ball_volume,
)


def test_unit_ball_volume_closed_forms():
    assert unit_ball_volume(1) == 2.0
    assert unit_ball_volume(2) == pytest.approx(math.pi, rel=1e-15)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3, rel=1e-15)
    assert unit_ball_volume(4) == pytest.approx(math.pi**2 / 2, rel=1e-15)
    for bad in (0, 5):
        with pytest.raises(ValueError):
            unit_ball_volume(bad)


@pytest.mark.parametrize("n,h", [(1, 1 / 32), (4, 1 / 8), (2, 1 / 4), (2, 1 / 512)])
def test_grid_rejects_unsupported(n, h):
    with pytest.raises(ValueError):
        make_ball_grid(n, h)


def test_parse_resolution():
    assert parse_resolution("1/64") == 1 / 64
    assert parse_resolution(0.125) == 0.125


def test_disk_grid_volume_and_boundary(grid2_64):
    g = grid2_64
    vol = g.weights.sum()
    assert abs(vol - math.pi) / math.pi <= 0.02
    # cut cells are clipped exactly
    assert abs(vol - math.pi) <= 1e-12
    w = g.bq_weights
    assert np.all(w > 0)
    assert abs(w.sum() - 2 * math.pi) / (2 * math.pi) <= 10 * g.h**2


def test_ball_grid_volume_and_boundary():
    g = make_ball_grid(3, 1 / 32)
    vol = g.weights.sum()
    assert abs(vol - 4 * math.pi / 3) / (4 * math.pi / 3) <= 0.03
    assert abs(vol - 4 * math.pi / 3) <= 1e-9
    assert abs(g.bq_weights.sum() - 4 * math.pi) / (4 * math.pi) <= 10 * g.h**2


def test_node_classes(grid2_64):
    g = grid2_64
    r = g.radius()
    assert np.all(1.0 - r[g.node_class == INTERIOR] > g.h)
    assert np.all(r[g.node_class == EXTERIOR] > 1.0 - g.h * math.sqrt(2) / 2)
    # every exterior node's cell misses the ball, so the node is outside it
    assert np.all(r[g.node_class == EXTERIOR] > 1.0)
    assert np.any(g.node_class == BAND)


def test_grid_is_deterministic():
    a, b = make_ball_grid(2, 1 / 16), make_ball_grid(2, 1 / 16)
    assert np.array_equal(a.fraction, b.fraction)
    assert np.array_equal(a.bq_points, b.bq_points)


def test_integrals_of_simple_functions(grid2_64):
    g = grid2_64
    one = ScalarField.from_function(g, lambda x: np.ones(len(x)))
    assert integrate(one) == pytest.approx(math.pi, rel=10 * g.h)
    assert boundary_integrate(one) == pytest.approx(2 * math.pi, rel=10 * g.h)
    para = ScalarField.from_function(g, lambda x: 1 - np.sum(x * x, axis=1))
    assert integrate(para) == pytest.approx(math.pi / 2, rel=10 * g.h)
    inner = ScalarField.from_function(g, lambda x: np.maximum(0.0, 0.25 - np.sum(x * x, axis=1)))
    assert boundary_integrate(inner) == 0.0


def test_gradient_examples(grid2_64):
    g = grid2_64
    lin = gradient(ScalarField.from_function(g, lambda x: x[:, 0]))
    assert np.allclose(lin.values[g.valid], [1.0, 0.0], atol=1e-12)
    quad = gradient(ScalarField.from_function(g, lambda x: 0.5 * np.sum(x * x, axis=1)))
    err = np.abs(quad.values - g.coords())[g.valid]
    assert err.max() <= g.h**2
    const = gradient(ScalarField.from_function(g, lambda x: np.ones(len(x))))
    assert np.abs(const.values[g.valid]).max() == 0.0


def test_hessian_of_quadratic_is_identity_inside(grid2_64):
    g = grid2_64
    u = np.where(g.valid, 0.5 * np.sum(g.coords() ** 2, axis=-1), np.nan)
    H = hessian(u, g)
    assert np.allclose(H[g.interior], np.eye(2), atol=1e-9)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_gradient_exact_on_affine_functions(a, b, c):
    g = make_ball_grid(2, 1 / 16)
    f = ScalarField.from_function(g, lambda x: a * x[:, 0] + b * x[:, 1] + c)
    v = gradient(f).values[g.valid]
    assert np.allclose(v, [a, b], atol=1e-9 * (1 + abs(a) + abs(b) + abs(c)) / g.h)


@given(st.floats(0.0, 2 * math.pi))
def test_integral_of_radial_function_is_rotation_invariant(theta):
    g = make_ball_grid(2, 1 / 32)
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    func = lambda x: np.exp(-np.sum(x * x, axis=1))  # noqa: E731
    f0 = ScalarField.from_function(g, func)
    f1 = ScalarField.from_function(g, rotate_function(func, R))
    assert integrate(f1) == pytest.approx(integrate(f0), rel=1e-12)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.01, 1.0))
def test_integrate_is_linear(a, b, c):
    g = make_ball_grid(2, 1 / 16)
    f = ScalarField.from_function(g, lambda x: 1 + x[:, 0] ** 2)
    k = ScalarField.from_function(g, lambda x: 2 + np.sin(x[:, 1]))
    comb = ScalarField(g, a * f.values + b * k.values)
    assert integrate(comb) == pytest.approx(a * integrate(f) + b * integrate(k), abs=1e-12)


# --- exact clipping ---------------------------------------------------------


def test_chord_overlap():
    assert chord_overlap(-2.0, 2.0, 0.5) == pytest.approx(1.0)
    assert chord_overlap(0.0, 2.0, 0.5) == pytest.approx(0.5)
    assert chord_overlap(0.0, 1.0, -1.0) == 0.0


def test_arc_and_area_of_enclosing_box():
    assert arc_measure(0.7, -1, 1, -1, 1) == pytest.approx(2 * math.pi)
    assert disk_rect_area(0.7, -1, 1, -1, 1) == pytest.approx(math.pi * 0.49)
    assert disk_rect_area(1.0, 0, 2, -2, 2) == pytest.approx(math.pi / 2)
    assert disk_rect_area(1.0, 0, 2, 0, 2) == pytest.approx(math.pi / 4)


@given(st.floats(-1.2, 1.2), st.floats(0.01, 0.6), st.floats(-1.2, 1.2), st.floats(0.01, 0.6),
       st.floats(0.0, 1.0))
def test_disk_rect_area_is_additive(x0, w, y0, hgt, cut):
    xm = x0 + cut * w
    whole = disk_rect_area(1.0, x0, x0 + w, y0, y0 + hgt)
    parts = disk_rect_area(1.0, x0, xm, y0, y0 + hgt) + disk_rect_area(1.0, xm, x0 + w, y0, y0 + hgt)
    assert whole == pytest.approx(parts, abs=1e-12)
    assert 0.0 <= whole <= w * hgt + 1e-15


def test_sphere_patch_area_octant_and_full():
    assert sphere_patch_area(0, 2, 0, 2, 0, 2)[0] == pytest.approx(math.pi / 2, rel=1e-10)
    assert sphere_patch_area(-2, 2, -2, 2, -2, 2)[0] == pytest.approx(4 * math.pi, rel=1e-10)
    # spherical cap z >= 1/2 has area 2π(1 - 1/2)
    assert sphere_patch_area(-2, 2, -2, 2, 0.5, 2)[0] == pytest.approx(math.pi, rel=1e-10)
