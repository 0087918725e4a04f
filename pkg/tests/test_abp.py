from __future__ import annotations

import numpy as np
import pytest

from isolab import corpus
from isolab.abp import (
    abp_certificate,
    assemble_neumann,
    contact_set,
    image_measure,
    rasterize_simplices,
    richardson_order,
    solve_neumann,
)
from isolab.grid import ScalarField, make_ball_grid


def solve(g, func):
    f = ScalarField.from_function(g, func, positive=True)
    return solve_neumann(assemble_neumann(f))


@pytest.mark.parametrize("n,h", [(2, 1 / 64), (3, 1 / 16)])
def test_constant_density_gives_half_square_norm(n, h):
    # f = 1: Δu = n with ∂u/∂ν = 1, so u = |x|²/2 once u(0) = 0
    g = make_ball_grid(n, h)
    sol = solve(g, corpus.const1)
    exact = 0.5 * np.sum(g.coords() ** 2, axis=-1)
    assert np.abs(sol.u.values - exact)[g.valid].max() <= 1e-8
    assert sol.u.values[g.origin_index()] == 0.0
    assert sol.residual <= 1e-8
    assert sol.problem.compatibility_residual <= 1e-12


def test_compatibility_within_tolerance(grid2_64):
    for name in corpus.BUILTIN:
        prob = assemble_neumann(ScalarField.from_function(grid2_64, corpus.get(name), positive=True))
        assert prob.compatibility_residual <= 10 * grid2_64.h
        assert abs(prob.load.sum()) <= 1e-10 * np.abs(prob.load).sum()


def test_contact_set_of_constant_is_whole_ball(grid2_64):
    g = grid2_64
    sol = solve(g, corpus.const1)
    mask, measure, _ = contact_set(sol)
    inside = g.valid & (g.radius() < 1.0)
    assert np.array_equal(mask, inside)
    assert measure == pytest.approx(np.sum(g.weights[inside]))


def test_gradient_image_of_constant_covers_ball(grid2_64):
    sol = solve(grid2_64, corpus.const1)
    mask, _, _ = contact_set(sol)
    img = image_measure(sol, mask)
    assert img["coverage"] >= 0.98
    assert img["image_measure"] == pytest.approx(np.pi, rel=0.02)


def test_delta_range(grid2_32):
    sol = solve(grid2_32, corpus.bump1)
    with pytest.raises(ValueError):
        contact_set(sol, 0.2)
    with pytest.raises(ValueError):
        contact_set(sol, -0.01)
    loose, _, _ = contact_set(sol, 0.0)
    tight, _, _ = contact_set(sol, 0.1)
    assert np.all(loose >= tight)


def test_coverage_nonincreasing_in_delta(grid2_64):
    sol = solve(grid2_64, corpus.bump1)
    cov = []
    for d in (0.0, 0.02, 0.05, 0.1):
        mask, _, _ = contact_set(sol, d)
        cov.append(image_measure(sol, mask)["coverage"])
    assert all(a >= b for a, b in zip(cov, cov[1:]))


def test_constant_density_chain_is_equality(grid2_64):
    g = grid2_64
    sol = solve(g, corpus.const1)
    H = sol.hessian()[g.interior]
    assert np.allclose(H, np.eye(2), atol=1e-6)
    assert np.allclose(np.linalg.det(H), 1.0, atol=1e-6)


def test_rejects_nonpositive(grid2_32):
    with pytest.raises(ValueError):
        assemble_neumann(ScalarField.from_function(grid2_32, lambda x: x[:, 0]))


def test_rasterize_triangle_area():
    tri = np.array([[[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]]])
    s = 1 / 256
    hit = rasterize_simplices(tri, s, 1.0)
    area = hit.sum() * s * s
    perimeter = 1.0 + 0.5 * np.sqrt(2)
    assert abs(area - 0.125) <= perimeter * s
    # degenerate simplices are skipped
    flat = np.array([[[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]])
    assert not rasterize_simplices(flat, s, 1.0).any()


def test_rasterize_tetrahedron_volume():
    tet = np.array([[[0.0, 0, 0], [0.6, 0, 0], [0, 0.6, 0], [0, 0, 0.6]]])
    s = 1 / 64
    vol = rasterize_simplices(tet, s, 1.0).sum() * s**3
    assert vol == pytest.approx(0.6**3 / 6, rel=0.1)


def test_richardson_order_is_second():
    assert richardson_order(corpus.bump1, 2, 1 / 64)["order"] >= 1.8


@pytest.fixture(scope="module")
def grid2_128():
    return make_ball_grid(2, 1 / 128)


@pytest.mark.parametrize("name", list(corpus.BUILTIN))
def test_certificate_passes_on_corpus(grid2_128, name):
    cert = abp_certificate(ScalarField.from_function(grid2_128, corpus.get(name), positive=True))
    assert cert.passed, cert.summary()
    assert cert.stage("coverage").values["coverage"] >= 0.98


def test_certificate_is_deterministic(grid2_32):
    f = ScalarField.from_function(grid2_32, corpus.bump1, positive=True)
    assert abp_certificate(f).to_json() == abp_certificate(f).to_json()
