from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sint

from isolab.density import (
    DensityFamily,
    alpha_chain_check,
    chord_integral,
    compute_alpha,
    compute_c,
    convergence_summary,
    density_table,
    family,
    rho,
)
from isolab.surfaces import catenoid, disk, field_corpus, sphere_cap, surface_corpus


def c_closed_form(j):
    # ∫_0^a r²/√(1-r²) dr = (asin a - a√(1-a²))/2 and √j ∫_a^1 r² dr, a = √(1 - 1/j)
    a = math.sqrt(1 - 1 / j)
    return 4 * math.pi * ((math.asin(a) - a * math.sqrt(1 - a * a)) / 2 + math.sqrt(j) * (1 - a**3) / 3)


def chord_closed_form(z, j, c):
    b = math.sqrt(1 - z * z)
    if b * b <= 1 / j:
        return 2 * b * math.sqrt(j) / c
    yc = math.sqrt(b * b - 1 / j)
    return 2 * (math.asin(yc / b) + math.sqrt(j) * (b - yc)) / c


def test_c1_and_alpha1():
    assert compute_c(1) == pytest.approx(4 * math.pi / 3, abs=1e-8)
    fam = family(1)
    assert fam.alpha_j == pytest.approx(3 / (2 * math.pi), abs=1e-8)
    assert fam.alpha_argmax <= 1e-10


@pytest.mark.parametrize("j", [2, 3, 10, 57, 100, 1000, 10**5])
def test_c_matches_closed_form(j):
    assert compute_c(j) == pytest.approx(c_closed_form(j), rel=1e-12)


@pytest.mark.parametrize("j", [1, 10, 100, 1000])
def test_alpha_matches_dense_scan_of_closed_form(j):
    c = c_closed_form(j)
    zs = np.linspace(0, 1, 20001, endpoint=False)
    scan = max(chord_closed_form(z, j, c) for z in zs)
    alpha, z_star = compute_alpha(j)
    assert alpha >= scan - 1e-12
    assert alpha == pytest.approx(scan, rel=1e-8)
    assert alpha == pytest.approx(chord_closed_form(z_star, j, c), rel=1e-12)


@given(st.floats(0.0, 0.999), st.integers(1, 2000))
def test_chord_integral_matches_closed_form(z, j):
    c = compute_c(j)
    assert chord_integral(z, j, c) == pytest.approx(chord_closed_form(z, j, c), rel=1e-10)


def test_c_increasing_and_limit():
    cs = [compute_c(j) for j in range(1, 101)]
    assert np.all(np.diff(cs) > 0)
    assert compute_c(1000) > cs[-1]
    assert abs(compute_c(1000) - math.pi**2) / math.pi**2 <= 0.05
    assert compute_c(10**6) < math.pi**2


@pytest.mark.parametrize("j", [1, 2, 10, 100, 1000])
def test_alpha_below_pi_over_c(j):
    fam = family(j)
    assert fam.alpha_j <= math.pi / fam.c_j * (1 + 1e-12)


@pytest.mark.parametrize("j", [1, 7, 1000])
def test_density_is_normalized(j):
    fam = family(j)
    assert fam.normalization() == pytest.approx(1.0, abs=1e-12)
    # spherical shells of rho_j(r²) against an independent quad
    shell = sint.quad(lambda r: 4 * math.pi * r * r * float(fam.rho(r * r)), 0, 1,
                      points=[math.sqrt(1 - 1 / j)], limit=200)[0]
    assert shell == pytest.approx(1.0, rel=1e-9)


def test_rho_values():
    fam = family(4)
    assert fam.rho(0.0) == pytest.approx(1 / fam.c_j)
    assert fam.rho(1.0) == pytest.approx(2 / fam.c_j)
    assert fam.rho(0.9) == pytest.approx(2 / fam.c_j)
    with pytest.raises(ValueError):
        rho(-0.1, 4, fam)


@pytest.mark.parametrize("bad", [0, -3, 2.5, True])
def test_rejects_bad_j(bad):
    with pytest.raises(ValueError):
        compute_c(bad)
    with pytest.raises(ValueError):
        DensityFamily(bad)


def test_only_two_dimensional_surfaces():
    with pytest.raises(ValueError):
        compute_c(4, n=3)


def test_alpha_is_reproducible():
    assert compute_alpha(37) == compute_alpha(37)


def test_table_and_convergence():
    rows = density_table([1, 10, 100, 1000])
    assert [r["j"] for r in rows] == [1, 10, 100, 1000]
    summary = convergence_summary(rows)
    assert summary["c_limit"] == pytest.approx(math.pi**2)
    assert summary["last_c_relative_gap"] <= 0.05
    assert summary["observed_slope"] < 0


@pytest.mark.parametrize("surf", surface_corpus(), ids=lambda s: s.name)
def test_alpha_chain_on_corpus(surf):
    for f in field_corpus(surf):
        cert = alpha_chain_check(surf, f)
        assert cert.passed, cert.summary()


def test_alpha_chain_short_list_skips_limit():
    surf = disk()
    cert = alpha_chain_check(surf, field_corpus(surf)[0], js=(1, 10))
    names = [s.name for s in cert.stages]
    assert "sharp_constant_limit" not in names
    assert len(names) == 4


def test_alpha_chain_values_on_catenoid():
    surf = catenoid(1.0)
    cert = alpha_chain_check(surf, field_corpus(surf)[0])
    st1 = cert.stage("alpha_chain_j1").values
    assert st1["constant"] == pytest.approx(2 * math.sqrt(2 * math.pi / 3), rel=1e-12)
    assert cert.stage("sharp_constant_limit").values["relative_gap"] <= 0.01
    sphere = sphere_cap(1.0, math.pi)
    assert alpha_chain_check(sphere, field_corpus(sphere)[0]).passed
