"""Clamped inverse-square-root densities on the closed unit ball of R^3 and
their constants.

rho_j(s) = 1 / (c_j sqrt(max(1 - s, 1/j))), evaluated at s = |ξ|², with c_j
the normalizer and alpha_j the largest integral of rho_j along a vertical
chord of the ball. As j grows, c_j tends to π² and π/c_j to 1/π.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as sint

from isolab.certificate import Certificate
from isolab.surfaces import ParametricSurface, SurfaceField, michael_simon_terms

QUAD_OPTS = {"epsabs": 0.0, "epsrel": 1e-13, "limit": 200}
SCAN_POINTS = 512
GOLDEN_TOL = 1e-12
CHAIN_JS = (1, 10, 100, 1000)
N = 2
UNIT_DISK_AREA = math.pi


def _check_j(j) -> int:
    if isinstance(j, bool) or int(j) != j or j < 1:
        raise ValueError(f"j must be a positive integer, got {j!r}")
    return int(j)


def compute_c(j: int, n: int = N) -> float:
    """c_j = |∂B³| ∫_0^1 r² / sqrt(max(1 - r², 1/j)) dr, split at the clamp radius."""
    j = _check_j(j)
    if n != N:
        raise ValueError("only n = 2 (densities on the ball of R^3) is supported")
    rc = math.sqrt(1.0 - 1.0 / j)
    total = 0.0
    if rc > 0.0:
        total += sint.quad(lambda r: r * r / math.sqrt(1.0 - r * r), 0.0, rc, **QUAD_OPTS)[0]
    total += sint.quad(lambda r: r * r * math.sqrt(j), rc, 1.0, **QUAD_OPTS)[0]
    return 4.0 * math.pi * total


@dataclass
class DensityFamily:
    j: int
    n: int = N
    c_j: float = field(init=False)
    alpha_j: float = field(init=False)
    alpha_argmax: float = field(init=False)

    def __post_init__(self):
        self.j = _check_j(self.j)
        self.c_j = compute_c(self.j, self.n)
        self.alpha_j, self.alpha_argmax = compute_alpha(self.j, self)

    def rho(self, s):
        return rho(s, self.j, self)

    def normalization(self) -> float:
        """∫_{B³} rho_j(|ξ|²) dξ by an independent substitution r = sin θ on the
        unclamped piece."""
        j = self.j
        th = math.asin(math.sqrt(1.0 - 1.0 / j))
        inner = sint.quad(lambda t: math.sin(t) ** 2, 0.0, th, **QUAD_OPTS)[0]
        outer = math.sqrt(j) * (1.0 - math.sin(th) ** 3) / 3.0
        return 4.0 * math.pi * (inner + outer) / self.c_j


@lru_cache(maxsize=64)
def family(j: int) -> DensityFamily:
    return DensityFamily(j)


def rho(s, j: int, fam: DensityFamily):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("rho is defined for s >= 0")
    return 1.0 / (fam.c_j * np.sqrt(np.maximum(1.0 - s, 1.0 / j)))


def chord_integral(z: float, j: int, c_j: float) -> float:
    """∫ rho_j(z² + y²) dy over |y| <= sqrt(1 - z²)."""
    b2 = 1.0 - z * z
    if b2 <= 0.0:
        return 0.0
    b = math.sqrt(b2)
    inv_j = 1.0 / j
    sq = math.sqrt(j)
    if b2 <= inv_j:
        return 2.0 * b * sq / c_j
    yc = math.sqrt(b2 - inv_j)
    # unclamped on |y| < yc; the 1/sqrt(b² - y²) form is smooth there
    inner = sint.quad(lambda y: 1.0 / math.sqrt(b2 - y * y), 0.0, yc, **QUAD_OPTS)[0]
    return 2.0 * (inner + sq * (b - yc)) / c_j


def _golden_max(fun, a: float, b: float, tol: float = GOLDEN_TOL):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = fun(x1), fun(x2)
    while b - a > tol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = fun(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def compute_alpha(j: int, fam: DensityFamily | None = None) -> tuple[float, float]:
    """sup over z in [0, 1) of the chord integral: 512-point scan, then golden
    refinement around the best scan point. Returns (alpha_j, argmax)."""
    j = _check_j(j)
    c = fam.c_j if fam is not None else compute_c(j)
    zs = np.linspace(0.0, 1.0, SCAN_POINTS, endpoint=False)
    vals = np.array([chord_integral(z, j, c) for z in zs])
    k = int(np.argmax(vals))
    lo, hi = zs[max(k - 1, 0)], zs[min(k + 1, SCAN_POINTS - 1)]
    zr, vr = _golden_max(lambda z: chord_integral(z, j, c), float(lo), float(hi))
    # endpoints are candidates too; golden search never evaluates them
    best = max([(vals[k], float(zs[k])), (vr, zr), (chord_integral(float(lo), j, c), float(lo))])
    return float(best[0]), float(best[1])


def density_table(js) -> list[dict]:
    rows = []
    for j in js:
        fam = family(j)
        rows.append({"j": fam.j, "c_j": fam.c_j, "alpha_j": fam.alpha_j, "pi_over_c_j": math.pi / fam.c_j})
    return rows


def convergence_summary(rows: list[dict]) -> dict:
    """Distance of π/c_j from 1/π and the log-log slope of that distance in j."""
    js = np.array([r["j"] for r in rows], dtype=float)
    dist = np.array([r["pi_over_c_j"] - 1.0 / math.pi for r in rows])
    out = {"c_limit": math.pi * UNIT_DISK_AREA, "alpha_limit_bound": 1.0 / UNIT_DISK_AREA,
           "last_c_relative_gap": abs(rows[-1]["c_j"] - math.pi**2) / math.pi**2}
    pos = (dist > 0) & (js > 1)
    if pos.sum() >= 2:
        out["observed_slope"] = float(np.polyfit(np.log(js[pos]), np.log(dist[pos]), 1)[0])
    return out


def alpha_chain_check(surf: ParametricSurface, f: SurfaceField, js=CHAIN_JS, *,
                      environment: dict | None = None) -> Certificate:
    """n α^{-1/n} (∫_Σ f^{n/(n-1)})^{(n-1)/n} <= ∫_∂Σ f + ∫_Σ sqrt(|∇^Σ f|² + f²H²)."""
    terms = michael_simon_terms(surf, f)
    rhs = terms["lhs"]
    norm = math.sqrt(terms["int_f_sq"])
    sharp = 2.0 * math.sqrt(UNIT_DISK_AREA)
    cert = Certificate("alpha_chain", environment=dict(environment or {}, surface=surf.name, field=f.name,
                                                       j=list(js)))
    families = [family(j) for j in js]
    for fam in families:
        const = N * fam.alpha_j ** (-1.0 / N)
        lhs = const * norm
        tol = 1e-6 * rhs
        cert.add(f"alpha_chain_j{fam.j}",
                 "n α^{-1/n} (∫_Σ f^{n/(n-1)})^{(n-1)/n} <= ∫_∂Σ f + ∫_Σ sqrt(|∇^Σ f|² + f²H²)",
                 lhs <= rhs + tol, tolerance=tol,
                 values={"alpha_j": fam.alpha_j, "c_j": fam.c_j, "constant": const, "lhs": lhs, "rhs": rhs,
                         "slack": rhs - lhs, "alpha_at_least_sharp_threshold": fam.alpha_j >= 1.0 / UNIT_DISK_AREA})
        cert.add(f"alpha_bound_j{fam.j}", "α_j <= π / c_j", fam.alpha_j <= math.pi / fam.c_j * (1 + 1e-12),
                 tolerance=1e-12, values={"alpha_j": fam.alpha_j, "pi_over_c_j": math.pi / fam.c_j})
    last = max(families, key=lambda fm: fm.j)
    if last.j < 1000:
        return cert
    const_alpha = N * last.alpha_j ** (-1.0 / N)
    const_bound = N * (math.pi / last.c_j) ** (-1.0 / N)
    rel = abs(const_alpha - sharp) / sharp
    cert.add("sharp_constant_limit", "lim sup α_j <= 1/|B^n|", rel <= 0.01, tolerance=0.01,
             values={"j": last.j, "constant_from_alpha": const_alpha, "constant_from_bound": const_bound,
                     "sharp_constant": sharp, "relative_gap": rel,
                     "bound_relative_gap": abs(const_bound - sharp) / sharp})
    return cert
