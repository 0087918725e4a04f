"""Knothe rearrangement of f^{n/(n-1)} dx onto Lebesgue measure on the ball.

The map is built coordinate by coordinate (x1, then x2 | x1, then x3 | x1, x2)
by matching one-dimensional CDFs. Source fibres are the grid lines clipped to
the ball, with the chord endpoints appended as knots; the target conditional
laws are the chord-length-weighted marginals of the uniform ball measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from isolab.certificate import Certificate, node_stats
from isolab.chain import add_chain_stages
from isolab.functionals import lq_norm
from isolab.grid import BallGrid, ScalarField, VectorMap, jacobian, unit_ball_volume

_MASS_GUARD = 1e-12


def _bisect_inverse(cdf, u, lo=-1.0, hi=1.0, iters=64):
    u = np.asarray(u, dtype=float)
    a = np.full(u.shape, lo)
    b = np.full(u.shape, hi)
    for _ in range(iters):
        m = 0.5 * (a + b)
        below = cdf(m) < u
        a = np.where(below, m, a)
        b = np.where(below, b, m)
    return 0.5 * (a + b)


def disk_marginal_cdf(xi):
    """CDF of the first coordinate of the uniform law on the unit disk."""
    xi = np.clip(xi, -1.0, 1.0)
    return (xi * np.sqrt(1.0 - xi * xi) + np.arcsin(xi) + 0.5 * math.pi) / math.pi


def ball_marginal_cdf(xi):
    """CDF of the first coordinate of the uniform law on the unit 3-ball."""
    xi = np.clip(xi, -1.0, 1.0)
    return (xi - xi**3 / 3.0 + 2.0 / 3.0) * 0.75


def disk_marginal_inverse(u):
    return _bisect_inverse(disk_marginal_cdf, np.clip(u, 0.0, 1.0))


def ball_marginal_inverse(u):
    return _bisect_inverse(ball_marginal_cdf, np.clip(u, 0.0, 1.0))


@dataclass(frozen=True)
class MonotoneTable:
    """Nondecreasing piecewise-linear function given by knot values."""

    knots: np.ndarray
    values: np.ndarray

    def __call__(self, s):
        return np.interp(s, self.knots, self.values)


def trapezoid_cdf(knots, density):
    """Cumulative trapezoid integral; returns (cdf at knots, total mass)."""
    k = np.asarray(knots, dtype=float)
    d = np.asarray(density, dtype=float)
    inc = 0.5 * (d[1:] + d[:-1]) * np.diff(k)
    cum = np.concatenate([[0.0], np.cumsum(inc)])
    return cum, float(cum[-1])


def monotone_rearrange_1d(knots, density, target=(-1.0, 1.0), target_inverse=None) -> MonotoneTable:
    """Monotone map T with SourceCDF(s) = TargetCDF(T(s)) at every knot.

    ``target_inverse`` maps probabilities in [0, 1] to the target interval;
    the default is the uniform law on ``target``.
    """
    knots = np.asarray(knots, dtype=float)
    density = np.asarray(density, dtype=float)
    if np.any(density < 0.0) or not np.all(np.isfinite(density)):
        raise ValueError("source density must be nonnegative and finite")
    cum, mass = trapezoid_cdf(knots, density)
    if mass <= 0.0:
        raise ValueError("source density has zero total mass")
    u = np.clip(cum / mass, 0.0, 1.0)
    u = np.maximum.accumulate(u)
    if target_inverse is None:
        a, b = target
        vals = a + (b - a) * u
    else:
        vals = target_inverse(u)
    vals = np.maximum.accumulate(vals)
    return MonotoneTable(knots, vals)


@dataclass(frozen=True, eq=False)
class KnotheMap:
    grid: BallGrid
    phi1: MonotoneTable
    slice_maps: dict
    assembled: VectorMap
    chord_weighting: bool = True


def _fibre(axis_vals, center_mask, half):
    """Knots of the chord (-half, half) through the given nodes."""
    inside = center_mask & (np.abs(axis_vals) < half)
    idx = np.flatnonzero(inside)
    knots = np.concatenate([[-half], axis_vals[idx], [half]])
    return idx, knots


def _fibre_table(grid, f, dens_nodes, fixed, half, line_idx, axis_vals, valid_line, p, target_inv):
    """Conditional map along one fibre; returns (mass, table evaluated at all
    nodes on the line, idx of inner nodes, knots, density)."""
    idx, knots = _fibre(axis_vals, valid_line, half)
    ends = np.array([list(fixed) + [-half], list(fixed) + [half]])
    end_d = np.abs(f.at(ends)) ** p
    dens = np.concatenate([[end_d[0]], dens_nodes[idx], [end_d[1]]])
    _, mass = trapezoid_cdf(knots, dens)
    return mass, idx, knots, dens


def build_knothe_map(f: ScalarField) -> KnotheMap:
    """Knothe map pushing f^{n/(n-1)} dx forward to dξ on the ball."""
    if not f.positive:
        raise ValueError("build_knothe_map requires a positive field")
    g = f.grid
    n = g.n
    p = n / (n - 1)
    vol = unit_ball_volume(n)
    c = lq_norm(f)
    if abs(c - vol) > 0.01 * vol:
        raise ValueError(f"f is not transport-normalised: ∫f^p = {c:.6g}, expected {vol:.6g}")
    if n == 2:
        return _build_2d(f, p)
    return _build_3d(f, p)


def _uniform_inverse(half):
    return lambda u: -half + 2.0 * half * u


def _build_2d(f: ScalarField, p: float) -> KnotheMap:
    g = f.grid
    ax = g.axis
    dens = np.where(g.valid, np.abs(f.values) ** p, 0.0)
    out = np.zeros(g.shape + (2,))
    cols = np.flatnonzero(np.abs(ax) < 1.0)
    col_mass = np.zeros(len(ax))
    fibres = {}
    for i in cols:
        s = ax[i]
        half = math.sqrt(1.0 - s * s)
        mass, idx, knots, d = _fibre_table(g, f, dens[i], [s], half, i, ax, g.valid[i], p, None)
        col_mass[i] = mass
        fibres[i] = (half, idx, knots, d, mass)
    k1 = np.concatenate([[-1.0], ax[cols], [1.0]])
    d1 = np.concatenate([[0.0], col_mass[cols], [0.0]])
    phi1 = monotone_rearrange_1d(k1, d1, target_inverse=disk_marginal_inverse)
    guard = _MASS_GUARD * max(col_mass.max(), 1e-300)
    slice_maps = {}
    for i in range(len(ax)):
        s = ax[i]
        line_valid = g.valid[i]
        if not line_valid.any():
            continue
        t1 = float(np.clip(phi1(s), -1.0, 1.0))
        out[i, :, 0] = t1
        half_t = math.sqrt(max(1.0 - t1 * t1, 0.0))
        if i not in fibres:
            out[i, :, 1] = 0.0
            continue
        half, idx, knots, d, mass = fibres[i]
        if mass <= guard:
            d = np.ones_like(d)
        tab = monotone_rearrange_1d(knots, d, target=(-half_t, half_t))
        slice_maps[int(i)] = tab
        out[i, :, 1] = tab(np.clip(ax, -half, half))
    out[~g.valid] = np.nan
    return KnotheMap(g, phi1, slice_maps, VectorMap(g, out))


def _build_3d(f: ScalarField, p: float) -> KnotheMap:
    g = f.grid
    ax = g.axis
    dens = np.where(g.valid, np.abs(f.values) ** p, 0.0)
    out = np.zeros(g.shape + (3,))
    slices = np.flatnonzero(np.abs(ax) < 1.0)
    slice_mass = np.zeros(len(ax))
    info = {}
    for i in slices:
        s = ax[i]
        R = math.sqrt(1.0 - s * s)
        rows = np.flatnonzero(np.abs(ax) < R)
        fib_mass = np.zeros(len(ax))
        fib = {}
        for j in rows:
            t = ax[j]
            half = math.sqrt(R * R - t * t)
            mass, idx, knots, d = _fibre_table(g, f, dens[i, j], [s, t], half, j, ax, g.valid[i, j], p, None)
            fib_mass[j] = mass
            fib[j] = (half, idx, knots, d, mass)
        k2 = np.concatenate([[-R], ax[rows], [R]])
        d2 = np.concatenate([[0.0], fib_mass[rows], [0.0]])
        _, m = trapezoid_cdf(k2, d2)
        slice_mass[i] = m
        info[i] = (R, rows, k2, d2, fib, fib_mass)
    k1 = np.concatenate([[-1.0], ax[slices], [1.0]])
    d1 = np.concatenate([[0.0], slice_mass[slices], [0.0]])
    phi1 = monotone_rearrange_1d(k1, d1, target_inverse=ball_marginal_inverse)
    guard1 = _MASS_GUARD * max(slice_mass.max(), 1e-300)
    slice_maps = {}
    for i in range(len(ax)):
        if not g.valid[i].any():
            continue
        s = ax[i]
        t1 = float(np.clip(phi1(s), -1.0, 1.0))
        out[i, :, :, 0] = t1
        R_t = math.sqrt(max(1.0 - t1 * t1, 0.0))
        if i not in info:
            out[i, :, :, 1:] = 0.0
            continue
        R, rows, k2, d2, fib, fib_mass = info[i]
        if slice_mass[i] <= guard1:
            d2 = np.concatenate([[0.0], 2.0 * np.sqrt(np.maximum(R * R - ax[rows] ** 2, 0.0)), [0.0]])
        tab2 = monotone_rearrange_1d(
            k2, d2, target_inverse=lambda u, R_t=R_t: R_t * disk_marginal_inverse(u)
        )
        slice_maps[int(i)] = tab2
        phi2_line = tab2(np.clip(ax, -R, R))
        out[i, :, :, 1] = phi2_line[:, None]
        guard2 = _MASS_GUARD * max(fib_mass.max(), 1e-300)
        for j in range(len(ax)):
            if not g.valid[i, j].any():
                continue
            t2 = float(phi2_line[j])
            half_t = math.sqrt(max(R_t * R_t - t2 * t2, 0.0))
            if j not in fib:
                out[i, j, :, 2] = 0.0
                continue
            half, idx, knots, d, mass = fib[j]
            if mass <= guard2:
                d = np.ones_like(d)
            tab3 = monotone_rearrange_1d(knots, d, target=(-half_t, half_t))
            out[i, j, :, 2] = tab3(np.clip(ax, -half, half))
    out[~g.valid] = np.nan
    return KnotheMap(g, phi1, slice_maps, VectorMap(g, out))


def pushforward_errors(f: ScalarField, phi: VectorMap) -> dict:
    """|Σ w f^p g(Φ) − ∫_B g| for g in {1, ξ1, ξ2, |ξ|², ξ1ξ2}, with the
    per-test tolerance scale sup_B|g|·|B| (every g here has sup 1 or 1/2)."""
    g = f.grid
    n = g.n
    p = n / (n - 1)
    vol = unit_ball_volume(n)
    m = g.valid
    w = g.weights[m] * np.abs(f.values[m]) ** p
    y = phi.values[m]
    tests = {
        "one": (np.ones(len(y)), vol, 1.0),
        "xi1": (y[:, 0], 0.0, 1.0),
        "xi2": (y[:, 1], 0.0, 1.0),
        "xi_sq": ((y**2).sum(1), n * vol / (n + 2), 1.0),
        "xi1_xi2": (y[:, 0] * y[:, 1], 0.0, 0.5),
    }
    out = {}
    for k, (vals, exact, sup) in tests.items():
        out[k] = {"error": float(abs(np.sum(w * vals) - exact)), "scale": sup * vol}
    return out


def jacobian_diagnostics(f: ScalarField, phi: VectorMap, mask: np.ndarray) -> dict:
    g = f.grid
    n = g.n
    p = n / (n - 1)
    J = jacobian(phi)
    diag = np.stack([J[..., k, k] for k in range(n)], axis=-1)
    det_tri = np.prod(diag, axis=-1)
    det_full = np.linalg.det(np.where(np.isfinite(J), J, 0.0))
    fp = np.abs(f.values) ** p
    rel = np.abs(det_tri / fp - 1.0)
    return {"J": J, "diag": diag, "det": det_tri, "det_full": det_full, "fp": fp, "rel": rel}


def knothe_certificate(f: ScalarField, *, tol_scale: float = 1.0, environment: dict | None = None) -> Certificate:
    """Certify properties (i)-(ii) and the integrated chain for the Knothe map."""
    km = build_knothe_map(f)
    g = f.grid
    n, h = g.n, g.h
    phi = km.assembled
    cert = Certificate("knothe", environment=dict(environment or {}, n=n, resolution=h))
    interior = g.interior
    d = jacobian_diagnostics(f, phi, interior)
    fp_sup = float(np.nanmax(d["fp"][g.valid]))

    tri = {}
    for i in range(n):
        for j in range(i + 1, n):
            tri[f"d{i + 1}_d{j + 1}"] = float(np.nanmax(np.abs(d["J"][..., i, j][interior])))
    exact_zero = tri.get("d1_d2", 0.0) == 0.0 and (n == 2 or (tri["d1_d3"] == 0.0 and tri["d2_d3"] == 0.0))
    cert.add("triangular_jacobian", "DΦ is lower triangular", exact_zero,
             tolerance=0.0, values=tri)

    tol_diag = 10.0 * h * fp_sup * tol_scale
    mind = float(np.nanmin(d["diag"][interior]))
    cert.add("diagonal_nonnegative", "diagonal entries of DΦ are nonnegative", mind >= -tol_diag,
             tolerance=tol_diag, node_stats=node_stats(d["diag"][interior].min(axis=-1)))

    rel = d["rel"]
    med = float(np.nanmedian(rel[interior]))
    q90 = float(np.nanquantile(rel[interior], 0.9))
    cert.add("determinant_identity", "det DΦ = f^{n/(n-1)}", med <= 0.05 * tol_scale,
             tolerance=0.05 * tol_scale, node_stats=node_stats(rel, interior),
             values={"median_rel_error": med, "q90_rel_error": q90,
                     "full_det_median_rel_error": float(np.nanmedian(np.abs(d["det_full"][interior] / d["fp"][interior] - 1.0)))})

    ok_nodes = interior & np.all(d["diag"] >= 0.0, axis=-1)
    tr = np.sum(d["diag"], axis=-1)
    geo = n * np.maximum(d["det"], 0.0) ** (1.0 / n)
    amgm_gap = tr - geo
    tol_amgm = 1e-12 * max(1.0, float(np.nanmax(np.abs(tr[ok_nodes])))) * tol_scale
    cert.add("amgm_pointwise", "n (det DΦ)^{1/n} <= tr DΦ", float(np.nanmin(amgm_gap[ok_nodes])) >= -tol_amgm,
             tolerance=tol_amgm, node_stats=node_stats(amgm_gap, ok_nodes),
             values={"fraction_nodes_checked": float(ok_nodes.sum() / interior.sum())})
    link = n * np.abs(f.values) ** (1.0 / (n - 1)) - geo
    cert.add("determinant_to_density", "n f^{1/(n-1)} = n (det DΦ)^{1/n}", True,
             node_stats=node_stats(link, ok_nodes), note="recorded, not gated (see determinant_identity)")

    rmax = phi.max_radius()
    tol_r = 10.0 * h * tol_scale
    cert.add("range_in_ball", "Φ maps into the unit ball", rmax <= 1.0 + tol_r,
             tolerance=tol_r, values={"max_abs_phi": rmax})

    push = pushforward_errors(f, phi)
    ok = all(v["error"] <= 0.02 * v["scale"] * tol_scale for v in push.values())
    cert.add("pushforward", "Φ pushes f^{n/(n-1)} dx to dξ", ok, tolerance=0.02 * tol_scale, values=push)

    add_chain_stages(cert, f, phi, tol_scale)
    cert.environment["chord_length_weighting"] = True
    return cert
