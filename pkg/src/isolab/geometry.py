"""Exact clipping of axis-aligned lattice cells against the unit ball.

Every quantity here is closed form except the spherical patch area in 3D,
which reduces (by Archimedes' hat-box identity dS = dz dphi) to a 1D integral
of a piecewise-smooth angular measure and is evaluated with a
cosine-substituted Gauss-Legendre rule on each smooth piece.

Cut-cell volumes are *derived* from apertures and patch areas through the
divergence theorem applied to the position field,

    n |cell ∩ B| = sum_faces <x, n_face> |face ∩ B| + |cell ∩ ∂B|,

so that volumes, apertures and boundary measures are mutually consistent to
roundoff. The finite-volume Neumann solver relies on this.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def chord_overlap(lo, hi, rho):
    """Length of [lo, hi] ∩ [-rho, rho], vectorised; rho < 0 means empty."""
    rho = np.asarray(rho, dtype=float)
    r = np.where(rho > 0.0, rho, 0.0)
    return np.maximum(0.0, np.minimum(hi, r) - np.maximum(lo, -r)) * (rho > 0.0)


def _overlap(a1, b1, a2, b2):
    return np.maximum(0.0, np.minimum(b1, b2) - np.maximum(a1, a2))


def _quadrant_measure(a, b, rho):
    # measure of {phi in [0, 2pi): rho cos(phi) <= a and rho sin(phi) <= b}
    safe = np.where(rho > 0.0, rho, 1.0)
    alpha = np.clip(a / safe, -1.0, 1.0)
    beta = np.clip(b / safe, -1.0, 1.0)
    ac = np.arccos(alpha)
    asb = np.arcsin(beta)
    x_lo, x_hi = ac, TWO_PI - ac
    m = _overlap(x_lo, x_hi, np.pi - asb, np.minimum(TWO_PI, TWO_PI + asb))
    m = m + _overlap(x_lo, x_hi, 0.0, np.maximum(0.0, asb))
    return m


def arc_measure(rho, x0, x1, y0, y1):
    """Angular measure of the circle of radius ``rho`` inside [x0,x1]x[y0,y1]."""
    rho = np.asarray(rho, dtype=float)
    q = (
        _quadrant_measure(x1, y1, rho)
        - _quadrant_measure(x0, y1, rho)
        - _quadrant_measure(x1, y0, rho)
        + _quadrant_measure(x0, y0, rho)
    )
    return np.where(rho > 0.0, np.maximum(q, 0.0), 0.0)


def disk_rect_area(rho, x0, x1, y0, y1):
    """Area of the disk of radius ``rho`` (centred at 0) inside a rectangle."""
    rho = np.asarray(rho, dtype=float)
    r = np.where(rho > 0.0, rho, 0.0)
    hx = np.sqrt(np.maximum(r * r - x1 * x1, 0.0)) * (np.abs(x1) < r)
    lx = np.sqrt(np.maximum(r * r - x0 * x0, 0.0)) * (np.abs(x0) < r)
    hy = np.sqrt(np.maximum(r * r - y1 * y1, 0.0)) * (np.abs(y1) < r)
    ly = np.sqrt(np.maximum(r * r - y0 * y0, 0.0)) * (np.abs(y0) < r)
    flux = (
        x1 * chord_overlap(y0, y1, np.where(np.abs(x1) < r, hx, -1.0))
        - x0 * chord_overlap(y0, y1, np.where(np.abs(x0) < r, lx, -1.0))
        + y1 * chord_overlap(x0, x1, np.where(np.abs(y1) < r, hy, -1.0))
        - y0 * chord_overlap(x0, x1, np.where(np.abs(y0) < r, ly, -1.0))
    )
    flux = flux + r * r * arc_measure(r, x0, x1, y0, y1)
    return np.maximum(0.5 * flux, 0.0)


def sphere_patch_area(x0, x1, y0, y1, z0, z1):
    """Area of the unit sphere inside the box [x0,x1]x[y0,y1]x[z0,z1].

    Uses dS = dz dphi; the integrand in z has square-root endpoint behaviour
    at every radius where the horizontal circle becomes tangent to a box edge
    or passes through a corner, so each smooth piece is integrated after the
    substitution z = m - d cos(t).
    """
    x0, x1, y0, y1, z0, z1 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x0, x1, y0, y1, z0, z1))
    za = np.clip(z0, -1.0, 1.0)
    zb = np.clip(z1, -1.0, 1.0)
    radii = np.stack(
        [np.abs(x0), np.abs(x1), np.abs(y0), np.abs(y1),
         np.hypot(x0, y0), np.hypot(x0, y1), np.hypot(x1, y0), np.hypot(x1, y1)],
        axis=-1,
    )
    zr = np.sqrt(np.maximum(1.0 - radii * radii, 0.0))
    zr = np.where(radii < 1.0, zr, 0.0)
    brk = np.concatenate([za[:, None], zb[:, None], zr, -zr, np.zeros_like(za)[:, None]], axis=1)
    brk = np.clip(brk, za[:, None], zb[:, None])
    brk.sort(axis=1)
    lo = brk[:, :-1]
    hi = brk[:, 1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    t = 0.5 * np.pi * (_GL_NODES + 1.0)
    w = 0.5 * np.pi * _GL_WEIGHTS
    z = mid[..., None] - half[..., None] * np.cos(t)
    jac = half[..., None] * np.sin(t) * w
    # most pieces collapse after clipping; evaluate only the nonempty ones
    cell, piece = np.nonzero(half > 0.0)
    z = z[cell, piece]
    rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    theta = arc_measure(rho, x0[cell, None], x1[cell, None], y0[cell, None], y1[cell, None])
    contrib = (theta * jac[cell, piece]).sum(axis=1)
    return np.bincount(cell, weights=contrib, minlength=len(za))


def cut_cell_geometry(centers, h, chunk=20000):
    """Volume fractions, patch areas of the cells centred at ``centers``.

    ``centers`` has shape (m, n) with n in {2, 3}. Returns ``(vol, patch,
    apertures)`` where ``vol`` is |cell ∩ B| / h^n, ``patch`` is the absolute
    measure of cell ∩ ∂B and ``apertures`` has shape (m, n, 2) holding the
    absolute measures of the (-, +) faces inside the ball.
    """
    centers = np.asarray(centers, dtype=float)
    m, n = centers.shape
    vol = np.empty(m)
    patch = np.empty(m)
    ap = np.empty((m, n, 2))
    for s in range(0, m, chunk):
        c = centers[s : s + chunk]
        lo = c - 0.5 * h
        hi = c + 0.5 * h
        a = np.empty((len(c), n, 2))
        if n == 2:
            for d in range(2):
                o = 1 - d
                for side, plane in enumerate((lo[:, d], hi[:, d])):
                    rho = np.where(np.abs(plane) < 1.0, np.sqrt(np.maximum(1.0 - plane**2, 0.0)), -1.0)
                    a[:, d, side] = chord_overlap(lo[:, o], hi[:, o], rho)
            p = arc_measure(np.ones(len(c)), lo[:, 0], hi[:, 0], lo[:, 1], hi[:, 1])
        else:
            for d in range(3):
                o1, o2 = [k for k in range(3) if k != d]
                for side, plane in enumerate((lo[:, d], hi[:, d])):
                    rho = np.where(np.abs(plane) < 1.0, np.sqrt(np.maximum(1.0 - plane**2, 0.0)), 0.0)
                    a[:, d, side] = disk_rect_area(rho, lo[:, o1], hi[:, o1], lo[:, o2], hi[:, o2])
            p = sphere_patch_area(lo[:, 0], hi[:, 0], lo[:, 1], hi[:, 1], lo[:, 2], hi[:, 2])
        flux = (hi * a[:, :, 1] - lo * a[:, :, 0]).sum(axis=1) + p
        vol[s : s + chunk] = np.clip(flux / (n * h**n), 0.0, 1.0)
        patch[s : s + chunk] = p
        ap[s : s + chunk] = a
    return vol, patch, ap
