"""Sobolev and isoperimetric functionals on the ball and on polytopes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from isolab.grid import (
    ScalarField,
    boundary_integrate,
    gradient,
    integrate,
    unit_ball_volume,
)

PASS = "PASS"
PASS_NOTE = "PASS-WITH-DISCRETIZATION-NOTE"
FAIL = "FAIL"


def sobolev_constant(n: int) -> float:
    """n |B_1^n|^{1/n}."""
    return n * unit_ball_volume(n) ** (1.0 / n)


@dataclass(frozen=True)
class Functionals:
    grad_l1: float
    boundary_l1: float
    lq_norm: float
    deficit: float
    n: int
    h: float

    @property
    def lhs(self) -> float:
        return self.grad_l1 + self.boundary_l1

    @property
    def rhs(self) -> float:
        return sobolev_constant(self.n) * self.lq_norm ** ((self.n - 1) / self.n)

    def status(self, tol_scale: float = 1.0) -> str:
        if self.deficit >= 0.0:
            return PASS
        if self.deficit >= -10.0 * self.h * tol_scale * self.lhs:
            return PASS_NOTE
        return FAIL


def grad_l1(f: ScalarField) -> float:
    g = gradient(f)
    return integrate(np.linalg.norm(g.values, axis=-1), f.grid)


def lq_norm(f: ScalarField) -> float:
    """∫ f^{n/(n-1)} (the quantity the ball inequality raises to (n-1)/n)."""
    p = f.grid.n / (f.grid.n - 1)
    return integrate(np.abs(f.values) ** p, f.grid)


def sobolev_deficit(f: ScalarField) -> Functionals:
    """∫|∇f| + ∫_{∂B} f − n|B|^{1/n} (∫ f^{n/(n−1)})^{(n−1)/n}."""
    if not f.positive:
        raise ValueError("sobolev_deficit requires a positive field")
    return _functionals(f, with_boundary=True)


def sobolev_deficit_rn(f: ScalarField) -> Functionals:
    """Whole-space form for nonnegative f supported inside the ball.

    No boundary term; used for the indicator-approximation corpus where f
    vanishes near the sphere.
    """
    if np.any(f.values[f.grid.valid] < 0.0):
        raise ValueError("sobolev_deficit_rn requires a nonnegative field")
    return _functionals(f, with_boundary=False)


def _functionals(f: ScalarField, with_boundary: bool) -> Functionals:
    n = f.grid.n
    a = grad_l1(f)
    b = boundary_integrate(f) if with_boundary else 0.0
    c = lq_norm(f)
    d = a + b - sobolev_constant(n) * c ** ((n - 1) / n)
    return Functionals(a, b, c, d, n, f.grid.h)


def normalize_for_transport(f: ScalarField) -> tuple[ScalarField, float]:
    """Rescale so that ∫ f^{n/(n−1)} = |B_1^n|; returns (field, lambda)."""
    if not f.positive:
        raise ValueError("normalize_for_transport requires a positive field")
    n = f.grid.n
    c = lq_norm(f)
    if c <= 0.0:
        raise ValueError("zero integral; cannot normalise")
    lam = (unit_ball_volume(n) / c) ** ((n - 1) / n)
    return f.scaled(lam), lam


def normalize_for_abp(f: ScalarField) -> tuple[ScalarField, float]:
    """Rescale so that ∫|∇f| + ∫_{∂B} f = n ∫ f^{n/(n−1)}; returns (field, lambda)."""
    if not f.positive:
        raise ValueError("normalize_for_abp requires a positive field")
    n = f.grid.n
    a = grad_l1(f) + boundary_integrate(f)
    c = lq_norm(f)
    if a <= 0.0 or c <= 0.0:
        raise ValueError("zero integral; cannot normalise")
    lam = (a / (n * c)) ** (n - 1)
    return f.scaled(lam), lam


def abp_normalization_residual(f: ScalarField) -> float:
    n = f.grid.n
    a = grad_l1(f) + boundary_integrate(f)
    c = n * lq_norm(f)
    return abs(a - c) / c


# --- polytopes ---------------------------------------------------------------


def _segments_cross(p, q, r, s) -> np.ndarray:
    """Proper or touching intersection of segments p[i]q[i] with r[j]s[j]."""

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    o1 = orient(p, q, r)
    o2 = orient(p, q, s)
    o3 = orient(r, s, p)
    o4 = orient(r, s, q)
    return (o1 * o2 <= 0) & (o3 * o4 <= 0)


def polygon_measures(vertices: np.ndarray) -> tuple[float, float]:
    """(area, perimeter) of a simple closed polygon; rejects self-intersection."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise ValueError("polygon needs at least 3 vertices (x, y)")
    if np.allclose(v[0], v[-1]):
        v = v[:-1]
    w = np.roll(v, -1, axis=0)
    m = len(v)
    # non-adjacent edge pairs must not touch
    i, j = np.triu_indices(m, k=2)
    keep = ~((i == 0) & (j == m - 1))
    i, j = i[keep], j[keep]
    for s in range(0, len(i), 2_000_000):
        ii, jj = i[s : s + 2_000_000], j[s : s + 2_000_000]
        if np.any(_segments_cross(v[ii], w[ii], v[jj], w[jj])):
            raise ValueError("polygon boundary is self-intersecting")
    area = 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))
    perim = float(np.sum(np.linalg.norm(w - v, axis=1)))
    if abs(area) <= 0.0:
        raise ValueError("degenerate polygon")
    return abs(area), perim


def _check_closed_mesh(faces: np.ndarray) -> None:
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    directed = {tuple(e) for e in edges.tolist()}
    if len(directed) != len(edges):
        raise ValueError("mesh has a repeated directed edge (inconsistent orientation)")
    for a, b in directed:
        if (b, a) not in directed:
            raise ValueError("mesh boundary is open (edge without opposite partner)")


def _mesh_self_intersects(verts: np.ndarray, faces: np.ndarray) -> bool:
    """Edge-triangle crossing test between faces that share no vertex."""
    tri = verts[faces]
    e0 = tri[:, [0, 1, 2]]
    e1 = tri[:, [1, 2, 0]]
    eps = 1e-12
    for t in range(len(faces)):
        share = np.isin(faces, faces[t]).any(axis=1)
        others = np.flatnonzero(~share)
        if others.size == 0:
            continue
        a, b, c = tri[t]
        p0 = e0[others].reshape(-1, 3)
        d = e1[others].reshape(-1, 3) - p0
        ab, ac = b - a, c - a
        pv = np.cross(d, ac)
        det = pv @ ab
        ok = np.abs(det) > eps
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tv = p0 - a
        u = np.einsum("ij,ij->i", tv, pv) * inv
        qv = np.cross(tv, ab)
        v = np.einsum("ij,ij->i", d, qv) * inv
        s = (qv @ ac) * inv
        hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps) & (s >= -eps) & (s <= 1 + eps)
        if np.any(hit):
            return True
    return False


def mesh_measures(vertices: np.ndarray, faces: np.ndarray) -> tuple[float, float]:
    """(volume, surface area) of a closed, consistently oriented triangle mesh."""
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=int)
    _check_closed_mesh(f)
    if len(f) <= 5000 and _mesh_self_intersects(v, f):
        raise ValueError("mesh is self-intersecting")
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    vol = float(np.sum(np.einsum("ij,ij->i", a, np.cross(b, c)))) / 6.0
    area = float(np.sum(np.linalg.norm(np.cross(b - a, c - a), axis=1))) / 2.0
    return abs(vol), area


def isoperimetric_deficit(region) -> float:
    """|∂E| − n|B_1^n|^{1/n}|E|^{(n−1)/n} for a polygon (n=2) or mesh (n=3).

    ``region`` is an (m, 2) vertex array or a ``(vertices, faces)`` pair.
    """
    if isinstance(region, tuple):
        vol, bdry = mesh_measures(*region)
        n = 3
    else:
        vol, bdry = polygon_measures(region)
        n = 2
    return bdry - sobolev_constant(n) * vol ** ((n - 1) / n)


def regular_polygon(m: int, r: float = 1.0) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(m) / m
    return r * np.stack([np.cos(t), np.sin(t)], axis=1)


def unit_square() -> np.ndarray:
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def unit_cube() -> tuple[np.ndarray, np.ndarray]:
    v = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
    faces = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # x = 0
            [4, 6, 7], [4, 7, 5],  # x = 1
            [0, 4, 5], [0, 5, 1],  # y = 0
            [2, 3, 7], [2, 7, 6],  # y = 1
            [0, 2, 6], [0, 6, 4],  # z = 0
            [1, 5, 7], [1, 7, 3],  # z = 1
        ]
    )
    return v, faces


# --- indicator approximation ------------------------------------------------


def smoothstep_cutoff(s):
    """eta: 1 on [0,1], cubic smoothstep down to 0 on [1,2], 0 beyond."""
    t = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - t * t * (3.0 - 2.0 * t)


def disk_distance(center, radius):
    c = np.asarray(center, dtype=float)
    return lambda x: np.maximum(0.0, np.linalg.norm(np.asarray(x) - c, axis=-1) - radius)


def box_distance(center, half):
    c = np.asarray(center, dtype=float)
    hw = np.asarray(half, dtype=float)
    return lambda x: np.linalg.norm(np.maximum(np.abs(np.asarray(x) - c) - hw, 0.0), axis=-1)


def mollified_indicator(dist, j: int):
    """f_j(x) = eta(j dist(x, E))."""
    return lambda x: smoothstep_cutoff(j * dist(x))


def positive_lift(func, j: int):
    """x -> sqrt(j^-2 + f(x)^2), a positive function approaching |f|."""
    return lambda x: np.sqrt(j**-2.0 + np.asarray(func(x)) ** 2)
