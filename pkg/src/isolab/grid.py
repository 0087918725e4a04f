"""Cartesian discretisation of the closed unit ball and fields living on it.

Nodes sit on the lattice h*Z^n. Each node owns the cube of side h centred on
it; the ball is integrated with exact cut-cell fractions (see
:mod:`isolab.geometry`). Fields are stored as full lattice arrays with NaN at
exterior nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from isolab.geometry import cut_cell_geometry

EXTERIOR, BAND, INTERIOR = 0, 1, 2

# cut cells smaller than this fraction of h^n are treated as exterior
_MIN_FRACTION = 1e-10


def unit_ball_volume(n: int) -> float:
    """Closed-form volume of the unit ball in R^n, n in {1, 2, 3, 4}."""
    table = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0, 4: math.pi**2 / 2.0}
    if n not in table:
        raise ValueError(f"unit_ball_volume: unsupported dimension n={n}")
    return table[n]


def parse_resolution(h) -> float:
    """Accept 0.015625, '1/64' or Fraction(1, 64)."""
    if isinstance(h, str):
        return float(Fraction(h.strip()))
    return float(h)


@dataclass(frozen=True, eq=False)
class BallGrid:
    """Lattice discretisation of B_1^n.

    ``node_class`` is EXTERIOR / BAND / INTERIOR. Interior nodes are farther
    than h from the sphere; band nodes own a cell that meets the ball;
    everything else is exterior.
    """

    n: int
    h: float
    half_width: int
    axis: np.ndarray
    node_class: np.ndarray
    fraction: np.ndarray
    patch: np.ndarray
    apertures: tuple
    bq_points: np.ndarray
    bq_weights: np.ndarray
    bq_owner: np.ndarray
    volume_rel_error: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self) -> tuple:
        return self.node_class.shape

    @property
    def valid(self) -> np.ndarray:
        return self.node_class != EXTERIOR

    @property
    def interior(self) -> np.ndarray:
        return self.node_class == INTERIOR

    @property
    def band(self) -> np.ndarray:
        return self.node_class == BAND

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weight |cell ∩ B| of every node (zero when exterior)."""
        return self.fraction * self.cell_volume

    def coords(self) -> np.ndarray:
        """Node positions, shape ``self.shape + (n,)``."""
        if "coords" not in self._cache:
            mesh = np.meshgrid(*([self.axis] * self.n), indexing="ij")
            self._cache["coords"] = np.stack(mesh, axis=-1)
        return self._cache["coords"]

    def radius(self) -> np.ndarray:
        if "radius" not in self._cache:
            self._cache["radius"] = np.linalg.norm(self.coords(), axis=-1)
        return self._cache["radius"]

    def origin_index(self) -> tuple:
        return (self.half_width,) * self.n

    def index_of(self, points: np.ndarray) -> np.ndarray:
        """Lattice multi-index of the cell containing each point, shape (m, n)."""
        k = np.rint(np.asarray(points) / self.h).astype(int) + self.half_width
        return np.clip(k, 0, 2 * self.half_width)

    def shell_mask(self, width: float) -> np.ndarray:
        """Valid nodes with |x| < 1 - width (used to exclude a boundary shell)."""
        return self.valid & (self.radius() < 1.0 - width)


def make_ball_grid(n: int, h, *, bq_refine: int | None = None) -> BallGrid:
    """Build the ball grid for dimension ``n`` and cell width ``h``.

    The boundary quadrature is a fine product rule on the sphere whose
    weights are rescaled cell by cell to the exact patch measures, so it is
    consistent with the cut-cell volumes.
    """
    if n not in (2, 3):
        raise ValueError(f"unsupported dimension n={n}; expected 2 or 3")
    h = parse_resolution(h)
    if not (1.0 / 256.0 - 1e-15 <= h <= 1.0 / 8.0 + 1e-15):
        raise ValueError(f"resolution h={h} unsupported; expected 1/256 <= h <= 1/8")

    K = int(math.ceil(1.0 / h)) + 3
    axis = np.arange(-K, K + 1) * h
    shape = (2 * K + 1,) * n
    mesh = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1)
    r = np.linalg.norm(mesh, axis=-1)
    half_diag = 0.5 * h * math.sqrt(n)

    fraction = np.zeros(shape)
    fraction[r + half_diag <= 1.0] = 1.0
    cut = (r + half_diag > 1.0) & (r - half_diag < 1.0)
    patch = np.zeros(shape)
    face_abs = np.zeros(shape + (n, 2))
    full_face = h ** (n - 1)
    face_abs[r + half_diag <= 1.0] = full_face
    vol, pat, ap = cut_cell_geometry(mesh[cut], h)
    fraction[cut] = vol
    patch[cut] = pat
    face_abs[cut] = ap

    tiny = cut & (fraction < _MIN_FRACTION)
    fraction[tiny] = 0.0
    patch[tiny] = 0.0
    face_abs[tiny] = 0.0

    node_class = np.full(shape, EXTERIOR, dtype=np.int8)
    node_class[fraction > 0.0] = BAND
    node_class[r < 1.0 - h] = INTERIOR

    # aperture fraction of the face between node k and k + e_d
    apertures = []
    for d in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        a_plus = face_abs[tuple(lo)][..., d, 1]
        a_minus = face_abs[tuple(hi)][..., d, 0]
        a = 0.5 * (a_plus + a_minus) / full_face
        both = (fraction[tuple(lo)] > 0) & (fraction[tuple(hi)] > 0)
        apertures.append(np.where(both, a, 0.0))

    if bq_refine is None:
        bq_refine = 8 if n == 2 else 3
    pts, w = _sphere_rule(n, h / bq_refine)
    owner = np.rint(pts / h).astype(int) + K
    flat_owner = np.ravel_multi_index(tuple(owner.T), shape)
    patch_flat = patch.ravel()
    sums = np.bincount(flat_owner, weights=w, minlength=patch_flat.size)
    scale = np.divide(patch_flat, sums, out=np.zeros_like(sums), where=sums > 0)
    w = w * scale[flat_owner]
    orphan = np.flatnonzero((patch_flat > 0) & (sums == 0))
    if orphan.size:
        c = mesh.reshape(-1, n)[orphan]
        extra = c / np.linalg.norm(c, axis=1, keepdims=True)
        pts = np.concatenate([pts, extra])
        w = np.concatenate([w, patch_flat[orphan]])
        flat_owner = np.concatenate([flat_owner, orphan])
    keep = w > 0
    exact = unit_ball_volume(n)
    vol_err = abs(fraction.sum() * h**n - exact) / exact
    return BallGrid(
        n=n,
        h=h,
        half_width=K,
        axis=axis,
        node_class=node_class,
        fraction=fraction,
        patch=patch,
        apertures=tuple(apertures),
        bq_points=pts[keep],
        bq_weights=w[keep],
        bq_owner=flat_owner[keep],
        volume_rel_error=vol_err,
    )


def _sphere_rule(n: int, spacing: float):
    if n == 2:
        m = int(math.ceil(2.0 * math.pi / spacing))
        phi = (np.arange(m) + 0.5) * (2.0 * math.pi / m)
        return np.stack([np.cos(phi), np.sin(phi)], axis=1), np.full(m, 2.0 * math.pi / m)
    # dS = dz dphi: midpoint in z and phi (weights are rescaled per cell later)
    mz = int(math.ceil(2.0 / spacing))
    z = -1.0 + (np.arange(mz) + 0.5) * (2.0 / mz)
    rz = np.sqrt(1.0 - z * z)
    pts, wts = [], []
    for zi, ri in zip(z, rz):
        mp = max(8, int(math.ceil(2.0 * math.pi * ri / spacing)))
        phi = (np.arange(mp) + 0.5) * (2.0 * math.pi / mp)
        pts.append(np.stack([ri * np.cos(phi), ri * np.sin(phi), np.full(mp, zi)], axis=1))
        wts.append(np.full(mp, (2.0 / mz) * (2.0 * math.pi / mp)))
    return np.concatenate(pts), np.concatenate(wts)


Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values of a function on a BallGrid.

    ``func`` (optional) is the analytic function the values were sampled from;
    when present it is used for boundary evaluation instead of interpolation.
    """

    grid: BallGrid
    values: np.ndarray
    positive: bool = False
    func: Func | None = None

    def __post_init__(self):
        v = self.values[self.grid.valid]
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite at every non-exterior node")
        if self.positive and np.any(v <= 0.0):
            raise ValueError("field flagged positive has non-positive values")

    @classmethod
    def from_function(cls, grid: BallGrid, func: Func, *, positive: bool | None = None) -> "ScalarField":
        vals = np.full(grid.shape, np.nan)
        x = grid.coords()[grid.valid]
        vals[grid.valid] = np.asarray(func(x), dtype=float)
        if positive is None:
            positive = bool(np.all(vals[grid.valid] > 0.0))
        return cls(grid, vals, positive, func)

    @classmethod
    def from_values(cls, grid: BallGrid, values: np.ndarray) -> "ScalarField":
        vals = np.where(grid.valid, values, np.nan)
        return cls(grid, vals, bool(np.all(vals[grid.valid] > 0.0)))

    def scaled(self, lam: float) -> "ScalarField":
        f = self.func
        fn = None if f is None else (lambda x, f=f, lam=lam: lam * f(x))
        return ScalarField(self.grid, lam * self.values, self.positive and lam > 0, fn)

    def power(self, p: float) -> "ScalarField":
        f = self.func
        fn = None if f is None else (lambda x, f=f, p=p: np.asarray(f(x)) ** p)
        return ScalarField(self.grid, self.values**p, self.positive, fn)

    def at(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at arbitrary points (analytic if available)."""
        if self.func is not None:
            return np.asarray(self.func(points), dtype=float)
        return interpolate(self.grid, self.values, points)


@dataclass(frozen=True, eq=False)
class VectorMap:
    """Nodal values of a map B -> R^n; ``values`` has shape grid.shape + (n,)."""

    grid: BallGrid
    values: np.ndarray

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)

    def max_radius(self, mask: np.ndarray | None = None) -> float:
        m = self.grid.valid if mask is None else mask
        return float(self.norm()[m].max())


def interpolate(grid: BallGrid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation from valid nodes; invalid corners are dropped
    and the remaining weights renormalised."""
    pts = np.atleast_2d(points)
    n = grid.n
    s = pts / grid.h + grid.half_width
    base = np.floor(s).astype(int)
    t = s - base
    acc = np.zeros(len(pts))
    wsum = np.zeros(len(pts))
    top = 2 * grid.half_width
    for corner in range(2**n):
        bits = [(corner >> d) & 1 for d in range(n)]
        idx = np.clip(base + np.array(bits), 0, top)
        w = np.ones(len(pts))
        for d in range(n):
            w = w * (t[:, d] if bits[d] else 1.0 - t[:, d])
        v = values[tuple(idx.T)]
        ok = grid.valid[tuple(idx.T)] & np.isfinite(v)
        acc += np.where(ok, w * np.where(ok, v, 0.0), 0.0)
        wsum += np.where(ok, w, 0.0)
    return acc / np.where(wsum > 0, wsum, np.nan)


def integrate(f: ScalarField | np.ndarray, grid: BallGrid | None = None) -> float:
    """Midpoint rule with exact cut-cell weights; fixed-order (pairwise) sum."""
    if isinstance(f, ScalarField):
        grid, vals = f.grid, f.values
    else:
        vals = f
    m = grid.valid
    return float(np.sum(vals[m] * grid.weights[m]))


def boundary_integrate(f: ScalarField) -> float:
    g = f.grid
    return float(np.sum(f.at(g.bq_points) * g.bq_weights))


def _diff_axis(values: np.ndarray, valid: np.ndarray, d: int, h: float) -> np.ndarray:
    """d/dx_d: centred where possible, else one-sided second order, else first."""
    v = np.where(valid, values, 0.0)

    def sh(a, k):
        out = np.zeros_like(a)
        src = [slice(None)] * a.ndim
        dst = [slice(None)] * a.ndim
        if k > 0:
            src[d], dst[d] = slice(k, None), slice(None, -k)
        else:
            src[d], dst[d] = slice(None, k), slice(-k, None)
        out[tuple(dst)] = a[tuple(src)]
        return out

    vp, vm = sh(v, 1), sh(v, -1)
    vp2, vm2 = sh(v, 2), sh(v, -2)
    okp, okm = sh(valid, 1), sh(valid, -1)
    okp2, okm2 = sh(valid, 2), sh(valid, -2)
    out = np.zeros_like(v)
    centred = okp & okm
    fwd2 = ~centred & okp & okp2
    bwd2 = ~centred & ~fwd2 & okm & okm2
    fwd1 = ~centred & ~fwd2 & ~bwd2 & okp
    bwd1 = ~centred & ~fwd2 & ~bwd2 & ~fwd1 & okm
    out = np.where(centred, (vp - vm) / (2 * h), out)
    out = np.where(fwd2, (-3 * v + 4 * vp - vp2) / (2 * h), out)
    out = np.where(bwd2, (3 * v - 4 * vm + vm2) / (2 * h), out)
    out = np.where(fwd1, (vp - v) / h, out)
    out = np.where(bwd1, (v - vm) / h, out)
    return np.where(valid, out, np.nan)


def gradient(f: ScalarField | np.ndarray, grid: BallGrid | None = None) -> VectorMap:
    """Finite-difference gradient on valid nodes."""
    if isinstance(f, ScalarField):
        grid, vals = f.grid, f.values
    else:
        vals = f
    comps = [_diff_axis(vals, grid.valid, d, grid.h) for d in range(grid.n)]
    return VectorMap(grid, np.stack(comps, axis=-1))


def jacobian(phi: VectorMap) -> np.ndarray:
    """D phi with entry [..., i, j] = d phi_i / d x_j."""
    g = phi.grid
    rows = [gradient(phi.values[..., i], g).values for i in range(g.n)]
    return np.stack(rows, axis=-2)


def divergence(phi: VectorMap) -> np.ndarray:
    g = phi.grid
    return sum(_diff_axis(phi.values[..., d], g.valid, d, g.h) for d in range(g.n))


def hessian(u: np.ndarray, grid: BallGrid) -> np.ndarray:
    """Symmetrised Hessian: compact second differences on the diagonal where
    both neighbours exist, composed first differences elsewhere."""
    n, h, valid = grid.n, grid.h, grid.valid
    grad = [_diff_axis(u, valid, d, h) for d in range(n)]
    H = np.empty(grid.shape + (n, n))
    for i in range(n):
        for j in range(n):
            H[..., i, j] = _diff_axis(grad[i], valid, j, h)
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    v = np.where(valid, u, 0.0)
    for d in range(n):
        vp = np.roll(v, -1, axis=d)
        vm = np.roll(v, 1, axis=d)
        okp = np.roll(valid, -1, axis=d)
        okm = np.roll(valid, 1, axis=d)
        edge = np.zeros_like(valid)
        sl = [slice(None)] * n
        sl[d] = [0, -1]
        edge[tuple(sl)] = True
        ok = valid & okp & okm & ~edge
        H[..., d, d] = np.where(ok, (vp - 2 * v + vm) / h**2, H[..., d, d])
    return H


def rotate_function(func: Func, R: np.ndarray) -> Func:
    """x -> func(R x)."""
    return lambda x: func(np.asarray(x) @ np.asarray(R).T)
