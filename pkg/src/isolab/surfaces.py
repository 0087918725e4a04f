"""Hypersurfaces in R^3: analytic charts, level sets, and the Michael-Simon
type Sobolev inequality.

A chart X(s, t) supplies its first and second derivatives in closed form.
Mean curvature is the sum of principal curvatures with the sign convention
H = div_Σ ν, so the outward unit sphere of radius r has H = 2/r. Integrals
use tensor Gauss-Legendre panels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from isolab.certificate import Certificate

Derivs = Callable[[np.ndarray, np.ndarray], tuple]
EDGES = ("s0", "s1", "t0", "t1")
SOBOLEV_CONST_2 = 2.0 * math.sqrt(math.pi)


def _gauss(a: float, b: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


@dataclass(frozen=True, eq=False)
class ParametricSurface:
    """Chart over [s0, s1] x [t0, t1]; ``boundary`` lists the edges that are
    part of ∂Σ (periodic seams and degenerate poles are not)."""

    name: str
    derivs: Derivs
    domain: tuple
    boundary: tuple
    panels: tuple = (8, 8)
    order: int = 16
    exact_h: Callable | None = None
    params: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        bad = set(self.boundary) - set(EDGES)
        if bad:
            raise ValueError(f"unknown boundary edges {sorted(bad)}")

    # --- quadrature -----------------------------------------------------
    def nodes(self):
        if "nodes" not in self._cache:
            s0, s1, t0, t1 = self.domain
            s, ws = _gauss(s0, s1, self.panels[0], self.order)
            t, wt = _gauss(t0, t1, self.panels[1], self.order)
            S, T = np.meshgrid(s, t, indexing="ij")
            self._cache["nodes"] = (S.ravel(), T.ravel(), np.outer(ws, wt).ravel())
        return self._cache["nodes"]

    def geometry(self) -> dict:
        if "geom" not in self._cache:
            s, t, w = self.nodes()
            self._cache["geom"] = surface_geometry(self.derivs, s, t)
            self._cache["geom"]["w"] = w
            det = self._cache["geom"]["detg"]
            if np.any(det < 1e-10):
                raise ValueError(f"{self.name}: chart is not an immersion (metric determinant {det.min():.2e})")
        return self._cache["geom"]

    def edge_nodes(self, edge: str):
        """(s, t, line weights) along one boundary edge."""
        s0, s1, t0, t1 = self.domain
        if edge in ("s0", "s1"):
            t, w = _gauss(t0, t1, self.panels[1], self.order)
            s = np.full_like(t, s0 if edge == "s0" else s1)
            _, _, Xt, *_ = self.derivs(s, t)
            return s, t, w * np.linalg.norm(Xt, axis=-1)
        s, w = _gauss(s0, s1, self.panels[0], self.order)
        t = np.full_like(s, t0 if edge == "t0" else t1)
        _, Xs, *_ = self.derivs(s, t)
        return s, t, w * np.linalg.norm(Xs, axis=-1)

    def boundary_nodes(self):
        parts = [self.edge_nodes(e) for e in self.boundary]
        if not parts:
            z = np.zeros(0)
            return z, z, z
        return tuple(np.concatenate(p) for p in zip(*parts))

    # --- derived surfaces -----------------------------------------------
    def transformed(self, R: np.ndarray, b: np.ndarray) -> "ParametricSurface":
        """Rigid motion x -> R x + b."""
        R = np.asarray(R, dtype=float)
        b = np.asarray(b, dtype=float)
        base = self.derivs

        def derivs(s, t):
            X, *rest = base(s, t)
            return (X @ R.T + b, *[d @ R.T for d in rest])

        return replace(self, derivs=derivs, name=self.name + "+rigid", _cache={})

    def refined(self, factor: int = 2) -> "ParametricSurface":
        return replace(self, panels=(self.panels[0] * factor, self.panels[1] * factor), _cache={})

    def check_curvature(self, tol: float = 1e-10) -> float:
        """Max |H_chart - H_exact| over quadrature nodes."""
        if self.exact_h is None:
            return 0.0
        s, t, _ = self.nodes()
        err = float(np.max(np.abs(self.geometry()["H"] - self.exact_h(s, t))))
        if err > tol:
            raise ValueError(f"{self.name}: stored mean curvature disagrees with chart by {err:.2e}")
        return err


def surface_geometry(derivs: Derivs, s, t) -> dict:
    X, Xs, Xt, Xss, Xst, Xtt = derivs(s, t)
    E, F, G = _dot(Xs, Xs), _dot(Xs, Xt), _dot(Xt, Xt)
    cr = np.cross(Xs, Xt)
    area_el = np.linalg.norm(cr, axis=-1)
    # degenerate charts are rejected by the caller
    with np.errstate(invalid="ignore", divide="ignore"):
        nu = cr / area_el[..., None]
    L, M, N = _dot(Xss, nu), _dot(Xst, nu), _dot(Xtt, nu)
    detg = E * G - F * F
    with np.errstate(invalid="ignore", divide="ignore"):
        H = -(E * N - 2.0 * F * M + G * L) / detg
    return {"X": X, "Xs": Xs, "Xt": Xt, "E": E, "F": F, "G": G, "detg": detg,
            "dA": area_el, "nu": nu, "H": H}


# --- integrals -----------------------------------------------------------------


def surface_area(surf: ParametricSurface) -> float:
    g = surf.geometry()
    return float(np.sum(g["w"] * g["dA"]))


def boundary_length(surf: ParametricSurface) -> float:
    _, _, w = surf.boundary_nodes()
    return float(np.sum(w))


def surface_integral(surf: ParametricSurface, field: "SurfaceField | Callable") -> float:
    g = surf.geometry()
    vals = field.values() if isinstance(field, SurfaceField) else field(g["X"])
    return float(np.sum(g["w"] * g["dA"] * vals))


def boundary_integral(surf: ParametricSurface, field: "SurfaceField | Callable") -> float:
    s, t, w = surf.boundary_nodes()
    if len(w) == 0:
        return 0.0
    if isinstance(field, SurfaceField):
        vals = field.evaluate(s, t)
    else:
        X = surf.derivs(s, t)[0]
        vals = field(X)
    return float(np.sum(w * vals))


# --- fields --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SurfaceField:
    """A function on Σ, given either in chart variables with its (s, t)
    derivatives or as an ambient function with its ambient gradient."""

    surface: ParametricSurface
    kind: str
    value: Callable
    grad: Callable | None = None
    name: str = ""

    @classmethod
    def from_chart(cls, surface, value, dvalue=None, name=""):
        return cls(surface, "chart", value, dvalue, name)

    @classmethod
    def from_ambient(cls, surface, value, gradient=None, name=""):
        return cls(surface, "ambient", value, gradient, name)

    def evaluate(self, s, t) -> np.ndarray:
        if self.kind == "chart":
            v = self.value(s, t)
        else:
            v = self.value(self.surface.derivs(s, t)[0])
        v = np.broadcast_to(np.asarray(v, dtype=float), np.shape(s))
        if not np.all(np.isfinite(v)):
            raise ValueError("surface field is not finite at every node")
        return v

    def values(self) -> np.ndarray:
        s, t, _ = self.surface.nodes()
        return self.evaluate(s, t)

    def tangential_gradient_sq(self) -> np.ndarray:
        """|∇^Σ f|² at the quadrature nodes."""
        if self.grad is None:
            raise ValueError("field has no derivative information")
        g = self.surface.geometry()
        s, t, _ = self.surface.nodes()
        if self.kind == "chart":
            gs, gt = self.grad(s, t)
            gs = np.broadcast_to(gs, s.shape)
            gt = np.broadcast_to(gt, s.shape)
            return (g["G"] * gs * gs - 2.0 * g["F"] * gs * gt + g["E"] * gt * gt) / g["detg"]
        D = np.broadcast_to(np.asarray(self.grad(g["X"]), dtype=float), g["X"].shape)
        return np.maximum(_dot(D, D) - _dot(D, g["nu"]) ** 2, 0.0)


# --- level sets ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LevelSetSurface:
    """Zero set of w with analytic gradient and Hessian. ``sampler(count,
    rng)`` returns points on the locus."""

    name: str
    w: Callable
    grad: Callable
    hess: Callable
    sampler: Callable | None = None

    def multiplied(self, m, grad_m, hess_m, name=None) -> "LevelSetSurface":
        """Defining function m·w (same locus when m > 0)."""
        w, gw, hw = self.w, self.grad, self.hess

        def grad(x):
            return m(x)[..., None] * gw(x) + w(x)[..., None] * grad_m(x)

        def hess(x):
            a, b = gw(x), grad_m(x)
            return (m(x)[..., None, None] * hw(x) + a[..., :, None] * b[..., None, :]
                    + b[..., :, None] * a[..., None, :] + w(x)[..., None, None] * hess_m(x))

        return LevelSetSurface(name or f"{self.name}*m", lambda x: m(x) * w(x), grad, hess, self.sampler)


def mean_curvature_levelset(surface: LevelSetSurface, point, *, locus_tol: float = 1e-8) -> np.ndarray:
    """H = Δw/|∇w| - D²w(∇w, ∇w)/|∇w|³, oriented by ∇w."""
    x = np.atleast_2d(np.asarray(point, dtype=float))
    if np.any(np.abs(surface.w(x)) > locus_tol):
        raise ValueError("point is not on the level set")
    g = surface.grad(x)
    gn = np.linalg.norm(g, axis=-1)
    if np.any(gn <= 1e-10):
        raise ValueError("degenerate gradient of the defining function")
    Hs = surface.hess(x)
    lap = np.trace(Hs, axis1=-2, axis2=-1)
    quad = np.einsum("...i,...ij,...j->...", g, Hs, g)
    out = lap / gn - quad / gn**3
    return out if np.ndim(point) > 1 else out[0]


def defining_function_invariance(surface: LevelSetSurface, m, grad_m, hess_m, *, count=20, seed=0) -> dict:
    if surface.sampler is None:
        raise ValueError("surface has no locus sampler")
    pts = surface.sampler(count, np.random.default_rng(seed))
    h1 = mean_curvature_levelset(surface, pts)
    h2 = mean_curvature_levelset(surface.multiplied(m, grad_m, hess_m), pts)
    diff = float(np.max(np.abs(h1 - h2)))
    return {"max_difference": diff, "pass": diff <= 1e-8, "count": len(pts)}


# --- first variation ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChartVariation:
    """Vector field V(s, t) = eta(s, t) * W(s, t) given on the chart, where
    eta vanishes on every boundary edge. ``direction`` is "position" (W = X)
    or a fixed vector."""

    surface: ParametricSurface
    direction: object = "position"
    name: str = ""

    def _eta(self, s, t):
        s0, s1, t0, t1 = self.surface.domain
        eta, ds, dt = np.ones_like(s), np.zeros_like(s), np.zeros_like(s)
        factors = {"s0": ((s - s0) / (s1 - s0), 1.0 / (s1 - s0), 0.0),
                   "s1": ((s1 - s) / (s1 - s0), -1.0 / (s1 - s0), 0.0),
                   "t0": ((t - t0) / (t1 - t0), 0.0, 1.0 / (t1 - t0)),
                   "t1": ((t1 - t) / (t1 - t0), 0.0, -1.0 / (t1 - t0))}
        for e in self.surface.boundary:
            v, a, b = factors[e]
            ds = ds * v + eta * a
            dt = dt * v + eta * b
            eta = eta * v
        return eta, ds, dt

    def evaluate(self, s, t):
        """(V, V_s, V_t)."""
        X, Xs, Xt, *_ = self.surface.derivs(s, t)
        eta, es, et = self._eta(s, t)
        if isinstance(self.direction, str):
            W, Ws, Wt = X, Xs, Xt
        else:
            W = np.broadcast_to(np.asarray(self.direction, dtype=float), X.shape)
            Ws = Wt = np.zeros_like(X)
        return (eta[..., None] * W, es[..., None] * W + eta[..., None] * Ws,
                et[..., None] * W + eta[..., None] * Wt)


def first_variation_check(surf: ParametricSurface, V, DV=None, *, step: float = 1e-4, tol: float = 1e-4) -> dict:
    """Compare d/ds |(id + sV)(Σ)| at 0 (central difference) with ∫ H <V, ν>.

    V is either a ``ChartVariation`` or an ambient field with Jacobian
    ``DV(x)`` of shape (..., 3, 3). The gap is measured relative to
    ∫ |div_Σ V|, the size of the first-variation integrand.
    """
    g = surf.geometry()
    s, t, _ = surf.nodes()
    sb, tb, _ = surf.boundary_nodes()
    X, Xs, Xt, w = g["X"], g["Xs"], g["Xt"], g["w"]
    if isinstance(V, ChartVariation):
        vb = V.evaluate(sb, tb)[0] if len(sb) else np.zeros((0, 3))
        Vx, Js, Jt = V.evaluate(s, t)
    else:
        if DV is None:
            raise ValueError("an ambient variation needs its Jacobian DV")
        vb = V(surf.derivs(sb, tb)[0]) if len(sb) else np.zeros((0, 3))
        J = DV(X)
        Vx = V(X)
        Js = np.einsum("...ij,...j->...i", J, Xs)
        Jt = np.einsum("...ij,...j->...i", J, Xt)
    if len(vb) and np.max(np.linalg.norm(vb, axis=-1)) > 1e-10:
        raise ValueError("V does not vanish on the boundary")

    def area(eps):
        return float(np.sum(w * np.linalg.norm(np.cross(Xs + eps * Js, Xt + eps * Jt), axis=-1)))

    fd = (area(step) - area(-step)) / (2.0 * step)
    integral = float(np.sum(w * g["dA"] * g["H"] * _dot(Vx, g["nu"])))
    div = (g["G"] * _dot(Js, Xs) - g["F"] * (_dot(Js, Xt) + _dot(Jt, Xs)) + g["E"] * _dot(Jt, Xt)) / g["detg"]
    scale = float(np.sum(w * g["dA"] * np.abs(div)))
    gap = abs(fd - integral) / max(scale, 1e-300)
    return {"finite_difference": fd, "integral": integral, "scale": scale, "relative_gap": gap, "pass": gap <= tol}


# --- inequalities --------------------------------------------------------------


def michael_simon_terms(surf: ParametricSurface, f: SurfaceField) -> dict:
    vals = f.values()
    if np.any(vals <= 0.0):
        raise ValueError("michael_simon_deficit requires a positive field")
    g = surf.geometry()
    grad2 = f.tangential_gradient_sq()
    dA = g["w"] * g["dA"]
    interior = float(np.sum(dA * np.sqrt(grad2 + vals**2 * g["H"] ** 2)))
    bdry = boundary_integral(surf, f)
    l2 = float(np.sum(dA * vals**2))
    lhs = interior + bdry
    rhs = SOBOLEV_CONST_2 * math.sqrt(l2)
    return {"interior_term": interior, "boundary_term": bdry, "int_f_sq": l2,
            "lhs": lhs, "rhs": rhs, "deficit": lhs - rhs}


def michael_simon_deficit(surf: ParametricSurface, f: SurfaceField, *, tol_scale: float = 1.0,
                          environment: dict | None = None) -> Certificate:
    t = michael_simon_terms(surf, f)
    cert = Certificate("michael_simon", environment=dict(environment or {}, surface=surf.name,
                                                          field=f.name, panels=list(surf.panels), order=surf.order))
    g = surf.geometry()
    cert.add("immersion", "the chart is an immersion", bool(np.all(g["detg"] >= 1e-10)),
             tolerance=1e-10, values={"min_metric_det": float(g["detg"].min())})
    tol = 1e-6 * t["lhs"] * tol_scale
    cert.add("sobolev_on_surface",
             "∫_Σ sqrt(|∇^Σ f|² + f²H²) + ∫_∂Σ f >= n|B^n|^{1/n} (∫_Σ f^{n/(n-1)})^{(n-1)/n}",
             t["deficit"] >= -tol, tolerance=tol, values=t)
    return cert


def minimal_isoperimetric_check(surf: ParametricSurface) -> float:
    """|∂Σ| - 2√π |Σ|^{1/2} for a minimal surface; raises if Σ is not minimal."""
    hmax = float(np.max(np.abs(surf.geometry()["H"])))
    if hmax > 1e-8:
        raise ValueError(f"{surf.name} is not minimal (sup|H| = {hmax:.2e}); use michael_simon_deficit")
    return boundary_length(surf) - SOBOLEV_CONST_2 * math.sqrt(surface_area(surf))


def isoperimetric_certificate(surf: ParametricSurface, *, environment: dict | None = None) -> Certificate:
    value = minimal_isoperimetric_check(surf)
    area, length = surface_area(surf), boundary_length(surf)
    cert = Certificate("isoperimetric", environment=dict(environment or {}, surface=surf.name))
    tol = 1e-6 * length
    cert.add("minimal_isoperimetric", "|∂Σ| >= n|B^n|^{1/n} |Σ|^{(n-1)/n} for minimal Σ",
             value >= -tol, tolerance=tol, values={"area": area, "boundary_length": length, "deficit": value})
    return cert


# --- surface corpus ------------------------------------------------------------


def _zeros(s):
    return np.zeros(np.shape(s) + (3,))


def _stack(*c):
    return np.stack(np.broadcast_arrays(*c), axis=-1)


def disk(radius: float = 1.0, **kw) -> ParametricSurface:
    """Flat disk, polar chart (r, θ)."""

    def d(r, th):
        c, s = np.cos(th), np.sin(th)
        z = np.zeros_like(r)
        return (_stack(r * c, r * s, z), _stack(c, s, z), _stack(-r * s, r * c, z),
                _zeros(r), _stack(-s, c, z), _stack(-r * c, -r * s, z))

    return ParametricSurface("disk", d, (0.0, radius, 0.0, 2 * math.pi), ("s1",),
                             exact_h=lambda s, t: np.zeros_like(s), params={"radius": radius}, **kw)


def annulus(inner: float = 0.5, outer: float = 1.0, **kw) -> ParametricSurface:
    base = disk(outer)
    return ParametricSurface("annulus", base.derivs, (inner, outer, 0.0, 2 * math.pi), ("s0", "s1"),
                             exact_h=base.exact_h, params={"inner": inner, "outer": outer}, **kw)


def catenoid(height: float = 1.0, **kw) -> ParametricSurface:
    """(cosh t cos θ, cosh t sin θ, t) for |t| <= height; chart order (t, θ)."""

    def d(t, th):
        ch, sh = np.cosh(t), np.sinh(t)
        c, s = np.cos(th), np.sin(th)
        z = np.zeros_like(t)
        o = np.ones_like(t)
        return (_stack(ch * c, ch * s, t), _stack(sh * c, sh * s, o), _stack(-ch * s, ch * c, z),
                _stack(ch * c, ch * s, z), _stack(-sh * s, sh * c, z), _stack(-ch * c, -ch * s, z))

    kw.setdefault("panels", (8, 8))
    return ParametricSurface("catenoid", d, (-height, height, 0.0, 2 * math.pi), ("s0", "s1"),
                             exact_h=lambda s, t: np.zeros_like(s), params={"height": height}, **kw)


def helicoid(width: float = 1.0, turn: float = 2 * math.pi, **kw) -> ParametricSurface:
    """(s cos t, s sin t, t) on [0, width] x [0, turn]; all four edges bound."""

    def d(s, t):
        c, n = np.cos(t), np.sin(t)
        z = np.zeros_like(s)
        o = np.ones_like(s)
        return (_stack(s * c, s * n, t), _stack(c, n, z), _stack(-s * n, s * c, o),
                _zeros(s), _stack(-n, c, z), _stack(-s * c, -s * n, z))

    return ParametricSurface("helicoid", d, (0.0, width, 0.0, turn), EDGES,
                             exact_h=lambda s, t: np.zeros_like(s), params={"width": width, "turn": turn}, **kw)


def sphere_cap(radius: float = 1.0, angle: float = math.pi / 3, **kw) -> ParametricSurface:
    """Polar cap θ <= angle of the sphere of given radius; angle = π gives the
    full sphere (no boundary)."""

    def d(th, ph):
        st, ct = np.sin(th), np.cos(th)
        sp, cp = np.sin(ph), np.cos(ph)
        r = radius
        z = np.zeros_like(th)
        return (_stack(r * st * cp, r * st * sp, r * ct),
                _stack(r * ct * cp, r * ct * sp, -r * st),
                _stack(-r * st * sp, r * st * cp, z),
                _stack(-r * st * cp, -r * st * sp, -r * ct),
                _stack(-r * ct * sp, r * ct * cp, z),
                _stack(-r * st * cp, -r * st * sp, z))

    full = angle >= math.pi - 1e-15
    return ParametricSurface("sphere" if full else "sphere_cap", d, (0.0, angle, 0.0, 2 * math.pi),
                             () if full else ("s1",), exact_h=lambda s, t: np.full_like(s, 2.0 / radius),
                             params={"radius": radius, "angle": angle}, **kw)


def saddle_graph(**kw) -> ParametricSurface:
    """Graph z = (x² - y²)/4 over the unit disk, polar chart."""

    def d(r, th):
        c, s = np.cos(th), np.sin(th)
        c2, s2 = np.cos(2 * th), np.sin(2 * th)
        z = np.zeros_like(r)
        return (_stack(r * c, r * s, r * r * c2 / 4),
                _stack(c, s, r * c2 / 2),
                _stack(-r * s, r * c, -r * r * s2 / 2),
                _stack(z, z, c2 / 2),
                _stack(-s, c, -r * s2),
                _stack(-r * c, -r * s, -r * r * c2))

    def exact(r, th):
        x, y = r * np.cos(th), r * np.sin(th)
        W = np.sqrt(1.0 + (x * x + y * y) / 4.0)
        return (x * x - y * y) / (8.0 * W**3)

    return ParametricSurface("saddle_graph", d, (0.0, 1.0, 0.0, 2 * math.pi), ("s1",), exact_h=exact, **kw)


SURFACES = {
    "disk": disk,
    "annulus": annulus,
    "catenoid": catenoid,
    "helicoid": helicoid,
    "sphere_cap": sphere_cap,
    "sphere": lambda **kw: sphere_cap(angle=math.pi, **kw),
    "saddle_graph": saddle_graph,
}


def surface_corpus() -> list[ParametricSurface]:
    return [
        disk(), annulus(), catenoid(0.5), catenoid(1.0), catenoid(1.5), helicoid(),
        sphere_cap(1.0, math.pi / 3), sphere_cap(2.0, math.pi / 2), sphere_cap(1.0, math.pi), saddle_graph(),
    ]


def get_surface(name: str, **params) -> ParametricSurface:
    if name not in SURFACES:
        raise KeyError(f"unknown surface {name!r}; known: {', '.join(SURFACES)}")
    return SURFACES[name](**params)


def field_corpus(surf: ParametricSurface) -> list[SurfaceField]:
    """Constant, chart-polynomial bump in the non-periodic parameter, and an
    ambient exponential; all positive."""
    s0, s1, t0, t1 = surf.domain
    mid, half = 0.5 * (s0 + s1), 0.5 * (s1 - s0)
    out = [SurfaceField.from_chart(surf, lambda s, t: np.ones_like(s), lambda s, t: (0.0, 0.0), "const")]

    def bump(s, t):
        q = (s - mid) / half
        return 2.0 - q * q

    def dbump(s, t):
        return (-2.0 * (s - mid) / half**2, np.zeros_like(s))

    out.append(SurfaceField.from_chart(surf, bump, dbump, "bump"))
    a = np.array([0.8, -0.3, 0.5])
    out.append(SurfaceField.from_ambient(surf, lambda x: np.exp(x @ a),
                                         lambda x: np.exp(x @ a)[..., None] * a, "aniso_exp"))
    return out


# --- level-set corpus ----------------------------------------------------------


def _sphere_sampler(r):
    def sample(k, rng):
        v = rng.standard_normal((k, 3))
        return r * v / np.linalg.norm(v, axis=1, keepdims=True)

    return sample


def sphere_levelset(r: float = 1.0) -> LevelSetSurface:
    eye = np.eye(3)
    return LevelSetSurface(
        f"sphere(r={r})",
        lambda x: np.sum(x * x, axis=-1) - r * r,
        lambda x: 2.0 * x,
        lambda x: np.broadcast_to(2.0 * eye, x.shape[:-1] + (3, 3)),
        _sphere_sampler(r),
    )


def plane_levelset() -> LevelSetSurface:
    def sample(k, rng):
        p = rng.uniform(-1, 1, (k, 3))
        p[:, 2] = 0.0
        return p

    return LevelSetSurface(
        "plane",
        lambda x: x[..., 2],
        lambda x: np.broadcast_to(np.array([0.0, 0.0, 1.0]), x.shape),
        lambda x: np.zeros(x.shape[:-1] + (3, 3)),
        sample,
    )


def catenoid_levelset() -> LevelSetSurface:
    def w(x):
        return x[..., 0] ** 2 + x[..., 1] ** 2 - np.cosh(x[..., 2]) ** 2

    def grad(x):
        return np.stack([2 * x[..., 0], 2 * x[..., 1], -np.sinh(2 * x[..., 2])], axis=-1)

    def hess(x):
        H = np.zeros(x.shape[:-1] + (3, 3))
        H[..., 0, 0] = 2.0
        H[..., 1, 1] = 2.0
        H[..., 2, 2] = -2.0 * np.cosh(2 * x[..., 2])
        return H

    def sample(k, rng):
        t = rng.uniform(-1.5, 1.5, k)
        th = rng.uniform(0, 2 * math.pi, k)
        return np.stack([np.cosh(t) * np.cos(th), np.cosh(t) * np.sin(th), t], axis=-1)

    return LevelSetSurface("catenoid", w, grad, hess, sample)


def helicoid_levelset() -> LevelSetSurface:
    def w(x):
        return x[..., 0] * np.sin(x[..., 2]) - x[..., 1] * np.cos(x[..., 2])

    def grad(x):
        s, c = np.sin(x[..., 2]), np.cos(x[..., 2])
        return np.stack([s, -c, x[..., 0] * c + x[..., 1] * s], axis=-1)

    def hess(x):
        s, c = np.sin(x[..., 2]), np.cos(x[..., 2])
        H = np.zeros(x.shape[:-1] + (3, 3))
        H[..., 0, 2] = H[..., 2, 0] = c
        H[..., 1, 2] = H[..., 2, 1] = s
        H[..., 2, 2] = -x[..., 0] * s + x[..., 1] * c
        return H

    def sample(k, rng):
        s = rng.uniform(-1, 1, k)
        t = rng.uniform(0, 2 * math.pi, k)
        return np.stack([s * np.cos(t), s * np.sin(t), t], axis=-1)

    return LevelSetSurface("helicoid", w, grad, hess, sample)


def orientation(surf_levelset: LevelSetSurface, geometry: dict) -> np.ndarray:
    """Sign aligning the chart normal with ∇w at chart nodes."""
    return np.sign(_dot(surf_levelset.grad(geometry["X"]), geometry["nu"]))


# --- tabulated charts ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TabulatedSurface:
    """Chart sampled on a regular (s, t) lattice; integration only."""

    s: np.ndarray
    t: np.ndarray
    X: np.ndarray  # (len(s), len(t), 3)

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "TabulatedSurface":
        rows = np.asarray(rows, dtype=float)
        s = np.unique(rows[:, 0])
        t = np.unique(rows[:, 1])
        if len(s) * len(t) != len(rows):
            raise ValueError("tabulated chart must fill a full (s, t) lattice")
        order = np.lexsort((rows[:, 1], rows[:, 0]))
        X = rows[order, 2:5].reshape(len(s), len(t), 3)
        return cls(s, t, X)

    def area(self) -> float:
        Xs = np.gradient(self.X, self.s, axis=0, edge_order=2)
        Xt = np.gradient(self.X, self.t, axis=1, edge_order=2)
        dA = np.linalg.norm(np.cross(Xs, Xt), axis=-1)
        return float(np.trapezoid(np.trapezoid(dA, self.t, axis=1), self.s))

    def boundary_length(self) -> float:
        total = 0.0
        for curve in (self.X[0], self.X[-1], self.X[:, 0], self.X[:, -1]):
            total += float(np.sum(np.linalg.norm(np.diff(curve, axis=0), axis=-1)))
        return total
