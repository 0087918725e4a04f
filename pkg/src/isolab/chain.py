"""The integrated inequality chain shared by the two transport-map proofs.

Given f (normalised so ∫ f^{n/(n-1)} = |B|) and a map phi into the ball, the
chain is

    n ∫ f^p  <=  ∫ f div phi                      (AM-GM on D phi)
             <=  ∫ div(f phi) + ∫ |∇f|           (product rule, |phi| <= 1)
             ==  ∫_{∂B} f <phi, x> + ∫ |∇f|      (divergence theorem)
             <=  ∫_{∂B} f + ∫ |∇f|               (<phi, x> <= 1)

with p = n/(n-1). Each link is checked with tolerance 10 h times the scale
of the terms involved.
"""

from __future__ import annotations

import numpy as np

from isolab.certificate import Certificate
from isolab.functionals import grad_l1
from isolab.grid import (
    ScalarField,
    VectorMap,
    boundary_integrate,
    divergence,
    integrate,
    interpolate,
)


def chain_values(f: ScalarField, phi: VectorMap) -> dict:
    g = f.grid
    n = g.n
    p = n / (n - 1)
    fv = np.where(g.valid, f.values, 0.0)
    div_phi = divergence(phi)
    f_phi = VectorMap(g, phi.values * fv[..., None])
    div_fphi = divergence(f_phi)
    gl1 = grad_l1(f)
    bq = g.bq_points
    phi_b = np.stack([interpolate(g, phi.values[..., d], bq) for d in range(n)], axis=1)
    flux = float(np.sum(f.at(bq) * np.einsum("ij,ij->i", phi_b, bq) * g.bq_weights))
    bdry = boundary_integrate(f)
    return {
        "n_int_f_p": n * integrate(fv**p, g),
        "int_f_div_phi": integrate(fv * div_phi, g),
        "int_div_f_phi_plus_grad": integrate(div_fphi, g) + gl1,
        "boundary_flux_plus_grad": flux + gl1,
        "boundary_plus_grad": bdry + gl1,
        "grad_l1": gl1,
        "boundary_l1": bdry,
        "boundary_flux": flux,
    }


def add_chain_stages(cert: Certificate, f: ScalarField, phi: VectorMap, tol_scale: float = 1.0) -> dict:
    v = chain_values(f, phi)
    h = f.grid.h
    scale = v["boundary_plus_grad"]
    tol = 10.0 * h * scale * tol_scale
    a, b, c = v["n_int_f_p"], v["int_f_div_phi"], v["int_div_f_phi_plus_grad"]
    d, e = v["boundary_flux_plus_grad"], v["boundary_plus_grad"]
    cert.add("chain_amgm_integrated", "n ∫ f^{n/(n-1)} <= ∫ f div Φ", a <= b + tol,
             tolerance=tol, values={"lhs": a, "rhs": b, "gap": b - a})
    cert.add("chain_product_rule", "∫ f div Φ <= ∫ div(fΦ) + ∫|∇f|", b <= c + tol,
             tolerance=tol, values={"lhs": b, "rhs": c, "gap": c - b})
    cert.add("chain_divergence_theorem", "∫_B div(fΦ) = ∫_∂B f <Φ, x>", abs(c - d) <= tol,
             tolerance=tol, values={"volume_side": c, "boundary_side": d, "difference": c - d})
    cert.add("chain_boundary_bound", "<Φ(x), x> <= 1 on the sphere", d <= e + tol,
             tolerance=tol, values={"lhs": d, "rhs": e, "gap": e - d})
    cert.add("chain_sobolev", "n ∫ f^{n/(n-1)} <= ∫_∂B f + ∫|∇f|", a <= e + tol,
             tolerance=tol, values={"lhs": a, "rhs": e, "slack": e - a})
    return v
