"""Identity and asymptotics diagnostics for converged solutions.

Every quantity the theory constrains is measured here: the energy
identity, the Pohozaev identity, the eigenfunction identity, the Green's
representation of the peak value, the flux balance, the rescaled-profile
(Liouville bubble) distance, and the concentration candidates with their
predicted energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .errors import InsufficientResolution, PoleTooCloseToBoundary
from .fem import Field
from .geometry import Domain, Mesh
from .numerics import (EigenPair, SparseOperator, dot_l2,
                       eliminate_dirichlet, principal_eigenpair, spd_solve)
from .solver import SolveRecord, rescaling_length

EIGHT_PI_E = 8.0 * math.pi * math.e


def liouville_profile(x_norm):
    """U(x) = -2 log(1 + |x|^2/8), the entire Liouville solution."""
    x_norm = np.asarray(x_norm, dtype=float)
    return -2.0 * np.log1p(x_norm**2 / 8.0)


@dataclass
class DiagnosticsBundle:
    """All measured identities and asymptotic quantities for one solve."""

    M: float
    x_max: tuple[float, float]
    clearance: float
    beta: float                      # p int |grad u|^2
    p_int_u_p1: float                # p int u^(p+1)
    int_u_p: float                   # int u^p
    energy_gap_rel: float
    pohozaev_abs: float
    pohozaev_rel: float
    eigen_rel: float
    flux_rel: float
    green_rel: float | None = None
    corrector_range: tuple[float, float] | None = None
    bubble_dist: float | None = None
    v_min: float | None = None
    v_at_peak: float | None = None
    v_growth_ratio: float | None = None
    concentration: list[tuple[float, float, float]] = field(
        default_factory=list)          # (x, y, m_j)
    beta_pred: float | None = None
    failures: dict[str, str] = field(default_factory=dict)


def energy_quantities(rec: SolveRecord) -> tuple[float, float, float]:
    """(beta, p int u^(p+1), |gap|); equal up to quadrature inconsistency."""
    u = rec.u.values
    mesh = rec.u.mesh
    beta = rec.p * fem.dirichlet_energy(mesh, u)
    other = rec.p * fem.integrate_power(mesh, u, rec.p + 1.0)
    return beta, other, abs(beta - other)


def pohozaev_sides(rec: SolveRecord) -> tuple[float, float]:
    """(LHS, RHS) of the Pohozaev identity.

    LHS = 4/(p+1) int u^(p+1); RHS = boundary sum of (x, nu) u_nu^2 with
    the residual-lifted nodal flux (trapezoid per boundary edge).
    """
    mesh = rec.u.mesh
    lhs = 4.0 / (rec.p + 1.0) * fem.integrate_power(mesh, rec.u.values,
                                                    rec.p + 1.0)
    un = fem.lifted_boundary_flux(mesh, rec.u.values, rec.p)
    e = mesh.boundary_edges
    x_dot_nu = np.sum(mesh.edge_midpoints() * mesh.edge_normals, axis=1)
    un2 = 0.5 * (un[e[:, 0]]**2 + un[e[:, 1]]**2)
    rhs = float(np.sum(x_dot_nu * un2 * mesh.edge_lengths()))
    return lhs, rhs


def pohozaev_residual(rec: SolveRecord, domain: Domain) -> tuple[float, float]:
    """|LHS - RHS| of the Pohozaev identity, absolute and relative."""
    lhs, rhs = pohozaev_sides(rec)
    if lhs == 0.0:
        return 0.0, 0.0
    return abs(lhs - rhs), abs(lhs - rhs) / lhs


def _mass_for(mesh) -> SparseOperator:
    cached = getattr(mesh, "_M_cache", None)
    if cached is None:
        cached = fem.assemble_mass(mesh)
        object.__setattr__(mesh, "_M_cache", cached)
    return cached


def eigen_sides(rec: SolveRecord, eig: EigenPair,
                M_op: SparseOperator | None = None) -> tuple[float, float]:
    """(lambda int u phi, int u^p phi) for the eigenfunction identity."""
    mesh = rec.u.mesh
    if M_op is None:
        M_op = _mass_for(mesh)
    lhs = eig.lam * dot_l2(M_op, rec.u.values, eig.phi)
    rhs = fem.integrate_product(mesh, rec.u.values, rec.p, eig.phi)
    return lhs, rhs


def eigen_identity_gap(rec: SolveRecord, eig: EigenPair,
                       M_op: SparseOperator | None = None) -> float:
    """Relative gap in lambda int u phi = int u^p phi."""
    lhs, rhs = eigen_sides(rec, eig, M_op)
    if lhs == 0.0:
        return 0.0
    return abs(lhs - rhs) / abs(lhs)


def flux_sides(rec: SolveRecord) -> tuple[float, float]:
    """(int u^p, outward boundary flux of -Delta u)."""
    mesh = rec.u.mesh
    vol = fem.integrate_power(mesh, rec.u.values, rec.p)
    un = fem.lifted_boundary_flux(mesh, rec.u.values, rec.p)
    e = mesh.boundary_edges
    flux = float(np.sum(-0.5 * (un[e[:, 0]] + un[e[:, 1]])
                        * mesh.edge_lengths()))
    return vol, flux


def flux_gap(rec: SolveRecord) -> float:
    """Relative gap between int u^p and the outward boundary flux."""
    vol, flux = flux_sides(rec)
    if vol == 0.0:
        return 0.0
    return abs(vol - flux) / vol


def mass_bound(rec: SolveRecord) -> float:
    """int u^p, reported per solve so sweeps can assert boundedness."""
    return fem.integrate_power(rec.u.mesh, rec.u.values, rec.p)


def peak_clearance(rec: SolveRecord, domain: Domain) -> float:
    return domain.distance_to_boundary(rec.peak_point)


def green_sides(rec: SolveRecord, domain: Domain
                ) -> tuple[float, float, tuple[float, float]]:
    """(M, int G u^p, corrector range) for the Green representation.

    G = -(1/2pi) log|y - x_max| - g, where g is discrete-harmonic with the
    log trace as boundary data.  Quadrature points within 2h of the pole
    are excluded; the excluded neighbourhood is integrated analytically
    against the locally constant u^p (exact log-disk integral).
    """
    mesh = rec.u.mesh
    pole = rec.peak_point
    if domain.distance_to_boundary(pole) < 5.0 * mesh.h:
        raise PoleTooCloseToBoundary(
            f"peak clearance below 5h = {5 * mesh.h}")

    # harmonic corrector: K g = 0 interior, g = -(1/2pi) log|y - pole| on
    # the boundary, via the lifted right-hand side
    from .solver import assemble_K
    K = assemble_K(mesh)
    r_b = np.hypot(mesh.nodes[:, 0] - pole[0], mesh.nodes[:, 1] - pole[1])
    g = np.zeros(mesh.n_nodes)
    g[mesh.boundary_mask] = -np.log(r_b[mesh.boundary_mask]) / (2 * np.pi)
    rhs = -K.csr @ g
    rhs[mesh.boundary_mask] = 0.0
    Ke = eliminate_dirichlet(K, mesh.boundary_mask)
    g = g + spd_solve(Ke, rhs)

    rho = 2.0 * mesh.h

    def log_kernel(pts):
        d = np.hypot(pts[:, 0] - pole[0], pts[:, 1] - pole[1])
        d = np.maximum(d, 1e-300)
        return np.log(1.0 / d) / (2.0 * np.pi)

    u = rec.u.values
    log_part, _ = fem.integrate_kernel(
        mesh, u, rec.p, log_kernel, exclude_center=pole, exclude_radius=rho)
    g_part = fem.integrate_product(mesh, u, rec.p, g)

    # analytic singular-cell correction: int_{B_rho} log(1/|x|) dx =
    # pi rho^2 (1/2 + log(1/rho)), applied with the local mean of u^p;
    # the locally flat corrector contributes g(pole) * area
    g_pole = float(fem.interpolate(Field(mesh, g), pole[None, :])[0])
    # Near the peak u^p is far from constant when the bubble is resolved:
    # integrate u^p over the excluded region by quadrature to get its mean.
    up_mass, _ = fem.integrate_kernel(
        mesh, u, rec.p, lambda pts: np.ones(len(pts)))
    up_excl = up_mass - fem.integrate_kernel(
        mesh, u, rec.p, lambda pts: np.ones(len(pts)),
        exclude_center=pole, exclude_radius=rho)[0]
    correction = (up_excl * (0.5 + np.log(1.0 / rho)) / (2.0 * np.pi)
                  - g_pole * up_excl)
    integral = log_part - g_part + correction
    interior = ~mesh.boundary_mask
    return (rec.max_value, integral,
            (float(g[interior].min()), float(g[interior].max())))


def green_representation_gap(rec: SolveRecord, domain: Domain
                             ) -> tuple[float, tuple[float, float]]:
    """Relative gap in M = int G u^p, with the corrector range."""
    M, integral, corr = green_sides(rec, domain)
    return abs(M - integral) / M, corr


def v_transform_report(rec: SolveRecord) -> tuple[float, float, float]:
    """(min v, v at peak, growth statistic Q) for v = 1 - u/M.

    Coordinates are rescaled by M^((p-1)/2) about the peak; Q is the max
    over radii r in [p^-1/2, 10 p^-1/2] (the bubble scale in rescaled
    units) of sup_{B_r} v / r^2.
    """
    mesh = rec.u.mesh
    u = rec.u.values
    M = rec.max_value
    v = 1.0 - u / M
    v_min = float(v.min())
    v_peak = float(v[rec.peak_index])
    scale = M ** ((rec.p - 1.0) / 2.0)
    d = np.hypot(mesh.nodes[:, 0] - rec.peak_point[0],
                 mesh.nodes[:, 1] - rec.peak_point[1]) * scale
    radii = np.geomspace(rec.p**-0.5, 10.0 * rec.p**-0.5, 24)
    q_best = 0.0
    for r in radii:
        inside = d <= r
        if np.count_nonzero(inside) < 2:
            continue
        q_best = max(q_best, float(v[inside].max()) / r**2)
    return v_min, v_peak, q_best


def bubble_distance(rec: SolveRecord) -> float:
    """Sup distance of the rescaled peak profile to the Liouville bubble.

    w_p(x) = p (u(x_max + eps_p x) - M)/M on |x| <= 5 is compared with
    U(x) = -2 log(1 + |x|^2/8); both vanish at the origin.
    """
    if rec.p < 10.0:
        raise ValueError("rescaling is only meaningful for p >= 10")
    mesh = rec.u.mesh
    eps = rescaling_length(rec.p, rec.max_value)
    d = np.hypot(mesh.nodes[:, 0] - rec.peak_point[0],
                 mesh.nodes[:, 1] - rec.peak_point[1])
    n_inside = int(np.count_nonzero(d <= 5.0 * eps))
    if n_inside < 50:
        raise InsufficientResolution(
            f"only {n_inside} nodes inside the rescaled sampling disk")
    # sample on rings in rescaled coordinates
    rr = np.linspace(0.0, 5.0, 41)[1:]
    ang = np.linspace(0.0, 2.0 * np.pi, 17)[:-1]
    xx = rec.peak_point[0] + eps * np.outer(rr, np.cos(ang)).ravel()
    yy = rec.peak_point[1] + eps * np.outer(rr, np.sin(ang)).ravel()
    pts = np.stack([xx, yy], axis=1)
    u_s = fem.interpolate(rec.u, pts)
    w = rec.p * (u_s - rec.max_value) / rec.max_value
    target = liouville_profile(np.repeat(rr, len(ang)))
    return float(np.max(np.abs(w - target)))


def bubble_distance_radial(sol, n_samples: int = 400) -> float:
    """Bubble distance evaluated on a radial oracle profile."""
    if sol.p < 10.0:
        raise ValueError("rescaling is only meaningful for p >= 10")
    M = sol.center_value
    eps = rescaling_length(sol.p, M)
    x = np.linspace(0.0, 5.0, n_samples + 1)[1:]
    u_s = sol.evaluate(x * eps)
    w = sol.p * (u_s - M) / M
    return float(np.max(np.abs(w - liouville_profile(x))))


def concentration_candidates(rec: SolveRecord, threshold: float = 0.5
                             ) -> tuple[list[tuple[float, float, float]], float]:
    """Strict local maxima above threshold*M, merged at the bubble scale.

    Returns ([(x, y, m_j)], beta_pred) with beta_pred = 8 pi sum m_j^2.
    """
    mesh = rec.u.mesh
    u = rec.u.values
    M = rec.max_value
    eps = rescaling_length(rec.p, M)
    # node adjacency from triangles
    nbr = {}
    for i, j, k in mesh.triangles:
        nbr.setdefault(i, set()).update((j, k))
        nbr.setdefault(j, set()).update((i, k))
        nbr.setdefault(k, set()).update((i, j))
    cut = threshold * M
    cands = []
    for i, ui in enumerate(u):
        if ui < cut or mesh.boundary_mask[i]:
            continue
        if all(ui > u[j] for j in nbr.get(i, ())):
            cands.append((i, ui))
    cands.sort(key=lambda t: -t[1])
    merged = []
    merge_r = 10.0 * eps
    for i, ui in cands:
        x = mesh.nodes[i]
        if all(np.hypot(x[0] - mx, x[1] - my) > merge_r
               for mx, my, _ in merged):
            merged.append((float(x[0]), float(x[1]), float(ui)))
    beta_pred = 8.0 * np.pi * sum(m * m for _, _, m in merged)
    return merged, float(beta_pred)


def compute_bundle(rec: SolveRecord, domain: Domain,
                   eig: EigenPair | None = None,
                   M_op: SparseOperator | None = None,
                   green: bool = True,
                   bubble: bool = True) -> DiagnosticsBundle:
    """Full diagnostics for one converged record.

    Quantities that cannot be computed (resolution, clearance) are
    reported as None with the reason recorded in ``failures``.
    """
    mesh = rec.u.mesh
    if eig is None or M_op is None:
        from .solver import assemble_K
        K = assemble_K(mesh)
        M_full = _mass_for(mesh)
        Ke = eliminate_dirichlet(K, mesh.boundary_mask)
        Me = eliminate_dirichlet(M_full, mesh.boundary_mask)
        eig = principal_eigenpair(Ke, Me, mesh.boundary_mask,
                                  fem.lumped_mass(mesh))
        M_op = M_full

    beta, p_int_u_p1, e_gap = energy_quantities(rec)
    poh_abs, poh_rel = pohozaev_residual(rec, domain)
    bundle = DiagnosticsBundle(
        M=rec.max_value,
        x_max=(float(rec.peak_point[0]), float(rec.peak_point[1])),
        clearance=peak_clearance(rec, domain),
        beta=beta,
        p_int_u_p1=p_int_u_p1,
        int_u_p=mass_bound(rec),
        energy_gap_rel=e_gap / beta if beta > 0 else 0.0,
        pohozaev_abs=poh_abs,
        pohozaev_rel=poh_rel,
        eigen_rel=eigen_identity_gap(rec, eig, M_op),
        flux_rel=flux_gap(rec),
    )
    if green:
        try:
            bundle.green_rel, bundle.corrector_range = \
                green_representation_gap(rec, domain)
        except PoleTooCloseToBoundary as exc:
            bundle.failures["green_rel"] = str(exc)
    v_min, v_peak, q = v_transform_report(rec)
    bundle.v_min, bundle.v_at_peak, bundle.v_growth_ratio = v_min, v_peak, q
    if bubble and rec.p >= 10.0:
        try:
            bundle.bubble_dist = bubble_distance(rec)
        except InsufficientResolution as exc:
            bundle.failures["bubble_dist"] = str(exc)
    bundle.concentration, bundle.beta_pred = concentration_candidates(rec)
    return bundle
