"""P1 finite element machinery for -Delta u = u^p on a triangulated domain.

Assembly is vectorized over triangles.  The nonlinearity is integrated on
the P1 interpolant with fixed-order triangle quadrature: order 2 inside
the Newton loop, order 4 for reported diagnostics where the integrand
u^q is peaked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateTriangle, DimensionMismatch,
                     OverflowInNonlinearity)
from .geometry import Mesh
from .numerics import SparseOperator, from_coo

# order-2 rule: edge midpoints, exact for quadratics
_Q2_BARY = np.array([[0.5, 0.5, 0.0],
                     [0.0, 0.5, 0.5],
                     [0.5, 0.0, 0.5]])
_Q2_W = np.array([1.0, 1.0, 1.0]) / 3.0

# order-4 rule: 6-point Dunavant, exact for quartics
_a1, _b1 = 0.445948490915965, 0.108103018168070
_a2, _b2 = 0.091576213509771, 0.816847572980459
_Q4_BARY = np.array([
    [_b1, _a1, _a1], [_a1, _b1, _a1], [_a1, _a1, _b1],
    [_b2, _a2, _a2], [_a2, _b2, _a2], [_a2, _a2, _b2]])
_Q4_W = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)


@dataclass
class Field:
    """Nodal scalar values on a mesh."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != self.mesh.n_nodes:
            raise DimensionMismatch(
                f"{len(self.values)} values for {self.mesh.n_nodes} nodes")

    def copy(self) -> "Field":
        return Field(self.mesh, self.values.copy())


@dataclass(frozen=True)
class BoundaryTrace:
    """Normal derivative recovered on each boundary edge."""

    normal_derivative: np.ndarray   # (E,)
    edge_length: np.ndarray         # (E,)
    edge_midpoint: np.ndarray       # (E, 2)
    outward_normal: np.ndarray      # (E, 2)


def _geometry(mesh: Mesh):
    """Per-triangle areas and P1 basis gradients, cached on the mesh."""
    cached = getattr(mesh, "_fem_geom", None)
    if cached is not None:
        return cached
    p = mesh.nodes[mesh.triangles]           # (T, 3, 2)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    lmax2 = np.max(np.sum((p[:, [1, 2, 0]] - p) ** 2, axis=2), axis=1)
    if np.any(area <= 1e-14 * lmax2):
        raise DegenerateTriangle("triangle with relatively vanishing area")
    # grad lambda_a = perp(opposite edge) / (2 area), perp = (-y, x) of CCW edge
    opp = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]  # edge opposite vertex a
    grads = np.stack([-opp[:, :, 1], opp[:, :, 0]], axis=2)
    grads /= (2.0 * area)[:, None, None]
    geom = (area, grads)
    object.__setattr__(mesh, "_fem_geom", geom)
    return geom


def assemble_stiffness(mesh: Mesh) -> SparseOperator:
    """Symmetric PSD stiffness matrix of the Dirichlet energy form."""
    area, grads = _geometry(mesh)
    T = len(mesh.triangles)
    ke = np.einsum("tad,tbd,t->tab", grads, grads, area)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return from_coo(rows, cols, ke.reshape(T * 9), mesh.n_nodes)


def assemble_mass(mesh: Mesh) -> SparseOperator:
    """Consistent P1 mass matrix; entries sum to the mesh area."""
    area, _ = _geometry(mesh)
    T = len(mesh.triangles)
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = area[:, None, None] * base[None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return from_coo(rows, cols, me.reshape(T * 9), mesh.n_nodes)


def lumped_mass(mesh: Mesh) -> np.ndarray:
    """Row sums of the mass matrix (nodal quadrature weights)."""
    area, _ = _geometry(mesh)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles.ravel(),
              np.repeat(area / 3.0, 3))
    return out


def _check_powers(u_q: np.ndarray, p: float):
    with np.errstate(over="raise"):
        try:
            return u_q**p
        except FloatingPointError as exc:
            raise OverflowInNonlinearity(
                f"nodal power exceeded range at p = {p}") from exc


def load_vector(mesh: Mesh, u: np.ndarray, p: float) -> np.ndarray:
    """F_i = int (u_+)^p phi_i by the order-2 rule on the P1 interpolant."""
    area, _ = _geometry(mesh)
    u_tri = u[mesh.triangles]                       # (T, 3)
    u_q = np.maximum(u_tri @ _Q2_BARY.T, 0.0)       # (T, Q)
    f_q = _check_powers(u_q, p)
    fe = area[:, None] * ((f_q * _Q2_W) @ _Q2_BARY)  # (T, 3)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles.ravel(), fe.ravel())
    return out


def nonlinear_residual(mesh: Mesh, u: Field, p: float) -> np.ndarray:
    """r = K u - F(u) with boundary rows zeroed."""
    if p <= 1:
        raise ValueError("exponent must exceed 1")
    K = assemble_stiffness(mesh)
    r = K.matvec(u.values) - load_vector(mesh, u.values, p)
    r[mesh.boundary_mask] = 0.0
    return r


def weighted_mass(mesh: Mesh, u: np.ndarray, p: float) -> SparseOperator:
    """W_ab = int (u_+)^(p-1) phi_a phi_b by the order-2 rule."""
    area, _ = _geometry(mesh)
    u_tri = u[mesh.triangles]
    u_q = np.maximum(u_tri @ _Q2_BARY.T, 0.0)
    w_q = _check_powers(u_q, p - 1.0) * _Q2_W       # (T, Q)
    we = np.einsum("tq,qa,qb,t->tab", w_q, _Q2_BARY, _Q2_BARY, area)
    T = len(mesh.triangles)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return from_coo(rows, cols, we.reshape(T * 9), mesh.n_nodes)


def nonlinear_jacobian(mesh: Mesh, u: Field, p: float) -> SparseOperator:
    """J = K - p W(u), the linearization of the residual."""
    if p <= 1:
        raise ValueError("exponent must exceed 1")
    K = assemble_stiffness(mesh)
    W = weighted_mass(mesh, u.values, p)
    return SparseOperator((K.csr - p * W.csr).tocsr(), symmetric=True)


def integrate_power(mesh: Mesh, u: np.ndarray, q: float,
                    order: int = 4) -> float:
    """int (u_+)^q dx on the P1 interpolant.

    Order 4 (default) for reported diagnostics of peaked integrands;
    order 2 matches the rule used inside the Newton/initializer loop.
    """
    if q < 1:
        raise ValueError("power must be >= 1")
    bary, w = (_Q4_BARY, _Q4_W) if order == 4 else (_Q2_BARY, _Q2_W)
    area, _ = _geometry(mesh)
    u_q = np.maximum(u[mesh.triangles] @ bary.T, 0.0)
    return float(np.sum(area * ((u_q**q) @ w)))


def integrate_product(mesh: Mesh, u: np.ndarray, p: float,
                      g: np.ndarray) -> float:
    """int (u_+)^p g dx by the order-4 rule (both P1 interpolants)."""
    area, _ = _geometry(mesh)
    u_q = np.maximum(u[mesh.triangles] @ _Q4_BARY.T, 0.0)
    g_q = g[mesh.triangles] @ _Q4_BARY.T
    return float(np.sum(area * ((u_q**p * g_q) @ _Q4_W)))


def integrate_kernel(mesh: Mesh, u: np.ndarray, p: float, kernel,
                     exclude_center=None, exclude_radius: float = 0.0):
    """int (u_+)^p kernel(x) dx, order-4 rule, kernel evaluated pointwise.

    Quadrature points within ``exclude_radius`` of ``exclude_center`` are
    skipped; returns (integral, excluded_area) so the caller can add an
    analytic correction for a singular kernel.
    """
    area, _ = _geometry(mesh)
    pts = np.einsum("qa,tad->tqd", _Q4_BARY, mesh.nodes[mesh.triangles])
    u_q = np.maximum(u[mesh.triangles] @ _Q4_BARY.T, 0.0)
    k_q = kernel(pts.reshape(-1, 2)).reshape(u_q.shape)
    w = np.broadcast_to(_Q4_W, u_q.shape).copy()
    excluded = 0.0
    if exclude_center is not None and exclude_radius > 0.0:
        c = np.asarray(exclude_center, dtype=float)
        d = np.hypot(pts[:, :, 0] - c[0], pts[:, :, 1] - c[1])
        inside = d < exclude_radius
        excluded = float(np.sum((w * inside) * area[:, None]))
        w[inside] = 0.0
        k_q = np.where(inside, 0.0, k_q)
    val = float(np.sum(area[:, None] * w * u_q**p * k_q))
    return val, excluded


def dirichlet_energy(mesh: Mesh, u: np.ndarray) -> float:
    """int |grad u|^2, exact for the P1 interpolant (u^T K u)."""
    K = assemble_stiffness(mesh)
    return float(u @ K.matvec(u))


def normal_derivative(mesh: Mesh, u: Field) -> BoundaryTrace:
    """u_nu per boundary edge from the adjacent triangle's P1 gradient."""
    _, grads = _geometry(mesh)
    t = mesh.edge_triangles
    grad_u = np.einsum("tad,ta->td", grads[t],
                       u.values[mesh.triangles[t]])
    u_nu = np.sum(grad_u * mesh.edge_normals, axis=1)
    return BoundaryTrace(
        normal_derivative=u_nu,
        edge_length=mesh.edge_lengths(),
        edge_midpoint=mesh.edge_midpoints(),
        outward_normal=mesh.edge_normals,
    )


def lifted_boundary_flux(mesh: Mesh, u: np.ndarray, p: float) -> np.ndarray:
    """Nodal outward normal derivative recovered from the residual.

    For the converged discrete solution the boundary rows of K u - F(u)
    equal the weak flux functionals -int u_nu phi_i, so dividing by the
    boundary lumped mass gives a superconvergent nodal u_nu (nonzero only
    on boundary nodes).
    """
    w = assemble_stiffness(mesh).matvec(u) - load_vector(mesh, u, p)
    el = mesh.edge_lengths()
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, mesh.boundary_edges.ravel(), np.repeat(el / 2.0, 2))
    un = np.zeros(mesh.n_nodes)
    bm = mesh.boundary_mask
    un[bm] = w[bm] / m[bm]
    return un


def interpolate(src: Field, target_pts: np.ndarray) -> np.ndarray:
    """P1 interpolation of a field at arbitrary points.

    Points outside the source mesh hull take the nearest node value
    (boundary-layer fallback when meshes of the same domain differ).
    """
    import matplotlib.tri as mtri

    mesh = src.mesh
    tri = mtri.Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1],
                             mesh.triangles)
    interp = mtri.LinearTriInterpolator(tri, src.values)
    vals = interp(target_pts[:, 0], target_pts[:, 1])
    vals = np.ma.filled(vals, np.nan)
    bad = np.isnan(vals)
    if np.any(bad):
        _, idx = mesh.node_tree().query(target_pts[bad])
        vals[bad] = src.values[idx]
    return vals
