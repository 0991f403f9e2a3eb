import math

import numpy as np
import pytest

from lelab import fem
from lelab.errors import (DegenerateTriangle, DimensionMismatch,
                          OverflowInNonlinearity)
from lelab.fem import Field
from lelab.geometry import Mesh
from lelab.numerics import eliminate_dirichlet, spd_solve


def _single_triangle(p0=(0.0, 0.0), p1=(1.0, 0.0), p2=(0.0, 1.0)):
    nodes = np.array([p0, p1, p2], dtype=float)
    tris = np.array([[0, 1, 2]])
    mask = np.array([True, True, True])
    edges = np.array([[0, 1], [1, 2], [2, 0]])
    e = nodes[edges[:, 1]] - nodes[edges[:, 0]]
    normals = np.stack([e[:, 1], -e[:, 0]], axis=1)
    normals /= np.hypot(normals[:, 0], normals[:, 1])[:, None]
    return Mesh(nodes=nodes, triangles=tris, boundary_mask=mask,
                boundary_edges=edges, edge_normals=normals,
                edge_triangles=np.zeros(3, dtype=np.int64), h=1.0)


def test_reference_stiffness_and_mass():
    mesh = _single_triangle()
    K = fem.assemble_stiffness(mesh).csr.toarray()
    K_ref = 0.5 * np.array([[2.0, -1.0, -1.0],
                            [-1.0, 1.0, 0.0],
                            [-1.0, 0.0, 1.0]])
    assert np.allclose(K, K_ref, atol=1e-14)
    M = fem.assemble_mass(mesh).csr.toarray()
    M_ref = (0.5 / 12.0) * np.array([[2.0, 1.0, 1.0],
                                     [1.0, 2.0, 1.0],
                                     [1.0, 1.0, 2.0]])
    assert np.allclose(M, M_ref, atol=1e-15)


def test_mass_sums_to_area(disk_mesh_coarse):
    M = fem.assemble_mass(disk_mesh_coarse)
    assert M.csr.sum() == pytest.approx(disk_mesh_coarse.area(), rel=1e-12)
    lumped = fem.lumped_mass(disk_mesh_coarse)
    assert lumped.sum() == pytest.approx(disk_mesh_coarse.area(), rel=1e-12)


def _exact_power_integral(c, q):
    """int over the reference triangle of (c0 + c1 x + c2 y)^q.

    Multinomial expansion with int x^a y^b = a! b! / (a + b + 2)!.
    """
    c0, c1, c2 = c
    total = 0.0
    q = int(q)
    for i in range(q + 1):
        for j in range(q - i + 1):
            k = q - i - j
            coef = (math.factorial(q)
                    / (math.factorial(i) * math.factorial(j)
                       * math.factorial(k)))
            mono = (math.factorial(j) * math.factorial(k)
                    / math.factorial(j + k + 2))
            total += coef * c0**i * c1**j * c2**k * mono
    return total


@pytest.mark.parametrize("q", [1, 2, 3, 4])
def test_quadrature_exact_through_quartics(q):
    mesh = _single_triangle()
    c = (0.7, 0.4, 0.9)   # keeps the integrand positive on the triangle
    u = np.array([c[0], c[0] + c[1], c[0] + c[2]])
    got = fem.integrate_power(mesh, u, float(q), order=4)
    assert got == pytest.approx(_exact_power_integral(c, q), rel=1e-12)


def test_order2_quadrature_exact_through_quadratics():
    mesh = _single_triangle()
    c = (0.7, 0.4, 0.9)
    u = np.array([c[0], c[0] + c[1], c[0] + c[2]])
    got = fem.integrate_power(mesh, u, 2.0, order=2)
    assert got == pytest.approx(_exact_power_integral(c, 2), rel=1e-12)


def test_jacobian_matches_finite_differences(disk_mesh_coarse):
    mesh = disk_mesh_coarse
    p = 3.0
    eps = 1e-6
    for seed in range(10):
        rng = np.random.default_rng(seed)
        u = rng.uniform(0.5, 1.5, mesh.n_nodes)
        u[mesh.boundary_mask] = 0.0
        dv = rng.standard_normal(mesh.n_nodes)
        dv[mesh.boundary_mask] = 0.0
        J = fem.nonlinear_jacobian(mesh, Field(mesh, u), p)
        r_plus = fem.nonlinear_residual(mesh, Field(mesh, u + eps * dv), p)
        r_minus = fem.nonlinear_residual(mesh, Field(mesh, u - eps * dv), p)
        fd = (r_plus - r_minus) / (2.0 * eps)
        jv = J.matvec(dv)
        jv[mesh.boundary_mask] = 0.0
        assert np.linalg.norm(jv - fd) <= 1e-5 * max(np.linalg.norm(jv), 1.0)


def test_torsion_benchmark(disk_mesh):
    """-Delta u = 1 on the unit disk has u = (1 - r^2)/4, so u(0) = 0.25."""
    mesh = disk_mesh
    K = fem.assemble_stiffness(mesh)
    b = fem.lumped_mass(mesh).copy()
    b[mesh.boundary_mask] = 0.0
    Ke = eliminate_dirichlet(K, mesh.boundary_mask)
    u = spd_solve(Ke, b)
    center = int(np.argmin(np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])))
    assert u[center] == pytest.approx(0.25, rel=0.01)
    # gradient-trace normal derivative: u_nu = -1/2 on the boundary
    trace = fem.normal_derivative(mesh, Field(mesh, u))
    assert np.all(trace.normal_derivative <= 0.0)
    assert np.mean(trace.normal_derivative) == pytest.approx(-0.5, rel=0.02)


def test_dirichlet_energy_linear_field():
    mesh = _single_triangle()
    u = mesh.nodes[:, 0] + 2.0 * mesh.nodes[:, 1]   # grad = (1, 2)
    assert fem.dirichlet_energy(mesh, u) == pytest.approx(5.0 * 0.5,
                                                          rel=1e-12)


def test_interpolate_reproduces_linears(disk_mesh_coarse):
    mesh = disk_mesh_coarse
    vals = 1.0 + 2.0 * mesh.nodes[:, 0] - 3.0 * mesh.nodes[:, 1]
    pts = np.array([[0.1, 0.2], [-0.3, 0.4], [0.0, 0.0]])
    got = fem.interpolate(Field(mesh, vals), pts)
    want = 1.0 + 2.0 * pts[:, 0] - 3.0 * pts[:, 1]
    assert np.allclose(got, want, atol=1e-12)


def test_interpolate_nearest_fallback(disk_mesh_coarse):
    mesh = disk_mesh_coarse
    vals = np.ones(mesh.n_nodes)
    got = fem.interpolate(Field(mesh, vals), np.array([[5.0, 5.0]]))
    assert got[0] == 1.0


def test_overflow_in_nonlinearity(disk_mesh_coarse):
    u = np.full(disk_mesh_coarse.n_nodes, 1e200)
    with pytest.raises(OverflowInNonlinearity):
        fem.load_vector(disk_mesh_coarse, u, 10.0)


def test_degenerate_triangle_rejected():
    mesh = _single_triangle(p2=(2.0, 0.0))   # collinear
    with pytest.raises(DegenerateTriangle):
        fem.assemble_stiffness(mesh)


def test_field_length_checked(disk_mesh_coarse):
    with pytest.raises(DimensionMismatch):
        Field(disk_mesh_coarse, np.ones(3))


def test_invalid_exponents(disk_mesh_coarse):
    u = Field(disk_mesh_coarse, np.ones(disk_mesh_coarse.n_nodes))
    with pytest.raises(ValueError):
        fem.nonlinear_residual(disk_mesh_coarse, u, 1.0)
    with pytest.raises(ValueError):
        fem.integrate_power(disk_mesh_coarse, u.values, 0.5)
