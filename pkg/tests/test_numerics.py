import numpy as np
import pytest
from scipy.sparse import csr_matrix

from lelab import fem, numerics
from lelab.errors import DimensionMismatch, NotSPD
from lelab.geometry import Domain, Mesh, generate_mesh
from lelab.numerics import (SparseOperator, dot_l2, eliminate_dirichlet,
                            from_coo, principal_eigenpair, spd_solve)

J01_SQ = 5.783185962946785   # squared first zero of the Bessel J0


def _random_spd(n, rng):
    B = rng.standard_normal((n, n))
    A = B @ B.T + n * np.eye(n)
    return SparseOperator(csr_matrix(A))


def test_spd_solve_against_dense_oracle():
    rng = np.random.default_rng(42)
    for _ in range(5):
        A = _random_spd(40, rng)
        b = rng.standard_normal(40)
        x = spd_solve(A, b)
        x_ref = np.linalg.solve(A.csr.toarray(), b)
        assert np.allclose(x, x_ref, atol=1e-10 * np.linalg.norm(b))


def test_spd_solve_zero_rhs():
    rng = np.random.default_rng(0)
    A = _random_spd(10, rng)
    assert np.all(spd_solve(A, np.zeros(10)) == 0.0)


def test_spd_solve_cg_path(monkeypatch):
    monkeypatch.setattr(numerics, "DIRECT_LIMIT", 1)
    rng = np.random.default_rng(3)
    A = _random_spd(30, rng)
    b = rng.standard_normal(30)
    res = np.linalg.norm(A.csr @ spd_solve(A, b) - b)
    assert res <= 1e-10 * np.linalg.norm(b)


def test_not_spd_detected():
    A = SparseOperator(csr_matrix(np.diag([1.0, -2.0, 3.0])))
    with pytest.raises(NotSPD):
        spd_solve(A, np.ones(3))


def test_dimension_mismatch():
    A = SparseOperator(csr_matrix(np.eye(4)))
    with pytest.raises(DimensionMismatch):
        spd_solve(A, np.ones(5))
    with pytest.raises(DimensionMismatch):
        A.matvec(np.ones(3))


def test_from_coo_sums_duplicates():
    A = from_coo([0, 0, 1], [1, 1, 0], [2.0, 3.0, 5.0], 2)
    assert A.csr[0, 1] == 5.0
    assert A.csr[1, 0] == 5.0


def test_symmetry_error():
    sym = from_coo([0, 1], [1, 0], [2.0, 2.0], 2)
    assert sym.symmetry_error() == 0.0
    skew = SparseOperator(csr_matrix(np.array([[0.0, 1.0], [0.5, 0.0]])),
                          symmetric=False)
    assert skew.symmetry_error() > 0.0


def test_eliminate_dirichlet_structure():
    rng = np.random.default_rng(1)
    A = _random_spd(6, rng)
    mask = np.array([True, False, False, True, False, False])
    Ae = eliminate_dirichlet(A, mask)
    dense = Ae.csr.toarray()
    for i in np.flatnonzero(mask):
        row = np.zeros(6)
        row[i] = 1.0
        assert np.allclose(dense[i], row)
        assert np.allclose(dense[:, i], row)
    assert Ae.symmetry_error() <= 1e-14


def test_principal_eigenpair_disk(disk_mesh):
    K = fem.assemble_stiffness(disk_mesh)
    M = fem.assemble_mass(disk_mesh)
    Ke = eliminate_dirichlet(K, disk_mesh.boundary_mask)
    Me = eliminate_dirichlet(M, disk_mesh.boundary_mask)
    eig = principal_eigenpair(Ke, Me, disk_mesh.boundary_mask,
                              fem.lumped_mass(disk_mesh))
    assert eig.lam == pytest.approx(J01_SQ, rel=0.02)
    interior = ~disk_mesh.boundary_mask
    assert np.all(eig.phi[interior] > 0.0)
    assert np.all(eig.phi[disk_mesh.boundary_mask] == 0.0)
    # L1 normalization via the lumped mass
    assert fem.lumped_mass(disk_mesh) @ np.abs(eig.phi) == pytest.approx(
        1.0, rel=1e-12)


def test_eigenvalue_dilation_scaling(disk_mesh_coarse):
    """lambda_1 scales as R^-2 under dilation of the domain."""
    def lam(mesh):
        K = fem.assemble_stiffness(mesh)
        M = fem.assemble_mass(mesh)
        Ke = eliminate_dirichlet(K, mesh.boundary_mask)
        Me = eliminate_dirichlet(M, mesh.boundary_mask)
        return principal_eigenpair(Ke, Me, mesh.boundary_mask,
                                   fem.lumped_mass(mesh)).lam

    m1 = disk_mesh_coarse
    m2 = Mesh(nodes=m1.nodes * 2.0, triangles=m1.triangles,
              boundary_mask=m1.boundary_mask,
              boundary_edges=m1.boundary_edges,
              edge_normals=m1.edge_normals,
              edge_triangles=m1.edge_triangles, h=m1.h * 2.0)
    assert lam(m1) / lam(m2) == pytest.approx(4.0, rel=0.01)


def test_dot_l2(disk_mesh_coarse):
    M = fem.assemble_mass(disk_mesh_coarse)
    ones = np.ones(disk_mesh_coarse.n_nodes)
    assert dot_l2(M, ones, ones) == pytest.approx(disk_mesh_coarse.area(),
                                                  rel=1e-12)
