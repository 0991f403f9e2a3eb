"""Sparse symmetric linear algebra: SPD solves and the principal eigenpair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix, eye as sp_eye
from scipy.sparse.linalg import splu

from .errors import DimensionMismatch, NotConverged, NotSPD

# direct factorization below this many unknowns, preconditioned CG above
DIRECT_LIMIT = 200_000


@dataclass(frozen=True)
class SparseOperator:
    """Compressed-row symmetric sparse matrix."""

    csr: csr_matrix
    symmetric: bool = True

    def __post_init__(self):
        self.csr.sort_indices()

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    @property
    def row_offsets(self) -> np.ndarray:
        return self.csr.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.csr.indices

    @property
    def values(self) -> np.ndarray:
        return self.csr.data

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if len(x) != self.n:
            raise DimensionMismatch(f"vector length {len(x)} != {self.n}")
        return self.csr @ x

    def symmetry_error(self) -> float:
        """Max relative mismatch between A and A^T."""
        d = self.csr - self.csr.T
        scale = np.abs(self.csr.data).max() if self.csr.nnz else 1.0
        return float(np.abs(d.data).max() / scale) if d.nnz else 0.0


def from_coo(rows, cols, vals, n: int, symmetric: bool = True,
             drop_tol: float = 1e-300) -> SparseOperator:
    """Assemble duplicate-summing COO triplets into a SparseOperator."""
    m = csr_matrix((vals, (rows, cols)), shape=(n, n))
    m.sum_duplicates()
    m.data[np.abs(m.data) <= drop_tol] = 0.0
    m.eliminate_zeros()
    return SparseOperator(m, symmetric=symmetric)


def eliminate_dirichlet(A: SparseOperator, boundary_mask) -> SparseOperator:
    """Replace boundary rows and columns by identity, keeping symmetry."""
    mask = np.asarray(boundary_mask, dtype=bool)
    if len(mask) != A.n:
        raise DimensionMismatch("boundary mask length mismatch")
    free = ~mask
    d = np.where(free, 1.0, 0.0)
    from scipy.sparse import diags
    P = diags(d)
    out = (P @ A.csr @ P) + diags(np.where(mask, 1.0, 0.0))
    return SparseOperator(csr_matrix(out), symmetric=A.symmetric)


def _cg(A: csr_matrix, b: np.ndarray, rtol: float, max_iter: int):
    """Diagonally preconditioned conjugate gradients."""
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NotSPD("nonpositive diagonal entry")
    minv = 1.0 / diag
    x = np.zeros_like(b)
    r = b.copy()
    z = minv * r
    p = z.copy()
    rz = r @ z
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x
    for _ in range(max_iter):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise NotSPD("CG breakdown: nonpositive curvature")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= rtol * bnorm:
            return x
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NotConverged("CG exceeded iteration cap")


def spd_solve(A: SparseOperator, b: np.ndarray) -> np.ndarray:
    """Solve Ax = b for SPD A to relative residual 1e-10."""
    if len(b) != A.n:
        raise DimensionMismatch(f"rhs length {len(b)} != {A.n}")
    if np.any(A.csr.diagonal() <= 0):
        raise NotSPD("nonpositive diagonal entry")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    if A.n <= DIRECT_LIMIT:
        try:
            x = splu(A.csr.tocsc()).solve(b)
        except RuntimeError as exc:
            raise NotSPD(f"factorization breakdown: {exc}") from exc
    else:
        x = _cg(A.csr, b, rtol=1e-12, max_iter=20 * A.n)
    res = np.linalg.norm(A.csr @ x - b) / bnorm
    if res > 1e-10:
        # one step of iterative refinement, then re-check
        if A.n <= DIRECT_LIMIT:
            x += splu(A.csr.tocsc()).solve(b - A.csr @ x)
            res = np.linalg.norm(A.csr @ x - b) / bnorm
        if res > 1e-10:
            raise NotConverged(f"relative residual {res} above 1e-10")
    return x


@dataclass(frozen=True)
class EigenPair:
    """Principal Dirichlet eigenpair, L1-normalized positive eigenfunction."""

    lam: float
    phi: np.ndarray
    normalization: str = "L1"


def principal_eigenpair(K: SparseOperator, M: SparseOperator,
                        boundary_mask, lumped_mass: np.ndarray,
                        max_iter: int = 500) -> EigenPair:
    """Smallest generalized eigenvalue K phi = lam M phi on the free nodes.

    Inverse power iteration with a direct factorization of the free block
    of K; converged when successive Rayleigh quotients differ by less
    than 1e-12 relative.  ``lumped_mass`` (row sums of the full mass
    matrix) defines the L1 normalization.
    """
    mask = np.asarray(boundary_mask, dtype=bool)
    free = np.flatnonzero(~mask)
    Kf = K.csr[free][:, free].tocsc()
    Mf = M.csr[free][:, free].tocsr()
    lu = splu(Kf)
    rng = np.random.default_rng(1234)
    x = rng.random(len(free)) + 0.5
    lam_old = np.inf
    for _ in range(max_iter):
        y = lu.solve(Mf @ x)
        y /= np.linalg.norm(y)
        Ky = Kf @ y
        lam = (y @ Ky) / (y @ (Mf @ y))
        x = y
        res = np.linalg.norm(Ky - lam * (Mf @ y))
        if (abs(lam - lam_old) <= 1e-12 * abs(lam)
                and res <= 1e-9 * np.linalg.norm(Ky)):
            break
        lam_old = lam
    else:
        raise NotConverged("inverse power iteration stalled")
    phi = np.zeros(K.n)
    phi[free] = x
    if phi.sum() < 0:
        phi = -phi
    phi /= lumped_mass @ np.abs(phi)
    return EigenPair(lam=float(lam), phi=phi)


def dot_l2(M: SparseOperator, f: np.ndarray, g: np.ndarray) -> float:
    """Mesh L2 inner product f^T M g."""
    if len(f) != M.n or len(g) != M.n:
        raise DimensionMismatch("field length mismatch with mass matrix")
    return float(f @ (M.csr @ g))


def identity_operator(n: int) -> SparseOperator:
    return SparseOperator(csr_matrix(sp_eye(n, format="csr")))
