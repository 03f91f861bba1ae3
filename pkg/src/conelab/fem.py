"""P1 finite elements on simplicial meshes: assembly, solves, eigenpairs.

Surface meshes use the induced metric of each flat element, so the same
element formulas discretize both the Laplacian and the Laplace-Beltrami
operator.  Solves are deterministic (Jacobi-preconditioned CG with a fixed
iteration order); the smallest generalized eigenpairs come from shift-invert
Lanczos (ARPACK) with a fixed start vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConelabError, ConvergenceError
from .meshing import DIRICHLET_ZERO, SYMMETRY_PLANE


@dataclass
class SparseSym:
    """Symmetric sparse matrix stored as the lower triangle in CSR form."""

    n: int
    lower: sp.csr_matrix

    @classmethod
    def from_coo(cls, n, rows, cols, vals):
        keep = rows >= cols
        m = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
        m.sum_duplicates()
        return cls(n=n, lower=m)

    def full(self):
        strict = sp.tril(self.lower, k=-1)
        return (self.lower + strict.T).tocsr()

    def diagonal(self):
        return self.lower.diagonal()

    def validate(self):
        if not np.all(np.isfinite(self.lower.data)):
            raise ConelabError("matrix entries must be finite")
        if np.any(self.lower.diagonal() == 0.0):
            raise ConelabError("diagonal must be structurally present")
        return self


def _element_matrices(mesh):
    """Per-cell stiffness and mass matrices, vectorized over cells."""
    v = mesh.vertices[mesh.cells]
    md = mesh.manifold_dim
    m = len(mesh.cells)
    if md == 1:
        L = np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        ke = np.empty((m, 2, 2))
        ke[:, 0, 0] = ke[:, 1, 1] = 1.0 / L
        ke[:, 0, 1] = ke[:, 1, 0] = -1.0 / L
        me = np.empty((m, 2, 2))
        me[:, 0, 0] = me[:, 1, 1] = L / 3.0
        me[:, 0, 1] = me[:, 1, 0] = L / 6.0
        return ke, me
    if md == 2:
        # e_i: edge opposite vertex i, cyclic orientation
        e = np.stack([v[:, 2] - v[:, 1], v[:, 0] - v[:, 2], v[:, 1] - v[:, 0]], axis=1)
        if mesh.ambient_dim == 2:
            area = 0.5 * (e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
            area = np.abs(area)
        else:
            area = 0.5 * np.linalg.norm(np.cross(e[:, 1], e[:, 2]), axis=1)
        if np.any(area <= 0):
            raise ConelabError("degenerate cell in assembly")
        ke = np.einsum("mik,mjk->mij", e, e) / (4.0 * area)[:, None, None]
        me = (np.ones((3, 3)) + np.eye(3))[None, :, :] * (area / 12.0)[:, None, None]
        return ke, me
    d = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=1)
    vol = np.abs(np.linalg.det(d)) / 6.0
    if np.any(vol <= 0):
        raise ConelabError("degenerate cell in assembly")
    dinv = np.linalg.inv(d)
    g = np.transpose(dinv, (0, 2, 1))  # rows: gradients of lambda_1..3
    g0 = -np.sum(g, axis=1, keepdims=True)
    grads = np.concatenate([g0, g], axis=1)
    ke = np.einsum("mik,mjk->mij", grads, grads) * vol[:, None, None]
    me = (np.ones((4, 4)) + np.eye(4))[None, :, :] * (vol / 20.0)[:, None, None]
    return ke, me


def assemble(mesh):
    """Stiffness K, consistent mass M, and the zero-boundary vertex mask."""
    ke, me = _element_matrices(mesh)
    k = mesh.manifold_dim + 1
    n = mesh.n_vertices()
    rows = np.repeat(mesh.cells, k, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, k)).ravel()
    K = SparseSym.from_coo(n, rows, cols, ke.ravel()).validate()
    M = SparseSym.from_coo(n, rows, cols, me.ravel()).validate()
    mask = np.zeros(n, dtype=bool)
    for f, t in zip(mesh.boundary_facets, mesh.boundary_tags):
        if t in (DIRICHLET_ZERO, SYMMETRY_PLANE):
            mask[list(f)] = True
    return K, M, mask


def _as_csr(A):
    return A.full() if isinstance(A, SparseSym) else sp.csr_matrix(A)


def solve_spd(A, b, tol=1e-10, maxiter=None):
    """Jacobi-preconditioned conjugate gradients with a fixed iteration order.

    Raises if the matrix looks singular (an unmasked stiffness matrix) or if
    the relative residual does not reach tol.
    """
    A = _as_csr(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=float)
    ones = np.ones(n)
    scale = np.max(np.abs(A.data)) if A.nnz else 0.0
    if scale == 0.0 or np.max(np.abs(A @ ones)) < 1e-12 * scale:
        raise ConelabError("matrix is singular; apply a Dirichlet mask first")
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros(n)
    if maxiter is None:
        maxiter = max(1000, 40 * n)
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n)
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * norm_b:
            return x
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"CG did not converge: relative residual {np.linalg.norm(r) / norm_b:.3e} after {maxiter} iterations"
    )


@dataclass
class EigenResult:
    """Ascending generalized eigenpairs with residuals and cluster structure."""

    lambdas: np.ndarray
    vectors: np.ndarray  # (n, count), zero on masked dofs, M-orthonormal
    residuals: np.ndarray
    clusters: list  # lists of indices with relative gap < 1e-6


def eig_smallest(K, M, mask, count, tol=1e-9):
    """Smallest ``count`` eigenpairs of K v = lambda M v on unmasked dofs."""
    if count > 32:
        raise ValueError("count must be at most 32")
    Kf = _as_csr(K)
    Mf = _as_csr(M)
    free = np.flatnonzero(~np.asarray(mask, dtype=bool))
    if len(free) <= count:
        raise ConelabError("not enough free dofs for the requested count")
    A = Kf[free][:, free].tocsc()
    B = Mf[free][:, free].tocsc()
    v0 = np.ones(len(free))
    v0 /= np.sqrt(v0 @ (B @ v0))
    if len(free) < max(3 * count + 2, 25):
        lam, vec = scipy.linalg.eigh(A.toarray(), B.toarray())
        lam, vec = lam[:count], vec[:, :count]
    else:
        ncv = min(len(free), max(4 * count + 20, 40))
        lam, vec = spla.eigsh(A, k=count, M=B, sigma=0.0, which="LM", v0=v0,
                              ncv=ncv, maxiter=max(200, 10 * count * 20), tol=0)
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    vec = vec[:, order]

    # deterministic orthonormalization and sign convention
    Msolve = spla.factorized(B)
    for j in range(count):
        for i in range(j):
            vec[:, j] -= (vec[:, i] @ (B @ vec[:, j])) * vec[:, i]
        vec[:, j] /= np.sqrt(vec[:, j] @ (B @ vec[:, j]))
        imax = int(np.argmax(np.abs(vec[:, j])))
        if vec[imax, j] < 0:
            vec[:, j] = -vec[:, j]

    residuals = np.empty(count)
    for j in range(count):
        r = A @ vec[:, j] - lam[j] * (B @ vec[:, j])
        residuals[j] = np.sqrt(max(r @ Msolve(r), 0.0))
        if residuals[j] > tol * max(lam[j], 1.0):
            raise ConvergenceError(
                f"eigenpair {j} residual {residuals[j]:.3e} exceeds {tol:.1e} * lambda"
            )

    clusters, cur = [], [0]
    for j in range(1, count):
        if lam[j] - lam[j - 1] <= 1e-6 * max(abs(lam[j]), 1.0):
            cur.append(j)
        else:
            clusters.append(cur)
            cur = [j]
    clusters.append(cur)

    n = Kf.shape[0]
    full = np.zeros((n, count))
    full[free] = vec
    return EigenResult(lambdas=lam, vectors=full, residuals=residuals, clusters=clusters)
