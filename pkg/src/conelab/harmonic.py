"""Harmonic Dirichlet solves and field evaluation with odd/zero extension.

A FieldSolution wraps a P1 solve on a (half-)domain mesh together with the
bookkeeping needed to evaluate it as a function on all of space: odd
reflection across the symmetry plane used in the solve, and extension by
zero outside the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConelabError
from .fem import assemble, solve_spd
from .meshing import DIRICHLET_ONE, DIRICHLET_ZERO, SPHERE, SYMMETRY_PLANE
from .modes import modes_for


@dataclass
class _Locator:
    """Vectorized point location by candidate search over cell centroids."""

    mesh: object
    tree: object
    v0: np.ndarray
    binv: np.ndarray
    k: int = 24

    @classmethod
    def build(cls, mesh):
        cells = mesh.cells
        verts = mesh.vertices
        v = verts[cells]
        v0 = v[:, 0]
        edges = np.stack([v[:, i] - v0 for i in range(1, mesh.manifold_dim + 1)], axis=2)
        binv = np.linalg.inv(edges)
        tree = cKDTree(v.mean(axis=1))
        return cls(mesh=mesh, tree=tree, v0=v0, binv=binv)

    def locate(self, points, tol=1e-9):
        """Cells and barycentric weights; cell -1 marks location failure."""
        points = np.atleast_2d(points)
        n = len(points)
        k = min(self.k, len(self.mesh.cells))
        _, cand = self.tree.query(points, k=k)
        cand = cand.reshape(n, k)
        out_cell = np.full(n, -1, dtype=np.int64)
        nb = self.mesh.manifold_dim + 1
        out_bary = np.zeros((n, nb))
        undone = np.arange(n)
        best_def = np.full(n, -np.inf)
        for j in range(k):
            if len(undone) == 0:
                break
            c = cand[undone, j]
            rel = points[undone] - self.v0[c]
            lam = np.einsum("nij,ni->nj", self.binv[c], rel)
            lam0 = 1.0 - lam.sum(axis=1)
            full = np.column_stack([lam0, lam])
            deficit = full.min(axis=1)
            ok = deficit >= -tol
            idx = undone[ok]
            out_cell[idx] = c[ok]
            fok = full[ok]
            fok = np.clip(fok, 0.0, None)
            out_bary[idx] = fok / fok.sum(axis=1, keepdims=True)
            # remember the least-bad candidate for a relaxed second pass
            improve = deficit > best_def[undone]
            best_def[undone[improve]] = deficit[improve]
            undone = undone[~ok]
        return out_cell, out_bary, undone


@dataclass
class FieldSolution:
    """Nodal P1 field on a mesh, evaluated with odd and zero extension."""

    mesh: object
    values: np.ndarray
    domain: object  # full domain (both halves) for the zero extension
    odd_plane: object = None  # None, 'x' or 'y'
    smooth = False

    def __post_init__(self):
        self._locator = _Locator.build(self.mesh)
        cells = self.mesh.cells
        v = self.mesh.vertices[cells]
        if self.mesh.manifold_dim == self.mesh.ambient_dim:
            edges = np.stack([v[:, i] - v[:, 0] for i in range(1, v.shape[1])], axis=2)
            binv = np.linalg.inv(edges)
            dv = np.stack([self.values[cells[:, i]] - self.values[cells[:, 0]]
                           for i in range(1, v.shape[1])], axis=1)
            self._cell_grad = np.einsum("nij,nj->ni", np.transpose(binv, (0, 2, 1)), dv)
        else:
            self._cell_grad = None

    @property
    def dim(self):
        return self.mesh.ambient_dim

    def contains(self, points):
        return np.atleast_1d(self.domain.contains(points))

    def _mirror(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        sign = np.ones(len(points))
        if self.odd_plane is not None:
            ax = {"x": 0, "y": 1}[self.odd_plane]
            neg = points[:, ax] < 0
            points[neg, ax] = -points[neg, ax]
            sign[neg] = -1.0
        return points, sign

    def value(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.contains(points)
        out = np.zeros(len(points))
        if not np.any(inside):
            return out
        q, sign = self._mirror(points[inside])
        cells, bary, missing = self._locator.locate(q)
        vals = np.zeros(len(q))
        ok = cells >= 0
        if np.any(ok):
            vals[ok] = np.einsum("nj,nj->n", bary[ok], self.values[self.mesh.cells[cells[ok]]])
        if len(missing):
            # inside the exact domain but outside the inscribed discrete one:
            # zero extension applies if the point is within the local mesh
            # sag of the boundary, otherwise location genuinely failed
            bd = np.atleast_1d(self.domain.boundary_distance(q[missing]))
            radii = np.linalg.norm(q[missing], axis=1)
            scale = np.array([self._local_scale(r) for r in radii])
            if np.any(bd > np.maximum(0.75 * scale, 1e-9)):
                worst = float(np.max(bd - 0.75 * scale))
                raise ConelabError(f"point location failed {worst:.2e} beyond boundary tolerance")
        out[inside] = vals * sign
        return out

    def grad(self, points):
        if self._cell_grad is None:
            raise ConelabError("gradients are available on volume meshes only")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.contains(points)
        out = np.zeros_like(points)
        if not np.any(inside):
            return out
        q, sign = self._mirror(points[inside])
        cells, _, missing = self._locator.locate(q)
        g = np.zeros_like(q)
        ok = cells >= 0
        g[ok] = self._cell_grad[cells[ok]]
        if self.odd_plane is not None:
            ax = {"x": 0, "y": 1}[self.odd_plane]
            mirrored = sign < 0
            g[mirrored] = -g[mirrored]
            g[mirrored, ax] = -g[mirrored, ax]
        out[inside] = g
        return out

    def _local_scale(self, r):
        if self.mesh.local_scale is not None:
            return self.mesh.local_scale(r)
        return float(np.max(self.mesh.edge_lengths()))

    def max_principle_violation(self):
        """How far nodal values leave [0, 1]; ~1e-8 for well-posed 0/1 data."""
        return float(max(np.max(self.values) - 1.0, -np.min(self.values), 0.0))


def solve_mixed(mesh, domain=None, odd_plane=None, sphere_data=1.0, tol=1e-10):
    """P1 solve of the Laplace equation with tagged boundary data.

    DirichletZero / SymmetryPlane facets carry 0; DirichletOne / Sphere
    facets carry ``sphere_data`` (a constant or a callable of position).
    Vertices shared between the two sets get 0, erring on the zero side.
    """
    K, M, zero_mask = assemble(mesh)
    one_mask = np.zeros(mesh.n_vertices(), dtype=bool)
    for f, t in zip(mesh.boundary_facets, mesh.boundary_tags):
        if t in (DIRICHLET_ONE, SPHERE):
            one_mask[list(f)] = True
    if not np.any(one_mask):
        raise ConelabError("mesh has no data (DirichletOne or Sphere) facets")
    one_mask &= ~zero_mask
    fixed = zero_mask | one_mask
    values = np.zeros(mesh.n_vertices())
    if callable(sphere_data):
        values[one_mask] = sphere_data(mesh.vertices[one_mask])
    else:
        values[one_mask] = float(sphere_data)
    Kf = K.full()
    free = np.flatnonzero(~fixed)
    A = Kf[free][:, free]
    b = -Kf[free][:, fixed] @ values[fixed]
    values[free] = solve_spd(A, b, tol=tol)
    if domain is None:
        domain = _domain_of_mesh(mesh)
    return FieldSolution(mesh=mesh, values=values, domain=domain, odd_plane=odd_plane)


def _domain_of_mesh(mesh):
    raise ConelabError("pass the CsgDomain the mesh discretizes to solve_mixed")


def synthesize_homogeneous(cone, coeffs, spectrum=None):
    """Evaluator for sum_j c_j |x|^(m_j) psi_j(x/|x|), zero outside the cone.

    Without a spectrum the analytic modes of the model cone are used; with
    one, the FEM cross-section modes are interpolated from the cap mesh.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if spectrum is None:
        basis = modes_for(cone, count=max(len(coeffs), 1))
        return basis.field(coeffs)
    if len(coeffs) > spectrum.count:
        raise ValueError("more coefficients than spectrum modes")
    return SpectrumField(cone=cone, spectrum=spectrum, coeffs=coeffs)


@dataclass
class SpectrumField:
    """Homogeneous combination of FEM cross-section modes."""

    cone: object
    spectrum: object
    coeffs: np.ndarray
    smooth = False

    def __post_init__(self):
        self._interp = self.spectrum.interpolator()

    @property
    def dim(self):
        return self.cone.dim

    def contains(self, points):
        return np.atleast_1d(self.cone.contains(points))

    def value(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(points, axis=1)
        out = np.zeros(len(points))
        ok = (r > 0) & self.contains(points)
        if not np.any(ok):
            return out
        unit = points[ok] / r[ok, None]
        psi = self._interp(unit)
        acc = np.zeros(np.sum(ok))
        for j, c in enumerate(self.coeffs):
            if c != 0.0:
                acc += c * r[ok] ** self.spectrum.ms[j] * psi[:, j]
        out[ok] = acc
        return out

    def grad(self, points, step_frac=1e-6):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros_like(points)
        r = np.linalg.norm(points, axis=1)
        h = np.maximum(r, 1e-12) * step_frac
        for ax in range(points.shape[1]):
            dp = np.zeros_like(points)
            dp[:, ax] = h
            out[:, ax] = (self.value(points + dp) - self.value(points - dp)) / (2.0 * h)
        return out
