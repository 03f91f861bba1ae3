"""Dirichlet spectra of cone cross-sections and derived spectral checks.

Eigenvalues are computed on the cross-section mesh (an arc for planar
sectors, a spherical cap otherwise) at a ladder of red refinements and
Richardson-extrapolated; eigenvectors are kept on the finest mesh,
mass-orthonormal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConelabError
from .fem import assemble, eig_smallest
from .geometry import EllipticCone3D, HalfSpace, Sector2D
from .meshing import mesh_arc_interval, mesh_cap, refine


def characteristic_constant(lam, d):
    """Positive root m of m*(m + d - 2) = lam."""
    if lam <= 0:
        raise ValueError("eigenvalue must be positive")
    if d < 2:
        raise ValueError("dimension must be at least 2")
    return 0.5 * (-(d - 2) + math.sqrt((d - 2) ** 2 + 4.0 * lam))


@dataclass
class SpectrumResult:
    """Cross-section spectrum with characteristic constants."""

    cone: object
    dim: int  # ambient dimension of the cone
    bisect: object
    lambdas: np.ndarray  # Richardson-extrapolated, ascending
    ms: np.ndarray
    mesh: object  # finest cross-section mesh
    vectors: np.ndarray  # nodal eigenfunctions on the finest mesh (M-orthonormal)
    residuals: np.ndarray
    level_lambdas: list  # raw eigenvalues per refinement level
    clusters: list

    @property
    def count(self):
        return len(self.lambdas)

    def interpolator(self):
        """Callable mapping unit cross-section points to mode values.

        Points outside the (possibly bisected) cross-section give zero.
        """
        return _make_interpolator(self.mesh, self.vectors)


def _cross_section_mesh(cone, bisect, h):
    if isinstance(cone, Sector2D):
        if bisect is not None:
            raise ValueError("sectors have a 1-D cross-section; bisect does not apply")
        return mesh_arc_interval(cone.opening, h)
    if isinstance(cone, HalfSpace) and cone.dim == 2:
        if bisect is not None:
            raise ValueError("2-D cross-sections cannot be bisected")
        return mesh_arc_interval(math.pi, h)
    return mesh_cap(cone, bisect=bisect, h=h)


def dirichlet_spectrum(cone, bisect=None, count=6, h=0.1, refinements=2, tol=1e-9):
    """Cross-section Dirichlet spectrum with Richardson extrapolation.

    Runs the eigensolver on ``refinements + 1`` nested meshes; the reported
    eigenvalues extrapolate the last two levels (P1 converges at order h^2),
    while eigenvectors live on the finest mesh.
    """
    if count > 16:
        raise ValueError("count must be at most 16")
    mesh = _cross_section_mesh(cone, bisect, h)
    levels = []
    result = None
    for lev in range(refinements + 1):
        K, M, mask = assemble(mesh)
        result = eig_smallest(K, M, mask, count, tol=tol)
        levels.append(result.lambdas.copy())
        if lev < refinements:
            mesh = refine(mesh)
    if len(levels) >= 2:
        lam = levels[-1] + (levels[-1] - levels[-2]) / 3.0
    else:
        lam = levels[-1]
    d = cone.dim
    ms = np.array([characteristic_constant(x, d) for x in lam])
    return SpectrumResult(
        cone=cone,
        dim=d,
        bisect=bisect,
        lambdas=lam,
        ms=ms,
        mesh=mesh,
        vectors=result.vectors,
        residuals=result.residuals,
        level_lambdas=levels,
        clusters=result.clusters,
    )


def _make_interpolator(mesh, vectors):
    if mesh.manifold_dim == 1:
        phi_nodes = np.arctan2(mesh.vertices[:, 1], mesh.vertices[:, 0])
        order = np.argsort(phi_nodes)
        phi_sorted = phi_nodes[order]
        vec_sorted = vectors[order]

        def interp(points):
            points = np.atleast_2d(np.asarray(points, dtype=float))
            phi = np.arctan2(points[:, 1], points[:, 0])
            out = np.zeros((len(points), vectors.shape[1]))
            ok = (phi >= phi_sorted[0]) & (phi <= phi_sorted[-1])
            for j in range(vectors.shape[1]):
                out[ok, j] = np.interp(phi[ok], phi_sorted, vec_sorted[:, j])
            return out

        return interp

    tree = cKDTree(mesh.vertices[mesh.cells].mean(axis=1))
    cells = mesh.cells
    verts = mesh.vertices

    def interp(points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((len(points), vectors.shape[1]))
        k = min(24, len(cells))
        _, cand = tree.query(points, k=k)
        cand = np.atleast_2d(cand)
        for i, p in enumerate(points):
            for c in cand[i]:
                tri = cells[c]
                a, b, cc = verts[tri[0]], verts[tri[1]], verts[tri[2]]
                bary = _tri_bary(p, a, b, cc)
                if bary is not None:
                    out[i] = bary @ vectors[tri]
                    break
        return out

    return interp


def _tri_bary(p, a, b, c, tol=5e-2):
    """Barycentric coordinates of p projected onto triangle (a, b, c)."""
    u = b - a
    v = c - a
    w = p - a
    uu, vv, uv = u @ u, v @ v, u @ v
    wu, wv = w @ u, w @ v
    den = uu * vv - uv * uv
    if den <= 0:
        return None
    s = (vv * wu - uv * wv) / den
    t = (uu * wv - uv * wu) / den
    if s >= -tol and t >= -tol and s + t <= 1.0 + tol:
        lam = np.array([1.0 - s - t, s, t])
        return np.clip(lam, 0.0, 1.0) / np.sum(np.clip(lam, 0.0, 1.0))
    return None


def sup_bound_check(spectrum, q):
    """Empirical constants sup|psi_k| / lambda_k^q over the computed modes."""
    d = spectrum.dim
    if q <= (d - 1) / 4.0:
        raise ValueError(f"exponent must exceed (d-1)/4 = {(d - 1) / 4.0}")
    sups = np.max(np.abs(spectrum.vectors), axis=0)
    ratios = sups / spectrum.lambdas ** q
    return float(np.max(ratios)), ratios


def weyl_check(spectrum):
    """min_k lambda_k * k^(-2/(d-1)) over the computed spectrum."""
    if spectrum.count < 4:
        raise ValueError("need at least 4 eigenvalues")
    k = np.arange(1, spectrum.count + 1, dtype=float)
    vals = spectrum.lambdas * k ** (-2.0 / (spectrum.dim - 1))
    return float(np.min(vals))


@dataclass
class SeriesTail:
    """Partial sums of sum_k mu^sqrt(lambda_k) with an explicit tail bound."""

    mu: float
    partial_sums: np.ndarray  # over the computed eigenvalues
    extrapolated_sum: float  # Weyl-model terms count < k <= K
    closure_bound: float  # geometric bound on everything beyond K
    tail_bound: float  # extrapolated_sum + closure_bound


def series_tail(spectrum, mu, extrapolate_to=4096):
    """Partial sums of the spectral series and a tail bound past the data.

    Terms beyond the computed spectrum are bounded using the empirical Weyl
    constant (lambda_k >= c k^(2/(d-1))), summed explicitly up to
    ``extrapolate_to`` and closed geometrically beyond it.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    terms = mu ** np.sqrt(spectrum.lambdas)
    partial = np.cumsum(terms)
    c = weyl_check(spectrum)
    p = 2.0 / (spectrum.dim - 1)
    ks = np.arange(spectrum.count + 1, extrapolate_to + 1, dtype=float)
    model = mu ** np.sqrt(c * ks ** p)
    extr = float(np.sum(model))
    kK = float(extrapolate_to)
    last = mu ** math.sqrt(c * (kK + 1) ** p)
    ratio = mu ** (math.sqrt(c) * ((kK + 2) ** (p / 2.0) - (kK + 1) ** (p / 2.0)))
    closure = last / (1.0 - ratio) if ratio < 1.0 else math.inf
    return SeriesTail(
        mu=mu,
        partial_sums=partial,
        extrapolated_sum=extr,
        closure_bound=closure,
        tail_bound=extr + closure,
    )


@dataclass
class BisectedSplit:
    lambda_x: float
    lambda_y: float
    m_x: float
    m_y: float
    gap: float
    discretization_error: float


def bisected_split(cone, h=0.1, refinements=2, tol=1e-9):
    """First eigenvalues of the {x>0}- and {y>0}-bisected cross-sections.

    For a cone that opens wider along x than along y the x-bisected mode is
    the lower one; the ordering is asserted once it exceeds the estimated
    discretization error.
    """
    if not isinstance(cone, (EllipticCone3D, HalfSpace)) or cone.dim != 3:
        raise ValueError("bisected_split needs a 3-D cone")
    sx = dirichlet_spectrum(cone, bisect="x", count=1, h=h, refinements=refinements, tol=tol)
    sy = dirichlet_spectrum(cone, bisect="y", count=1, h=h, refinements=refinements, tol=tol)
    lx, ly = float(sx.lambdas[0]), float(sy.lambdas[0])
    err = abs(sx.level_lambdas[-1][0] - lx) + abs(sy.level_lambdas[-1][0] - ly)
    if isinstance(cone, EllipticCone3D) and cone.x_half_angle > cone.y_half_angle:
        if not lx < ly - err:
            raise ConelabError(
                f"splitting order: lambda_x={lx:.6f} not below lambda_y={ly:.6f} (err {err:.1e})"
            )
    return BisectedSplit(
        lambda_x=lx,
        lambda_y=ly,
        m_x=characteristic_constant(lx, 3),
        m_y=characteristic_constant(ly, 3),
        gap=ly - lx,
        discretization_error=err,
    )
