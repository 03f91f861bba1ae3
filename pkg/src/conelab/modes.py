"""Analytic homogeneous-harmonic mode bases on the model cones.

On a sector of opening ``w`` the modes are r^(k*pi/w) sin(k*pi*phi/w); on
the 3-D half-space they are the solid harmonics that vanish on {z = 0},
listed in ascending eigenvalue order.  Cross-section traces are normalized
to unit L2 norm on the cross-section, so quadrature coefficients against
them are directly comparable across bases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import HalfSpace, Sector2D

# solid harmonics odd in z, as (degree, value, gradient) triples
_POLY_MODES = [
    (1, lambda x, y, z: z,
        lambda x, y, z: (0 * x, 0 * y, 1 + 0 * z)),
    (2, lambda x, y, z: x * z,
        lambda x, y, z: (z, 0 * y, x)),
    (2, lambda x, y, z: y * z,
        lambda x, y, z: (0 * x, z, y)),
    (3, lambda x, y, z: 0.5 * z * (2 * z * z - 3 * x * x - 3 * y * y),
        lambda x, y, z: (-3 * x * z, -3 * y * z, 3 * z * z - 1.5 * (x * x + y * y))),
    (3, lambda x, y, z: (x * x - y * y) * z,
        lambda x, y, z: (2 * x * z, -2 * y * z, x * x - y * y)),
    (3, lambda x, y, z: 2 * x * y * z,
        lambda x, y, z: (2 * y * z, 2 * x * z, 2 * x * y)),
    (4, lambda x, y, z: x * z * (4 * z * z - 3 * (x * x + y * y)),
        lambda x, y, z: (
            z * (4 * z * z - 9 * x * x - 3 * y * y),
            -6 * x * y * z,
            x * (12 * z * z - 3 * (x * x + y * y)),
        )),
    (4, lambda x, y, z: y * z * (4 * z * z - 3 * (x * x + y * y)),
        lambda x, y, z: (
            -6 * x * y * z,
            z * (4 * z * z - 3 * x * x - 9 * y * y),
            y * (12 * z * z - 3 * (x * x + y * y)),
        )),
    (4, lambda x, y, z: z * (x ** 3 - 3 * x * y * y),
        lambda x, y, z: (3 * z * (x * x - y * y), -6 * x * y * z, x ** 3 - 3 * x * y * y)),
    (4, lambda x, y, z: z * (3 * x * x * y - y ** 3),
        lambda x, y, z: (6 * x * y * z, 3 * z * (x * x - y * y), 3 * x * x * y - y ** 3)),
]


@dataclass
class ModeBasis:
    """Ascending homogeneous harmonic modes on a model cone."""

    cone: object
    lambdas: np.ndarray
    degrees: np.ndarray  # homogeneity degree m_j
    _eval_unit: object  # callable(points) -> (n, k) cross-section values
    _field_value: object  # callable(coeffs, points) -> values
    _field_grad: object

    @property
    def count(self):
        return len(self.lambdas)

    def eval_unit(self, points):
        """Mode traces at unit-sphere points, zero-extended outside the cone."""
        return self._eval_unit(np.atleast_2d(np.asarray(points, dtype=float)))

    def field(self, coeffs):
        """Evaluator for sum_j c_j r^(m_j) psi_j with zero extension."""
        coeffs = np.asarray(coeffs, dtype=float)
        if len(coeffs) > self.count:
            raise ValueError("more coefficients than available modes")
        return ConeField(self, coeffs)


@dataclass
class ConeField:
    """Homogeneous-mode combination on a cone, zero extended outside."""

    basis: ModeBasis
    coeffs: np.ndarray
    smooth = True

    @property
    def dim(self):
        return self.basis.cone.dim

    def contains(self, points):
        return np.atleast_1d(self.basis.cone.contains(points))

    def value(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.basis._field_value(self.coeffs, points)

    def grad(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.basis._field_grad(self.coeffs, points)


def sector_modes(opening, count=12):
    """Sine modes of a planar sector (exact)."""
    ks = np.arange(1, count + 1)
    ms = ks * math.pi / opening
    lams = ms ** 2
    norm = math.sqrt(2.0 / opening)

    def eval_unit(points):
        phi = np.arctan2(points[:, 1], points[:, 0])
        inside = (phi > 0) & (phi < opening)
        out = norm * np.sin(np.outer(phi, ms) )
        out[~inside] = 0.0
        return out

    def field_value(coeffs, points):
        r = np.linalg.norm(points, axis=1)
        phi = np.arctan2(points[:, 1], points[:, 0])
        inside = (phi > 0) & (phi < opening) & (r > 0)
        out = np.zeros(len(points))
        rr = r[inside]
        pp = phi[inside]
        acc = np.zeros(len(rr))
        for c, m in zip(coeffs, ms):
            if c != 0.0:
                acc += c * norm * rr ** m * np.sin(m * pp)
        out[inside] = acc
        return out

    def field_grad(coeffs, points):
        r = np.linalg.norm(points, axis=1)
        phi = np.arctan2(points[:, 1], points[:, 0])
        inside = (phi > 0) & (phi < opening) & (r > 0)
        out = np.zeros_like(points)
        rr = r[inside]
        pp = phi[inside]
        ur = np.zeros(len(rr))
        ut = np.zeros(len(rr))
        for c, m in zip(coeffs, ms):
            if c != 0.0:
                ur += c * norm * m * rr ** (m - 1) * np.sin(m * pp)
                ut += c * norm * m * rr ** (m - 1) * np.cos(m * pp)
        cosp, sinp = np.cos(pp), np.sin(pp)
        out[inside, 0] = ur * cosp - ut * sinp
        out[inside, 1] = ur * sinp + ut * cosp
        return out

    cone = Sector2D(opening)
    return ModeBasis(cone, lams, ms, eval_unit, field_value, field_grad)


def half_plane_modes(count=12):
    """Modes of the 2-D half-space {y > 0} (a sector of opening pi)."""
    basis = sector_modes(math.pi, count)
    return ModeBasis(HalfSpace(2), basis.lambdas, basis.degrees,
                     basis._eval_unit, basis._field_value, basis._field_grad)


def _hemisphere_norms():
    """L2(hemisphere) norms of the raw polynomial modes, by quadrature."""
    from numpy.polynomial.legendre import leggauss

    xs, ws = leggauss(64)
    # z in (0, 1): substitute z = (1+x)/2
    z = 0.5 * (xs + 1.0)
    wz = 0.5 * ws
    th = np.linspace(0.0, 2.0 * math.pi, 256, endpoint=False)
    dth = 2.0 * math.pi / 256
    zz, tt = np.meshgrid(z, th, indexing="ij")
    s = np.sqrt(np.maximum(1.0 - zz ** 2, 0.0))
    x = s * np.cos(tt)
    y = s * np.sin(tt)
    wgt = np.broadcast_to((wz * dth)[:, None], zz.shape)
    norms = []
    for _, f, _ in _POLY_MODES:
        vals = f(x, y, zz)
        norms.append(math.sqrt(float(np.sum(vals * vals * wgt))))
    return np.asarray(norms)


_HEMI_NORMS = None


def half_space_modes(count=10, normalized=True):
    """Solid-harmonic modes of the 3-D half-space {z > 0}.

    With ``normalized`` the cross-section traces have unit L2(hemisphere)
    norm; otherwise the raw polynomials (z, xz, yz, ...) are used.
    """
    global _HEMI_NORMS
    if count > len(_POLY_MODES):
        raise ValueError(f"only {len(_POLY_MODES)} half-space modes are tabulated")
    if _HEMI_NORMS is None:
        _HEMI_NORMS = _hemisphere_norms()
    scale = 1.0 / _HEMI_NORMS if normalized else np.ones(len(_POLY_MODES))
    degs = np.array([m[0] for m in _POLY_MODES[:count]], dtype=float)
    lams = degs * (degs + 1.0)

    def eval_unit(points):
        x, y, z = points[:, 0], points[:, 1], points[:, 2]
        out = np.zeros((len(points), count))
        inside = z > 0
        for j in range(count):
            out[inside, j] = _POLY_MODES[j][1](x[inside], y[inside], z[inside]) * scale[j]
        return out

    def field_value(coeffs, points):
        x, y, z = points[:, 0], points[:, 1], points[:, 2]
        inside = z > 0
        out = np.zeros(len(points))
        for j, c in enumerate(coeffs):
            if c != 0.0:
                out[inside] += c * scale[j] * _POLY_MODES[j][1](x[inside], y[inside], z[inside])
        return out

    def field_grad(coeffs, points):
        x, y, z = points[:, 0], points[:, 1], points[:, 2]
        inside = z > 0
        out = np.zeros_like(points)
        for j, c in enumerate(coeffs):
            if c != 0.0:
                gx, gy, gz = _POLY_MODES[j][2](x[inside], y[inside], z[inside])
                out[inside, 0] += c * scale[j] * gx
                out[inside, 1] += c * scale[j] * gy
                out[inside, 2] += c * scale[j] * gz
        return out

    return ModeBasis(HalfSpace(3), lams, degs, eval_unit, field_value, field_grad)


def modes_for(cone, count=10, normalized=True):
    """Analytic mode basis for a model cone (sector or half-space)."""
    if isinstance(cone, Sector2D):
        return sector_modes(cone.opening, count)
    if isinstance(cone, HalfSpace):
        return half_plane_modes(count) if cone.dim == 2 else half_space_modes(count, normalized)
    raise ValueError("analytic modes exist only on sectors and half-spaces")
