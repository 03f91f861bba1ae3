"""Parametric cones, placed cones, and clipped intersections.

All domains here are built from three convex cone primitives (a planar
sector, a half-space, an elliptic cone) that can be rotated, shifted along
their axis, intersected with each other, and clipped to a ball.  Membership,
exact surface distances, boundary sampling, and Hausdorff comparisons
against a reference cone are provided on top of that representation.

Conventions: an ``EllipticCone3D`` with half-angles ``(ax, ay)`` is the set
``z > sqrt((x/tan ax)^2 + (y/tan ay)^2)``, i.e. ``ax`` is the opening
half-angle measured from the z-axis in the x-z plane and ``ay`` the one in
the y-z plane.  A wider x-opening (``ax > ay``) makes the spherical
cross-section elongated along x.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConelabError

_ROT_TOL = 1e-12


def _as_points(p, dim):
    """Coerce to an (n, dim) float array; remember if input was a single point."""
    a = np.asarray(p, dtype=float)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if a.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("points must be finite")
    return a, single


def _scalarize(values, single):
    return values[0] if single else values


@dataclass(frozen=True)
class Sector2D:
    """Planar sector {(r, phi): r > 0, 0 < phi < opening}."""

    opening: float

    dim = 2

    def __post_init__(self):
        if not 0.0 < self.opening < 2.0 * math.pi:
            raise ValueError("sector opening must lie in (0, 2*pi)")

    def contains(self, p):
        a, single = _as_points(p, 2)
        phi = np.arctan2(a[:, 1], a[:, 0])
        r = np.hypot(a[:, 0], a[:, 1])
        inside = (r > 0) & (phi > 0) & (phi < self.opening)
        return _scalarize(inside, single)

    def surface_distance(self, p, max_radius=None):
        """Exact distance to the two boundary rays (optionally clipped to B_r)."""
        a, single = _as_points(p, 2)
        d = np.minimum(
            _dist_to_ray(a, np.array([1.0, 0.0]), max_radius),
            _dist_to_ray(a, np.array([math.cos(self.opening), math.sin(self.opening)]), max_radius),
        )
        return _scalarize(d, single)

    def surface_points(self, radius, n):
        """Quasi-uniform samples of the boundary rays inside B_radius."""
        s = (np.arange(n) + 0.5) / n * radius
        u0 = np.array([1.0, 0.0])
        u1 = np.array([math.cos(self.opening), math.sin(self.opening)])
        return np.vstack([np.outer(s, u0), np.outer(s, u1)])

    def to_json(self):
        return {"kind": "sector", "opening": self.opening}


@dataclass(frozen=True)
class HalfSpace:
    """Half-space {x_d > 0} in ambient dimension d (2 or 3)."""

    dim: int = 3

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("half-space dimension must be 2 or 3")

    def contains(self, p):
        a, single = _as_points(p, self.dim)
        return _scalarize(a[:, -1] > 0, single)

    def surface_distance(self, p, max_radius=None):
        a, single = _as_points(p, self.dim)
        d = np.abs(a[:, -1])
        if max_radius is not None:
            horiz = np.linalg.norm(a[:, :-1], axis=1)
            over = np.maximum(horiz - max_radius, 0.0)
            d = np.sqrt(d * d + over * over)
        return _scalarize(d, single)

    def surface_points(self, radius, n):
        if self.dim == 2:
            s = (np.arange(n) + 0.5) / n * radius
            return np.vstack([np.column_stack([s, 0 * s]), np.column_stack([-s, 0 * s])])
        k = max(4, int(math.isqrt(n)))
        s = (np.arange(k) + 0.5) / k * radius
        th = np.linspace(0.0, 2.0 * math.pi, 4 * k, endpoint=False)
        ss, tt = np.meshgrid(s, th)
        return np.column_stack([(ss * np.cos(tt)).ravel(), (ss * np.sin(tt)).ravel(), np.zeros(ss.size)])

    def to_json(self):
        return {"kind": "half_space", "dim": self.dim}


@dataclass(frozen=True)
class EllipticCone3D:
    """Elliptic cone z > sqrt((x/tan ax)^2 + (y/tan ay)^2)."""

    x_half_angle: float
    y_half_angle: float

    dim = 3

    def __post_init__(self):
        for a in (self.x_half_angle, self.y_half_angle):
            if not 0.0 < a < math.pi / 2.0:
                raise ValueError("elliptic cone half-angles must lie in (0, pi/2)")

    @property
    def _tangents(self):
        return math.tan(self.x_half_angle), math.tan(self.y_half_angle)

    def contains(self, p):
        a, single = _as_points(p, 3)
        tx, ty = self._tangents
        rad = np.sqrt((a[:, 0] / tx) ** 2 + (a[:, 1] / ty) ** 2)
        return _scalarize(a[:, 2] > rad, single)

    def generator(self, theta):
        """Unit direction of the surface generator at azimuth theta."""
        tx, ty = self._tangents
        theta = np.asarray(theta, dtype=float)
        v = np.stack([tx * np.cos(theta), ty * np.sin(theta), np.ones_like(theta)], axis=-1)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def cap_polar_angle(self, theta):
        """Polar angle of the unit-sphere rim at azimuth theta."""
        tx, ty = self._tangents
        theta = np.asarray(theta, dtype=float)
        cot = np.sqrt((np.cos(theta) / tx) ** 2 + (np.sin(theta) / ty) ** 2)
        return np.arctan2(1.0, cot)

    def surface_distance(self, p, max_radius=None, n_scan=1024):
        """Exact distance to the cone surface by azimuth scan plus polish.

        The nonconvex projection onto the generator fan is resolved with a
        dense scan followed by parabolic refinement, which plays the role of
        restarted damped Newton on this 1-D problem.
        """
        a, single = _as_points(p, 3)
        theta = np.linspace(0.0, 2.0 * math.pi, n_scan, endpoint=False)
        d2 = _segment_dist2(a, self.generator(theta), max_radius)
        k = np.argmin(d2, axis=1)
        th0 = theta[k]
        w = 2.0 * math.pi / n_scan
        for _ in range(8):
            cand = np.stack([th0 - w, th0, th0 + w], axis=0)
            vals = np.stack(
                [_segment_dist2_at(a, self.generator(c), max_radius) for c in cand], axis=0
            )
            th0, _ = _parabolic_min(cand, vals)
            w /= 6.0
        d_final = np.sqrt(_segment_dist2_at(a, self.generator(th0), max_radius))
        return _scalarize(d_final, single)

    def surface_points(self, radius, n):
        k = max(8, int(math.isqrt(n)))
        theta = np.linspace(0.0, 2.0 * math.pi, 4 * k, endpoint=False)
        u = self.generator(theta)
        s = (np.arange(k) + 0.5) / k * radius
        pts = (s[:, None, None] * u[None, :, :]).reshape(-1, 3)
        return pts[np.linalg.norm(pts, axis=1) <= radius]

    def to_json(self):
        return {
            "kind": "elliptic_cone",
            "x_half_angle": self.x_half_angle,
            "y_half_angle": self.y_half_angle,
        }


def _dist_to_ray(points, u, max_radius):
    """Distance from points to the ray {s*u : 0 <= s <= max_radius (or inf)}."""
    t = points @ u
    t = np.clip(t, 0.0, max_radius if max_radius is not None else np.inf)
    return np.linalg.norm(points - np.outer(t, u), axis=1)

def _segment_dist2(points, units, max_radius):
    """Squared distances from (n,3) points to rays along rows of (m,3) units."""
    t = points @ units.T
    t = np.clip(t, 0.0, max_radius if max_radius is not None else np.inf)
    p2 = np.sum(points * points, axis=1)[:, None]
    d2 = p2 - 2.0 * t * (points @ units.T) + t * t
    # numerical floor: exact formula is |p|^2 - t^2 when unclipped
    return np.maximum(d2, 0.0)


def _segment_dist2_at(points, units, max_radius):
    """Row-wise variant: units[i] paired with points[i]."""
    t = np.sum(points * units, axis=1)
    t = np.clip(t, 0.0, max_radius if max_radius is not None else np.inf)
    diff = points - t[:, None] * units
    return np.sum(diff * diff, axis=1)


def _parabolic_min(xs, ys):
    """Vertex of the parabola through three samples (xs, ys), clamped to the bracket."""
    x0, x1, x2 = xs
    y0, y1, y2 = ys
    denom = (y0 - 2.0 * y1 + y2)
    denom = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
    shift = 0.5 * (y0 - y2) / denom * (x1 - x0)
    shift = np.clip(shift, x0 - x1, x2 - x1)
    return x1 + shift, y1


def cone_spec_from_json(obj):
    kind = obj.get("kind")
    if kind == "sector":
        return Sector2D(float(obj["opening"]))
    if kind == "half_space":
        return HalfSpace(int(obj.get("dim", 3)))
    if kind == "elliptic_cone":
        return EllipticCone3D(float(obj["x_half_angle"]), float(obj["y_half_angle"]))
    raise ConelabError(f"unknown cone spec kind: {kind!r}")


@dataclass(frozen=True)
class PlacedCone:
    """A cone spec rotated by an orthogonal matrix and shifted down its axis.

    The placed set is ``rotation @ (spec - shift * e_z)``; membership of a
    world point p reduces to testing ``rotation.T @ p + shift * e_z`` against
    the untransformed spec.
    """

    spec: object
    rotation: np.ndarray = None
    shift: float = 0.0

    def __post_init__(self):
        d = self.spec.dim
        rot = np.eye(d) if self.rotation is None else np.asarray(self.rotation, dtype=float)
        if rot.shape != (d, d):
            raise ValueError("rotation has wrong shape")
        if not np.allclose(rot.T @ rot, np.eye(d), atol=_ROT_TOL):
            raise ValueError("rotation must be orthogonal to 1e-12")
        if np.linalg.det(rot) < 0:
            raise ValueError("rotation must have determinant +1")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")
        object.__setattr__(self, "rotation", rot)

    def _to_local(self, points):
        local = points @ self.rotation  # == rotation.T applied to rows
        local[:, -1] += self.shift
        return local

    def contains(self, p):
        a, single = _as_points(p, self.spec.dim)
        return _scalarize(np.atleast_1d(self.spec.contains(self._to_local(a))), single)

    def surface_distance(self, p):
        a, single = _as_points(p, self.spec.dim)
        d = np.atleast_1d(self.spec.surface_distance(self._to_local(a)))
        return _scalarize(d, single)

    def apex(self):
        d = self.spec.dim
        e = np.zeros(d)
        e[-1] = 1.0
        return self.rotation @ (-self.shift * e)

    def surface_points(self, radius, n):
        """Samples of the placed surface with world norm <= radius."""
        # Sample in the local frame out to a radius large enough to cover
        # the world ball, then clip in world coordinates.
        local = self.spec.surface_points(radius + self.shift, n)
        local = local.copy()
        local[:, -1] -= self.shift
        world = local @ self.rotation.T
        return world[np.linalg.norm(world, axis=1) <= radius]

    def ray_exit(self, dirs):
        """Exit distance from the origin along unit directions (inf if none).

        Origin must be inside the placed cone for the result to be the exit
        of the ray {s*d : s > 0}.
        """
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        local = dirs @ self.rotation
        spec = self.spec
        delta = self.shift
        if isinstance(spec, HalfSpace):
            dz = local[:, -1]
            out = np.full(len(dirs), np.inf)
            neg = dz < 0
            out[neg] = delta / np.maximum(-dz[neg], 1e-300)
            return out
        if isinstance(spec, EllipticCone3D):
            tx, ty = spec._tangents
            dx, dy, dz = local[:, 0], local[:, 1], local[:, 2]
            # g(s) = (s*dz + delta)^2 - (s*dx/tx)^2 - (s*dy/ty)^2, g(0) > 0
            a = dz * dz - (dx / tx) ** 2 - (dy / ty) ** 2
            b = 2.0 * delta * dz
            c = delta * delta
            out = np.full(len(dirs), np.inf)
            disc = b * b - 4.0 * a * c
            with np.errstate(invalid="ignore", divide="ignore"):
                sq = np.sqrt(np.maximum(disc, 0.0))
                for root_sign in (-1.0, 1.0):
                    s = np.where(
                        np.abs(a) > 1e-300, (-b + root_sign * sq) / (2.0 * a), -c / np.where(np.abs(b) > 1e-300, b, np.inf)
                    )
                    valid = (disc >= 0) & (s > 1e-14) & (s * dz + delta >= -1e-15)
                    out = np.where(valid & (s < out), s, out)
            return out
        raise ConelabError("ray_exit supports half-space and elliptic cone members")

    def to_json(self):
        return {
            "spec": self.spec.to_json(),
            "rotation": self.rotation.tolist(),
            "shift": self.shift,
        }


@dataclass(frozen=True)
class CsgDomain:
    """Intersection of placed cones clipped to the open ball B_clip_radius."""

    members: tuple
    clip_radius: float = 1.0

    def __post_init__(self):
        if len(self.members) == 0:
            raise ValueError("domain needs at least one member")
        if self.clip_radius <= 0:
            raise ValueError("clip radius must be positive")
        dims = {m.spec.dim for m in self.members}
        if len(dims) != 1:
            raise ValueError("all members must share one ambient dimension")
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def dim(self):
        return self.members[0].spec.dim

    def contains(self, p):
        a, single = _as_points(p, self.dim)
        inside = np.linalg.norm(a, axis=1) < self.clip_radius
        for m in self.members:
            inside &= np.atleast_1d(m.contains(a))
        return _scalarize(inside, single)

    def boundary_distance(self, p):
        """Distance to the nearest member surface, clamped by the clip sphere."""
        a, single = _as_points(p, self.dim)
        r = np.linalg.norm(a, axis=1)
        if np.any(r >= self.clip_radius):
            raise ValueError("points must lie inside the clip ball")
        d = self.clip_radius - r
        for m in self.members:
            d = np.minimum(d, np.atleast_1d(m.surface_distance(a)))
        return _scalarize(d, single)

    def boundary_points(self, radius, n_per_member=4096):
        """Samples of the domain boundary with norm < radius."""
        tol = 1e-9 * max(radius, 1.0)
        chunks = []
        for i, m in enumerate(self.members):
            pts = m.surface_points(radius, n_per_member)
            if len(pts) == 0:
                continue
            keep = np.ones(len(pts), dtype=bool)
            for j, other in enumerate(self.members):
                if i == j:
                    continue
                keep &= np.atleast_1d(other.contains(pts)) | (
                    np.atleast_1d(other.surface_distance(pts)) < tol
                )
            chunks.append(pts[keep])
        if not chunks or sum(len(c) for c in chunks) == 0:
            raise ConelabError("no boundary in ball")
        return np.vstack(chunks)

    def to_json(self):
        return {
            "members": [m.to_json() for m in self.members],
            "clip_radius": self.clip_radius,
        }

    @staticmethod
    def from_json(obj):
        members = tuple(
            PlacedCone(
                spec=cone_spec_from_json(m["spec"]),
                rotation=np.asarray(m["rotation"], dtype=float) if m.get("rotation") is not None else None,
                shift=float(m.get("shift", 0.0)),
            )
            for m in obj["members"]
        )
        return CsgDomain(members=members, clip_radius=float(obj["clip_radius"]))

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)

    @staticmethod
    def loads(text):
        return CsgDomain.from_json(json.loads(text))


def hausdorff_deviation(domain, cone, r, n0=None, rel_tol=0.01, max_rounds=5):
    """Scaled two-sided Hausdorff distance between boundaries inside B_r.

    Returns ``H(bd(domain) cap B_r, bd(cone) cap B_r) / r`` with the sampling
    density doubled until the estimate is stable to ``rel_tol``.  The cone
    side uses exact point-to-surface distances clipped to the ball.
    """
    if not 0.0 < r < domain.clip_radius:
        raise ValueError("radius must lie in (0, clip_radius)")
    if n0 is None:
        n0 = 4096 if domain.dim == 3 else 1024
    cone_placed = PlacedCone(spec=cone)
    prev = None
    n = n0
    for _ in range(max_rounds):
        a = domain.boundary_points(r, n_per_member=n)
        c = cone_placed.surface_points(r, 4 * n if cone.dim == 3 else 2 * n)
        if len(c) == 0:
            raise ConelabError("no boundary in ball")
        # domain samples -> exact distance to cone surface clipped to B_r
        d_ac = np.max(cone.surface_distance(a, max_radius=r))
        # cone samples -> sampled domain boundary
        d_ca = np.max(cKDTree(a).query(c, k=1)[0])
        h = max(d_ac, d_ca)
        if prev is not None and abs(h - prev) <= rel_tol * max(h, 1e-300):
            return h / r
        prev = h
        n *= 2
    return prev / r


def conical_rate(domain, cone, radii):
    """Trend test for conical convergence and the excess-rate exponent.

    Fits ``log(deviation * r)`` against ``log r``; the returned exponent is
    the slope minus one.  ``is_conical`` demands a decreasing deviation trend.
    """
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 8 or np.any(np.diff(radii) >= 0):
        raise ValueError("need at least 8 strictly decreasing radii")
    devs = np.array([hausdorff_deviation(domain, cone, r) for r in radii])
    if np.all(devs < 1e-12):
        return True, math.inf, 0.0
    drops = np.sum(np.diff(devs) < 1e-12)  # radii decrease, deviations should too
    trending = drops >= 0.7 * (len(devs) - 1) and devs[-1] < 0.6 * devs[0]
    logs_r = np.log(radii)
    logs_d = np.log(np.maximum(devs * radii, 1e-300))
    slope, intercept = np.polyfit(logs_r, logs_d, 1)
    residual = float(np.sqrt(np.mean((logs_d - slope * logs_r - intercept) ** 2)))
    return bool(trending), float(slope - 1.0), residual
