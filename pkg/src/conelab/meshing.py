"""Simplicial meshes: planar sectors, spherical caps, refinement, dump/load.

The generators here all share one construction: a family of nested ring
curves around a pole, each ring resampled to equal arclength, with strips
between consecutive rings triangulated by a two-pointer sweep.  That gives
quasi-uniform, shape-regular meshes for discs, sectors, spherical caps of
varying rim profile, and full/half spheres (rim collapsed to the far pole).

Meshes carry per-vertex "bindings" (which exact surfaces a vertex lies on)
plus snapper callables so that refinement can re-project new vertices onto
the exact geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConelabError, ResolutionError

DIRICHLET_ZERO = "DirichletZero"
DIRICHLET_ONE = "DirichletOne"
SYMMETRY_PLANE = "SymmetryPlane"
SPHERE = "Sphere"

_TAGS = (DIRICHLET_ZERO, DIRICHLET_ONE, SYMMETRY_PLANE, SPHERE)


@dataclass
class SimplicialMesh:
    """Simplicial complex with tagged boundary facets.

    vertices : (n, ambient_dim) float array
    cells : (m, manifold_dim + 1) int array, positively oriented
    boundary_facets : (k, manifold_dim) int array
    boundary_tags : length-k list of tag strings
    bindings : optional tuple of frozensets naming exact surfaces per vertex
    snappers : optional dict mapping binding frozensets to projection callables
    """

    ambient_dim: int
    manifold_dim: int
    vertices: np.ndarray
    cells: np.ndarray
    boundary_facets: np.ndarray
    boundary_tags: list
    bindings: tuple = None
    snappers: dict = None
    local_scale: object = None  # optional callable r -> local edge length

    def n_vertices(self):
        return len(self.vertices)

    def cell_measures(self):
        v = self.vertices[self.cells]
        if self.manifold_dim == 1:
            return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        if self.manifold_dim == 2:
            e1 = v[:, 1] - v[:, 0]
            e2 = v[:, 2] - v[:, 0]
            if self.ambient_dim == 2:
                return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
            return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        e3 = v[:, 3] - v[:, 0]
        return np.einsum("ij,ij->i", np.cross(e1, e2), e3) / 6.0

    def total_measure(self):
        return float(np.sum(np.abs(self.cell_measures())))

    def edge_lengths(self):
        pairs = set()
        k = self.manifold_dim + 1
        for i in range(k):
            for j in range(i + 1, k):
                pairs.add((i, j))
        lens = []
        for i, j in pairs:
            lens.append(np.linalg.norm(self.vertices[self.cells[:, i]] - self.vertices[self.cells[:, j]], axis=1))
        return np.concatenate(lens)

    def min_angle_deg(self):
        """Minimum interior (triangle) or dihedral (tet) angle, in degrees."""
        v = self.vertices[self.cells]
        if self.manifold_dim == 1:
            return 180.0
        if self.manifold_dim == 2:
            angles = []
            for i in range(3):
                a = v[:, (i + 1) % 3] - v[:, i]
                b = v[:, (i + 2) % 3] - v[:, i]
                cosx = np.einsum("ij,ij->i", a, b) / (
                    np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
                )
                angles.append(np.degrees(np.arccos(np.clip(cosx, -1.0, 1.0))))
            return float(np.min(angles))
        return float(np.min(_tet_dihedrals_deg(v)))

    def validate(self, quality_floor_deg=10.0, check_duplicates=True):
        """Assert the structural mesh invariants; raise ConelabError on failure."""
        meas = self.cell_measures()
        if self.manifold_dim == self.ambient_dim:
            if np.any(meas <= 0):
                raise ConelabError("mesh has non-positively oriented cells")
        elif np.any(np.abs(meas) <= 0):
            raise ConelabError("mesh has degenerate cells")
        if check_duplicates and len(self.vertices) < 200000:
            if cKDTree(self.vertices).query_pairs(1e-12):
                raise ConelabError("duplicate vertices")
        derived = derive_boundary_facets(self.cells)
        ours = {tuple(sorted(f)) for f in self.boundary_facets}
        if derived != ours:
            raise ConelabError("boundary facets do not match cell incidence")
        if len(self.boundary_tags) != len(self.boundary_facets):
            raise ConelabError("every boundary facet needs exactly one tag")
        for t in self.boundary_tags:
            if t not in _TAGS:
                raise ConelabError(f"unknown boundary tag {t!r}")
        if quality_floor_deg is not None and self.manifold_dim >= 2:
            q = self.min_angle_deg()
            if q < quality_floor_deg:
                raise ConelabError(f"mesh quality {q:.2f} deg below floor {quality_floor_deg} deg")
        return self

    def dump(self):
        """ASCII dump; floats use repr so reload is bit-exact."""
        lines = [f"conelab-mesh v1 {self.ambient_dim} {self.manifold_dim}"]
        for v in self.vertices:
            lines.append("v " + " ".join(repr(float(x)) for x in v))
        for c in self.cells:
            lines.append("c " + " ".join(str(int(i)) for i in c))
        for f, t in zip(self.boundary_facets, self.boundary_tags):
            lines.append("b " + " ".join(str(int(i)) for i in f) + " " + t)
        return "\n".join(lines) + "\n"

    @staticmethod
    def load(text):
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        head = lines[0].split()
        if head[:2] != ["conelab-mesh", "v1"]:
            raise ConelabError("not a conelab mesh dump")
        amb, man = int(head[2]), int(head[3])
        verts, cells, facets, tags = [], [], [], []
        for ln in lines[1:]:
            parts = ln.split()
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:]])
            elif parts[0] == "c":
                cells.append([int(x) for x in parts[1:]])
            elif parts[0] == "b":
                facets.append([int(x) for x in parts[1:-1]])
                tags.append(parts[-1])
        return SimplicialMesh(
            ambient_dim=amb,
            manifold_dim=man,
            vertices=np.asarray(verts, dtype=float),
            cells=np.asarray(cells, dtype=np.int64),
            boundary_facets=np.asarray(facets, dtype=np.int64),
            boundary_tags=tags,
        )


def _tet_dihedrals_deg(v):
    """(m, 6) dihedral angles of tets given (m, 4, 3) vertex coordinates."""
    faces = [(1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)]  # opposite vertex i
    normals = []
    for f in faces:
        n = np.cross(v[:, f[1]] - v[:, f[0]], v[:, f[2]] - v[:, f[0]])
        normals.append(n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300))
    out = []
    # edge (i, j) is shared by the faces opposite the other two vertices
    for i in range(4):
        for j in range(i + 1, 4):
            k, l = [x for x in range(4) if x not in (i, j)]
            cosx = -np.einsum("ij,ij->i", normals[k], normals[l])
            out.append(np.degrees(np.arccos(np.clip(cosx, -1.0, 1.0))))
    return np.stack(out, axis=1)


def derive_boundary_facets(cells):
    """Facets incident to exactly one cell, as a set of sorted tuples."""
    from collections import Counter

    k = cells.shape[1]
    count = Counter()
    for drop in range(k):
        idx = [i for i in range(k) if i != drop]
        for f in cells[:, idx]:
            count[tuple(sorted(f))] += 1
    return {f for f, c in count.items() if c == 1}


# ---------------------------------------------------------------------------
# ring-mesh machinery


def _equal_arclength_params(curve, n_nodes, periodic, oversample=12):
    """Parameter values t in [0,1] giving equal-arclength nodes along curve(t)."""
    m = max(64, oversample * n_nodes)
    t = np.linspace(0.0, 1.0, m + 1)
    pts = curve(t)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0:
        return np.zeros(n_nodes)
    if periodic:
        targets = np.arange(n_nodes) / n_nodes * total
    else:
        targets = np.linspace(0.0, total, n_nodes)
    return np.interp(targets, s, t)


def _strip(tri_out, p_ids, p_params, q_ids, q_params, periodic):
    """Triangulate the band between chains P (inner) and Q (outer)."""
    if len(p_ids) == 1:
        # fan from the single inner node
        n = len(q_ids)
        last = n if periodic else n - 1
        for j in range(last):
            tri_out.append((p_ids[0], q_ids[j], q_ids[(j + 1) % n]))
        return
    if len(q_ids) == 1:
        n = len(p_ids)
        last = n if periodic else n - 1
        for i in range(last):
            tri_out.append((p_ids[i], p_ids[(i + 1) % n], q_ids[0]))
        return
    p = list(p_params) + ([1.0 + p_params[0]] if periodic else [])
    q = list(q_params) + ([1.0 + q_params[0]] if periodic else [])
    np_, nq_ = len(p), len(q)
    i = j = 0
    while i < np_ - 1 or j < nq_ - 1:
        adv_p = j == nq_ - 1 or (i < np_ - 1 and p[i + 1] <= q[j + 1])
        if adv_p:
            tri_out.append((p_ids[i % len(p_ids)], q_ids[j % len(q_ids)], p_ids[(i + 1) % len(p_ids)]))
            i += 1
        else:
            tri_out.append((p_ids[i % len(p_ids)], q_ids[j % len(q_ids)], q_ids[(j + 1) % len(q_ids)]))
            j += 1


def _ring_surface(pole, ring_curve, n_rings, ring_count, periodic, collapse_tol=1e-12):
    """Build a ring-structured triangulation.

    ring_curve(i, t) must return points of ring i (1..n_rings) at parameters
    t in [0, 1]; ring_count(i) its node budget.  Returns (vertices, triangles,
    ring_index array).  A final ring that degenerates to one point (full
    sphere) is collapsed automatically.
    """
    verts = [np.asarray(pole, dtype=float)]
    ring_of = [0]
    ids_prev = [0]
    params_prev = [0.0]
    tris = []
    for i in range(1, n_rings + 1):
        n_i = ring_count(i)
        t_nodes = _equal_arclength_params(lambda tt, i=i: ring_curve(i, tt), n_i, periodic)
        pts = ring_curve(i, t_nodes)
        if np.max(np.linalg.norm(pts - pts[0], axis=1)) < collapse_tol:
            pts = pts[:1]
            t_nodes = t_nodes[:1]
        ids = list(range(len(verts), len(verts) + len(pts)))
        verts.extend(pts)
        ring_of.extend([i] * len(pts))
        if periodic and len(pts) > 1:
            par = list(np.arange(len(pts)) / len(pts))
        else:
            par = list(np.linspace(0.0, 1.0, len(pts))) if len(pts) > 1 else [0.0]
        _strip(tris, ids_prev, params_prev, ids, par, periodic)
        ids_prev, params_prev = ids, par
    return np.asarray(verts), np.asarray(tris, dtype=np.int64), np.asarray(ring_of)


def _orient_triangles(verts, tris, ambient, outward_from_origin=False):
    v = verts[tris]
    if ambient == 2:
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        flip = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) < 0
    else:
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        ref = v.mean(axis=1) if outward_from_origin else np.zeros_like(n)
        flip = np.einsum("ij,ij->i", n, ref) < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _boundary_edges_with_tags(verts, tris, classify):
    """Derive boundary edges and tag them via classify(midpoint, endpoints)."""
    facets = sorted(derive_boundary_facets(tris))
    tags = [classify(verts[list(f)]) for f in facets]
    return np.asarray(facets, dtype=np.int64), tags


# ---------------------------------------------------------------------------
# 1-D cross-section of a sector: polyline on the unit circle


def mesh_arc_interval(opening, h):
    """Polyline mesh of the arc {(cos phi, sin phi): 0 <= phi <= opening}."""
    if not 0 < opening < 2 * math.pi:
        raise ValueError("opening must lie in (0, 2*pi)")
    n = max(2, int(math.ceil(opening / h)))
    phi = np.linspace(0.0, opening, n + 1)
    verts = np.column_stack([np.cos(phi), np.sin(phi)])
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    facets = np.array([[0], [n]], dtype=np.int64)
    tags = [DIRICHLET_ZERO, DIRICHLET_ZERO]
    snappers = {frozenset({"circle"}): lambda p: p / np.linalg.norm(p)}
    bindings = tuple(frozenset({"circle"}) for _ in range(len(verts)))
    return SimplicialMesh(2, 1, verts, cells.astype(np.int64), facets, tags, bindings, snappers)


# ---------------------------------------------------------------------------
# planar sector


def mesh_sector(opening, radius, h):
    """Planar triangulation of the open sector of given opening and radius.

    Radial edges are tagged DirichletZero and the outer arc Sphere; the
    longest edge stays below 1.5*h.
    """
    if not 0 < opening < 2 * math.pi:
        raise ValueError("opening must lie in (0, 2*pi)")
    if h >= radius / 4:
        raise ValueError("h too large for the requested radius")
    n_rings = int(math.ceil(radius / h))

    def curve(i, t):
        r = radius * i / n_rings
        phi = opening * np.asarray(t)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi)])

    def count(i):
        arc = opening * radius * i / n_rings
        return max(2, int(math.ceil(arc / h)) + 1)

    verts, tris, _ = _ring_surface(np.zeros(2), curve, n_rings, count, periodic=False)
    tris = _orient_triangles(verts, tris, ambient=2)

    u1 = np.array([math.cos(opening), math.sin(opening)])
    tol = 1e-9 * radius

    def classify(pts):
        if np.all(np.abs(np.linalg.norm(pts, axis=1) - radius) < tol):
            return SPHERE
        return DIRICHLET_ZERO

    facets, tags = _boundary_edges_with_tags(verts, tris, classify)

    bindings = []
    for p in verts:
        b = set()
        r = np.linalg.norm(p)
        if abs(r - radius) < tol:
            b.add("arc")
        if abs(p[1]) < tol and p[0] >= -tol:
            b.add("ray0")
        if abs(p @ np.array([-u1[1], u1[0]])) < tol and p @ u1 >= -tol:
            b.add("ray1")
        bindings.append(frozenset(b))

    u0 = np.array([1.0, 0.0])
    snappers = {
        frozenset({"arc"}): lambda p: p * (radius / np.linalg.norm(p)),
        frozenset({"ray0"}): lambda p: np.array([max(p @ u0, 0.0), 0.0]),
        frozenset({"ray1"}): lambda p: max(p @ u1, 0.0) * u1,
        frozenset({"ray0", "ray1"}): lambda p: np.zeros(2),
        frozenset({"arc", "ray0"}): lambda p: radius * u0,
        frozenset({"arc", "ray1"}): lambda p: radius * u1,
    }
    mesh = SimplicialMesh(2, 2, verts, tris, facets, tags, tuple(bindings), snappers)
    if np.max(mesh.edge_lengths()) > 1.5 * h:
        raise ConelabError("sector mesh exceeded the 1.5*h edge bound")
    return mesh


# ---------------------------------------------------------------------------
# spherical caps and spheres


def _sph(psi, theta):
    psi = np.asarray(psi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    sp = np.sin(psi)
    return np.stack([sp * np.cos(theta), sp * np.sin(theta), np.cos(psi)], axis=-1)


_BISECT_RANGES = {"x": (-math.pi / 2, math.pi / 2), "y": (0.0, math.pi)}


def _bisect_axis(bisect):
    return {"x": 0, "y": 1}[bisect]


def cap_mesh_from_profile(psi_rim, h, bisect=None, rim_label="rim"):
    """Triangulate {sph(psi, theta): psi < psi_rim(theta)} (optionally bisected).

    psi_rim is a callable of azimuth; constant profiles cover circular caps,
    hemispheres (pi/2) and the full sphere (pi, rim collapsing to a point).
    """
    if bisect is None:
        th0, th1, periodic = 0.0, 2.0 * math.pi, True
    else:
        (th0, th1), periodic = _BISECT_RANGES[bisect], False

    psi_max = float(np.max(psi_rim(np.linspace(th0, th1, 721))))
    n_rings = max(2, int(math.ceil(psi_max / h)))

    def curve(i, t):
        theta = th0 + (th1 - th0) * np.asarray(t)
        return _sph(psi_rim(theta) * i / n_rings, theta)

    def count(i):
        psi = psi_max * i / n_rings
        arc = (th1 - th0) * math.sin(min(psi, math.pi / 2.0))
        lo = 6 if periodic else 2
        return max(lo, int(math.ceil(arc / h)) + (0 if periodic else 1))

    verts, tris, _ = _ring_surface(_sph(0.0, 0.0), curve, n_rings, count, periodic)
    norms = np.linalg.norm(verts, axis=1, keepdims=True)
    verts = verts / norms
    tris = _orient_triangles(verts, tris, ambient=3, outward_from_origin=True)

    tol = 1e-9
    collapsed = abs(psi_max - math.pi) < 1e-12

    def on_rim(p):
        psi = math.acos(np.clip(p[2], -1.0, 1.0))
        theta = math.atan2(p[1], p[0])
        return abs(psi - float(psi_rim(np.array([theta]))[0])) < 1e-7

    axis = None if bisect is None else _bisect_axis(bisect)

    def classify(pts):
        if axis is not None and np.all(np.abs(pts[:, axis]) < tol):
            return DIRICHLET_ZERO
        return DIRICHLET_ZERO

    facets, tags = _boundary_edges_with_tags(verts, tris, classify)

    bindings = []
    for p in verts:
        b = {"sphere"}
        if not collapsed and on_rim(p):
            b.add(rim_label)
        if axis is not None and abs(p[axis]) < tol:
            b.add("plane")
        bindings.append(frozenset(b))

    def snap_sphere(p):
        return p / np.linalg.norm(p)

    def snap_plane(p):
        q = p.copy()
        q[axis] = 0.0
        return q / np.linalg.norm(q)

    def snap_rim(p):
        theta0 = math.atan2(p[1], p[0])
        # local scan + parabolic polish of |p - rim(theta)|^2
        th = theta0 + np.linspace(-0.3, 0.3, 61)
        pts = _sph(psi_rim(th), th)
        d2 = np.sum((pts - p) ** 2, axis=1)
        t0 = th[np.argmin(d2)]
        w = 0.01
        for _ in range(10):
            cand = np.array([t0 - w, t0, t0 + w])
            vals = np.sum((_sph(psi_rim(cand), cand) - p) ** 2, axis=1)
            denom = vals[0] - 2 * vals[1] + vals[2]
            if abs(denom) > 1e-300:
                t0 = t0 + np.clip(0.5 * (vals[0] - vals[2]) / denom * w, -w, w)
            w /= 5.0
        return _sph(float(psi_rim(np.array([t0]))[0]), t0)

    def snap_rim_plane(p):
        th_end = {0: (-math.pi / 2, math.pi / 2), 1: (0.0, math.pi)}[axis]
        cands = [_sph(float(psi_rim(np.array([te]))[0]), te) for te in th_end]
        return min(cands, key=lambda c: np.linalg.norm(c - p))

    snappers = {
        frozenset({"sphere"}): snap_sphere,
        frozenset({"sphere", rim_label}): snap_rim,
    }
    if axis is not None:
        snappers[frozenset({"sphere", "plane"})] = snap_plane
        snappers[frozenset({"sphere", rim_label, "plane"})] = snap_rim_plane
    return SimplicialMesh(3, 2, verts, tris, facets, tags, tuple(bindings), snappers)


def mesh_cap(cone, bisect=None, h=0.1):
    """Surface mesh of the unit-sphere cross-section of a 3-D cone."""
    from .geometry import EllipticCone3D, HalfSpace

    if isinstance(cone, HalfSpace) and cone.dim == 3:
        profile = lambda th: np.full_like(np.asarray(th, dtype=float), math.pi / 2.0)
    elif isinstance(cone, EllipticCone3D):
        profile = cone.cap_polar_angle
    else:
        raise ValueError("mesh_cap needs a 3-D cone (half-space or elliptic)")
    return cap_mesh_from_profile(profile, h, bisect=bisect)


# ---------------------------------------------------------------------------
# refinement


_EDGES_BY_DIM = {
    1: [(0, 1)],
    2: [(0, 1), (0, 2), (1, 2)],
    3: [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
}


def refine(mesh):
    """Uniform red refinement with boundary re-snapping.

    Each segment splits in two, each triangle into four, each tetrahedron
    into eight (Bey's rule on index-sorted tets).  Midpoints whose parent
    vertices share a geometric binding are projected back onto that surface.
    """
    md = mesh.manifold_dim
    cells = np.sort(mesh.cells, axis=1) if md == 3 else mesh.cells
    verts = list(mesh.vertices)
    bindings = list(mesh.bindings) if mesh.bindings is not None else None
    midpoint_of = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key in midpoint_of:
            return midpoint_of[key]
        p = 0.5 * (mesh.vertices[i] + mesh.vertices[j])
        b = frozenset()
        if bindings is not None:
            b = bindings[i] & bindings[j]
            if b and mesh.snappers:
                snap = mesh.snappers.get(b)
                if snap is None:
                    for cand in sorted(mesh.snappers, key=len, reverse=True):
                        if cand <= b:
                            snap = mesh.snappers[cand]
                            break
                if snap is not None:
                    p = np.asarray(snap(p.copy()), dtype=float)
        idx = len(verts)
        verts.append(p)
        if bindings is not None:
            bindings.append(b)
        midpoint_of[key] = idx
        return idx

    new_cells = []
    if md == 1:
        for a, b in cells:
            m = midpoint(a, b)
            new_cells += [(a, m), (m, b)]
    elif md == 2:
        for a, b, c in cells:
            ab, ac, bc = midpoint(a, b), midpoint(a, c), midpoint(b, c)
            new_cells += [(a, ab, ac), (ab, b, bc), (ac, bc, c), (ab, bc, ac)]
    else:
        for v0, v1, v2, v3 in cells:
            m01, m02, m03 = midpoint(v0, v1), midpoint(v0, v2), midpoint(v0, v3)
            m12, m13, m23 = midpoint(v1, v2), midpoint(v1, v3), midpoint(v2, v3)
            new_cells += [
                (v0, m01, m02, m03),
                (m01, v1, m12, m13),
                (m02, m12, v2, m23),
                (m03, m13, m23, v3),
                (m01, m02, m03, m13),
                (m01, m02, m12, m13),
                (m02, m03, m13, m23),
                (m02, m12, m13, m23),
            ]
    new_verts = np.asarray(verts)
    new_cells = np.asarray(new_cells, dtype=np.int64)
    if md >= 2:
        new_cells = _fix_orientation(new_verts, new_cells, mesh.ambient_dim, md)

    # children of tagged boundary facets inherit the parent tag
    new_facets, new_tags = [], []
    for f, t in zip(mesh.boundary_facets, mesh.boundary_tags):
        if md == 1:
            new_facets.append(tuple(f))
            new_tags.append(t)
        elif md == 2:
            a, b = f
            m = midpoint_of[(min(a, b), max(a, b))]
            new_facets += [(a, m), (m, b)]
            new_tags += [t, t]
        else:
            a, b, c = f
            ab = midpoint_of[(min(a, b), max(a, b))]
            ac = midpoint_of[(min(a, c), max(a, c))]
            bc = midpoint_of[(min(b, c), max(b, c))]
            new_facets += [(a, ab, ac), (ab, b, bc), (ac, bc, c), (ab, bc, ac)]
            new_tags += [t, t, t, t]
    return SimplicialMesh(
        mesh.ambient_dim,
        md,
        new_verts,
        new_cells,
        np.asarray(new_facets, dtype=np.int64).reshape(-1, md),
        new_tags,
        tuple(bindings) if bindings is not None else None,
        mesh.snappers,
        mesh.local_scale,
    )


def _fix_orientation(verts, cells, ambient, md):
    v = verts[cells]
    if md == 2 and ambient == 2:
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        bad = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) < 0
        cells = cells.copy()
        cells[bad] = cells[bad][:, [0, 2, 1]]
        return cells
    if md == 2:
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        bad = np.einsum("ij,ij->i", n, v.mean(axis=1)) < 0
        cells = cells.copy()
        cells[bad] = cells[bad][:, [0, 2, 1]]
        return cells
    vol = np.einsum("ij,ij->i", np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), v[:, 3] - v[:, 0])
    cells = cells.copy()
    bad = vol < 0
    cells[bad] = cells[bad][:, [0, 1, 3, 2]]
    return cells
