"""Tetrahedral meshing of cone intersections clipped to a ball.

Every supported domain is star-shaped about the origin (a convex
intersection of z-axis-aligned cones, each possibly rotated about z and
shifted down its axis, clipped to a ball).  The boundary is the radial
graph of an exit distance rho(d) over a set of directions, and the mesh is
built as a stack of "shells" (per-vertex radius graphs over a direction
mesh) with prisms between consecutive shells split into tetrahedra.

Two refinements keep the element quality under control toward the center:
the direction mesh is coarsened by one red level each time the radius
halves (the 3-D analog of a graded polar disc mesh), and the shell graphs
are smoothed angularly as the stack descends, which relaxes the shear that
a kinked or grazing boundary graph would otherwise imprint on every layer.
A geometric layer schedule (``r_min``) gives self-similar resolution near
the origin for blow-up studies.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.sparse as sp

from .errors import ConelabError, ResolutionError
from .geometry import CsgDomain, EllipticCone3D, HalfSpace
from .meshing import (
    DIRICHLET_ONE,
    DIRICHLET_ZERO,
    SimplicialMesh,
    cap_mesh_from_profile,
    refine,
)

_SNAP_TOL = 1e-10


def _z_rotation_angle(rot):
    if abs(rot[2, 2] - 1.0) > 1e-12 or abs(rot[0, 2]) > 1e-12 or abs(rot[1, 2]) > 1e-12:
        raise ResolutionError("volume meshing supports z-axis-aligned members only")
    return math.atan2(rot[1, 0], rot[0, 0])


def _placed_cap_polar(member):
    """Rim polar-angle profile of an unshifted member, as a function of azimuth."""
    ang = _z_rotation_angle(member.rotation)
    spec = member.spec
    if isinstance(spec, HalfSpace):
        return lambda th: np.full_like(np.asarray(th, dtype=float), math.pi / 2.0)
    if isinstance(spec, EllipticCone3D):
        return lambda th: spec.cap_polar_angle(np.asarray(th, dtype=float) - ang)
    raise ResolutionError("unsupported member spec for volume meshing")


def _project_surface(member, pts):
    """Nearest points on a placed cone's lateral surface."""
    pts = np.atleast_2d(pts)
    local = pts @ member.rotation
    local[:, 2] += member.shift
    spec = member.spec
    if isinstance(spec, HalfSpace):
        proj = local.copy()
        proj[:, 2] = 0.0
    elif isinstance(spec, EllipticCone3D):
        theta = np.linspace(0.0, 2 * math.pi, 512, endpoint=False)
        u = spec.generator(theta)
        t = np.clip(local @ u.T, 0.0, None)
        d2 = np.sum(local * local, axis=1)[:, None] - t * t
        k = np.argmin(d2, axis=1)
        th0 = theta[k]
        w = 2 * math.pi / 512
        for _ in range(8):
            cand = np.stack([th0 - w, th0, th0 + w])
            vals = []
            for c in cand:
                uu = spec.generator(c)
                tt = np.clip(np.sum(local * uu, axis=1), 0.0, None)
                diff = local - tt[:, None] * uu
                vals.append(np.sum(diff * diff, axis=1))
            vals = np.stack(vals)
            denom = vals[0] - 2 * vals[1] + vals[2]
            shift = np.where(np.abs(denom) > 1e-300, 0.5 * (vals[0] - vals[2]) / denom * w, 0.0)
            th0 = th0 + np.clip(shift, -w, w)
            w /= 6.0
        uu = spec.generator(th0)
        tt = np.clip(np.sum(local * uu, axis=1), 0.0, None)
        proj = tt[:, None] * uu
    else:
        raise ResolutionError("unsupported member spec")
    proj[:, 2] -= member.shift
    return proj @ member.rotation.T


def _alternating_snap(projs):
    def snap(p):
        q = np.atleast_2d(np.asarray(p, dtype=float)).copy()
        for _ in range(60):
            prev = q.copy()
            for proj in projs:
                q = proj(q)
            if np.max(np.abs(q - prev)) < 1e-14:
                break
        return q[0]

    return snap


def _split_prism(bot, top):
    """Index-rule split of the prism (bot triangle, top triangle) into 3 tets.

    Each quad face takes the diagonal through its smallest vertex id, which
    makes the split conforming across neighboring prisms.
    """
    ids = list(bot) + list(top)
    m = int(np.argmin(ids))
    if m >= 3:
        # mirror: swap bottom and top (with a reflection to stay consistent)
        bot, top = (top[0], top[2], top[1]), (bot[0], bot[2], bot[1])
        ids = list(bot) + list(top)
        m = int(np.argmin(ids))
    r = m % 3
    bot = (bot[r], bot[(r + 1) % 3], bot[(r + 2) % 3])
    top = (top[r], top[(r + 1) % 3], top[(r + 2) % 3])
    v0, v1, v2 = bot
    v3, v4, v5 = top
    # remaining free quad (v1, v2, v5, v4): diagonal through its min id
    if min(v1, v2, v5, v4) in (v1, v5):
        return [(v0, v1, v2, v5), (v0, v1, v5, v4), (v0, v4, v5, v3)]
    return [(v0, v1, v2, v4), (v0, v2, v5, v4), (v0, v4, v5, v3)]


def _pentagon_triangles(ids, fan_from):
    """Fan triangulation of a cyclically ordered face from a fixed vertex.

    The fan vertex must be determined by the face itself (here: the fine
    midpoint vertex) so both polyhedra sharing the face split it the same
    way; fanning from the midpoint also avoids the sliver triangle spanned
    by the three nearly collinear fine-shell vertices.
    """
    k = ids.index(fan_from)
    ring = ids[k:] + ids[:k]
    return [(ring[0], ring[i], ring[i + 1]) for i in range(1, len(ring) - 1)]


def _find_midpoint(fine, kid_rows, u, v):
    """Vertex id of the midpoint of coarse edge (u, v) among red children."""
    anchored_u = anchored_v = None
    for row in kid_rows:
        s = set(int(x) for x in fine.cells[row])
        if u in s:
            anchored_u = s
        if v in s:
            anchored_v = s
    shared = (anchored_u & anchored_v) - {u, v}
    if len(shared) != 1:
        raise ConelabError("red-refinement bookkeeping failed")
    return shared.pop()


def _boundary_faces(cells):
    faces = np.concatenate([
        cells[:, [1, 2, 3]],
        cells[:, [0, 2, 3]],
        cells[:, [0, 1, 3]],
        cells[:, [0, 1, 2]],
    ])
    faces = np.sort(faces, axis=1)
    uniq, counts = np.unique(faces, axis=0, return_counts=True)
    return uniq[counts == 1]


def _neighbor_average(mesh):
    """Row-normalized vertex adjacency operator of a surface mesh."""
    e = np.concatenate([mesh.cells[:, [0, 1]], mesh.cells[:, [1, 2]], mesh.cells[:, [2, 0]]])
    i = np.concatenate([e[:, 0], e[:, 1]])
    j = np.concatenate([e[:, 1], e[:, 0]])
    n = mesh.n_vertices()
    A = sp.coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n)).tocsr()
    A.data[:] = 1.0
    deg = np.asarray(A.sum(axis=1)).ravel()
    D = sp.diags(1.0 / np.maximum(deg, 1.0))
    return D @ A


def mesh_domain_ball(domain, half=None, h=0.05, r_min=None, quality_floor_deg=10.0,
                     smooth_weight=0.35, validate=False):
    """Body-fitted tetrahedral mesh of ``domain`` (optionally halved).

    h is the target edge length at the outer scale; with ``r_min`` set, the
    resolution is graded self-similarly (local edge of order r down to
    r_min).  Sphere facets are tagged DirichletOne, cone-surface and
    symmetry-plane facets DirichletZero.
    """
    if domain.dim != 3:
        raise ValueError("mesh_domain_ball expects a 3-D domain")
    if half not in (None, "x", "y"):
        raise ValueError("half must be None, 'x' or 'y'")
    R = domain.clip_radius
    a = h / R
    if a >= 0.45:
        raise ResolutionError("resolution: h too large for the clip ball")

    unshifted = [m for m in domain.members if m.shift == 0.0]
    shifted = [m for m in domain.members if m.shift > 0.0]
    member_index = {id(m): i for i, m in enumerate(domain.members)}

    # resolution check: a shifted apex at depth delta needs local size < delta/2
    for m in shifted:
        local = h if r_min is None else a * max(m.shift, r_min)
        if m.shift < 2.0 * local:
            raise ResolutionError("resolution: member shift below twice the local mesh size")

    # direction profile
    if unshifted:
        profiles = [(m, _placed_cap_polar(m)) for m in unshifted]

        def psi_rim(th):
            th = np.asarray(th, dtype=float)
            return np.min(np.stack([p(th) for _, p in profiles]), axis=0)

    else:
        for m in shifted:
            _z_rotation_angle(m.rotation)  # alignment check

        def psi_rim(th):
            th = np.asarray(th, dtype=float)
            return np.full_like(th, math.pi)

        profiles = []

    # direction-mesh hierarchy: M[0] coarse ... M[L] at target spacing a
    L = max(0, int(math.floor(math.log2(0.9 / a))))
    a0 = a * (2 ** L)
    base = cap_mesh_from_profile(psi_rim, a0, bisect=half, rim_label="rim")
    hierarchy = [base]
    children = []  # children[l][k] = rows in hierarchy[l+1].cells of coarse cell k
    for l in range(L):
        fine = refine(hierarchy[-1])
        children.append(np.arange(len(fine.cells)).reshape(-1, 4))
        hierarchy.append(fine)
    averagers = [_neighbor_average(m) for m in hierarchy]

    rho_by_level = []
    for mesh_l in hierarchy:
        d = mesh_l.vertices
        rho = np.full(len(d), R, dtype=float)
        for m in shifted:
            rho = np.minimum(rho, m.ray_exit(d))
        rho_by_level.append(np.minimum(rho, R))
    dirs_by_level = [m.vertices for m in hierarchy]

    # layer schedule with per-vertex shell radii
    t_floor = 1.0 if r_min is None else max(r_min / R, 1e-6)
    shells = []  # (level, radii array on that level's direction mesh)
    lev = L
    t = 1.0
    s = rho_by_level[L].copy()
    shells.append((lev, s))
    while True:
        dt = a * max(t, t_floor)
        if lev == 0 and t <= 2.2 * dt:
            break
        t_next = t - dt
        if t_next <= 0.25 * dt:
            break
        lev_des = min(lev, max(0, L + int(round(math.log2(t_next / max(t_next, t_floor))))))
        lev_next = max(lev_des, lev - 1)
        ratio = t_next / t
        s_raw = s * ratio
        if smooth_weight > 0:
            # diffuse the shell graph angularly, but never by more than a
            # fraction of the layer gap, so the stack stays nested and no
            # band collapses or stretches
            cap = 0.75 * (1.0 - ratio)
            phi = np.log(s_raw)
            step = np.clip(smooth_weight * (averagers[lev] @ phi - phi), -cap, cap)
            s_next = np.exp(phi + step)
        else:
            s_next = s_raw
        if lev_next < lev:
            n_coarse = hierarchy[lev_next].n_vertices()
            s_next = s_next[:n_coarse]
        shells.append((lev_next, s_next))
        t, lev, s = t_next, lev_next, s_next

    # vertex table
    verts_list = []
    shell_ids = []
    for lv, radii in shells:
        pts = radii[:, None] * dirs_by_level[lv]
        ids = np.arange(sum(len(v) for v in verts_list), sum(len(v) for v in verts_list) + len(pts))
        verts_list.append(pts)
        shell_ids.append(ids)
    verts = np.vstack(verts_list)
    center_id = len(verts)
    extra_verts = []
    tets = []

    for j in range(len(shells) - 1):
        l_hi, _ = shells[j]
        l_lo, _ = shells[j + 1]
        ids_hi = shell_ids[j]
        ids_lo = shell_ids[j + 1]
        if l_lo == l_hi:
            for tri in hierarchy[l_hi].cells:
                bot = tuple(int(ids_lo[v]) for v in tri)
                top = tuple(int(ids_hi[v]) for v in tri)
                tets.extend(_split_prism(bot, top))
        else:
            coarse = hierarchy[l_lo]
            fine = hierarchy[l_hi]
            kids = children[l_lo]
            for k, tri in enumerate(coarse.cells):
                poly_faces = []
                for row in kids[k]:
                    f = fine.cells[row]
                    poly_faces.append(tuple(int(ids_hi[v]) for v in f))
                bot = tuple(int(ids_lo[v]) for v in tri)
                poly_faces.append(bot)
                for e0, e1 in ((0, 1), (1, 2), (2, 0)):
                    u, v = int(tri[e0]), int(tri[e1])
                    mid = _find_midpoint(fine, kids[k], u, v)
                    penta = [int(ids_lo[u]), int(ids_lo[v]), int(ids_hi[v]),
                             int(ids_hi[mid]), int(ids_hi[u])]
                    poly_faces.extend(_pentagon_triangles(penta, int(ids_hi[mid])))
                support = sorted({i for f in poly_faces for i in f})
                cen = np.mean(verts[support], axis=0)
                cid = center_id + 1 + len(extra_verts)
                extra_verts.append(cen)
                for f in poly_faces:
                    tets.append((cid, f[0], f[1], f[2]))

    # center fan
    l_last, _ = shells[-1]
    ids_last = shell_ids[-1]
    for tri in hierarchy[l_last].cells:
        tets.append((center_id, int(ids_last[tri[0]]), int(ids_last[tri[1]]), int(ids_last[tri[2]])))

    verts = np.vstack([verts, np.zeros((1, 3))] + ([np.asarray(extra_verts)] if extra_verts else []))
    cells = np.asarray(tets, dtype=np.int64)
    v = verts[cells]
    vol = np.einsum("ij,ij->i", np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), v[:, 3] - v[:, 0])
    if np.any(np.abs(vol) < 1e-300):
        raise ConelabError("degenerate tetrahedra in volume mesh")
    bad = vol < 0
    cells[bad] = cells[bad][:, [0, 1, 3, 2]]

    # bindings
    bindings = [set() for _ in range(len(verts))]
    axis = {"x": 0, "y": 1}.get(half)
    for j, (lv, radii) in enumerate(shells):
        mesh_l = hierarchy[lv]
        d = mesh_l.vertices
        ids = shell_ids[j]
        for loc, vid in enumerate(ids):
            b = bindings[vid]
            mb = mesh_l.bindings[loc] if mesh_l.bindings else frozenset()
            if "plane" in mb:
                b.add("plane")
            if "rim" in mb and profiles:
                th = math.atan2(d[loc][1], d[loc][0])
                psis = [float(p(np.array([th]))[0]) for _, p in profiles]
                b.add(f"cone{member_index[id(profiles[int(np.argmin(psis))][0])]}")
        if j == 0:  # outer shell: active constraints
            rho = rho_by_level[lv]
            sphere_hit = np.abs(rho - R) < _SNAP_TOL * max(R, 1.0)
            for loc, vid in enumerate(ids):
                if sphere_hit[loc]:
                    bindings[vid].add("sphere")
            for m in shifted:
                ex = m.ray_exit(d)
                hit = np.abs(ex - rho) < 1e-9 * R
                for loc, vid in enumerate(ids):
                    if hit[loc]:
                        bindings[vid].add(f"cone{member_index[id(m)]}")
    if axis is not None:
        bindings[center_id].add("plane")
    for m in unshifted:
        bindings[center_id].add(f"cone{member_index[id(m)]}")
    bindings = tuple(frozenset(b) for b in bindings)

    # snappers
    projs = {"sphere": lambda q: q * (R / np.linalg.norm(q, axis=1, keepdims=True))}
    if axis is not None:
        def plane_proj(q, ax=axis):
            q = q.copy()
            q[:, ax] = 0.0
            return q

        projs["plane"] = plane_proj
    for i, m in enumerate(domain.members):
        projs[f"cone{i}"] = lambda q, m=m: _project_surface(m, q)

    snappers = {}
    names = list(projs)
    for name in names:
        snappers[frozenset({name})] = (lambda f: (lambda p: f(np.atleast_2d(np.asarray(p, float)))[0]))(projs[name])
    for k in (2, 3):
        for combo in itertools.combinations(names, k):
            snappers[frozenset(combo)] = _alternating_snap([projs[n] for n in combo])

    # boundary facets + tags
    facets = _boundary_faces(cells)
    tags = []
    for f in facets:
        bs = [bindings[i] for i in f]
        if axis is not None and all("plane" in b for b in bs):
            tags.append(DIRICHLET_ZERO)
        elif all("sphere" in b for b in bs):
            tags.append(DIRICHLET_ONE)
        else:
            tags.append(DIRICHLET_ZERO)

    # local edge-scale table over logarithmic radius bins
    vv = verts[cells]
    emax_cell = np.zeros(len(cells))
    for e0, e1 in itertools.combinations(range(4), 2):
        emax_cell = np.maximum(emax_cell, np.linalg.norm(vv[:, e0] - vv[:, e1], axis=1))
    rad_cell = np.linalg.norm(vv.mean(axis=1), axis=1)
    r_lo = max(1e-6 * R, 0.5 * float(np.min(rad_cell)))
    bins = np.geomspace(r_lo, R * 1.0001, 64)
    idx = np.clip(np.digitize(rad_cell, bins), 0, len(bins) - 1)
    table = np.zeros(len(bins))
    np.maximum.at(table, idx, emax_cell)

    def local_scale(r):
        k = int(np.clip(np.digitize(r, bins), 0, len(bins) - 1))
        lo, hi = max(0, k - 1), min(len(bins), k + 2)
        val = float(np.max(table[lo:hi]))
        return val if val > 0 else float(np.max(table))

    mesh = SimplicialMesh(
        ambient_dim=3,
        manifold_dim=3,
        vertices=verts,
        cells=cells,
        boundary_facets=facets,
        boundary_tags=tags,
        bindings=bindings,
        snappers=snappers,
        local_scale=local_scale,
    )
    # nominal resolution at radius r (the h the generator was aiming for
    # there); trace preconditions are phrased against this scale
    mesh.target_scale = lambda r: a * max(min(r, R), r_min if r_min is not None else R)
    if quality_floor_deg is not None:
        q = mesh.min_angle_deg()
        if q < quality_floor_deg:
            raise ConelabError(f"volume mesh quality {q:.2f} deg below floor")
    if validate:
        mesh.validate(quality_floor_deg=quality_floor_deg, check_duplicates=False)
    return mesh
