"""End-to-end construction of the rotating-blow-up domain family.

The domain is a finite intersection of elliptic cones, alternately rotated
a quarter turn about the z-axis and shifted down it by amounts chosen so
that sphere traces of two auxiliary harmonic functions swap dominance from
one shift scale to the next.  The witness run solves on the deepest
truncation, forms the sum of the two odd-extended solutions, and tabulates
its blow-up mode coefficients across the selected radii.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConelabError, ResolutionError
from .frequency import TraceLab, blowup_trace
from .geometry import CsgDomain, EllipticCone3D, PlacedCone
from .harmonic import solve_mixed
from .meshing import _tet_dihedrals_deg
from .modes import half_space_modes
from .volmesh import mesh_domain_ball

QUARTER_TURN = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])

PAPER_ANGLES = "paper"


@dataclass
class Level:
    k: int
    x_half_angle: float
    y_half_angle: float
    rotation: np.ndarray
    delta: float = None
    entry_radius: float = None
    ratio: float = None
    target: float = None


@dataclass
class MeshSettings:
    h: float = 0.045
    r_floor: float = 2e-3
    quality_floor_deg: float = None  # sheared radial graphs carry slivers
    refine_check: bool = False


@dataclass
class CounterexampleState:
    levels: list
    clip_radius: float = 1.0
    mesh: MeshSettings = field(default_factory=MeshSettings)
    min_dihedral_seen: float = math.inf

    def cone(self, k):
        lev = self.levels[k - 1]
        return EllipticCone3D(lev.x_half_angle, lev.y_half_angle)

    def placed(self, k, shifted=True):
        lev = self.levels[k - 1]
        shift = lev.delta if (shifted and lev.delta is not None) else 0.0
        return PlacedCone(spec=self.cone(k), rotation=lev.rotation, shift=shift)

    def omega_hat(self, k):
        """Intersection of the first k shifted, rotated cones."""
        for lev in self.levels[:k]:
            if lev.delta is None:
                raise ConelabError(f"level {lev.k} shift not selected yet")
        members = tuple(self.placed(j) for j in range(1, k + 1))
        return CsgDomain(members=members, clip_radius=self.clip_radius)

    def omega(self, k):
        """omega_hat(k) intersected with the next cone, unshifted."""
        if k + 1 > len(self.levels):
            raise ConelabError("omega(k) needs level k+1")
        members = tuple(self.placed(j) for j in range(1, k + 1))
        members += (self.placed(k + 1, shifted=False),)
        return CsgDomain(members=members, clip_radius=self.clip_radius)


def build_levels(depth, angles=PAPER_ANGLES, clip_radius=1.0, mesh=None):
    """Interlacing cone angles and alternating quarter-turn rotations.

    The default angle schedule narrows toward the half-space as
    pi/2 - 4^-(k+1) along x and pi/2 - 2*4^-(k+1) along y; an explicit list
    of (x_half_angle, y_half_angle) pairs may be supplied instead, as long
    as it keeps the interlacing y_1 < x_1 < y_2 < x_2 < ... .
    """
    if depth > 4:
        raise ResolutionError("desk-scale depth exceeded (depth must be at most 4)")
    if depth < 1:
        raise ValueError("depth must be positive")
    levels = []
    for k in range(1, depth + 1):
        if angles == PAPER_ANGLES:
            ax = math.pi / 2.0 - 2.0 ** -(2 * k + 2)
            ay = math.pi / 2.0 - 2.0 ** -(2 * k + 1)
        else:
            ax, ay = angles[k - 1]
        rot = np.eye(3) if k % 2 == 1 else QUARTER_TURN
        levels.append(Level(k=k, x_half_angle=ax, y_half_angle=ay, rotation=rot))
    seq = []
    for lev in levels:
        seq.extend([lev.y_half_angle, lev.x_half_angle])
    if not all(a < b for a, b in zip(seq, seq[1:])):
        raise ConelabError("angle schedule must interlace y1 < x1 < y2 < x2 < ...")
    if seq[-1] >= math.pi / 2.0:
        raise ConelabError("half-angles must stay below pi/2")
    return CounterexampleState(levels=levels, clip_radius=clip_radius,
                               mesh=mesh or MeshSettings())


def entry_radius(state, k, n_dirs=4096, tol=None):
    """Largest radius whose boundary piece lies on the level-k cone alone.

    Equals the smallest norm among sampled boundary points of omega(k-1)
    that do not lie on the unshifted level-k cone surface; positive for
    every interlacing schedule.
    """
    if k == 1:
        return state.clip_radius
    domain = state.omega(k - 1)
    target = state.placed(k, shifted=False)
    if tol is None:
        tol = 1e-7 * state.clip_radius
    pts = domain.boundary_points(0.999999 * state.clip_radius, n_per_member=n_dirs)
    off = np.atleast_1d(target.surface_distance(pts)) >= tol
    if not np.any(off):
        return state.clip_radius
    rk = float(np.min(np.linalg.norm(pts[off], axis=1)))
    if rk <= 0:
        raise ConelabError("entry radius bracket is empty")
    return rk


def _solve_half(state, domain, half, r_min):
    cfg = state.mesh
    mesh = mesh_domain_ball(
        domain,
        half=half,
        h=cfg.h,
        r_min=r_min,
        quality_floor_deg=cfg.quality_floor_deg,
    )
    dih = float(np.min(_tet_dihedrals_deg(mesh.vertices[mesh.cells])))
    state.min_dihedral_seen = min(state.min_dihedral_seen, dih)
    return solve_mixed(mesh, domain=domain, odd_plane=half)


def auxiliary_solutions(state, k, delta_k=None, r_min=None):
    """The level-k pair of half-domain harmonic solutions.

    For odd k the x-bisected solution lives on omega(k-1) and the
    y-bisected one on omega_hat(k); even k swaps the bisections.  delta_k
    temporarily sets the level-k shift (during the shift search).
    """
    levels = [replace(lev) for lev in state.levels]
    if delta_k is not None:
        levels[k - 1].delta = delta_k
    st = replace(state, levels=levels)
    if r_min is None:
        d = levels[k - 1].delta
        r_min = max(state.mesh.r_floor / 2.0, (d or 1.0) / 8.0)
    dom_prev = st.omega(k - 1) if k >= 2 else st.omega(0)
    dom_hat = st.omega_hat(k)
    if k % 2 == 1:
        u1 = _solve_half(state, dom_prev, "x", r_min)
        u2 = _solve_half(state, dom_hat, "y", r_min)
    else:
        u1 = _solve_half(state, dom_hat, "x", r_min)
        u2 = _solve_half(state, dom_prev, "y", r_min)
    return u1, u2


def trace_ratio(u1, u2, r):
    """Ratio of full-sphere mean squares of the two odd-extended fields."""
    num = TraceLab(u1).mean_square(r)
    den = TraceLab(u2).mean_square(r)
    if den < 1e-30:
        raise ConelabError("vanishing trace in ratio")
    return num / den


def select_delta(state, k, target=None, margin=1.1, max_evals=10):
    """Shift search for level k by descent and bisection on log delta.

    Odd levels demand trace_ratio > target (the x-type solution dominates
    at its own scale), even levels the reciprocal; the returned state has
    the level's shift, achieved ratio, and entry radius recorded.
    """
    if target is None:
        target = {1: 1.5, 2: 0.67}.get(k, k if k % 2 == 1 else 1.0 / k)
    rk = entry_radius(state, k)
    hi = min(0.9 * rk, 0.24 * state.clip_radius)
    lo = max(state.mesh.r_floor, 1e-3 * state.clip_radius)
    if hi <= lo:
        raise ResolutionError(f"needs finer mesh: shift bracket [{lo:.3g}, {hi:.3g}] empty")
    odd = k % 2 == 1

    def satisfied(ratio):
        return ratio >= target * margin if odd else ratio <= target / margin

    evals = []

    def ratio_at(delta):
        u1, u2 = auxiliary_solutions(state, k, delta_k=delta,
                                     r_min=max(delta / 8.0, state.mesh.r_floor / 2.0))
        rr = trace_ratio(u1, u2, delta)
        evals.append((delta, rr))
        return rr

    delta = hi
    last_fail = None
    found = None
    for _ in range(max_evals):
        rr = ratio_at(delta)
        if satisfied(rr):
            found = (delta, rr)
            break
        last_fail = delta
        delta /= 2.0
        if delta < lo:
            break
    if found is None:
        best = max(evals, key=lambda e: e[1] if odd else -e[1])
        raise ResolutionError(
            f"needs finer mesh: level {k} criterion unmet; best ratio {best[1]:.3f} at shift {best[0]:.4g}"
        )
    if last_fail is not None:
        # one bisection step back toward the threshold for a larger shift
        mid = math.sqrt(found[0] * last_fail)
        rr = ratio_at(mid)
        if satisfied(rr):
            found = (mid, rr)
    levels = [replace(lev) for lev in state.levels]
    levels[k - 1].delta = found[0]
    levels[k - 1].ratio = found[1]
    levels[k - 1].target = target
    levels[k - 1].entry_radius = rk
    return replace(state, levels=levels)


@dataclass
class SumField:
    """Pointwise sum of two field evaluators sharing a support domain."""

    a: object
    b: object
    smooth = False

    @property
    def dim(self):
        return self.a.dim

    @property
    def mesh(self):
        return self.a.mesh

    def contains(self, points):
        return np.atleast_1d(self.a.contains(points)) | np.atleast_1d(self.b.contains(points))

    def value(self, points):
        return self.a.value(points) + self.b.value(points)

    def grad(self, points):
        return self.a.grad(points) + self.b.grad(points)


@dataclass
class WitnessReport:
    radii: np.ndarray
    coeff_z: np.ndarray
    coeff_xz: np.ndarray
    coeff_yz: np.ndarray
    dominance: np.ndarray  # |c_xz| / |c_yz|
    deltas: list
    min_dihedral_deg: float

    def dominance_at_deltas(self):
        out = []
        for d in self.deltas:
            i = int(np.argmin(np.abs(self.radii - d)))
            out.append(self.dominance[i])
        return out


def rotation_witness(state, radii=None, extra_dyadic=2):
    """Blow-up mode coefficients of u1 + u2 on the deepest truncation.

    Solves the two half-domain problems on omega_hat(depth), forms the odd
    extensions and their sum, and projects the normalized blow-up traces
    onto the half-space modes (z, xz, yz); the dominance column is the
    xz-to-yz coefficient magnitude ratio.
    """
    depth = len(state.levels)
    deltas = [lev.delta for lev in state.levels]
    if any(d is None for d in deltas):
        raise ConelabError("all shifts must be selected before the witness run")
    dom = state.omega_hat(depth)
    r_min = max(min(deltas) / 8.0, state.mesh.r_floor / 2.0)
    u1 = _solve_half(state, dom, "x", r_min)
    u2 = _solve_half(state, dom, "y", r_min)
    u = SumField(u1, u2)
    if radii is None:
        radii = sorted(set(deltas) | {d * 2.0 ** (j + 1) for d in deltas for j in range(extra_dyadic)})
        radii = [r for r in radii if r <= 0.5 * state.clip_radius]
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    basis = half_space_modes(3)
    lab = TraceLab(u)
    cz, cx, cy = [], [], []
    for r in radii:
        _, coef = blowup_trace(lab, r, basis)
        cz.append(coef[0])
        cx.append(coef[1])
        cy.append(coef[2])
    cx = np.asarray(cx)
    cy = np.asarray(cy)
    dom_ratio = np.abs(cx) / np.maximum(np.abs(cy), 1e-300)
    return WitnessReport(
        radii=radii,
        coeff_z=np.asarray(cz),
        coeff_xz=cx,
        coeff_yz=cy,
        dominance=dom_ratio,
        deltas=deltas,
        min_dihedral_deg=state.min_dihedral_seen,
    )


def control_state(state):
    """Same angles and shifts but no rotations; the no-swap control run."""
    levels = [replace(lev, rotation=np.eye(3)) for lev in state.levels]
    return replace(state, levels=levels)
