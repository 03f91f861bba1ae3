"""First-order eigenvalue perturbation of deformed spherical caps.

For a cap {polar angle < arccos(s)} the doubly degenerate second Dirichlet
eigenvalue splits under a normal deformation of the rim.  The split is
governed by a 2x2 symmetric matrix built from the rim normal speed and the
rim derivative of the radial factor of the second eigenfunctions; its
eigenvalues are the first-order slopes of the two eigenvalue branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import ConelabError, ResolutionError
from .geometry import EllipticCone3D, HalfSpace
from .spectrum import dirichlet_spectrum


@dataclass
class RadialProfile:
    """Radial factor q of a first-angular-mode cap eigenfunction."""

    s: float
    lam: float
    psi: np.ndarray
    q: np.ndarray
    rim_derivative: float


def _mode1_ode(lam):
    def rhs(psi, y):
        q, dq = y
        sp = math.sin(psi)
        return [dq, -math.cos(psi) / sp * dq + (1.0 / (sp * sp) - lam) * q]

    return rhs


def _shoot(lam, psi_end, dense=False):
    eps = 1e-8
    sol = solve_ivp(
        _mode1_ode(lam), (eps, psi_end), [eps, 1.0], method="DOP853",
        rtol=1e-12, atol=1e-14, dense_output=dense,
    )
    if not sol.success:
        raise ConelabError("radial shooting failed")
    return sol


def cap_radial_profile(s, lam, n_out=2001, rim_zero_tol=1e-6):
    """Shooting solution of the first-angular-mode radial problem.

    The profile is normalized so q(psi) cos(theta) has unit L2 norm on the
    cap; lam must be an eigenvalue of that mode (the shot must come back to
    zero at the rim), otherwise an error is raised.
    """
    if not -1.0 < s < 1.0:
        raise ValueError("cap height must lie in (-1, 1)")
    psi_end = math.acos(s)
    sol = _shoot(lam, psi_end, dense=True)
    psi = np.linspace(1e-8, psi_end, n_out)
    vals = sol.sol(psi)
    q, dq = vals[0], vals[1]
    if abs(q[-1]) > rim_zero_tol * np.max(np.abs(q)):
        raise ConelabError(
            f"lam={lam} is not an eigenvalue of the first angular mode on this cap"
        )
    if np.min(q[:-1]) < 0:
        raise ConelabError("profile changes sign; not the lowest mode of its symmetry")
    # normalize ||q cos(theta)||_{L2(cap)} = 1, i.e. pi * int q^2 sin = 1
    mass = np.trapezoid(q * q * np.sin(psi), psi) * math.pi
    scale = 1.0 / math.sqrt(mass)
    return RadialProfile(s=s, lam=lam, psi=psi, q=q * scale, rim_derivative=float(dq[-1] * scale))


def find_mode1_eigenvalue(s, bracket=(2.5, 30.0)):
    """Lowest first-angular-mode eigenvalue of the cap, by shooting."""
    psi_end = math.acos(s)

    def rim(lam):
        return _shoot(lam, psi_end).y[0, -1]

    lo, hi = bracket
    flo = rim(lo)
    grid = np.linspace(lo, hi, 60)
    for g in grid[1:]:
        fg = rim(g)
        if flo * fg < 0:
            return brentq(lambda L: rim(L), lo, g, xtol=1e-12)
        lo, flo = g, fg
    raise ConelabError("no eigenvalue found in bracket")


@dataclass
class CapDeformation:
    """Rim normal-speed profile of a deforming cap."""

    s: float
    theta: np.ndarray  # rim azimuth samples, uniform in [0, 2 pi)
    w: np.ndarray  # normal speed g(V, nu) at those samples
    family: object = None  # optional t -> cone callable
    symmetric: bool = False  # even and pi-periodic profile expected

    def __post_init__(self):
        if len(self.theta) < 256:
            raise ValueError("need at least 256 rim samples")
        if self.symmetric:
            wr = np.interp((-self.theta) % (2 * math.pi), self.theta, self.w, period=2 * math.pi)
            wp = np.interp((self.theta + math.pi) % (2 * math.pi), self.theta, self.w,
                           period=2 * math.pi)
            if np.max(np.abs(self.w - wr)) > 1e-8 or np.max(np.abs(self.w - wp)) > 1e-8:
                raise ConelabError("profile is not even and pi-periodic")


def perturbation_matrix(deformation, q_rim_derivative):
    """First-order splitting matrix of the degenerate second eigenvalue.

    Trapezoidal quadrature over the rim circle (exact for trigonometric
    polynomials up to the sampling degree); returns the symmetric 2x2
    matrix and its ascending eigenvalues.
    """
    th = deformation.theta
    w = deformation.w
    rim_radius = math.sin(math.acos(deformation.s))
    dth = 2.0 * math.pi / len(th)
    qp2 = q_rim_derivative ** 2
    c, s_ = np.cos(th), np.sin(th)
    m11 = -qp2 * np.sum(c * c * w) * dth * rim_radius
    m22 = -qp2 * np.sum(s_ * s_ * w) * dth * rim_radius
    m12 = -qp2 * np.sum(c * s_ * w) * dth * rim_radius
    m = np.array([[m11, m12], [m12, m22]])
    mu = np.linalg.eigvalsh(m)
    return m, mu


def narrowing_family(rate_x=1.0, rate_y=2.0):
    """Family of elliptic cones narrowing from the half-space.

    t maps to the cone with half-angles (pi/2 - rate_x t, pi/2 - rate_y t);
    the default narrows twice as fast along y as along x.
    """

    def family(t):
        if t == 0.0:
            return HalfSpace(3)
        return EllipticCone3D(math.pi / 2.0 - rate_x * t, math.pi / 2.0 - rate_y * t)

    return family


def rim_speed_from_family(family, t0=1e-4, n=1024):
    """Rim normal speed extracted from the family by Richardson differencing."""
    th = np.arange(n) * (2.0 * math.pi / n)
    base = family(0.0)
    if isinstance(base, HalfSpace):
        psi0 = np.full(n, math.pi / 2.0)
        s = 0.0
    else:
        psi0 = np.asarray(base.cap_polar_angle(th))
        s = math.cos(float(np.max(psi0)))
    p1 = np.asarray(family(t0).cap_polar_angle(th))
    p2 = np.asarray(family(t0 / 2.0).cap_polar_angle(th))
    w = (4.0 * (p2 - psi0) - (p1 - psi0)) / t0
    return CapDeformation(s=s, theta=th, w=w, family=family, symmetric=True)


@dataclass
class SplittingReport:
    t_samples: np.ndarray
    lambda2: np.ndarray
    lambda3: np.ndarray
    predicted_mu: np.ndarray
    measured_slopes: np.ndarray
    relative_errors: np.ndarray
    base_lambda: float
    simple: bool


def predicted_vs_measured_splitting(family=None, t_samples=(0.02, 0.014, 0.01),
                                    h=0.07, refinements=2):
    """First-order splitting slopes against finite-element eigenvalues.

    lambda_2 and lambda_3 of the deformed cap are computed as the first
    eigenvalues of the {x>0}- and {y>0}-bisected caps (their odd
    reflections are the full-cap eigenfunctions); measured slopes come from
    a quadratic fit through the measured base eigenvalue.
    """
    if family is None:
        family = narrowing_family()
    t_samples = np.asarray(sorted(t_samples, reverse=True), dtype=float)
    if len(t_samples) < 3 or np.max(t_samples) > 0.05:
        raise ValueError("need at least 3 samples with t <= 0.05")

    deform = rim_speed_from_family(family)
    prof = cap_radial_profile(deform.s, 6.0 if deform.s == 0.0 else find_mode1_eigenvalue(deform.s))
    _, mu = perturbation_matrix(deform, prof.rim_derivative)

    base = dirichlet_spectrum(family(0.0), bisect="x", count=1, h=h, refinements=refinements)
    lam0 = float(base.lambdas[0])
    l2, l3, errs = [], [], []
    for t in t_samples:
        cone = family(t)
        sx = dirichlet_spectrum(cone, bisect="x", count=1, h=h, refinements=refinements)
        sy = dirichlet_spectrum(cone, bisect="y", count=1, h=h, refinements=refinements)
        l2.append(float(min(sx.lambdas[0], sy.lambdas[0])))
        l3.append(float(max(sx.lambdas[0], sy.lambdas[0])))
        errs.append(abs(sx.level_lambdas[-1][0] - sx.lambdas[0])
                    + abs(sy.level_lambdas[-1][0] - sy.lambdas[0]))
    l2, l3 = np.asarray(l2), np.asarray(l3)
    if np.max(l3 - l2) < 2.0 * np.max(errs):
        raise ResolutionError("resolution: eigenvalue splitting is below the FEM noise")

    slopes = np.empty(2)
    for i, lam in enumerate((l2, l3)):
        ts = np.concatenate([[0.0], t_samples])
        ls = np.concatenate([[lam0], lam])
        coef = np.polyfit(ts, ls, 2)
        slopes[i] = coef[1]
    rel = np.abs(slopes - mu) / np.abs(mu)
    return SplittingReport(
        t_samples=t_samples,
        lambda2=l2,
        lambda3=l3,
        predicted_mu=mu,
        measured_slopes=slopes,
        relative_errors=rel,
        base_lambda=lam0,
        simple=bool(np.all(l2 < l3)),
    )
