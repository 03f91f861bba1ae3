"""Doubling indices, Almgren frequencies, blow-up traces, expansion fits.

All quantities are computed from full-sphere traces of zero-extended
fields.  Solid-ball integrals are assembled from dyadic radial bands of
Gauss quadrature over sphere traces (with a geometric closure below the
resolvable floor), which lets a profile over dyadic radii reuse every band
it has already integrated.

The doubling index over spheres at radii (r, r/4) equals 16 to the power
of the dyadic average of the Almgren frequency F, and the ball version at
(r, r/2) equals 2 to the power of the average of the weighted frequency;
both identities are checked numerically by `bridge_check`.  (On radially
homogeneous fields of degree m they reduce to N = 16^m, F = m.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConelabError
from .quadrature import _gl, sphere_trace

_VANISH = 1e-30


class TraceLab:
    """Per-field cache of sphere traces and dyadic radial band integrals."""

    def __init__(self, field, rel_tol=1e-8):
        self.field = field
        self.rel_tol = rel_tol
        self._traces = {}
        self._grads = {}
        self._bands = {}

    def trace(self, r):
        if r not in self._traces:
            self._check_radius(r)
            self._traces[r] = sphere_trace(self.field, r, rel_tol=self.rel_tol)
        return self._traces[r]

    def grad_sq_at(self, r):
        """Integral of |grad u|^2 over bd(B_r)."""
        if r not in self._grads:
            tr = self.trace(r)
            g = self.field.grad(tr.nodes)
            self._grads[r] = float(np.sum(tr.weights * np.sum(g * g, axis=1)))
        return self._grads[r]

    def sphere_sq_integral(self, r):
        tr = self.trace(r)
        return float(np.sum(tr.weights * tr.values ** 2))

    def mean_square(self, r):
        return self.trace(r).mean_square()

    def _check_radius(self, r):
        scale_fn = getattr(getattr(self.field, "mesh", None), "target_scale", None)
        if scale_fn is not None and r < 20.0 * scale_fn(r):
            raise ConelabError(
                f"trace radius {r:.4g} below 20x the local mesh scale {scale_fn(r):.4g}"
            )

    def _band(self, kind, lo, hi, n_gl=8):
        key = (kind, lo, hi)
        if key not in self._bands:
            xg, wg = _gl(n_gl)
            s = 0.5 * (hi + lo) + 0.5 * (hi - lo) * xg
            w = 0.5 * (hi - lo) * wg
            shell = {
                "u2": self.sphere_sq_integral,
                "grad2": self.grad_sq_at,
                "grad2_x2": lambda rr: self.grad_sq_at(rr) * rr * rr,
            }[kind]
            self._bands[key] = float(np.sum([wi * shell(si) for si, wi in zip(s, w)]))
        return self._bands[key]

    def ball_integral(self, kind, r, rel_floor=1e-11, max_bands=48):
        """Integral over B_r by dyadic bands with geometric closure."""
        total = 0.0
        prev = None
        hi = r
        for _ in range(max_bands):
            lo = hi / 2.0
            try:
                band = self._band(kind, lo, hi)
            except ConelabError:
                # below the resolvable floor: close with the measured decay
                if prev is None or prev <= 0:
                    break
                q = 0.5  # worst-case decay for nonnegative integrands
                total += prev * q / (1.0 - q)
                return total
            total += band
            if prev is not None and band <= rel_floor * max(total, _VANISH):
                q = band / prev if prev > 0 else 0.0
                q = min(q, 0.9)
                total += band * q / (1.0 - q)
                return total
            prev = band
            hi = lo
        return total


def _as_lab(u):
    return u if isinstance(u, TraceLab) else TraceLab(u)


def doubling_index(u, r):
    """Ratio of full-sphere mean squares at radii r and r/4."""
    lab = _as_lab(u)
    num = lab.mean_square(r)
    den = lab.mean_square(r / 4.0)
    if den < _VANISH:
        raise ConelabError("vanishing trace")
    return num / den


def ball_doubling(u, r):
    """Ratio of solid-ball mean squares at radii r and r/2."""
    lab = _as_lab(u)
    d = lab.field.dim
    num = lab.ball_integral("u2", r)
    den = lab.ball_integral("u2", r / 2.0)
    if den < _VANISH:
        raise ConelabError("vanishing trace")
    return (num / den) * 0.5 ** d


def almgren(u, r):
    """Frequency F(r) and its ball-weighted variant at radius r."""
    lab = _as_lab(u)
    tr_den = lab.sphere_sq_integral(r)
    if tr_den < _VANISH:
        raise ConelabError("vanishing trace")
    dir_r = lab.ball_integral("grad2", r)
    F = r * dir_r / tr_den
    ball_den = lab.ball_integral("u2", r)
    if ball_den < _VANISH:
        raise ConelabError("vanishing trace")
    Ft = (r * r * dir_r - lab.ball_integral("grad2_x2", r)) / ball_den
    return F, Ft


@dataclass
class FrequencyProfile:
    """Sampled frequency quantities over dyadic radii with limit diagnostics."""

    radii: np.ndarray
    doubling: np.ndarray
    ball: np.ndarray
    frequency: np.ndarray
    frequency_ball: np.ndarray
    status: str  # 'finite', 'undetermined'
    limit: float = None
    matched_m: float = None
    matched_index: int = None
    matched_distance: float = None


def frequency_profile(u, r_min, r_max, spectrum=None, window=4, spread_tol=0.02):
    """Dyadic profile of N, its ball variant, F and the weighted F.

    The limit is declared detected when the last ``window`` doubling values
    have relative spread below ``spread_tol``; the matched homogeneity is
    log_4(sqrt(N)) compared against the spectrum's characteristic constants
    when one is supplied.
    """
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    lab = _as_lab(u)
    radii = []
    r = r_max
    while r >= r_min * (1.0 - 1e-12):
        radii.append(r)
        r /= 2.0
    radii = np.asarray(radii)
    N = np.array([doubling_index(lab, rr) for rr in radii])
    Nt = np.array([ball_doubling(lab, rr) for rr in radii])
    FF = np.array([almgren(lab, rr) for rr in radii])
    prof = FrequencyProfile(
        radii=radii, doubling=N, ball=Nt, frequency=FF[:, 0], frequency_ball=FF[:, 1],
        status="undetermined",
    )
    if len(N) >= window:
        tail = N[-window:]
        spread = (np.max(tail) - np.min(tail)) / np.mean(tail)
        if spread < spread_tol:
            prof.status = "finite"
            prof.limit = float(np.mean(tail))
            prof.matched_m = math.log(prof.limit) / math.log(4.0) / 2.0
            if spectrum is not None:
                dist = np.abs(spectrum.ms - prof.matched_m)
                prof.matched_index = int(np.argmin(dist))
                prof.matched_distance = float(dist[prof.matched_index])
    return prof


def _mode_evaluator(modes):
    if hasattr(modes, "eval_unit"):
        return modes.eval_unit, np.asarray(modes.degrees, dtype=float)
    if hasattr(modes, "interpolator"):
        return modes.interpolator(), np.asarray(modes.ms, dtype=float)
    raise TypeError("modes must be a ModeBasis or SpectrumResult")


def blowup_trace(u, r, modes):
    """Normalized blow-up trace and its cross-section mode coefficients.

    The trace is divided by the root mean square over the part of bd(B_r)
    inside the support; coefficients are quadrature inner products against
    unit-L2 cross-section modes, scaled so a pure mode has coefficient 1
    and Bessel gives sum of squares at most 1.
    """
    lab = _as_lab(u)
    tr = lab.trace(r)
    rms2 = tr.restricted_mean_square()
    if rms2 < _VANISH:
        raise ConelabError("vanishing trace")
    rms = math.sqrt(rms2)
    eval_unit, _ = _mode_evaluator(modes)
    psi = eval_unit(tr.nodes / r)
    d = lab.field.dim
    denom = math.sqrt(tr.restricted_measure() * r ** (d - 1))
    coeffs = (tr.weights * tr.values / rms) @ psi / denom
    normalized = dataclass_replace_values(tr, tr.values / rms)
    return normalized, coeffs


def dataclass_replace_values(tr, new_values):
    from dataclasses import replace

    return replace(tr, values=new_values)


def comparability_check(u, radii):
    """Empirical constants for the two ball-vs-sphere doubling inequalities.

    Returns the maxima of ball/sphere doubling ratios and of the sphere
    doubling against the product of four dyadic ball doublings.
    """
    lab = _as_lab(u)
    ratio1 = []
    ratio2 = []
    for r in radii:
        n_r = doubling_index(lab, r)
        nt_r = ball_doubling(lab, r)
        ratio1.append(nt_r / n_r)
        prod = 1.0
        for j in range(4):
            prod *= ball_doubling(lab, 2.0 ** (1 - j) * r)
        for s in (0.55 * r, 0.75 * r, 0.95 * r):
            ratio2.append(doubling_index(lab, s) / prod)
    return {
        "ball_over_sphere_max": float(np.max(ratio1)),
        "sphere_over_ball_product_max": float(np.max(ratio2)),
    }


def bridge_check(u, r, n_gl=12):
    """Doubling indices against exponentiated frequency averages.

    Checks N(r) = 16^avg(F) over the dyadic window (r/4, r) and the ball
    version = 2^avg(weighted F) over (r/2, r); returns relative defects.
    """
    lab = _as_lab(u)
    xg, wg = _gl(n_gl)
    t = math.log(r) / math.log(4.0)
    svals = (t - 1.0) + 0.5 * (xg + 1.0)
    integral_F = 0.5 * float(np.sum(wg * [almgren(lab, 4.0 ** s)[0] for s in svals]))
    n_pred = 16.0 ** integral_F
    n_meas = doubling_index(lab, r)
    t2 = math.log(r) / math.log(2.0)
    svals2 = (t2 - 1.0) + 0.5 * (xg + 1.0)
    integral_Ft = 0.5 * float(np.sum(wg * [almgren(lab, 2.0 ** s)[1] for s in svals2]))
    nt_pred = 2.0 ** integral_Ft
    nt_meas = ball_doubling(lab, r)
    return {
        "doubling": n_meas,
        "doubling_from_frequency": n_pred,
        "doubling_rel_defect": abs(n_meas - n_pred) / n_meas,
        "ball": nt_meas,
        "ball_from_frequency": nt_pred,
        "ball_rel_defect": abs(nt_meas - nt_pred) / nt_meas,
    }


@dataclass
class ExpansionFit:
    """Leading-mode fit u ~ C r^m psi with a remainder decay estimate."""

    index: int
    degree: float
    coefficient: float
    coefficient_samples: np.ndarray
    remainder_slope: float
    remainder_is_floor: bool
    slope_exceeds_degree: bool


def expansion_fit(u, modes, radii, profile=None, spectrum_for_profile=None):
    """Fit the leading homogeneous mode over the given radii.

    Requires the doubling profile to have detected a finite limit; the
    matched characteristic constant selects the mode index, the coefficient
    comes from least squares of the per-radius mode amplitudes, and the
    remainder slope from a log-log fit of the residual trace norms.
    """
    lab = _as_lab(u)
    eval_unit, degrees = _mode_evaluator(modes)
    if profile is None:
        profile = frequency_profile(lab, min(radii), max(radii),
                                    spectrum=spectrum_for_profile)
    if profile.status != "finite":
        raise ConelabError("no finite doubling limit; expansion fit undefined")
    dist = np.abs(degrees - profile.matched_m)
    idx = int(np.argmin(dist))
    m = float(degrees[idx])
    d = lab.field.dim

    amps = []
    rems = []
    for r in radii:
        tr = lab.trace(r)
        psi = eval_unit(tr.nodes / r)[:, idx]
        amp = float(np.sum(tr.weights * tr.values * psi)) / (r ** m * r ** (d - 1))
        amps.append(amp)
    C = float(np.mean(amps))
    for r in radii:
        tr = lab.trace(r)
        psi = eval_unit(tr.nodes / r)[:, idx]
        diff = tr.values - C * r ** m * psi
        rems.append(math.sqrt(float(np.sum(tr.weights * diff ** 2) / np.sum(tr.weights))))
    rems = np.asarray(rems)
    amps = np.asarray(amps)
    scale = abs(C) * np.asarray(radii) ** m
    floor = np.all(rems <= 1e-6 * np.maximum(scale, _VANISH))
    if floor:
        slope = math.inf
    else:
        slope = float(np.polyfit(np.log(radii), np.log(np.maximum(rems, _VANISH)), 1)[0])
    return ExpansionFit(
        index=idx,
        degree=m,
        coefficient=C,
        coefficient_samples=amps,
        remainder_slope=slope,
        remainder_is_floor=bool(floor),
        slope_exceeds_degree=bool(slope > m),
    )
