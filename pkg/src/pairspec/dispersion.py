"""Refractive-index, phasematching-angle, and group-velocity-matching solvers.

Geometry: collinear propagation at angle theta to the optic axis of a
uniaxial crystal. Type-II means an extraordinary-polarized pump decaying
into one e- and one o-polarized daughter (the negative-uniaxial KDP/BBO
configuration). All wavelengths at this interface are vacuum nanometres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as C_LIGHT

from .crystals import CrystalSpec
from .errors import NoGvmPointError, NoPhasematchingError

# Relative wavelength step for the central-difference group-index derivative.
GROUP_INDEX_REL_STEP = 1e-4

PM_ANGLE_TOL_DEG = 1e-9
GVM_TOL_NM = 1e-4


@dataclass(frozen=True)
class GvmSolution:
    """Pump wavelength at which the e-pump and o-daughter group indices match."""

    pump_wavelength_nm: float
    phasematching_angle_deg: float
    group_index_pump_e: float
    group_index_daughter_o: float
    residual: float
    tolerance_nm: float = GVM_TOL_NM


def index_o(crystal: CrystalSpec, wavelength_nm):
    """Ordinary refractive index n_o(lambda)."""
    return crystal.sellmeier_o.index(wavelength_nm, crystal.name)


def index_e(crystal: CrystalSpec, wavelength_nm, theta_deg):
    """Extraordinary index at propagation angle theta from the optic axis.

    Index ellipsoid: n(theta)^-2 = cos^2(theta)/n_o^2 + sin^2(theta)/n_e^2
    with n_e the principal extraordinary index. Wavelength may be an array.
    """
    n_o = crystal.sellmeier_o.index(wavelength_nm, crystal.name)
    n_e = crystal.sellmeier_e.index(wavelength_nm, crystal.name)
    th = math.radians(theta_deg)
    inv_sq = math.cos(th) ** 2 / n_o ** 2 + math.sin(th) ** 2 / n_e ** 2
    return 1.0 / np.sqrt(inv_sq)


def _index(crystal, polarization, wavelength_nm, theta_deg):
    if polarization == "o":
        return index_o(crystal, wavelength_nm)
    if polarization == "e":
        return index_e(crystal, wavelength_nm, theta_deg)
    raise ValueError(f"polarization must be 'o' or 'e', got {polarization!r}")


def group_index(crystal: CrystalSpec, polarization, wavelength_nm, theta_deg=0.0,
                rel_step=GROUP_INDEX_REL_STEP):
    """Group index n_g = n - lambda * dn/dlambda.

    The derivative is a central finite difference with step
    rel_step * wavelength; both stencil points must sit inside the
    Sellmeier validity range.
    """
    h = rel_step * wavelength_nm
    n = _index(crystal, polarization, wavelength_nm, theta_deg)
    n_plus = _index(crystal, polarization, wavelength_nm + h, theta_deg)
    n_minus = _index(crystal, polarization, wavelength_nm - h, theta_deg)
    return n - wavelength_nm * (n_plus - n_minus) / (2.0 * h)


def delta_k(crystal: CrystalSpec, theta_deg, omega_e, omega_o):
    """Collinear wavevector mismatch k_p(w_e + w_o) - k_e(w_e) - k_o(w_o), rad/m.

    The pump and the e-daughter see the angle-dependent extraordinary
    index; the o-daughter sees the ordinary index. Frequencies may be
    broadcastable arrays (rad/s).
    """
    omega_p = omega_e + omega_o
    lam_p = 2.0 * math.pi * C_LIGHT / omega_p * 1e9
    lam_e = 2.0 * math.pi * C_LIGHT / omega_e * 1e9
    lam_o = 2.0 * math.pi * C_LIGHT / omega_o * 1e9
    k_p = index_e(crystal, lam_p, theta_deg) * omega_p / C_LIGHT
    k_e = index_e(crystal, lam_e, theta_deg) * omega_e / C_LIGHT
    k_o = index_o(crystal, lam_o) * omega_o / C_LIGHT
    return k_p - k_e - k_o


def phasematching_angle(crystal: CrystalSpec, pump_wavelength_nm,
                        degenerate_wavelength_nm):
    """Angle theta (degrees) at which degenerate collinear type-II is phasematched.

    Bisection of delta_k(theta) on (0, 90) degrees down to a 1e-9 degree
    bracket. Raises NoPhasematchingError if delta_k does not change sign.
    """
    if abs(degenerate_wavelength_nm - 2.0 * pump_wavelength_nm) > 1e-9 * degenerate_wavelength_nm:
        raise ValueError("degenerate wavelength must equal twice the pump wavelength")
    omega0 = 2.0 * math.pi * C_LIGHT / (degenerate_wavelength_nm * 1e-9)

    def mismatch(theta):
        return delta_k(crystal, theta, omega0, omega0)

    lo, hi = 1e-9, 90.0
    f_lo, f_hi = mismatch(lo), mismatch(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0.0:
        raise NoPhasematchingError(
            f"no phasematching: delta_k has no sign change on (0, 90) deg for "
            f"{crystal.name} pumped at {pump_wavelength_nm:.6g} nm"
        )
    # Bisect past the 1e-9 degree bracket until the wavevector residual at
    # the midpoint is also well below 1e-6 rad/m (or float resolution).
    f_mid = f_lo
    while (hi - lo > PM_ANGLE_TOL_DEG or abs(f_mid) > 1e-8) and (hi - lo) > 1e-13:
        mid = 0.5 * (lo + hi)
        f_mid = mismatch(mid)
        if f_mid == 0.0:
            return mid
        if f_lo * f_mid < 0.0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi)


def gvm_pump_wavelength(crystal: CrystalSpec, daughter_o_wavelength_nm,
                        scan_halfwidth_nm=50.0, rel_step=GROUP_INDEX_REL_STEP):
    """Pump wavelength at which the e-pump group-matches its o-daughter.

    Scans pump wavelengths in [d/2 - 50, d/2 + 50] nm, re-solving the
    degenerate phasematching angle at each trial, and bisects the
    group-index mismatch n_g,e(pump, theta_pm) - n_g,o(2*pump) to a
    1e-4 nm bracket. The daughter wavelength is tied to the pump by
    lambda_daughter = 2 * lambda_pump throughout the scan.
    """
    center = daughter_o_wavelength_nm / 2.0

    def mismatch(lam_p):
        theta = phasematching_angle(crystal, lam_p, 2.0 * lam_p)
        ng_pump = group_index(crystal, "e", lam_p, theta, rel_step=rel_step)
        ng_daughter = group_index(crystal, "o", 2.0 * lam_p, rel_step=rel_step)
        return ng_pump - ng_daughter, theta, ng_pump, ng_daughter

    # Coarse scan first: parts of the window may have no phasematching
    # solution at all, so bracket the sign change between valid points only.
    n_coarse = 101
    step = 2.0 * scan_halfwidth_nm / (n_coarse - 1)
    lo = hi = None
    prev = None
    for i in range(n_coarse):
        lam = center - scan_halfwidth_nm + i * step
        try:
            f, _, _, _ = mismatch(lam)
        except NoPhasematchingError:
            prev = None
            continue
        if prev is not None and prev[1] * f <= 0.0:
            lo, f_lo = prev
            hi = lam
            break
        prev = (lam, f)
    if lo is None:
        raise NoGvmPointError(
            f"no GVM point: group-index mismatch has no sign change in "
            f"[{center - scan_halfwidth_nm:.6g}, {center + scan_halfwidth_nm:.6g}] nm "
            f"for {crystal.name}"
        )
    # The 1e-4 nm bracket already pins the wavelength; keep bisecting a
    # little further so the reported group-index residual is < 1e-9.
    f_mid = f_lo
    while hi - lo > GVM_TOL_NM or (abs(f_mid) > 1e-10 and hi - lo > 1e-12):
        mid = 0.5 * (lo + hi)
        f_mid, _, _, _ = mismatch(mid)
        if f_lo * f_mid <= 0.0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    lam_p = 0.5 * (lo + hi)
    residual, theta, ng_pump, ng_daughter = mismatch(lam_p)
    return GvmSolution(
        pump_wavelength_nm=lam_p,
        phasematching_angle_deg=theta,
        group_index_pump_e=ng_pump,
        group_index_daughter_o=ng_daughter,
        residual=residual,
        tolerance_nm=GVM_TOL_NM,
    )
