"""Joint spectral amplitude construction, filtering, and marginals.

The two-photon amplitude on a rectangular frequency grid is the product
of a Gaussian pump envelope evaluated at the daughter-frequency sum and
the sinc-shaped phasematching response of the crystal, L2-normalized
with the grid measure. All internal math is in angular frequency;
wavelengths appear only at construction and export boundaries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as C_LIGHT

from .crystals import CrystalSpec
from .dispersion import delta_k, group_index, phasematching_angle
from .errors import ConfigError, FilterSupportError, NumericalError

TWO_PI_C = 2.0 * math.pi * C_LIGHT

NORM_TOL = 1e-9


def omega_from_nm(wavelength_nm):
    """Vacuum wavelength (nm) to angular frequency (rad/s)."""
    return TWO_PI_C / (np.asarray(wavelength_nm) * 1e-9)


def nm_from_omega(omega):
    """Angular frequency (rad/s) to vacuum wavelength (nm)."""
    return TWO_PI_C / np.asarray(omega) * 1e9


@dataclass(frozen=True)
class PumpSpec:
    """Gaussian pump pulse spectrum with flat spectral phase.

    fwhm_nm is the FWHM of the pump *intensity* spectrum in wavelength.
    eta scales the pair-generation amplitude and never affects normalized
    shapes.
    """

    center_nm: float
    fwhm_nm: float
    eta: float = 1.0

    def __post_init__(self):
        if self.center_nm <= 0 or self.fwhm_nm <= 0:
            raise ConfigError("pump center and FWHM must be positive")

    @property
    def omega_p(self):
        return TWO_PI_C / (self.center_nm * 1e-9)

    @property
    def sigma_omega(self):
        """Standard deviation of the intensity spectrum in rad/s."""
        d_omega = TWO_PI_C * self.fwhm_nm * 1e-9 / (self.center_nm * 1e-9) ** 2
        return d_omega / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def pump_envelope(pump: PumpSpec, omega_sum):
    """Pump amplitude at the daughter-frequency sum, peak value 1."""
    s = pump.sigma_omega
    return np.exp(-((np.asarray(omega_sum) - pump.omega_p) ** 2) / (4.0 * s ** 2))


def phasematching_function(crystal: CrystalSpec, theta_deg, omega_e, omega_o,
                           flat_phase=False):
    """sinc(dk L / 2) * exp(i dk L / 2); the phase factor is dropped in
    flat-phase mode."""
    length = crystal.length_mm * 1e-3
    x = delta_k(crystal, theta_deg, omega_e, omega_o) * length / 2.0
    amp = np.sinc(x / np.pi)
    if flat_phase:
        return amp.astype(complex) if np.ndim(amp) else complex(amp)
    return amp * np.exp(1j * x)


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform ascending frequency axes for the two daughter photons."""

    omega_e: np.ndarray
    omega_o: np.ndarray

    def __post_init__(self):
        for name, ax in (("omega_e", self.omega_e), ("omega_o", self.omega_o)):
            ax = np.asarray(ax, dtype=float)
            if ax.ndim != 1 or ax.size < 16:
                raise ConfigError(f"{name}: need a 1-d axis with >= 16 points")
            steps = np.diff(ax)
            if steps[0] <= 0 or not np.allclose(steps, steps[0], rtol=1e-9):
                raise ConfigError(f"{name}: axis must be uniform and ascending")
            object.__setattr__(self, name, ax)

    @property
    def d_omega_e(self):
        return float(self.omega_e[1] - self.omega_e[0])

    @property
    def d_omega_o(self):
        return float(self.omega_o[1] - self.omega_o[0])

    @property
    def measure(self):
        return self.d_omega_e * self.d_omega_o


@dataclass(frozen=True)
class JointAmplitude:
    """Complex two-photon amplitude, unit L2 norm including grid measure."""

    grid: FrequencyGrid
    values: np.ndarray  # indexed [e, o]
    flat_phase: bool = False
    norm_convention: str = "unit-L2-with-grid-measure"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.omega_e.size, self.grid.omega_o.size):
            raise ConfigError("values shape does not match the grid")
        if not np.all(np.isfinite(v)):
            raise NumericalError("joint amplitude contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def intensity(self):
        return np.abs(self.values) ** 2

    def norm_sq(self):
        return float(np.sum(self.intensity) * self.grid.measure)


def normalize(grid: FrequencyGrid, values, flat_phase=False):
    """Wrap raw amplitudes into a unit-norm JointAmplitude."""
    values = np.asarray(values, dtype=complex)
    norm_sq = np.sum(np.abs(values) ** 2) * grid.measure
    if not np.isfinite(norm_sq) or norm_sq == 0.0:
        raise NumericalError("cannot normalize: joint amplitude has zero norm")
    return JointAmplitude(grid, values / math.sqrt(norm_sq), flat_phase=flat_phase)


def build_grid(crystal: CrystalSpec, pump: PumpSpec, n_points=512,
               span_sigmas=4.0, theta_deg=None):
    """Square grid centered on the degenerate frequency omega_p / 2.

    The half-width is span_sigmas times a combined width estimate: the
    geometric mean of the pump's spectral sigma and the phasematching
    bandwidth 2*pi*c / (L * |group-index mismatch|), taken for the larger
    of the pump-e and pump-o mismatches. The geometric mean keeps the
    window tight enough that far sinc sidelobes do not dominate while
    still covering the broad (pump-limited) marginal.
    """
    if n_points < 16:
        raise ConfigError("n_points must be at least 16")
    if span_sigmas <= 0:
        raise ConfigError("span_sigmas must be positive")
    if theta_deg is None:
        theta_deg = crystal.cut_angle_deg
    if theta_deg is None:
        theta_deg = phasematching_angle(crystal, pump.center_nm, 2.0 * pump.center_nm)
    daughter_nm = 2.0 * pump.center_nm
    ng_p = group_index(crystal, "e", pump.center_nm, theta_deg)
    ng_e = group_index(crystal, "e", daughter_nm, theta_deg)
    ng_o = group_index(crystal, "o", daughter_nm)
    mismatch = max(abs(ng_p - ng_e), abs(ng_p - ng_o))
    length = crystal.length_mm * 1e-3
    if mismatch < 1e-12 or pump.sigma_omega <= 0:
        raise ConfigError("degenerate width estimate: cannot size the grid")
    sigma_pm = TWO_PI_C / (length * mismatch)
    sigma_est = math.sqrt(pump.sigma_omega * sigma_pm)
    omega0 = pump.omega_p / 2.0
    half = span_sigmas * sigma_est
    axis = np.linspace(omega0 - half, omega0 + half, n_points)
    return FrequencyGrid(omega_e=axis, omega_o=axis.copy())


def joint_amplitude(crystal: CrystalSpec, theta_deg, pump: PumpSpec,
                    grid: FrequencyGrid, flat_phase=False):
    """f = pump envelope times phasematching function, unit-normalized."""
    we = grid.omega_e[:, None]
    wo = grid.omega_o[None, :]
    alpha = pump_envelope(pump, we + wo)
    phi = phasematching_function(crystal, theta_deg, we, wo, flat_phase=flat_phase)
    return normalize(grid, alpha * phi, flat_phase=flat_phase)


@dataclass(frozen=True)
class FilterSpec:
    """Spectral intensity filter on one arm."""

    shape: str  # gaussian | rectangular | none
    arm: str  # e | o
    center_nm: float = 0.0
    fwhm_nm: float = 0.0

    def __post_init__(self):
        if self.shape not in ("gaussian", "rectangular", "none"):
            raise ConfigError(f"unknown filter shape {self.shape!r}")
        if self.arm not in ("e", "o"):
            raise ConfigError(f"filter arm must be 'e' or 'o', got {self.arm!r}")
        if self.shape != "none" and (self.fwhm_nm <= 0 or self.center_nm <= 0):
            raise ConfigError("filter center and FWHM must be positive")

    @classmethod
    def none(cls, arm):
        return cls(shape="none", arm=arm)


def filter_transmission(filt: FilterSpec, omega_axis):
    """Intensity transmission of a filter sampled on a frequency axis."""
    if filt.shape == "none":
        return np.ones_like(omega_axis)
    lam = nm_from_omega(omega_axis)
    if filt.shape == "gaussian":
        s = filt.fwhm_nm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        return np.exp(-((lam - filt.center_nm) ** 2) / (2.0 * s ** 2))
    return (np.abs(lam - filt.center_nm) <= filt.fwhm_nm / 2.0).astype(float)


def apply_filters(jsa: JointAmplitude, filters):
    """Multiply by the amplitude transmission sqrt(T) per arm and renormalize.

    Returns (filtered JointAmplitude, passed fraction), where the passed
    fraction is the intensity surviving the filters before renormalization.
    """
    t_e = np.ones_like(jsa.grid.omega_e)
    t_o = np.ones_like(jsa.grid.omega_o)
    for filt in filters:
        if filt.arm == "e":
            t_e = t_e * filter_transmission(filt, jsa.grid.omega_e)
        else:
            t_o = t_o * filter_transmission(filt, jsa.grid.omega_o)
    values = jsa.values * np.sqrt(t_e)[:, None] * np.sqrt(t_o)[None, :]
    passed = float(np.sum(np.abs(values) ** 2) * jsa.grid.measure) / jsa.norm_sq()
    if passed == 0.0:
        raise FilterSupportError("filter removes all support of the joint amplitude")
    return normalize(jsa.grid, values, flat_phase=jsa.flat_phase), passed


def marginal_spectrum(jsa: JointAmplitude, arm):
    """Single-arm intensity spectrum, peak-normalized.

    Returns (wavelength_nm ascending, intensity). The frequency marginal
    is relabeled in wavelength; no Jacobian is applied since the output
    is a peak-normalized shape on the sampled points.
    """
    if arm == "e":
        axis = jsa.grid.omega_e
        intensity = np.sum(jsa.intensity, axis=1) * jsa.grid.d_omega_o
    elif arm == "o":
        axis = jsa.grid.omega_o
        intensity = np.sum(jsa.intensity, axis=0) * jsa.grid.d_omega_e
    else:
        raise ConfigError(f"arm must be 'e' or 'o', got {arm!r}")
    lam = nm_from_omega(axis)
    order = np.argsort(lam)
    intensity = intensity[order]
    return lam[order], intensity / np.max(intensity)


def fwhm_of_curve(x, y):
    """FWHM of a peaked sampled curve by linear interpolation at half max."""
    y = np.asarray(y, dtype=float)
    half = np.max(y) / 2.0
    above = np.where(y >= half)[0]
    if above.size == 0:
        raise NumericalError("curve has no points above half maximum")
    i0, i1 = above[0], above[-1]
    if i0 == 0 or i1 == len(y) - 1:
        raise NumericalError("half-maximum crossings not bracketed by the axis")
    x_lo = np.interp(half, [y[i0 - 1], y[i0]], [x[i0 - 1], x[i0]])
    x_hi = np.interp(half, [y[i1 + 1], y[i1]], [x[i1 + 1], x[i1]])
    return float(abs(x_hi - x_lo))


def jsi_pearson(jsa: JointAmplitude):
    """Pearson correlation of the two frequencies under the JSI density."""
    density = jsa.intensity
    density = density / np.sum(density)
    p_e = density.sum(axis=1)
    p_o = density.sum(axis=0)
    we, wo = jsa.grid.omega_e, jsa.grid.omega_o
    mu_e = float(p_e @ we)
    mu_o = float(p_o @ wo)
    var_e = float(p_e @ (we - mu_e) ** 2)
    var_o = float(p_o @ (wo - mu_o) ** 2)
    cov = float(((we - mu_e)[:, None] * (wo - mu_o)[None, :] * density).sum())
    return cov / math.sqrt(var_e * var_o)


def export_jsi_csv(jsa: JointAmplitude, path):
    """Write the JSI matrix row-major with both axes in nm and rad/s."""
    with open(path, "w") as fh:
        fh.write("# axis_e_nm," + ",".join(f"{x:.9g}" for x in nm_from_omega(jsa.grid.omega_e)) + "\n")
        fh.write("# axis_e_rad_s," + ",".join(f"{x:.9g}" for x in jsa.grid.omega_e) + "\n")
        fh.write("# axis_o_nm," + ",".join(f"{x:.9g}" for x in nm_from_omega(jsa.grid.omega_o)) + "\n")
        fh.write("# axis_o_rad_s," + ",".join(f"{x:.9g}" for x in jsa.grid.omega_o) + "\n")
        np.savetxt(fh, jsa.intensity, delimiter=",", fmt="%.9g")


def export_metadata(path, crystal: CrystalSpec, pump: PumpSpec, jsa: JointAmplitude,
                    theta_deg=None, filters=(), extra=None):
    """Companion metadata: everything needed to reproduce the matrix."""
    meta = {
        "crystal": {
            "name": crystal.name,
            "length_mm": crystal.length_mm,
            "cut_angle_deg": theta_deg if theta_deg is not None else crystal.cut_angle_deg,
            "source_citation": crystal.source_citation,
        },
        "pump": {
            "center_nm": pump.center_nm,
            "fwhm_nm": pump.fwhm_nm,
            "eta": pump.eta,
        },
        "grid": {
            "n_e": int(jsa.grid.omega_e.size),
            "n_o": int(jsa.grid.omega_o.size),
            "omega_e_min": float(jsa.grid.omega_e[0]),
            "omega_e_max": float(jsa.grid.omega_e[-1]),
            "omega_o_min": float(jsa.grid.omega_o[0]),
            "omega_o_max": float(jsa.grid.omega_o[-1]),
        },
        "filters": [
            {"shape": f.shape, "arm": f.arm, "center_nm": f.center_nm, "fwhm_nm": f.fwhm_nm}
            for f in filters
        ],
        "flat_phase": jsa.flat_phase,
        "norm_convention": jsa.norm_convention,
        "out_of_model": {
            "absolute_pair_rate": "not simulated; eta is a user-supplied scale only",
            "detector_and_collection_efficiency": "not simulated; reported efficiencies are filter-limited",
        },
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
