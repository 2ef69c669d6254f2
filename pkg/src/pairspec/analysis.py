"""Experiment-level drivers: filter sweeps, synthetic counts, dip fits,
and simulated monochromator scans of the joint spectrum."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError, FilterSupportError
from .interference import HomScan, SourceSpec
from .jsa import FilterSpec, JointAmplitude, apply_filters, nm_from_omega
from .schmidt import heralding_efficiency, schmidt_decompose

FOUR_LN2 = 4.0 * math.log(2.0)


@dataclass(frozen=True)
class SweepResult:
    """Purity and heralding efficiency versus filter bandwidth."""

    bandwidths_nm: np.ndarray
    purities: np.ndarray
    heralding_efficiencies: np.ndarray
    config: dict
    gaps: tuple = ()  # (bandwidth, reason) pairs where filtering failed

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(self.config, sort_keys=True) + "\n")
            fh.write("bandwidth_nm,purity,heralding_efficiency\n")
            for b, p, e in zip(self.bandwidths_nm, self.purities,
                               self.heralding_efficiencies):
                fh.write(f"{b:.9g},{p:.9g},{e:.9g}\n")


def filter_sweep(source: SourceSpec, bandwidths_nm, filter_shape="gaussian",
                 symmetric=True, herald_arm="o"):
    """Schmidt purity and heralding efficiency along a filter-bandwidth ladder.

    Filters are centered on the degenerate wavelength. The herald arm is
    always filtered; with symmetric=True the signal arm gets an identical
    filter. A bandwidth of inf (or filter_shape "none") means no filter.
    Per-point filter failures are recorded as gaps (NaN in the arrays),
    not a global error.
    """
    if herald_arm not in ("e", "o"):
        raise ConfigError(f"herald_arm must be 'e' or 'o', got {herald_arm!r}")
    bandwidths_nm = np.asarray(bandwidths_nm, dtype=float)
    if bandwidths_nm.ndim != 1 or np.any(bandwidths_nm <= 0):
        raise ConfigError("bandwidths must be a 1-d positive array")
    jsa = source.build_jsa()
    center_nm = 2.0 * source.pump.center_nm
    signal_arm = "e" if herald_arm == "o" else "o"
    purities = np.empty_like(bandwidths_nm)
    efficiencies = np.empty_like(bandwidths_nm)
    gaps = []
    for i, bw in enumerate(bandwidths_nm):
        if math.isinf(bw) or filter_shape == "none":
            herald_f = FilterSpec.none(herald_arm)
            signal_f = FilterSpec.none(signal_arm)
        else:
            herald_f = FilterSpec(shape=filter_shape, arm=herald_arm,
                                  center_nm=center_nm, fwhm_nm=bw)
            signal_f = (
                FilterSpec(shape=filter_shape, arm=signal_arm,
                           center_nm=center_nm, fwhm_nm=bw)
                if symmetric else FilterSpec.none(signal_arm)
            )
        try:
            filtered, _ = apply_filters(jsa, [herald_f, signal_f])
            purities[i] = schmidt_decompose(filtered).purity
            efficiencies[i] = heralding_efficiency(jsa, herald_f, signal_f)
        except FilterSupportError as exc:
            purities[i] = np.nan
            efficiencies[i] = np.nan
            gaps.append((float(bw), str(exc)))
    config = {
        "crystal": source.crystal.name,
        "length_mm": source.crystal.length_mm,
        "pump_center_nm": source.pump.center_nm,
        "pump_fwhm_nm": source.pump.fwhm_nm,
        "filter_shape": filter_shape,
        "filter_center_nm": center_nm,
        "symmetric": symmetric,
        "herald_arm": herald_arm,
        "flat_phase": source.flat_phase,
        "n_points": source.n_points,
    }
    return SweepResult(
        bandwidths_nm=bandwidths_nm,
        purities=purities,
        heralding_efficiencies=efficiencies,
        config=config,
        gaps=tuple(gaps),
    )


@dataclass(frozen=True)
class CountRecord:
    """Integer coincidence counts over a delay scan."""

    delays_fs: np.ndarray
    counts: np.ndarray
    pairs_per_point: float
    seed: int

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if np.any(counts < 0) or not np.issubdtype(counts.dtype, np.integer):
            raise ConfigError("counts must be nonnegative integers")

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"# pairs_per_point,{self.pairs_per_point:.9g}\n")
            fh.write(f"# seed,{self.seed}\n")
            fh.write("delay_fs,counts\n")
            for t, n in zip(self.delays_fs, self.counts):
                fh.write(f"{t:.9g},{n}\n")

    @classmethod
    def from_csv(cls, path):
        pairs = 0.0
        seed = 0
        delays, counts = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    _, _, rest = line.partition(" ")
                    key, _, value = rest.partition(",")
                    if key == "pairs_per_point":
                        pairs = float(value)
                    elif key == "seed":
                        seed = int(value)
                    continue
                if line.startswith("delay_fs"):
                    continue
                t, _, n = line.partition(",")
                delays.append(float(t))
                counts.append(int(n))
        return cls(np.array(delays), np.array(counts, dtype=int), pairs, seed)


def simulate_counts(scan: HomScan, pairs_per_point, seed):
    """Draw Poissonian counts for each scan point, mean pairs_per_point * rate.

    Each point uses its own generator seeded with seed + index, so serial
    and parallel evaluations agree bit-exactly.
    """
    if pairs_per_point <= 0:
        raise ConfigError("pairs_per_point must be positive")
    counts = np.empty(scan.delays_fs.size, dtype=int)
    for i, rate in enumerate(scan.rates):
        rng = np.random.default_rng(seed + i)
        counts[i] = rng.poisson(pairs_per_point * rate)
    return CountRecord(
        delays_fs=scan.delays_fs.copy(),
        counts=counts,
        pairs_per_point=float(pairs_per_point),
        seed=int(seed),
    )


@dataclass(frozen=True)
class FitResult:
    """Weighted-least-squares Gaussian dip fit parameters."""

    baseline: float
    visibility: float
    center_fs: float
    fwhm_fs: float
    uncertainties: np.ndarray  # sigma of (baseline, visibility, center, fwhm)
    chi2_reduced: float
    converged: bool
    n_iterations: int

    def to_json(self, path=None):
        payload = {
            "baseline": self.baseline,
            "visibility": self.visibility,
            "center_fs": self.center_fs,
            "fwhm_fs": self.fwhm_fs,
            "uncertainties": {
                "baseline": float(self.uncertainties[0]),
                "visibility": float(self.uncertainties[1]),
                "center_fs": float(self.uncertainties[2]),
                "fwhm_fs": float(self.uncertainties[3]),
            },
            "chi2_reduced": self.chi2_reduced,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "model": "counts = B * (1 - V * exp(-4 ln2 (t - t0)^2 / w^2))",
            "weights": "1 / max(counts, 1)",
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return payload


def _dip_model(params, t):
    b, v, t0, w = params
    return b * (1.0 - v * np.exp(-FOUR_LN2 * (t - t0) ** 2 / w ** 2))


def _dip_jacobian(params, t):
    b, v, t0, w = params
    g = np.exp(-FOUR_LN2 * (t - t0) ** 2 / w ** 2)
    d_b = 1.0 - v * g
    d_v = -b * g
    d_t0 = -b * v * g * (2.0 * FOUR_LN2 * (t - t0) / w ** 2)
    d_w = -b * v * g * (2.0 * FOUR_LN2 * (t - t0) ** 2 / w ** 3)
    return np.stack([d_b, d_v, d_t0, d_w], axis=1)


def _initial_guess(delays, counts):
    """Deterministic data-driven start for the dip fit."""
    n = delays.size
    n_tail = max(1, int(round(0.2 * n)))
    tail_idx = np.argsort(np.abs(delays))[-n_tail:]
    baseline = float(np.mean(counts[tail_idx]))
    if baseline <= 0:
        baseline = max(float(np.max(counts)), 1.0)
    i_min = int(np.argmin(counts))
    t0 = float(delays[i_min])
    v = min(max(1.0 - float(counts[i_min]) / baseline, 0.0), 1.0)
    half_level = baseline * (1.0 - v / 2.0)
    below = counts <= half_level
    idx = np.where(below)[0]
    if idx.size >= 2 and delays[idx[-1]] > delays[idx[0]]:
        w = float(delays[idx[-1]] - delays[idx[0]])
    else:
        w = float(np.ptp(delays)) / 4.0
    if w <= 0:
        w = max(float(np.ptp(delays)), 1.0)
    return np.array([baseline, v, t0, w])


MAX_FIT_ITERATIONS = 200
PARAM_CHANGE_TOL = 1e-10
GRADIENT_TOL = 1e-8


def fit_gaussian_dip(record: CountRecord):
    """Fit B * (1 - V exp(-4 ln2 (t - t0)^2 / w^2)) by damped least squares.

    Weights are 1 / max(count, 1) (Poisson variance with a floor at one
    count). Uncertainties come from the inverse of the weighted normal
    matrix; chi2_reduced uses n - 4 degrees of freedom.
    """
    delays = np.asarray(record.delays_fs, dtype=float)
    counts = np.asarray(record.counts, dtype=float)
    if delays.size < 6:
        raise ConfigError("need at least 6 scan points to fit the dip")
    weights = 1.0 / np.maximum(counts, 1.0)

    if np.all(counts == counts[0]):
        # Flat data: the dip amplitude is zero and the width is undetermined.
        base = float(counts[0])
        dof = max(delays.size - 4, 1)
        return FitResult(
            baseline=base, visibility=0.0, center_fs=float(np.mean(delays)),
            fwhm_fs=float(np.ptp(delays)) / 4.0,
            uncertainties=np.array([math.sqrt(max(base, 1.0) / delays.size),
                                    np.nan, np.nan, np.nan]),
            chi2_reduced=0.0, converged=True, n_iterations=0,
        )

    params = _initial_guess(delays, counts)
    lam = 1e-3
    residuals = counts - _dip_model(params, delays)
    chi2 = float(np.sum(weights * residuals ** 2))
    converged = False
    iteration = 0
    for iteration in range(1, MAX_FIT_ITERATIONS + 1):
        jac = _dip_jacobian(params, delays)
        grad = jac.T @ (weights * residuals)
        normal = (jac * weights[:, None]).T @ jac
        step = None
        for _ in range(50):
            try:
                step = np.linalg.solve(
                    normal + lam * np.diag(np.diag(normal)), grad
                )
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + step
            trial_res = counts - _dip_model(trial, delays)
            trial_chi2 = float(np.sum(weights * trial_res ** 2))
            if np.isfinite(trial_chi2) and trial_chi2 <= chi2:
                break
            lam *= 10.0
        else:
            break
        rel_change = float(np.max(np.abs(step) / np.maximum(np.abs(params), 1e-300)))
        params, residuals, chi2 = trial, trial_res, trial_chi2
        lam = max(lam / 10.0, 1e-14)
        grad_norm = float(np.linalg.norm(
            _dip_jacobian(params, delays).T @ (weights * residuals)))
        # The gradient scale grows with the count level, so the absolute
        # gradient test is scaled by chi2; a negligible accepted step is
        # sufficient on its own.
        if rel_change < PARAM_CHANGE_TOL or grad_norm < GRADIENT_TOL * (1.0 + chi2):
            converged = True
            break

    jac = _dip_jacobian(params, delays)
    normal = (jac * weights[:, None]).T @ jac
    try:
        cov = np.linalg.inv(normal)
        sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        sigma = np.full(4, np.nan)
    dof = max(delays.size - 4, 1)
    return FitResult(
        baseline=float(params[0]),
        visibility=float(params[1]),
        center_fs=float(params[2]),
        fwhm_fs=float(abs(params[3])),
        uncertainties=sigma,
        chi2_reduced=chi2 / dof,
        converged=converged,
        n_iterations=iteration,
    )


@dataclass(frozen=True)
class JsiScanResult:
    """Simulated monochromator scan of the joint spectral intensity."""

    lambda_e_nm: np.ndarray
    lambda_o_nm: np.ndarray
    expected: np.ndarray  # mean counts per lattice cell, indexed [e, o]
    counts: np.ndarray | None  # Poisson sample, None for the noiseless sentinel
    resolution_fwhm_nm: float
    step_nm: float
    seed: int | None

    def to_csv(self, path):
        grid = self.counts if self.counts is not None else self.expected
        with open(path, "w") as fh:
            fh.write(f"# resolution_fwhm_nm,{self.resolution_fwhm_nm:.9g}\n")
            fh.write(f"# step_nm,{self.step_nm:.9g}\n")
            fh.write("# axis_e_nm," + ",".join(f"{x:.9g}" for x in self.lambda_e_nm) + "\n")
            fh.write("# axis_o_nm," + ",".join(f"{x:.9g}" for x in self.lambda_o_nm) + "\n")
            np.savetxt(fh, grid, delimiter=",", fmt="%.9g")


def simulate_jsi_scan(jsa: JointAmplitude, resolution_fwhm_nm, step_nm,
                      pairs_budget=None, seed=None):
    """Scan the JSI with two monochromators of Gaussian resolution.

    The true JSI is convolved with a separable Gaussian instrument
    response of the given intensity FWHM per axis and sampled on a
    wavelength lattice with the given step. pairs_budget is distributed
    over the lattice proportionally to the smoothed intensity and Poisson
    sampled; pass pairs_budget=None for the noiseless sentinel and
    resolution_fwhm_nm=0 for a delta-function instrument.
    """
    if step_nm <= 0:
        raise ConfigError("step_nm must be positive")
    if resolution_fwhm_nm < 0:
        raise ConfigError("resolution_fwhm_nm must be nonnegative")
    lam_e = nm_from_omega(jsa.grid.omega_e)[::-1]
    lam_o = nm_from_omega(jsa.grid.omega_o)[::-1]
    lat_e = np.arange(lam_e[0], lam_e[-1] + step_nm / 2.0, step_nm)
    lat_o = np.arange(lam_o[0], lam_o[-1] + step_nm / 2.0, step_nm)
    intensity = jsa.intensity[::-1, ::-1]  # ascending in wavelength
    if resolution_fwhm_nm == 0.0:
        interp = RegularGridInterpolator(
            (lam_e, lam_o), intensity, method="linear", bounds_error=False,
            fill_value=0.0,
        )
        ee, oo = np.meshgrid(lat_e, lat_o, indexing="ij")
        smoothed = interp(np.stack([ee.ravel(), oo.ravel()], axis=-1)).reshape(
            lat_e.size, lat_o.size
        )
    else:
        s = resolution_fwhm_nm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        resp_e = np.exp(-((lat_e[:, None] - lam_e[None, :]) ** 2) / (2.0 * s ** 2))
        resp_o = np.exp(-((lat_o[:, None] - lam_o[None, :]) ** 2) / (2.0 * s ** 2))
        smoothed = resp_e @ intensity @ resp_o.T
    total = float(smoothed.sum())
    if total <= 0.0:
        raise FilterSupportError("scan sees no intensity on the lattice")
    if pairs_budget is None:
        counts = None
        expected = smoothed
    else:
        if pairs_budget <= 0:
            raise ConfigError("pairs_budget must be positive (or None for noiseless)")
        expected = smoothed * (pairs_budget / total)
        if seed is None:
            raise ConfigError("seed is required when sampling counts")
        counts = np.empty_like(expected, dtype=int)
        # One generator per scan row keeps the output independent of any
        # parallel evaluation order over rows.
        for i in range(expected.shape[0]):
            rng = np.random.default_rng(seed + i)
            counts[i] = rng.poisson(expected[i])
    return JsiScanResult(
        lambda_e_nm=lat_e,
        lambda_o_nm=lat_o,
        expected=expected,
        counts=counts,
        resolution_fwhm_nm=float(resolution_fwhm_nm),
        step_nm=float(step_nm),
        seed=None if seed is None else int(seed),
    )


def scan_purity(result: JsiScanResult):
    """Schmidt purity of the scanned intensity assuming flat spectral phase."""
    grid = result.counts if result.counts is not None else result.expected
    amp = np.sqrt(np.clip(np.asarray(grid, dtype=float), 0.0, None))
    sv = np.linalg.svd(amp, compute_uv=False)
    weights = sv ** 2 / np.sum(sv ** 2)
    return float(np.sum(weights ** 2))
