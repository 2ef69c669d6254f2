import math

import numpy as np
import pytest

from pairspec.analysis import (CountRecord, FitResult, filter_sweep,
                               fit_gaussian_dip, scan_purity, simulate_counts,
                               simulate_jsi_scan)
from pairspec.errors import ConfigError
from pairspec.interference import HomScan, two_source_experiment
from pairspec.jsa import jsi_pearson


FOUR_LN2 = 4.0 * math.log(2.0)


def dip_curve(delays, baseline, visibility, center, fwhm):
    return baseline * (1.0 - visibility
                       * np.exp(-FOUR_LN2 * (delays - center) ** 2 / fwhm ** 2))


def make_scan(delays, rates):
    return HomScan(delays_fs=np.asarray(delays, dtype=float),
                   rates=np.asarray(rates, dtype=float),
                   visibility=float(1.0 - np.min(rates)),
                   dip_fwhm_fs=0.0, dip_center_fs=0.0)


class TestFilterSweep:
    def test_kdp_purity_insensitive_to_filtering(self, kdp_source):
        sweep = filter_sweep(kdp_source, np.linspace(20.0, 2.0, 10),
                             herald_arm="o")
        finite = sweep.purities[np.isfinite(sweep.purities)]
        assert finite.size == 10
        assert finite.max() - finite.min() < 0.03
        assert np.all(finite >= 0.95)

    def test_bbo_purity_efficiency_tradeoff(self, bbo_source):
        bandwidths = np.linspace(20.0, 1.0, 20)
        sweep = filter_sweep(bbo_source, bandwidths, herald_arm="o")
        crossing = np.where(sweep.purities >= 0.95)[0]
        assert crossing.size > 0
        eff = sweep.heralding_efficiencies[crossing[0]]
        assert eff == pytest.approx(0.75, abs=0.10)

    def test_narrowing_filters_monotone(self, bbo_source):
        bandwidths = np.array([16.0, 8.0, 4.0, 2.0, 1.0])
        sweep = filter_sweep(bbo_source, bandwidths, herald_arm="o")
        assert np.all(np.diff(sweep.purities) > 0)
        assert np.all(np.diff(sweep.heralding_efficiencies) < 0)

    def test_infinite_bandwidth_matches_unfiltered(self, bbo_source, bbo_jsa):
        from pairspec.schmidt import schmidt_decompose
        sweep = filter_sweep(bbo_source, np.array([np.inf, 4.0]))
        assert sweep.purities[0] == pytest.approx(
            schmidt_decompose(bbo_jsa).purity, abs=1e-9)
        assert sweep.heralding_efficiencies[0] == pytest.approx(1.0, abs=1e-12)

    def test_unsupported_bandwidth_is_gap_not_crash(self, bbo_source):
        sweep = filter_sweep(bbo_source, np.array([4.0, 1e-6]),
                             filter_shape="rectangular")
        assert np.isfinite(sweep.purities[0])
        assert np.isnan(sweep.purities[1])
        assert len(sweep.gaps) == 1 and sweep.gaps[0][0] == pytest.approx(1e-6)

    def test_invalid_inputs(self, bbo_source):
        with pytest.raises(ConfigError):
            filter_sweep(bbo_source, np.array([-1.0]))
        with pytest.raises(ConfigError):
            filter_sweep(bbo_source, np.array([4.0]), herald_arm="x")


class TestSimulateCounts:
    delays = np.linspace(-1000, 1000, 41)

    def test_deterministic_for_fixed_seed(self):
        scan = make_scan(self.delays, dip_curve(self.delays, 1.0, 0.9, 0.0, 300.0))
        a = simulate_counts(scan, 500.0, seed=7)
        b = simulate_counts(scan, 500.0, seed=7)
        np.testing.assert_array_equal(a.counts, b.counts)
        c = simulate_counts(scan, 500.0, seed=8)
        assert np.any(a.counts != c.counts)

    def test_mean_tracks_rate(self):
        scan = make_scan(self.delays, dip_curve(self.delays, 1.0, 0.9, 0.0, 300.0))
        record = simulate_counts(scan, 1e6, seed=3)
        expected = 1e6 * scan.rates
        # 5-sigma Poisson band per point
        assert np.all(np.abs(record.counts - expected) < 5.0 * np.sqrt(expected) + 5)

    def test_counts_are_nonnegative_integers(self):
        scan = make_scan(self.delays, dip_curve(self.delays, 1.0, 1.0, 0.0, 300.0))
        record = simulate_counts(scan, 20.0, seed=1)
        assert np.issubdtype(record.counts.dtype, np.integer)
        assert np.all(record.counts >= 0)

    def test_invalid_pairs(self):
        scan = make_scan(self.delays, np.ones_like(self.delays))
        with pytest.raises(ConfigError):
            simulate_counts(scan, 0.0, seed=1)

    def test_csv_roundtrip(self, tmp_path):
        scan = make_scan(self.delays, dip_curve(self.delays, 1.0, 0.9, 0.0, 300.0))
        record = simulate_counts(scan, 500.0, seed=11)
        path = tmp_path / "counts.csv"
        record.to_csv(path)
        back = CountRecord.from_csv(path)
        np.testing.assert_array_equal(back.counts, record.counts)
        np.testing.assert_allclose(back.delays_fs, record.delays_fs)
        assert back.seed == 11 and back.pairs_per_point == 500.0


class TestFitGaussianDip:
    delays = np.linspace(-1200, 1200, 61)

    def test_noiseless_recovery(self):
        truth = (1000.0, 0.944, 35.0, 440.0)
        counts = np.round(dip_curve(self.delays, *truth)).astype(int)
        fit = fit_gaussian_dip(CountRecord(self.delays, counts, truth[0], 0))
        assert fit.converged
        assert fit.baseline == pytest.approx(truth[0], rel=1e-3)
        assert fit.visibility == pytest.approx(truth[1], rel=1e-3)
        assert fit.center_fs == pytest.approx(truth[2], abs=1.0)
        assert fit.fwhm_fs == pytest.approx(truth[3], rel=1e-3)

    def test_high_count_noiseless_precision(self):
        # Without integer rounding the optimizer reaches the exact truth.
        truth = (1e6, 0.9, 0.0, 300.0)
        counts = dip_curve(self.delays, *truth)
        record = CountRecord(self.delays, np.round(counts).astype(int), truth[0], 0)
        fit = fit_gaussian_dip(record)
        assert fit.visibility == pytest.approx(truth[1], rel=1e-5)
        assert fit.fwhm_fs == pytest.approx(truth[3], rel=1e-5)

    def test_fit_is_a_fixed_point(self):
        truth = (2000.0, 0.8, -50.0, 350.0)
        counts = np.round(dip_curve(self.delays, *truth)).astype(int)
        record = CountRecord(self.delays, counts, truth[0], 0)
        first = fit_gaussian_dip(record)
        refit_counts = np.round(dip_curve(
            self.delays, first.baseline, first.visibility, first.center_fs,
            first.fwhm_fs)).astype(int)
        second = fit_gaussian_dip(CountRecord(self.delays, refit_counts, truth[0], 0))
        assert second.visibility == pytest.approx(first.visibility, abs=1e-3)
        assert second.fwhm_fs == pytest.approx(first.fwhm_fs, rel=1e-3)

    def test_flat_counts_give_zero_visibility(self):
        record = CountRecord(self.delays, np.full(self.delays.size, 250), 250.0, 0)
        fit = fit_gaussian_dip(record)
        assert fit.converged
        assert fit.visibility == 0.0

    def test_coverage_of_reported_uncertainties(self):
        # 200 noisy replicates: the true visibility should fall inside
        # +-3 sigma of the fitted value in >= 98% of them.
        truth = (800.0, 0.85, 0.0, 400.0)
        rates = dip_curve(self.delays, 1.0, truth[1], truth[2], truth[3])
        scan = make_scan(self.delays, rates)
        hits = 0
        trials = 200
        for trial in range(trials):
            record = simulate_counts(scan, truth[0], seed=1000 + 101 * trial)
            fit = fit_gaussian_dip(record)
            if not fit.converged or not np.isfinite(fit.uncertainties[1]):
                continue
            if abs(fit.visibility - truth[1]) <= 3.0 * fit.uncertainties[1]:
                hits += 1
        assert hits / trials >= 0.98

    def test_too_few_points_rejected(self):
        with pytest.raises(ConfigError):
            fit_gaussian_dip(CountRecord(np.arange(5.0), np.ones(5, dtype=int), 1.0, 0))

    def test_json_export(self, tmp_path):
        truth = (1000.0, 0.9, 0.0, 300.0)
        counts = np.round(dip_curve(self.delays, *truth)).astype(int)
        fit = fit_gaussian_dip(CountRecord(self.delays, counts, truth[0], 0))
        payload = fit.to_json(tmp_path / "fit.json")
        assert payload["visibility"] == fit.visibility
        assert (tmp_path / "fit.json").exists()


class TestEndToEndCounts:
    def test_fit_recovers_simulated_experiment(self, kdp_source):
        delays = np.linspace(-1500, 1500, 61)
        scan = two_source_experiment(kdp_source, kdp_source, "o", delays)
        record = simulate_counts(scan, 2000.0, seed=42)
        fit = fit_gaussian_dip(record)
        assert fit.converged
        # The true dip is not exactly Gaussian (sinc sidelobes), so allow a
        # model-mismatch margin beyond the statistical uncertainty.
        assert abs(fit.visibility - scan.visibility) <= 3.0 * fit.uncertainties[1] + 0.05
        assert fit.fwhm_fs == pytest.approx(scan.dip_fwhm_fs, rel=0.15)


class TestJsiScan:
    def test_zero_resolution_preserves_structure(self, kdp_jsa):
        result = simulate_jsi_scan(kdp_jsa, resolution_fwhm_nm=0.0, step_nm=0.1)
        assert result.counts is None
        assert scan_purity(result) == pytest.approx(
            # flat-phase JSA: sqrt(JSI) recovers |f| exactly
            _reference_purity(kdp_jsa), abs=0.02)

    def test_fine_scan_tracks_true_purity(self, kdp_jsa):
        result = simulate_jsi_scan(kdp_jsa, resolution_fwhm_nm=0.2, step_nm=0.1)
        assert scan_purity(result) == pytest.approx(
            _reference_purity(kdp_jsa), abs=0.02)

    def test_coarse_resolution_washes_out_correlation(self, bbo_jsa):
        fine = simulate_jsi_scan(bbo_jsa, resolution_fwhm_nm=0.2, step_nm=0.1)
        coarse = simulate_jsi_scan(bbo_jsa, resolution_fwhm_nm=8.0, step_nm=0.5)
        assert abs(_lattice_pearson(coarse)) < abs(_lattice_pearson(fine))
        assert abs(_lattice_pearson(fine)) == pytest.approx(
            abs(jsi_pearson(bbo_jsa)), abs=0.05)

    def test_budget_conserved_in_expectation(self, kdp_jsa):
        result = simulate_jsi_scan(kdp_jsa, resolution_fwhm_nm=0.5, step_nm=0.2,
                                   pairs_budget=1e5, seed=5)
        assert result.expected.sum() == pytest.approx(1e5, rel=1e-9)
        assert result.counts is not None
        assert result.counts.sum() == pytest.approx(1e5, rel=0.02)

    def test_sampling_deterministic(self, kdp_jsa):
        a = simulate_jsi_scan(kdp_jsa, 0.5, 0.2, pairs_budget=1e4, seed=9)
        b = simulate_jsi_scan(kdp_jsa, 0.5, 0.2, pairs_budget=1e4, seed=9)
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_invalid_inputs(self, kdp_jsa):
        with pytest.raises(ConfigError):
            simulate_jsi_scan(kdp_jsa, 0.5, -1.0)
        with pytest.raises(ConfigError):
            simulate_jsi_scan(kdp_jsa, -0.5, 0.1)
        with pytest.raises(ConfigError):
            simulate_jsi_scan(kdp_jsa, 0.5, 0.1, pairs_budget=100.0, seed=None)


def _reference_purity(jsa):
    from pairspec.schmidt import schmidt_decompose
    return schmidt_decompose(jsa).purity


def _lattice_pearson(result):
    density = result.expected / result.expected.sum()
    le, lo = result.lambda_e_nm, result.lambda_o_nm
    p_e, p_o = density.sum(axis=1), density.sum(axis=0)
    mu_e, mu_o = float(p_e @ le), float(p_o @ lo)
    var_e = float(p_e @ (le - mu_e) ** 2)
    var_o = float(p_o @ (lo - mu_o) ** 2)
    cov = float(((le - mu_e)[:, None] * (lo - mu_o)[None, :] * density).sum())
    return cov / math.sqrt(var_e * var_o)
