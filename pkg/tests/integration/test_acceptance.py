"""
Acceptance runs at desk scale
Noiseless recovery, rate trend, coverage, oracle grid, the two-edge scene and t_n curves
"""
import math

import numpy as np
import pytest

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..'))

from edgeband.estimation import AsymptoticOracleQuery, asymptotic_contrast, default_bandwidth, estimate_curve
from edgeband.imaging import generate, multi_edge_scene, simulation_scene
from edgeband.imaging.image_model import jump_height
from edgeband.inference import bonferroni_bands, detect_candidates, estimate_multi, estimate_sigma, variance_components
from edgeband.kernels import default_kernels
from edgeband.schemas import BandConfig, EstimationConfig, MultiEdgeConfig, StudySpec
from edgeband.simulation import crossing_level, run_study, tn_sensitivity
from edgeband.simulation.study_runner import MULTI_BANDWIDTH

# sup |psi_hat - psi| on noiseless n = 128 input; the contrast is pixelated in psi
PSI_BOUND = {"phi1": 0.10, "phi2": 0.15}
# noiseless sup error ratio n = 256 over n = 128
RATE_BOUND = {"phi1": 0.7, "phi2": 0.75}


def _noiseless_fit(scenario, n):
    scene = simulation_scene(scenario, 0.0)
    est = estimate_curve(generate(scene, n), EstimationConfig(h=default_bandwidth(n)), threads=4)
    return scene.curves[0], est


@pytest.mark.integration
@pytest.mark.slow
class TestNoiselessRecovery:
    """sigma = 0, n = 128, default bandwidth"""

    @pytest.mark.parametrize("scenario", ["phi1", "phi2"])
    def test_curve_slope_and_height(self, scenario):
        curve, est = _noiseless_fit(scenario, 128)
        assert np.max(np.abs(est.phi_hat - curve.phi(est.x_grid))) <= 0.01
        assert np.max(np.abs(est.psi_hat - curve.psi(est.x_grid))) <= PSI_BOUND[scenario]
        # the smooth trend biases tau_hat by O(h) where dm/dy is large
        rel = np.abs(est.tau_hat - jump_height(est.x_grid)) / jump_height(est.x_grid)
        assert np.median(rel) <= 0.09
        assert np.max(rel) <= 0.12


@pytest.mark.integration
@pytest.mark.slow
class TestRateTrend:
    """Noiseless sup location error shrinks from n = 128 to n = 256"""

    @pytest.mark.parametrize("scenario", ["phi1", "phi2"])
    def test_sup_error_ratio(self, scenario):
        errors = []
        for n in (128, 256):
            curve, est = _noiseless_fit(scenario, n)
            errors.append(float(np.max(np.abs(est.phi_hat - curve.phi(est.x_grid)))))
        assert errors[1] <= RATE_BOUND[scenario] * errors[0]


@pytest.mark.integration
@pytest.mark.slow
class TestCoverage:
    """phi1, n = 128, sigma_tilde = 0.5, alpha = 0.05, 100 replications"""

    @pytest.fixture(scope="class")
    def cell(self):
        spec = StudySpec(scenario="phi1", n_list=[128], sigma_tilde_list=[0.5], alpha_list=[0.05],
                         reps=100, n_bootstrap=2000, seed=2024, threads=4)
        return run_study(spec).cells[0]

    def test_pointwise_coverage_and_width(self, cell):
        assert not cell.failed
        assert 0.91 <= cell.coverage_pointwise <= 1.0
        assert cell.width_pointwise == pytest.approx(0.025, rel=0.2)

    def test_uniform_band(self, cell):
        assert cell.t_n == 0.37
        assert 0.89 <= cell.coverage_uniform <= 1.0
        assert cell.width_uniform == pytest.approx(0.051, rel=0.25)


@pytest.mark.integration
@pytest.mark.slow
class TestOracleGrid:
    """Asymptotic contrast peaks at the truth with value tau on 20 strips"""

    @pytest.mark.parametrize("scenario", ["phi1", "phi2"])
    def test_maximum_at_truth(self, scenario):
        scene = simulation_scene(scenario, 0.0)
        pair = default_kernels()
        ws = np.linspace(-2, 2, 101)
        psis = np.linspace(-math.pi / 2, math.pi / 2, 101)
        for x in np.linspace(0.05, 0.95, 20):
            psi0 = float(scene.curves[0].psi(x))
            values = np.array([[asymptotic_contrast(AsymptoticOracleQuery(w=w, psi=p, x=float(x), scene=scene), pair)
                                for p in psis] for w in ws])
            i, k = np.unravel_index(np.argmax(values), values.shape)
            assert i == 50
            assert k == int(np.argmin(np.abs(psis - psi0)))
            at_truth = asymptotic_contrast(AsymptoticOracleQuery(w=0.0, psi=psi0, x=float(x), scene=scene), pair)
            assert abs(at_truth - float(jump_height(x))) <= 1e-3


@pytest.mark.integration
@pytest.mark.slow
class TestTwoEdges:
    """Two parallel parabolas, n = 64, h = 0.15, sigma = 0.1"""

    def test_both_curves_recovered(self):
        pair = default_kernels()
        est_cfg = EstimationConfig(h=MULTI_BANDWIDTH, x_grid_size=16)
        cfg = MultiEdgeConfig(max_curves=2, band=BandConfig(n_bootstrap=500))
        for seed in range(5):
            scene = multi_edge_scene(sigma=0.1, seed=seed)
            grid = generate(scene, 64)
            sigma_hat = estimate_sigma(grid)
            estimates = estimate_multi(grid, detect_candidates(grid, est_cfg, cfg, sigma_hat, pair),
                                       est_cfg, cfg, pair)
            assert len(estimates) == 2
            for est, curve in zip(estimates, scene.curves):
                assert np.max(np.abs(est.phi_hat - curve.phi(est.x_grid))) < 0.02
            comps = [variance_components(e, pair, sigma_hat) for e in estimates]
            bands = bonferroni_bands(grid, estimates, comps, cfg, pair)
            assert all(b.alpha == 0.025 for b in bands)

    def test_bonferroni_coverage(self):
        """Both curves inside their alpha/2 bands in at least 90 of 100 replications"""
        spec = StudySpec(scenario="multi", n_list=[64], sigma_tilde_list=[0.1], alpha_list=[0.05],
                         reps=100, n_bootstrap=1000, x_grid_size=32, seed=46, threads=4)
        cell = run_study(spec).cells[0]
        assert not cell.failed
        assert cell.coverage_uniform >= 0.90


@pytest.mark.integration
@pytest.mark.slow
class TestTnSensitivity:
    """Bootstrap against empirical sup-statistic quantiles, phi1 at n = 128"""

    @pytest.fixture(scope="class")
    def curves(self):
        spec = StudySpec(scenario="phi1", n_list=[128], sigma_tilde_list=[0.5, 0.9], alpha_list=[0.05],
                         reps=100, n_bootstrap=2000, seed=77, threads=4)
        return tn_sensitivity(spec)

    def test_high_noise_crossing_near_095(self, curves):
        level = crossing_level(curves[curves["sigma_tilde"] == 0.9])
        assert level is not None
        assert 0.85 <= level <= 0.99

    def test_low_noise_bootstrap_below_at_median(self, curves):
        low = curves[(curves["sigma_tilde"] == 0.5) & np.isclose(curves["level"], 0.5)].iloc[0]
        assert low["bootstrap"] < low["empirical"]
