"""
Unit tests for point-wise intervals and the multiplier bootstrap band
"""
import math

import numpy as np
import pytest
from scipy.stats import norm

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..'))

from edgeband.estimation import default_bandwidth, estimate_curve
from edgeband.exceptions import ConfigurationError, InvalidArgumentError
from edgeband.imaging import generate, simulation_scene
from edgeband.imaging.image_model import phi_linear
from edgeband.inference import (
    bootstrap_sup_quantile,
    estimate_sigma,
    pointwise_ci,
    sup_statistic,
    uniform_band,
    variance_components,
)
from edgeband.inference.confidence import (
    band_from_quantile,
    bootstrap_sup_samples,
    score_operator,
    sup_from_multipliers,
)
from edgeband.kernels import default_kernels
from edgeband.schemas import BandConfig, EdgeEstimate, EstimationConfig


@pytest.fixture(scope="module")
def fitted():
    """Small phi1 fit shared by the tests of this module"""
    pair = default_kernels()
    grid = generate(simulation_scene("phi1", 0.5, seed=21), 64)
    est = estimate_curve(grid, EstimationConfig(h=default_bandwidth(64), x_grid_size=6), pair)
    comp = variance_components(est, pair, estimate_sigma(grid))
    return grid, est, comp, pair


@pytest.mark.unit
class TestBandConfig:
    """Band settings validation"""

    def test_defaults(self):
        cfg = BandConfig()
        assert cfg.t_n_policy == "inv_sqrt_log"
        assert cfg.resolve_t_n(128) == pytest.approx(1 / math.sqrt(math.log(128)))

    def test_fixed_t_n(self):
        assert BandConfig.with_fixed_t_n(0.37).resolve_t_n(128) == 0.37

    def test_too_few_replications(self):
        with pytest.raises(ConfigurationError):
            BandConfig(n_bootstrap=100)

    def test_alpha_range(self):
        with pytest.raises(ConfigurationError):
            BandConfig(alpha=1.0)


@pytest.mark.unit
class TestPointwise:
    """Normal-quantile intervals"""

    def test_zero_sigma_gives_zero_width(self, fitted):
        _, est, _, pair = fitted
        comp = variance_components(est, pair, 0.0)
        pw = pointwise_ci(est, comp, 0.05)
        bounded = ~pw.unbounded
        np.testing.assert_array_equal((pw.upper - pw.lower)[bounded], 0.0)
        assert np.all(np.isinf((pw.upper - pw.lower)[pw.unbounded]))

    def test_alpha_ratio(self, fitted):
        """alpha = 0.01 widens every interval by q_0.995 / q_0.975"""
        _, est, comp, _ = fitted
        wide = pointwise_ci(est, comp, 0.01)
        narrow = pointwise_ci(est, comp, 0.05)
        bounded = ~narrow.unbounded
        ratio = ((wide.upper - wide.lower) / (narrow.upper - narrow.lower))[bounded]
        np.testing.assert_allclose(ratio, norm.ppf(0.995) / norm.ppf(0.975))
        assert ratio[0] == pytest.approx(1.314, abs=1e-3)

    def test_centered_on_estimate(self, fitted):
        _, est, comp, _ = fitted
        for target, center in (("phi", est.phi_hat), ("psi", est.psi_hat), ("tau", est.tau_hat)):
            pw = pointwise_ci(est, comp, 0.1, target)
            bounded = ~pw.unbounded
            np.testing.assert_allclose(((pw.lower + pw.upper) / 2)[bounded], center[bounded])

    def test_invalid_alpha_and_target(self, fitted):
        _, est, comp, _ = fitted
        with pytest.raises(InvalidArgumentError):
            pointwise_ci(est, comp, 0.0)
        with pytest.raises(InvalidArgumentError):
            pointwise_ci(est, comp, 0.05, "kappa")

    def test_unbounded_where_degenerate(self, fitted):
        _, est, _, pair = fitted
        tau = est.tau_hat.copy()
        tau[2] = 0.0
        flat = est.model_copy(update={"tau_hat": tau})
        pw = pointwise_ci(flat, variance_components(flat, pair, 0.5), 0.05)
        assert pw.unbounded[2] and np.isinf(pw.upper[2])
        assert not pw.unbounded[0]

    def test_vertical_slope_unbounded(self, fitted):
        """psi_hat = -pi/2 gives an unbounded interval, not a 1e30 wide one"""
        _, est, _, pair = fitted
        psi = est.psi_hat.copy()
        psi[3] = -math.pi / 2
        steep = est.model_copy(update={"psi_hat": psi})
        comp = variance_components(steep, pair, 0.5)
        pw = pointwise_ci(steep, comp, 0.05)
        assert pw.unbounded.tolist() == [k == 3 for k in range(est.size)]
        assert np.isinf(pw.lower[3]) and np.isinf(pw.upper[3])
        band = band_from_quantile(steep, comp, "phi", 0.05, 3.0, 0.2)
        assert np.isinf(band.width[3])
        assert np.all(np.isfinite(np.delete(band.width, 3)))


@pytest.mark.unit
class TestMultiplierBootstrap:
    """Score operator and bootstrap suprema"""

    def test_linear_in_multipliers(self, fitted):
        """sup|Z| is positively homogeneous and zero for xi = 0"""
        grid, est, comp, pair = fitted
        op = score_operator(grid, est, comp, "phi", pair)
        xi = np.random.default_rng(3).standard_normal((op.pixels.size, 5))
        np.testing.assert_allclose(sup_from_multipliers(op, 2.5 * xi), 2.5 * sup_from_multipliers(op, xi))
        np.testing.assert_array_equal(sup_from_multipliers(op, np.zeros((op.pixels.size, 2))), 0.0)

    def test_score_rows_have_unit_variance(self, fitted):
        """Normalized weights give Var Z(x) close to one"""
        grid, est, comp, pair = fitted
        for target in ("phi", "tau"):
            op = score_operator(grid, est, comp, target, pair)
            row_var = np.asarray(op.weights.multiply(op.weights).sum(axis=1)).ravel()
            np.testing.assert_allclose(row_var, 1.0, rtol=0.25)

    def test_thread_count_does_not_change_samples(self, fitted):
        grid, est, comp, pair = fitted
        op = score_operator(grid, est, comp, "phi", pair)
        one = bootstrap_sup_samples(op, 1000, 7, threads=1, chunk_size=128)
        four = bootstrap_sup_samples(op, 1000, 7, threads=4, chunk_size=128)
        assert one.shape == (1000,)
        np.testing.assert_array_equal(one, four)
        assert not np.array_equal(one, bootstrap_sup_samples(op, 1000, 8, chunk_size=128))

    def test_quantile_monotone_in_alpha(self, fitted):
        """Same seed, smaller alpha, larger quantile"""
        grid, est, comp, pair = fitted
        q05, _ = bootstrap_sup_quantile(grid, est, comp, BandConfig(alpha=0.05, n_bootstrap=600, seed=2), pair)
        q01, _ = bootstrap_sup_quantile(grid, est, comp, BandConfig(alpha=0.01, n_bootstrap=600, seed=2), pair)
        assert q01 >= q05 > 0


@pytest.mark.unit
class TestUniformBand:
    """Band assembly"""

    def test_t_n_scales_half_width(self, fitted):
        """Half-width is proportional to (1 + t_n)"""
        _, est, comp, _ = fitted
        a = band_from_quantile(est, comp, "phi", 0.05, 2.5, 0.0)
        b = band_from_quantile(est, comp, "phi", 0.05, 2.5, 0.5)
        np.testing.assert_allclose(b.width, 1.5 * a.width)
        np.testing.assert_allclose(a.center, est.phi_hat)

    def test_nesting_flag(self, fitted):
        """The band contains the point-wise intervals exactly when flagged nested"""
        _, est, comp, _ = fitted
        wide = band_from_quantile(est, comp, "phi", 0.05, 2.5, 0.2)
        assert wide.nested
        assert np.all(wide.lower <= wide.pointwise_lower) and np.all(wide.upper >= wide.pointwise_upper)
        thin = band_from_quantile(est, comp, "phi", 0.05, 1.0, 0.0)
        assert not thin.nested

    def test_band_from_bootstrap(self, fitted):
        grid, est, comp, pair = fitted
        band = uniform_band(grid, est, comp, BandConfig(n_bootstrap=500, seed=1), pair)
        assert band.target == "phi"
        assert band.t_n_used == pytest.approx(1 / math.sqrt(math.log(64)))
        assert band.quantile_boot > 0
        assert np.all(band.width > 0)
        assert list(band.to_frame().columns) == ["x", "center", "pw_lo", "pw_hi", "unif_lo", "unif_hi"]

    def test_band_is_reproducible(self, fitted):
        grid, est, comp, pair = fitted
        cfg = BandConfig(n_bootstrap=500, seed=5)
        a = uniform_band(grid, est, comp, cfg, pair)
        b = uniform_band(grid, est, comp, cfg.model_copy(update={"threads": 3}), pair)
        assert a.quantile_boot == b.quantile_boot
        np.testing.assert_array_equal(a.lower, b.lower)

    def test_zero_sigma_band(self, fitted):
        grid, est, _, pair = fitted
        comp = variance_components(est, pair, 0.0)
        band = band_from_quantile(est, comp, "tau", 0.05, 2.0, 0.3)
        np.testing.assert_array_equal(band.width, 0.0)


@pytest.mark.unit
class TestSupStatistic:
    """Normalized sup distance to the true curve"""

    def test_zero_at_truth(self, fitted):
        _, est, comp, _ = fitted
        exact = est.model_copy(update={"phi_hat": phi_linear(est.x_grid)})
        assert sup_statistic(exact, comp, phi_linear) == 0.0

    def test_positive_and_array_input(self, fitted):
        _, est, comp, _ = fitted
        truth = phi_linear(est.x_grid)
        stat = sup_statistic(est, comp, truth)
        assert stat > 0
        assert stat == sup_statistic(est, comp, phi_linear)

    def test_scales_with_error(self):
        """Doubling the error doubles the statistic"""
        xs = np.array([0.3, 0.6])
        est = EdgeEstimate(x_grid=xs, phi_hat=np.array([0.51, 0.5]), psi_hat=np.zeros(2),
                           tau_hat=np.ones(2), contrast_at_max=np.ones(2), h=0.05, n=100.0)
        comp = variance_components(est, default_kernels(), 0.4)
        double = est.model_copy(update={"phi_hat": np.array([0.52, 0.5])})
        truth = np.array([0.5, 0.5])
        assert sup_statistic(double, comp, truth) == pytest.approx(2 * sup_statistic(est, comp, truth))
