"""
Unit tests for the contrast process, its gradient and the asymptotic oracle
"""
import math

import numpy as np
import pytest
from pydantic import ValidationError

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..'))

from edgeband.estimation import (
    AsymptoticOracleQuery,
    ContrastQuery,
    asymptotic_contrast,
    contrast,
    contrast_field,
    contrast_gradient,
)
from edgeband.imaging import ImageGrid, generate, multi_edge_scene, simulation_scene
from edgeband.imaging.image_model import jump_height, psi_linear, psi_parabola


@pytest.mark.unit
class TestContrast:
    """Empirical contrast"""

    def setup_method(self):
        self.grid = generate(simulation_scene("phi1", 0.5, seed=11), 64)

    def test_zero_image(self):
        """Y = 0 gives zero contrast everywhere"""
        grid = ImageGrid(values=np.zeros((32, 32)))
        for psi in (-1.0, 0.0, 0.7):
            assert contrast(grid, ContrastQuery(x=0.5, y=0.4, psi=psi, h=0.1)) == 0.0

    def test_constant_image_is_annihilated(self):
        """The odd kernel removes constants up to a Riemann error"""
        n, h, c = 64, 0.1, 2.0
        grid = ImageGrid(values=np.full((n, n), c))
        for psi in (-0.5, 0.0, 0.3):
            value = contrast(grid, ContrastQuery(x=0.5, y=0.5, psi=psi, h=h))
            assert abs(value) < c * 5 / (n * h)

    def test_noiseless_value_near_jump_height(self):
        """At the true point and angle the contrast approaches tau"""
        grid = generate(simulation_scene("phi1", 0.0), 512)
        q = ContrastQuery(x=0.5, y=0.5, psi=math.atan(0.5), h=0.06)
        assert contrast(grid, q) == pytest.approx(float(jump_height(0.5)), rel=0.10)

    def test_linearity(self):
        """M(aY1 + bY2) = a M(Y1) + b M(Y2)"""
        rng = np.random.default_rng(0)
        y1, y2 = rng.normal(size=(2, 40, 40))
        q = ContrastQuery(x=0.45, y=0.55, psi=0.2, h=0.12)
        combined = contrast(ImageGrid(values=2.0 * y1 - 3.0 * y2), q)
        separate = 2.0 * contrast(ImageGrid(values=y1), q) - 3.0 * contrast(ImageGrid(values=y2), q)
        assert combined == pytest.approx(separate, rel=1e-10, abs=1e-12)

    def test_locality(self):
        """Pixels outside the h√2 box do not matter"""
        values = np.array(self.grid.values)
        q = ContrastQuery(x=0.3, y=0.4, psi=0.1, h=0.08)
        before = contrast(self.grid, q)
        values[-1, -1] += 100.0
        values[0, -1] -= 50.0
        after = contrast(ImageGrid(values=values), q)
        assert after == before

    def test_query_validation(self):
        """h must lie in (0, 1/2) and psi in [-pi/2, pi/2]"""
        with pytest.raises(ValidationError):
            ContrastQuery(x=0.5, y=0.5, psi=0.0, h=0.5)
        with pytest.raises(ValidationError):
            ContrastQuery(x=0.5, y=0.5, psi=2.0, h=0.1)

    def test_field_matches_pointwise_values(self):
        """The vectorized field equals single evaluations"""
        ys = np.array([0.1, 0.37, 0.52, 0.9])
        psis = np.array([-1.2, 0.0, 0.45])
        field = contrast_field(self.grid, 0.5, ys, psis, 0.08)
        assert field.shape == (4, 3)
        for i, y in enumerate(ys):
            for k, psi in enumerate(psis):
                expected = contrast(self.grid, ContrastQuery(x=0.5, y=y, psi=psi, h=0.08))
                assert field[i, k] == pytest.approx(expected, rel=1e-10, abs=1e-13)


@pytest.mark.unit
class TestContrastGradient:
    """Analytic (w, psi) gradient"""

    def setup_method(self):
        self.grid = generate(simulation_scene("phi2", 0.5, seed=5), 64)
        self.h = 0.1

    def test_zero_image(self):
        grid = ImageGrid(values=np.zeros((16, 16)))
        np.testing.assert_array_equal(contrast_gradient(grid, ContrastQuery(x=0.5, y=0.5, psi=0.1, h=0.2)), [0.0, 0.0])

    def test_matches_finite_differences(self):
        """Central differences in w = (y - y0)/h and psi, 100 random queries"""
        rng = np.random.default_rng(7)
        h, eps = self.h, 1e-6
        for _ in range(100):
            x, y = rng.uniform(0.15, 0.85, size=2)
            psi = rng.uniform(-1.3, 1.3)
            g = contrast_gradient(self.grid, ContrastQuery(x=x, y=y, psi=psi, h=h))

            def m(yy, pp):
                return contrast(self.grid, ContrastQuery(x=x, y=yy, psi=pp, h=h))

            dw = (m(y + h * eps, psi) - m(y - h * eps, psi)) / (2 * eps)
            dpsi = (m(y, psi + eps) - m(y, psi - eps)) / (2 * eps)
            assert g[0] == pytest.approx(dw, rel=1e-4, abs=1e-6)
            assert g[1] == pytest.approx(dpsi, rel=1e-4, abs=1e-6)


@pytest.mark.unit
class TestAsymptoticContrast:
    """Closed-form limit of the contrast"""

    def setup_method(self):
        self.scene = simulation_scene("phi1", 0.0)

    def test_value_at_truth_is_jump_height(self):
        """L(0, psi(x); x) = tau(x)"""
        for x in (0.1, 0.37, 0.8):
            q = AsymptoticOracleQuery(w=0.0, psi=float(psi_linear(x)), x=x, scene=self.scene)
            assert asymptotic_contrast(q) == pytest.approx(float(jump_height(x)), abs=1e-3)

    def test_vanishes_far_from_curve(self):
        """|w| >= 1/|cos psi(x)| + 1 gives zero"""
        x = 0.4
        psi0 = float(psi_linear(x))
        w = 1.0 / abs(math.cos(psi0)) + 1.0
        for psi in (psi0, psi0 - 0.2, 0.0):
            assert asymptotic_contrast(AsymptoticOracleQuery(w=w, psi=psi, x=x, scene=self.scene)) == 0.0
            assert asymptotic_contrast(AsymptoticOracleQuery(w=-w, psi=psi, x=x, scene=self.scene)) == 0.0

    def test_vanishes_at_quarter_turn(self):
        """psi(x) - psi = pi/2 gives zero for all w"""
        x = 0.6
        psi = float(psi_linear(x)) - math.pi / 2
        for w in (-0.5, 0.0, 0.3):
            assert asymptotic_contrast(AsymptoticOracleQuery(w=w, psi=psi, x=x, scene=self.scene)) == 0.0

    def test_grid_maximum_at_truth(self):
        """On a 101 x 101 (w, psi) grid the maximum sits nearest (0, psi(x))"""
        ws = np.linspace(-2, 2, 101)
        psis = np.linspace(-math.pi / 2, math.pi / 2, 101)
        for scene_name, psi_true in (("phi1", psi_linear), ("phi2", psi_parabola)):
            scene = simulation_scene(scene_name, 0.0)
            for x in (0.2, 0.55):
                psi0 = float(psi_true(x))
                values = np.array([[asymptotic_contrast(AsymptoticOracleQuery(w=w, psi=p, x=x, scene=scene))
                                    for p in psis] for w in ws])
                i, k = np.unravel_index(np.argmax(values), values.shape)
                assert i == int(np.argmin(np.abs(ws)))
                assert k == int(np.argmin(np.abs(psis - psi0)))
                assert values[i, k] == pytest.approx(float(jump_height(x)), abs=0.05)

    def test_requires_single_curve(self):
        """Scenes with two curves are rejected"""
        with pytest.raises(ValidationError):
            AsymptoticOracleQuery(w=0.0, psi=0.0, x=0.5, scene=multi_edge_scene())
