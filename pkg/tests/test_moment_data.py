import math
import os
import sys
import tempfile
import unittest

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from errors import HypothesisViolation, UsageError
from moment_data import (
    DipolarMoment,
    check_hypothesis,
    corrector_coefficients,
    cubic_corrector,
    moment_coefficients,
    moment_table,
)
from spectral_core import project


X_SQUARED = [0.0, 0.0, 1.0]


class TestDipolarMoment(unittest.TestCase):
    def test_polynomial_endpoint_derivatives(self):
        mu = DipolarMoment.polynomial(X_SQUARED)
        self.assertEqual(mu.mu_p0, 0.0)
        self.assertEqual(mu.mu_p1, 2.0)

    def test_constant_moment_rejected(self):
        with self.assertRaises(HypothesisViolation):
            DipolarMoment.polynomial([1.0]).check_endpoint_condition()
        with self.assertRaises(HypothesisViolation):
            moment_table(DipolarMoment.polynomial([1.0]), 8, 1.0)

    def test_antisymmetric_slopes_rejected(self):
        # x(1-x): μ'(1) = -μ'(0)
        with self.assertRaises(HypothesisViolation):
            DipolarMoment.polynomial([0.0, 1.0, -1.0]).check_endpoint_condition()

    def test_sampled_moment_matches_polynomial(self):
        x = np.linspace(0.0, 1.0, 201)
        sampled = DipolarMoment.sampled(x, x**2)
        self.assertAlmostEqual(sampled.mu_p0, 0.0, places=9)
        self.assertAlmostEqual(sampled.mu_p1, 2.0, places=9)
        exact = moment_coefficients(DipolarMoment.polynomial(X_SQUARED), 16).m
        np.testing.assert_allclose(moment_coefficients(sampled, 16).m, exact, atol=1e-9)

    def test_sampled_grid_must_cover_interval(self):
        with self.assertRaises(UsageError):
            DipolarMoment.sampled(np.linspace(0.0, 0.5, 11), np.zeros(11))
        with self.assertRaises(UsageError):
            DipolarMoment.sampled([0.0, 1.0], [0.0, 1.0])

    def test_from_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "mu.csv")
            x = np.linspace(0.0, 1.0, 101)
            pd.DataFrame({"x": x, "mu": x**2}).to_csv(path, index=False)
            mu = DipolarMoment.from_csv(path)
            self.assertAlmostEqual(mu.mu_p1, 2.0, places=8)
            with self.assertRaises(UsageError):
                DipolarMoment.from_csv(os.path.join(tmp, "missing.csv"))

    def test_unknown_kind(self):
        with self.assertRaises(UsageError):
            DipolarMoment.from_config({"kind": "spline"})

    def test_scaled(self):
        mu = DipolarMoment.polynomial(X_SQUARED).scaled(2.0)
        self.assertEqual(mu.mu_p1, 4.0)


class TestMomentCoefficients(unittest.TestCase):
    def setUp(self):
        self.mu = DipolarMoment.polynomial(X_SQUARED)

    def test_first_moment(self):
        m = moment_coefficients(self.mu, 4).m
        self.assertAlmostEqual(m[0], 1.0 / 3.0 - 1.0 / (2.0 * math.pi**2), places=14)
        self.assertAlmostEqual(m[0], 0.28267, places=5)

    def test_corrector_formula(self):
        k = np.arange(1, 11)
        expected = 8.0 * np.where(k % 2 == 1, 1.0, -1.0) / (k**3 * math.pi**2)
        np.testing.assert_allclose(corrector_coefficients(self.mu, 10), expected, rtol=1e-14)

    def test_remainder_decays_faster_than_cubic(self):
        N = 64
        coeffs = moment_coefficients(self.mu, N)
        k = np.arange(1, N + 1)
        scaled = np.abs(k**3 * coeffs.residual)
        self.assertLess(np.max(scaled[3 * N // 4 :]), np.max(scaled[N // 4 : N // 2]))

    def test_hypothesis_report(self):
        report = check_hypothesis(moment_coefficients(self.mu, 32).m)
        self.assertTrue(report.passed)
        self.assertGreater(report.c_lower, 0.0)
        self.assertGreaterEqual(report.c_upper, report.c_lower)
        self.assertIn("worst_k", report.as_dict())

    def test_hypothesis_violation_carries_worst_mode(self):
        m = np.array([1.0, 0.5, 0.0, 0.1])
        with self.assertRaises(HypothesisViolation) as ctx:
            check_hypothesis(m)
        self.assertEqual(ctx.exception.worst_k, 3)


class TestCubicCorrector(unittest.TestCase):
    def test_closed_form_for_x_squared(self):
        h, _ = cubic_corrector(DipolarMoment.polynomial(X_SQUARED), 4)
        x = np.linspace(0.0, 1.0, 11)
        expected = -(math.pi * math.sqrt(2.0) / 3.0) * (2.0 * x**3 - 2.0 * x)
        np.testing.assert_allclose(h(x), expected, atol=1e-14)

    def test_projection_matches_coefficients(self):
        mu = DipolarMoment.polynomial([0.0, 0.5, 1.0, -0.3])
        h, h_k = cubic_corrector(mu, 20)
        np.testing.assert_allclose(project(h, 20), h_k, atol=1e-10)

    def test_flat_endpoints_give_zero_corrector(self):
        # 3x² - 2x³ has μ'(0) = μ'(1) = 0
        h, h_k = cubic_corrector(DipolarMoment.polynomial([0.0, 0.0, 3.0, -2.0]), 8)
        self.assertEqual(float(np.max(np.abs(h.coef))), 0.0)
        self.assertEqual(float(np.max(np.abs(h_k))), 0.0)
        self.assertIsInstance(h, Polynomial)


class TestModeTable(unittest.TestCase):
    def test_plain_and_shifted(self):
        mu = DipolarMoment.polynomial(X_SQUARED)
        plain = moment_table(mu, 8, 1.0)
        shifted = moment_table(mu, 8, 1.0, shifted=True)
        self.assertFalse(plain.shifted)
        self.assertTrue(shifted.shifted)
        self.assertAlmostEqual(shifted.lambda_shift, math.pi**2, places=12)
        self.assertEqual(shifted.sigma[0], 0.0)
        self.assertFalse(shifted.g_active[0])
        self.assertTrue(np.all(plain.g_active))


if __name__ == "__main__":
    unittest.main()
