import math
import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from basis_family import build_basis
from moment_data import DipolarMoment, moment_table
from spectral_core import SpectralState
from stabilizer import (
    FeedbackGains,
    assemble_T,
    control_vector,
    domain_correction,
    eigenvalue_placement,
    feedback_value,
    fredholm_split,
    hs_tail_fraction,
    kernel_coefficients,
    kernel_tb_residuals,
    operator_equality_residual,
    operator_from_weighted,
    regularity_split,
    solve_tb_eq_b,
    tb_eq_b_operator_residual,
    tilde_gains,
    transform_inverse_norm,
    transform_norm,
)

MU = DipolarMoment.polynomial([0.0, 0.0, 1.0])
_CACHE = {}


def synthesis(N, decay=1.0, shifted=False):
    key = (N, decay, shifted)
    if key not in _CACHE:
        table = moment_table(MU, N, decay, shifted=shifted)
        basis = build_basis(table)
        gains = solve_tb_eq_b(basis, table)
        _CACHE[key] = (table, basis, gains, assemble_T(basis, gains, table))
    return _CACHE[key]


def smooth_state(N, shifted=False):
    k = np.arange(1, N + 1, dtype=float)
    q = np.where(k <= N // 4, 1.0 / k**3, 0.0)
    p = 0.5 * q
    if shifted:
        p[0] = 0.0
    return SpectralState(p, q)


class TestTbEqB(unittest.TestCase):
    def test_solve_residual(self):
        for N in (64, 128):
            table, _, gains, T = synthesis(N)
            self.assertLessEqual(gains.solve_residual, 1e-10)
            self.assertLessEqual(tb_eq_b_operator_residual(T, table), 1e-8)

    def test_transform_fixes_control_direction(self):
        table, _, _, T = synthesis(64)
        b = control_vector(table)
        np.testing.assert_allclose(T.raw @ b, b, atol=1e-8 * np.max(np.abs(b)))

    def test_kernel_form_of_tb_eq_b(self):
        table, basis, gains, _ = synthesis(64)
        F12, F22 = kernel_coefficients(basis, gains, table)
        residuals = kernel_tb_residuals(F12, F22, table.m)
        self.assertLess(residuals["k12_relative"], 1e-8)
        self.assertLess(residuals["k22_relative"], 1e-8)

    def test_shifted_mode(self):
        table, _, gains, T = synthesis(32, shifted=True)
        self.assertAlmostEqual(gains.rotation_omega, math.pi**2, places=12)
        self.assertEqual(gains.static().rotation_omega, 0.0)
        self.assertEqual(T.raw[0, 0], 1.0)
        self.assertEqual(float(np.max(np.abs(T.raw[0, 1:]))), 0.0)
        self.assertLessEqual(tb_eq_b_operator_residual(T, table), 1e-8)


class TestTransform(unittest.TestCase):
    def test_zero_input(self):
        _, _, _, T = synthesis(32)
        np.testing.assert_array_equal(T.Tmat @ np.zeros(64), np.zeros(64))

    def test_norms(self):
        _, _, _, T = synthesis(32)
        self.assertGreater(transform_norm(T), 0.0)
        self.assertAlmostEqual(T.cond, transform_norm(T) * transform_inverse_norm(T), delta=1e-8 * T.cond)
        np.testing.assert_allclose(T.Tmat @ T.Tinv, np.eye(64), atol=1e-8 * T.cond)

    def test_norm_stable_in_N(self):
        norm64 = transform_norm(synthesis(64)[3])
        norm128 = transform_norm(synthesis(128)[3])
        self.assertLess(abs(norm128 - norm64) / norm64, 0.2)

    def test_rebuild_from_weighted_matrix(self):
        _, _, _, T = synthesis(16)
        rebuilt = operator_from_weighted(T.Tmat, 16)
        np.testing.assert_allclose(rebuilt.raw, T.raw, rtol=1e-12, atol=1e-14 * np.max(np.abs(T.raw)))
        self.assertAlmostEqual(rebuilt.cond / T.cond, 1.0, places=10)
        with self.assertRaises(ValueError):
            operator_from_weighted(T.Tmat, 8)


class TestFredholmSplit(unittest.TestCase):
    def test_hilbert_schmidt_tail(self):
        _, _, _, T = synthesis(128)
        self.assertTrue(math.isfinite(T.cond_tilde))
        self.assertLessEqual(hs_tail_fraction(T.hs_tail), 0.3)

    def test_tilde_gains_have_no_remainder(self):
        table, basis, gains, _ = synthesis(32)
        tilde = tilde_gains(gains, table)
        self.assertEqual(float(np.max(np.abs(tilde.alpha1))), 0.0)
        _, hs = fredholm_split(basis, tilde, table)
        self.assertEqual(float(np.max(hs)), 0.0)
        self.assertEqual(hs_tail_fraction(hs), 0.0)


class TestClosedLoopDiagnostics(unittest.TestCase):
    def test_operator_equality(self):
        for N in (64, 128):
            table, _, gains, T = synthesis(N)
            self.assertLess(operator_equality_residual(T, gains, table, smooth_state(N)), 1e-6)

    def test_operator_equality_zero_state(self):
        table, _, gains, T = synthesis(32)
        self.assertEqual(operator_equality_residual(T, gains, table, SpectralState.zeros(32)), 0.0)

    def test_strict_domain_state(self):
        table, _, gains, T = synthesis(64)
        state = smooth_state(64)
        corrected = domain_correction(state, gains, MU, support=16)
        self.assertAlmostEqual(feedback_value(gains.static(), corrected), 0.0, delta=1e-9 * sobolev_scale(gains))
        residual = operator_equality_residual(T, gains, table, state, strict=True, mu=MU)
        self.assertLess(residual, 1e-6)
        with self.assertRaises(ValueError):
            operator_equality_residual(T, gains, table, state, strict=True)

    def test_eigenvalue_placement(self):
        table, _, gains, _ = synthesis(64)
        placement = eigenvalue_placement(gains, table)
        self.assertEqual(placement["pairs"], 16)
        self.assertLess(placement["max_real_deviation"], 0.1)
        self.assertLess(placement["spectral_abscissa"], 0.0)

    def test_eigenvalue_placement_shifted(self):
        table, _, gains, _ = synthesis(32, shifted=True)
        placement = eigenvalue_placement(gains, table)
        self.assertLess(placement["max_real_deviation"], 0.1)
        self.assertLess(placement["spectral_abscissa"], -0.9 * table.decay)

    def test_regularity_split(self):
        table, _, gains, _ = synthesis(128)
        split = regularity_split(gains, table)
        a1 = split["alpha1_over_n3"]
        a2 = split["alpha2_corrected_over_n3"]
        self.assertLess(a1["top_quarter_max"], a1["second_quarter_max"])
        self.assertLess(a2["top_quarter_max"], a2["second_quarter_max"])
        self.assertGreater(split["alpha2_over_n3_floor"], 0.0)


class TestTruncationSweep(unittest.TestCase):
    SIZES = (64, 128, 256)

    def test_placement_stays_exact(self):
        for N in self.SIZES:
            with self.subTest(N=N):
                table, _, gains, _ = synthesis(N)
                placement = eigenvalue_placement(gains, table)
                self.assertLess(placement["max_real_deviation"], 1e-6)
                self.assertLess(placement["spectral_abscissa"], 0.0)

    def test_condition_number_bounded(self):
        conds = [synthesis(N)[3].cond for N in self.SIZES]
        for small, large in zip(conds, conds[1:]):
            self.assertGreaterEqual(large / small, 0.5)
            self.assertLessEqual(large / small, 2.0)

    def test_hilbert_schmidt_tail_decreases(self):
        tails = [hs_tail_fraction(synthesis(N)[3].hs_tail) for N in self.SIZES]
        for small, large in zip(tails, tails[1:]):
            self.assertLess(large, small)

    def test_operator_equality_at_rounding_floor(self):
        for N in self.SIZES:
            with self.subTest(N=N):
                table, _, gains, T = synthesis(N)
                self.assertLess(operator_equality_residual(T, gains, table, smooth_state(N)), 1e-6)


class TestFeedbackValue(unittest.TestCase):
    def test_unit_mode_picks_gain(self):
        gains = FeedbackGains(alpha1=np.array([1.0, 2.0, 3.0]), alpha2=np.array([-1.0, 5.0, 0.5]))
        self.assertEqual(feedback_value(gains, SpectralState.unit_mode(3, 2, "q")), 5.0)
        self.assertEqual(feedback_value(gains, SpectralState.unit_mode(3, 3, "p")), 3.0)

    def test_rotation_period(self):
        omega = math.pi**2
        gains = FeedbackGains(alpha1=np.array([0.3, -1.0]), alpha2=np.array([2.0, 0.7]), rotation_omega=omega)
        state = SpectralState(np.array([0.0, 0.4]), np.array([1.0, -0.2]))
        v0 = feedback_value(gains, state, 0.0)
        self.assertAlmostEqual(feedback_value(gains, state, 2.0 * math.pi / omega), v0, places=12)

    def test_zero_gains(self):
        state = SpectralState(np.ones(4), np.ones(4))
        self.assertEqual(feedback_value(FeedbackGains.zeros(4), state, 1.3), 0.0)


def sobolev_scale(gains):
    return max(float(np.max(np.abs(gains.alpha1))), float(np.max(np.abs(gains.alpha2))), 1.0)


if __name__ == "__main__":
    unittest.main()
