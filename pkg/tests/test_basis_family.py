import math
import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from basis_family import (
    BasisFamily,
    ank_matrix,
    beta_coefficients,
    build_basis,
    closeness_tails,
    frame_bounds,
    gram_extremes,
    kernel_tensors,
    normalisation_residual,
)
from errors import NearSingularBasis
from moment_data import DipolarMoment, moment_table


def x_squared_table(N, decay=1.0, shifted=False):
    return moment_table(DipolarMoment.polynomial([0.0, 0.0, 1.0]), N, decay, shifted=shifted)


class TestBeta(unittest.TestCase):
    def test_first_beta(self):
        table = x_squared_table(4)
        m1 = 1.0 / 3.0 - 1.0 / (2.0 * math.pi**2)
        expected = (1.0 + 4.0 * math.pi**4) / (2.0 * math.pi**6 * m1)
        self.assertAlmostEqual(table.beta1[0] / expected, 1.0, places=13)

    def test_scaling_moment_halves_beta(self):
        mu = DipolarMoment.polynomial([0.0, 0.0, 1.0])
        base = moment_table(mu, 16, 1.0)
        doubled = moment_table(mu.scaled(2.0), 16, 1.0)
        np.testing.assert_allclose(doubled.beta1, 0.5 * base.beta1, rtol=1e-13)
        np.testing.assert_allclose(doubled.beta2, 0.5 * base.beta2, rtol=1e-13)

    def test_beta_growth_is_linear(self):
        table = x_squared_table(64)
        n = np.arange(1, 65)
        ratio = np.abs(table.beta1) / n
        self.assertGreater(np.min(ratio), 0.0)
        self.assertLess(np.max(ratio) / np.min(ratio), 1e3)

    def test_recomputed_from_table(self):
        table = x_squared_table(8)
        b1, b2 = beta_coefficients(table)
        np.testing.assert_array_equal(b1, table.beta1)
        np.testing.assert_array_equal(b2, table.beta2)


class TestKernelTensors(unittest.TestCase):
    def test_delta_first_entry(self):
        tensor = kernel_tensors(x_squared_table(4))
        self.assertAlmostEqual(tensor.delta[0, 0], 1.0 + 4.0 * math.pi**4, places=9)
        self.assertAlmostEqual(tensor.delta[0, 0], 390.636, places=3)

    def test_diagonal_identity(self):
        table = x_squared_table(32)
        tensor = kernel_tensors(table)
        product = np.diag(tensor.c12) * table.beta1 * table.m
        np.testing.assert_allclose(product * table.lam, np.ones(32), rtol=1e-12)

    def test_vanishing_decay_kills_off_diagonal_c12(self):
        tensor = kernel_tensors(x_squared_table(8, decay=1e-8))
        off = tensor.c12[~np.eye(8, dtype=bool)]
        self.assertLess(float(np.max(np.abs(off))), 1e-9)

    def test_four_by_four_system(self):
        table = x_squared_table(64)
        tensor = kernel_tensors(table)
        rng = np.random.default_rng(7)
        for n, k in rng.integers(0, 64, size=(100, 2)):
            scale = table.beta1[n] * table.m[k]
            v = scale * np.array([tensor.c11[n, k], tensor.c12[n, k], tensor.c21[n, k], tensor.c22[n, k]])
            lhs = ank_matrix(table.decay, table.sigma[n], table.sigma[k]) @ v
            expected = np.array([scale, 0.0, 0.0, 0.0])
            np.testing.assert_allclose(lhs / abs(scale), expected / abs(scale), atol=1e-10)


class TestBasis(unittest.TestCase):
    def test_normalisation(self):
        for shifted in (False, True):
            basis = build_basis(x_squared_table(64, shifted=shifted))
            self.assertLess(normalisation_residual(basis), 1e-12)

    def test_shifted_drops_first_g_column(self):
        basis = build_basis(x_squared_table(16, shifted=True))
        self.assertFalse(basis.active[0])
        self.assertEqual(float(np.max(np.abs(basis.columns[:, 0]))), 0.0)

    def test_frame_bounds_stable_in_N(self):
        low32, high32 = frame_bounds(build_basis(x_squared_table(32)), 2)
        low64, _ = frame_bounds(build_basis(x_squared_table(64)), 2)
        self.assertGreater(low32, 0.0)
        self.assertLess(abs(low64 - low32) / low32, 0.1)
        self.assertGreaterEqual(high32, low32)

    def test_orthonormal_and_duplicate_columns(self):
        self.assertEqual(gram_extremes(np.eye(4)), (1.0, 1.0))
        v = np.array([1.0, 2.0, 3.0])
        low, _ = gram_extremes(np.column_stack([v, v]))
        self.assertLess(low, 1e-12)

    def test_near_singular_basis_raises(self):
        basis = build_basis(x_squared_table(8))
        columns = basis.columns.copy()
        columns[:, 1] = columns[:, 0]
        broken = BasisFamily(lam=basis.lam, columns=columns, active=basis.active, tensor=basis.tensor)
        with self.assertRaises(NearSingularBasis):
            frame_bounds(broken, 2)


class TestClosenessTails(unittest.TestCase):
    def test_tails_saturate(self):
        basis = build_basis(x_squared_table(128))
        for s in (2, 3):
            tails = closeness_tails(basis, s)
            self.assertEqual(tails["M"], [32, 64, 128])
            for key in ("S_g", "S_h"):
                sums = tails[key]
                self.assertTrue(all(np.isfinite(sums)))
                self.assertLessEqual(sums[0], sums[1])
                self.assertLessEqual(sums[1], sums[2])
                self.assertLessEqual(sums[2] - sums[1], 0.2 * sums[1])

    def test_exact_unit_family_has_no_tail(self):
        N = 8
        lam = (np.arange(1, N + 1) * np.pi) ** 2
        columns = np.diag(np.concatenate([1.0 / lam, 1.0 / lam]))
        reference = build_basis(x_squared_table(N))
        basis = BasisFamily(lam=lam, columns=columns, active=np.ones(2 * N, dtype=bool), tensor=reference.tensor)
        for s in (2, 3):
            tails = closeness_tails(basis, s)
            self.assertAlmostEqual(tails["S_g"][-1], 0.0, places=20)
            self.assertAlmostEqual(tails["S_h"][-1], 0.0, places=20)

    def test_rejects_other_indices(self):
        with self.assertRaises(ValueError):
            closeness_tails(build_basis(x_squared_table(8)), 4)


if __name__ == "__main__":
    unittest.main()
