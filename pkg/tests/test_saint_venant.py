import math
import os
import sys
import tempfile
import unittest

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from errors import UsageError
from saint_venant import (
    SV_TRACE_COLUMNS,
    RiemannGrid,
    analytic_gains,
    commutation_residual,
    energy,
    explicit_transform_sv,
    feedback_hv,
    feedback_sv,
    projected_gains,
    reconstruct_hv,
    reflection_coefficient,
    round_trip_rate,
    simulate_sv,
    smooth_profile,
    step_sv,
    transform_mismatch,
    weighted_energy,
    write_sv_trace_csv,
)


def profile_grid(M=400, decay=0.5):
    h, v = smooth_profile(M)
    return RiemannGrid.from_hv(h, v, decay)


class TestReflection(unittest.TestCase):
    def test_closed_form(self):
        self.assertAlmostEqual(reflection_coefficient(0.5), -math.exp(-1.0), delta=1e-12)
        self.assertAlmostEqual(reflection_coefficient(0.5), -0.36788, places=5)
        for decay in (0.1, 1.0, 3.0):
            self.assertAlmostEqual(reflection_coefficient(decay), -math.exp(-2.0 * decay), delta=1e-12)

    def test_limits(self):
        self.assertEqual(reflection_coefficient(0.0), -1.0)
        self.assertAlmostEqual(reflection_coefficient(20.0), 0.0, delta=1e-15)
        self.assertEqual(feedback_sv(profile_grid(decay=0.0)), 0.0)


class TestStepping(unittest.TestCase):
    def test_interior_shift_is_exact(self):
        grid = profile_grid(50)
        nxt = step_sv(grid)
        np.testing.assert_array_equal(nxt.R1[1:], grid.R1[:-1])
        np.testing.assert_array_equal(nxt.R2[:-1], grid.R2[1:])

    def test_zero_state(self):
        grid = RiemannGrid(M=10, R1=np.zeros(10), R2=np.zeros(10), decay=1.0)
        for _ in range(25):
            grid = step_sv(grid)
        self.assertEqual(energy(grid), 0.0)

    def test_weighted_energy_decays_exactly(self):
        trace = simulate_sv(profile_grid(400, 0.5), 4.0)
        expected = trace.weighted_energy[0] * np.exp(-2.0 * 0.5 * trace.times)
        error = np.max(np.abs(trace.weighted_energy - expected)) / trace.weighted_energy[0]
        self.assertLessEqual(error, 1e-10)

    def test_round_trip_energy(self):
        for decay in (0.25, 0.5, 1.0):
            with self.subTest(decay=decay):
                trace = simulate_sv(profile_grid(400, decay), 8.0)
                rate = round_trip_rate(trace)
                self.assertLess(abs(rate - 2.0 * decay) / (2.0 * decay), 0.02)
                self.assertAlmostEqual(rate, 2.0 * decay, places=9)
                at_two = trace.energy[np.argmin(np.abs(trace.times - 2.0))]
                self.assertAlmostEqual(at_two / trace.energy[0], math.exp(-4.0 * decay), delta=1e-12)

    def test_energy_bound_after_travel_time(self):
        # E(t) <= e^{2λ}Ẽ(t) = e^{2λ}e^{-2λt}Ẽ(0) <= e^{-2λ(t-2)}E(0)
        decay = 3.0
        trace = simulate_sv(profile_grid(400, decay), 6.0, sample_every=10)
        late = trace.times >= 2.0
        self.assertTrue(np.any(late))
        ratio = trace.energy[late] / trace.energy[0]
        bound = np.exp(-2.0 * decay * (trace.times[late] - 2.0))
        self.assertTrue(np.all(ratio <= bound * (1.0 + 1e-9)))
        self.assertLess(trace.energy[-1] / trace.energy[0], math.exp(-2.0 * decay * 3.0))

    def test_round_trip_needs_samples(self):
        trace = simulate_sv(profile_grid(40), 1.0)
        with self.assertRaises(UsageError):
            round_trip_rate(trace)

    def test_grid_validation(self):
        with self.assertRaises(UsageError):
            RiemannGrid(M=2, R1=np.zeros(2), R2=np.zeros(2), decay=1.0)
        with self.assertRaises(UsageError):
            simulate_sv(profile_grid(10), 0.0)


class TestExplicitTransformation(unittest.TestCase):
    def test_identity_without_decay(self):
        h, v = smooth_profile(100)
        h_t, v_t = explicit_transform_sv(h, v, 0.0)
        np.testing.assert_allclose(h_t, h, atol=1e-14)
        np.testing.assert_allclose(v_t, v, atol=1e-14)

    def test_boundary_compatibility(self):
        h, v = smooth_profile(100)
        h[0] = 1.0
        with self.assertRaises(ValueError):
            explicit_transform_sv(h, v, 0.5)

    def test_commutation_in_riemann_form(self):
        self.assertLess(commutation_residual(profile_grid(60, 0.7), 150), 1e-10)

    def test_mismatch_shrinks_with_grid(self):
        coarse = transform_mismatch(*smooth_profile(200), 0.5, 0.5)
        fine = transform_mismatch(*smooth_profile(400), 0.5, 0.5)
        self.assertLess(fine, coarse)

    def test_reconstruction_round_trip(self):
        h, v = smooth_profile(80)
        h2, v2 = reconstruct_hv(RiemannGrid.from_hv(h, v, 0.5))
        np.testing.assert_allclose(h2, h, atol=1e-12)
        np.testing.assert_allclose(v2, v, atol=1e-12)


class TestGains(unittest.TestCase):
    def test_analytic_gains(self):
        np.testing.assert_allclose(
            analytic_gains(1.0, 3), [-math.pi * math.tanh(1.0), 2.0 * math.pi * math.tanh(1.0), -3.0 * math.pi * math.tanh(1.0)]
        )

    def test_projected_gains_converge(self):
        analytic = analytic_gains(0.5, 8)
        a1, a2 = projected_gains(0.5, 200, 8)
        b1, b2 = projected_gains(0.5, 400, 8)
        self.assertEqual(float(np.max(np.abs(a1))), 0.0)
        self.assertEqual(float(np.max(np.abs(b1))), 0.0)
        coarse = np.max(np.abs(a2 - analytic))
        fine = np.max(np.abs(b2 - analytic))
        self.assertLess(fine, coarse)
        self.assertLess(fine / np.max(np.abs(analytic)), 1e-2)

    def test_feedback_on_nodes(self):
        x = np.linspace(0.0, 1.0, 401)
        self.assertAlmostEqual(feedback_hv(np.zeros_like(x), 1.0 - x, 0.5), math.tanh(0.5), places=12)


class TestExport(unittest.TestCase):
    def test_csv(self):
        trace = simulate_sv(profile_grid(20), 0.5)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "sv.csv")
            write_sv_trace_csv(trace, path)
            frame = pd.read_csv(path)
            self.assertEqual(list(frame.columns), SV_TRACE_COLUMNS)
            self.assertAlmostEqual(frame["energy"].iloc[-1], trace.energy[-1], places=15)


if __name__ == "__main__":
    unittest.main()
