#  type: ignore
import dataclasses
import json
import math
import unittest

import numpy as np

from bbm_absorb.generator_solver import DriftBelowCritical
from bbm_absorb.generator_solver import PreconditionP0
from bbm_absorb.generator_solver import local_series_at_fixed_point
from bbm_absorb.generator_solver import ode_residual
from bbm_absorb.generator_solver import solve_a
from bbm_absorb.generator_solver import solve_a_shooting
from bbm_absorb.generator_solver import solve_a_zero_intercept
from bbm_absorb.offspring_law import make_offspring_law
from bbm_absorb.series_engine import TruncatedSeries


class TestZeroIntercept(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.law = make_offspring_law({2: 1.0})
        cls.gen = solve_a_zero_intercept(cls.law, 1.5, 2000)

    def test_low_order_coefficients_subcritical(self) -> None:
        a1 = 1.5 - math.sqrt(4.25)
        self.assertEqual(self.gen.coeffs[0], 0.0)
        self.assertAlmostEqual(self.gen.coeffs[1], a1, delta=1e-12)
        self.assertAlmostEqual(self.gen.coeffs[2], 2.0 / (3.0 - 3.0 * a1), delta=1e-12)
        self.assertAlmostEqual(self.gen.coeffs[2], 0.4269261, delta=1e-7)
        self.assertAlmostEqual(self.gen.alpha, -a1, delta=1e-12)

    def test_low_order_coefficients_critical(self) -> None:
        gen = solve_a_zero_intercept(self.law, math.sqrt(2.0), 50)
        self.assertAlmostEqual(gen.coeffs[1], math.sqrt(2.0) - 2.0, delta=1e-12)
        self.assertAlmostEqual(gen.coeffs[2], 2.0 / (6.0 - math.sqrt(2.0)), delta=1e-12)

    def test_residual(self) -> None:
        self.assertLess(ode_residual(self.gen), 1e-10)
        self.assertLess(self.gen.residual, 1e-10)

    def test_residual_detects_perturbation(self) -> None:
        coeffs = np.array(self.gen.coeffs)
        coeffs[2] += 1e-3
        perturbed = dataclasses.replace(self.gen, series=TruncatedSeries(coeffs))
        self.assertGreater(ode_residual(perturbed), 1e-4)

    def test_rates_are_nonnegative(self) -> None:
        rates = self.gen.q_rates
        self.assertEqual(rates[1], 0.0)
        self.assertGreaterEqual(rates.min(), -1e-12)
        self.assertLessEqual(rates.sum(), self.gen.alpha + 1e-9)

    def test_convexity(self) -> None:
        s = np.linspace(0.0, 0.95, 50)
        self.assertGreaterEqual(np.min(self.gen.second_derivative_at(s)), -1e-9)

    def test_span_two_law(self) -> None:
        gen = solve_a_zero_intercept(make_offspring_law({3: 1.0}), 2.5, 400)
        self.assertLess(np.max(np.abs(gen.coeffs[0::2])), 1e-12)
        self.assertLess(ode_residual(gen), 1e-10)

    def test_preconditions(self) -> None:
        with self.assertRaises(PreconditionP0):
            solve_a_zero_intercept(make_offspring_law({0: 0.2, 3: 0.8}), 1.7, 10)
        with self.assertRaises(DriftBelowCritical):
            solve_a_zero_intercept(self.law, 1.0, 10)

    def test_export(self) -> None:
        lines = self.gen.to_csv().decode("utf-8").splitlines()
        self.assertEqual(lines[0], "n,q_n")
        self.assertEqual(len(lines), self.gen.order + 2)
        header = json.loads(self.gen.header_json())
        self.assertEqual(header["N"], 2000)
        self.assertEqual(header["law"], [[2, 1.0]])
        self.assertEqual(header["method"], "zero_intercept")


class TestShooting(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.law = make_offspring_law({0: 0.2, 3: 0.8})
        cls.gen = solve_a_shooting(cls.law, 1.7, 256)

    def test_vanishes_at_fixed_point(self) -> None:
        q = (math.sqrt(2.0) - 1.0) / 2.0
        self.assertLess(abs(self.gen(q)), 1e-10)
        self.assertAlmostEqual(self.gen.q_smallest_zero, q, delta=1e-12)

    def test_intercept(self) -> None:
        a0, a1 = self.gen.coeffs[0], self.gen.coeffs[1]
        self.assertGreater(a0, 0.0)
        self.assertLess(a1, 0.0)
        self.assertAlmostEqual(self.gen.alpha, -a1)
        self.assertAlmostEqual(a1, 2.0 * 1.7 - 2.0 * 0.2 / a0, delta=1e-8)

    def test_residual(self) -> None:
        self.assertLess(ode_residual(self.gen), 1e-8)
        self.assertGreaterEqual(self.gen.q_rates.min(), -1e-10)

    def test_dispatch(self) -> None:
        self.assertEqual(solve_a(self.law, 1.7, 64).method, "shooting")
        self.assertEqual(solve_a(make_offspring_law({2: 1.0}), 1.5, 64).method, "zero_intercept")
        with self.assertRaises(PreconditionP0):
            solve_a_shooting(make_offspring_law({2: 1.0}), 1.5, 64)

    def test_local_series(self) -> None:
        local = local_series_at_fixed_point(self.law, 1.7, 20)
        fprime = float(self.law.pgf_derivative(self.law.q_prime))
        self.assertEqual(local[0], 0.0)
        self.assertAlmostEqual(local[1], 1.7 - math.sqrt(1.7**2 + 2.0 * (1.0 - fprime)), delta=1e-14)
        # a near q' from both representations
        step = 0.02
        self.assertAlmostEqual(local(step), self.gen(self.law.q_prime + step), delta=1e-9)
