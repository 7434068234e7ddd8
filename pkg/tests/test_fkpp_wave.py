#  type: ignore
import math
import unittest

import numpy as np

from bbm_absorb.fkpp_wave import F_derivative_from_wave
from bbm_absorb.fkpp_wave import F_from_wave
from bbm_absorb.fkpp_wave import F_second_derivative_from_wave
from bbm_absorb.fkpp_wave import OutOfRange
from bbm_absorb.fkpp_wave import WaveRegimeError
from bbm_absorb.fkpp_wave import a_derivative_from_wave
from bbm_absorb.fkpp_wave import a_from_wave
from bbm_absorb.fkpp_wave import a_second_derivative_from_wave
from bbm_absorb.fkpp_wave import solve_wave
from bbm_absorb.fkpp_wave import wave_residual
from bbm_absorb.generator_solver import solve_a
from bbm_absorb.offspring_law import make_offspring_law


class TestSubcriticalWave(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.law = make_offspring_law({2: 1.0})
        cls.wave = solve_wave(cls.law, 1.5)

    def test_shape(self) -> None:
        wave = self.wave
        self.assertTrue(np.all(np.diff(wave.xs) > 0.0))
        self.assertTrue(np.all(np.diff(wave.phi) < 0.0))
        self.assertTrue(np.all(wave.dphi < 0.0))
        self.assertIsNone(wave.K_hat)
        self.assertAlmostEqual(float(wave.state(0.0)[0]), 0.5, delta=1e-12)
        self.assertLess(wave.phi[-1], 1e-11)

    def test_decay_rate(self) -> None:
        mask = (self.wave.xs >= 15.0) & (self.wave.xs <= 22.0)
        rates = -self.wave.dphi[mask] / self.wave.phi[mask]
        np.testing.assert_allclose(rates, 1.0, atol=1e-3)

    def test_residual(self) -> None:
        self.assertLess(wave_residual(self.wave), 1e-5)

    def test_slope_at_one(self) -> None:
        s = 1e-8
        self.assertAlmostEqual(float(a_from_wave(self.wave, s)) / -s, 1.0, delta=1e-4)
        self.assertAlmostEqual(float(a_derivative_from_wave(self.wave, s)), 1.0, delta=1e-4)

    def test_node_consistency(self) -> None:
        n = self.wave.xs.shape[0]
        index = [n // 5, n // 2, n - 10]
        np.testing.assert_allclose(
            a_from_wave(self.wave, self.wave.phi[index]), self.wave.dphi[index], rtol=1e-9
        )

    def test_series_agreement(self) -> None:
        gen = solve_a(self.law, 1.5, 2000)
        s = np.linspace(0.05, 0.9, 18)
        np.testing.assert_allclose(a_from_wave(self.wave, 1.0 - s), gen(s), rtol=0, atol=1e-6)
        np.testing.assert_allclose(
            a_derivative_from_wave(self.wave, 1.0 - s), gen.derivative_at(s), rtol=0, atol=1e-6
        )
        np.testing.assert_allclose(
            a_second_derivative_from_wave(self.wave, 1.0 - s), gen.second_derivative_at(s), rtol=0, atol=1e-5
        )

    def test_translation(self) -> None:
        s = np.array([0.1, 0.4, 0.8])
        np.testing.assert_allclose(F_from_wave(self.wave, 0.0, s), 1.0 - s)
        self.assertAlmostEqual(float(F_derivative_from_wave(self.wave, 0.5, 1e-8)), math.exp(0.5), delta=1e-4)
        step = 1e-4
        second = (
            F_from_wave(self.wave, 0.5, 0.3 - step) - 2.0 * F_from_wave(self.wave, 0.5, 0.3)
            + F_from_wave(self.wave, 0.5, 0.3 + step)
        ) / step**2
        self.assertAlmostEqual(float(F_second_derivative_from_wave(self.wave, 0.5, 0.3)), float(second), delta=1e-4)

    def test_semigroup(self) -> None:
        s = np.array([0.1, 0.3, 0.6, 0.9])
        direct = F_from_wave(self.wave, 0.7, s)
        composed = F_from_wave(self.wave, 0.3, 1.0 - F_from_wave(self.wave, 0.4, s))
        np.testing.assert_allclose(direct, composed, rtol=0, atol=1e-8)

    def test_shorter_tail(self) -> None:
        short = solve_wave(self.law, 1.5, X_max=25.0)
        s = np.geomspace(1e-8, 0.9, 30)
        np.testing.assert_allclose(a_from_wave(short, s), a_from_wave(self.wave, s), rtol=1e-8)

    def test_out_of_range(self) -> None:
        with self.assertRaises(OutOfRange):
            a_from_wave(self.wave, 1.5)
        with self.assertRaises(OutOfRange):
            a_from_wave(self.wave, 1e-15)
        with self.assertRaises(OutOfRange):
            F_from_wave(self.wave, -1.0, 0.5)

    def test_export(self) -> None:
        lines = self.wave.to_csv().decode("utf-8").splitlines()
        self.assertEqual(lines[0], "x,phi,dphi")
        self.assertEqual(len(lines), self.wave.xs.shape[0] + 1)


class TestCriticalWave(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.law = make_offspring_law({2: 1.0})
        cls.wave = solve_wave(cls.law, math.sqrt(2.0))

    def test_tail_constant(self) -> None:
        wave = self.wave
        self.assertIsNotNone(wave.K_hat)
        self.assertGreater(wave.K_hat, 0.0)
        c0 = self.law.c0
        g = [float(wave.state(x)[0]) * math.exp(c0 * x) for x in (12.0, 16.0)]
        self.assertAlmostEqual((g[1] - g[0]) / 4.0 / wave.K_hat, 1.0, delta=1e-2)

    def test_monotone(self) -> None:
        self.assertTrue(np.all(np.diff(self.wave.phi) < 0.0))
        self.assertLess(wave_residual(self.wave), 1e-5)


class TestWaveWithExtinction(unittest.TestCase):
    def test_range_and_series_agreement(self) -> None:
        law = make_offspring_law({0: 0.2, 3: 0.8})
        wave = solve_wave(law, 1.7)
        self.assertAlmostEqual(wave.top, 1.0 - law.q_prime)
        self.assertLess(wave.s_range[1], wave.top)
        gen = solve_a(law, 1.7, 256)
        s = np.linspace(law.q_prime + 0.05, 0.9, 12)
        np.testing.assert_allclose(a_from_wave(wave, 1.0 - s), gen(s), rtol=0, atol=1e-6)

    def test_regime(self) -> None:
        with self.assertRaises(WaveRegimeError):
            solve_wave(make_offspring_law({2: 1.0}), 1.0)
