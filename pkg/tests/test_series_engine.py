#  type: ignore
import unittest
import warnings

import numpy as np

from bbm_absorb.series_engine import AliasWarning
from bbm_absorb.series_engine import InvalidSampling
from bbm_absorb.series_engine import TruncatedSeries
from bbm_absorb.series_engine import cauchy_extract
from bbm_absorb.series_engine import circle_nodes
from bbm_absorb.series_engine import coefficients_from_samples
from bbm_absorb.series_engine import mirror_half_samples
from bbm_absorb.series_engine import sampling_size
from bbm_absorb.series_engine import ser_eval
from bbm_absorb.series_engine import ser_eval_circle
from bbm_absorb.series_engine import ser_mul


def _geometric(order: int) -> TruncatedSeries:
    return TruncatedSeries(0.5 ** np.arange(order + 1))


class TestTruncatedSeries(unittest.TestCase):
    def test_arithmetic(self) -> None:
        a = TruncatedSeries([1.0, 2.0, 3.0])
        b = TruncatedSeries([0.5, -1.0, 0.0, 7.0])
        np.testing.assert_array_equal((a + b).coeffs, [1.5, 1.0, 3.0])
        np.testing.assert_array_equal((a - b).coeffs, [0.5, 3.0, 3.0])
        np.testing.assert_array_equal((2.0 * a).coeffs, [2.0, 4.0, 6.0])
        np.testing.assert_array_equal((a + 1.0).coeffs, [2.0, 2.0, 3.0])
        np.testing.assert_array_equal(a.derivative().coeffs, [2.0, 6.0])
        np.testing.assert_array_equal(b.truncate(1).coeffs, [0.5, -1.0])
        self.assertEqual(b.order, 3)

    def test_read_only(self) -> None:
        source = np.array([1.0, 2.0])
        series = TruncatedSeries(source)
        source[0] = 5.0
        self.assertEqual(series[0], 1.0)
        with self.assertRaises(ValueError):
            series.coeffs[0] = 3.0

    def test_constructors(self) -> None:
        np.testing.assert_array_equal(TruncatedSeries.unit(3).coeffs, [1.0, 0.0, 0.0, 0.0])
        np.testing.assert_array_equal(TruncatedSeries.monomial(2, 3).coeffs, [0.0, 0.0, 1.0, 0.0])

    def test_to_csv(self) -> None:
        text = TruncatedSeries([1.0, 0.25]).to_csv().decode("utf-8").splitlines()
        self.assertEqual(text[0], "n,value")
        self.assertEqual(text[2], "1,2.5000000000000000e-01")


class TestSerMul(unittest.TestCase):
    def test_difference_of_squares(self) -> None:
        product = ser_mul(TruncatedSeries([1.0, 1.0, 0, 0, 0]), TruncatedSeries([1.0, -1.0, 0, 0, 0]))
        np.testing.assert_array_equal(product.coeffs, [1.0, 0.0, -1.0, 0.0, 0.0])

    def test_unit(self) -> None:
        a = _geometric(20)
        np.testing.assert_array_equal(ser_mul(a, TruncatedSeries.unit(20)).coeffs, a.coeffs)

    def test_takes_smaller_order(self) -> None:
        self.assertEqual(ser_mul(_geometric(10), _geometric(4)).order, 4)

    def test_commutative_and_associative(self) -> None:
        rng = np.random.default_rng(7)
        a, b, c = (TruncatedSeries(rng.uniform(-1.0, 1.0, 31)) for _ in range(3))
        np.testing.assert_allclose(ser_mul(a, b).coeffs, ser_mul(b, a).coeffs, rtol=0, atol=1e-14)
        left = ser_mul(ser_mul(a, b), c).coeffs
        right = ser_mul(a, ser_mul(b, c)).coeffs
        np.testing.assert_allclose(left, right, rtol=0, atol=1e-14 * np.max(np.abs(left)) * 10)


class TestSerEval(unittest.TestCase):
    def test_geometric(self) -> None:
        value, bound = ser_eval(_geometric(60), 0.5)
        self.assertAlmostEqual(value, 4.0 / 3.0, places=14)
        self.assertLess(bound, 1e-30)

    def test_at_zero(self) -> None:
        value, _ = ser_eval(TruncatedSeries([0.3, 2.0]), 0.0)
        self.assertEqual(value, 0.3)

    def test_bound_outside_disk(self) -> None:
        _, bound = ser_eval(_geometric(3), 1.5)
        self.assertEqual(bound, float("inf"))

    def test_circle_matches_pointwise(self) -> None:
        series = TruncatedSeries(np.random.default_rng(1).uniform(-1.0, 1.0, 41))
        for samples in (16, 64):
            nodes = circle_nodes(0.8, samples)
            np.testing.assert_allclose(
                ser_eval_circle(series, 0.8, samples), ser_eval(series, nodes)[0], rtol=0, atol=1e-13
            )


class TestCauchyExtract(unittest.TestCase):
    def test_square(self) -> None:
        extraction = cauchy_extract(lambda s: s**2, 0.5, 16, max_index=8)
        expected = np.zeros(9)
        expected[2] = 1.0
        np.testing.assert_allclose(extraction.coeffs, expected, atol=1e-13)

    def test_geometric(self) -> None:
        extraction = cauchy_extract(lambda s: 1.0 / (1.0 - s / 2.0), 0.9, 2**12, max_index=100)
        np.testing.assert_allclose(extraction.coeffs, 0.5 ** np.arange(101), rtol=0, atol=1e-10)
        self.assertLess(extraction.imag_residue, 1e-9)

    def test_polynomial_any_radius(self) -> None:
        coeffs = np.random.default_rng(3).uniform(-1.0, 1.0, 6)
        series = TruncatedSeries(coeffs)
        for radius in (0.3, 0.6, 0.95):
            extraction = cauchy_extract(series, radius, 64, max_index=5)
            np.testing.assert_allclose(extraction.coeffs, coeffs, rtol=0, atol=1e-12)

    def test_radius_independence(self) -> None:
        def evaluator(s):
            return np.exp(s) / (1.0 - s / 2.0)

        small = cauchy_extract(evaluator, 0.5, 256, max_index=20).coeffs
        large = cauchy_extract(evaluator, 0.9, 256, max_index=20).coeffs
        np.testing.assert_allclose(small, large, rtol=0, atol=1e-8)

    def test_complex_path(self) -> None:
        extraction = cauchy_extract(lambda s: 1j * s, 0.5, 16, max_index=2, real=False)
        np.testing.assert_allclose(extraction.coeffs, [0.0, 1j, 0.0], atol=1e-14)

    def test_alias_warning(self) -> None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cauchy_extract(lambda s: 1.0 / (1.0 - s / 0.95), 0.9, 16, max_index=2)
        self.assertTrue(any(issubclass(w.category, AliasWarning) for w in caught))

    def test_invalid_sampling(self) -> None:
        with self.assertRaises(InvalidSampling):
            cauchy_extract(lambda s: s, 1.0, 16)
        with self.assertRaises(InvalidSampling):
            cauchy_extract(lambda s: s, 0.5, 12)
        with self.assertRaises(InvalidSampling):
            coefficients_from_samples(np.ones(16), 0.5, max_index=16)

    def test_sampling_size(self) -> None:
        self.assertEqual(sampling_size(100), 1024)
        self.assertEqual(sampling_size(128), 1024)
        self.assertEqual(sampling_size(10**4 + 1), 2**17)

    def test_mirror(self) -> None:
        nodes = circle_nodes(0.7, 8)
        half = circle_nodes(0.7, 8, half=True)
        np.testing.assert_allclose(mirror_half_samples(half, 8), nodes, atol=1e-15)
