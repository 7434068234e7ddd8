#  type: ignore
import tempfile
import unittest
from pathlib import Path

import numpy as np

from bbm_absorb.artifacts import read_csv
from bbm_absorb.artifacts import render_csv
from bbm_absorb.artifacts import sha256_hex
from bbm_absorb.artifacts import write_once


class TestRenderCsv(unittest.TestCase):
    def test_format(self) -> None:
        data = render_csv([("n", np.array([0, 1])), ("value", [0.5, 1.0])])
        self.assertEqual(data, b"n,value\n0,5.0000000000000000e-01\n1,1.0000000000000000e+00\n")

    def test_reals_survive_a_round_trip(self) -> None:
        values = np.random.default_rng(0).standard_normal(20) * 1e-7
        with tempfile.TemporaryDirectory() as tmp:
            path = write_once(Path(tmp) / "values.csv", render_csv([("n", np.arange(20)), ("v", values)]))
            header, table = read_csv(path)
        self.assertEqual(header, ("n", "v"))
        np.testing.assert_array_equal(table[:, 1], values)

    def test_length_mismatch(self) -> None:
        with self.assertRaises(ValueError):
            render_csv([("a", [1.0]), ("b", [1.0, 2.0])])


class TestWriteOnce(unittest.TestCase):
    def test_never_overwrites(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            target = Path(tmp) / "sub" / "result.csv"
            first = write_once(target, b"one\n")
            self.assertEqual(first, target)
            self.assertEqual(write_once(target, b"one\n"), target)
            second = write_once(target, b"two\n")
            self.assertNotEqual(second, target)
            self.assertEqual(second.name, f"result.{sha256_hex(b'two' + bytes([10]))[:12]}.csv")
            self.assertEqual(target.read_bytes(), b"one\n")
            self.assertEqual(second.read_bytes(), b"two\n")
            self.assertEqual(write_once(target, b"two\n"), second)
