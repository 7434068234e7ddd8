#  type: ignore
import unittest
from pathlib import Path

from pydantic import ValidationError

from bbm_absorb.config import DEFAULT_TOLERANCES
from bbm_absorb.config import ParseError
from bbm_absorb.config import parse_config

BASE = """
command = "{command}"
seed = 7

[law]
probs = [[0, 0.2], [3, 0.8]]

[drift]
c = {c}
"""


def document(command: str = "dist", c: float = 1.7, extra: str = "[barrier]\nx = 0.5\n") -> str:
    return BASE.format(command=command, c=c) + extra


class TestParseConfig(unittest.TestCase):
    def test_defaults(self) -> None:
        cfg = parse_config(document())
        self.assertEqual(cfg.seed, 7)
        self.assertEqual(cfg.threads, 1)
        self.assertEqual(cfg.series.order, 20_000)
        self.assertEqual(cfg.series.dist_order, 1024)
        self.assertIsNone(cfg.series.radius)
        self.assertEqual(cfg.simulation.replicas, 100_000)
        self.assertEqual(cfg.output.directory, Path("out"))
        self.assertEqual(cfg.offspring_law.delta, 1)
        self.assertEqual(cfg.tolerance("cross_F"), DEFAULT_TOLERANCES["cross_F"])

    def test_sections(self) -> None:
        extra = (
            "[barrier]\nx = 0.5\n[series]\norder = 512\nradius = 0.99\n"
            "[simulation]\nreplicas = 10\nmax_events = 100\n"
            "[output]\ndirectory = \"results\"\n[tolerances]\ncross_F = 1e-9\n"
        )
        cfg = parse_config(document(command="simulate", extra=extra))
        self.assertEqual(cfg.series.order, 512)
        self.assertEqual(cfg.series.radius, 0.99)
        self.assertEqual(cfg.tolerance("cross_F"), 1e-9)
        self.assertEqual(cfg.output.directory, Path("results"))
        sim = cfg.sim_config()
        self.assertEqual(sim.x, 0.5)
        self.assertEqual(sim.seed, 7)
        self.assertEqual(sim.max_events, 100)

    def test_two_barrier(self) -> None:
        cfg = parse_config(document(command="simulate", c=0.5, extra="[two_barrier]\na = -1.0\nb = 1.0\n"))
        self.assertTrue(cfg.sim_config().two_barrier)
        self.assertEqual(cfg.two_barrier.y, 0.0)
        self.assertEqual(cfg.sim_config().halvings, 0)
        extra = "[two_barrier]\na = -1.0\nb = 1.0\n[simulation]\nhalvings = 2\n"
        self.assertEqual(parse_config(document(command="simulate", c=0.5, extra=extra)).sim_config().halvings, 2)

    def test_one_child_mass(self) -> None:
        text = document().replace("[[0, 0.2], [3, 0.8]]", "[[1, 0.2], [3, 0.8]]")
        with self.assertRaisesRegex(ValidationError, "offspring mass at 1"):
            parse_config(text)

    def test_invalid_documents(self) -> None:
        cases = {
            "both barriers": document(extra="[barrier]\nx = 0.5\n[two_barrier]\na = -1.0\nb = 1.0\n"),
            "missing barrier": document(extra=""),
            "below critical drift": document(c=1.0),
            "unknown key": document(extra="[barrier]\nx = 0.5\nz = 1\n"),
            "unknown tolerance": document(extra="[barrier]\nx = 0.5\n[tolerances]\nspeed = 1.0\n"),
            "negative tolerance": document(extra="[barrier]\nx = 0.5\n[tolerances]\ncross_F = -1.0\n"),
            "unknown command": document(command="plot"),
            "disordered interval": document(command="simulate", extra="[two_barrier]\na = 1.0\nb = 2.0\n"),
            "too many halvings": document(command="simulate", extra="[barrier]\nx = 0.5\n[simulation]\nhalvings = 9\n"),
            "seed out of range": document().replace("seed = 7", "seed = 18446744073709551616"),
        }
        for name, text in cases.items():
            with self.subTest(name):
                with self.assertRaises(ValidationError):
                    parse_config(text)

    def test_toml_error_line(self) -> None:
        with self.assertRaises(ParseError) as caught:
            parse_config('command = "dist"\n[law\nprobs = []\n')
        self.assertEqual(caught.exception.line, 2)
        self.assertTrue(str(caught.exception).startswith("line 2: "))
