#  type: ignore
import math
import unittest
from dataclasses import replace

import numpy as np

from bbm_absorb.asymptotics_lab import two_barrier_mean
from bbm_absorb.bbm_simulator import CapExceeded
from bbm_absorb.bbm_simulator import EmpiricalDist
from bbm_absorb.bbm_simulator import MAX_HALVINGS
from bbm_absorb.bbm_simulator import NonPositiveDuration
from bbm_absorb.bbm_simulator import SimConfig
from bbm_absorb.bbm_simulator import SimulationRegimeError
from bbm_absorb.bbm_simulator import _bridge_skeleton
from bbm_absorb.bbm_simulator import _first_piece
from bbm_absorb.bbm_simulator import bridge_crossing_prob
from bbm_absorb.bbm_simulator import dt_convergence_study
from bbm_absorb.bbm_simulator import replica_generator
from bbm_absorb.bbm_simulator import run_ensemble
from bbm_absorb.bbm_simulator import simulate_absorbed
from bbm_absorb.bbm_simulator import simulate_two_barrier
from bbm_absorb.errors import ModelError
from bbm_absorb.offspring_law import expected_absorbed
from bbm_absorb.offspring_law import make_offspring_law

DYADIC = make_offspring_law({2: 1.0})


class TestBridge(unittest.TestCase):
    def test_values(self) -> None:
        self.assertAlmostEqual(bridge_crossing_prob(0.0, 0.0, 1.0, 1.0), 0.1353353, places=7)
        self.assertEqual(bridge_crossing_prob(1.0, 0.0, 1.0, 1.0), 1.0)
        self.assertEqual(bridge_crossing_prob(0.0, 2.0, 0.5, 1.0), 1.0)
        self.assertAlmostEqual(bridge_crossing_prob(-1.0, 0.5, 2.0, 1.0), math.exp(-1.0), places=15)

    def test_non_positive_duration(self) -> None:
        with self.assertRaises(NonPositiveDuration):
            bridge_crossing_prob(0.0, 0.0, 0.0, 1.0)


class TestBridgeRefinement(unittest.TestCase):
    def test_skeleton_keeps_endpoints(self) -> None:
        start, end = np.array([0.0, 1.0]), np.array([0.5, -1.0])
        points = _bridge_skeleton(start, end, 0.1, 2, np.random.default_rng(1))
        self.assertEqual(points.shape, (2, 5))
        np.testing.assert_array_equal(points[:, 0], start)
        np.testing.assert_array_equal(points[:, -1], end)
        np.testing.assert_array_equal(_bridge_skeleton(start, end, 0.1, 0, np.random.default_rng(1)), np.stack([start, end], axis=1))

    def test_midpoint_law(self) -> None:
        zeros = np.zeros(200_000)
        middle = _bridge_skeleton(zeros, zeros + 0.2, 0.4, 1, np.random.default_rng(2))[:, 1]
        self.assertAlmostEqual(float(middle.mean()), 0.1, delta=3e-3)
        self.assertAlmostEqual(float(middle.var()), 0.1, delta=2e-3)

    def test_first_piece(self) -> None:
        p = np.array([[0.1, 0.2]] * 3)
        np.testing.assert_array_equal(_first_piece(p, np.array([0.05, 0.2, 0.3])), [0, 1, 2])
        np.testing.assert_array_equal(_first_piece(np.array([[0.5], [0.5]]), np.array([0.4, 0.6])), [0, 1])
        np.testing.assert_array_equal(_first_piece(np.array([[0.0, 1.0]]), np.array([0.999])), [1])


class TestSimConfig(unittest.TestCase):
    def test_validation(self) -> None:
        with self.assertRaises(ModelError):
            SimConfig(law=DYADIC, c=1.5)
        with self.assertRaises(ModelError):
            SimConfig(law=DYADIC, c=1.5, x=0.5, a=-1.0, b=1.0, y=0.0)
        with self.assertRaises(ModelError):
            SimConfig(law=DYADIC, c=1.5, x=0.0)
        with self.assertRaises(ModelError):
            SimConfig(law=DYADIC, c=1.5, a=1.0, b=2.0, y=0.0)
        with self.assertRaises(ModelError):
            SimConfig(law=DYADIC, c=1.5, x=0.5, seed=-1)
        with self.assertRaises(ModelError):
            SimConfig(law=DYADIC, c=1.5, x=0.5, max_events=0)
        with self.assertRaises(NonPositiveDuration):
            SimConfig(law=DYADIC, c=1.5, a=-1.0, b=1.0, y=0.0, dt=0.0)
        with self.assertRaises(SimulationRegimeError):
            SimConfig(law=DYADIC, c=1.0, x=0.5)
        with self.assertRaises(ModelError):
            SimConfig(law=DYADIC, c=1.5, a=-1.0, b=1.0, y=0.0, halvings=-1)
        with self.assertRaises(ModelError):
            SimConfig(law=DYADIC, c=1.5, a=-1.0, b=1.0, y=0.0, halvings=MAX_HALVINGS + 1)

    def test_two_barrier_below_critical_drift(self) -> None:
        self.assertTrue(SimConfig(law=DYADIC, c=0.5, a=-1.0, b=1.0, y=0.0).two_barrier)


class TestReplicas(unittest.TestCase):
    def test_streams_are_reproducible(self) -> None:
        first = replica_generator(42, 7).random(5)
        np.testing.assert_array_equal(first, replica_generator(42, 7).random(5))
        self.assertFalse(np.array_equal(first, replica_generator(42, 8).random(5)))
        self.assertFalse(np.array_equal(first, replica_generator(43, 7).random(5)))

    def test_single_tree(self) -> None:
        cfg = SimConfig(law=DYADIC, c=1.5, x=0.5, seed=3)
        outcome = simulate_absorbed(cfg, replica_generator(3, 0))
        self.assertEqual(outcome, simulate_absorbed(cfg, replica_generator(3, 0)))
        self.assertGreaterEqual(outcome.count, 1)
        self.assertFalse(outcome.censored)
        with self.assertRaises(ModelError):
            simulate_two_barrier(cfg, replica_generator(3, 0))

    def test_censoring(self) -> None:
        cfg = SimConfig(law=DYADIC, c=1.5, x=3.0, max_events=3)
        dist = run_ensemble(cfg, 200)
        self.assertGreater(dist.censored, 0)
        self.assertEqual(sum(dist.counts.values()) + dist.censored, dist.replicas)
        self.assertAlmostEqual(dist.censoring_rate, dist.censored / 200)
        self.assertTrue(issubclass(CapExceeded, ArithmeticError))


class TestEnsemble(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.cfg = SimConfig(law=DYADIC, c=2.5, x=0.5, seed=11)
        cls.dist = run_ensemble(cls.cfg, 3000, block_size=500)

    def test_mean(self) -> None:
        exact = expected_absorbed(DYADIC, 2.5, 0.5)
        self.assertAlmostEqual(exact, math.exp((2.5 - math.sqrt(4.25)) * 0.5), places=12)
        self.assertLess(abs(self.dist.mean - exact), 5.0 * self.dist.standard_error)
        self.assertEqual(self.dist.censored, 0)

    def test_block_layout_does_not_matter(self) -> None:
        again = run_ensemble(self.cfg, 3000, block_size=4096)
        self.assertEqual(again.counts, self.dist.counts)

    def test_worker_processes_do_not_matter(self) -> None:
        serial = run_ensemble(self.cfg, 200, block_size=50)
        parallel = run_ensemble(self.cfg, 200, parallelism=2, block_size=50)
        self.assertEqual(serial, parallel)

    def test_summary_and_export(self) -> None:
        summary = self.dist.summary()
        self.assertEqual(summary["replicas"], 3000)
        self.assertEqual(summary["censored"], 0)
        lines = self.dist.to_csv().decode("utf-8").splitlines()
        self.assertEqual(lines[0], "n,occurrences")
        self.assertEqual(len(lines), len(self.dist.counts) + 1)

    def test_odd_counts_for_span_two(self) -> None:
        law = make_offspring_law({3: 1.0})
        dist = run_ensemble(SimConfig(law=law, c=2.5, x=0.5, seed=5), 500)
        self.assertTrue(all(n % 2 == 1 for n in dist.counts))


class TestEmpiricalDist(unittest.TestCase):
    def setUp(self) -> None:
        self.dist = EmpiricalDist(counts={1: 60, 3: 30, 5: 10}, replicas=101, censored=1)

    def test_moments(self) -> None:
        self.assertEqual(self.dist.observed, 100)
        self.assertAlmostEqual(self.dist.mean, 2.0)
        self.assertAlmostEqual(self.dist.second_moment, 5.8)
        self.assertAlmostEqual(self.dist.variance, 1.8 * 100 / 99)
        self.assertAlmostEqual(self.dist.probability(3), 0.3)
        self.assertAlmostEqual(self.dist.tail_probability(1), 0.4)

    def test_wilson_interval(self) -> None:
        lo, hi = self.dist.wilson_interval(3)
        self.assertLess(lo, 0.3)
        self.assertGreater(hi, 0.3)
        self.assertAlmostEqual(lo, 0.21895, places=4)
        self.assertAlmostEqual(hi, 0.39585, places=4)
        self.assertAlmostEqual(self.dist.wilson_interval(7)[0], 0.0, places=12)

    def test_intervals_contain_estimates(self) -> None:
        intervals = self.dist.intervals()
        self.assertEqual(sorted(intervals), [1, 3, 5])
        for n, (lo, hi) in intervals.items():
            self.assertLessEqual(lo, self.dist.probability(n))
            self.assertGreaterEqual(hi, self.dist.probability(n))

    def test_all_censored(self) -> None:
        dist = EmpiricalDist(counts={}, replicas=4, censored=4)
        self.assertEqual(dist.wilson_interval(1), (0.0, 1.0))
        self.assertEqual(dist.tail_interval(1), (0.0, 1.0))
        self.assertEqual(dist.intervals(), {})

    def test_inconsistent_counts(self) -> None:
        with self.assertRaises(ModelError):
            EmpiricalDist(counts={1: 3}, replicas=5)


class TestTwoBarrier(unittest.TestCase):
    def test_mean_matches_closed_form(self) -> None:
        cfg = SimConfig(law=DYADIC, c=1.5, a=-1.0, b=1.0, y=0.0, seed=2, dt=0.01)
        dist = run_ensemble(cfg, 2000, block_size=500)
        exact = two_barrier_mean(DYADIC, 1.5, -1.0, 1.0, 0.0)
        self.assertLess(abs(dist.mean - exact), 5.0 * dist.standard_error)
        self.assertIsNotNone(dist.upper)
        self.assertEqual(dist.upper.replicas, 2000)
        self.assertGreater(dist.upper.mean, dist.mean)

    def test_halving_keeps_most_trees(self) -> None:
        cfg = SimConfig(law=DYADIC, c=1.5, a=-1.0, b=1.0, y=0.0, seed=4, dt=0.02)
        halved = replace(cfg, halvings=1)
        same = 0
        for r in range(200):
            coarse = simulate_two_barrier(cfg, replica_generator(4, r))
            fine = simulate_two_barrier(halved, replica_generator(4, r))
            same += (coarse.count, coarse.upper) == (fine.count, fine.upper)
        self.assertGreater(same, 160)

    def test_refined_mean_matches_closed_form(self) -> None:
        cfg = SimConfig(law=DYADIC, c=1.5, a=-1.0, b=1.0, y=0.0, seed=9, dt=0.02, halvings=2)
        dist = run_ensemble(cfg, 1000)
        exact = two_barrier_mean(DYADIC, 1.5, -1.0, 1.0, 0.0)
        self.assertLess(abs(dist.mean - exact), 5.0 * dist.standard_error)

    def test_dt_study(self) -> None:
        cfg = SimConfig(law=DYADIC, c=1.5, a=-1.0, b=1.0, y=0.0, seed=4, dt=0.02)
        study = dt_convergence_study(cfg, 400)
        self.assertEqual(study.dt, 0.02)
        self.assertLess(study.shift_in_se, 3.0)
        self.assertEqual(dt_convergence_study(replace(cfg, halvings=1), 20).dt, 0.01)
        with self.assertRaises(ModelError):
            dt_convergence_study(SimConfig(law=DYADIC, c=1.5, x=0.5), 10)
