import math
import unittest
from typing import List

import numpy as np

import import_parent
import heuristics
import local


class HeuristicsTest(unittest.TestCase):
    def test_local_k(self):
        self.assertEqual(heuristics.heuristic_k(500), 16)
        self.assertEqual(heuristics.heuristic_k(1), 15)
        self.assertEqual(heuristics.heuristic_k(10_000), 35)
        # 15 + 250/500 = 15.5 rounds half up
        self.assertEqual(heuristics.heuristic_k(250), 16)
        with self.assertRaises(ValueError):
            heuristics.heuristic_k(0)

    def test_softening(self):
        self.assertAlmostEqual(heuristics.heuristic_softening(0.2), 183.94, delta=1e-2)
        self.assertAlmostEqual(heuristics.heuristic_softening(1.0), 500 * math.exp(-5), places=9)
        self.assertEqual(heuristics.heuristic_softening(1000), heuristics.SOFTENING_FLOOR)
        with self.assertRaises(ValueError):
            heuristics.heuristic_softening(0.0)

    def test_alpha(self):
        self.assertEqual(heuristics.heuristic_alpha(1.0), 12.0)
        self.assertAlmostEqual(heuristics.heuristic_alpha(1000.0), 2.0 + 20.0 / 1001.0)
        with self.assertRaises(ValueError):
            heuristics.heuristic_alpha(-1.0)

    def test_monotone_in_budget_and_size(self):
        epsilons: List[float] = [float(e) for e in np.logspace(-3, 3, 200)]
        softenings: np.ndarray = np.array([heuristics.heuristic_softening(e) for e in epsilons])
        alphas: np.ndarray = np.array([heuristics.heuristic_alpha(e) for e in epsilons])
        self.assertTrue(np.all(np.diff(softenings) <= 0))
        self.assertTrue(np.all(np.diff(alphas) < 0))
        sizes: range = range(1, 20_001, 37)
        ks: np.ndarray = np.array([heuristics.heuristic_k(n) for n in sizes])
        self.assertTrue(np.all(np.diff(ks) >= 0))

    def test_all(self):
        sources = [local.WeightedCentroid([float(i), 0.0], 1.0) for i in range(101)]
        params: heuristics.HeuristicParams = heuristics.heuristic_all(500, 1.0, sources)
        self.assertEqual(params.local_k, 16)
        self.assertEqual(params.alpha, 12.0)
        self.assertEqual(params.radius, 1.0)
        self.assertIn("local_k=16", repr(params))


if __name__ == "__main__":
    unittest.main()
