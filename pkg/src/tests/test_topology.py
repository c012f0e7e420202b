import os
import tempfile
import time
import unittest
from typing import List

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

import import_parent
import field
import local
import topology


def make_field(probes: np.ndarray, energies: np.ndarray) -> field.PotentialField:
    d: int = probes.shape[1]
    bounds: np.ndarray = np.column_stack([probes.min(axis=0), probes.max(axis=0) + 1e-9])
    return field.PotentialField(
        probes, energies, [local.WeightedCentroid(np.zeros(d), 1.0)], bounds, 1.0
    )


def brute_force_components(
    probes: np.ndarray, active: np.ndarray, radius: float
) -> List[List[int]]:
    indices: np.ndarray = np.flatnonzero(active)
    if indices.size == 0:
        return []
    adjacency: np.ndarray = cdist(probes[indices], probes[indices]) <= radius
    _, labels = connected_components(csr_matrix(adjacency), directed=False)
    components: List[List[int]] = [
        sorted(int(i) for i in indices[labels == label]) for label in np.unique(labels)
    ]
    return sorted(components, key=lambda members: members[0])


class ThresholdTest(unittest.TestCase):
    def test_distinct_values(self):
        np.testing.assert_array_equal(
            topology.threshold_sequence([1.0, 3.0, 2.0, 3.0], 10), [3.0, 2.0, 1.0]
        )
        np.testing.assert_array_equal(
            topology.threshold_sequence([1.0, 3.0, 2.0, 3.0], 10, "sublevel"), [1.0, 2.0, 3.0]
        )

    def test_quantiles(self):
        values: np.ndarray = np.arange(101, dtype=float)
        levels: np.ndarray = topology.threshold_sequence(values, 5)
        np.testing.assert_allclose(levels, [100.0, 75.0, 50.0, 25.0, 0.0])

    def test_invalid(self):
        with self.assertRaises(ValueError):
            topology.threshold_sequence([], 3)
        with self.assertRaises(ValueError):
            topology.threshold_sequence([1.0], 0)


class ComponentsTest(unittest.TestCase):
    def test_line(self):
        positions: np.ndarray = np.array([[0.0], [1.0], [2.0], [5.0], [6.0], [20.0]])
        self.assertEqual(
            topology.connected_components(range(6), positions, 1.5), [[0, 1, 2], [3, 4], [5]]
        )

    def test_subset(self):
        positions: np.ndarray = np.array([[0.0], [1.0], [2.0]])
        # probe 1 bridges 0 and 2 only when it is included
        self.assertEqual(topology.connected_components([0, 2], positions, 1.5), [[0], [2]])
        self.assertEqual(topology.connected_components([], positions, 1.5), [])


class MergeTreeTest(unittest.TestCase):
    def test_matches_brute_force(self):
        rng: np.random.Generator = np.random.default_rng(99)
        mismatches: int = 0
        for instance in range(100):
            count: int = int(rng.integers(1, 201))
            d: int = int(rng.integers(1, 4))
            probes: np.ndarray = rng.uniform(0, 10, size=(count, d))
            if instance % 2:
                # ties: many probes enter at the same level
                energies: np.ndarray = rng.integers(0, 12, size=count).astype(float)
            else:
                energies = rng.exponential(1.0, size=count)
            direction: str = "superlevel" if instance % 4 < 2 else "sublevel"
            radius: float = float(rng.uniform(0.2, 4.0))
            cfg: topology.FiltrationConfig = topology.FiltrationConfig(
                count + 1, radius, int(rng.integers(1, 51)), direction
            )
            potential_field: field.PotentialField = make_field(probes, energies)
            tree, levels_processed = topology.build_merge_tree(potential_field, cfg)
            self.assertEqual(levels_processed, tree.thresholds.size)

            for level, threshold in enumerate(tree.thresholds):
                if direction == "superlevel":
                    active: np.ndarray = energies >= threshold
                else:
                    active = energies <= threshold
                expected: List[List[int]] = brute_force_components(probes, active, radius)
                mismatches += tree.components_at(level, energies) != expected
        self.assertEqual(mismatches, 0)

    def test_two_peaks(self):
        probes: np.ndarray = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
        energies: np.ndarray = np.array([5.0, 3.0, 1.0, 4.0, 2.0])
        tree, levels_processed = topology.build_merge_tree(
            make_field(probes, energies), topology.FiltrationConfig(10, 1.0)
        )
        self.assertEqual(levels_processed, 5)
        leaves: List[topology.TreeNode] = tree.leaves()
        self.assertEqual([leaf.member_probe_indices[0] for leaf in leaves], [0, 3])
        # both peaks merge when probe 2 enters at energy 1
        self.assertEqual([leaf.death_threshold for leaf in leaves], [1.0, 1.0])
        self.assertEqual(leaves[0].persistence(tree.end_threshold), 4.0)
        self.assertEqual(leaves[1].persistence(tree.end_threshold), 3.0)
        root: topology.TreeNode = tree.alive_nodes()[0]
        self.assertEqual(root.children, [0, 1])
        self.assertEqual(root.member_probe_indices, [0, 1, 2, 3, 4])
        self.assertFalse(any(leaf.alive for leaf in leaves))

    def test_early_stop(self):
        probes: np.ndarray = np.array([[0.0], [10.0], [20.0], [30.0]])
        energies: np.ndarray = np.array([4.0, 3.0, 2.0, 1.0])
        tree, levels_processed = topology.build_merge_tree(
            make_field(probes, energies), topology.FiltrationConfig(2, 1.0)
        )
        self.assertEqual(levels_processed, 2)
        self.assertEqual(len(tree.alive_nodes()), 2)
        with self.assertRaises(ValueError):
            tree.components_at(2, energies)

    def test_save_and_load(self):
        rng: np.random.Generator = np.random.default_rng(1)
        probes: np.ndarray = rng.uniform(0, 5, size=(40, 2))
        energies: np.ndarray = rng.exponential(size=40)
        tree, _ = topology.build_merge_tree(
            make_field(probes, energies), topology.FiltrationConfig(50, 1.0, 20)
        )
        with tempfile.TemporaryDirectory() as directory:
            file_path: str = os.path.join(directory, "tree.json")
            tree.to_file(file_path)
            loaded: topology.MergeTree = topology.MergeTree.from_file(file_path)
        self.assertEqual(loaded.get_id(), tree.get_id())
        for level in range(tree.levels_processed):
            self.assertEqual(
                loaded.components_at(level, energies), tree.components_at(level, energies)
            )

    def test_centroids_from_birth_members(self):
        rng: np.random.Generator = np.random.default_rng(7)
        for _ in range(20):
            samples: np.ndarray = rng.uniform(0, 5, size=(150, 2))
            energies: np.ndarray = rng.exponential(size=150)
            tree, _ = topology.build_merge_tree(
                make_field(samples, energies), topology.FiltrationConfig(150, 0.6, 40)
            )
            for node in tree.nodes:
                members: List[int] = [
                    i
                    for i in node.member_probe_indices
                    if energies[i] >= tree.thresholds[node.birth_level]
                ]
                weights: np.ndarray = energies[members]
                expected: np.ndarray = weights @ samples[members] / weights.sum()
                np.testing.assert_allclose(node.centroid, expected, rtol=1e-9)

    def test_zero_energies(self):
        samples: np.ndarray = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]])
        np.testing.assert_allclose(
            topology.weighted_centroid([0, 1, 2], samples, np.zeros(3)), [1.0 / 3.0, 1.0]
        )
        tree, _ = topology.build_merge_tree(
            make_field(samples, np.zeros(3)), topology.FiltrationConfig(3, 5.0)
        )
        for node in tree.nodes:
            self.assertTrue(np.all(np.isfinite(node.centroid)))

    def test_large_sweep_runtime(self):
        rng: np.random.Generator = np.random.default_rng(8)
        sources: np.ndarray = rng.normal(0, 5, size=(20, 2))
        samples: np.ndarray = rng.uniform(-15, 15, size=(10000, 2))
        energies: np.ndarray = field.energies(samples, sources, np.ones(20), 1.0)
        started: float = time.perf_counter()
        tree, levels_processed = topology.build_merge_tree(
            make_field(samples, energies), topology.FiltrationConfig(10000, 0.3, 1000)
        )
        elapsed: float = time.perf_counter() - started
        self.assertEqual(levels_processed, 1000)
        self.assertGreater(len(tree), 0)
        self.assertLess(elapsed, 10.0)


class ExtractTest(unittest.TestCase):
    def test_two_separated_peaks(self):
        sources = [
            local.WeightedCentroid([0.0, 0.0], 1.0),
            local.WeightedCentroid([10.0, 0.0], 1.0),
        ]
        potential_field: field.PotentialField = field.build_field(
            sources, field.FieldConfig(1000.0, 0.5, rng_seed=0)
        )
        cfg: topology.FiltrationConfig = topology.FiltrationConfig(2, 0.2)
        tree, _ = topology.build_merge_tree(potential_field, cfg)
        centroids: topology.GlobalCentroids = topology.extract_centroids(
            tree, potential_field, cfg
        )
        self.assertEqual(centroids.provenance, [topology.PERSISTENT_LEAF] * 2)
        x: np.ndarray = np.sort(centroids.centroids[:, 0])
        self.assertLess(abs(x[0] - 0.0), 0.5)
        self.assertLess(abs(x[1] - 10.0), 0.5)

    def test_single_peak_falls_back(self):
        sources = [local.WeightedCentroid([1.0, 1.0], 1.0)]
        potential_field: field.PotentialField = field.build_field(
            sources, field.FieldConfig(50.0, 1.0, rng_seed=0)
        )
        cfg: topology.FiltrationConfig = topology.FiltrationConfig(3, 1.0)
        tree, _ = topology.build_merge_tree(potential_field, cfg)
        centroids: topology.GlobalCentroids = topology.extract_centroids(
            tree, potential_field, cfg
        )
        self.assertEqual(len(centroids), 3)
        self.assertEqual(centroids.provenance[0], topology.PERSISTENT_LEAF)
        self.assertEqual(centroids.provenance[1:], [topology.TOP_ENERGY_PROBE] * 2)

    def test_few_peaks_take_leaves_then_fallbacks(self):
        sources = [
            local.WeightedCentroid([0.0, 0.0], 1.0),
            local.WeightedCentroid([10.0, 0.0], 1.0),
        ]
        potential_field: field.PotentialField = field.build_field(
            sources, field.FieldConfig(1000.0, 0.5, rng_seed=0)
        )
        cfg: topology.FiltrationConfig = topology.FiltrationConfig(5, 0.5)
        tree, _ = topology.build_merge_tree(potential_field, cfg)
        self.assertEqual(len(tree.leaves()), 2)
        centroids: topology.GlobalCentroids = topology.extract_centroids(
            tree, potential_field, cfg
        )
        self.assertEqual(len(centroids), 5)
        self.assertEqual(
            centroids.provenance,
            [topology.PERSISTENT_LEAF] * 2
            + [topology.ISOLATED_PATH]
            + [topology.TOP_ENERGY_PROBE] * 2,
        )
        x: np.ndarray = np.sort(centroids.centroids[:2, 0])
        self.assertLess(abs(x[0] - 0.0), 0.5)
        self.assertLess(abs(x[1] - 10.0), 0.5)

    def test_dead_branches_follow_alive_ones(self):
        samples: np.ndarray = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0], [6.0]])
        energies: np.ndarray = np.array([7.0, 2.0, 6.0, 1.0, 5.0, 4.0, 3.0])
        potential_field: field.PotentialField = make_field(samples, energies)
        cfg: topology.FiltrationConfig = topology.FiltrationConfig(7, 1.0)
        tree, _ = topology.build_merge_tree(potential_field, cfg)
        # peaks at 0, 2 and 4; the first two merge at energy 2, the rest at 1
        self.assertEqual(len(tree.leaves()), 3)
        centroids: topology.GlobalCentroids = topology.extract_centroids(
            tree, potential_field, cfg
        )
        self.assertEqual(
            centroids.provenance,
            [topology.PERSISTENT_LEAF] * 3
            + [topology.ISOLATED_PATH, topology.TOP_ENERGY_LEAF]
            + [topology.TOP_ENERGY_PROBE] * 2,
        )

    def test_coincident_probes(self):
        probes: np.ndarray = np.zeros((4, 2))
        potential_field: field.PotentialField = make_field(probes, np.ones(4))
        cfg: topology.FiltrationConfig = topology.FiltrationConfig(3, 1.0)
        tree, _ = topology.build_merge_tree(potential_field, cfg)
        centroids: topology.GlobalCentroids = topology.extract_centroids(
            tree, potential_field, cfg
        )
        np.testing.assert_array_equal(centroids.centroids, np.zeros((3, 2)))

    def test_too_many_clusters(self):
        potential_field: field.PotentialField = make_field(np.zeros((2, 1)), np.ones(2))
        cfg: topology.FiltrationConfig = topology.FiltrationConfig(3, 1.0)
        tree, _ = topology.build_merge_tree(potential_field, cfg)
        with self.assertRaises(ValueError):
            topology.extract_centroids(tree, potential_field, cfg)

    def test_cardinality(self):
        rng: np.random.Generator = np.random.default_rng(500)
        for instance in range(500):
            d: int = int(rng.integers(1, 4))
            if instance % 5 == 0:
                # single peak
                sources = [local.WeightedCentroid(rng.normal(size=d), 1.0)]
            elif instance % 5 == 1:
                # identical positions
                position: np.ndarray = rng.normal(size=d)
                sources = [local.WeightedCentroid(position, 0.5) for _ in range(4)]
            else:
                sources = [
                    local.WeightedCentroid(p, float(m))
                    for p, m in zip(
                        rng.normal(0, 5, size=(int(rng.integers(2, 30)), d)),
                        rng.uniform(0.05, 1.0, size=30),
                    )
                ]
            potential_field: field.PotentialField = field.build_field(
                sources,
                field.FieldConfig(
                    float(rng.uniform(1.0, 20.0)), float(10 ** rng.uniform(-3, 2)), rng_seed=instance
                ),
            )
            n_clusters: int = int(rng.integers(1, min(potential_field.n_probes, 12) + 1))
            cfg: topology.FiltrationConfig = topology.FiltrationConfig(
                n_clusters,
                float(10 ** rng.uniform(-2, 1)),
                int(rng.integers(1, 100)),
                "superlevel" if instance % 3 else "sublevel",
            )
            tree, _ = topology.build_merge_tree(potential_field, cfg)
            centroids: topology.GlobalCentroids = topology.extract_centroids(
                tree, potential_field, cfg
            )
            self.assertEqual(centroids.centroids.shape, (n_clusters, d))
            self.assertEqual(sum(centroids.provenance_counts().values()), n_clusters)


class RadiusTest(unittest.TestCase):
    def test_collinear(self):
        sources = [local.WeightedCentroid([float(i)], 1.0) for i in range(101)]
        self.assertEqual(topology.radius_heuristic(sources), 1.0)

    def test_duplicates_ignored(self):
        sources = [local.WeightedCentroid([0.0], 1.0)] * 3 + [
            local.WeightedCentroid([2.0], 1.0)
        ]
        self.assertEqual(topology.radius_heuristic(sources), 2.0)

    def test_fallback(self):
        sources = [local.WeightedCentroid([1.0, 1.0], 1.0)] * 2
        self.assertAlmostEqual(
            topology.radius_heuristic(sources), 1e-3 * np.sqrt(2) * 2e-6, places=15
        )


if __name__ == "__main__":
    unittest.main()
