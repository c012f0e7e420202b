"""
Persistence analysis of a potential field.

Probes enter the filtration in energy order (highest first for superlevel
sets). Components of the radius graph over the active probes are tracked in a
merge tree: every new component is a leaf, every merge creates a parent and
ends the life of its children. The leaves, ranked by persistence, are the
candidates for the global centroids.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

import field
import local
import storable
import union_find

logger = logging.getLogger(__name__)

DIRECTIONS: Tuple[str, ...] = ("superlevel", "sublevel")
DEDUPLICATION_TOLERANCE: float = 1e-9
RADIUS_PERCENTILE: float = 1.0
RADIUS_FALLBACK_FRACTION: float = 1e-3

PERSISTENT_LEAF: str = "persistent_leaf"
ISOLATED_PATH: str = "isolated_path"
TOP_ENERGY_LEAF: str = "top_energy_leaf"
TOP_ENERGY_PROBE: str = "top_energy_probe"
PROVENANCE_TAGS: Tuple[str, ...] = (
    PERSISTENT_LEAF,
    ISOLATED_PATH,
    TOP_ENERGY_LEAF,
    TOP_ENERGY_PROBE,
)


class FiltrationConfig(storable.Storable):
    n_clusters: int
    radius: float
    max_levels: int
    direction: str

    def __init__(
        self,
        n_clusters: int,
        radius: float,
        max_levels: int = 512,
        direction: str = "superlevel",
    ) -> None:
        super().__init__()
        if n_clusters < 1:
            raise ValueError(f"n_clusters must be >= 1, got {n_clusters}")
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        if max_levels < 1:
            raise ValueError(f"max_levels must be >= 1, got {max_levels}")
        if direction not in DIRECTIONS:
            raise ValueError(f'Direction "{direction}" is not one of {DIRECTIONS}')
        self.n_clusters = int(n_clusters)
        self.radius = float(radius)
        self.max_levels = int(max_levels)
        self.direction = direction

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["n_clusters"] = self.n_clusters
        dict_representation["radius"] = self.radius
        dict_representation["max_levels"] = self.max_levels
        dict_representation["direction"] = self.direction
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls(
            dict_representation["n_clusters"],
            dict_representation["radius"],
            dict_representation["max_levels"],
            dict_representation["direction"],
        )


def _sweep_keys(values: np.ndarray, direction: str) -> np.ndarray:
    """
    Map energies (or thresholds) to keys so that a probe is active at a
    threshold exactly when its key is >= the threshold's key.
    """
    return values if direction == "superlevel" else -values


def threshold_sequence(
    energies: Any, level_count: int, direction: str = "superlevel"
) -> np.ndarray:
    """
    Distinct energy values, or level_count evenly spaced quantiles of the
    energies when there are more distinct values than that. Ordered from the
    maximum down for superlevel sets, from the minimum up for sublevel sets.
    """
    values: np.ndarray = np.asarray(energies, dtype=float)
    if values.size == 0:
        raise ValueError("Cannot build thresholds from an empty energy list")
    if level_count < 1:
        raise ValueError(f"level_count must be >= 1, got {level_count}")
    if direction not in DIRECTIONS:
        raise ValueError(f'Direction "{direction}" is not one of {DIRECTIONS}')

    levels: np.ndarray = np.unique(values)
    if levels.size > level_count:
        levels = np.unique(np.quantile(values, np.linspace(0.0, 1.0, level_count)))
    return levels[::-1].copy() if direction == "superlevel" else levels


def connected_components(
    probe_indices: Sequence[int], probe_positions: Any, radius: float
) -> List[List[int]]:
    """
    Partition probe_indices into components of the graph linking probes at
    Euclidean distance <= radius. probe_positions is indexed by probe index.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    indices: np.ndarray = np.asarray(probe_indices, dtype=int)
    forest: union_find.UnionFind = union_find.UnionFind(int(i) for i in indices)
    if indices.size > 1:
        positions: np.ndarray = np.asarray(probe_positions, dtype=float)[indices]
        for a, b in cKDTree(positions).query_pairs(radius):
            forest.union(int(indices[a]), int(indices[b]))
    return forest.components()


def weighted_centroid(
    members: Sequence[int], probes: np.ndarray, energies: np.ndarray
) -> np.ndarray:
    """
    Energy-weighted mean of the member probes, the plain mean when the
    weights sum to zero.
    """
    positions: np.ndarray = probes[list(members)]
    weights: np.ndarray = energies[list(members)]
    total: float = float(np.sum(weights))
    if total == 0:
        return positions.mean(axis=0)
    return np.sum(positions * weights[:, None], axis=0) / total


class TreeNode(storable.Storable):
    node_id: int
    member_probe_indices: List[int]
    birth_threshold: float
    death_threshold: Optional[float]
    birth_level: int
    death_level: Optional[int]
    centroid: np.ndarray
    total_energy: float
    children: List[int]
    is_leaf: bool

    def __init__(
        self,
        node_id: int,
        member_probe_indices: List[int],
        birth_threshold: float,
        birth_level: int,
        centroid: Any,
        children: Optional[List[int]] = None,
        death_threshold: Optional[float] = None,
        death_level: Optional[int] = None,
        total_energy: float = 0.0,
    ) -> None:
        super().__init__()
        self.node_id = node_id
        self.member_probe_indices = member_probe_indices
        self.birth_threshold = birth_threshold
        self.birth_level = birth_level
        self.centroid = np.asarray(centroid, dtype=float)
        self.children = children if children is not None else []
        self.is_leaf = not self.children
        self.death_threshold = death_threshold
        self.death_level = death_level
        self.total_energy = total_energy

    @property
    def alive(self) -> bool:
        return self.death_level is None

    def alive_at(self, level: int) -> bool:
        return self.birth_level <= level and (
            self.death_level is None or self.death_level > level
        )

    def persistence(self, end_threshold: float) -> float:
        """
        |death - birth|; undying nodes persist to end_threshold.
        """
        death: float = end_threshold if self.death_threshold is None else self.death_threshold
        return abs(death - self.birth_threshold)

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["node_id"] = self.node_id
        dict_representation["member_probe_indices"] = self.denumpyify(self.member_probe_indices)
        dict_representation["birth_threshold"] = self.birth_threshold
        dict_representation["death_threshold"] = self.death_threshold
        dict_representation["birth_level"] = self.birth_level
        dict_representation["death_level"] = self.death_level
        dict_representation["centroid"] = self.denumpyify(self.centroid)
        dict_representation["total_energy"] = self.total_energy
        dict_representation["children"] = self.children
        dict_representation["is_leaf"] = self.is_leaf
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls(
            dict_representation["node_id"],
            dict_representation["member_probe_indices"],
            dict_representation["birth_threshold"],
            dict_representation["birth_level"],
            dict_representation["centroid"],
            dict_representation["children"],
            dict_representation["death_threshold"],
            dict_representation["death_level"],
            dict_representation["total_energy"],
        )


class MergeTree(storable.Storable):
    nodes: List[TreeNode]
    thresholds: np.ndarray
    levels_processed: int
    direction: str
    radius: float

    def __init__(
        self,
        nodes: List[TreeNode],
        thresholds: Any,
        levels_processed: int,
        direction: str,
        radius: float,
    ) -> None:
        super().__init__()
        self.nodes = nodes
        self.thresholds = np.asarray(thresholds, dtype=float)
        self.levels_processed = levels_processed
        self.direction = direction
        self.radius = radius

    def __iter__(self):
        return iter(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def end_threshold(self) -> float:
        return float(self.thresholds[self.levels_processed - 1])

    def leaves(self) -> List[TreeNode]:
        return [node for node in self.nodes if node.is_leaf]

    def alive_nodes(self) -> List[TreeNode]:
        return [node for node in self.nodes if node.alive]

    def components_at(self, level: int, energies: Any) -> List[List[int]]:
        """
        Components of the active set at a processed level, read off the tree.
        """
        if not 0 <= level < self.levels_processed:
            raise ValueError(f"Level {level} was not processed")
        keys: np.ndarray = _sweep_keys(np.asarray(energies, dtype=float), self.direction)
        level_key: float = float(_sweep_keys(self.thresholds[level : level + 1], self.direction)[0])
        components: List[List[int]] = []
        for node in self.nodes:
            if node.alive_at(level):
                components.append(
                    sorted(i for i in node.member_probe_indices if keys[i] >= level_key)
                )
        return sorted(components, key=lambda members: members[0])

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["thresholds"] = self.denumpyify(self.thresholds)
        dict_representation["levels_processed"] = self.levels_processed
        dict_representation["direction"] = self.direction
        dict_representation["radius"] = self.radius
        dict_representation["nodes"] = [
            node.get_dict_representation(by_id=by_id) for node in self.nodes
        ]
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls(
            [TreeNode.from_dict(node) for node in dict_representation["nodes"]],
            dict_representation["thresholds"],
            dict_representation["levels_processed"],
            dict_representation["direction"],
            dict_representation["radius"],
        )


def build_merge_tree(
    potential_field: field.PotentialField, cfg: FiltrationConfig
) -> Tuple[MergeTree, int]:
    """
    Sweep the thresholds, adding the probes that become active at each level
    and updating the components incrementally with a union-find. The sweep
    ends early once n_clusters components are alive.
    """
    probes: np.ndarray = potential_field.probes
    energies: np.ndarray = potential_field.energies
    probe_count: int = potential_field.n_probes
    if probe_count == 0:
        raise ValueError("Cannot build a merge tree over an empty field")

    keys: np.ndarray = _sweep_keys(energies, cfg.direction)
    thresholds: np.ndarray = threshold_sequence(energies, cfg.max_levels, cfg.direction)
    threshold_keys: np.ndarray = _sweep_keys(thresholds, cfg.direction)
    # descending key, lower index first on ties
    order: np.ndarray = np.lexsort((np.arange(probe_count), -keys))

    kdtree: cKDTree = cKDTree(probes)
    forest: union_find.UnionFind = union_find.UnionFind()
    activation_level: np.ndarray = np.full(probe_count, -1, dtype=int)
    nodes: List[TreeNode] = []
    root_node: Dict[int, int] = {}
    node_root: Dict[int, int] = {}

    def register(node: TreeNode, root: int) -> None:
        root_node[root] = node.node_id
        node_root[node.node_id] = root

    def unregister(node_id: int) -> None:
        del root_node[node_root.pop(node_id)]

    cursor: int = 0
    levels_processed: int = 0
    for level, (threshold, level_key) in enumerate(zip(thresholds, threshold_keys)):
        levels_processed = level + 1
        start: int = cursor
        while cursor < probe_count and keys[order[cursor]] >= level_key:
            cursor += 1
        entering: List[int] = [int(i) for i in order[start:cursor]]
        if not entering:
            continue

        for i in entering:
            forest.add(i)
            activation_level[i] = level

        # old components are looked up before any union of this level
        edges: List[Tuple[int, int]] = []
        touched: List[Tuple[int, int]] = []
        for i, neighbors in zip(entering, kdtree.query_ball_point(probes[entering], cfg.radius)):
            for j in neighbors:
                if j == i or activation_level[j] < 0:
                    continue
                if activation_level[j] < level:
                    touched.append((i, root_node[forest.find(j)]))
                elif j > i:
                    edges.append((i, j))
        for i, node_id in touched:
            edges.append((i, node_root[node_id]))
        for a, b in edges:
            forest.union(a, b)

        groups: Dict[int, List[int]] = {}
        for i in entering:
            groups.setdefault(forest.find(i), []).append(i)
        group_nodes: Dict[int, Set[int]] = {}
        for i, node_id in touched:
            group_nodes.setdefault(forest.find(i), set()).add(node_id)

        for root in sorted(groups, key=lambda r: min(groups[r])):
            new_members: List[int] = sorted(groups[root])
            old: List[int] = sorted(group_nodes.get(root, ()))
            if len(old) == 1:
                node: TreeNode = nodes[old[0]]
                node.member_probe_indices.extend(new_members)
                unregister(node.node_id)
                register(node, root)
                continue

            members: List[int] = []
            for child in old:
                nodes[child].death_threshold = float(threshold)
                nodes[child].death_level = level
                members.extend(nodes[child].member_probe_indices)
                unregister(child)
            members.extend(new_members)
            node = TreeNode(
                len(nodes),
                members,
                float(threshold),
                level,
                weighted_centroid(members, probes, energies),
                children=old,
            )
            nodes.append(node)
            register(node, root)

        if len(root_node) >= cfg.n_clusters:
            break

    for node in nodes:
        node.member_probe_indices = sorted(node.member_probe_indices)
        node.total_energy = float(np.sum(energies[node.member_probe_indices]))
    logger.debug(
        "Merge tree: %d nodes, %d leaves, %d of %d levels processed",
        len(nodes),
        sum(node.is_leaf for node in nodes),
        levels_processed,
        thresholds.size,
    )
    tree: MergeTree = MergeTree(
        nodes, thresholds, levels_processed, cfg.direction, cfg.radius
    )
    return tree, levels_processed


class GlobalCentroids(storable.Storable):
    centroids: np.ndarray
    provenance: List[str]

    def __init__(self, centroids: Any, provenance: List[str]) -> None:
        super().__init__()
        self.centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
        if len(provenance) != self.centroids.shape[0]:
            raise ValueError(
                f"{len(provenance)} provenance tags for {self.centroids.shape[0]} centroids"
            )
        self.provenance = provenance

    def __len__(self) -> int:
        return self.centroids.shape[0]

    def provenance_counts(self) -> Dict[str, int]:
        return {tag: self.provenance.count(tag) for tag in PROVENANCE_TAGS}

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["centroids"] = self.denumpyify(self.centroids)
        dict_representation["provenance"] = self.provenance
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls(dict_representation["centroids"], dict_representation["provenance"])


def extract_centroids(
    tree: MergeTree, potential_field: field.PotentialField, cfg: FiltrationConfig
) -> GlobalCentroids:
    """
    Exactly cfg.n_clusters centroids, taken in tiers:

    - every leaf, by persistence (undying leaves first)
    - merged nodes still alive at the end of the sweep, by persistence
    - merged nodes that merged again, by total energy
    - the highest-energy probes

    Positions within 1e-9 of an accepted centroid are skipped.
    """
    n_clusters: int = cfg.n_clusters
    probe_count: int = potential_field.n_probes
    if n_clusters > probe_count:
        raise ValueError(f"n_clusters={n_clusters} exceeds the probe count ({probe_count})")

    end_threshold: float = tree.end_threshold

    def by_persistence(node: TreeNode) -> Tuple[bool, float, int]:
        return (not node.alive, -node.persistence(end_threshold), node.member_probe_indices[0])

    def by_energy(node: TreeNode) -> Tuple[float, int]:
        return (-node.total_energy, node.member_probe_indices[0])

    branches: List[TreeNode] = [node for node in tree.nodes if not node.is_leaf]
    candidates: List[Tuple[np.ndarray, str]] = []
    candidates.extend(
        (node.centroid, PERSISTENT_LEAF) for node in sorted(tree.leaves(), key=by_persistence)
    )
    candidates.extend(
        (node.centroid, ISOLATED_PATH)
        for node in sorted((node for node in branches if node.alive), key=by_persistence)
    )
    candidates.extend(
        (node.centroid, TOP_ENERGY_LEAF)
        for node in sorted((node for node in branches if not node.alive), key=by_energy)
    )

    probe_order: np.ndarray = np.lexsort(
        (np.arange(probe_count), -potential_field.energies)
    )
    candidates.extend(
        (potential_field.probes[i], TOP_ENERGY_PROBE) for i in probe_order
    )

    chosen: List[np.ndarray] = []
    provenance: List[str] = []
    for position, tag in candidates:
        if len(chosen) == n_clusters:
            break
        if any(
            np.linalg.norm(position - other) <= DEDUPLICATION_TOLERANCE for other in chosen
        ):
            continue
        chosen.append(position)
        provenance.append(tag)

    if len(chosen) < n_clusters:
        # only reachable when probes themselves coincide
        logger.warning(
            "Only %d distinct positions for %d centroids, repeating probes",
            len(chosen),
            n_clusters,
        )
        for i in probe_order[: n_clusters - len(chosen)]:
            chosen.append(potential_field.probes[i])
            provenance.append(TOP_ENERGY_PROBE)

    return GlobalCentroids(np.vstack(chosen), provenance)


def radius_heuristic(sources: Sequence[local.WeightedCentroid]) -> float:
    """
    Nearest-rank 1st percentile of the non-zero pairwise distances between
    source positions. Falls back to 1e-3 of the bounding-box diagonal when
    fewer than two distinct positions exist.
    """
    positions, _ = field.source_arrays(sources)
    distances: np.ndarray = pdist(positions) if positions.shape[0] > 1 else np.empty(0)
    distances = np.sort(distances[distances > 0])
    if distances.size == 0:
        bounds: np.ndarray = field.compute_bounds(sources)
        fallback: float = RADIUS_FALLBACK_FRACTION * float(
            np.linalg.norm(bounds[:, 1] - bounds[:, 0])
        )
        logger.warning("No distinct source positions, radius falls back to %.3g", fallback)
        return fallback
    rank: int = max(1, math.ceil(RADIUS_PERCENTILE / 100.0 * distances.size))
    return float(distances[rank - 1])
