"""
Client phase: k-means on the privatized shard and the compactness-aware mass
of every local centroid. The weighted centroids are the only thing a client
uploads.
"""

from __future__ import annotations

import logging
from typing import Any, List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

import dataset
import privacy
import storable

logger = logging.getLogger(__name__)

MAX_SIGMA_PAIRS: int = 100_000
SIGMA2_RELATIVE_FLOOR: float = 1e-9
SIGMA2_ABSOLUTE_FLOOR: float = 1e-12
MASS_FORMULAS: Tuple[str, ...] = ("exp", "exp_mean", "reciprocal")


class KMeansConfig(storable.Storable):
    k: int
    max_iters: int
    tol: float
    init_seed: int

    def __init__(
        self, k: int, max_iters: int = 100, tol: float = 1e-6, init_seed: int = 0
    ) -> None:
        super().__init__()
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {max_iters}")
        if tol < 0:
            raise ValueError(f"tol must be non-negative, got {tol}")
        self.k = int(k)
        self.max_iters = int(max_iters)
        self.tol = float(tol)
        self.init_seed = int(init_seed)

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["k"] = self.k
        dict_representation["max_iters"] = self.max_iters
        dict_representation["tol"] = self.tol
        dict_representation["init_seed"] = self.init_seed
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls(
            dict_representation["k"],
            dict_representation["max_iters"],
            dict_representation["tol"],
            dict_representation["init_seed"],
        )


class KMeansFit:
    """
    Result of a Lloyd run. inertia_history holds the total inertia after every
    update step.
    """

    centroids: np.ndarray
    assignment: np.ndarray
    inertia_history: List[float]

    def __init__(
        self, centroids: np.ndarray, assignment: np.ndarray, inertia_history: List[float]
    ) -> None:
        self.centroids = centroids
        self.assignment = assignment
        self.inertia_history = inertia_history

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]

    @property
    def n_iter(self) -> int:
        return len(self.inertia_history)


def fit_kmeans(points: Any, cfg: KMeansConfig) -> KMeansFit:
    """
    Lloyd iterations from a k-means++ start. Points are processed in
    lexicographic order so the result does not depend on input order. Clusters
    that run empty take over the point farthest from its own centroid.
    """
    values: np.ndarray = np.asarray(points, dtype=float)
    n: int = values.shape[0]
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds the number of points ({n})")

    order: np.ndarray = np.lexsort(values.T[::-1])
    ordered: np.ndarray = values[order]
    rng: np.random.Generator = np.random.default_rng(cfg.init_seed)
    centroids: np.ndarray = _kmeans_plusplus(ordered, cfg.k, rng)

    labels: np.ndarray = np.zeros(n, dtype=int)
    history: List[float] = []
    for iteration in range(cfg.max_iters):
        distances: np.ndarray = cdist(ordered, centroids, "sqeuclidean")
        labels = np.argmin(distances, axis=1)
        labels = _repair_empty(labels, distances, cfg.k)
        new_centroids: np.ndarray = _cluster_means(ordered, labels, cfg.k)
        history.append(float(np.sum((ordered - new_centroids[labels]) ** 2)))
        shift: float = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < cfg.tol or shift == 0.0:
            break
    logger.debug("k-means k=%d finished after %d iterations", cfg.k, len(history))

    assignment: np.ndarray = np.empty(n, dtype=int)
    assignment[order] = labels
    return KMeansFit(centroids, assignment, history)


def kmeans(points: Any, cfg: KMeansConfig) -> Tuple[np.ndarray, np.ndarray]:
    fit: KMeansFit = fit_kmeans(points, cfg)
    return fit.centroids, fit.assignment


def _kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n: int = points.shape[0]
    chosen: List[int] = [int(rng.integers(n))]
    closest: np.ndarray = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total: float = float(closest.sum())
        if total > 0:
            index: int = int(rng.choice(n, p=closest / total))
        else:
            index = int(rng.integers(n))
        chosen.append(index)
        closest = np.minimum(closest, np.sum((points - points[index]) ** 2, axis=1))
    return points[chosen].copy()


def _repair_empty(labels: np.ndarray, distances: np.ndarray, k: int) -> np.ndarray:
    counts: np.ndarray = np.bincount(labels, minlength=k)
    empty: np.ndarray = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return labels

    labels = labels.copy()
    own: np.ndarray = distances[np.arange(labels.size), labels].copy()
    for cluster in empty:
        # never take the last member of a cluster
        movable: np.ndarray = counts[labels] >= 2
        candidate: int = int(np.argmax(np.where(movable, own, -1.0)))
        counts[labels[candidate]] -= 1
        labels[candidate] = cluster
        counts[cluster] = 1
        own[candidate] = -1.0
    return labels


def _cluster_means(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    sums: np.ndarray = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    counts: np.ndarray = np.bincount(labels, minlength=k)
    return sums / counts[:, None]


def cluster_mass(
    cluster_points: Any, centroid: Any, sigma2: float, mass_formula: str = "exp"
) -> float:
    """
    Compactness score of one local cluster, with I the summed squared distance
    to the centroid:
        exp         exp(-I / (2 sigma2))
        exp_mean    exp(-(I / |C|) / (2 sigma2))
        reciprocal  1 / (I + 1)
    """
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    members: np.ndarray = np.atleast_2d(np.asarray(cluster_points, dtype=float))
    if members.shape[0] == 0:
        raise ValueError("Cannot compute the mass of an empty cluster")

    inertia: float = float(np.sum((members - np.asarray(centroid, dtype=float)) ** 2))
    if mass_formula == "exp":
        mass: float = float(np.exp(-inertia / (2.0 * sigma2)))
    elif mass_formula == "exp_mean":
        mass = float(np.exp(-(inertia / members.shape[0]) / (2.0 * sigma2)))
    elif mass_formula == "reciprocal":
        mass = 1.0 / (inertia + 1.0)
    else:
        raise ValueError(f'Mass formula "{mass_formula}" is not available')
    # exp underflow must not produce a massless centroid
    return max(mass, float(np.finfo(float).tiny))


def client_sigma2(
    shard_points: Any,
    rng: Optional[np.random.Generator] = None,
    max_pairs: int = MAX_SIGMA_PAIRS,
) -> float:
    """
    Population variance of the squared pairwise distances of a shard. Shards
    with more than max_pairs pairs are estimated from max_pairs random pairs.
    The result is floored at 1e-9 * (bounding-box diagonal)^2.
    """
    values: np.ndarray = np.atleast_2d(np.asarray(shard_points, dtype=float))
    n: int = values.shape[0]
    diagonal2: float = float(np.sum((values.max(axis=0) - values.min(axis=0)) ** 2))
    floor: float = max(SIGMA2_RELATIVE_FLOOR * diagonal2, SIGMA2_ABSOLUTE_FLOOR)

    variance: float = 0.0
    if n >= 2:
        if n * (n - 1) // 2 <= max_pairs:
            squared: np.ndarray = pdist(values, "sqeuclidean")
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            first: np.ndarray = rng.integers(n, size=max_pairs)
            second: np.ndarray = rng.integers(n - 1, size=max_pairs)
            second = second + (second >= first)
            squared = np.sum((values[first] - values[second]) ** 2, axis=1)
        variance = float(np.var(squared))

    if variance < floor:
        logger.warning("sigma2 %.3g below floor, using %.3g", variance, floor)
        return floor
    return variance


class WeightedCentroid(storable.Storable):
    position: np.ndarray
    mass: float
    source_client: int
    member_count: int

    def __init__(
        self, position: Any, mass: float, source_client: int = 0, member_count: int = 1
    ) -> None:
        super().__init__()
        if not 0 < mass <= 1:
            raise ValueError(f"Mass must lie in (0, 1], got {mass}")
        self.position = np.asarray(position, dtype=float)
        self.mass = float(mass)
        self.source_client = int(source_client)
        self.member_count = int(member_count)

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["position"] = self.denumpyify(self.position)
        dict_representation["mass"] = self.mass
        dict_representation["member_count"] = self.member_count
        return dict_representation


class ClientUpload(storable.Storable):
    """
    The single message a client sends:
    {client_id, centroids: [{position, mass, member_count}]}.
    """

    client_id: int
    centroids: List[WeightedCentroid]

    def __init__(self, client_id: int, centroids: List[WeightedCentroid]) -> None:
        super().__init__()
        self.client_id = int(client_id)
        self.centroids = centroids

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["client_id"] = self.client_id
        dict_representation["centroids"] = [
            c.get_dict_representation(by_id=by_id) for c in self.centroids
        ]
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        client_id: int = dict_representation["client_id"]
        return cls(
            client_id,
            [
                WeightedCentroid(c["position"], c["mass"], client_id, c["member_count"])
                for c in dict_representation["centroids"]
            ],
        )


def client_phase(
    shard: dataset.ClientShard,
    privacy_params: privacy.PrivacyParams,
    cfg: KMeansConfig,
    sigma_override: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    mass_formula: str = "exp",
) -> List[WeightedCentroid]:
    """
    Privatize the shard, cluster it into cfg.k local centroids and weigh each
    centroid by its mass. sigma_override replaces the shard-derived sigma
    (it is a standard deviation, squared before use).
    """
    if cfg.k > shard.n:
        raise ValueError(f"Client {shard.client_id}: k={cfg.k} exceeds shard size {shard.n}")
    if rng is None:
        rng = np.random.default_rng(cfg.init_seed)

    private: dataset.ClientShard = privacy.privatize(shard, privacy_params, rng)
    if sigma_override is not None:
        sigma2: float = float(sigma_override) ** 2
    else:
        sigma2 = client_sigma2(private.points, rng)

    centroids, assignment = kmeans(private.points, cfg)
    weighted: List[WeightedCentroid] = []
    for cluster, centroid in enumerate(centroids):
        members: np.ndarray = private.points[assignment == cluster]
        weighted.append(
            WeightedCentroid(
                centroid,
                cluster_mass(members, centroid, sigma2, mass_formula),
                shard.client_id,
                members.shape[0],
            )
        )
    return weighted
