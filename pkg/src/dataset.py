"""
Datasets, client shards and the cluster-based non-IID partitioning of a
dataset across simulated clients.
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

import local
import storable

logger = logging.getLogger(__name__)

PARTITION_KMEANS_ITERS: int = 100
MAX_CLIENT_RETRIES: int = 10
CENTER_PLACEMENT_TRIES: int = 1000


class DatasetFormatError(ValueError):
    pass


class PartitionError(RuntimeError):
    pass


class Dataset(storable.Storable):
    """
    Points in R^d with optional integer ground-truth labels. Blob datasets
    also keep their generating centers.
    """

    points: np.ndarray
    labels: Optional[np.ndarray]
    centers: Optional[np.ndarray]

    def __init__(
        self,
        points: Any,
        labels: Optional[Any] = None,
        centers: Optional[Any] = None,
    ) -> None:
        super().__init__()
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] < 1:
            raise ValueError(
                f"Points must form an (n, d) array with d >= 1, got shape {self.points.shape}"
            )
        if not np.all(np.isfinite(self.points)):
            raise ValueError("Points must be finite")

        self.labels = None
        if labels is not None:
            self.labels = np.asarray(labels, dtype=int)
            if self.labels.shape != (self.n,):
                raise ValueError(
                    f"Label count {self.labels.size} does not match point count {self.n}"
                )
            if self.labels.size and self.labels.min() < 0:
                raise ValueError("Labels must be non-negative class ids")

        self.centers = None if centers is None else np.asarray(centers, dtype=float)

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    @property
    def n_classes(self) -> int:
        if self.labels is None or self.labels.size == 0:
            return 0
        return int(self.labels.max()) + 1

    def label_means(self) -> np.ndarray:
        """
        Per-class mean of the points, ordered by class id. Classes without
        points are skipped.
        """
        if self.labels is None:
            raise ValueError("Dataset has no labels")
        means: List[np.ndarray] = []
        for label in range(self.n_classes):
            mask: np.ndarray = self.labels == label
            if np.any(mask):
                means.append(self.points[mask].mean(axis=0))
        return np.array(means)

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["points"] = self.denumpyify(self.points)
        dict_representation["labels"] = self.denumpyify(self.labels)
        dict_representation["centers"] = self.denumpyify(self.centers)
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls(
            dict_representation["points"],
            dict_representation.get("labels"),
            dict_representation.get("centers"),
        )


class ClientShard(storable.Storable):
    """
    The local dataset of one simulated client. Labels are carried for
    evaluation only; indices point back into the source dataset.
    """

    client_id: int
    points: np.ndarray
    labels: Optional[np.ndarray]
    indices: np.ndarray

    def __init__(
        self,
        client_id: int,
        points: Any,
        labels: Optional[Any] = None,
        indices: Optional[Any] = None,
    ) -> None:
        super().__init__()
        self.client_id = int(client_id)
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] == 0:
            raise ValueError(f"Client {client_id} shard must contain at least one point")
        self.labels = None if labels is None else np.asarray(labels, dtype=int)
        if indices is None:
            self.indices = np.arange(self.points.shape[0])
        else:
            self.indices = np.asarray(indices, dtype=int)

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    def with_points(self, points: np.ndarray):
        return ClientShard(self.client_id, points, self.labels, self.indices)

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["client_id"] = self.client_id
        dict_representation["point_indices"] = self.denumpyify(self.indices)
        if not by_id:
            dict_representation["points"] = self.denumpyify(self.points)
            dict_representation["labels"] = self.denumpyify(self.labels)
        return dict_representation


class PartitionSpec(storable.Storable):
    num_clients: int
    n_clusters: int
    rng_seed: int

    def __init__(self, num_clients: int, n_clusters: int, rng_seed: int = 0) -> None:
        super().__init__()
        if num_clients < 1:
            raise ValueError(f"num_clients must be >= 1, got {num_clients}")
        if n_clusters < 1:
            raise ValueError(f"n_clusters must be >= 1, got {n_clusters}")
        self.num_clients = int(num_clients)
        self.n_clusters = int(n_clusters)
        self.rng_seed = int(rng_seed)

    def validate_for(self, data: Dataset):
        if self.num_clients > data.n:
            raise ValueError(
                f"Cannot split {data.n} points across {self.num_clients} clients"
            )

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["num_clients"] = self.num_clients
        dict_representation["n_clusters"] = self.n_clusters
        dict_representation["rng_seed"] = self.rng_seed
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls(
            dict_representation["num_clients"],
            dict_representation["n_clusters"],
            dict_representation["rng_seed"],
        )


def generate_blobs(
    n_clusters: int,
    points_per_cluster: int,
    d: int,
    spread: float,
    separation: float,
    seed: int,
) -> Dataset:
    """
    Isotropic Gaussian clusters around centers that are pairwise at least
    `separation` apart.
    """
    if d < 1:
        raise ValueError(f"Dimension must be >= 1, got {d}")
    if n_clusters < 1:
        raise ValueError(f"n_clusters must be >= 1, got {n_clusters}")
    if points_per_cluster < 1:
        raise ValueError(f"points_per_cluster must be >= 1, got {points_per_cluster}")
    if spread <= 0 or separation <= 0:
        raise ValueError(
            f"spread and separation must be positive, got {spread} and {separation}"
        )

    rng: np.random.Generator = np.random.default_rng(seed)
    centers: np.ndarray = _place_centers(n_clusters, d, separation, rng)
    points: np.ndarray = np.concatenate(
        [rng.normal(center, spread, size=(points_per_cluster, d)) for center in centers]
    )
    labels: np.ndarray = np.repeat(np.arange(n_clusters), points_per_cluster)
    return Dataset(points, labels, centers)


def _place_centers(
    n_clusters: int, d: int, separation: float, rng: np.random.Generator
) -> np.ndarray:
    side: float = 1.5 * separation * max(1.0, n_clusters ** (1.0 / d))
    centers: List[np.ndarray] = []
    for _ in range(CENTER_PLACEMENT_TRIES):
        candidate: np.ndarray = rng.uniform(-side / 2, side / 2, size=d)
        if all(np.linalg.norm(candidate - c) >= separation for c in centers):
            centers.append(candidate)
            if len(centers) == n_clusters:
                return np.array(centers)

    logger.warning(
        "Could not place %d centers by rejection, falling back to a line", n_clusters
    )
    line: np.ndarray = np.zeros((n_clusters, d))
    line[:, 0] = (np.arange(n_clusters) - (n_clusters - 1) / 2) * separation
    return line


def _is_number(value: Any) -> bool:
    try:
        float(value)
    except (TypeError, ValueError):
        return False
    return True


def load_csv(path: str, label_column: Optional[Union[int, str]] = None) -> Dataset:
    """
    Load a comma-separated numeric table. A header is assumed when the first
    row is not entirely numeric. label_column is either a header name or a
    0-based column position; label values are mapped onto 0..K-1 in sorted
    order.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"CSV file {path} does not exist")

    try:
        frame: pd.DataFrame = pd.read_csv(
            path, header=None, dtype=str, skipinitialspace=True, keep_default_na=False
        )
    except pd.errors.EmptyDataError:
        raise DatasetFormatError(f"{path}: file is empty")
    except pd.errors.ParserError as ex:
        raise DatasetFormatError(f"{path}: ragged rows ({ex})")

    header: Optional[List[str]] = None
    if not all(_is_number(value) for value in frame.iloc[0]):
        header = [str(value).strip() for value in frame.iloc[0]]
        frame = frame.iloc[1:].reset_index(drop=True)
    if frame.empty:
        raise DatasetFormatError(f"{path}: no data rows")

    label_index: Optional[int] = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if header is None or label_column not in header:
                raise ValueError(f"Label column {label_column!r} not found in {path}")
            label_index = header.index(label_column)
        else:
            label_index = int(label_column)
            if not 0 <= label_index < frame.shape[1]:
                raise ValueError(f"Label column {label_index} out of range")

    values: np.ndarray = np.empty(frame.shape, dtype=float)
    raw: np.ndarray = frame.to_numpy(dtype=object)
    for row_index in range(raw.shape[0]):
        for column_index in range(raw.shape[1]):
            cell: Any = raw[row_index, column_index]
            if cell is None or (isinstance(cell, float) and np.isnan(cell)) or cell == "":
                raise DatasetFormatError(
                    f"{path}: row {row_index} is ragged (column {column_index} missing)"
                )
            if not _is_number(cell):
                raise DatasetFormatError(
                    f"{path}: row {row_index}, column {column_index}: non-numeric value {cell!r}"
                )
            values[row_index, column_index] = float(cell)

    labels: Optional[np.ndarray] = None
    if label_index is not None:
        raw_labels: np.ndarray = values[:, label_index]
        if not np.all(raw_labels == np.round(raw_labels)):
            raise DatasetFormatError(f"{path}: label column holds non-integer values")
        _, labels = np.unique(raw_labels, return_inverse=True)
        values = np.delete(values, label_index, axis=1)
    if values.shape[1] == 0:
        raise DatasetFormatError(f"{path}: no feature columns")

    logger.info("Loaded %d points with %d features from %s", *values.shape, path)
    return Dataset(values, labels)


def normalize(data: Dataset, method: str = "zscore") -> Dataset:
    """
    Per-dimension scaling: "zscore", "minmax" or "none". Constant dimensions
    are left unscaled.
    """
    if method == "none":
        return data
    if method == "zscore":
        offset: np.ndarray = data.points.mean(axis=0)
        scale: np.ndarray = data.points.std(axis=0)
    elif method == "minmax":
        offset = data.points.min(axis=0)
        scale = data.points.max(axis=0) - offset
    else:
        raise ValueError(f'Normalization "{method}" is not available')
    scale = np.where(scale > 0, scale, 1.0)
    centers: Optional[np.ndarray] = None
    if data.centers is not None:
        centers = (data.centers - offset) / scale
    return Dataset((data.points - offset) / scale, data.labels, centers)


def partition_non_iid(data: Dataset, spec: PartitionSpec) -> List[ClientShard]:
    """
    Cluster-based non-IID split. Points are grouped by k-means with
    k = n_clusters; each of the first num_clients - 1 clients draws
    min(r1, r2, r3) points from each of two randomly selected groups, the last
    client receives everything that is left.
    """
    spec.validate_for(data)
    all_indices: np.ndarray = np.arange(data.n)
    if spec.num_clients == 1:
        return [_make_shard(data, 0, all_indices)]

    rng: np.random.Generator = np.random.default_rng(spec.rng_seed)
    size: int = data.n // spec.num_clients
    _, assignment = local.kmeans(
        data.points,
        local.KMeansConfig(
            k=min(spec.n_clusters, data.n),
            max_iters=PARTITION_KMEANS_ITERS,
            tol=1e-9,
            init_seed=spec.rng_seed,
        ),
    )
    n_groups: int = int(assignment.max()) + 1
    pools: List[List[int]] = [
        [int(i) for i in rng.permutation(np.flatnonzero(assignment == group))]
        for group in range(n_groups)
    ]
    lower: int = min(size, max(1, int(np.floor(size / (spec.n_clusters / 2) + 0.5))))

    client_members: List[List[int]] = []
    for client_id in range(spec.num_clients - 1):
        members: List[int] = []
        for attempt in range(MAX_CLIENT_RETRIES):
            members = _draw_client(pools, size, lower, rng)
            if members:
                break
            logger.debug("Client %d drew no points, attempt %d", client_id, attempt)
        else:
            raise PartitionError(
                f"Client {client_id} received no points after {MAX_CLIENT_RETRIES} draws"
            )
        client_members.append(members)

    remaining: List[int] = sorted(i for pool in pools for i in pool)
    client_members.append(remaining)
    if not remaining:
        largest: List[int] = max(client_members, key=len)
        client_members[-1] = [largest.pop()]
        logger.warning("Last client was empty, moved one point from the largest shard")

    return [
        _make_shard(data, client_id, np.array(sorted(members), dtype=int))
        for client_id, members in enumerate(client_members)
    ]


def _draw_client(
    pools: List[List[int]], size: int, lower: int, rng: np.random.Generator
) -> List[int]:
    n_groups: int = len(pools)
    members: List[int] = []
    selected: np.ndarray = rng.choice(n_groups, size=min(2, n_groups), replace=False)
    for group in selected:
        group = int(group)
        failures: int = 0
        while not pools[group] and failures < n_groups:
            failures += 1
            group = int(rng.integers(n_groups))
        if not pools[group]:
            # an empty client is redrawn by the caller
            logger.log(
                logging.WARNING if members else logging.DEBUG,
                "All redraws hit exhausted clusters, client keeps %d points",
                len(members),
            )
            continue
        r1: int = int(rng.integers(lower, size + 1))
        r2: int = size - len(members)
        r3: int = len(pools[group])
        take: int = min(r1, r2, r3)
        members.extend(pools[group][:take])
        del pools[group][:take]
    return members


def _make_shard(data: Dataset, client_id: int, indices: np.ndarray) -> ClientShard:
    labels: Optional[np.ndarray] = None
    if data.labels is not None:
        labels = data.labels[indices]
    return ClientShard(client_id, data.points[indices], labels, indices)


def partition_summary(shards: List[ClientShard]) -> List[Dict[str, Any]]:
    return [
        {"client_id": shard.client_id, "point_indices": storable.Storable.denumpyify(shard.indices)}
        for shard in shards
    ]


def save_partition(shards: List[ClientShard], file_path: str):
    """
    JSON array of {client_id, point_indices}, enough to rebuild the split.
    """
    with open(file_path, "w") as output_file:
        json.dump(partition_summary(shards), output_file)


def load_partition(data: Dataset, file_path: str) -> List[ClientShard]:
    with open(file_path, "r") as input_file:
        entries: List[Dict[str, Any]] = json.load(input_file)
    return [
        _make_shard(data, entry["client_id"], np.array(entry["point_indices"], dtype=int))
        for entry in entries
    ]
