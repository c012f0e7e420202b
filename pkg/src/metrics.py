"""
External clustering scores and centroid matching error.
"""

from typing import Any

import numpy as np
import sklearn.metrics as smetrics
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from sklearn.metrics.cluster import contingency_matrix


def _as_points(values: Any) -> np.ndarray:
    """
    Point matrix of shape (n, d); a flat list is n one-dimensional points.
    """
    points: np.ndarray = np.asarray(values, dtype=float)
    if points.ndim == 0:
        return points.reshape(1, 1)
    if points.ndim == 1:
        return points.reshape(-1, 1)
    return points


def assign(points: Any, centroids: Any) -> np.ndarray:
    """
    Index of the nearest centroid for every point, ties to the lower index.
    """
    centers: np.ndarray = _as_points(centroids)
    if centers.shape[0] == 0:
        raise ValueError("At least one centroid is required")
    return np.argmin(cdist(_as_points(points), centers, "sqeuclidean"), axis=1)


class ContingencyTable:
    truth: np.ndarray
    predicted: np.ndarray
    counts: np.ndarray
    total: int

    def __init__(self, true_labels: Any, pred_labels: Any) -> None:
        self.truth = np.asarray(true_labels)
        self.predicted = np.asarray(pred_labels)
        if self.truth.shape != self.predicted.shape or self.truth.ndim != 1:
            raise ValueError(
                f"Label lists differ in shape: {self.truth.shape} vs {self.predicted.shape}"
            )
        self.counts = np.asarray(contingency_matrix(self.truth, self.predicted), dtype=np.int64)
        self.total = int(self.truth.size)

    def both_constant(self) -> bool:
        return self.counts.shape == (1, 1)

    def both_singletons(self) -> bool:
        return self.counts.shape == (self.total, self.total)


def ari(true_labels: Any, pred_labels: Any) -> float:
    """
    Adjusted Rand index. NaN when the index is 0/0 (both labelings constant,
    or both all singletons); sklearn reports 1.0 there.
    """
    table: ContingencyTable = ContingencyTable(true_labels, pred_labels)
    if table.total < 2:
        raise ValueError("ARI needs at least two labeled points")
    if table.both_constant() or table.both_singletons():
        return float("nan")
    return float(smetrics.adjusted_rand_score(table.truth, table.predicted))


def nmi(true_labels: Any, pred_labels: Any) -> float:
    """
    Mutual information normalized by the geometric mean of the two entropies.
    Two constant labelings score 1, a single constant one scores 0.
    """
    table: ContingencyTable = ContingencyTable(true_labels, pred_labels)
    if table.total < 1:
        raise ValueError("NMI needs at least one labeled point")
    score: float = smetrics.normalized_mutual_info_score(
        table.truth, table.predicted, average_method="geometric"
    )
    return float(np.clip(score, 0.0, 1.0))


def centroid_error(estimated: Any, reference: Any) -> float:
    """
    Mean Euclidean distance between the two centroid sets under the
    minimum-cost one-to-one matching.
    """
    estimate: np.ndarray = _as_points(estimated)
    truth: np.ndarray = _as_points(reference)
    if estimate.shape != truth.shape:
        raise ValueError(
            f"Cannot match {estimate.shape[0]} centroids against {truth.shape[0]}"
        )
    if estimate.shape[0] == 0:
        raise ValueError("Cannot match empty centroid sets")
    cost: np.ndarray = cdist(estimate, truth)
    rows, columns = linear_sum_assignment(cost)
    return float(cost[rows, columns].mean())
