"""
Closed-form defaults for the GFC hyperparameters, from dataset size and
privacy budget.
"""

import math
from typing import Sequence

import local
import topology

SOFTENING_FLOOR: float = 1e-6


class HeuristicParams:
    local_k: int
    softening: float
    alpha: float
    radius: float

    def __init__(self, local_k: int, softening: float, alpha: float, radius: float) -> None:
        self.local_k = local_k
        self.softening = softening
        self.alpha = alpha
        self.radius = radius

    def __repr__(self) -> str:
        return (
            f"HeuristicParams(local_k={self.local_k}, softening={self.softening:.6g}, "
            f"alpha={self.alpha:.6g}, radius={self.radius:.6g})"
        )


def heuristic_k(n: int) -> int:
    """
    round(15 + n / 500), half up. Callers clamp to the shard size.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return int(math.floor(15 + n / 500 + 0.5))


def heuristic_softening(epsilon: float) -> float:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return max(500.0 * math.exp(-5.0 * epsilon), SOFTENING_FLOOR)


def heuristic_alpha(epsilon: float) -> float:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return 2.0 + 20.0 / (epsilon + 1.0)


def heuristic_all(
    n: int, epsilon: float, sources: Sequence[local.WeightedCentroid]
) -> HeuristicParams:
    return HeuristicParams(
        heuristic_k(n),
        heuristic_softening(epsilon),
        heuristic_alpha(epsilon),
        topology.radius_heuristic(sources),
    )
