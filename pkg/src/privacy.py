"""
L1 clipping and the Laplace mechanism applied to every record of a client
shard before anything leaves the client.
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np

import dataset
import storable

logger = logging.getLogger(__name__)


class PrivacyParams(storable.Storable):
    epsilon: float
    delta_sensitivity: float

    def __init__(self, epsilon: float, delta_sensitivity: float = 1.0) -> None:
        super().__init__()
        if not epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        if not delta_sensitivity > 0:
            raise ValueError(f"delta_sensitivity must be positive, got {delta_sensitivity}")
        self.epsilon = float(epsilon)
        self.delta_sensitivity = float(delta_sensitivity)

    @property
    def noise_scale(self) -> float:
        return self.delta_sensitivity / self.epsilon

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["epsilon"] = self.epsilon
        dict_representation["delta_sensitivity"] = self.delta_sensitivity
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls(dict_representation["epsilon"], dict_representation["delta_sensitivity"])


def clip_l1(point: Any, delta_sensitivity: float) -> np.ndarray:
    """
    Scale a vector (or each row of an (n, d) array) onto the L1 ball of
    radius delta_sensitivity. Vectors already inside are returned unchanged.
    """
    if not delta_sensitivity > 0:
        raise ValueError(f"delta_sensitivity must be positive, got {delta_sensitivity}")
    values: np.ndarray = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("Cannot clip non-finite values")

    norms: np.ndarray = np.sum(np.abs(values), axis=-1, keepdims=True)
    factors: np.ndarray = np.ones_like(norms)
    over: np.ndarray = norms > delta_sensitivity
    factors[over] = delta_sensitivity / norms[over]
    return values * factors


def laplace_noise(scale: float, shape: Any, rng: np.random.Generator) -> np.ndarray:
    """
    Inverse-CDF Laplace(0, scale) sampler: -b * sign(u) * ln(1 - 2|u|) with
    u uniform on (-1/2, 1/2).
    """
    u: np.ndarray = rng.uniform(-0.5, 0.5, size=shape)
    # u = -0.5 would give log(0)
    u = np.clip(u, -0.5 + np.finfo(float).eps, 0.5)
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def max_l1_norm(points: Any) -> float:
    """
    Smallest delta_sensitivity for which clipping leaves every point as is.
    """
    values: np.ndarray = np.asarray(points, dtype=float)
    return float(np.max(np.sum(np.abs(values), axis=-1)))


def privatize(
    shard: dataset.ClientShard, params: PrivacyParams, rng: np.random.Generator
) -> dataset.ClientShard:
    """
    Clip every point, then add independent Laplace(0, delta/epsilon) noise to
    each coordinate. Labels are passed through untouched.
    """
    clipped: np.ndarray = clip_l1(shard.points, params.delta_sensitivity)
    noisy: np.ndarray = clipped + laplace_noise(params.noise_scale, clipped.shape, rng)
    logger.debug(
        "Client %d privatized %d points with noise scale %.4g",
        shard.client_id,
        shard.n,
        params.noise_scale,
    )
    return shard.with_points(noisy)
