"""
Server-side potential field over the uploaded weighted centroids:

    E(y) = sum_i w_i / (||c_i - y||^p + delta)

evaluated on probes sampled uniformly from the bounding box of the centroids.
"""

import logging
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

import local
import storable

logger = logging.getLogger(__name__)

PROBE_CHUNK: int = 4096
MIN_WIDENING: float = 1e-6
RELATIVE_WIDENING: float = 1e-3


class FieldConfig(storable.Storable):
    alpha: float
    softening: float
    exponent_p: float
    rng_seed: int

    def __init__(
        self, alpha: float, softening: float, exponent_p: float = 2.0, rng_seed: int = 0
    ) -> None:
        super().__init__()
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        if not softening > 0:
            raise ValueError(f"softening must be positive, got {softening}")
        if not exponent_p > 0:
            raise ValueError(f"exponent_p must be positive, got {exponent_p}")
        self.alpha = float(alpha)
        self.softening = float(softening)
        self.exponent_p = float(exponent_p)
        self.rng_seed = int(rng_seed)

    def probe_count(self, source_count: int) -> int:
        # round half up, at least one probe
        return max(1, int(np.floor(self.alpha * source_count + 0.5)))

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["alpha"] = self.alpha
        dict_representation["softening"] = self.softening
        dict_representation["exponent_p"] = self.exponent_p
        dict_representation["rng_seed"] = self.rng_seed
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls(
            dict_representation["alpha"],
            dict_representation["softening"],
            dict_representation["exponent_p"],
            dict_representation["rng_seed"],
        )


def source_arrays(sources: Sequence[local.WeightedCentroid]) -> Tuple[np.ndarray, np.ndarray]:
    if len(sources) == 0:
        raise ValueError("At least one source centroid is required")
    positions: np.ndarray = np.vstack([source.position for source in sources])
    masses: np.ndarray = np.array([source.mass for source in sources], dtype=float)
    return positions, masses


def compute_bounds(sources: Sequence[local.WeightedCentroid]) -> np.ndarray:
    """
    Per-dimension (min, max) of the source positions as a (d, 2) array.
    Dimensions with zero extent are widened on both sides by
    max(1e-6, 1e-3 * largest extent).
    """
    positions, _ = source_arrays(sources)
    low: np.ndarray = positions.min(axis=0)
    high: np.ndarray = positions.max(axis=0)
    extent: np.ndarray = high - low
    degenerate: np.ndarray = extent == 0
    if np.any(degenerate):
        widening: float = max(MIN_WIDENING, RELATIVE_WIDENING * float(extent.max()))
        low = np.where(degenerate, low - widening, low)
        high = np.where(degenerate, high + widening, high)
        logger.debug("Widened %d degenerate dimension(s) by %.3g", degenerate.sum(), widening)
    return np.column_stack([low, high])


def sample_probes(bounds: Any, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 1:
        raise ValueError(f"Probe count must be >= 1, got {count}")
    box: np.ndarray = np.asarray(bounds, dtype=float)
    return rng.uniform(box[:, 0], box[:, 1], size=(count, box.shape[0]))


def energies(
    probes: Any,
    positions: np.ndarray,
    masses: np.ndarray,
    softening: float,
    exponent_p: float = 2.0,
) -> np.ndarray:
    """
    Energy of every probe. Sources are summed in their given order, probes are
    processed in fixed-size chunks.
    """
    if not softening > 0:
        raise ValueError(f"softening must be positive, got {softening}")
    points: np.ndarray = np.atleast_2d(np.asarray(probes, dtype=float))
    result: np.ndarray = np.empty(points.shape[0])
    for start in range(0, points.shape[0], PROBE_CHUNK):
        chunk: np.ndarray = points[start : start + PROBE_CHUNK]
        distances: np.ndarray = cdist(chunk, positions) ** exponent_p
        result[start : start + PROBE_CHUNK] = np.sum(
            masses[None, :] / (distances + softening), axis=1
        )
    return result


def energy_at(
    y: Any,
    sources: Sequence[local.WeightedCentroid],
    softening: float,
    exponent_p: float = 2.0,
) -> float:
    positions, masses = source_arrays(sources)
    probe: np.ndarray = np.asarray(y, dtype=float)[None, :]
    return float(energies(probe, positions, masses, softening, exponent_p)[0])


def energy_upper_bound(masses: np.ndarray, softening: float) -> float:
    """
    (sum of masses) / softening, accumulated the same way probe energies are,
    so that every energy compares <= to it without rounding slack.
    """
    return float(np.sum(masses[None, :] / (0.0 + softening), axis=1)[0])


class PotentialField(storable.Storable):
    probes: np.ndarray
    energies: np.ndarray
    sources: List[local.WeightedCentroid]
    bounds: np.ndarray
    softening: float
    exponent_p: float

    def __init__(
        self,
        probes: Any,
        energies: Any,
        sources: List[local.WeightedCentroid],
        bounds: Any,
        softening: float,
        exponent_p: float = 2.0,
    ) -> None:
        super().__init__()
        self.probes = np.atleast_2d(np.asarray(probes, dtype=float))
        self.energies = np.asarray(energies, dtype=float)
        if self.energies.shape[0] != self.probes.shape[0]:
            raise ValueError(
                f"{self.energies.shape[0]} energies for {self.probes.shape[0]} probes"
            )
        self.sources = sources
        self.bounds = np.asarray(bounds, dtype=float)
        self.softening = float(softening)
        self.exponent_p = float(exponent_p)

    @property
    def n_probes(self) -> int:
        return self.probes.shape[0]

    @property
    def d(self) -> int:
        return self.probes.shape[1]

    def total_mass(self) -> float:
        return float(sum(source.mass for source in self.sources))

    def probe_spacing(self) -> float:
        """
        Mean spacing of uniformly placed probes: (box volume / |G|)^(1/d).
        """
        volume: float = float(np.prod(self.bounds[:, 1] - self.bounds[:, 0]))
        return (volume / self.n_probes) ** (1.0 / self.d)

    def to_frame(self) -> pd.DataFrame:
        frame: pd.DataFrame = pd.DataFrame(
            self.probes, columns=[f"x{i}" for i in range(self.d)]
        )
        frame["energy"] = self.energies
        return frame

    def to_csv(self, file_path: str) -> None:
        self.to_frame().to_csv(file_path, index_label="probe")

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["probes"] = self.denumpyify(self.probes)
        dict_representation["energies"] = self.denumpyify(self.energies)
        dict_representation["bounds"] = self.denumpyify(self.bounds)
        dict_representation["softening"] = self.softening
        dict_representation["exponent_p"] = self.exponent_p
        dict_representation["sources"] = [
            source.get_dict_representation(by_id=by_id) for source in self.sources
        ]
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        sources: List[local.WeightedCentroid] = [
            local.WeightedCentroid(s["position"], s["mass"], member_count=s["member_count"])
            for s in dict_representation["sources"]
        ]
        return cls(
            dict_representation["probes"],
            dict_representation["energies"],
            sources,
            dict_representation["bounds"],
            dict_representation["softening"],
            dict_representation["exponent_p"],
        )


def build_field(
    sources: List[local.WeightedCentroid],
    cfg: FieldConfig,
    rng: Optional[np.random.Generator] = None,
) -> PotentialField:
    positions, masses = source_arrays(sources)
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    bounds: np.ndarray = compute_bounds(sources)
    probes: np.ndarray = sample_probes(bounds, cfg.probe_count(len(sources)), rng)
    values: np.ndarray = energies(probes, positions, masses, cfg.softening, cfg.exponent_p)
    logger.debug(
        "Field: %d sources, %d probes, max energy %.4g",
        len(sources),
        probes.shape[0],
        values.max(),
    )
    return PotentialField(probes, values, sources, bounds, cfg.softening, cfg.exponent_p)
