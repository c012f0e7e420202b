"""
Experiment configuration: one YAML file with nested sections, every key
defaulted, plus dotted command line overrides.

    config = ExperimentConfig.from_yaml("configs/example.yaml", ["privacy.epsilons=[1, 0.1]"])

Random streams are derived from (master_seed, epsilon, seed, stage[, method])
by hashing, so adding a method or an epsilon never changes existing streams.
"""

import copy
import hashlib
import os
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import yaml

import storable

METHODS: List[str] = ["gfc", "naive", "centralized"]
STAGES: List[str] = ["partition", "client", "field", "server"]
# stages whose stream is shared by every method
SHARED_STAGES: List[str] = ["partition", "client"]

DEFAULTS: Dict[str, Any] = {
    "preset": None,
    "data": {
        "source": "blobs",
        "n_clusters": 3,
        "points_per_cluster": 100,
        "d": 2,
        "spread": 0.5,
        "separation": 10.0,
        "seed": 0,
        "path": None,
        "label_column": None,
        "normalize": "none",
    },
    "federation": {"num_clients": 10},
    "privacy": {
        "epsilons": [1000, 100, 10, 1, 0.1, 0.05, 0.01],
        "delta_sensitivity": "auto",
    },
    "seeds": list(range(20)),
    "n_clusters": None,
    "methods": ["gfc", "naive"],
    "overrides": {
        "k": None,
        "delta": None,
        "alpha": None,
        "r": None,
        "p": 2.0,
        "mass_formula": "exp",
        "direction": "superlevel",
        "sigma": None,
        "max_levels": 512,
        "radius_floor_factor": 3.0,
        "kmeans_max_iters": 100,
        "kmeans_tol": 1.0e-6,
    },
    "ablation": {
        "alpha": [1, 2, 5, 10],
        "delta": [1.0e-4, 0.1, 100],
        "k": [1, 5, 10, 15, 20, 25],
        "clients": [10, 20, 50, 100],
    },
    "scaling": {"epsilons": [1, 0.5, 0.2, 0.1], "floor_epsilon": 1.0e6},
    "output": {
        "dir": "results",
        "results_csv": "results.csv",
        "aggregate_csv": "aggregate.csv",
        "manifests": True,
        "merge_tree_json": False,
        "timings": True,
        "percent": False,
    },
    "workers": 1,
    "master_seed": 0,
}

# blob generator regimes of roughly 300, 5 000 and 20 000 points
PRESETS: Dict[str, Dict[str, Any]] = {
    "small": {"n_clusters": 3, "points_per_cluster": 100, "d": 2},
    "medium": {"n_clusters": 5, "points_per_cluster": 1000, "d": 2},
    "large": {"n_clusters": 10, "points_per_cluster": 2000, "d": 2},
}


def _merge(base: Dict[str, Any], updates: Dict[str, Any], path: str = "") -> Dict[str, Any]:
    for key, value in updates.items():
        dotted: str = f"{path}{key}"
        if key not in base:
            raise ValueError(f'Unknown configuration key "{dotted}"')
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ValueError(f'Configuration key "{dotted}" expects a section')
            _merge(base[key], value, dotted + ".")
        else:
            base[key] = value
    return base


def _set_dotted(settings: Dict[str, Any], dotted: str, value: Any) -> None:
    keys: List[str] = dotted.split(".")
    section: Dict[str, Any] = settings
    for key in keys[:-1]:
        section = section.setdefault(key, {})
        if not isinstance(section, dict):
            raise ValueError(f'"{key}" in "{dotted}" is not a section')
    section[keys[-1]] = value


class ExperimentConfig(storable.Storable):
    raw: Dict[str, Any]
    settings: Dict[str, Any]

    def __init__(self, raw: Optional[Dict[str, Any]] = None) -> None:
        super().__init__()
        self.raw = copy.deepcopy(raw) if raw else {}
        self.settings = self._resolve(self.raw)
        self.validate()

    @staticmethod
    def _resolve(raw: Dict[str, Any]) -> Dict[str, Any]:
        settings: Dict[str, Any] = copy.deepcopy(DEFAULTS)
        preset: Optional[str] = raw.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise ValueError(f'Preset "{preset}" is not one of {sorted(PRESETS)}')
            settings["data"].update(PRESETS[preset])
        return _merge(settings, raw)

    @classmethod
    def from_yaml(cls, file_path: str, overrides: Iterable[str] = ()) -> "ExperimentConfig":
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"Configuration file {file_path} does not exist")
        with open(file_path, "r") as input_file:
            raw: Any = yaml.safe_load(input_file)
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ValueError(f"Configuration file {file_path} must contain a mapping")
        config: ExperimentConfig = cls(raw)
        for override in overrides:
            config.apply_override(override)
        return config

    def apply_override(self, assignment: str) -> None:
        """
        Apply "section.key=value"; the value is parsed as a YAML scalar or
        list.
        """
        if "=" not in assignment:
            raise ValueError(f'Override "{assignment}" is not of the form key=value')
        dotted, text = assignment.split("=", 1)
        raw: Dict[str, Any] = copy.deepcopy(self.raw)
        _set_dotted(raw, dotted.strip(), yaml.safe_load(text))
        resolved: ExperimentConfig = ExperimentConfig(raw)
        self.raw, self.settings = resolved.raw, resolved.settings

    def updated(self, assignments: Dict[str, Any]) -> "ExperimentConfig":
        """
        Copy with dotted keys set to already parsed values.
        """
        raw: Dict[str, Any] = copy.deepcopy(self.raw)
        for dotted, value in assignments.items():
            _set_dotted(raw, dotted, value)
        return ExperimentConfig(raw)

    def validate(self) -> None:
        s: Dict[str, Any] = self.settings
        data: Dict[str, Any] = s["data"]
        if data["source"] not in ("blobs", "csv"):
            raise ValueError(f'data.source "{data["source"]}" is not blobs or csv')
        if data["source"] == "csv" and not data["path"]:
            raise ValueError("data.path is required for csv data")
        if data["normalize"] not in ("none", "zscore", "minmax"):
            raise ValueError(f'data.normalize "{data["normalize"]}" is not available')
        if s["federation"]["num_clients"] < 1:
            raise ValueError("federation.num_clients must be >= 1")

        epsilons: List[Any] = s["privacy"]["epsilons"]
        if not epsilons or any(not float(e) > 0 for e in epsilons):
            raise ValueError("privacy.epsilons must be a non-empty list of positive values")
        delta_sensitivity: Any = s["privacy"]["delta_sensitivity"]
        if delta_sensitivity != "auto" and not float(delta_sensitivity) > 0:
            raise ValueError('privacy.delta_sensitivity must be positive or "auto"')
        if not s["seeds"]:
            raise ValueError("seeds must not be empty")
        if s["n_clusters"] is not None and s["n_clusters"] < 1:
            raise ValueError("n_clusters must be >= 1")
        unknown: List[str] = [m for m in s["methods"] if m not in METHODS]
        if unknown or not s["methods"]:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {s['methods']}")

        overrides: Dict[str, Any] = s["overrides"]
        if overrides["mass_formula"] not in ("exp", "exp_mean", "reciprocal"):
            raise ValueError(f'overrides.mass_formula "{overrides["mass_formula"]}" is not available')
        if overrides["direction"] not in ("superlevel", "sublevel"):
            raise ValueError(f'overrides.direction "{overrides["direction"]}" is not available')
        if overrides["radius_floor_factor"] < 0:
            raise ValueError("overrides.radius_floor_factor must be non-negative")
        if s["workers"] < 1:
            raise ValueError("workers must be >= 1")

    # Section shortcuts

    @property
    def data(self) -> Dict[str, Any]:
        return self.settings["data"]

    @property
    def overrides(self) -> Dict[str, Any]:
        return self.settings["overrides"]

    @property
    def output(self) -> Dict[str, Any]:
        return self.settings["output"]

    @property
    def epsilons(self) -> List[float]:
        return [float(e) for e in self.settings["privacy"]["epsilons"]]

    @property
    def seeds(self) -> List[int]:
        return [int(seed) for seed in self.settings["seeds"]]

    @property
    def methods(self) -> List[str]:
        return list(self.settings["methods"])

    @property
    def num_clients(self) -> int:
        return int(self.settings["federation"]["num_clients"])

    @property
    def master_seed(self) -> int:
        return int(self.settings["master_seed"])

    @property
    def workers(self) -> int:
        return int(self.settings["workers"])

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.settings, sort_keys=False, default_flow_style=None)

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["settings"] = self.denumpyify(self.settings)
        return dict_representation

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls(dict_representation["settings"])


def derive_seed(
    master_seed: int, epsilon: float, seed: int, stage: str, method: Optional[str] = None
) -> int:
    """
    First 8 bytes of sha256("master|epsilon|seed|stage|method") as an unsigned
    integer. Shared stages ignore the method.
    """
    if stage not in STAGES:
        raise ValueError(f'Stage "{stage}" is not one of {STAGES}')
    if stage in SHARED_STAGES:
        method = None
    text: str = f"{master_seed}|{float(epsilon)!r}|{seed}|{stage}|{method or ''}"
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def stage_rng(
    master_seed: int, epsilon: float, seed: int, stage: str, method: Optional[str] = None
) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, epsilon, seed, stage, method))
