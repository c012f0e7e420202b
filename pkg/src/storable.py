"""
JSON persistence for domain objects: exports, the client upload message and
run manifests. Objects are identified by the hash of their canonical JSON;
manifests are written as <ClassName>_<id>.json and reference other objects by
that id.
"""

import hashlib
import json
import math
import os
from typing import Any, Callable, Optional

import numpy as np


class Storable:
    def get_dict_representation(self, by_id: bool = True) -> dict:
        """
        JSON-ready dictionary that re-creates the instance. With by_id, the
        Storables it depends on appear as their id instead of embedded.
        """
        return {}

    @classmethod
    def from_dict(cls, dict_representation: dict):
        return cls()

    def to_file(self, file_path: str, indent: Optional[int] = None):
        """
        Standalone export, dependencies embedded.
        """
        with open(file_path, "w") as output_file:
            json.dump(self.get_dict_representation(by_id=False), output_file, indent=indent)

    @classmethod
    def from_file(cls, file_path: str):
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"{cls.__name__} file {file_path} does not exist")
        with open(file_path, "r") as input_file:
            return cls.from_dict(json.load(input_file))

    def __str__(self) -> str:
        return self.canonical_json()

    def canonical_json(self) -> str:
        return json.dumps(self.get_dict_representation(), sort_keys=True)

    def get_id(self, hash_function: Callable = hashlib.sha3_256) -> str:
        return hash_function(self.canonical_json().encode("utf-8")).hexdigest()

    @classmethod
    def manifest_name(cls, object_id: str) -> str:
        return f"{cls.__name__}_{object_id}.json"

    def _save_dependencies(self, save_dir: str):
        """
        Save the Storables referenced by id so the references resolve inside
        save_dir.
        """
        pass

    def save(self, save_dir: str = "./", create: bool = True) -> str:
        if not os.path.exists(save_dir):
            if not create:
                raise FileNotFoundError(f"Save directory {save_dir} does not exist")
            os.makedirs(save_dir)
        elif not os.path.isdir(save_dir):
            raise FileExistsError(f"Save path {save_dir} exists but is not a directory")
        self._save_dependencies(save_dir)
        save_path: str = os.path.join(save_dir, self.manifest_name(self.get_id()))
        with open(save_path, "w") as output_file:
            json.dump(self.get_dict_representation(by_id=True), output_file)
        return save_path

    @classmethod
    def load(cls, save_dir: str, object_id: str):
        """
        Inverse of save for objects whose representation has no id references.
        """
        return cls.from_file(os.path.join(save_dir, cls.manifest_name(object_id)))

    @staticmethod
    def denumpyify(variable: Any):
        """
        numpy arrays and scalars to builtins, recursively. NaN becomes None
        (JSON null).
        """
        if isinstance(variable, np.ndarray):
            return Storable.denumpyify(variable.tolist())
        if isinstance(variable, (bool, np.bool_)):
            return bool(variable)
        if isinstance(variable, np.integer):
            return int(variable)
        if isinstance(variable, (float, np.floating)):
            return None if math.isnan(variable) else float(variable)
        if isinstance(variable, dict):
            return {Storable.denumpyify(k): Storable.denumpyify(v) for k, v in variable.items()}
        if isinstance(variable, (list, tuple)):
            return [Storable.denumpyify(element) for element in variable]
        return variable
