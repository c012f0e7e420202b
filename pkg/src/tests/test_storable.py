import json
import os
import tempfile
import unittest

import numpy as np

import import_parent
import experiment_config
import local
import privacy
import storable


class StorableTest(unittest.TestCase):
    def test_denumpyify(self):
        converted = storable.Storable.denumpyify(
            {
                "array": np.arange(3),
                "integer": np.int64(4),
                "float": np.float32(0.5),
                "flag": np.bool_(True),
                "nested": (np.zeros(2), [np.int32(1)]),
            }
        )
        self.assertEqual(
            converted,
            {
                "array": [0, 1, 2],
                "integer": 4,
                "float": 0.5,
                "flag": True,
                "nested": [[0.0, 0.0], [1]],
            },
        )
        # everything must be JSON serializable afterwards
        json.dumps(converted)

    def test_nan_becomes_null(self):
        converted = storable.Storable.denumpyify([float("nan"), np.array([1.5, np.nan])])
        self.assertEqual(converted, [None, [1.5, None]])

    def test_id_depends_on_content(self):
        first: privacy.PrivacyParams = privacy.PrivacyParams(1.0, 2.0)
        same: privacy.PrivacyParams = privacy.PrivacyParams(1.0, 2.0)
        other: privacy.PrivacyParams = privacy.PrivacyParams(0.5, 2.0)
        self.assertEqual(first.get_id(), same.get_id())
        self.assertNotEqual(first.get_id(), other.get_id())

    def test_save_and_load(self):
        params: privacy.PrivacyParams = privacy.PrivacyParams(0.1, 3.0)
        with tempfile.TemporaryDirectory() as save_dir:
            save_path: str = params.save(os.path.join(save_dir, "nested"))
            self.assertTrue(os.path.basename(save_path).startswith("PrivacyParams_"))
            loaded: privacy.PrivacyParams = privacy.PrivacyParams.from_file(save_path)
        self.assertEqual(loaded.get_id(), params.get_id())
        self.assertEqual(loaded.noise_scale, 30.0)

    def test_load_by_id(self):
        config = experiment_config.ExperimentConfig({"seeds": [7]})
        with tempfile.TemporaryDirectory() as save_dir:
            config.save(save_dir)
            loaded = experiment_config.ExperimentConfig.load(save_dir, config.get_id())
            with self.assertRaises(FileNotFoundError):
                experiment_config.ExperimentConfig.load(save_dir, "0" * 64)
        self.assertEqual(loaded.seeds, [7])

    def test_save_into_file_path_fails(self):
        with tempfile.NamedTemporaryFile() as existing:
            with self.assertRaises(FileExistsError):
                privacy.PrivacyParams(1.0).save(existing.name)

    def test_upload_message(self):
        upload: local.ClientUpload = local.ClientUpload(
            4,
            [
                local.WeightedCentroid([0.0, 1.0], 0.5, 4, 10),
                local.WeightedCentroid([2.0, -1.0], 1.0, 4, 3),
            ],
        )
        with tempfile.TemporaryDirectory() as save_dir:
            file_path: str = os.path.join(save_dir, "upload.json")
            upload.to_file(file_path)
            with open(file_path, "r") as input_file:
                message: dict = json.load(input_file)
            loaded: local.ClientUpload = local.ClientUpload.from_file(file_path)

        self.assertEqual(message["client_id"], 4)
        self.assertEqual(
            message["centroids"][0], {"position": [0.0, 1.0], "mass": 0.5, "member_count": 10}
        )
        self.assertEqual(loaded.get_id(), upload.get_id())
        self.assertEqual(loaded.centroids[1].source_client, 4)


if __name__ == "__main__":
    unittest.main()
