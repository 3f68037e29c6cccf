import json
import os
import tempfile
import unittest
from pathlib import Path

from jacobicast import __version__
from jacobicast.manifest import RunManifest, file_digest, verify_outputs, with_seed


class TestRunManifest(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.output = Path(self.tmp.name) / "fit.json"
        self.output.write_text('{"theta0": 1.9}', encoding="utf-8")

    def tearDown(self):
        self.tmp.cleanup()

    def test_path_next_to_output(self):
        self.assertEqual(RunManifest.path_for(self.output).name, "fit.manifest.json")

    def test_finish_writes_everything(self):
        manifest = RunManifest("calibrate", {"epsilon": 0.02, "seed": None}, argv=["calibrate", "segments.json"])
        manifest.add_output(self.output)
        manifest.record_seed(17)
        path = manifest.finish(RunManifest.path_for(self.output))
        record = RunManifest.load(path)
        self.assertEqual(record["command"], "calibrate")
        self.assertEqual(record["version"], __version__)
        self.assertEqual(record["seed"], 17)
        self.assertEqual(record["config"]["seed"], 17)
        self.assertEqual(record["outputs"][str(self.output)], file_digest(self.output))
        self.assertGreaterEqual(record["wall_time"], 0.0)

    def test_verify_outputs_detects_changes(self):
        manifest = RunManifest("calibrate", {})
        manifest.add_output(self.output)
        record = json.loads(json.dumps(manifest.to_dict()))
        self.assertEqual(verify_outputs(record), {str(self.output): True})
        self.output.write_text('{"theta0": 2.0}', encoding="utf-8")
        self.assertEqual(verify_outputs(record), {str(self.output): False})
        os.remove(self.output)
        self.assertEqual(verify_outputs(record), {str(self.output): False})

    def test_none_seed_is_not_recorded(self):
        manifest = RunManifest("synth", {"seed": 3})
        manifest.record_seed(None)
        self.assertEqual(manifest.seed, 3)

    def test_recorded_seed_enters_the_arguments(self):
        manifest = RunManifest("simulate", {"seed": None}, argv=["simulate", "fit.json", "segments.json"])
        manifest.record_seed(123)
        self.assertEqual(manifest.argv, ["simulate", "fit.json", "segments.json", "--seed", "123"])
        self.assertEqual(with_seed(["bands", "--seed", "4", "-v"], 9), ["bands", "--seed", "9", "-v"])
        self.assertEqual(with_seed(["bands", "--seed=4"], 9), ["bands", "--seed=9"])


if __name__ == '__main__':
    unittest.main()
