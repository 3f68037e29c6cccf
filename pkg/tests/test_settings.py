import os
import tempfile
import unittest
from unittest.mock import patch

from jacobicast import ConfigError, Settings, load_settings
from jacobicast.settings import CONFIG_ENV, DEBUG_ENV, debug_enabled


class TestSettings(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.env = patch.dict(os.environ, {}, clear=False)
        self.env.start()
        os.environ.pop(CONFIG_ENV, None)
        os.environ.pop(DEBUG_ENV, None)

    def tearDown(self):
        self.env.stop()
        self.tmp.cleanup()

    def _config(self, text):
        path = os.path.join(self.tmp.name, "jacobicast.env")
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_defaults(self):
        settings = load_settings()
        self.assertEqual(settings.epsilon, 0.02)
        self.assertEqual(settings.levels, (0.5, 0.9, 0.99))
        self.assertEqual(settings.substeps, 20)
        self.assertIsNone(settings.seed)
        self.assertIsNone(settings.capacity_mw)

    def test_file_then_overrides(self):
        path = self._config("EPSILON=0.05\nn_paths=200\nlevels=0.5;0.8\nseed=none\n")
        settings = load_settings(path, {"n_paths": 50, "threads": None})
        self.assertEqual(settings.epsilon, 0.05)
        self.assertEqual(settings.n_paths, 50)
        self.assertEqual(settings.levels, (0.5, 0.8))
        self.assertEqual(settings.threads, 1)
        self.assertIsNone(settings.seed)

    def test_file_from_environment(self):
        path = self._config("capacity_mw=1474\n")
        with patch.dict(os.environ, {CONFIG_ENV: path}):
            self.assertEqual(load_settings().capacity_mw, 1474.0)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError):
            load_settings(self._config("colour=blue\n"))

    def test_unreadable_value(self):
        with self.assertRaises(ConfigError):
            load_settings(overrides={"n_paths": "many"})

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_settings(os.path.join(self.tmp.name, "absent.env"))

    def test_validation(self):
        with self.assertRaises(ConfigError):
            Settings(epsilon=0.5)
        with self.assertRaises(ConfigError):
            Settings(threads=0)
        with self.assertRaises(ConfigError):
            Settings(levels=(0.5, 1.0))
        with self.assertRaises(ConfigError):
            Settings().merged({"capacity_mw": -1.0})

    def test_to_dict_lists_levels(self):
        self.assertEqual(Settings().to_dict()["levels"], [0.5, 0.9, 0.99])

    def test_debug_flag(self):
        self.assertFalse(debug_enabled())
        with patch.dict(os.environ, {DEBUG_ENV: "True"}):
            self.assertTrue(debug_enabled())


if __name__ == '__main__':
    unittest.main()
