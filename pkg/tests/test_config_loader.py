#!/usr/bin/env python3
"""
Tests for config files, overrides, validation and digests
"""

import json
import tempfile
import unittest
from pathlib import Path

from app.core.errors import ConfigurationError
from app.utils.config_loader import (
    apply_overrides,
    canonical_json,
    config_digest,
    load_config,
    load_config_dict,
    parse_override,
)
from tests.test_config import DEFAULT_CONFIG, DISSIPATIVE_CUBIC_CONFIG, LINEAR_DAMPED_CONFIG


class TestOverrides(unittest.TestCase):

    def test_parse_values(self):
        self.assertEqual(parse_override("physics.p=3"), ("physics.p", 3))
        self.assertEqual(parse_override("sweep.scales=[1, 2]"), ("sweep.scales", [1, 2]))
        self.assertEqual(parse_override("basis.lengths=[\"pi\"]"), ("basis.lengths", ["pi"]))
        self.assertEqual(parse_override("physics.kernel.type=zero"), ("physics.kernel.type", "zero"))
        self.assertEqual(parse_override("a=b=c"), ("a", "b=c"))

    def test_malformed(self):
        for bad in ("physics.p", "=3", "physics..p=3"):
            with self.assertRaises(ConfigurationError):
                parse_override(bad)

    def test_apply_creates_sections(self):
        raw = apply_overrides({}, ["step.dt=0.005", "physics.k=2"])
        self.assertEqual(raw, {"step": {"dt": 0.005}, "physics": {"k": 2}})

    def test_apply_into_scalar_fails(self):
        with self.assertRaises(ConfigurationError):
            apply_overrides({"step": 1}, ["step.dt=0.1"])

    def test_later_override_wins(self):
        raw = apply_overrides({}, ["physics.p=3", "physics.p=4"])
        self.assertEqual(raw["physics"]["p"], 4)


class TestLoadConfig(unittest.TestCase):

    def test_bundled_configs_validate(self):
        for path in (DEFAULT_CONFIG, LINEAR_DAMPED_CONFIG, DISSIPATIVE_CUBIC_CONFIG):
            config = load_config(path)
            self.assertGreater(config.step.dt, 0.0)

    def test_defaults(self):
        config = load_config()
        self.assertEqual(config.basis.modes, 32)
        self.assertEqual(config.physics.p, 2.0)

    def test_overrides_apply(self):
        config = load_config(DEFAULT_CONFIG, ["physics.p=3", "run.T=0.5"])
        self.assertEqual(config.physics.p, 3.0)
        self.assertEqual(config.run.T, 0.5)

    def test_validation_error_names_the_field(self):
        with self.assertRaises(ConfigurationError) as ctx:
            load_config(DEFAULT_CONFIG, ["physics.p=-1"])
        self.assertIn("physics.p", ctx.exception.message)
        with self.assertRaises(ConfigurationError) as ctx:
            load_config(DEFAULT_CONFIG, ["physics.unknown=1"])
        self.assertIn("physics.unknown", ctx.exception.message)

    def test_json_error_reports_position(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.json"
            path.write_text('{\n  "physics": {"k": 1,}\n}\n', encoding="utf-8")
            with self.assertRaises(ConfigurationError) as ctx:
                load_config(path)
            self.assertIn("line 2", ctx.exception.message)

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            load_config("/nonexistent/config.json")

    def test_top_level_must_be_object(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "list.json"
            path.write_text("[1, 2]", encoding="utf-8")
            with self.assertRaises(ConfigurationError):
                load_config(path)

    def test_dict_loader_leaves_input_alone(self):
        raw = {"physics": {"k": 1.0}}
        config = load_config_dict(raw, ["physics.k=2"])
        self.assertEqual(config.physics.k, 2.0)
        self.assertEqual(raw, {"physics": {"k": 1.0}})


class TestDigest(unittest.TestCase):

    def test_canonical_json(self):
        self.assertEqual(canonical_json({"b": 1, "a": [1.5, None]}), '{"a":[1.5,null],"b":1}')

    def test_digest_ignores_key_order(self):
        raw = json.loads(DEFAULT_CONFIG.read_text(encoding="utf-8"))
        reordered = dict(reversed(list(raw.items())))
        self.assertEqual(config_digest(load_config_dict(raw)), config_digest(load_config_dict(reordered)))

    def test_digest_changes_with_content(self):
        base = config_digest(load_config(DEFAULT_CONFIG))
        changed = config_digest(load_config(DEFAULT_CONFIG, ["physics.k=2"]))
        self.assertNotEqual(base, changed)
        self.assertEqual(len(base), 64)


if __name__ == "__main__":
    unittest.main()
