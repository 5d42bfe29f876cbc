#!/usr/bin/env python3
"""
Tests for run directories: manifest, records, snapshots and lookup
"""

import tempfile
import unittest
from pathlib import Path

import numpy as np

from app.core.errors import InputError
from app.physics.model import State
from app.services.run_store import MANIFEST_FILE, RECORDS_FILE, REPORT_FILE, RunStore
from app.services.runner import execute_simulate
from app.utils.config_loader import load_config
from schemas import PAIR_COLUMN, RECORD_COLUMNS, RunManifest
from tests.test_config import LINEAR_DAMPED_CONFIG


def make_manifest(**updates):
    manifest = RunManifest(
        subcommand="simulate",
        config_digest="ab" * 32,
        basis={"dim": 1, "modes": 4},
        step={"dt": 0.01},
        seed=7,
        code_version="test",
    )
    return manifest.model_copy(update=updates)


def make_record(t):
    record = {column: 0.0 for column in RECORD_COLUMNS}
    record.update(t=t, E_total=1.0 / (1.0 + t), tail_frac=0.1 + 1e-17 * t)
    return record


class TestRunStore(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        self.store = RunStore(self.root)

    def tearDown(self):
        self._tmp.cleanup()

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        records = [make_record(0.1 * n) for n in range(5)]
        snapshots = [State(rng.standard_normal(4), rng.standard_normal(4), 0.3 * n) for n in range(3)]
        out_dir = self.store.run_dir("simulate", "ab" * 32, 7)
        outputs = self.store.persist_run(make_manifest(), records, out_dir, snapshots, report={"ok": True})

        self.assertEqual(out_dir.name, "simulate-abababababab-s7")
        self.assertEqual(outputs[0], MANIFEST_FILE)
        self.assertIn(RECORDS_FILE, outputs)
        self.assertIn(REPORT_FILE, outputs)
        self.assertIn("snapshots/00002.bin", outputs)

        manifest, loaded_records, loaded_snapshots = self.store.load_run(out_dir)
        self.assertEqual(manifest.seed, 7)
        self.assertEqual(manifest.outputs, outputs)
        self.assertEqual(loaded_records, records)
        self.assertEqual(len(loaded_snapshots), 3)
        for original, loaded in zip(snapshots, loaded_snapshots):
            self.assertEqual(loaded.time, original.time)
            np.testing.assert_array_equal(loaded.a, original.a)
            np.testing.assert_array_equal(loaded.b, original.b)
        self.assertEqual(self.store.load_report(out_dir), {"ok": True})

    def test_rewrite_drops_stale_outputs(self):
        rng = np.random.default_rng(1)
        out_dir = self.root / "rerun"
        long_run = [State(rng.standard_normal(4), rng.standard_normal(4), 0.1 * n) for n in range(11)]
        short_run = long_run[:6]
        self.store.persist_run(make_manifest(), [make_record(0.0)], out_dir, long_run, report={"run": 1})
        outputs = self.store.persist_run(make_manifest(), [make_record(0.0)], out_dir, short_run)

        manifest, _, snapshots = self.store.load_run(out_dir)
        self.assertEqual(len(snapshots), 6)
        self.assertEqual([s.time for s in snapshots], [s.time for s in short_run])
        self.assertIsNone(self.store.load_report(out_dir))
        self.assertEqual(manifest.outputs, outputs)

    def test_seed_is_part_of_default_directory(self):
        config = load_config(LINEAR_DAMPED_CONFIG, ["run.T=0.05"])
        first = execute_simulate(config, seed=1, store=self.store)
        second = execute_simulate(config, seed=2, store=self.store)
        self.assertNotEqual(first.out_dir, second.out_dir)
        self.assertTrue(first.out_dir.name.endswith("-s1"))
        self.assertEqual(self.store.list_runs(), sorted([first.out_dir.name, second.out_dir.name]))
        self.assertEqual(self.store.load_manifest(first.out_dir).seed, 1)

    def test_companion_adds_pair_column(self):
        config = load_config(LINEAR_DAMPED_CONFIG, ["run.T=0.05", "run.companion_energy=0.1"])
        result = execute_simulate(config, seed=3, store=self.store)
        header = (result.out_dir / RECORDS_FILE).read_text(encoding="utf-8").splitlines()[0]
        self.assertEqual(header, ",".join(RECORD_COLUMNS + [PAIR_COLUMN]))

        records = self.store.load_records(result.out_dir)
        self.assertEqual(records, result.records)
        self.assertAlmostEqual(records[0][PAIR_COLUMN], 0.1, places=12)
        self.assertEqual(result.report["final_pair_energy"], records[-1][PAIR_COLUMN])
        self.assertIsNotNone(result.report["growth_rate"])
        self.assertLess(result.report["max_lyapunov_drift"], 0.0)

    def test_records_header(self):
        out_dir = self.root / "run"
        self.store.persist_run(make_manifest(), [make_record(0.0)], out_dir)
        header = (out_dir / RECORDS_FILE).read_text(encoding="utf-8").splitlines()[0]
        self.assertEqual(header, ",".join(RECORD_COLUMNS))

    def test_empty_records(self):
        out_dir = self.root / "empty"
        self.store.persist_run(make_manifest(status="failed"), [], out_dir)
        self.assertEqual(self.store.load_records(out_dir), [])
        self.assertEqual(self.store.load_snapshots(out_dir), [])
        self.assertIsNone(self.store.load_report(out_dir))
        self.assertEqual(self.store.load_manifest(out_dir).status, "failed")

    def test_manifest_is_canonical(self):
        out_dir = self.root / "canon"
        self.store.persist_run(make_manifest(), [], out_dir)
        text = (out_dir / MANIFEST_FILE).read_text(encoding="utf-8")
        self.assertNotIn(" ", text.strip())
        self.assertTrue(text.startswith('{"basis":'))

    def test_repeat_writes_are_identical(self):
        records = [make_record(0.1 * n) for n in range(3)]
        first, second = self.root / "a", self.root / "b"
        self.store.persist_run(make_manifest(), records, first)
        self.store.persist_run(make_manifest(), records, second)
        self.assertEqual((first / RECORDS_FILE).read_bytes(), (second / RECORDS_FILE).read_bytes())
        self.assertEqual((first / MANIFEST_FILE).read_bytes(), (second / MANIFEST_FILE).read_bytes())

    def test_list_and_resolve(self):
        self.assertEqual(self.store.list_runs(), [])
        self.store.persist_run(make_manifest(), [], self.root / "verify-123")
        (self.root / "stray").mkdir()
        self.assertEqual(self.store.list_runs(), ["verify-123"])
        self.assertEqual(self.store.resolve("verify-123"), self.root / "verify-123")
        for bad in ("", "..", "a/b", "missing", "stray"):
            with self.assertRaises(InputError):
                self.store.resolve(bad)

    def test_missing_manifest(self):
        with self.assertRaises(InputError):
            self.store.load_manifest(self.root / "nowhere")

    def test_bad_records_header(self):
        out_dir = self.root / "bad"
        out_dir.mkdir()
        (out_dir / RECORDS_FILE).write_text("t,E\n0,1\n", encoding="utf-8")
        with self.assertRaises(InputError):
            self.store.load_records(out_dir)


if __name__ == "__main__":
    unittest.main()
