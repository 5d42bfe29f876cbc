"""
Run store: persistence of experiment outputs under an output root.
Provides the manifest, records and snapshot layout shared by the CLI and the API.

    <run>/manifest.json        canonical JSON of the RunManifest
    <run>/records.csv          observation records, RECORD_COLUMNS order (then pair_E if tracked)
    <run>/snapshots/NNNNN.bin  NLWSNAP1 state snapshots
    <run>/report.json          optional experiment report
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import InputError
from app.physics.model import State
from app.utils.binary_io import decode_snapshot, encode_snapshot
from app.utils.config_loader import canonical_json
from schemas import PAIR_COLUMN, RECORD_COLUMNS, RunManifest

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
RECORDS_FILE = "records.csv"
REPORT_FILE = "report.json"
SNAPSHOT_DIR = "snapshots"


class RunStore:
    """Service for reading and writing run directories."""

    def __init__(self, root: Union[str, Path, None] = None):
        self.root = Path(root if root is not None else settings.NLWAVE_OUT)

    def run_dir(self, subcommand: str, digest: str, seed: int) -> Path:
        """Default directory of a run: <root>/<subcommand>-<digest prefix>-s<seed>."""
        return self.root / f"{subcommand}-{digest[:12]}-s{seed}"

    # Writing
    def persist_run(self, manifest: RunManifest, records: Sequence[Dict[str, float]],
                    out_dir: Union[str, Path], snapshots: Iterable[State] = (),
                    report: Optional[Dict[str, Any]] = None) -> List[str]:
        """
        Write manifest, records, snapshots and report; returns relative paths written.

        Snapshots and a report left in out_dir by an earlier run are removed first.
        """
        out_dir = Path(out_dir)
        written = [RECORDS_FILE]
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            self._clear_outputs(out_dir)
            self._write_records(out_dir / RECORDS_FILE, records)

            snapshots = list(snapshots)
            if snapshots:
                (out_dir / SNAPSHOT_DIR).mkdir(exist_ok=True)
                for index, state in enumerate(snapshots):
                    name = f"{SNAPSHOT_DIR}/{index:05d}.bin"
                    (out_dir / name).write_bytes(encode_snapshot(state.time, state.a, state.b))
                    written.append(name)

            if report is not None:
                (out_dir / REPORT_FILE).write_text(canonical_json(report) + "\n", encoding="utf-8")
                written.append(REPORT_FILE)

            manifest = manifest.model_copy(update={"outputs": [MANIFEST_FILE] + written})
            (out_dir / MANIFEST_FILE).write_text(
                canonical_json(manifest.model_dump(mode="json")) + "\n", encoding="utf-8"
            )
        except OSError as e:
            raise InputError(f"cannot write run output under {out_dir}: {e}") from e

        logger.info("persisted %d records and %d snapshots to %s", len(records), len(snapshots), out_dir)
        return [MANIFEST_FILE] + written

    @staticmethod
    def _clear_outputs(out_dir: Path) -> None:
        snapshot_dir = out_dir / SNAPSHOT_DIR
        if snapshot_dir.is_dir():
            for path in snapshot_dir.glob("*.bin"):
                path.unlink()
        (out_dir / REPORT_FILE).unlink(missing_ok=True)

    @staticmethod
    def _write_records(path: Path, records: Sequence[Dict[str, float]]) -> None:
        columns = list(RECORD_COLUMNS)
        if any(record.get(PAIR_COLUMN) is not None for record in records):
            columns.append(PAIR_COLUMN)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for record in records:
                # repr keeps full round-trip precision; a missing pair_E is written as nan
                writer.writerow([repr(float(record.get(column, float("nan")))) for column in columns])

    # Reading
    def load_manifest(self, out_dir: Union[str, Path]) -> RunManifest:
        path = Path(out_dir) / MANIFEST_FILE
        try:
            return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise InputError(f"cannot read manifest {path}: {e}") from e
        except ValidationError as e:
            raise InputError(f"manifest {path} is malformed: {e}") from e

    @staticmethod
    def load_records(out_dir: Union[str, Path]) -> List[Dict[str, float]]:
        path = Path(out_dir) / RECORDS_FILE
        try:
            with path.open(newline="", encoding="utf-8") as handle:
                reader = csv.reader(handle)
                header = next(reader, None)
                if header not in (RECORD_COLUMNS, RECORD_COLUMNS + [PAIR_COLUMN]):
                    raise InputError(f"{path} has header {header}, expected {RECORD_COLUMNS} (+ {PAIR_COLUMN})")
                return [{column: float(value) for column, value in zip(header, row)} for row in reader]
        except OSError as e:
            raise InputError(f"cannot read records {path}: {e}") from e

    @staticmethod
    def load_snapshots(out_dir: Union[str, Path]) -> List[State]:
        directory = Path(out_dir) / SNAPSHOT_DIR
        if not directory.is_dir():
            return []
        states = []
        for path in sorted(directory.glob("*.bin")):
            time, a, b = decode_snapshot(path.read_bytes())
            states.append(State(a, b, time))
        return states

    def load_run(self, out_dir: Union[str, Path]) -> Tuple[RunManifest, List[Dict[str, float]], List[State]]:
        """Inverse of persist_run."""
        return self.load_manifest(out_dir), self.load_records(out_dir), self.load_snapshots(out_dir)

    def load_report(self, out_dir: Union[str, Path]) -> Optional[Dict[str, Any]]:
        path = Path(out_dir) / REPORT_FILE
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def list_runs(self) -> List[str]:
        """Names of run directories under the root that hold a manifest."""
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir() if (p / MANIFEST_FILE).is_file())

    def resolve(self, run_id: str) -> Path:
        """Directory of a run by name, rejecting anything outside the root."""
        if not run_id or "/" in run_id or "\\" in run_id or run_id in (".", ".."):
            raise InputError(f"invalid run id '{run_id}'")
        path = self.root / run_id
        if not (path / MANIFEST_FILE).is_file():
            raise InputError(f"run '{run_id}' not found under {self.root}")
        return path


# Global run store instance
run_store = RunStore()
