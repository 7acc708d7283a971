# Storage Service
import base64
import csv
import io
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from exceptions import StorageError
from schemas import (
    EstimateReport,
    GridSpec,
    InteractionReport,
    Manifest,
    NonlinearitySpec,
    RadialField,
    RpresReport,
    ScatteringResult,
    StrichartzSweepReport,
    Trajectory,
)
from services.radial_service import radial_service
from utils.config_utils import format_float

logger = logging.getLogger(__name__)


def _encode(values: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(values, dtype="<f8").tobytes()).decode("ascii")


def _decode(text: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text.encode("ascii")), dtype="<f8").astype(float)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


class StorageService:
    """Local run directories; every file names its schema"""

    def __init__(self):
        self.written: List[str] = []

    def reset(self) -> None:
        self.written = []

    def _write_text(self, path: Path, text: str) -> Path:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as handle:
                handle.write(text)
        except OSError as e:
            logger.error(f"❌ Write failed: {path}: {e}")
            raise StorageError(f"cannot write {path}: {e}")
        self.written.append(str(path))
        logger.debug(f"💾 Wrote {path}")
        return path

    def _read_text(self, path: Path) -> str:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                return handle.read()
        except OSError as e:
            raise StorageError(f"cannot read {path}: {e}")

    def write_json(self, path: Path, schema: str, payload: Dict[str, Any]) -> Path:
        document = {"schema": schema, **payload}
        return self._write_text(path, json.dumps(document, indent=2, sort_keys=True) + "\n")

    def read_json(self, path: Path, schema: Optional[str] = None) -> Dict[str, Any]:
        try:
            document = json.loads(self._read_text(path))
        except json.JSONDecodeError as e:
            raise StorageError(f"corrupt JSON in {path}: {e}")
        if schema is not None and document.get("schema") != schema:
            raise StorageError(f"{path} has schema {document.get('schema')!r}, expected {schema!r}")
        return document

    def write_csv(self, path: Path, schema: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        buffer = io.StringIO()
        buffer.write(f"# schema: {schema}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        return self._write_text(path, buffer.getvalue())

    def read_csv(self, path: Path, schema: str) -> List[Dict[str, str]]:
        lines = self._read_text(path).splitlines()
        if not lines or lines[0].strip() != f"# schema: {schema}":
            raise StorageError(f"{path} does not start with '# schema: {schema}'")
        return list(csv.DictReader(lines[1:]))

    # Snapshots

    def snapshot_payload(self, field: RadialField, t: float) -> Dict[str, Any]:
        grid = field.grid
        return {
            "t": float(t),
            "n": grid.dimension,
            "r_max": grid.r_max,
            "N": grid.num_points,
            "re": _encode(field.values.real),
            "im": _encode(field.values.imag),
        }

    def write_snapshot(self, path: Path, field: RadialField, t: float = 0.0) -> Path:
        return self.write_json(path, settings.SCHEMA_SNAPSHOT, self.snapshot_payload(field, t))

    def read_snapshot(self, path: Path, grid: Optional[GridSpec] = None) -> RadialField:
        return self.read_snapshot_at(path, grid)[0]

    def read_snapshot_at(self, path: Path, grid: Optional[GridSpec] = None) -> Tuple[RadialField, float]:
        """Snapshot and its time"""
        document = self.read_json(path, settings.SCHEMA_SNAPSHOT)
        try:
            stored = radial_service.build_grid(int(document["n"]), float(document["r_max"]), int(document["N"]))
            values = _decode(document["re"]) + 1j * _decode(document["im"])
        except (KeyError, ValueError, TypeError) as e:
            raise StorageError(f"corrupt snapshot {path}: {e}")
        if grid is not None and stored.key != grid.key:
            raise StorageError(f"snapshot {path} was taken on grid {stored.key}, expected {grid.key}")
        try:
            return RadialField(stored, values), float(document.get("t", 0.0))
        except Exception as e:
            raise StorageError(f"corrupt snapshot {path}: {e}")

    # Trajectories

    def write_monitors(self, path: Path, monitors: Sequence[Dict[str, Optional[float]]]) -> Path:
        rows = ([m["t"], m["mass"], m["h1"], m.get("energy")] for m in monitors)
        return self.write_csv(path, settings.SCHEMA_MONITORS, ["t", "mass", "h1", "energy"], rows)

    def write_trajectory(self, directory: Path, traj: Trajectory) -> Path:
        directory = Path(directory)
        logger.info(f"💾 Saving {len(traj.states)} snapshots to {directory}")
        for i, (t, state) in enumerate(zip(traj.times, traj.states)):
            self.write_snapshot(directory / f"snapshot_{i:05d}.json", state, float(t))
        self.write_monitors(directory / "monitors.csv", traj.monitors)
        self.write_json(directory / "trajectory.json", settings.SCHEMA_SNAPSHOT,
                        {"count": len(traj.states), "dt": traj.dt})
        return directory

    def read_trajectory(self, directory: Path, nonlinearity: NonlinearitySpec) -> Trajectory:
        directory = Path(directory)
        if not directory.is_dir():
            raise StorageError(f"trajectory directory {directory} does not exist")
        index = self.read_json(directory / "trajectory.json", settings.SCHEMA_SNAPSHOT)
        states, times = [], []
        grid = None
        for i in range(int(index.get("count", 0))):
            path = directory / f"snapshot_{i:05d}.json"
            state, t = self.read_snapshot_at(path, grid)
            grid = state.grid
            states.append(state)
            times.append(t)
        if not states:
            raise StorageError(f"trajectory directory {directory} holds no snapshots")
        monitors = []
        for row in self.read_csv(directory / "monitors.csv", settings.SCHEMA_MONITORS):
            monitors.append({
                "t": float(row["t"]),
                "mass": float(row["mass"]),
                "h1": float(row["h1"]),
                "energy": float(row["energy"]) if row.get("energy") else None,
            })
        logger.info(f"📂 Loaded {len(states)} snapshots from {directory}")
        return Trajectory(grid=grid, nonlinearity=nonlinearity, dt=float(index["dt"]),
                          times=np.asarray(times), states=states, monitors=monitors)

    # Reports

    def write_scattering(self, directory: Path, results: Sequence[ScatteringResult],
                         extra: Optional[Dict[str, Any]] = None) -> None:
        directory = Path(directory)
        payload = {"routes": [], **(extra or {})}
        for result in results:
            payload["routes"].append({
                "route": result.route,
                "delta": result.delta,
                "base_time": result.base_time,
                "accepted": result.accepted,
                "cauchy_history": [list(pair) for pair in result.cauchy_history],
                "residual_series": [list(pair) for pair in result.residual_series],
                "psi_free_l2": radial_service.l2_norm(result.psi_free),
                "details": result.details,
            })
            self.write_snapshot(directory / f"psi_free_{result.route}.json", result.psi_free, result.base_time)
            rows = ([r["t"], r["l2"], r["wdelta"], r["a1"], r["a2"], r.get("residual")]
                    for r in result.psi_loc_series)
            self.write_csv(directory / f"psi_loc_{result.route}.csv", settings.SCHEMA_PSI_LOC,
                           ["t", "l2", "wdelta", "a1", "a2", "residual"], rows)
        self.write_json(directory / "scattering_report.json", settings.SCHEMA_SCATTERING, payload)

    def write_estimates(self, directory: Path, reports: Sequence[EstimateReport]) -> None:
        directory = Path(directory)
        rows = ([row.lemma_item, row.params, row.t, row.norm, row.stderr]
                for report in reports for row in report.rows)
        self.write_csv(directory / "estimate_report.csv", settings.SCHEMA_ESTIMATES,
                       ["lemma_item", "params", "t", "norm", "stderr"], rows)
        fits = [report.model_dump(exclude={"rows"}) for report in reports]
        self.write_json(directory / "estimate_fits.json", settings.SCHEMA_ESTIMATES, {"reports": fits})

    def write_observables(self, directory: Path, series: Dict[str, Sequence], rpres: Dict[str, RpresReport]
                          ) -> None:
        directory = Path(directory)
        rows = ([t, name, value] for name, points in series.items() for t, value in points)
        self.write_csv(directory / "observables.csv", settings.SCHEMA_OBSERVABLES, ["t", "name", "value"], rows)
        self.write_json(directory / "rpres_report.json", settings.SCHEMA_OBSERVABLES,
                        {"checks": {name: report.model_dump() for name, report in rpres.items()}})

    def write_interaction(self, directory: Path, report: InteractionReport) -> Path:
        return self.write_json(Path(directory) / "interaction_report.json", settings.SCHEMA_INTERACTION,
                               report.model_dump())

    def write_strichartz(self, directory: Path, report: StrichartzSweepReport) -> Path:
        return self.write_json(Path(directory) / "strichartz_report.json", settings.SCHEMA_STRICHARTZ,
                               report.model_dump())

    def write_ground_state(self, directory: Path, Q: RadialField, summary: Dict[str, float]) -> None:
        directory = Path(directory)
        self.write_snapshot(directory / "ground_state.json", Q, 0.0)
        self.write_json(directory / "ground_state_report.json", settings.SCHEMA_GROUND_STATE, summary)

    def write_config_echo(self, directory: Path, text: str) -> Path:
        return self._write_text(Path(directory) / "config.echo", text)

    def write_manifest(self, directory: Path, manifest: Manifest) -> Path:
        directory = Path(directory)
        payload = manifest.model_dump(by_alias=True)
        payload.pop("schema", None)
        # Paths relative to the run directory, in write order
        payload["files"] = [os.path.relpath(p, directory) for p in manifest.files]
        return self.write_json(directory / "manifest.json", settings.SCHEMA_MANIFEST, payload)


storage_service = StorageService()
