from pathlib import Path
from typing import Dict, Iterable, List, Sequence
import logging

import numpy as np

from vortwave.errors import ConfigError
from vortwave.models import RunReport

logger = logging.getLogger(__name__)

TIMESERIES_COLUMNS = ["t", "mass", "hamiltonian_or_nan", "margin_min", "eta_l2", "psi_l2"]


class RunStore:
    """Output directory of one run: CSV tables, snapshots, report and binary dumps"""

    def __init__(self, out_dir, binary: bool = False):
        self.out_dir = Path(out_dir)
        self.binary = binary
        self.written: List[str] = []
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            logger.info(f"✅ Output directory ready: {self.out_dir}")
        except OSError as e:
            logger.error(f"❌ Cannot create output directory {self.out_dir}: {e}")
            raise ConfigError(f"cannot create output directory {self.out_dir}: {e}")

    def _record(self, path: Path):
        self.written.append(path.name)
        logger.info(f"💾 Wrote {path.name}")

    def save_table(self, name: str, columns: Sequence[str], rows) -> Path:
        """Write rows as CSV with exact float formatting"""
        path = self.out_dir / name
        data = np.atleast_2d(np.asarray(rows, dtype=float))
        if data.size == 0:
            data = np.zeros((0, len(columns)))
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(columns), comments="")
        self._record(path)
        if self.binary:
            self.save_binary(path.stem, data)
        return path

    def save_binary(self, stem: str, data: np.ndarray) -> Path:
        """Little-endian float64 dump, row-major"""
        path = self.out_dir / f"{stem}.bin"
        np.ascontiguousarray(data, dtype="<f8").tofile(path)
        self._record(path)
        return path

    def save_timeseries(self, trajectory) -> Path:
        rows = np.column_stack([
            trajectory.t,
            trajectory.mass,
            trajectory.hamiltonian,
            trajectory.margin_min,
            trajectory.eta_l2,
            trajectory.psi_l2,
        ])
        return self.save_table("timeseries.csv", TIMESERIES_COLUMNS, rows)

    def save_snapshots(self, trajectory) -> List[Path]:
        paths = []
        for index, state in enumerate(trajectory.states):
            rows = np.column_stack([state.grid.x, state.eta.values, state.psi.values])
            paths.append(self.save_table(f"snapshot_{index:04d}.csv", ["x", "eta", "psi"], rows))
        return paths

    def save_records(self, name: str, records: Iterable[Dict[str, float]]) -> Path:
        """Write a list of flat numeric dicts sharing the same keys"""
        records = list(records)
        columns = list(records[0]) if records else []
        rows = [[record[c] for c in columns] for record in records]
        return self.save_table(name, columns, rows)

    def save_report(self, report: RunReport) -> Path:
        path = self.out_dir / "report.json"
        report.outputs = sorted(set(self.written + ["report.json"]))
        path.write_text(report.model_dump_json(indent=2))
        self._record(path)
        return path
