"""Result files: trace CSVs, JSON reports, Q-table persistence and the run manifest.

Result files contain no timestamps so reruns are byte-identical; wall-clock
times live only in ``manifest.json``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path

import numpy as np

from . import __version__
from .harness import EpisodeLog
from .rl_agent import N_ACTIONS, N_STATES, LearningParams, QTable

TRACE_HEADER = (
    "t_min",
    "bv_true_ml",
    "bv_measured_ml",
    "state_id",
    "action_idx",
    "dose_ml_kg_h",
    "u_ml_min",
    "reward",
)


def fmt(x: float) -> str:
    """Shortest round-trip decimal, never in exponent notation."""
    return np.format_float_positional(float(x), unique=True, trim="0")


def write_trace_csv(log: EpisodeLog, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in log.records:
            w.writerow(
                [fmt(r.t), fmt(r.bv_true), fmt(r.bv_measured), r.state_id, r.action_index, fmt(r.dose), fmt(r.u), fmt(r.reward)]
            )
    return path


def read_trace_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return obj.as_posix()
    if hasattr(obj, "as_dict"):
        return _jsonable(obj.as_dict())
    return obj


def write_report_json(report, path) -> Path:
    """Write any report (dict or object with ``as_dict``) as sorted, indented JSON."""
    path = Path(path)
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def write_qtable(q: QTable, path, learning: LearningParams, metadata: dict | None = None) -> tuple[Path, Path]:
    """Write the 18x6 value table as CSV plus a ``.json`` sidecar.

    The sidecar holds the learning parameters, training metadata and the visit
    counts.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in q.values:
            w.writerow([fmt(v) for v in row])
    sidecar = path.with_suffix(".json")
    write_report_json(
        {
            "learning": {
                "gamma": learning.gamma,
                "epsilon": learning.epsilon,
                "mu0": learning.mu0,
                "mu_half_every": learning.mu_half_every,
            },
            "metadata": metadata or {},
            "visit_counts": q.visit_counts.tolist(),
        },
        sidecar,
    )
    return path, sidecar


def read_qtable(path) -> tuple[QTable, dict]:
    """Load a Q-table CSV and, when present, its sidecar (returned as a dict)."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    if len(rows) != N_STATES or any(len(r) != N_ACTIONS for r in rows):
        raise ValueError(f"{path}: expected {N_STATES} rows of {N_ACTIONS} values")
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.is_file() else {}
    counts = meta.get("visit_counts")
    q = QTable(np.array(rows), np.array(counts) if counts is not None else np.zeros((N_STATES, N_ACTIONS), dtype=np.int64))
    return q, meta


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """``manifest.json`` for one output directory.

    Written once up front with the planned outputs and rewritten on completion;
    :meth:`finish` refuses to mark the run complete if a listed file is missing.
    """

    FILENAME = "manifest.json"

    def __init__(self, out_dir, command: str, config: dict, seed: int, outputs: list[str]):
        self.out_dir = Path(out_dir)
        self.data = {
            "command": command,
            "tool_version": __version__,
            "master_seed": seed,
            "config": config,
            "outputs": sorted(outputs),
            "status": "running",
            "started_at": _now(),
            "finished_at": None,
        }

    @property
    def path(self) -> Path:
        return self.out_dir / self.FILENAME

    def write(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return write_report_json(self.data, self.path)

    def finish(self) -> Path:
        missing = [p for p in self.data["outputs"] if not (self.out_dir / p).is_file()]
        if missing:
            raise FileNotFoundError(f"outputs listed in the manifest were not written: {missing}")
        self.data["status"] = "complete"
        self.data["finished_at"] = _now()
        return self.write()
