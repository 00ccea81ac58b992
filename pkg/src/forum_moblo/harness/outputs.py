"""
Output files: trace CSVs, summary JSON and tables.

Every file is written atomically (temp file in the destination directory,
then os.replace) and carries the config hash and seed. CSV provenance
lines start with '#' and precede the header.
"""

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from forum_moblo.problems.hyperclean import HypercleaningProblem, hyperclean_frame
from forum_moblo.solver.driver import IterateRecord

logger = logging.getLogger(__name__)

TRACE_TAIL_COLUMNS = (
    "q_tilde",
    "q_exact",
    "kkt_residual",
    "optimality_gap",
    "nu",
    "direction_norm",
    "wall_time_s",
    "workspace_floats",
)

PathLike = Union[str, Path]


def trace_columns(m: int) -> List[str]:
    return ["k", *[f"F_{i}" for i in range(1, m + 1)], *TRACE_TAIL_COLUMNS]


def config_sha256(config: Dict[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def atomic_write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def provenance_lines(provenance: Dict[str, Any]) -> str:
    lines = []
    for key, value in provenance.items():
        rendered = json.dumps(value, sort_keys=True, separators=(",", ":")) if isinstance(value, (dict, list)) else value
        lines.append(f"# {key}: {rendered}\n")
    return "".join(lines)


def trace_frame(records: Sequence[IterateRecord], m: int) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in records], columns=trace_columns(m))


def write_table_csv(path: PathLike, frame: pd.DataFrame, provenance: Optional[Dict[str, Any]] = None) -> Path:
    body = frame.to_csv(index=False, na_rep="", lineterminator="\n")
    written = atomic_write_text(path, provenance_lines(provenance or {}) + body)
    logger.info(f"Wrote {len(frame)} rows to {written}")
    return written


def write_trace_csv(
    path: PathLike,
    records: Sequence[IterateRecord],
    m: int,
    config: Dict[str, Any],
    seed: int,
) -> Path:
    """Trace CSV; None metrics become empty fields. The full config is embedded for replay."""
    provenance = {"config_sha256": config_sha256(config), "seed": seed, "config": config}
    return write_table_csv(path, trace_frame(records, m), provenance)


def read_trace_csv(path: PathLike) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Inverse of write_trace_csv: (rows, provenance with raw string values)."""
    provenance: Dict[str, str] = {}
    skip = 0
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(": ")
            provenance[key] = value
            skip += 1
    return pd.read_csv(path, skiprows=skip), provenance


def write_summary_json(path: PathLike, summary: Dict[str, Any]) -> Path:
    written = atomic_write_text(path, json.dumps(summary, sort_keys=True, indent=2) + "\n")
    logger.info(f"Wrote summary to {written}")
    return written


def dump_hyperclean_csv(problem: HypercleaningProblem, path: PathLike) -> Path:
    return write_table_csv(path, hyperclean_frame(problem), {"seed": problem.spec.seed})
