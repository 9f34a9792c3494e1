"""CSV and JSON writers and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field
from functools import cache
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import scipy

from .const import LOGGER, SCHEMA_VERSION

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping, Sequence

    from .path_engine import PathEnsemble
    from .solver import Solution

MANIFEST_FILE = "manifest.json"
FORMAT_CSV = "csv"
FORMAT_JSON = "json"
FORMATS = (FORMAT_CSV, FORMAT_JSON)


@cache
def package_version() -> str:
    """Version from the packaged manifest."""
    manifest = json.loads(
        Path(__file__).with_name(MANIFEST_FILE).read_text(encoding="utf-8")
    )
    return str(manifest["version"])


def versions() -> dict[str, str]:
    """Versions of the package and its numerical stack."""
    return {
        "gbdsde_lab": package_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_records_csv(
    path: Path, records: Sequence[Mapping[str, Any]], columns: Sequence[str] | None = None
) -> Path:
    """Write dict rows with a header; columns default to the first row's keys."""
    header = list(columns or (records[0].keys() if records else []))
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow({key: _cell(record.get(key)) for key in header})
    LOGGER.debug("Wrote %d rows to %s", len(records), path)
    return path


def write_ensemble_csv(path: Path, ensemble: PathEnsemble) -> Path:
    """
    Write one row per path and step.

    Columns: path, step, t, dB, marks (jump sizes joined by ``;``),
    dH_1..dH_m and A at the right end of the step.
    """
    grid = ensemble.grid
    m = ensemble.increments.m
    header = ["path", "step", "t", "dB", "marks"]
    header += [f"dH_{i + 1}" for i in range(m)] + ["A"]
    times = grid.times
    clock = ensemble.clock.values
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for p in range(ensemble.size):
            counts = ensemble.counts[p]
            dh = ensemble.increments.teugels[p]
            for k in range(grid.steps):
                marks = ";".join(
                    _cell(size)
                    for size, count in zip(ensemble.sizes, counts[k], strict=True)
                    for _ in range(int(count))
                )
                writer.writerow(
                    [p, k, _cell(times[k + 1]), _cell(ensemble.brownian[p, k]), marks]
                    + [_cell(value) for value in dh[k]]
                    + [_cell(clock[k + 1])]
                )
    LOGGER.debug("Wrote %d paths to %s", ensemble.size, path)
    return path


def solution_columns(m: int) -> list[str]:
    """Column names of the solution table."""
    return ["path", "step", "t", "node", "counts", "Y"] + [f"Z_{i + 1}" for i in range(m)]


def solution_records(solutions: Sequence[Solution]) -> list[dict[str, Any]]:
    """
    One record per Brownian path, step and lattice node.

    ``counts`` joins the per-atom jump counts with ``;``. Z is missing on
    the terminal layer.
    """
    records = []
    for p, solution in enumerate(solutions):
        lattice = solution.lattice
        times = lattice.grid.times
        for k in range(lattice.steps + 1):
            for node, counts in enumerate(lattice.states[k]):
                record: dict[str, Any] = {
                    "path": p,
                    "step": k,
                    "t": float(times[k]),
                    "node": node,
                    "counts": ";".join(str(int(c)) for c in counts),
                    "Y": float(solution.y[k][node]),
                }
                if k < lattice.steps:
                    for i, value in enumerate(solution.z[k][node]):
                        record[f"Z_{i + 1}"] = float(value)
                records.append(record)
    return records


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    """Write a versioned, key-sorted JSON document."""
    document = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(
        json.dumps(document, indent=2, sort_keys=True, default=_jsonable) + "\n",
        encoding="utf-8",
    )
    return path


def write_table(
    out_dir: Path,
    name: str,
    records: Sequence[Mapping[str, Any]],
    fmt: str,
    columns: Sequence[str] | None = None,
) -> Path:
    """Write records as ``name.csv`` or as the ``rows`` of ``name.json``."""
    if fmt == FORMAT_CSV:
        return write_records_csv(out_dir / f"{name}.csv", records, columns)
    return write_json(out_dir / f"{name}.json", {"rows": list(records)})


def file_digest(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass(slots=True)
class RunManifest:
    """
    Record of one run: what was configured, what came out, how long it took.

    Every output file is listed with its digest so a rerun can be checked
    byte for byte.
    """

    command: str
    config_hash: str
    seed: int
    brownian_paths: list[int]
    versions: dict[str, str] = field(default_factory=versions)
    wall_clock: float = 0.0
    verdicts: dict[str, str] = field(default_factory=dict)
    files: list[dict[str, str]] = field(default_factory=list)

    def add_file(self, path: Path) -> None:
        """List an output file with its digest."""
        self.files.append({"name": path.name, "sha256": file_digest(path)})

    def add_files(self, paths: Iterable[Path]) -> None:
        """List several output files."""
        for path in paths:
            self.add_file(path)

    def as_dict(self) -> dict[str, Any]:
        """Return the JSON-ready mapping."""
        return asdict(self)

    def write(self, out_dir: Path) -> Path:
        """Write ``manifest.json`` into ``out_dir``."""
        return write_json(out_dir / MANIFEST_FILE, self.as_dict())


def _cell(value: Any) -> str:
    """Render a CSV cell; floats use the shortest round-tripping form."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    msg = f"Cannot serialize {type(value).__name__}"
    raise TypeError(msg)
