"""Result rows, versioned CSV persistence, and the run manifest.

The results CSV starts with a version line (``#diffpace-results-v1``) so
readers can reject files written by an incompatible schema.  Floats are
written with ``repr`` (shortest round-trip form), which keeps reruns
byte-identical.  The manifest is deterministic provenance: config hash,
package version, seeds; it never contains timestamps or measured durations.
"""

import hashlib
from dataclasses import dataclass
from pathlib import Path

from .. import __version__
from ..errors import ConfigError

SCHEMA_VERSION_LINE = "#diffpace-results-v1"
CSV_COLUMNS = ("method", "snr_db", "alpha", "K", "trial", "nmse_db", "wall_ms", "seed")


@dataclass(frozen=True)
class ResultRow:
    """One estimator evaluation. ``wall_ms`` is 0 unless timing was enabled."""

    method: str
    snr_db: float
    alpha: float
    K: int
    trial: int
    nmse_db: float
    wall_ms: float
    seed: int


def format_float(x: float) -> str:
    return repr(float(x))


def write_rows(path: str | Path, rows: list[ResultRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(SCHEMA_VERSION_LINE + "\n")
        f.write(",".join(CSV_COLUMNS) + "\n")
        for r in rows:
            f.write(",".join([
                r.method, format_float(r.snr_db), format_float(r.alpha),
                str(r.K), str(r.trial), format_float(r.nmse_db),
                format_float(r.wall_ms), str(r.seed),
            ]) + "\n")


def read_rows(path: str | Path) -> list[ResultRow]:
    with open(path, "r", encoding="utf-8") as f:
        version = f.readline().strip()
        if version != SCHEMA_VERSION_LINE:
            raise ConfigError(
                f"{path}: unsupported results schema '{version}' "
                f"(expected '{SCHEMA_VERSION_LINE}')")
        header = f.readline().strip()
        if header != ",".join(CSV_COLUMNS):
            raise ConfigError(f"{path}: unexpected column header '{header}'")
        rows = []
        for line in f:
            parts = line.rstrip("\n").split(",")
            rows.append(ResultRow(
                method=parts[0], snr_db=float(parts[1]), alpha=float(parts[2]),
                K=int(parts[3]), trial=int(parts[4]), nmse_db=float(parts[5]),
                wall_ms=float(parts[6]), seed=int(parts[7]),
            ))
    return rows


def write_summary(path: str | Path, header: list[str], rows: list[list]) -> None:
    """Small aggregate tables (grid surfaces, per-alpha means)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(SCHEMA_VERSION_LINE + "\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(
                format_float(v) if isinstance(v, float) else str(v) for v in row
            ) + "\n")


def config_digest(path: str | Path | None) -> str:
    if path is None:
        return "defaults"
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path: str | Path, subcommand: str, config_path, master_seed: int,
                   extra: dict | None = None) -> None:
    lines = [
        "[run]",
        f"subcommand = {subcommand}",
        f"package_version = {__version__}",
        f"config = {config_path if config_path is not None else '(defaults)'}",
        f"config_sha256 = {config_digest(config_path)}",
        f"master_seed = {master_seed}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
