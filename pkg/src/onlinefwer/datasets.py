"""CSV p-value datasets and per-alpha rejection profiles.

File order is taken as the online testing order; there are deliberately no
reordering options.  The reference data extract is not bundled; use
`fetch_pvalues` with a URL and checksum to pull it locally.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .policies import ConfigError, PolicyConfig, RunAbort, run_procedure

_P_COLUMN_NAMES = ("p", "pvalue", "p_value", "pval")


class DatasetError(ValueError):
    pass


@dataclass
class PValueDataset:
    """Ordered p-values with an optional identifier per row."""

    values: np.ndarray
    ids: Optional[list[str]] = None
    source: str = ""

    @property
    def count(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.count


def _is_number(text: str) -> bool:
    try:
        float(text)
    except (TypeError, ValueError):
        return False
    return True


def _resolve_column(spec, header: Optional[list[str]], width: int, what: str):
    if spec is None:
        return None
    if isinstance(spec, int):
        if not 0 <= spec < width:
            raise DatasetError(f"{what} column index {spec} out of range for {width} columns")
        return spec
    if header is None:
        raise DatasetError(f"{what} column {spec!r} given by name but the file has no header")
    try:
        return header.index(spec)
    except ValueError:
        raise DatasetError(f"{what} column {spec!r} not found in header {header}") from None


def load_pvalues(path, column=None, id_column=None) -> PValueDataset:
    """Read p-values from a CSV file, preserving row order.

    A non-numeric first row (in the selected column) is treated as a header.
    ``column`` picks the p-value column by 0-based index or header name;
    without it, a header column named like "p"/"pvalue" is used, else
    column 0.  Missing, non-numeric or out-of-range entries raise with
    their 1-based line number.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]  # blank lines carry no row
    if not rows:
        return PValueDataset(values=np.empty(0), source=str(path))

    probe = column if isinstance(column, int) else 0
    first = rows[0]
    has_header = (probe < len(first) and not _is_number(first[probe])) or isinstance(column, str)
    header = [c.strip() for c in first] if has_header else None
    data_start = 1 if has_header else 0
    width = len(first)

    col = _resolve_column(column, header, width, "p-value")
    if col is None:
        col = 0
        if header is not None:
            lowered = [h.lower() for h in header]
            for name in _P_COLUMN_NAMES:
                if name in lowered:
                    col = lowered.index(name)
                    break
    idc = _resolve_column(id_column, header, width, "identifier")

    values = np.empty(len(rows) - data_start)
    ids: Optional[list[str]] = [] if idc is not None else None
    for k, row in enumerate(rows[data_start:]):
        line = data_start + k + 1
        if col >= len(row) or row[col].strip() == "":
            raise DatasetError(f"line {line}: missing p-value in column {col}")
        cell = row[col].strip()
        if not _is_number(cell):
            raise DatasetError(f"line {line}: non-numeric p-value {cell!r}")
        p = float(cell)
        if not 0.0 <= p <= 1.0:
            raise DatasetError(f"line {line}: p-value {p!r} outside [0, 1]")
        values[k] = p
        if ids is not None:
            ids.append(row[idc] if idc < len(row) else "")
    return PValueDataset(values=values, ids=ids, source=str(path))


def parse_alpha_grid(spec: str) -> list[float]:
    """Parse "start:stop:step" (inclusive of both ends when step divides the
    range) or a comma-separated list of levels."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"alpha grid must be start:stop:step, got {spec!r}")
        start, stop, step = (float(x) for x in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"bad alpha grid {spec!r}")
        out = []
        k = 0
        while True:
            value = start + k * step
            if value > stop + 1e-9:
                break
            out.append(round(value, 10))
            k += 1
        return out
    return [float(x) for x in spec.split(",") if x.strip()]


@dataclass
class RejectionProfile:
    """Rejection counts per procedure over an alpha grid.

    Cells that abort (inadmissible configuration at that alpha) record the
    reason and leave the count empty; for these policies with fixed gamma,
    tau and lambda, counts are non-decreasing in alpha.
    """

    alpha_grid: list[float]
    counts: dict[str, list[Optional[int]]] = field(default_factory=dict)
    errors: dict[tuple[str, float], str] = field(default_factory=dict)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["procedure", "alpha", "rejections", "error"])
            for name, row in self.counts.items():
                for alpha, count in zip(self.alpha_grid, row):
                    err = self.errors.get((name, alpha), "")
                    writer.writerow([name, repr(alpha), "" if count is None else count, err])
        return path


def apply_profile(dataset: PValueDataset, configs: Sequence[tuple[str, PolicyConfig]],
                  alpha_grid: Sequence[float]) -> RejectionProfile:
    """Run every configured procedure at every alpha over the dataset."""
    profile = RejectionProfile(alpha_grid=list(alpha_grid))
    for name, template in configs:
        row: list[Optional[int]] = []
        for alpha in alpha_grid:
            try:
                cfg = dataclasses.replace(template, alpha=alpha)
                trace = run_procedure(cfg, dataset.values)
                row.append(int(np.sum(trace.rejections)))
            except (ConfigError, RunAbort) as exc:
                profile.errors[(name, alpha)] = str(exc)
                row.append(None)
        profile.counts[name] = row
    return profile


def fetch_pvalues(url: str, sha256: str, dest) -> Path:
    """Download a dataset and verify its SHA-256 before installing it."""
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    tmp = dest.with_suffix(dest.suffix + ".part")
    with urllib.request.urlopen(url) as resp, tmp.open("wb") as out:
        digest = hashlib.sha256()
        while True:
            chunk = resp.read(1 << 16)
            if not chunk:
                break
            digest.update(chunk)
            out.write(chunk)
    actual = digest.hexdigest()
    if actual != sha256.lower():
        tmp.unlink(missing_ok=True)
        raise DatasetError(f"checksum mismatch for {url}: expected {sha256}, got {actual}")
    tmp.replace(dest)
    return dest
