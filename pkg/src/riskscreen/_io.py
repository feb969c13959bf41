"""Deterministic CSV/JSON writers shared by the pipeline stages.

CSV artifacts start with one ``#`` provenance line; readers skip ``#`` lines.
Floats are written with ``repr`` so reruns are byte-identical and values
round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


def fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x == 0.0:
            return "0.0"  # normalizes -0.0
        return repr(x)
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def provenance_line(prov: dict | None) -> str | None:
    if not prov:
        return None
    return "# " + " ".join(f"{k}={prov[k]}" for k in sorted(prov))


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    provenance: dict | None = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        line = provenance_line(provenance)
        if line:
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Return ``(header, rows)`` as strings, skipping ``#`` comment lines."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [r for r in reader if r]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and obj == 0.0:
        return 0.0
    return obj


def write_json(path: str | Path, obj: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
