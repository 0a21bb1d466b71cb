"""Artifact formats: ensemble CSV and binary, tidy report CSV, canonical JSON.

Floats in text artifacts are written with 17 significant digits, which is exact
for IEEE doubles, so parse -> re-emit reproduces the file byte for byte.

Binary layout (little endian)::

    offset  0  4s   magic b"HTSL"
    offset  4  u32  format version (1)
    offset  8  u64  P, number of paths
    offset 16  u64  columns per path (N + 1 for path values)
    offset 24  f64  grid step
    offset 32  f64[P * columns], row-major
"""

from __future__ import annotations

import io
import json
import math
import struct
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .processes import PathEnsemble

FLOAT_FMT = "%.17g"
MAGIC = b"HTSL"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIQQd")
assert _HEADER.size == 32


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def ensemble_to_csv(ens: PathEnsemble) -> str:
    """One comment line with kind and grid step, then one row per path."""
    buf = io.StringIO()
    buf.write(f"# htsl-ensemble kind={ens.kind} grid_step={_fmt(ens.grid_step)} "
              f"paths={ens.n_paths} columns={ens.values.shape[1]}\n")
    np.savetxt(buf, ens.values, fmt=FLOAT_FMT, delimiter=",")
    return buf.getvalue()


def ensemble_from_csv(text: str) -> PathEnsemble:
    first, _, body = text.partition("\n")
    if not first.startswith("# htsl-ensemble"):
        raise ValueError("missing '# htsl-ensemble' header line")
    fields = dict(tok.split("=", 1) for tok in first.split()[2:])
    cols = int(fields["columns"])
    data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    if data.shape != (int(fields["paths"]), cols):
        raise ValueError(f"expected {fields['paths']} x {cols} values, found {data.shape}")
    return PathEnsemble(data, float(fields["grid_step"]), fields["kind"])


def ensemble_to_bytes(ens: PathEnsemble) -> bytes:
    v = np.ascontiguousarray(ens.values, dtype="<f8")
    return _HEADER.pack(MAGIC, BINARY_VERSION, v.shape[0], v.shape[1], float(ens.grid_step)) + v.tobytes()


def ensemble_from_bytes(blob: bytes, kind: str = "values") -> PathEnsemble:
    """Inverse of :func:`ensemble_to_bytes`; the format does not record ``kind``."""
    if len(blob) < _HEADER.size:
        raise ValueError("truncated header")
    magic, version, paths, cols, step = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != BINARY_VERSION:
        raise ValueError(f"unsupported binary version {version}")
    expected = _HEADER.size + 8 * paths * cols
    if len(blob) != expected:
        raise ValueError(f"payload size {len(blob)} does not match header ({expected})")
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(paths, cols)
    return PathEnsemble(data.astype(float), step if step > 0 else 1.0, kind)


def write_ensemble(ens: PathEnsemble, path: str | Path) -> None:
    """CSV unless the suffix is ``.bin``."""
    path = Path(path)
    if path.suffix == ".bin":
        path.write_bytes(ensemble_to_bytes(ens))
    else:
        path.write_text(ensemble_to_csv(ens))


def read_ensemble(path: str | Path, kind: str = "values") -> PathEnsemble:
    path = Path(path)
    if path.suffix == ".bin":
        return ensemble_from_bytes(path.read_bytes(), kind)
    return ensemble_from_csv(path.read_text())


def tidy_csv(rows, header=("level", "statistic", "quantity", "value")) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) if isinstance(x, float) else str(x) for x in row))
    return "\n".join(lines) + "\n"


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return "unbounded" if obj > 0 else str(obj)
    return obj


def dumps(obj: Any) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline, no NaN/inf literals."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(dumps(obj))


def load_schema(name: str) -> dict[str, Any]:
    """One of the shipped JSON schemas, e.g. ``load_schema("slln_certificate")``."""
    return json.loads(resources.files("htsl").joinpath("schemas", f"{name}.json").read_text())
