"""Serialization helpers: tidy CSV/JSON tables, checkpoints, data loading.

Floats are written with 17 significant digits so parsing a written table
reproduces the original values bit for bit, which is what makes repeated
runs byte-comparable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, is_dataclass

import numpy as np

from .pvae import LinearPvae

_CHECKPOINT_VERSION = 1


def format_float(x: float) -> str:
    """Round-trip-safe decimal rendering (17 significant digits)."""
    return "%.17g" % x


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return str(value)


def _row_dict(row) -> dict:
    if is_dataclass(row):
        return asdict(row)
    return dict(row)


def rows_to_csv(rows, path: str) -> None:
    """Write a list of flat dataclasses/dicts as headered CSV.

    Column order follows the first row's field order; None becomes an
    empty cell.  String fields must not contain commas (none do).
    """
    if not rows:
        raise ValueError("no rows to write")
    dicts = [_row_dict(r) for r in rows]
    cols = list(dicts[0].keys())
    lines = [",".join(cols)]
    for d in dicts:
        if list(d.keys()) != cols:
            raise ValueError("rows must share one column set")
        lines.append(",".join(_cell(d[c]) for c in cols))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _json_scalar(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if not np.isfinite(x):
            return "null"
        return format_float(x)
    return json.dumps(str(value))


def rows_to_json(rows, path: str) -> None:
    """Write rows as a JSON array of flat objects, floats at 17 digits."""
    if not rows:
        raise ValueError("no rows to write")
    chunks = []
    for row in rows:
        d = _row_dict(row)
        body = ", ".join(f"{json.dumps(k)}: {_json_scalar(v)}" for k, v in d.items())
        chunks.append("  {" + body + "}")
    with open(path, "w") as fh:
        fh.write("[\n" + ",\n".join(chunks) + "\n]\n")


def parse_csv(path: str) -> list[dict]:
    """Read a headered CSV back into dicts, inferring int/float/None/str."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() != ""]
    if not lines:
        raise ValueError(f"empty table: {path}")
    cols = lines[0].split(",")
    out = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(cols):
            raise ValueError(f"ragged row in {path}: {ln!r}")
        out.append({c: _infer(v) for c, v in zip(cols, cells)})
    return out


def _infer(text: str):
    if text == "":
        return None
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def save_checkpoint(model: LinearPvae, path: str) -> None:
    """Persist a model as a versioned npz archive."""
    np.savez(
        path,
        version=np.int64(_CHECKPOINT_VERSION),
        enc_weights=model.enc_weights,
        dec_weights=model.dec_weights,
        prior_lograte=model.prior_lograte,
    )


def load_checkpoint(path: str) -> LinearPvae:
    with np.load(path) as archive:
        version = int(archive["version"])
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return LinearPvae(
            archive["enc_weights"].copy(),
            archive["dec_weights"].copy(),
            archive["prior_lograte"].copy(),
        )


def load_data(path: str) -> np.ndarray:
    """Load an n x D data matrix from .npy or headered CSV."""
    if path.endswith(".npy"):
        arr = np.load(path)
    elif path.endswith(".csv"):
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    else:
        raise ValueError(f"unsupported data format: {path} (need .npy or .csv)")
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("data must be a 2-d matrix")
    return arr
