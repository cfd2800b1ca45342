"""Atomic artifact writers and the on-disk basis cache."""

from __future__ import annotations

import csv
import io
import json
import os
import pickle
import tempfile
from pathlib import Path

CACHE_ENV = "HSLOD_CACHE_DIR"
CACHE_MAGIC = b"HSLODBASIS"
CACHE_VERSION = 1


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    _atomic_write(path, text.encode())


def atomic_write_bytes(path, data: bytes) -> None:
    _atomic_write(path, data)


def format_float(x) -> str:
    """Shortest round-trip representation, stable across runs."""
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    atomic_write_text(path, buf.getvalue())


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")


def _json_default(o):
    import numpy as np

    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "hslod"))


def save_basis(basis, path) -> None:
    """Versioned binary: magic, version, header length, JSON header, pickled payload."""
    header = json.dumps(
        {"version": CACHE_VERSION, "coefficient": basis.coefficient_digest, "config": basis.config},
        sort_keys=True,
    ).encode()
    payload = pickle.dumps(basis, protocol=pickle.HIGHEST_PROTOCOL)
    blob = CACHE_MAGIC + CACHE_VERSION.to_bytes(2, "little") + len(header).to_bytes(4, "little") + header + payload
    atomic_write_bytes(path, blob)


def read_basis_header(path) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(len(CACHE_MAGIC) + 6)
        if not head.startswith(CACHE_MAGIC):
            raise ValueError(f"{path} is not a basis cache file")
        n = int.from_bytes(head[-4:], "little")
        return json.loads(fh.read(n))


def load_basis(path, coefficient_digest: str | None = None):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(CACHE_MAGIC):
        raise ValueError(f"{path} is not a basis cache file")
    pos = len(CACHE_MAGIC)
    version = int.from_bytes(blob[pos : pos + 2], "little")
    if version != CACHE_VERSION:
        raise ValueError(f"basis cache version {version} unsupported (expected {CACHE_VERSION})")
    n = int.from_bytes(blob[pos + 2 : pos + 6], "little")
    header = json.loads(blob[pos + 6 : pos + 6 + n])
    if coefficient_digest is not None and header["coefficient"] != coefficient_digest:
        raise ValueError("basis cache was built for a different coefficient")
    return pickle.loads(blob[pos + 6 + n :])
