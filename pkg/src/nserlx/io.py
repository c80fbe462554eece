"""Serialization: NDJSON diagnostics, CSV tables, spectral snapshots, run manifests.

Floats are written with ``repr``, the shortest string that round-trips the
binary value, independent of locale.

Snapshot layout (all little-endian)::

    magic        7 bytes   b"NSERLX1"
    d            uint8
    N            uint32
    L            float64
    t            float64
    names_len    uint32
    names        names_len bytes, ASCII, comma separated (a,u1..,b,w1..)
    data         complex64, shape (2d+2, N, ..., N//2+1), row-major

The data are the normalized real-FFT half-grid coefficients.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import Grid
from .model import field_names

MAGIC = b"NSERLX1"
_HEADER = struct.Struct("<7sBIddI")


def fmt(x) -> str:
    """Shortest round-trip text for a number (ints and other values pass through ``str``)."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def ndjson_line(obj) -> str:
    return json.dumps(_plain(obj), separators=(",", ":"), allow_nan=False)


class NDJSONWriter:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")

    def write(self, obj) -> None:
        self._fh.write(ndjson_line(obj) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_ndjson(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    return p


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(x) for x in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from exc
    return header, data.reshape(len(body), len(header))


# -- snapshots ----------------------------------------------------------------


def write_snapshot(path: str | Path, grid: Grid, hat: np.ndarray, t: float) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    names = ",".join(field_names(grid.d)).encode("ascii")
    expected = (2 * grid.d + 2,) + grid.spec_shape
    if hat.shape != expected:
        raise ValueError(f"snapshot shape {hat.shape} != {expected}")
    with open(p, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, grid.d, grid.N, float(grid.L), float(t), len(names)))
        fh.write(names)
        fh.write(np.ascontiguousarray(hat, dtype="<c8").tobytes(order="C"))
    return p


def read_snapshot(path: str | Path) -> tuple[Grid, float, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:7] != MAGIC:
        raise ValueError(f"{path}: not a snapshot (bad magic)")
    _, d, n, length, t, nlen = _HEADER.unpack_from(raw)
    grid = Grid(d, n, length)
    off = _HEADER.size + nlen
    names = raw[_HEADER.size : off].decode("ascii").split(",")
    if names != field_names(d):
        raise ValueError(f"{path}: unexpected field order {names}")
    shape = (2 * d + 2,) + grid.spec_shape
    data = np.frombuffer(raw, dtype="<c8", offset=off)
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: truncated payload")
    return grid, t, data.reshape(shape).astype(complex)


# -- manifests ----------------------------------------------------------------


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_text: str
    config_digest: str
    version: str
    started: str = field(default_factory=_now)
    finished: str | None = None
    status: str = "running"
    outputs: list[str] = field(default_factory=list)

    @classmethod
    def start(cls, command: str, config_text: str, version: str) -> RunManifest:
        return cls(command=command, config_text=config_text, config_digest=digest(config_text), version=version)

    def verify(self) -> bool:
        return digest(self.config_text) == self.config_digest

    def write(self, path: str | Path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")
        return p

    def finish(self, path: str | Path, status: str = "ok") -> Path:
        self.finished = _now()
        self.status = status
        return self.write(path)

    @classmethod
    def load(cls, path: str | Path) -> RunManifest:
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))
