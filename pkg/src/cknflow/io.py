"""Output helpers: atomic writes, CSV/JSON with schema headers, binary fields, SVG."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1
FIELD_MAGIC = b"CKN1"


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def fmt(x) -> str:
    """Deterministic float formatting (repr round-trips exactly)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def csv_text(schema: str, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {schema}/{SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, schema: str, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    return atomic_write_text(path, csv_text(schema, columns, rows))


def read_csv(path) -> tuple[str, list[dict]]:
    with open(path) as f:
        header = f.readline()
        if not header.startswith("# schema:"):
            raise ValueError(f"{path}: missing schema header")
        rows = list(csv.DictReader(f))
    return header[len("# schema:"):].strip(), rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def json_text(obj: dict) -> str:
    payload = {"schema_version": SCHEMA_VERSION, **_jsonable(obj)}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json(path, obj: dict) -> Path:
    return atomic_write_text(path, json_text(obj))


# ---------------------------------------------------------------------------
# binary field snapshots: magic, int32 n_s, int32 n_ang, float64 s_min, s_max, values


def field_bytes(values: np.ndarray, s_min: float, s_max: float) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ValueError("expected a 2-D field")
    head = FIELD_MAGIC + struct.pack("<iidd", values.shape[0], values.shape[1], s_min, s_max)
    return head + values.tobytes(order="C")


def parse_field_bytes(data: bytes) -> tuple[np.ndarray, float, float]:
    if data[:4] != FIELD_MAGIC:
        raise ValueError("not a CKN1 field file")
    ns, na, s0, s1 = struct.unpack("<iidd", data[4:28])
    vals = np.frombuffer(data[28:], dtype="<f8")
    if vals.size != ns * na:
        raise ValueError("truncated field file")
    return vals.reshape(ns, na).astype(float), s0, s1


# ---------------------------------------------------------------------------
# minimal SVG writer


class Svg:
    def __init__(self, width: int = 640, height: int = 480):
        self.w, self.h = width, height
        self.items: list[str] = []

    def polyline(self, xy, stroke="black", width=1.5, dash=None):
        pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in xy)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{width}"{extra}/>')

    def polygon(self, xy, fill="#999", opacity=1.0):
        pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in xy)
        self.items.append(f'<polygon points="{pts}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>')

    def text(self, x, y, s, size=12):
        s = s.replace("&", "&amp;").replace("<", "&lt;")
        self.items.append(f'<text x="{x:.3f}" y="{y:.3f}" font-size="{size}" font-family="sans-serif">{s}</text>')

    def line(self, x0, y0, x1, y1, stroke="black", width=1.0):
        self.items.append(f'<line x1="{x0:.3f}" y1="{y0:.3f}" x2="{x1:.3f}" y2="{y1:.3f}" '
                          f'stroke="{stroke}" stroke-width="{width}"/>')

    def render(self) -> str:
        body = "\n".join(self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">\n<rect width="100%" height="100%" fill="white"/>\n'
                f"{body}\n</svg>\n")
