"""On-disk formats.

Raster images are 16-bit grayscale PNGs with a JSON sidecar (same stem,
``.json``) recording pitch, distance and the per-file ``scale`` such that
``intensity = png_value * scale``. Complex fields use a small binary layout:

    offset  size  content
    0       8     magic b"SPTYCPLX"
    8       4     uint32 rows
    12      4     uint32 cols
    16      8     float64 pitch [m]
    24      ...   rows*cols pairs of float64 (real, imag), row-major

All integers and floats are little-endian.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .field import ComplexField, RealImage
from .retrieval import RetrievalResult, ScatterMeasurement

__all__ = [
    "MAGIC",
    "write_complex",
    "read_complex",
    "write_raster",
    "read_raster",
    "write_measurement",
    "read_measurement",
    "write_residuals",
    "read_residuals",
]

MAGIC = b"SPTYCPLX"
_HEADER = struct.Struct("<8sIId")


def write_complex(path, field: ComplexField) -> None:
    ny, nx = field.shape
    body = np.empty((ny, nx, 2), dtype="<f8")
    body[..., 0] = field.data.real
    body[..., 1] = field.data.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, ny, nx, field.pitch))
        fh.write(body.tobytes())


def read_complex(path) -> ComplexField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, ny, nx, pitch = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != ny * nx * 2:
        raise ValueError(f"{path}: expected {ny}x{nx} samples, found {body.size // 2}")
    body = body.reshape(ny, nx, 2)
    return ComplexField(body[..., 0] + 1j * body[..., 1], pitch)


def _sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def write_raster(path, data: np.ndarray, meta: dict) -> dict:
    """Save non-negative ``data`` as 16-bit PNG; returns the sidecar record.

    Integer-valued data that fits in 16 bits (photon counts) is stored
    losslessly with ``scale = 1``; otherwise the maximum maps to 65535.
    """
    data = np.asarray(data, dtype=np.float64)
    peak = float(data.max()) if data.size else 0.0
    if peak <= 65535 and np.all(data == np.round(data)):
        scale = 1.0
    else:
        scale = peak / 65535.0 if peak > 0 else 1.0
    Image.fromarray(np.round(data / scale).astype(np.uint16)).save(path)
    record = dict(meta, scale=scale, rows=int(data.shape[0]), cols=int(data.shape[1]))
    _sidecar(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return record


def read_raster(path) -> tuple[np.ndarray, dict]:
    meta = json.loads(_sidecar(path).read_text())
    with Image.open(path) as im:
        arr = np.asarray(im).astype(np.float64)
    return arr * meta["scale"], meta


def write_measurement(path, m: ScatterMeasurement, frame: str = "screen", **extra) -> dict:
    """Write a measurement; ``photon_scale`` (photons per field intensity unit)
    and the observed box of the mask go into the sidecar."""
    meta = {"pitch_m": m.pitch, "distance_m": m.distance, "frame": frame,
            "photon_scale": float(m.intensity.meta.get("photon_scale", 1.0))}
    if m.mask is not None:
        rows = np.flatnonzero(m.mask.any(axis=1))
        cols = np.flatnonzero(m.mask.any(axis=0))
        meta["observed_box"] = [int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1]
    meta.update(extra)
    return write_raster(path, m.intensity.data, meta)


def read_measurement(path) -> tuple[ScatterMeasurement | RealImage, dict]:
    """Load a measurement; camera-frame files come back as a bare ``RealImage``."""
    data, meta = read_raster(path)
    img = RealImage(data, meta["pitch_m"], {"photon_scale": meta.get("photon_scale", 1.0)})
    if meta.get("frame", "screen") == "camera":
        return img, meta
    mask = None
    if "observed_box" in meta:
        r0, r1, c0, c1 = meta["observed_box"]
        mask = np.zeros(data.shape, dtype=bool)
        mask[r0:r1, c0:c1] = True
    return ScatterMeasurement(img, meta["distance_m"], mask), meta


def write_residuals(path, result: RetrievalResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["iteration", "visit", "plane", "residual"])
        n_p = len(result.per_iteration_residual) // max(result.iterations_run, 1)
        for i, r in enumerate(result.per_iteration_residual):
            it, visit = divmod(i, n_p)
            plane = result.plane_order[it][visit] if result.plane_order else visit
            w.writerow([it, visit, plane, repr(float(r))])


def read_residuals(path) -> np.ndarray:
    """Residual column of a residual log, in visit order."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["residual"]) for r in rows])
