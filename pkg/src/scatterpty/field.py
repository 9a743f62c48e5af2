"""Sampled field containers and the grid utilities shared by every module.

Grid convention: for a grid of ``N`` samples the optical axis sits at index
``N // 2``, so physical coordinates are ``(i - N // 2) * pitch``. For even
``N`` this is the zero-frequency position used by ``numpy.fft.fftshift``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ComplexField",
    "RealImage",
    "GridError",
    "centered_coords",
    "resample_bicubic",
    "energy",
    "rect",
    "rect_window",
    "nrmse",
    "pad_to",
    "crop_center",
]


class GridError(ValueError):
    """Raised for degenerate or mismatched sampling grids."""


def _check_pitch(pitch: float) -> float:
    pitch = float(pitch)
    if not np.isfinite(pitch) or pitch <= 0:
        raise GridError(f"pitch must be positive and finite, got {pitch!r}")
    return pitch


@dataclass
class ComplexField:
    """Complex amplitudes on a square-pixel Cartesian grid.

    Parameters
    ----------
    data : ndarray
        2-D complex array indexed ``[row, col]`` = ``[y, x]``.
    pitch : float
        Sample spacing in meters.
    """

    data: np.ndarray
    pitch: float

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or min(data.shape) < 1:
            raise GridError(f"field data must be a non-empty 2-D array, got shape {data.shape}")
        if not np.iscomplexobj(data):
            data = data.astype(np.complex128)
        self.data = data
        self.pitch = _check_pitch(self.pitch)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def origin(self) -> tuple[int, int]:
        """Sample index of the optical axis."""
        return self.data.shape[0] // 2, self.data.shape[1] // 2

    @property
    def extent(self) -> tuple[float, float]:
        return self.data.shape[0] * self.pitch, self.data.shape[1] * self.pitch

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(y, x)`` 1-D physical coordinate vectors in meters."""
        ny, nx = self.shape
        return centered_coords(ny, self.pitch), centered_coords(nx, self.pitch)

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.data)

    @property
    def intensity(self) -> np.ndarray:
        return self.data.real ** 2 + self.data.imag ** 2

    def copy(self) -> "ComplexField":
        return ComplexField(self.data.copy(), self.pitch)

    def to_image(self) -> "RealImage":
        return RealImage(self.intensity, self.pitch)


@dataclass
class RealImage:
    """Non-negative real image, e.g. a recorded irradiance ``|psi|**2``."""

    data: np.ndarray
    pitch: float
    meta: dict = dc_field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or min(data.shape) < 1:
            raise GridError(f"image data must be a non-empty 2-D array, got shape {data.shape}")
        if np.any(data < 0):
            raise ValueError("image entries must be non-negative")
        self.data = data
        self.pitch = _check_pitch(self.pitch)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def centered_coords(n: int, pitch: float) -> np.ndarray:
    return (np.arange(n) - n // 2) * pitch


def _catmull_rom(t: np.ndarray) -> np.ndarray:
    """Cubic convolution kernel with a = -0.5."""
    a = -0.5
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    tn = t[near]
    out[near] = (a + 2) * tn ** 3 - (a + 3) * tn ** 2 + 1
    tf = t[far]
    out[far] = a * tf ** 3 - 5 * a * tf ** 2 + 8 * a * tf - 4 * a
    return out


@lru_cache(maxsize=64)
def _bicubic_matrix(n_in: int, n_out: int, step: float, dtype: str = "<f8") -> sp.csr_matrix:
    # output sample k sits at input fractional index n_in//2 + (k - n_out//2) * step
    src = n_in // 2 + (np.arange(n_out) - n_out // 2) * step
    base = np.floor(src).astype(np.int64)
    frac = src - base
    rows, cols, vals = [], [], []
    for tap in (-1, 0, 1, 2):
        w = _catmull_rom(frac - tap)
        idx = np.clip(base + tap, 0, n_in - 1)
        rows.append(np.arange(n_out))
        cols.append(idx)
        vals.append(w)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_out, n_in),
    )
    # duplicate entries from edge clamping are summed by the conversion
    mat = mat.tocsr()
    mat.eliminate_zeros()
    return mat.astype(dtype)


def resample_bicubic(field: ComplexField, ratio: float) -> ComplexField:
    """Resample a field onto a grid ``ratio`` times as dense.

    The output pitch is ``field.pitch / ratio`` and the output has
    ``round(ratio * N)`` samples per axis, both grids sharing the optical
    axis. Catmull-Rom weights with edge clamping; real and imaginary parts
    are interpolated independently (the weights are real).
    """
    ratio = float(ratio)
    if not np.isfinite(ratio) or ratio <= 0:
        raise GridError(f"resampling ratio must be positive, got {ratio!r}")
    ny, nx = field.shape
    my, mx = int(round(ratio * ny)), int(round(ratio * nx))
    if my < 4 or mx < 4:
        raise GridError(f"resampling to {my}x{mx} leaves a degenerate grid (< 4x4)")
    if ratio == 1.0:
        return field.copy()
    step = 1.0 / ratio
    real = np.finfo(field.data.dtype).dtype.str
    ry = _bicubic_matrix(ny, my, step, real)
    rxt = _bicubic_matrix(nx, mx, step, real).T.tocsr()
    out = ry @ field.data
    out = np.asarray(out @ rxt)
    return ComplexField(out, field.pitch / ratio)


def energy(field: ComplexField) -> float:
    """Discrete energy ``sum |f|**2 * pitch**2``.

    Summation is numpy's pairwise reduction over the flattened array, which
    is deterministic for a given array layout.
    """
    return float(np.sum(field.intensity) * field.pitch ** 2)


def rect(x: np.ndarray) -> np.ndarray:
    """Rectangle function: 1 inside ``|x| < 1/2``, 1/2 on the edge, 0 outside."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    return np.where(ax < 0.5, 1.0, np.where(ax == 0.5, 0.5, 0.0))


def _rect_profile(n: int, width: int) -> np.ndarray:
    m = np.arange(n) - n // 2
    # integer arithmetic for the edge test: |m/width| == 1/2  <=>  2|m| == width
    prof = np.where(2 * np.abs(m) < width, 1.0, 0.0)
    prof[2 * np.abs(m) == width] = 0.5
    return prof


def rect_window(field: ComplexField, a: int, b: int) -> ComplexField:
    """Multiply ``f[m, n]`` by ``rect(m / a) * rect(n / b)``.

    ``a`` counts samples along the first (row) axis and ``b`` along the
    second, both measured from the grid center.
    """
    a, b = int(a), int(b)
    ny, nx = field.shape
    if a <= 0 or b <= 0:
        raise ValueError(f"support sizes must be positive, got a={a}, b={b}")
    if a > ny or b > nx:
        raise ValueError(f"support {a}x{b} does not fit grid {ny}x{nx}")
    real = np.finfo(field.data.dtype).dtype
    win = np.outer(_rect_profile(ny, a), _rect_profile(nx, b)).astype(real)
    return ComplexField(field.data * win, field.pitch)


def nrmse(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Relative L2 error ``||estimate - reference|| / ||reference||``."""
    estimate = np.asarray(estimate)
    reference = np.asarray(reference)
    if estimate.shape != reference.shape:
        raise GridError(f"shape mismatch {estimate.shape} vs {reference.shape}")
    den = np.linalg.norm(reference)
    num = np.linalg.norm(estimate - reference)
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return float(num / den)


def pad_to(field: ComplexField, shape: tuple[int, int]) -> ComplexField:
    """Zero-pad symmetrically so the optical axis keeps its ``N // 2`` index."""
    ny, nx = field.shape
    my, mx = shape
    if my < ny or mx < nx:
        raise GridError(f"cannot pad {field.shape} to smaller {shape}")
    out = np.zeros((my, mx), dtype=field.data.dtype)
    oy, ox = my // 2 - ny // 2, mx // 2 - nx // 2
    out[oy:oy + ny, ox:ox + nx] = field.data
    return ComplexField(out, field.pitch)


def crop_center(data: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Centered crop of a 2-D array, inverse of :func:`pad_to`."""
    ny, nx = data.shape
    my, mx = shape
    if my > ny or mx > nx:
        raise GridError(f"crop {shape} larger than array {data.shape}")
    oy, ox = ny // 2 - my // 2, nx // 2 - mx // 2
    return data[oy:oy + my, ox:ox + mx]
