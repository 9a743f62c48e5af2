"""Angular spectrum propagation, single-stage and multistage.

The single-stage propagator multiplies the field spectrum by

    H(u, v) = exp(j 2 pi z sqrt(1 / lambda**2 - u**2 - v**2))

with evanescent components zeroed and a band limit that keeps the sampled
transfer-function chirp above its own Nyquist rate, so that long distances on
a finite periodic grid do not wrap around.

The multistage propagator splits the distance into segments and resamples the
field (bicubic) at each segment boundary. Before a downsampling step the fine
segment's transfer function is additionally cut at the next grid's Nyquist
frequency so the decimation does not alias.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.fft as sfft

from .field import ComplexField, GridError, resample_bicubic

__all__ = [
    "PropagationPlan",
    "make_plan",
    "transfer_function",
    "band_limit",
    "asm_propagate",
    "masm_propagate",
    "masm_inverse",
    "next_pow2",
]


def next_pow2(n: int) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(int(n), 1)))))


def band_limit(n: int, pitch: float, wavelength: float, distance: float) -> float:
    """Largest spatial frequency (1/m) whose transfer-function chirp is sampled
    without aliasing on an ``n``-point grid of spacing ``pitch``."""
    size = n * pitch
    return 1.0 / (wavelength * np.sqrt((2.0 * abs(distance) / size) ** 2 + 1.0))


_CACHE_BYTES = 1 << 30
_cache: OrderedDict = OrderedDict()


def _transfer(n, pitch, wavelength, distance, max_freq, dtype_str):
    key = (n, pitch, wavelength, distance, max_freq, dtype_str)
    if key in _cache:
        _cache.move_to_end(key)
        return _cache[key]
    h = _compute_transfer(*key)
    _cache[key] = h
    while sum(v.nbytes for v in _cache.values()) > _CACHE_BYTES and len(_cache) > 1:
        _cache.popitem(last=False)
    return h


def _compute_transfer(n, pitch, wavelength, distance, max_freq, dtype_str):
    fx = sfft.fftfreq(n, d=pitch)
    fy = fx[:, None]
    fx = fx[None, :]
    arg = 1.0 / wavelength ** 2 - fx ** 2 - fy ** 2
    keep = arg > 0
    lim = band_limit(n, pitch, wavelength, distance)
    if max_freq is not None:
        lim = min(lim, max_freq)
    keep &= (np.abs(fx) <= lim) & (np.abs(fy) <= lim)
    phase = 2 * np.pi * distance * np.sqrt(np.where(keep, arg, 0.0))
    h = np.where(keep, np.exp(1j * phase), 0.0).astype(dtype_str)
    h.setflags(write=False)
    return h


def transfer_function(n: int, pitch: float, wavelength: float, distance: float,
                      max_freq: float | None = None, dtype=np.complex128) -> np.ndarray:
    """Angular spectrum transfer function in unshifted FFT order.

    Parameters
    ----------
    n : int
        Samples per axis.
    pitch : float
        Sample spacing [m].
    wavelength : float
        Wavelength [m].
    distance : float
        Signed propagation distance [m]; negative backpropagates.
    max_freq : float, optional
        Extra per-axis frequency cutoff [1/m] (anti-aliasing before decimation).
    """
    return _transfer(int(n), float(pitch), float(wavelength), float(distance),
                     None if max_freq is None else float(max_freq), np.dtype(dtype).str)


def _apply_transfer(data: np.ndarray, h: np.ndarray) -> np.ndarray:
    spec = sfft.fft2(data)
    spec *= h
    return sfft.ifft2(spec, overwrite_x=True)


def asm_propagate(field: ComplexField, wavelength: float, distance: float,
                  max_freq: float | None = None) -> ComplexField:
    """Propagate a square field a signed ``distance`` with the angular spectrum method.

    The output shares the input grid. ``distance == 0`` returns a copy of the
    input without transforming it.
    """
    if wavelength <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    ny, nx = field.shape
    if ny != nx:
        raise GridError(f"angular spectrum propagation needs a square grid, got {ny}x{nx}; pad first")
    if ny < 4:
        raise GridError(f"grid {ny}x{nx} is too small to propagate")
    if distance == 0 and max_freq is None:
        return field.copy()
    h = transfer_function(ny, field.pitch, wavelength, distance, max_freq, field.data.dtype)
    return ComplexField(_apply_transfer(field.data, h), field.pitch)


@dataclass(frozen=True)
class PropagationPlan:
    """Distances, grids and resampling steps for one multistage propagation.

    ``stage_boundaries`` are distances from the input plane (same sign as
    ``distance``) at which the field is resampled by the matching entry of
    ``stage_ratios``. The product of the ratios is ``resample_ratio``.
    """

    wavelength: float
    distance: float
    input_pitch: float
    grid_size: int
    resample_ratio: float = 1.0
    stage_boundaries: tuple[float, ...] = ()
    stage_ratios: tuple[float, ...] = dc_field(default=())

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if self.grid_size < 4:
            raise GridError("grid_size must be at least 4")
        if not 0 < self.resample_ratio <= 1:
            raise ValueError(f"resample_ratio must lie in (0, 1], got {self.resample_ratio}")
        if len(self.stage_boundaries) != len(self.stage_ratios):
            raise ValueError("stage_boundaries and stage_ratios must have equal length")
        bounds = np.asarray(self.stage_boundaries, dtype=float)
        if bounds.size:
            scaled = bounds / self.distance if self.distance != 0 else bounds
            if self.distance == 0 or np.any(scaled < 0) or np.any(scaled > 1) \
                    or np.any(np.diff(scaled) <= 0):
                raise ValueError("stage boundaries must be strictly monotone between 0 and distance")
        if not np.isclose(np.prod(self.stage_ratios), self.resample_ratio, rtol=1e-12):
            raise ValueError("stage ratios do not multiply to resample_ratio")
        n = self.grid_size
        for r in self.stage_ratios:
            if not 0 < r <= 1:
                raise ValueError(f"stage ratio {r} outside (0, 1]")
            m = n * r
            if abs(m - round(m)) > 1e-9 or round(m) < 4:
                raise GridError(f"stage ratio {r} does not map a {n}-grid onto an integer grid >= 4")
            n = int(round(m))

    @property
    def output_pitch(self) -> float:
        return self.input_pitch / self.resample_ratio

    @property
    def output_size(self) -> int:
        return int(round(self.grid_size * self.resample_ratio))

    def segments(self):
        """Yield ``(start, stop, pitch, n, ratio_after)`` for each propagation segment."""
        pos, pitch, n = 0.0, self.input_pitch, self.grid_size
        for b, r in zip(self.stage_boundaries, self.stage_ratios):
            yield pos, b, pitch, n, r
            pos, pitch, n = b, pitch / r, int(round(n * r))
        yield pos, self.distance, pitch, n, None


def make_plan(grid_size: int, input_pitch: float, wavelength: float, distance: float,
              resample_ratio: float = 1.0, stage_boundaries=None) -> PropagationPlan:
    """Build a plan with the default staging.

    With ``resample_ratio < 1`` and no explicit boundaries, a single
    resampling step by the full ratio happens at ``resample_ratio * distance``.
    Explicit boundaries split the ratio evenly (geometric mean) across stages.
    """
    if stage_boundaries is None:
        stage_boundaries = () if resample_ratio == 1 else (resample_ratio * distance,)
    stage_boundaries = tuple(float(b) for b in stage_boundaries)
    k = len(stage_boundaries)
    ratios = tuple([resample_ratio ** (1.0 / k)] * k) if k else ()
    if k and resample_ratio == 1:
        ratios = (1.0,) * k
    return PropagationPlan(float(wavelength), float(distance), float(input_pitch),
                           int(grid_size), float(resample_ratio), stage_boundaries, ratios)


def _check_field(field: ComplexField, n: int, pitch: float, what: str):
    if field.shape != (n, n):
        raise GridError(f"{what} grid {field.shape} does not match plan ({n}, {n})")
    if not np.isclose(field.pitch, pitch, rtol=1e-9):
        raise GridError(f"{what} pitch {field.pitch} does not match plan pitch {pitch}")


def masm_propagate(field: ComplexField, plan: PropagationPlan) -> ComplexField:
    """Forward multistage propagation: target grid -> scatter grid."""
    _check_field(field, plan.grid_size, plan.input_pitch, "input")
    cur = field
    for start, stop, pitch, n, ratio in plan.segments():
        cutoff = None if ratio is None or ratio == 1 else ratio / (2 * pitch)
        cur = asm_propagate(cur, plan.wavelength, stop - start, max_freq=cutoff)
        if ratio is not None and ratio != 1:
            cur = resample_bicubic(cur, ratio)
    return cur


def masm_inverse(field: ComplexField, plan: PropagationPlan) -> ComplexField:
    """Backward multistage propagation: scatter grid -> target grid."""
    _check_field(field, plan.output_size, plan.output_pitch, "scatter-plane")
    cur = field
    for start, stop, pitch, n, ratio in reversed(list(plan.segments())):
        if ratio is not None and ratio != 1:
            cur = resample_bicubic(cur, 1.0 / ratio)
        cutoff = None if ratio is None or ratio == 1 else ratio / (2 * pitch)
        cur = asm_propagate(cur, plan.wavelength, start - stop, max_freq=cutoff)
    return cur
