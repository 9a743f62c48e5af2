"""Multi-plane error-reduction phase retrieval for scatter ptychography.

One iteration visits every measurement plane once, in a freshly shuffled
order. A visit windows the target estimate to its known support (optionally
forcing it real and non-negative), propagates it to the plane, swaps in the
measured amplitude while keeping the propagated phase, and propagates back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .field import ComplexField, GridError, RealImage, rect_window
from .propagation import PropagationPlan, make_plan, masm_inverse, masm_propagate

__all__ = [
    "ScatterMeasurement",
    "RetrievalConfig",
    "RetrievalResult",
    "NumericalFailure",
    "initialize_estimate",
    "project_data",
    "apply_constraints",
    "run_retrieval",
    "plan_for",
]

log = logging.getLogger(__name__)


class NumericalFailure(RuntimeError):
    """A non-finite value appeared in the estimate."""

    def __init__(self, iteration: int, plane: int):
        super().__init__(f"non-finite field at iteration {iteration}, plane {plane}")
        self.iteration = iteration
        self.plane = plane


@dataclass
class ScatterMeasurement:
    """An irradiance image on the scatter plane and its target distance ``z``.

    ``mask`` marks observed samples; samples outside it are left to the
    propagated estimate during the data projection. ``None`` means the whole
    grid was observed.
    """

    intensity: RealImage
    distance: float
    mask: np.ndarray | None = None
    _amplitude: np.ndarray | None = dc_field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError(f"measurement distance must be positive, got {self.distance}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.intensity.shape:
                raise GridError("mask shape does not match intensity")

    @property
    def amplitude(self) -> np.ndarray:
        if self._amplitude is None:
            self._amplitude = np.sqrt(self.intensity.data)
        return self._amplitude

    @property
    def pitch(self) -> float:
        return self.intensity.pitch

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensity.shape


@dataclass
class RetrievalConfig:
    support_a: int
    support_b: int
    iterations: int = 200
    resample_ratio: float = 0.25
    target_pitch: float = 10e-6
    seed: int = 0
    realness_constraint: bool = True
    plane_order_shuffle: bool = True
    wavelength: float = 532e-9
    stage_boundaries: tuple[float, ...] | None = None  # per-plane override as fractions of z
    precision: str = "double"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.support_a < 1 or self.support_b < 1:
            raise ValueError("support sizes must be positive")
        if not 0 < self.resample_ratio <= 1:
            raise ValueError(f"resample_ratio must lie in (0, 1], got {self.resample_ratio}")
        if not self.target_pitch > 0 or not self.wavelength > 0:
            raise ValueError("target_pitch and wavelength must be positive")
        if self.precision not in ("double", "single"):
            raise ValueError(f"precision must be 'double' or 'single', got {self.precision!r}")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.complex128 if self.precision == "double" else np.complex64)


@dataclass
class RetrievalResult:
    estimate: ComplexField
    per_iteration_residual: list[float]
    iterations_run: int
    plane_order: list[list[int]] = dc_field(default_factory=list)

    def residual_table(self, n_planes: int) -> np.ndarray:
        """Residuals reshaped to ``(iterations_run, n_planes)`` in visit order."""
        return np.asarray(self.per_iteration_residual).reshape(self.iterations_run, n_planes)


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_ss, shuffle_ss = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss)


def plan_for(measurement: ScatterMeasurement, config: RetrievalConfig) -> PropagationPlan:
    """Propagation plan from the target grid to ``measurement``'s plane."""
    ny, nx = measurement.shape
    if ny != nx:
        raise GridError(f"measurements must be square, got {ny}x{nx}")
    n = ny / config.resample_ratio
    if abs(n - round(n)) > 1e-9:
        raise GridError(f"measurement grid {ny} is not an integer multiple of ratio {config.resample_ratio}")
    if not np.isclose(measurement.pitch, config.target_pitch / config.resample_ratio, rtol=1e-6):
        raise GridError(
            f"measurement pitch {measurement.pitch} != target pitch / ratio "
            f"({config.target_pitch / config.resample_ratio})")
    bounds = None
    if config.stage_boundaries is not None:
        bounds = [b * measurement.distance for b in config.stage_boundaries]
    return make_plan(int(round(n)), config.target_pitch, config.wavelength,
                     measurement.distance, config.resample_ratio, bounds)


def initialize_estimate(measurement: ScatterMeasurement, config: RetrievalConfig,
                        rng: np.random.Generator | None = None,
                        phase: np.ndarray | None = None) -> ComplexField:
    """Backpropagate the measured amplitude with a random phase.

    The phase is drawn i.i.d. from the standard normal distribution using
    ``rng`` (or the initialization stream of ``config.seed``). Passing
    ``phase`` replaces the draw.
    """
    if phase is None:
        if rng is None:
            rng = _streams(config.seed)[0]
        phase = rng.standard_normal(measurement.shape)
    psi = measurement.amplitude * np.exp(1j * phase)
    psi = ComplexField(psi.astype(config.dtype), measurement.pitch)
    return masm_inverse(psi, plan_for(measurement, config))


def project_data(field: ComplexField, measurement: ScatterMeasurement) -> ComplexField:
    """Replace the field modulus with the measured amplitude, keeping its phase.

    A sample that is exactly zero is given phase 0.
    """
    if field.shape != measurement.shape:
        raise GridError(f"field grid {field.shape} does not match measurement {measurement.shape}")
    data = field.data
    mag = np.abs(data)
    amp = measurement.amplitude.astype(mag.dtype, copy=False)
    nz = mag > 0
    out = np.where(nz, data * np.divide(amp, mag, out=np.zeros_like(mag), where=nz), amp)
    if measurement.mask is not None:
        out = np.where(measurement.mask, out, data)
    return ComplexField(out.astype(data.dtype, copy=False), field.pitch)


def apply_constraints(field: ComplexField, config: RetrievalConfig) -> ComplexField:
    """Object-domain projection: optional modulus (real, non-negative), then support."""
    if config.realness_constraint:
        field = ComplexField(np.abs(field.data).astype(field.data.dtype), field.pitch)
    return rect_window(field, config.support_a, config.support_b)


def amplitude_residual(field: ComplexField, measurement: ScatterMeasurement) -> float:
    """Relative L2 misfit between ``|field|`` and the measured amplitude on observed samples."""
    diff = np.abs(field.data) - measurement.amplitude
    ref = measurement.amplitude
    if measurement.mask is not None:
        diff = diff[measurement.mask]
        ref = ref[measurement.mask]
    den = np.linalg.norm(ref)
    num = np.linalg.norm(diff)
    if den == 0:
        return float(num)
    return float(num / den)


def run_retrieval(measurements: Sequence[ScatterMeasurement], config: RetrievalConfig,
                  initial_phase: np.ndarray | None = None,
                  callback: Callable[[int, ComplexField], None] | None = None) -> RetrievalResult:
    """Recover the target field from scatter images at several distances.

    Parameters
    ----------
    measurements : sequence of ScatterMeasurement
        One per plane; all on the same grid and pitch.
    config : RetrievalConfig
        Support, iteration count, resampling ratio, seed, constraints.
    initial_phase : ndarray, optional
        Replaces the random starting phase on the first plane (testing hook).
    callback : callable, optional
        Called as ``callback(iteration, estimate)`` after every iteration.

    Returns
    -------
    RetrievalResult
        Final estimate (constraints applied), one residual per plane visit.
    """
    if len(measurements) == 0:
        raise ValueError("at least one measurement is required")
    shape, pitch = measurements[0].shape, measurements[0].pitch
    for m in measurements[1:]:
        if m.shape != shape or not np.isclose(m.pitch, pitch, rtol=1e-9):
            raise GridError("all measurements must share one grid and pitch")
    plans = [plan_for(m, config) for m in measurements]
    n = plans[0].grid_size
    if config.support_a > n or config.support_b > n:
        raise GridError(f"support {config.support_a}x{config.support_b} exceeds target grid {n}")

    init_rng, shuffle_rng = _streams(config.seed)
    estimate = initialize_estimate(measurements[0], config, init_rng, initial_phase)
    residuals: list[float] = []
    orders: list[list[int]] = []
    n_p = len(measurements)
    for it in range(config.iterations):
        order = shuffle_rng.permutation(n_p) if config.plane_order_shuffle else np.arange(n_p)
        orders.append([int(k) for k in order])
        for k in order:
            estimate = apply_constraints(estimate, config)
            psi = masm_propagate(estimate, plans[k])
            residuals.append(amplitude_residual(psi, measurements[k]))
            psi = project_data(psi, measurements[k])
            estimate = masm_inverse(psi, plans[k])
            if not np.all(np.isfinite(estimate.data)):
                raise NumericalFailure(it, int(k))
        if callback is not None:
            callback(it, estimate)
        if it % 50 == 0:
            log.debug("iteration %d residual %.4g", it, residuals[-1])
    estimate = apply_constraints(estimate, config)
    return RetrievalResult(estimate, residuals, config.iterations, orders)
