"""Forward model and photometry for scatter imaging.

Geometry quantities use meters throughout. The direct-view camera resolves
``pixel_pitch * R / focal_length`` at range ``R``; phase retrieval on the
scatter resolves ``wavelength * R_s / A_s`` on the target.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .field import ComplexField, GridError, RealImage, crop_center, resample_bicubic
from .propagation import make_plan, masm_propagate
from .retrieval import ScatterMeasurement

__all__ = [
    "OpticsGeometry",
    "PhotonBudget",
    "LAB_GEOMETRY",
    "alpha_factor",
    "resolution_limit",
    "direct_view_ifov",
    "screen_gsd",
    "fov_on_target",
    "alpha_bound",
    "scatter_extent_bound",
    "scatter_extent_bound_diffraction",
    "photon_rate",
    "simulate_scatter_image",
    "observed_mask",
    "screen_to_camera",
    "project_camera_to_screen",
    "measurement_from_image",
    "add_poisson_noise",
    "photons_to_field_units",
]


@dataclass(frozen=True)
class OpticsGeometry:
    """System lengths in meters.

    ``camera_aperture`` defaults to ``focal_length / f_number``.
    """

    wavelength: float
    range_camera_target: float
    range_target_scatter: float
    range_scatter_camera: float
    scatter_extent: float
    focal_length: float
    pixel_pitch: float
    f_number: float
    camera_aperture: float | None = None

    def __post_init__(self):
        if self.camera_aperture is None:
            object.__setattr__(self, "camera_aperture", self.focal_length / self.f_number)
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be positive and finite, got {v!r}")
        if self.pixel_pitch < self.wavelength * self.f_number:
            warnings.warn("pixel pitch is finer than the diffraction limit lambda * f/#", stacklevel=2)

    def scaled(self, factor: float) -> "OpticsGeometry":
        """Divide ranges, scatter extent and focal length by ``factor``.

        Wavelength, pixel pitch and f-number are kept, so the direct-view
        ifov, the scatter resolution limit, the screen sample distance and
        the improvement factor are all unchanged.
        """
        return dataclasses.replace(
            self,
            range_camera_target=self.range_camera_target / factor,
            range_target_scatter=self.range_target_scatter / factor,
            range_scatter_camera=self.range_scatter_camera / factor,
            scatter_extent=self.scatter_extent / factor,
            focal_length=self.focal_length / factor,
            camera_aperture=self.camera_aperture / factor,
        )


LAB_GEOMETRY = OpticsGeometry(
    wavelength=532e-9,
    range_camera_target=2518e-3,
    range_target_scatter=2654e-3,
    range_scatter_camera=139e-3,
    scatter_extent=37e-3,
    focal_length=12e-3,
    pixel_pitch=6.9e-6,
    f_number=1.6,
)


@dataclass(frozen=True)
class PhotonBudget:
    """Photometric quantities for the detectability bound.

    source_power is in photons/s, illumination_density in photons/s/m**2.
    """

    scatter_fraction: float
    exposure_time: float
    source_power: float
    min_detectable_photons: float
    illumination_density: float | None = None

    def __post_init__(self):
        for name in ("scatter_fraction", "exposure_time", "source_power", "min_detectable_photons"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.scatter_fraction > 1:
            raise ValueError("scatter_fraction cannot exceed 1")
        if self.illumination_density is not None and not self.illumination_density > 0:
            raise ValueError("illumination_density must be positive")

    @property
    def flux_ratio(self) -> float:
        """``sqrt(sigma * T * L / (pi * N_p))``."""
        return float(np.sqrt(self.scatter_fraction * self.exposure_time * self.source_power
                             / (np.pi * self.min_detectable_photons)))


def photon_rate(power_watts: float, wavelength: float) -> float:
    """Photons per second carried by a monochromatic beam."""
    return power_watts * wavelength / (constants.h * constants.c)


def alpha_factor(geometry: OpticsGeometry) -> float:
    """Resolution gain of scatter imaging over direct view."""
    g = geometry
    return (g.pixel_pitch * g.scatter_extent * g.range_camera_target
            / (g.wavelength * g.range_target_scatter * g.focal_length))


def resolution_limit(geometry: OpticsGeometry) -> float:
    """Smallest resolvable target feature via the scatter, in meters."""
    return geometry.wavelength * geometry.range_target_scatter / geometry.scatter_extent


def direct_view_ifov(geometry: OpticsGeometry) -> float:
    """Target-plane footprint of one camera pixel when viewing the target directly."""
    return geometry.pixel_pitch * geometry.range_camera_target / geometry.focal_length


def screen_gsd(geometry: OpticsGeometry) -> float:
    """Screen-plane footprint of one camera pixel."""
    return geometry.pixel_pitch * geometry.range_scatter_camera / geometry.focal_length


def fov_on_target(geometry: OpticsGeometry) -> float:
    """Angular field of view (radians) of the reconstruction, ``A_c / R_sc``.

    Multiply by ``range_target_scatter`` for the linear extent on the target.
    """
    return geometry.camera_aperture / geometry.range_scatter_camera


def alpha_bound(geometry: OpticsGeometry, budget: PhotonBudget) -> float:
    """Photon-limited upper bound on the improvement factor.

    Product of the pixel pitch relative to the diffraction limit, half the
    camera's angular aperture seen from the scatter, and the flux ratio.
    """
    g = geometry
    return (g.pixel_pitch / (g.wavelength * g.f_number)
            * g.camera_aperture / (2 * g.range_scatter_camera)
            * budget.flux_ratio)


def scatter_extent_bound(geometry: OpticsGeometry, budget: PhotonBudget) -> float:
    """Largest usable scatter extent given the illumination density on the target."""
    if budget.illumination_density is None:
        raise ValueError("budget.illumination_density is required")
    g = geometry
    ratio = np.sqrt(budget.scatter_fraction * budget.exposure_time * budget.illumination_density
                    / (np.pi * budget.min_detectable_photons))
    return g.wavelength * g.range_target_scatter * g.camera_aperture / (2 * g.range_scatter_camera) * ratio


def scatter_extent_bound_diffraction(geometry: OpticsGeometry, budget: PhotonBudget) -> float:
    """Same bound with the illumination density set by diffraction from the camera aperture."""
    g = geometry
    return (g.range_target_scatter * g.camera_aperture ** 2
            / (2 * g.range_scatter_camera * g.range_camera_target) * budget.flux_ratio)


def simulate_scatter_image(target: ComplexField, z: float, geometry: OpticsGeometry,
                           ratio: float, total_photons: float | None = None,
                           stage_boundaries=None) -> ScatterMeasurement:
    """Irradiance of the target field after propagating ``z`` to the screen.

    The result lives on the downsampled grid (pitch ``target.pitch / ratio``).
    Samples outside the centered ``scatter_extent`` square are flagged as
    unobserved in the measurement mask. With ``total_photons`` the intensity is
    rescaled to sum to that value.
    """
    n = target.shape[0]
    if target.shape[0] != target.shape[1]:
        raise GridError("target grid must be square")
    if n * target.pitch < geometry.scatter_extent:
        raise GridError(
            f"grid extent {n * target.pitch * 1e3:.2f} mm is smaller than the scatter extent "
            f"{geometry.scatter_extent * 1e3:.2f} mm")
    plan = make_plan(n, target.pitch, geometry.wavelength, z, ratio, stage_boundaries)
    psi = masm_propagate(target, plan)
    inten = psi.intensity
    if total_photons is not None:
        s = inten.sum()
        inten = inten * (total_photons / s) if s > 0 else inten
    mask = observed_mask(inten.shape[0], psi.pitch, geometry.scatter_extent)
    return ScatterMeasurement(RealImage(inten, psi.pitch), z, mask)


def observed_mask(n: int, pitch: float, extent: float) -> np.ndarray:
    """Centered square of side ``extent`` on an ``n``-point grid."""
    half = int(round(extent / pitch)) // 2
    half = min(half, n // 2)
    m = np.zeros((n, n), dtype=bool)
    c = n // 2
    m[c - half:c + half, c - half:c + half] = True
    return m


def _resample_image(img: RealImage, ratio: float) -> np.ndarray:
    out = resample_bicubic(ComplexField(img.data.astype(np.complex128), img.pitch), ratio)
    return np.clip(out.data.real, 0, None)


def screen_to_camera(screen: RealImage, geometry: OpticsGeometry, crop: int) -> RealImage:
    """Synthetic camera capture of a screen image: resample to the camera's
    screen-plane pixel footprint and keep the central ``crop x crop`` pixels."""
    gsd = screen_gsd(geometry)
    data = _resample_image(screen, screen.pitch / gsd)
    if crop > min(data.shape):
        raise GridError(f"crop {crop} exceeds camera frame {data.shape}")
    return RealImage(crop_center(data, (crop, crop)).copy(), gsd)


def project_camera_to_screen(raw: RealImage, geometry: OpticsGeometry, crop: int,
                             target_pitch: float | None = None) -> RealImage:
    """Map a camera frame onto screen coordinates.

    Center-crops ``crop x crop`` pixels, assigns the pinhole-magnified pitch
    ``pixel_pitch * R_sc / F`` and, when ``target_pitch`` is given,
    resamples bicubically onto that pitch. No distortion correction.
    """
    if crop < 1 or crop > min(raw.shape):
        raise GridError(f"crop {crop} outside image of shape {raw.shape}")
    data = crop_center(raw.data, (crop, crop)).copy()
    img = RealImage(data, screen_gsd(geometry))
    if target_pitch is None:
        return img
    ratio = img.pitch / target_pitch
    return RealImage(_resample_image(img, ratio), target_pitch)


def measurement_from_image(image: RealImage, z: float, grid_size: int) -> ScatterMeasurement:
    """Zero-pad a screen image onto the retrieval grid; padded samples are unobserved."""
    n = image.shape[0]
    if image.shape[0] != image.shape[1]:
        raise GridError("screen image must be square")
    if n > grid_size:
        data = crop_center(image.data, (grid_size, grid_size)).copy()
        return ScatterMeasurement(RealImage(data, image.pitch), z, None)
    data = np.zeros((grid_size, grid_size))
    mask = np.zeros((grid_size, grid_size), dtype=bool)
    o = grid_size // 2 - n // 2
    data[o:o + n, o:o + n] = image.data
    mask[o:o + n, o:o + n] = True
    return ScatterMeasurement(RealImage(data, image.pitch), z, mask)


def add_poisson_noise(measurement: ScatterMeasurement, mean_photons_per_pixel: float,
                      seed: int) -> ScatterMeasurement:
    """Shot-noise realization at a given mean photon count per pixel.

    The intensity is rescaled so its mean over the full grid equals
    ``mean_photons_per_pixel``, then every pixel is replaced by a Poisson
    draw with that expectation. The rescaling factor (photons per intensity
    unit) is kept in ``intensity.meta["photon_scale"]``.
    """
    if mean_photons_per_pixel < 0:
        raise ValueError("mean photon count must be non-negative")
    data = measurement.intensity.data
    mean = data.mean()
    if mean_photons_per_pixel == 0 or mean == 0:
        counts = np.zeros_like(data)
        scale = 1.0
    else:
        rng = np.random.default_rng(seed)
        scale = mean_photons_per_pixel / mean
        counts = rng.poisson(data * scale).astype(np.float64)
    img = RealImage(counts, measurement.pitch, {"photon_scale": float(scale)})
    return ScatterMeasurement(img, measurement.distance, measurement.mask)


def photons_to_field_units(measurement: ScatterMeasurement) -> ScatterMeasurement:
    """Undo the photon rescaling recorded by :func:`add_poisson_noise`."""
    scale = measurement.intensity.meta.get("photon_scale", 1.0)
    if scale == 1.0:
        return measurement
    img = RealImage(measurement.intensity.data / scale, measurement.pitch)
    return ScatterMeasurement(img, measurement.distance, measurement.mask)
