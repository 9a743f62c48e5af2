import dataclasses
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scatterpty.field import ComplexField, GridError, RealImage, energy
from scatterpty.simulator import (
    LAB_GEOMETRY,
    OpticsGeometry,
    PhotonBudget,
    add_poisson_noise,
    alpha_bound,
    alpha_factor,
    direct_view_ifov,
    fov_on_target,
    measurement_from_image,
    photon_rate,
    photons_to_field_units,
    project_camera_to_screen,
    resolution_limit,
    scatter_extent_bound,
    scatter_extent_bound_diffraction,
    screen_gsd,
    screen_to_camera,
    simulate_scatter_image,
)
from scatterpty.retrieval import ScatterMeasurement

G = LAB_GEOMETRY


# --- photometry against the lab constants ---------------------------------------

def test_alpha_paper():
    assert alpha_factor(G) == pytest.approx(38, abs=0.5)


def test_resolution_limit_paper():
    assert resolution_limit(G) == pytest.approx(38.2e-6, abs=0.5e-6)


def test_direct_view_ifov_paper():
    assert direct_view_ifov(G) == pytest.approx(1.45e-3, abs=0.01e-3)
    assert direct_view_ifov(G) == pytest.approx(1.448e-3, abs=0.5e-6)


def test_screen_gsd_paper():
    assert screen_gsd(G) == pytest.approx(79.9e-6, abs=0.05e-6)


def test_camera_aperture_from_f_number():
    assert G.camera_aperture == pytest.approx(7.5e-3)


def test_fov():
    assert fov_on_target(G) == pytest.approx(7.5e-3 / 139e-3)
    assert fov_on_target(G) == pytest.approx(0.054, abs=5e-4)
    g1 = dataclasses.replace(G, camera_aperture=G.range_scatter_camera)
    assert fov_on_target(g1) == 1.0
    g2 = dataclasses.replace(G, range_scatter_camera=2 * G.range_scatter_camera)
    assert fov_on_target(g2) == pytest.approx(fov_on_target(G) / 2)


def test_alpha_unity_and_linearity():
    a_s = G.wavelength * G.range_target_scatter * G.focal_length / (G.pixel_pitch * G.range_camera_target)
    assert alpha_factor(dataclasses.replace(G, scatter_extent=a_s)) == pytest.approx(1, rel=1e-14)
    g2 = dataclasses.replace(G, scatter_extent=2 * G.scatter_extent)
    assert alpha_factor(g2) == pytest.approx(2 * alpha_factor(G), rel=1e-14)


def test_resolution_limit_vanishes_for_large_aperture():
    assert resolution_limit(dataclasses.replace(G, scatter_extent=1e12)) < 1e-15


geom = st.builds(
    OpticsGeometry,
    wavelength=st.floats(300e-9, 2e-6),
    range_camera_target=st.floats(0.1, 1e4),
    range_target_scatter=st.floats(0.1, 1e4),
    range_scatter_camera=st.floats(0.01, 1e3),
    scatter_extent=st.floats(1e-3, 10.0),
    focal_length=st.floats(1e-3, 1.0),
    pixel_pitch=st.floats(3e-6, 30e-6),
    f_number=st.floats(1.0, 2.0),
)


@given(geom)
def test_alpha_is_ifov_over_resolution(g):
    assert alpha_factor(g) == pytest.approx(direct_view_ifov(g) / resolution_limit(g), rel=1e-12)


@given(geom, st.floats(2.0, 16.0))
def test_scaling_keeps_figures_of_merit(g, k):
    s = g.scaled(k)
    for f in (alpha_factor, resolution_limit, direct_view_ifov, screen_gsd, fov_on_target):
        assert f(s) == pytest.approx(f(g), rel=1e-12)


def test_geometry_validation_and_warning():
    with pytest.raises(ValueError):
        dataclasses.replace(G, focal_length=0.0)
    with pytest.warns(UserWarning, match="diffraction"):
        dataclasses.replace(G, pixel_pitch=0.5e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dataclasses.replace(G)


# --- photon budget ---------------------------------------------------------------

def test_flux_ratio_order_of_magnitude():
    b = PhotonBudget(0.1, 1.0, 1e21, 1e5)
    assert b.flux_ratio == pytest.approx(1.784e7, rel=1e-3)


def test_kilowatt_laser_photon_count():
    # 1 kW at 532 nm for 0.1 s is about 2.7e20 photons, not 1e21
    tl = photon_rate(1e3, 532e-9) * 0.1
    assert tl == pytest.approx(2.678e20, rel=1e-3)
    h, c = 6.62607015e-34, 299792458.0
    assert tl == pytest.approx(1e3 * 0.1 / (h * c / 532e-9), rel=1e-12)


def test_alpha_bound_unity():
    sig, n_p, t = 0.5, 10.0, 1.0
    l = np.pi * n_p / (sig * t) * (2 * G.range_scatter_camera / G.camera_aperture) ** 2 \
        * (G.wavelength * G.f_number / G.pixel_pitch) ** 2
    b = PhotonBudget(sig, t, l, n_p)
    assert alpha_bound(G, b) == pytest.approx(1.0, rel=1e-12)


def test_extent_bounds_consistent_with_alpha():
    b = PhotonBudget(0.1, 0.1, photon_rate(1e3, 532e-9), 1e5)
    a_s = scatter_extent_bound_diffraction(G, b)
    assert alpha_factor(dataclasses.replace(G, scatter_extent=a_s)) == pytest.approx(alpha_bound(G, b), rel=1e-12)


def test_extent_bound_with_density():
    b = PhotonBudget(0.1, 0.1, 1e20, 1e5, illumination_density=1e25)
    ref = (G.wavelength * G.range_target_scatter * G.camera_aperture / (2 * G.range_scatter_camera)
           * np.sqrt(0.1 * 0.1 * 1e25 / (np.pi * 1e5)))
    assert scatter_extent_bound(G, b) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        scatter_extent_bound(G, PhotonBudget(0.1, 0.1, 1e20, 1e5))


@pytest.mark.parametrize("kw", [dict(scatter_fraction=1.5), dict(exposure_time=0.0),
                                dict(min_detectable_photons=-1.0), dict(illumination_density=0.0)])
def test_budget_validation(kw):
    base = dict(scatter_fraction=0.1, exposure_time=1.0, source_power=1e20, min_detectable_photons=1e5)
    with pytest.raises(ValueError):
        PhotonBudget(**{**base, **kw})


# --- forward model ---------------------------------------------------------------

SMALL = LAB_GEOMETRY.scaled(16)  # A_s = 2.3 mm, R_s = 166 mm


def test_zero_target_zero_intensity():
    t = ComplexField(np.zeros((256, 256)), 10e-6)
    m = simulate_scatter_image(t, SMALL.range_target_scatter, SMALL, 0.25)
    assert m.shape == (64, 64) and m.pitch == pytest.approx(40e-6)
    assert not np.any(m.intensity.data)


def test_paper_plane_distances():
    zs = [G.range_target_scatter + off for off in (0.0, 0.050)]
    assert zs == [pytest.approx(2.654), pytest.approx(2.704)]


def test_footprint_guard():
    t = ComplexField(np.zeros((128, 128)), 10e-6)  # 1.28 mm < 2.3 mm
    with pytest.raises(GridError):
        simulate_scatter_image(t, SMALL.range_target_scatter, SMALL, 0.25)


def test_single_slit_far_field_lobe():
    # Fraunhofer regime (Fresnel number 0.03): first zero at lambda z / w
    g = LAB_GEOMETRY.scaled(4)
    n, d, w = 1024, 10e-6, 100e-6
    x = (np.arange(n) - n // 2) * d
    slit = np.broadcast_to(((x >= -w / 2) & (x < w / 2)).astype(float), (n, n))  # exactly w/d samples
    z = g.range_target_scatter
    m = simulate_scatter_image(ComplexField(slit, d), z, g, 0.25)
    prof = m.intensity.data[m.shape[0] // 2]
    xs = (np.arange(prof.size) - prof.size // 2) * m.pitch
    expected = g.wavelength * z / w
    window = (xs > 0.5 * expected) & (xs < 1.5 * expected)
    first_zero = xs[window][np.argmin(prof[window])]
    assert first_zero == pytest.approx(expected, rel=0.10)
    assert prof[window].min() < 1e-3 * prof.max()


def _blob(n=256, d=10e-6, w0=150e-6):
    y = (np.arange(n) - n // 2) * d
    return ComplexField(np.exp(-(y[:, None] ** 2 + y[None, :] ** 2) / w0 ** 2), d)


def test_deterministic_and_photon_normalized():
    t = _blob()
    a = simulate_scatter_image(t, 0.05, SMALL, 0.25, total_photons=1e6)
    b = simulate_scatter_image(t, 0.05, SMALL, 0.25, total_photons=1e6)
    np.testing.assert_array_equal(a.intensity.data, b.intensity.data)
    assert a.intensity.data.sum() == pytest.approx(1e6, rel=1e-12)


def test_energy_through_propagation():
    t = _blob()
    m = simulate_scatter_image(t, 0.05, SMALL, 0.25)
    assert m.intensity.data.sum() * m.pitch ** 2 == pytest.approx(energy(t), rel=1e-2)


def test_mask_covers_scatter_extent():
    t = ComplexField(np.zeros((256, 256)), 10e-6)
    m = simulate_scatter_image(t, 0.05, SMALL, 0.25)
    side = np.flatnonzero(m.mask.any(axis=0))
    assert (side.size * m.pitch) == pytest.approx(SMALL.scatter_extent, abs=2 * m.pitch)


# --- camera geometry -------------------------------------------------------------

def test_projection_pitch_paper():
    raw = RealImage(np.ones((500, 500)), G.pixel_pitch)
    img = project_camera_to_screen(raw, G, 460)
    assert img.shape == (460, 460)
    assert img.pitch == pytest.approx(79.9e-6, abs=0.05e-6)


def test_projection_unit_magnification():
    g = dataclasses.replace(G, range_scatter_camera=G.focal_length)
    data = np.random.default_rng(0).random((40, 40))
    img = project_camera_to_screen(RealImage(data, g.pixel_pitch), g, 40)
    assert img.pitch == g.pixel_pitch
    np.testing.assert_array_equal(img.data, data)


def test_projection_resamples_to_grid():
    raw = RealImage(np.ones((100, 100)), G.pixel_pitch)
    img = project_camera_to_screen(raw, G, 100, target_pitch=screen_gsd(G) / 2)
    assert abs(img.shape[0] - 200) <= 1
    img = project_camera_to_screen(raw, G, 100, target_pitch=40e-6)
    assert abs(img.shape[0] - 2 * 100 * screen_gsd(G) / 80e-6) <= 1


def test_projection_crop_checked():
    with pytest.raises(GridError):
        project_camera_to_screen(RealImage(np.ones((10, 10)), 1e-6), G, 11)


def test_camera_roundtrip_smooth_image():
    n, pitch = 256, 40e-6
    y = (np.arange(n) - n // 2) * pitch
    data = np.exp(-(y[:, None] ** 2 + y[None, :] ** 2) / (2e-3) ** 2)
    cam = screen_to_camera(RealImage(data, pitch), G, 100)
    assert cam.pitch == pytest.approx(screen_gsd(G))
    back = project_camera_to_screen(cam, G, 100, target_pitch=pitch)
    m = measurement_from_image(back, 2.654, n)
    inside = m.mask
    err = np.abs(m.intensity.data - data)[inside].max()
    assert err < 1e-2
    assert not m.intensity.data[~inside].any()


# --- shot noise ------------------------------------------------------------------

def _uniform(n=128, value=3.0):
    return ScatterMeasurement(RealImage(np.full((n, n), value), 40e-6), 1.0)


def test_noise_zero_flux():
    m = add_poisson_noise(_uniform(), 0.0, 1)
    assert not m.intensity.data.any()


def test_noise_mean_100_statistics():
    m = add_poisson_noise(_uniform(), 100.0, 7)
    d = m.intensity.data
    assert d.size >= 10 ** 4
    assert abs(d.mean() - 100) < 3 * np.sqrt(100 / d.size)
    np.testing.assert_array_equal(d, np.round(d))


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.01, 0.02, 0.1, 1.0]))
def test_noise_total_and_seed(seed, flux):
    rng = np.random.default_rng(seed)
    base = ScatterMeasurement(RealImage(rng.random((128, 128)) ** 4, 40e-6), 1.0)
    a = add_poisson_noise(base, flux, seed)
    b = add_poisson_noise(base, flux, seed)
    np.testing.assert_array_equal(a.intensity.data, b.intensity.data)
    expected = flux * a.intensity.data.size
    assert abs(a.intensity.data.sum() - expected) <= 3 * np.sqrt(expected) + 1
    scale = a.intensity.meta["photon_scale"]
    assert scale == pytest.approx(flux / base.intensity.data.mean())
    back = photons_to_field_units(a)
    np.testing.assert_allclose(back.intensity.data * scale, a.intensity.data)


def test_noise_negative_flux():
    with pytest.raises(ValueError):
        add_poisson_noise(_uniform(), -1.0, 0)
