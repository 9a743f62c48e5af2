import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import ndimage
from scipy.special import erf

from scatterpty.analysis import (
    MetricReport,
    aligned_nrmse,
    bar_contrast,
    contrast_table,
    evaluate,
    resolved_frequency,
    rotate180,
)
from scatterpty.field import ComplexField, GridError, RealImage
from scatterpty.simulator import LAB_GEOMETRY, direct_view_ifov
from scatterpty.targets import TargetSpec, make_target, usaf_frequency, usaf_layout

CHART = TargetSpec("usaf_bars", (1.0e-3, 1.25e-3), {"groups": [3]})
PITCH = 5e-6


@pytest.fixture(scope="module")
def chart():
    return make_target(CHART, PITCH, (256, 320))


def test_rotate180_is_point_reflection():
    a = np.arange(16).reshape(4, 4)
    r = rotate180(a)
    assert r[2, 2] == a[2, 2]  # the axis sample is fixed
    assert r[1, 3] == a[3, 1]
    np.testing.assert_array_equal(rotate180(r), a)


def test_nrmse_identity_rotation_and_phase(chart, rng):
    assert aligned_nrmse(chart, chart) == 0
    assert aligned_nrmse(rotate180(chart.data), chart) == 0
    theta = rng.uniform(0, 2 * np.pi)
    assert aligned_nrmse(np.exp(1j * theta) * chart.data, chart) < 1e-15


def test_nrmse_zero_estimate(chart):
    assert aligned_nrmse(np.zeros(chart.shape), chart) == 1.0


def test_nrmse_grid_mismatch(chart):
    with pytest.raises(GridError):
        aligned_nrmse(np.zeros((4, 4)), chart)


@given(st.integers(0, 2 ** 32 - 1))
def test_nrmse_symmetric_distance(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((9, 8)) + 1j * rng.standard_normal((9, 8))
    b = rng.standard_normal((9, 8)) + 1j * rng.standard_normal((9, 8))
    # the unnormalized aligned distance is symmetric
    dab = aligned_nrmse(a, b) * np.linalg.norm(b)
    dba = aligned_nrmse(b, a) * np.linalg.norm(a)
    assert dab == pytest.approx(dba, rel=1e-12)
    assert aligned_nrmse(rotate180(a), a) == 0.0 or aligned_nrmse(rotate180(a), a) < 1e-15


def test_contrast_perfect_and_uniform(chart):
    assert bar_contrast(chart, 3, 4, CHART) == 1.0
    gray = RealImage(np.full(chart.shape, 0.4), PITCH)
    assert bar_contrast(gray, 3, 4, CHART) == 0.0


@given(st.floats(1e-3, 1e3))
def test_contrast_scale_invariant(scale):
    img = make_target(CHART, PITCH, (256, 320))
    blurred = ndimage.gaussian_filter(np.abs(img.data), 4.0)
    a = bar_contrast(RealImage(blurred, PITCH), 3, 2, CHART)
    b = bar_contrast(RealImage(scale * blurred, PITCH), 3, 2, CHART)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def _analytic_blur(layout, sigma, pts):
    """Binary bars convolved with a Gaussian, evaluated in closed form at ``pts``."""
    ys, xs = pts[:, 0], pts[:, 1]
    out = np.zeros(len(pts))
    s = sigma * np.sqrt(2)
    for el in layout:
        w = el.width
        for trip in (el.horizontal, el.vertical):
            hy, hx = (w / 2, 2.5 * w) if trip.axis == 0 else (2.5 * w, w / 2)
            for by, bx in trip.bar_centers():
                fy = 0.5 * (erf((ys - by + hy) / s) - erf((ys - by - hy) / s))
                fx = 0.5 * (erf((xs - bx + hx) / s) - erf((xs - bx - hx) / s))
                out += fy * fx
    return out


def _oracle_contrast(layout, el, sigma, pitch):
    vals = []
    for trip in (el.horizontal, el.vertical):
        def sample(points):
            acc = 0
            for off in (-pitch, 0.0, pitch):
                p = np.array(points, dtype=float)
                p[:, 1 - trip.axis] += off
                acc = acc + _analytic_blur(layout, sigma, p)
            return acc / 3
        bars, gaps = sample(trip.bar_centers()), sample(trip.gap_centers())
        hi, lo = bars.min(), gaps.max()
        vals.append(np.clip((hi - lo) / (hi + lo), 0, 1))
    return float(np.mean(vals))


@pytest.mark.parametrize("sigma_in_widths", [1.0, 0.5, 0.35])
def test_contrast_matches_blur_oracle(sigma_in_widths):
    # pitch 2.5 um puts every bar edge halfway between samples: the raster is exact
    spec = TargetSpec("usaf_bars", (0.4e-3, 0.75e-3), {"elements": [(3, 1)]})
    pitch = 2.5e-6
    img = make_target(spec, pitch, (256, 384)).data.real
    layout = usaf_layout(spec)
    sigma = sigma_in_widths * layout[0].width
    blurred = ndimage.gaussian_filter(img, sigma / pitch, mode="constant", truncate=8)
    got = bar_contrast(RealImage(blurred, pitch), 3, 1, spec)
    want = _oracle_contrast(layout, layout[0], sigma, pitch)
    assert got == pytest.approx(want, abs=1e-3)
    if sigma_in_widths < 1:
        assert 0.05 < want < 0.95


def test_element_lookup_errors(chart):
    with pytest.raises(ValueError):
        bar_contrast(chart, 4, 1, CHART)
    small = RealImage(np.abs(chart.data)[100:150, 100:150], PITCH)
    with pytest.raises(ValueError):
        bar_contrast(small, 3, 1, CHART)


def test_resolved_perfect_chart(chart):
    assert resolved_frequency(chart, CHART) == pytest.approx(usaf_frequency(3, 6))


def test_resolved_lowpass_below_3_4(chart):
    # ideal low-pass at 10 lp/mm (square passband) removes the fundamental of elements from (3, 4) on
    data = np.abs(chart.data)
    f0 = np.fft.fftfreq(data.shape[0], PITCH * 1e3)
    f1 = np.fft.fftfreq(data.shape[1], PITCH * 1e3)
    keep = (np.abs(f0)[:, None] < 10) & (np.abs(f1)[None, :] < 10)
    low = np.clip(np.fft.ifft2(np.fft.fft2(data) * keep).real, 0, None)
    res = resolved_frequency(RealImage(low, PITCH), CHART)
    assert 0 < res < 11.31


def test_resolved_monotone_under_blur(chart):
    data = np.abs(chart.data)
    res = [resolved_frequency(RealImage(ndimage.gaussian_filter(data, s), PITCH), CHART)
           for s in (1.0, 3.0, 6.0)]
    assert res[0] >= res[1] >= res[2]
    assert res[0] > res[2]


def test_resolved_threshold_checked(chart):
    with pytest.raises(ValueError):
        resolved_frequency(chart, CHART, threshold=1.0)


def test_resolved_zero_image(chart):
    assert resolved_frequency(RealImage(np.zeros(chart.shape), PITCH), CHART) == 0.0


def test_contrast_table_sorted(chart):
    tab = contrast_table(chart, CHART)
    assert [r[:2] for r in tab] == [(3, e) for e in range(1, 7)]
    assert all(c == 1.0 for *_, c in tab)


def test_evaluate_perfect_paper_alpha():
    spec = TargetSpec("usaf_bars", (1.0e-3, 1.25e-3),
                      {"elements": [(3, 1), (3, 2), (3, 3), (3, 4)]})
    truth = make_target(spec, 10e-6, (128, 160))
    rep = evaluate(truth, truth, spec, 0.1, direct_view_ifov(LAB_GEOMETRY))
    assert rep.nrmse_aligned == 0.0
    assert rep.resolved_lp_mm == pytest.approx(11.31, abs=0.01)
    # 1.448 mm ifov over a 44.2 um bar
    assert rep.alpha_achieved == pytest.approx(32.5, abs=1.0)


def test_evaluate_zero_reconstruction(chart):
    rep = evaluate(ComplexField(np.zeros(chart.shape), PITCH), chart, CHART)
    assert rep.nrmse_aligned == 1.0
    assert rep.resolved_lp_mm == 0.0


def test_evaluate_without_layout(chart):
    rep = evaluate(chart, chart, None)
    assert rep.nrmse_aligned == 0 and rep.contrast_by_element == []


def test_report_csv_roundtrip(chart):
    rep = evaluate(chart, chart, CHART, ifov=1.448e-3)
    text = rep.to_csv()
    assert "\r\n" in text
    back = MetricReport.from_csv(text)
    assert back == rep
    assert "lp/mm" in rep.summary()
