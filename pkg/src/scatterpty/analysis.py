"""Reconstruction quality metrics.

Intensity-only data cannot distinguish a field from a copy with a global
phase offset, or from its conjugate mirrored through the origin. Errors are
therefore computed on moduli and minimized over the 180-degree rotation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .field import ComplexField, GridError, RealImage
from .targets import ElementLayout, TargetSpec, usaf_layout

__all__ = [
    "MetricReport",
    "rotate180",
    "aligned_nrmse",
    "bar_contrast",
    "contrast_table",
    "resolved_frequency",
    "evaluate",
]

DEFAULT_THRESHOLD = 0.1


def rotate180(data: np.ndarray) -> np.ndarray:
    """Point reflection through the grid center (index ``N // 2`` per axis)."""
    out = data
    for axis, n in enumerate(data.shape):
        idx = (2 * (n // 2) - np.arange(n)) % n
        out = np.take(out, idx, axis=axis)
    return out


def aligned_nrmse(estimate: ComplexField | np.ndarray, truth: ComplexField | np.ndarray) -> float:
    """Relative L2 error of the moduli, minimized over identity and 180-degree rotation."""
    est = np.abs(getattr(estimate, "data", estimate))
    ref = np.abs(getattr(truth, "data", truth))
    if est.shape != ref.shape:
        raise GridError(f"grid mismatch {est.shape} vs {ref.shape}")
    den = np.linalg.norm(ref)
    if den == 0:
        return 0.0 if not est.any() else float("inf")
    errs = (np.linalg.norm(est - ref), np.linalg.norm(rotate180(est) - ref))
    return float(min(errs) / den)


def _as_image(image) -> tuple[np.ndarray, float]:
    if isinstance(image, RealImage):
        return image.data, image.pitch
    if isinstance(image, ComplexField):
        return np.abs(image.data), image.pitch
    raise TypeError("expected RealImage or ComplexField")


def _sample(data, pitch, points, axis):
    # three profiles, offset by -1, 0, +1 samples across the modulation direction
    ny, nx = data.shape
    pts = np.asarray(points)
    rows = pts[:, 0] / pitch + ny // 2
    cols = pts[:, 1] / pitch + nx // 2
    vals = []
    for off in (-1.0, 0.0, 1.0):
        r, c = (rows, cols + off) if axis == 0 else (rows + off, cols)
        vals.append(ndimage.map_coordinates(data, [r, c], order=1, mode="constant"))
    return np.mean(vals, axis=0)


def _triplet_contrast(data, pitch, trip) -> float:
    bars = _sample(data, pitch, trip.bar_centers(), trip.axis)
    gaps = _sample(data, pitch, trip.gap_centers(), trip.axis)
    hi, lo = bars.min(), gaps.max()
    if hi + lo <= 0:
        return 0.0
    return float(np.clip((hi - lo) / (hi + lo), 0.0, 1.0))


def _find(layout: list[ElementLayout], group: int, element: int) -> ElementLayout:
    for el in layout:
        if el.group == group and el.element == element:
            return el
    raise ValueError(f"element ({group}, {element}) is not part of the target layout")


def _check_inside(el: ElementLayout, shape, pitch):
    half = (shape[0] // 2 * pitch, shape[1] // 2 * pitch)
    for trip in (el.horizontal, el.vertical):
        cy, cx = trip.center
        r = 3.5 * trip.width + pitch
        if abs(cy) + r > half[0] or abs(cx) + r > half[1]:
            raise ValueError(f"element ({el.group}, {el.element}) lies outside the image")


def bar_contrast(image, group: int, element: int, layout: TargetSpec) -> float:
    """Bar/space modulation of one chart element.

    Profiles are read at the three bar centers and two space centers of each
    triplet (mean of three adjacent lines). Contrast is
    ``(min bar - max space) / (min bar + max space)`` clamped to [0, 1],
    averaged over the horizontal and vertical triplets.
    """
    data, pitch = _as_image(image)
    el = _find(usaf_layout(layout), group, element)
    _check_inside(el, data.shape, pitch)
    return 0.5 * (_triplet_contrast(data, pitch, el.horizontal)
                  + _triplet_contrast(data, pitch, el.vertical))


def contrast_table(image, layout: TargetSpec) -> list[tuple[int, int, float, float]]:
    """``(group, element, lp/mm, contrast)`` for every element, by frequency."""
    data, pitch = _as_image(image)
    rows = []
    for el in usaf_layout(layout):
        _check_inside(el, data.shape, pitch)
        c = 0.5 * (_triplet_contrast(data, pitch, el.horizontal)
                   + _triplet_contrast(data, pitch, el.vertical))
        rows.append((el.group, el.element, el.frequency, c))
    return rows


def resolved_frequency(image, layout: TargetSpec, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Highest frequency (lp/mm) reached before the first element below ``threshold``.

    Elements are read from coarse to fine, as one reads a chart by eye.
    Returns 0 when the coarsest element already fails.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    best = 0.0
    for _, _, freq, c in contrast_table(image, layout):
        if c < threshold:
            break
        best = freq
    return best


@dataclass
class MetricReport:
    nrmse_aligned: float
    resolved_lp_mm: float
    contrast_by_element: list[tuple[int, int, float]] = dc_field(default_factory=list)
    alpha_achieved: float = float("nan")

    def to_csv(self) -> str:
        """Two RFC-4180 tables separated by a blank line: summary, then contrasts."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["metric", "value"])
        w.writerow(["nrmse_aligned", repr(self.nrmse_aligned)])
        w.writerow(["resolved_lp_mm", repr(self.resolved_lp_mm)])
        w.writerow(["alpha_achieved", repr(self.alpha_achieved)])
        w.writerow([])
        w.writerow(["group", "element", "contrast"])
        for g, e, c in self.contrast_by_element:
            w.writerow([g, e, repr(c)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricReport":
        rows = list(csv.reader(io.StringIO(text)))
        split = rows.index([])
        summary = {k: float(v) for k, v in rows[1:split]}
        contrasts = [(int(g), int(e), float(c)) for g, e, c in rows[split + 2:] if g]
        return cls(summary["nrmse_aligned"], summary["resolved_lp_mm"], contrasts,
                   summary["alpha_achieved"])

    def summary(self) -> str:
        lines = [f"aligned NRMSE    : {self.nrmse_aligned:.4f}",
                 f"resolved         : {self.resolved_lp_mm:.2f} lp/mm"]
        if self.resolved_lp_mm > 0:
            lines.append(f"smallest bar     : {1e3 / (2 * self.resolved_lp_mm):.1f} um")
        lines.append(f"alpha achieved   : {self.alpha_achieved:.1f}")
        return "\n".join(lines)


def evaluate(estimate: ComplexField, truth: ComplexField | None = None,
             layout: TargetSpec | None = None, threshold: float = DEFAULT_THRESHOLD,
             ifov: float | None = None) -> MetricReport:
    """Collect the metrics that the inputs allow.

    Without ``layout`` (or for non-bar targets) only the NRMSE is reported.
    ``ifov`` is the direct-view pixel footprint on the target, in meters.
    """
    err = aligned_nrmse(estimate, truth) if truth is not None else float("nan")
    if layout is None or layout.kind != "usaf_bars":
        return MetricReport(err, 0.0, [], float("nan"))
    table = contrast_table(estimate, layout)
    res = 0.0
    for _, _, freq, c in table:
        if c < threshold:
            break
        res = freq
    alpha = ifov * 2 * res * 1e3 if (ifov is not None and res > 0) else 0.0 if ifov else float("nan")
    return MetricReport(err, res, [(g, e, c) for g, e, _, c in table], alpha)
