"""Binary amplitude targets: USAF-1951 style bar charts, text masks, image files.

Bar chart geometry is computed in meters, independent of sampling, so the
analysis code can locate every bar triplet on any grid that contains the
chart. Element ``(g, e)`` has ``2 ** (g + (e - 1) / 6)`` line pairs per mm
and bar width ``1 / (2 * freq)``. Each element is a block of three horizontal
bars (modulated along y) followed, one bar width to the right, by three
vertical bars (modulated along x); every bar is 5 widths long. Elements and
columns are separated by one bar width of the larger neighbour.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .field import ComplexField, centered_coords

__all__ = [
    "TargetSpec",
    "Triplet",
    "ElementLayout",
    "usaf_frequency",
    "bar_width",
    "usaf_layout",
    "make_target",
    "save_target_image",
    "load_image_amplitude",
]

KINDS = ("usaf_bars", "text_mask", "image_file")


def usaf_frequency(group: int, element: int) -> float:
    """Spatial frequency of a USAF-1951 element in line pairs per mm."""
    return 2.0 ** (group + (element - 1) / 6.0)


def bar_width(group: int, element: int) -> float:
    """Bar width in meters."""
    return 1e-3 / (2.0 * usaf_frequency(group, element))


@dataclass(frozen=True)
class TargetSpec:
    """What to draw and how large.

    ``extent`` is ``(height, width)`` in meters. ``parameters`` holds
    ``elements`` (list of ``(group, element)``) for ``usaf_bars``, ``text``
    and ``height`` (meters) for ``text_mask``, and ``path`` for ``image_file``.
    """

    kind: str
    extent: tuple[float, float]
    parameters: dict = dc_field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}; expected one of {KINDS}")
        if len(self.extent) != 2 or min(self.extent) <= 0:
            raise ValueError(f"extent must be two positive lengths, got {self.extent}")

    @property
    def elements(self) -> list[tuple[int, int]]:
        p = self.parameters
        if "elements" in p:
            return [tuple(map(int, ge)) for ge in p["elements"]]
        groups = p.get("groups", [])
        numbers = p.get("element_numbers", range(1, 7))
        return [(int(g), int(e)) for g in groups for e in numbers]


@dataclass(frozen=True)
class Triplet:
    """Three parallel bars. ``axis`` is the modulation axis: 0 = y, 1 = x."""

    center: tuple[float, float]
    width: float
    axis: int

    def bar_centers(self) -> list[tuple[float, float]]:
        cy, cx = self.center
        offs = (-2 * self.width, 0.0, 2 * self.width)
        return [(cy + o, cx) if self.axis == 0 else (cy, cx + o) for o in offs]

    def gap_centers(self) -> list[tuple[float, float]]:
        cy, cx = self.center
        offs = (-self.width, self.width)
        return [(cy + o, cx) if self.axis == 0 else (cy, cx + o) for o in offs]


@dataclass(frozen=True)
class ElementLayout:
    group: int
    element: int
    frequency: float  # lp/mm
    horizontal: Triplet
    vertical: Triplet

    @property
    def width(self) -> float:
        return self.horizontal.width


def usaf_layout(spec: TargetSpec) -> list[ElementLayout]:
    """Place the requested elements in columns, lowest frequency first.

    Elements stack top to bottom; a new column starts to the right when the
    next element would overflow the extent height. The packed chart is
    centered on the optical axis. Raises ``ValueError`` if it does not fit.
    """
    if spec.kind != "usaf_bars":
        raise ValueError(f"no bar layout for target kind {spec.kind!r}")
    elements = sorted(set(spec.elements), key=lambda ge: usaf_frequency(*ge))
    if not elements:
        return []
    height, width = spec.extent
    # (group, element, w, column, top, left) in a top-left origin frame
    placed = []
    col_left, col_width, top, col = 0.0, 0.0, 0.0, 0
    for g, e in elements:
        w = bar_width(g, e)
        box_h, box_w = 5 * w, 11 * w
        if top > 0 and top + box_h > height + 1e-12:
            col_left += col_width
            col_width, top, col = 0.0, 0.0, col + 1
        if box_h > height + 1e-12:
            raise ValueError(f"element ({g}, {e}) is taller than the target extent")
        placed.append((g, e, w, col, top, col_left))
        top += box_h + w
        col_width = max(col_width, box_w + w)
    used_w = max(left + 11 * w for _, _, w, _, _, left in placed)
    used_h = max(t + 5 * w for _, _, w, _, t, _ in placed)
    if used_w > width + 1e-12:
        raise ValueError(f"chart needs {used_w * 1e3:.3f} mm width, extent is {width * 1e3:.3f} mm")
    oy, ox = -used_h / 2, -used_w / 2
    out = []
    for g, e, w, _, t, left in placed:
        cy = oy + t + 2.5 * w
        horiz = Triplet((cy, ox + left + 2.5 * w), w, axis=0)
        vert = Triplet((cy, ox + left + 8.5 * w), w, axis=1)
        out.append(ElementLayout(g, e, usaf_frequency(g, e), horiz, vert))
    return out


def _grid_shape(spec: TargetSpec, pitch: float, shape) -> tuple[int, int]:
    if shape is not None:
        return int(shape[0]), int(shape[1])
    return int(np.ceil(spec.extent[0] / pitch)), int(np.ceil(spec.extent[1] / pitch))


def _draw_bars(layout, pitch, shape) -> np.ndarray:
    y = centered_coords(shape[0], pitch)[:, None]
    x = centered_coords(shape[1], pitch)[None, :]
    img = np.zeros(shape)
    for el in layout:
        w = el.width
        for trip in (el.horizontal, el.vertical):
            for by, bx in trip.bar_centers():
                half = (w / 2, 2.5 * w) if trip.axis == 0 else (2.5 * w, w / 2)
                inside = (np.abs(y - by) < half[0]) & (np.abs(x - bx) < half[1])
                img[inside] = 1.0
    return img


def _render_text(text: str, height_px: int) -> np.ndarray:
    font = ImageFont.load_default(size=200)
    probe = Image.new("L", (1, 1))
    box = ImageDraw.Draw(probe).textbbox((0, 0), text, font=font)
    canvas = Image.new("L", (box[2] - box[0] + 4, box[3] - box[1] + 4), 0)
    ImageDraw.Draw(canvas).text((2 - box[0], 2 - box[1]), text, fill=255, font=font)
    arr = np.asarray(canvas)
    rows, cols = np.nonzero(arr > 127)
    arr = arr[rows.min():rows.max() + 1, cols.min():cols.max() + 1]
    scale = height_px / arr.shape[0]
    width_px = max(1, int(round(arr.shape[1] * scale)))
    small = Image.fromarray(arr).resize((width_px, height_px), Image.Resampling.BOX)
    return (np.asarray(small) >= 128).astype(float)


def _place(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape)
    h, w = img.shape
    if h > shape[0] or w > shape[1]:
        raise ValueError(f"rendered target {img.shape} does not fit grid {shape}")
    oy, ox = shape[0] // 2 - h // 2, shape[1] // 2 - w // 2
    out[oy:oy + h, ox:ox + w] = img
    return out


def load_image_amplitude(path, size: tuple[int, int]) -> np.ndarray:
    """Read an 8/16-bit grayscale raster, resize to ``size`` (rows, cols), scale to [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im).astype(np.float64)
    if arr.ndim == 3:
        arr = arr[..., :3].mean(axis=-1)
    peak = 65535.0 if arr.max() > 255 else 255.0
    arr = np.clip(arr / peak, 0, 1)
    im = Image.fromarray(arr.astype(np.float32))
    im = im.resize((size[1], size[0]), Image.Resampling.BICUBIC)
    return np.clip(np.asarray(im, dtype=np.float64), 0, 1)


def make_target(spec: TargetSpec, pitch: float, shape: tuple[int, int] | None = None) -> ComplexField:
    """Rasterize a target as a real amplitude field.

    Parameters
    ----------
    spec : TargetSpec
    pitch : float
        Sample spacing [m].
    shape : (int, int), optional
        Output grid; defaults to the extent rounded up to whole samples.
        The target is centered on the grid's optical axis.
    """
    shape = _grid_shape(spec, pitch, shape)
    ext_px = (int(round(spec.extent[0] / pitch)), int(round(spec.extent[1] / pitch)))
    if ext_px[0] > shape[0] or ext_px[1] > shape[1]:
        raise ValueError(f"target extent {ext_px} samples exceeds grid {shape}")
    if spec.kind == "usaf_bars":
        layout = usaf_layout(spec)
        for el in layout:
            if el.width < 2 * pitch:
                raise ValueError(
                    f"element ({el.group}, {el.element}) bar width {el.width * 1e6:.1f} um "
                    f"is under 2 samples at pitch {pitch * 1e6:.1f} um")
        img = _draw_bars(layout, pitch, shape)
    elif spec.kind == "text_mask":
        text = str(spec.parameters.get("text", ""))
        if not text.strip():
            img = np.zeros(shape)
        else:
            h = spec.parameters.get("height", spec.extent[0])
            img = _place(_render_text(text, max(2, int(round(h / pitch)))), shape)
            if img.shape and np.count_nonzero(img.any(axis=0)) > ext_px[1]:
                raise ValueError(f"text {text!r} is wider than the target extent")
    else:
        path = spec.parameters.get("path")
        if path is None:
            raise ValueError("image_file targets need a 'path' parameter")
        img = _place(load_image_amplitude(path, ext_px), shape)
    return ComplexField(img.astype(np.complex128), pitch)


def save_target_image(field: ComplexField, path, bits: int = 8) -> None:
    """Write ``|field|`` (assumed in [0, 1]) as an 8- or 16-bit grayscale PNG."""
    amp = np.clip(np.abs(field.data), 0, 1)
    if bits == 8:
        Image.fromarray(np.round(amp * 255).astype(np.uint8)).save(path)
    elif bits == 16:
        Image.fromarray(np.round(amp * 65535).astype(np.uint16)).save(Path(path))
    else:
        raise ValueError("bits must be 8 or 16")
