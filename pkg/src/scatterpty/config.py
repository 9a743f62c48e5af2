"""Pipeline configuration: an INI file with units spelled out in key names.

Unit conversion goes through :mod:`decimal` power-of-ten shifts, so
``parse_config(serialize_config(c)) == c`` holds exactly for any float.

Example::

    [geometry]
    wavelength_nm = 532
    r_c_mm = 2518
    r_s_mm = 2654
    r_sc_mm = 139
    a_s_mm = 37
    focal_length_mm = 12
    pixel_pitch_um = 6.9
    f_number = 1.6

    [target]
    kind = usaf_bars
    extent_mm = 5, 4
    elements = 2-1, 2-2, 3-1

    [planes]
    offsets_mm = 0, 50

    [retrieval]
    support_a_px = 500
    support_b_px = 400
    iterations = 200
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from .propagation import next_pow2
from .retrieval import RetrievalConfig
from .simulator import OpticsGeometry, PhotonBudget
from .targets import TargetSpec

__all__ = ["ConfigError", "PipelineConfig", "parse_config", "serialize_config", "load_config"]


class ConfigError(ValueError):
    """Invalid configuration; ``where`` names the section/key and line when known."""

    def __init__(self, message: str, section: str | None = None, key: str | None = None,
                 line: int | None = None):
        where = ".".join(p for p in (section, key) if p)
        if line is not None:
            where = f"line {line}: {where}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.section, self.key, self.line = section, key, line


@dataclass
class PipelineConfig:
    geometry: OpticsGeometry
    target: TargetSpec
    planes: tuple[float, ...]
    retrieval: RetrievalConfig
    noise: tuple[float, int] | None = None
    output_dir: str = "out"
    emit_plots: bool = False
    threshold: float = 0.1
    grid_size: int | None = None
    capture_frame: str = "screen"
    crop_px: int | None = None
    budget: PhotonBudget | None = None

    def __post_init__(self):
        self.planes = tuple(float(p) for p in self.planes)
        if not self.planes:
            raise ConfigError("at least one plane offset is required", "planes", "offsets_mm")
        if len(set(self.planes)) != len(self.planes):
            raise ConfigError("plane offsets must be distinct", "planes", "offsets_mm")
        if any(self.geometry.range_target_scatter + p <= 0 for p in self.planes):
            raise ConfigError("plane offset puts the target behind the screen", "planes", "offsets_mm")
        if self.retrieval.wavelength != self.geometry.wavelength:
            raise ConfigError("retrieval wavelength differs from geometry wavelength")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)", "analysis", "threshold")
        if self.capture_frame not in ("screen", "camera"):
            raise ConfigError("capture_frame must be 'screen' or 'camera'", "camera", "capture_frame")
        if self.noise is not None and self.noise[0] < 0:
            raise ConfigError("mean photon count must be non-negative", "noise", "mean_photons_per_pixel")
        n = self.target_grid
        if self.retrieval.support_a > n or self.retrieval.support_b > n:
            raise ConfigError(f"support exceeds the {n}-sample target grid", "retrieval")
        m = n * self.retrieval.resample_ratio
        if abs(m - round(m)) > 1e-9 or round(m) < 4:
            raise ConfigError(f"resample ratio does not map the {n}-grid onto an integer grid",
                              "retrieval", "resample_ratio")

    @property
    def distances(self) -> list[float]:
        """Target-to-screen distances, one per plane."""
        return [self.geometry.range_target_scatter + p for p in self.planes]

    @property
    def target_grid(self) -> int:
        """Samples per axis of the target grid (power of two unless overridden)."""
        if self.grid_size is not None:
            return self.grid_size
        need = max(self.geometry.scatter_extent, *self.target.extent) / self.retrieval.target_pitch
        return max(next_pow2(int(np.ceil(need - 1e-9))), next_pow2(int(np.ceil(4 / self.retrieval.resample_ratio))))

    @property
    def scatter_pitch(self) -> float:
        return self.retrieval.target_pitch / self.retrieval.resample_ratio

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


# --- unit handling -----------------------------------------------------------

def _to_units(x: float, exp: int) -> str:
    d = Decimal(repr(float(x))).scaleb(exp).normalize()
    return format(d, "f")


def _from_units(text: str, exp: int) -> float:
    return float(Decimal(text.strip()).scaleb(-exp))


_GEOMETRY_KEYS = [
    ("wavelength", "wavelength_nm", 9),
    ("range_camera_target", "r_c_mm", 3),
    ("range_target_scatter", "r_s_mm", 3),
    ("range_scatter_camera", "r_sc_mm", 3),
    ("scatter_extent", "a_s_mm", 3),
    ("focal_length", "focal_length_mm", 3),
    ("pixel_pitch", "pixel_pitch_um", 6),
    ("f_number", "f_number", 0),
    ("camera_aperture", "a_c_mm", 3),
]


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """Map ``(section, key)`` to its 1-based line number."""
    out: dict[tuple[str, str], int] = {}
    section = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            out[(section, "")] = i
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = i
    return out


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, lines: dict):
        self.cp, self.lines = cp, lines

    def error(self, msg, section, key=None):
        return ConfigError(msg, section, key, self.lines.get((section, key or "")))

    def has(self, section, key=None):
        if key is None:
            return self.cp.has_section(section)
        return self.cp.has_option(section, key) and self.cp.get(section, key).strip() != ""

    def raw(self, section, key):
        if not self.has(section, key):
            raise self.error("missing required value", section, key)
        return self.cp.get(section, key).strip()

    def number(self, section, key, exp=0):
        text = self.raw(section, key)
        try:
            return _from_units(text, exp)
        except InvalidOperation:
            raise self.error(f"not a number: {text!r}", section, key) from None

    def integer(self, section, key):
        text = self.raw(section, key)
        try:
            return int(text)
        except ValueError:
            raise self.error(f"not an integer: {text!r}", section, key) from None

    def boolean(self, section, key):
        try:
            return self.cp.getboolean(section, key)
        except ValueError:
            raise self.error(f"not a boolean: {self.raw(section, key)!r}", section, key) from None

    def numbers(self, section, key, exp=0):
        text = self.raw(section, key)
        try:
            return [_from_units(t, exp) for t in text.split(",") if t.strip()]
        except InvalidOperation:
            raise self.error(f"not a list of numbers: {text!r}", section, key) from None


def _parse_elements(r: _Reader) -> list[tuple[int, int]]:
    if r.has("target", "elements"):
        out = []
        for tok in r.raw("target", "elements").split(","):
            m = re.fullmatch(r"\s*(-?\d+)\s*-\s*(\d+)\s*", tok)
            if not m:
                raise r.error(f"element {tok.strip()!r} is not of the form group-element",
                              "target", "elements")
            out.append((int(m.group(1)), int(m.group(2))))
        return out
    if r.has("target", "groups"):
        groups = [int(g) for g in r.raw("target", "groups").split(",")]
        return [(g, e) for g in groups for e in range(1, 7)]
    raise r.error("usaf_bars targets need 'elements' or 'groups'", "target")


def _parse_target(r: _Reader) -> TargetSpec:
    kind = r.raw("target", "kind")
    extent = r.numbers("target", "extent_mm", 3)
    if len(extent) != 2:
        raise r.error("extent_mm needs two values (height, width)", "target", "extent_mm")
    if kind == "usaf_bars":
        params = {"elements": _parse_elements(r)}
    elif kind == "text_mask":
        params = {"text": r.cp.get("target", "text", fallback="")}
        if r.has("target", "text_height_mm"):
            params["height"] = r.number("target", "text_height_mm", 3)
    elif kind == "image_file":
        params = {"path": r.raw("target", "path")}
    else:
        raise r.error(f"unknown target kind {kind!r}", "target", "kind")
    try:
        return TargetSpec(kind, (extent[0], extent[1]), params)
    except ValueError as e:
        raise r.error(str(e), "target") from None


def parse_config(text: str) -> PipelineConfig:
    """Parse INI text into a validated :class:`PipelineConfig`."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    r = _Reader(cp, _line_index(text))
    for s in ("geometry", "target", "planes", "retrieval"):
        if not r.has(s):
            raise ConfigError("missing section", s)

    g = {}
    for name, key, exp in _GEOMETRY_KEYS:
        if name == "camera_aperture" and not r.has("geometry", key):
            continue
        g[name] = r.number("geometry", key, exp)
    try:
        geometry = OpticsGeometry(**g)
    except ValueError as e:
        raise r.error(str(e), "geometry") from None

    target = _parse_target(r)
    planes = tuple(r.numbers("planes", "offsets_mm", 3))

    rk = {"wavelength": geometry.wavelength,
          "support_a": r.integer("retrieval", "support_a_px"),
          "support_b": r.integer("retrieval", "support_b_px")}
    for name, key, kind in [("iterations", "iterations", "int"), ("seed", "seed", "int"),
                            ("resample_ratio", "resample_ratio", 0),
                            ("target_pitch", "target_pitch_um", 6),
                            ("realness_constraint", "realness_constraint", "bool"),
                            ("plane_order_shuffle", "plane_order_shuffle", "bool")]:
        if not r.has("retrieval", key):
            continue
        if kind == "int":
            rk[name] = r.integer("retrieval", key)
        elif kind == "bool":
            rk[name] = r.boolean("retrieval", key)
        else:
            rk[name] = r.number("retrieval", key, kind)
    if r.has("retrieval", "precision"):
        rk["precision"] = r.raw("retrieval", "precision")
    if r.has("retrieval", "stage_fractions"):
        rk["stage_boundaries"] = tuple(r.numbers("retrieval", "stage_fractions"))
    try:
        retrieval = RetrievalConfig(**rk)
    except ValueError as e:
        raise r.error(str(e), "retrieval") from None
    if retrieval.seed < 0 or retrieval.seed >= 2 ** 64:
        raise r.error("seed must be an unsigned 64-bit integer", "retrieval", "seed")

    noise = None
    if r.has("noise"):
        noise = (r.number("noise", "mean_photons_per_pixel"), r.integer("noise", "seed"))

    budget = None
    if r.has("budget"):
        try:
            budget = PhotonBudget(
                scatter_fraction=r.number("budget", "scatter_fraction"),
                exposure_time=r.number("budget", "exposure_time_s"),
                source_power=r.number("budget", "source_power_photons_per_s"),
                min_detectable_photons=r.number("budget", "min_detectable_photons"),
                illumination_density=(r.number("budget", "illumination_density_photons_per_s_m2")
                                      if r.has("budget", "illumination_density_photons_per_s_m2")
                                      else None))
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise r.error(str(e), "budget") from None

    kw = {}
    if r.has("output", "dir"):
        kw["output_dir"] = r.raw("output", "dir")
    if r.has("output", "emit_plots"):
        kw["emit_plots"] = r.boolean("output", "emit_plots")
    if r.has("analysis", "threshold"):
        kw["threshold"] = r.number("analysis", "threshold")
    if r.has("retrieval", "grid_size"):
        kw["grid_size"] = r.integer("retrieval", "grid_size")
    if r.has("camera", "capture_frame"):
        kw["capture_frame"] = r.raw("camera", "capture_frame")
    if r.has("camera", "crop_px"):
        kw["crop_px"] = r.integer("camera", "crop_px")
    return PipelineConfig(geometry, target, planes, retrieval, noise, budget=budget, **kw)


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text)


def _join(values, exp=0) -> str:
    return ", ".join(_to_units(v, exp) for v in values)


def serialize_config(cfg: PipelineConfig) -> str:
    """Render ``cfg`` as INI text; the inverse of :func:`parse_config`."""
    cp = configparser.ConfigParser(interpolation=None)
    cp["geometry"] = {key: _to_units(getattr(cfg.geometry, name), exp)
                      for name, key, exp in _GEOMETRY_KEYS}
    t = cfg.target
    sec = {"kind": t.kind, "extent_mm": _join(t.extent, 3)}
    if t.kind == "usaf_bars":
        sec["elements"] = ", ".join(f"{g}-{e}" for g, e in t.elements)
    elif t.kind == "text_mask":
        sec["text"] = str(t.parameters.get("text", ""))
        if "height" in t.parameters:
            sec["text_height_mm"] = _to_units(t.parameters["height"], 3)
    else:
        sec["path"] = str(t.parameters["path"])
    cp["target"] = sec
    cp["planes"] = {"offsets_mm": _join(cfg.planes, 3)}
    rc = cfg.retrieval
    sec = {"support_a_px": str(rc.support_a), "support_b_px": str(rc.support_b),
           "iterations": str(rc.iterations), "resample_ratio": _to_units(rc.resample_ratio, 0),
           "target_pitch_um": _to_units(rc.target_pitch, 6), "seed": str(rc.seed),
           "realness_constraint": str(rc.realness_constraint).lower(),
           "plane_order_shuffle": str(rc.plane_order_shuffle).lower(),
           "precision": rc.precision}
    if rc.stage_boundaries is not None:
        sec["stage_fractions"] = _join(rc.stage_boundaries)
    if cfg.grid_size is not None:
        sec["grid_size"] = str(cfg.grid_size)
    cp["retrieval"] = sec
    if cfg.noise is not None:
        cp["noise"] = {"mean_photons_per_pixel": _to_units(cfg.noise[0], 0),
                       "seed": str(cfg.noise[1])}
    if cfg.budget is not None:
        b = cfg.budget
        sec = {"scatter_fraction": _to_units(b.scatter_fraction, 0),
               "exposure_time_s": _to_units(b.exposure_time, 0),
               "source_power_photons_per_s": _to_units(b.source_power, 0),
               "min_detectable_photons": _to_units(b.min_detectable_photons, 0)}
        if b.illumination_density is not None:
            sec["illumination_density_photons_per_s_m2"] = _to_units(b.illumination_density, 0)
        cp["budget"] = sec
    sec = {"capture_frame": cfg.capture_frame}
    if cfg.crop_px is not None:
        sec["crop_px"] = str(cfg.crop_px)
    cp["camera"] = sec
    cp["analysis"] = {"threshold": _to_units(cfg.threshold, 0)}
    cp["output"] = {"dir": cfg.output_dir, "emit_plots": str(cfg.emit_plots).lower()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
