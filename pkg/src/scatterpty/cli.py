"""Command-line driver: ``scatterpty {simulate,reconstruct,analyze,report}``.

Output layout under ``--out`` (default from the config)::

    config.ini                    effective configuration
    target.png, target.cplx       ground truth (simulate)
    measurements/plane_NN.png     16-bit intensity + .json sidecar (simulate)
    reconstruction/estimate.*     modulus PNG + sidecar, raw complex (reconstruct)
    reconstruction/residuals.csv  per-visit amplitude residuals (reconstruct)
    analysis/metrics.csv          MetricReport (analyze)
    analysis/summary.txt
    analysis/*.svg                plots with --emit-plots
    report.csv                    geometry and photon-budget figures (report)

Exit status: 0 on success, 2 on invalid input, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .analysis import MetricReport, evaluate
from .config import ConfigError, PipelineConfig, load_config, serialize_config
from .field import ComplexField, GridError
from .retrieval import NumericalFailure, ScatterMeasurement, run_retrieval
from .simulator import (
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
from .targets import make_target

__all__ = ["main", "cmd_simulate", "cmd_reconstruct", "cmd_analyze", "cmd_report"]

log = logging.getLogger("scatterpty")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _noise_seed(seed: int, plane: int) -> int:
    return int(np.random.SeedSequence([seed, plane]).generate_state(1, np.uint64)[0])


def truth_field(cfg: PipelineConfig) -> ComplexField:
    n = cfg.target_grid
    return make_target(cfg.target, cfg.retrieval.target_pitch, (n, n))


def cmd_simulate(cfg: PipelineConfig) -> list[Path]:
    """Write one measurement per plane (plus ground truth); returns the measurement paths."""
    out = Path(cfg.output_dir)
    (out / "measurements").mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(serialize_config(cfg))
    truth = truth_field(cfg)
    sio.write_complex(out / "target.cplx", truth)
    sio.write_raster(out / "target.png", np.abs(truth.data), {"pitch_m": truth.pitch})
    rc = cfg.retrieval
    paths = []
    for k, z in enumerate(cfg.distances):
        m = simulate_scatter_image(truth, z, cfg.geometry, rc.resample_ratio,
                                   stage_boundaries=None if rc.stage_boundaries is None
                                   else [b * z for b in rc.stage_boundaries])
        extra = {"plane_offset_m": cfg.planes[k]}
        if cfg.noise is not None:
            m = add_poisson_noise(m, cfg.noise[0], _noise_seed(cfg.noise[1], k))
            extra["mean_photons_per_pixel"] = cfg.noise[0]
        path = out / "measurements" / f"plane_{k:02d}.png"
        if cfg.capture_frame == "camera":
            crop = cfg.crop_px or int(np.floor(cfg.geometry.scatter_extent / screen_gsd(cfg.geometry)))
            cam = screen_to_camera(m.intensity, cfg.geometry, crop)
            cam.meta.update(m.intensity.meta)
            m = ScatterMeasurement(cam, z)
            sio.write_measurement(path, m, frame="camera", crop_px=crop, **extra)
        else:
            sio.write_measurement(path, m, **extra)
        log.info("plane %d: z = %.4f m -> %s", k, z, path)
        paths.append(path)
    return paths


def ingest(paths, cfg: PipelineConfig) -> list[ScatterMeasurement]:
    """Load measurement files onto the retrieval grid, projecting camera frames."""
    n_scatter = int(round(cfg.target_grid * cfg.retrieval.resample_ratio))
    out = []
    for p in paths:
        m, meta = sio.read_measurement(p)
        if meta.get("frame") == "camera":
            crop = int(meta.get("crop_px") or cfg.crop_px or min(m.shape))
            img = project_camera_to_screen(m, cfg.geometry, crop, cfg.scatter_pitch)
            m = measurement_from_image(img, meta["distance_m"], n_scatter)
            m.intensity.meta["photon_scale"] = meta.get("photon_scale", 1.0)
        out.append(photons_to_field_units(m))
    return out


def cmd_reconstruct(paths, cfg: PipelineConfig) -> dict[str, Path]:
    if not paths:
        raise ConfigError("no measurement files given")
    measurements = ingest(paths, cfg)
    result = run_retrieval(measurements, cfg.retrieval)
    out = Path(cfg.output_dir) / "reconstruction"
    out.mkdir(parents=True, exist_ok=True)
    files = {"estimate": out / "estimate.cplx", "modulus": out / "estimate.png",
             "residuals": out / "residuals.csv"}
    est = ComplexField(result.estimate.data.astype(np.complex128), result.estimate.pitch)
    sio.write_complex(files["estimate"], est)
    sio.write_raster(files["modulus"], np.abs(est.data), {"pitch_m": est.pitch})
    sio.write_residuals(files["residuals"], result)
    return files


def _plot_residuals(residuals: np.ndarray, n_planes: int, path: Path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "scatterpty"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    per_iter = residuals.reshape(-1, n_planes).mean(axis=1)
    ax.semilogy(np.arange(1, per_iter.size + 1), per_iter)
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean amplitude residual")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_contrast(report: MetricReport, cfg: PipelineConfig, path: Path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from .targets import usaf_frequency
    plt.rcParams["svg.hashsalt"] = "scatterpty"
    freqs = [usaf_frequency(g, e) for g, e, _ in report.contrast_by_element]
    cons = [c for _, _, c in report.contrast_by_element]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(freqs, cons, "o-")
    ax.axhline(cfg.threshold, ls="--", color="gray")
    ax.set_xlabel("spatial frequency [lp/mm]")
    ax.set_ylabel("bar contrast")
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_analyze(estimate_path, cfg: PipelineConfig, truth_path=None) -> MetricReport:
    est = sio.read_complex(estimate_path)
    if truth_path is not None and Path(truth_path).exists():
        truth = sio.read_complex(truth_path)
    else:
        truth = truth_field(cfg)
    layout = cfg.target if cfg.target.kind == "usaf_bars" else None
    report = evaluate(est, truth, layout, cfg.threshold, direct_view_ifov(cfg.geometry))
    out = Path(cfg.output_dir) / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(report.to_csv(), newline="")
    (out / "summary.txt").write_text(report.summary() + "\n")
    if cfg.emit_plots:
        res_path = Path(estimate_path).with_name("residuals.csv")
        if res_path.exists():
            with open(res_path, newline="") as fh:
                n_planes = len({row["plane"] for row in csv.DictReader(fh)})
            _plot_residuals(sio.read_residuals(res_path), n_planes, out / "residuals.svg")
        if report.contrast_by_element:
            _plot_contrast(report, cfg, out / "contrast.svg")
    return report


def geometry_report(cfg: PipelineConfig) -> list[tuple[str, float, str]]:
    g = cfg.geometry
    rows = [
        ("alpha_predicted", alpha_factor(g), ""),
        ("resolution_limit", resolution_limit(g), "m"),
        ("direct_view_ifov", direct_view_ifov(g), "m"),
        ("screen_gsd", screen_gsd(g), "m"),
        ("fov_on_target", fov_on_target(g), "rad"),
        ("camera_aperture", g.camera_aperture, "m"),
        ("target_grid", float(cfg.target_grid), "samples"),
        ("scatter_pitch", cfg.scatter_pitch, "m"),
    ]
    b = cfg.budget
    if b is not None:
        rows += [("flux_ratio", b.flux_ratio, ""),
                 ("alpha_bound", alpha_bound(g, b), ""),
                 ("scatter_extent_bound_diffraction", scatter_extent_bound_diffraction(g, b), "m"),
                 ("source_power_equivalent", b.source_power / photon_rate(1.0, g.wavelength), "W")]
        if b.illumination_density is not None:
            rows.append(("scatter_extent_bound", scatter_extent_bound(g, b), "m"))
    return rows


def cmd_report(cfg: PipelineConfig) -> list[tuple[str, float, str]]:
    """Predicted figures of merit, plus measured ones when an analysis exists."""
    rows = geometry_report(cfg)
    out = Path(cfg.output_dir)
    metrics = out / "analysis" / "metrics.csv"
    if metrics.exists():
        rep = MetricReport.from_csv(metrics.read_text())
        rows += [("nrmse_aligned", rep.nrmse_aligned, ""),
                 ("resolved_lp_mm", rep.resolved_lp_mm, "lp/mm"),
                 ("alpha_achieved", rep.alpha_achieved, "")]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["quantity", "value", "unit"])
        for name, v, unit in rows:
            w.writerow([name, repr(float(v)), unit])
    return rows


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scatterpty", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "reconstruct", "analyze", "report"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="INI configuration file")
        s.add_argument("--seed", type=int, help="overrides retrieval and noise seeds")
        s.add_argument("--planes", help="comma-separated plane offsets in mm")
        s.add_argument("--iterations", type=int)
        s.add_argument("--threshold", type=float)
        s.add_argument("--emit-plots", action="store_true")
        s.add_argument("--out", help="output directory")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "reconstruct":
            s.add_argument("measurements", nargs="*",
                           help="measurement PNGs (default: <out>/measurements/*.png)")
        if name == "analyze":
            s.add_argument("--estimate", help="complex estimate (default: <out>/reconstruction/estimate.cplx)")
            s.add_argument("--truth", help="complex ground truth (default: <out>/target.cplx or the config target)")
    return p


def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    import dataclasses
    rc = cfg.retrieval
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        rc = dataclasses.replace(rc, seed=args.seed)
        if cfg.noise is not None:
            changes["noise"] = (cfg.noise[0], args.seed)
    if args.iterations is not None:
        try:
            rc = dataclasses.replace(rc, iterations=args.iterations)
        except ValueError as e:
            raise ConfigError(str(e), "--iterations") from None
    changes["retrieval"] = rc
    if args.planes is not None:
        try:
            changes["planes"] = tuple(float(t) * 1e-3 for t in args.planes.split(",") if t.strip())
        except ValueError:
            raise ConfigError(f"--planes: not a list of numbers: {args.planes!r}") from None
    if args.threshold is not None:
        changes["threshold"] = args.threshold
    if args.emit_plots:
        changes["emit_plots"] = True
    if args.out is not None:
        changes["output_dir"] = args.out
    return cfg.replace(**changes)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out = Path(cfg.output_dir)
        if args.command == "simulate":
            for p in cmd_simulate(cfg):
                print(p)
        elif args.command == "reconstruct":
            paths = args.measurements or sorted((out / "measurements").glob("plane_*.png"))
            for p in cmd_reconstruct([Path(p) for p in paths], cfg).values():
                print(p)
        elif args.command == "analyze":
            est = args.estimate or out / "reconstruction" / "estimate.cplx"
            truth = args.truth or out / "target.cplx"
            print(cmd_analyze(est, cfg, truth).summary())
        else:
            for name, v, unit in cmd_report(cfg):
                print(f"{name:34s} {v:.6g} {unit}")
    except NumericalFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, GridError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
