"""Experiment runner: ``airbeam <command> [--config FILE] [--out DIR] ...``.

Every command writes its CSVs, PGM images and PNG figures into ``--out``
together with ``config.resolved.txt``, the canonical echo of the settings
used.  Exit codes: 0 success, 2 configuration error, 3 I/O error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import math
import statistics
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from airbeam import io as aio
from airbeam import plotting
from airbeam.array import (Direction, DirectionGrid, MicrophoneArray, azimuth_scan_grid, far_field_delays,
                           hex_circular_array, spiral_array, two_axis_grid)
from airbeam.beamform import BeamformerSpec, beamform_images, set_threads
from airbeam.config import SCENARIOS, ConfigError, ExperimentConfig
from airbeam.metrics import (beamwidth_3db, compute_psfs, dynamic_range, image_snr,
                             peak_sidelobe_level, range_width_3db, resolution_sweep, to_db)
from airbeam.pipeline import PipelineParams, form_images, range_window, simulate_scene
from airbeam.signals import ChirpSpec, MultichannelRecording, Reflector

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class NumericFailure(ArithmeticError):
    pass


# ------------------------------------------------------------------ helpers

def pipeline_params(cfg: ExperimentConfig) -> PipelineParams:
    chirp = ChirpSpec(cfg.chirp_f_start, cfg.chirp_f_end, cfg.chirp_duration, cfg.sample_rate,
                      taper=cfg.chirp_taper)
    return PipelineParams(cfg.sample_rate, cfg.sound_speed, chirp, cfg.envelope_cutoff,
                          cfg.matched_filter, cfg.interpolation, cfg.spreading)


def build_array(cfg: ExperimentConfig) -> MicrophoneArray:
    if cfg.array == "spiral":
        return spiral_array(cfg.array_mics, cfg.array_radius)
    if cfg.array == "hex":
        return hex_circular_array(cfg.array_radius, cfg.hex_edge)
    return aio.read_geometry_csv(cfg.geometry)


def horizontal_grid(cfg: ExperimentConfig, step_deg: float, span: Optional[float] = None):
    lo, hi = (cfg.scan_az_min, cfg.scan_az_max) if span is None else (-span, span)
    return azimuth_scan_grid(math.radians(lo), math.radians(hi), math.radians(step_deg),
                             math.radians(cfg.scan_elevation))


def _spec_cols(spec: BeamformerSpec) -> Dict[str, object]:
    return {"beamformer": spec.label, "order": spec.order, "cf": spec.apply_cf}


def _source(cfg: ExperimentConfig) -> Reflector:
    return Reflector(cfg.source_range, Direction.from_degrees(cfg.source_azimuth, cfg.source_elevation))


def _file_label(spec: BeamformerSpec) -> str:
    return spec.label.lower().replace("-", "_")


# ----------------------------------------------------------------- commands

def cmd_psf(cfg: ExperimentConfig, out: Path) -> None:
    params = pipeline_params(cfg)
    array = build_array(cfg)
    specs = cfg.beamformer_specs()
    src = _source(cfg)
    grid = horizontal_grid(cfg, cfg.scan_step)
    psfs = compute_psfs(array, grid, specs, src, params, cfg.psf_half_window)
    dr2d: Dict[str, float] = {}
    if cfg.psf_two_axis:
        g2 = two_axis_grid(*(math.radians(v) for v in (cfg.psf_az_min, cfg.psf_az_max, cfg.psf_el_min,
                                                      cfg.psf_el_max, cfg.psf_step)))
        for p in compute_psfs(array, g2, specs, src, params, cfg.psf2d_half_window):
            dr2d[p.label] = dynamic_range(p)
    rows = []
    az = np.degrees(grid.azimuth)
    for spec, p in zip(specs, psfs):
        db = p.image.pixels
        aio.write_pgm(np.maximum(db, cfg.db_floor), cfg.db_floor, out / f"psf_{_file_label(spec)}.pgm")
        pk = p.peak_direction
        rows.append({**_spec_cols(spec), "peak_direction_index": p.peak[0], "peak_time_index": p.peak[1],
                     "peak_azimuth_deg": math.degrees(pk.azimuth), "peak_elevation_deg": math.degrees(pk.elevation),
                     "peak_sidelobe_db": peak_sidelobe_level(p), "dynamic_range_db": dynamic_range(p),
                     "beamwidth_deg": beamwidth_3db(p), "range_width_m": range_width_3db(p),
                     "dynamic_range_2d_db": dr2d.get(p.label, math.nan)})
    aio.write_csv(rows, "psf", out / "psf_summary.csv")
    plotting.plot_directional_psf(az, {p.label: p.directional_db for p in psfs}, out / "psf_directional.png",
                                  floor=cfg.db_floor)
    plotting.plot_bars({r["beamformer"]: r["dynamic_range_db"] for r in rows}, out / "psf_dynamic_range.png",
                       "dynamic range [dB]", "PSF dynamic range")


def snr_guard(cfg: ExperimentConfig, array, params) -> float:
    """Guard half-angle in radians: ``guard_lobes`` DAS -3 dB half-widths."""
    fine = horizontal_grid(cfg, min(cfg.scan_step, 0.25))
    das_psf = compute_psfs(array, fine, [BeamformerSpec(1)], _source(cfg), params, cfg.psf_half_window)[0]
    return math.radians(cfg.guard_lobes * beamwidth_3db(das_psf) / 2)


def cmd_image_snr(cfg: ExperimentConfig, out: Path) -> None:
    params = pipeline_params(cfg)
    array = build_array(cfg)
    specs = cfg.beamformer_specs()
    src = _source(cfg)
    grid = horizontal_grid(cfg, cfg.snr_step)
    delays = far_field_delays(array, grid, params.sound_speed)
    win = range_window(params, cfg.snr_range_min, cfg.snr_range_max)
    guard = snr_guard(cfg, array, params)
    guard_samples = params.pulse_samples
    target = (grid.nearest(src.direction), params.range_to_sample(src.range) - win[0])
    n_samples = win[1] + params.pulse_samples + 1000
    rows, means = [], []
    for level in cfg.snr_levels:
        acc: Dict[str, List[float]] = {s.label: [] for s in specs}
        for k in range(cfg.snr_seeds):
            rec = simulate_scene(array, [src], params, n_samples=n_samples, snr_mic=level, seed=cfg.seed + k)
            for spec, img in zip(specs, form_images(rec, delays, specs, params, win)):
                rep = image_snr(img, target, guard, guard_samples)
                acc[spec.label].append(rep.snr_image)
                rows.append({**_spec_cols(spec), "snr_mic_db": level, "seed": cfg.seed + k,
                             "snr_image_db": rep.snr_image, "e_off": rep.e_off, "capped": rep.capped,
                             "guard_deg": math.degrees(guard), "guard_samples": guard_samples})
        for spec in specs:
            means.append({**_spec_cols(spec), "snr_mic_db": level, "n_seeds": cfg.snr_seeds,
                          "snr_image_db": statistics.fmean(acc[spec.label])})
    aio.write_csv(rows, "image_snr", out / "image_snr.csv")
    aio.write_csv(means, "image_snr_mean", out / "image_snr_mean.csv")
    curves = {s.label: [m["snr_image_db"] for m in means if m["beamformer"] == s.label] for s in specs}
    plotting.plot_curves(list(cfg.snr_levels), curves, out / "image_snr.png", "SNR_mic [dB]",
                         "SNR_image [dB]", "Image SNR (mean over seeds)")


def cmd_resolution(cfg: ExperimentConfig, out: Path) -> None:
    params = pipeline_params(cfg)
    array = build_array(cfg)
    specs = cfg.beamformer_specs()
    grid = horizontal_grid(cfg, cfg.scan_step, span=cfg.resolution_span)
    halves = cfg.half_angles()
    curves = resolution_sweep(array, specs, halves, grid, params, cfg.resolution_range)
    rows, summary, profiles = [], [], []
    for spec in specs:
        c = curves[spec.label]
        for a, ok, dip in zip(c.half_angles, c.resolved, c.dips):
            rows.append({**_spec_cols(spec), "half_angle_deg": float(a), "resolved": bool(ok),
                         "dip_db": math.nan if dip is None else dip})
        for a, lv in zip(c.half_angles, c.levels_db):
            for az, v in zip(c.azimuth, lv):
                profiles.append({**_spec_cols(spec), "half_angle_deg": float(a), "azimuth_deg": float(az),
                                 "level_db": float(v)})
        summary.append({**_spec_cols(spec), "min_resolvable_half_angle_deg": c.min_resolvable()})
    aio.write_csv(rows, "resolution", out / "resolution.csv")
    aio.write_csv(summary, "resolution_summary", out / "resolution_summary.csv")
    aio.write_csv(profiles, "resolution_profile", out / "resolution_profile.csv")
    first = next(iter(curves.values()))
    plotting.plot_resolution(first.half_angles, first.azimuth,
                             {k: v.levels_db for k, v in curves.items()}, out / "resolution.png")


def cmd_beamwidth(cfg: ExperimentConfig, out: Path) -> None:
    params = pipeline_params(cfg)
    specs = cfg.beamformer_specs()
    grid = horizontal_grid(cfg, cfg.scan_step)
    src = _source(cfg)
    rows = []
    curves: Dict[str, List[float]] = {s.label: [] for s in specs}
    for radius in cfg.radii:
        array = hex_circular_array(radius, cfg.hex_edge)
        for spec, p in zip(specs, compute_psfs(array, grid, specs, src, params, cfg.psf_half_window)):
            bw = beamwidth_3db(p)
            curves[spec.label].append(bw)
            rows.append({"radius_m": radius, "n_mics": array.n_mics, **_spec_cols(spec), "beamwidth_deg": bw})
    aio.write_csv(rows, "beamwidth", out / "beamwidth.csv")
    plotting.plot_curves([r * 100 for r in cfg.radii], curves, out / "beamwidth.png", "array radius [cm]",
                         "-3 dB beamwidth [deg]", "Beamwidth against array radius")


def cmd_beamform_file(cfg: ExperimentConfig, out: Path) -> None:
    if not cfg.input:
        raise ConfigError("beamform-file needs input = <recording path>")
    rec = aio.read_recording(cfg.input)
    if cfg.array == "file":
        array = aio.read_geometry_csv(cfg.geometry)
    else:
        array = build_array(cfg)
    if array.n_mics != rec.n_channels:
        raise ConfigError(f"geometry has {array.n_mics} microphones, recording {rec.n_channels} channels")
    if rec.sample_rate != cfg.sample_rate:
        cfg = cfg.from_mapping({"sample_rate": repr(rec.sample_rate)}, base=cfg)
    params = pipeline_params(cfg)
    specs = cfg.beamformer_specs()
    grid = horizontal_grid(cfg, cfg.file_step)
    delays = far_field_delays(array, grid, params.sound_speed)
    start, stop = range_window(params, cfg.range_min, cfg.range_max)
    stop = min(stop, rec.n_samples)
    if stop <= start:
        raise ConfigError("range window lies beyond the end of the recording")
    rows = []
    for spec, img in zip(specs, form_images(rec, delays, specs, params, (start, stop))):
        db = to_db(img.pixels)
        name = f"image_{_file_label(spec)}.pgm"
        aio.write_pgm(np.maximum(db, cfg.db_floor), cfg.db_floor, out / name)
        d, t = np.unravel_index(int(np.argmax(img.pixels)), img.pixels.shape)
        rows.append({**_spec_cols(spec), "n_directions": len(grid), "n_samples": img.pixels.shape[1],
                     "peak_azimuth_deg": math.degrees(grid.azimuth[d]),
                     "peak_elevation_deg": math.degrees(grid.elevation[d]),
                     "peak_range_m": float(img.ranges[t]), "pgm": name})
        r = img.ranges
        plotting.plot_image(db, [r[0], r[-1], math.degrees(grid.azimuth[0]), math.degrees(grid.azimuth[-1])],
                            out / f"image_{_file_label(spec)}.png", cfg.db_floor, spec.label)
    aio.write_csv(rows, "beamform_file", out / "beamform_file.csv")


def _time_call(fn, repeats: int, warmup: int) -> List[float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return times


def run_bench(cfg: ExperimentConfig) -> List[Dict[str, object]]:
    """Wall-clock DMAS5 image timings: median of ``bench_repeats`` runs after ``bench_warmup``."""
    rng = np.random.default_rng(cfg.seed)
    spec = BeamformerSpec(5)
    T = cfg.bench_samples
    rows = []

    def case(name, n_mics, n_dirs):
        array = spiral_array(n_mics, cfg.array_radius)
        grid = DirectionGrid(np.linspace(-math.pi / 2, math.pi / 2, n_dirs), np.zeros(n_dirs))
        delays = far_field_delays(array, grid, cfg.sound_speed)
        pad = int(math.ceil(array.diameter / cfg.sound_speed * cfg.sample_rate)) + 4
        rec = MultichannelRecording(rng.uniform(-1, 1, (n_mics, T + 2 * pad)), cfg.sample_rate)
        times = _time_call(lambda: beamform_images(rec, delays, [spec], pad, T, cfg.interpolation),
                           cfg.bench_repeats, cfg.bench_warmup)
        med = statistics.median(times)
        rows.append({"case": name, "beamformer": spec.label, "n_mics": n_mics, "n_directions": len(grid),
                     "n_samples": T, "repeats": cfg.bench_repeats, "median_s": med, "min_s": min(times),
                     "per_pixel_ns": med / (len(grid) * T) * 1e9})

    for m in cfg.bench_directions:
        case("directions", cfg.bench_mics[0], m)
    for n in cfg.bench_mics:
        case("mics", n, cfg.bench_mic_directions)
    return rows


def bench_ratios(rows: Sequence[Dict[str, object]]):
    """``(time(max dirs) / time(min dirs), dir ratio, per-pixel(max N) / per-pixel(min N), N ratio)``."""
    d = sorted((r for r in rows if r["case"] == "directions"), key=lambda r: r["n_directions"])
    n = sorted((r for r in rows if r["case"] == "mics"), key=lambda r: r["n_mics"])
    return (d[-1]["median_s"] / d[0]["median_s"], d[-1]["n_directions"] / d[0]["n_directions"],
            n[-1]["per_pixel_ns"] / n[0]["per_pixel_ns"], n[-1]["n_mics"] / n[0]["n_mics"])


def cmd_bench(cfg: ExperimentConfig, out: Path) -> None:
    rows = run_bench(cfg)
    aio.write_csv(rows, "bench", out / "bench.csv")
    dirs = [r for r in rows if r["case"] == "directions"]
    plotting.plot_curves([r["n_directions"] for r in dirs], {"DMAS5": [r["median_s"] for r in dirs]},
                         out / "bench.png", "directions", "median wall time [s]", "DMAS5 image time")
    t_ratio, d_ratio, p_ratio, n_ratio = bench_ratios(rows)
    print(f"time ratio {t_ratio:.2f} for {d_ratio:.0f}x directions; "
          f"per-pixel ratio {p_ratio:.2f} for {n_ratio:.0f}x microphones")
    # near-linear growth: allow 1.5x the ideal ratio for fixed overheads and cache effects
    if t_ratio > 1.5 * d_ratio or p_ratio > 1.25 * n_ratio:
        raise NumericFailure("runtime growth is not near-linear")


COMMANDS = {
    "psf": cmd_psf,
    "image-snr": cmd_image_snr,
    "resolution": cmd_resolution,
    "beamwidth-sweep": cmd_beamwidth,
    "beamform-file": cmd_beamform_file,
    "bench": cmd_bench,
}


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airbeam", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", default=f"out/{name}", help="output directory")
        p.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
        p.add_argument("--seed", type=int, help="base random seed")
        p.add_argument("--full", action="store_true", default=None, help="0.05 deg scans")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        if name == "beamform-file":
            p.add_argument("--input", help="recording file")
            p.add_argument("--geometry", help="geometry CSV (implies array = file)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    flags = {"threads": args.threads, "seed": args.seed, "full": args.full}
    if args.command == "beamform-file":
        flags["input"] = args.input
        if args.geometry:
            flags.update(geometry=args.geometry, array="file")
    try:
        cfg = ExperimentConfig.load(args.config, args.overrides, scenario=args.command, **flags)
    except ConfigError as exc:
        print(f"airbeam: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.resolved.txt").write_text(cfg.dumps())
        set_threads(cfg.threads or None)
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"airbeam: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, aio.RecordingFormatError, aio.GeometryFormatError) as exc:
        print(f"airbeam: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"airbeam: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # geometry and scene validation failures
        print(f"airbeam: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
