"""Flat ``key = value`` experiment configuration.

Every key has a default.  Values come from, in increasing priority: the
defaults, a config file (``--config``), ``--set key=value`` overrides and
the dedicated command-line flags.  Angles are in degrees, distances in
meters, times in seconds, frequencies in Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

SCENARIOS = ("psf", "image-snr", "resolution", "beamwidth-sweep", "beamform-file", "bench")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "psf"
    # acquisition and pipeline
    sound_speed: float = 343.0
    sample_rate: float = 450e3
    chirp_f_start: float = 25e3
    chirp_f_end: float = 50e3
    chirp_duration: float = 2.5e-3
    chirp_taper: float = 0.0
    envelope_cutoff: float = 5e3
    matched_filter: bool = True
    interpolation: str = "linear"
    spreading: bool = False
    # array
    array: str = "spiral"
    array_mics: int = 32
    array_radius: float = 0.05
    hex_edge: float = 0.005
    geometry: str = ""
    # beamformers
    beamformers: Tuple[str, ...] = ("das", "dmas2", "dmas3", "dmas4", "dmas5")
    cf: str = "both"
    # point source
    source_range: float = 1.0
    source_azimuth: float = 0.0
    source_elevation: float = 0.0
    # horizontal scans
    scan_az_min: float = -90.0
    scan_az_max: float = 90.0
    scan_step: float = 0.25
    scan_elevation: float = 0.0
    # psf
    psf_two_axis: bool = True
    psf_step: float = 1.0
    psf_az_min: float = -90.0
    psf_az_max: float = 90.0
    psf_el_min: float = -90.0
    psf_el_max: float = 90.0
    psf_half_window: float = 0.5e-3
    psf2d_half_window: float = 0.05e-3
    db_floor: float = -120.0
    # image snr
    snr_levels: Tuple[float, ...] = (-40.0, -30.0, -20.0, -10.0, 0.0, 10.0)
    snr_seeds: int = 5
    snr_step: float = 1.0
    snr_range_min: float = 0.5
    snr_range_max: float = 1.5
    guard_lobes: float = 3.0
    # resolution
    resolution_range: float = 1.5
    half_angle_min: float = 0.25
    half_angle_max: float = 10.0
    half_angle_step: float = 0.25
    resolution_span: float = 30.0
    # beamwidth sweep
    radii: Tuple[float, ...] = (0.01, 0.02, 0.04, 0.06)
    # beamform-file
    input: str = ""
    file_step: float = 1.0
    range_min: float = 0.1
    range_max: float = 6.0
    # bench
    bench_directions: Tuple[int, ...] = (100, 200, 400)
    bench_mics: Tuple[int, ...] = (64, 512)
    bench_samples: int = 500
    bench_mic_directions: int = 100
    bench_repeats: int = 50
    bench_warmup: int = 5
    # execution
    seed: int = 0
    threads: int = 0
    full: bool = False

    # --------------------------------------------------------------- parsing
    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values: Dict[str, str], base: Optional["ExperimentConfig"] = None) -> "ExperimentConfig":
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        parsed = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            parsed[key] = _parse_value(key, types[key], raw, getattr(base, key))
        cfg = replace(base, **parsed)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: Optional[str], overrides: Iterable[str] = (), scenario: Optional[str] = None,
             **flags) -> "ExperimentConfig":
        values: Dict[str, str] = {}
        if path:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            values.update(parse_text(text))
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            values[k.strip()] = v.strip()
        if scenario is not None:
            values["scenario"] = scenario
        for k, v in flags.items():
            if v is not None:
                values[k] = _format_value(v)
        cfg = cls.from_mapping(values)
        if cfg.full:
            # paper-scale horizontal scans: 0.05 deg, 3601 directions over +-90 deg
            cfg = replace(cfg, scan_step=0.05, file_step=0.05)
        return cfg

    def dumps(self) -> str:
        """Canonical text form: one sorted ``key = value`` line per key."""
        return "".join(f"{k} = {_format_value(getattr(self, k))}\n" for k in sorted(self.keys()))

    # ------------------------------------------------------------ validation
    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.scenario in SCENARIOS, f"scenario must be one of {', '.join(SCENARIOS)}")
        need(self.sound_speed > 0, "sound_speed must be positive")
        need(self.sample_rate > 0, "sample_rate must be positive")
        nyq = self.sample_rate / 2
        need(0 < self.chirp_f_start < nyq and 0 < self.chirp_f_end < nyq, "chirp band violates Nyquist")
        need(self.chirp_duration > 0, "chirp_duration must be positive")
        need(0 <= self.chirp_taper <= 1, "chirp_taper must lie in [0, 1]")
        need(0 < self.envelope_cutoff < nyq, "envelope_cutoff must lie in (0, Nyquist)")
        need(self.interpolation in ("linear", "sinc"), "interpolation must be linear or sinc")
        need(self.array in ("spiral", "hex", "file"), "array must be spiral, hex or file")
        need(self.array_mics >= 1, "array_mics must be >= 1")
        need(self.array_radius > 0 and self.hex_edge > 0, "array dimensions must be positive")
        need(self.array != "file" or bool(self.geometry), "array = file needs a geometry path")
        need(len(self.beamformers) > 0, "beamformers list is empty")
        from airbeam.beamform import BeamformerSpec
        for b in self.beamformers:
            try:
                BeamformerSpec.parse(b)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        need(self.cf in ("off", "on", "both"), "cf must be off, on or both")
        need(self.source_range > 0, "source_range must be positive")
        need(abs(self.source_azimuth) <= 180 and abs(self.source_elevation) <= 90, "source direction out of range")
        for lo, hi, step, name in ((self.scan_az_min, self.scan_az_max, self.scan_step, "scan"),
                                   (self.psf_az_min, self.psf_az_max, self.psf_step, "psf azimuth"),
                                   (self.psf_el_min, self.psf_el_max, self.psf_step, "psf elevation")):
            need(lo <= hi and step > 0, f"{name} range must satisfy min <= max and step > 0")
        need(-180 <= self.scan_az_min and self.scan_az_max <= 180, "scan azimuths must lie in [-180, 180]")
        need(-90 <= self.psf_el_min and self.psf_el_max <= 90, "psf elevations must lie in [-90, 90]")
        need(abs(self.scan_elevation) <= 90, "scan_elevation out of range")
        need(self.psf_half_window > 0 and self.psf2d_half_window > 0, "psf half windows must be positive")
        need(self.db_floor < 0, "db_floor must be negative")
        need(len(self.snr_levels) > 0 and self.snr_seeds >= 1, "image-snr needs levels and seeds >= 1")
        need(self.snr_step > 0 and 0 < self.snr_range_min < self.snr_range_max, "invalid image-snr scan")
        need(self.guard_lobes > 0, "guard_lobes must be positive")
        need(self.resolution_range > 0 and self.resolution_span > 0, "invalid resolution scene")
        need(0 <= self.half_angle_min <= self.half_angle_max < 90 and self.half_angle_step > 0,
             "half angles must satisfy 0 <= min <= max < 90 and step > 0")
        need(len(self.radii) > 0 and all(r > 0 for r in self.radii), "radii must be positive")
        need(0 <= self.range_min < self.range_max and self.file_step > 0, "invalid beamform-file scan")
        need(len(self.bench_directions) > 0 and all(d >= 1 for d in self.bench_directions), "bad bench_directions")
        need(len(self.bench_mics) > 0 and all(n >= 5 for n in self.bench_mics), "bench_mics must be >= 5")
        need(self.bench_samples >= 1 and self.bench_mic_directions >= 1, "bench sizes must be >= 1")
        need(self.bench_repeats >= 1 and self.bench_warmup >= 0, "bench repeats must be >= 1")
        need(self.seed >= 0, "seed must be non-negative")
        need(self.threads >= 0, "threads must be >= 0 (0 = all cores)")

    # ------------------------------------------------------------ helpers
    def beamformer_specs(self):
        from airbeam.beamform import BeamformerSpec
        base = [BeamformerSpec.parse(b) for b in self.beamformers]
        modes = {"off": (False,), "on": (True,), "both": (False, True)}[self.cf]
        out = []
        for cf in modes:
            for b in base:
                spec = BeamformerSpec(b.order, cf or b.apply_cf)
                if spec not in out:
                    out.append(spec)
        return out

    def half_angles(self) -> List[float]:
        n = int(math.floor((self.half_angle_max - self.half_angle_min) / self.half_angle_step + 1e-9)) + 1
        return [round(self.half_angle_min + k * self.half_angle_step, 10) for k in range(n)]


def parse_text(text: str) -> Dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    return values


def _parse_value(key: str, typ, raw, current):
    if not isinstance(raw, str):
        return raw
    typ = str(typ)
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ.startswith("Tuple[str"):
            return tuple(p.strip() for p in raw.split(",") if p.strip())
        if typ.startswith("Tuple[int"):
            return tuple(int(p) for p in raw.split(",") if p.strip())
        if typ.startswith("Tuple[float"):
            return tuple(float(p) for p in raw.split(",") if p.strip())
        return raw
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {key}") from None


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(_format_value(x) for x in v)
    return str(v)
