"""Image-quality measures: PSF, dynamic range, -3 dB widths, image SNR, resolution."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from airbeam.array import Direction, DirectionGrid, MicrophoneArray, far_field_delays
from airbeam.beamform import AcousticImage, BeamformerSpec
from airbeam.pipeline import PipelineParams, form_images, simulate_scene
from airbeam.signals import Reflector

DB_FLOOR = -300.0
SNR_CAP_DB = 300.0


def to_db(pixels: np.ndarray, reference: Optional[float] = None, floor: float = DB_FLOOR) -> np.ndarray:
    """``20 log10(p / reference)`` clamped at ``floor``; reference defaults to the max."""
    p = np.abs(np.asarray(pixels, dtype=np.float64))
    ref = p.max() if reference is None else reference
    if ref <= 0:
        return np.full(p.shape, floor)
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(p / ref)
    return np.maximum(db, floor)


@dataclass(frozen=True)
class PsfResult:
    """PSF image in dB (peak 0 dB) and the peak pixel ``(direction, time)``."""

    image: AcousticImage
    peak: Tuple[int, int]
    linear: AcousticImage

    @property
    def label(self) -> str:
        return self.image.label

    @property
    def directional_db(self) -> np.ndarray:
        """Directional PSF: the dB image across directions at the peak's range sample."""
        return self.image.pixels[:, self.peak[1]]

    @property
    def peak_direction(self) -> Direction:
        return self.image.grid[self.peak[0]]


def psf_from_image(img: AcousticImage) -> PsfResult:
    pix = img.pixels
    peak = np.unravel_index(int(np.argmax(pix)), pix.shape)
    return PsfResult(img.with_pixels(to_db(pix)), (int(peak[0]), int(peak[1])), img)


def compute_psfs(array: MicrophoneArray, grid: DirectionGrid, beamformers: Sequence[BeamformerSpec],
                 source: Reflector, params: PipelineParams, half_window: float = 0.5e-3) -> List[PsfResult]:
    """Noise-free single-reflector scene through the full pipeline, one PSF per beamformer.

    Columns span ``half_window`` seconds either side of the echo time.
    """
    rec = simulate_scene(array, [source], params, margin=half_window + 1e-3)
    delays = far_field_delays(array, grid, params.sound_speed)
    centre = params.range_to_sample(source.range)
    w = int(round(half_window * params.sample_rate))
    images = form_images(rec, delays, beamformers, params, (centre - w, centre + w + 1))
    return [psf_from_image(img) for img in images]


def compute_psf(array: MicrophoneArray, grid: DirectionGrid, beamformer: BeamformerSpec,
                source: Reflector, params: PipelineParams, half_window: float = 0.5e-3) -> PsfResult:
    return compute_psfs(array, grid, [beamformer], source, params, half_window)[0]


# ----------------------------------------------------------------- main lobe

def _neighbours(grid: DirectionGrid):
    """Adjacency of grid points: a line for 1-D sweeps, 8-neighbourhood for 2-D grids."""
    M = len(grid)
    if grid.shape is None:
        return lambda i: [j for j in (i - 1, i + 1) if 0 <= j < M]
    n_el, n_az = grid.shape

    def nb(i):
        e, a = divmod(i, n_az)
        out = []
        for de in (-1, 0, 1):
            for da in (-1, 0, 1):
                if (de or da) and 0 <= e + de < n_el and 0 <= a + da < n_az:
                    out.append((e + de) * n_az + a + da)
        return out
    return nb


def main_lobe_mask(level_db: np.ndarray, grid: DirectionGrid, peak: int) -> np.ndarray:
    """Main-lobe support: flood fill from the peak over the -3 dB region, then
    continued downhill (never climbing) to the surrounding nulls."""
    nb = _neighbours(grid)
    mask = np.zeros(level_db.size, dtype=bool)
    mask[peak] = True
    queue = deque([peak])
    while queue:
        i = queue.popleft()
        for j in nb(i):
            if not mask[j] and (level_db[j] >= -3.0 or level_db[j] <= level_db[i]):
                mask[j] = True
                queue.append(j)
    return mask


def peak_sidelobe_level(psf: PsfResult) -> float:
    """Highest directional level outside the main lobe, dB (negative)."""
    level = psf.directional_db
    mask = main_lobe_mask(level, psf.image.grid, psf.peak[0])
    if mask.all():
        return DB_FLOOR
    return float(level[~mask].max())


def dynamic_range(psf: PsfResult) -> float:
    return -peak_sidelobe_level(psf)


# ------------------------------------------------------------------- widths

def lobe_width(level_db: np.ndarray, axis: np.ndarray, peak: int, level: float = -3.0) -> float:
    """Distance between the first ``level`` crossings either side of ``peak``.

    Crossings are located by linear interpolation of the dB values between
    neighbouring samples.  Raises ``ValueError`` if the lobe reaches an edge.
    """
    ref = level_db[peak]

    def crossing(step):
        i = peak
        while True:
            j = i + step
            if j < 0 or j >= level_db.size:
                raise ValueError("main lobe clipped by the edge of the scan")
            if level_db[j] - ref < level:
                a, b = level_db[i] - ref, level_db[j] - ref
                f = (a - level) / (a - b)
                return axis[i] + f * (axis[j] - axis[i])
            i = j
    return float(crossing(1) - crossing(-1))


def azimuth_slice(psf: PsfResult) -> Tuple[np.ndarray, np.ndarray, int]:
    """Azimuths (deg), dB levels and peak position along the azimuth row through the peak."""
    grid = psf.image.grid
    level = psf.directional_db
    if grid.shape is None:
        idx = np.arange(len(grid))
    else:
        n_az = grid.shape[1]
        row = psf.peak[0] // n_az
        idx = np.arange(row * n_az, (row + 1) * n_az)
    order = np.argsort(grid.azimuth[idx], kind="stable")
    idx = idx[order]
    peak = int(np.nonzero(idx == psf.peak[0])[0][0])
    return np.degrees(grid.azimuth[idx]), level[idx], peak


def beamwidth_3db(psf: PsfResult, axis: str = "azimuth") -> float:
    """-3 dB main-lobe width in degrees along the azimuth slice through the peak."""
    if axis != "azimuth":
        raise ValueError("only the azimuth axis is supported")
    az, level, peak = azimuth_slice(psf)
    return lobe_width(level, az, peak)


def range_width_3db(psf: PsfResult) -> float:
    """-3 dB width of the peak along the range axis, meters."""
    row = psf.image.pixels[psf.peak[0]]
    return lobe_width(row, psf.image.ranges, psf.peak[1])


# ---------------------------------------------------------------- image SNR

@dataclass(frozen=True)
class ImageSnrReport:
    snr_image: float
    e_off: float
    capped: bool
    guard_angle: float  # radians
    guard_samples: int
    n_off: int
    label: str = ""


def image_snr(image: AcousticImage, target: Tuple[int, int], guard_angle: float,
              guard_samples: int) -> ImageSnrReport:
    """Mean off-target level of the max-normalised image, as ``20 log10(1 / E_off)``.

    The on-target guard region holds every pixel within ``guard_angle``
    (radians) of the target direction and ``guard_samples`` of its time index.
    """
    pix = np.abs(image.pixels)
    peak = pix.max()
    norm = pix / peak if peak > 0 else pix
    d, t = target
    if not (0 <= d < pix.shape[0] and 0 <= t < pix.shape[1]):
        raise ValueError("target outside the image")
    u = image.grid.unit_vectors
    ang = np.arccos(np.clip(u @ u[d], -1.0, 1.0))
    near_dir = ang <= guard_angle + 1e-12
    near_t = np.abs(np.arange(pix.shape[1]) - t) <= guard_samples
    off = ~(near_dir[:, None] & near_t[None, :])
    n_off = int(off.sum())
    if n_off == 0:
        raise ValueError("guard region covers the whole image")
    e_off = float(norm[off].mean())
    if e_off <= 0:
        return ImageSnrReport(SNR_CAP_DB, 0.0, True, guard_angle, guard_samples, n_off, image.label)
    snr = min(20 * math.log10(1 / e_off), SNR_CAP_DB)
    return ImageSnrReport(snr, e_off, snr >= SNR_CAP_DB, guard_angle, guard_samples, n_off, image.label)


def strongest_peaks(image: AcousticImage, count: int, guard_angle: float,
                    guard_samples: int) -> List[Tuple[int, int]]:
    """``count`` strongest pixels, each at least ``guard_angle`` (radians) or
    ``guard_samples`` away from every stronger one."""
    pix = np.array(image.pixels, dtype=np.float64)
    u = image.grid.unit_vectors
    t_idx = np.arange(pix.shape[1])
    found = []
    for _ in range(count):
        flat = int(np.argmax(pix))
        if not np.isfinite(pix.flat[flat]):
            break
        d, t = divmod(flat, pix.shape[1])
        found.append((d, t))
        ang = np.arccos(np.clip(u @ u[d], -1.0, 1.0))
        pix[np.ix_(ang <= guard_angle + 1e-12, np.abs(t_idx - t) <= guard_samples)] = -np.inf
    return found


# --------------------------------------------------------------- resolution

def local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of interior plateau-aware local maxima of a 1-D profile."""
    v = np.asarray(values)
    out = []
    i = 1
    while i < v.size - 1:
        if v[i] > v[i - 1]:
            j = i
            while j + 1 < v.size and v[j + 1] == v[i]:
                j += 1
            if j + 1 < v.size and v[j + 1] < v[i]:
                out.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    return np.array(out, dtype=int)


def two_peak_dip(level_db: np.ndarray, azimuth_deg: np.ndarray,
                 half_angle: Optional[float] = None) -> Optional[float]:
    """Depth (dB, positive) of the dip between the strongest peak on each side of 0 deg.

    With ``half_angle`` (reflectors at +-``half_angle`` deg) a peak only counts
    when it lies within ``half_angle`` of its reflector, so sidelobes of a
    single merged lobe are not mistaken for a second target.  ``None`` when
    either side has no qualifying local maximum.
    """
    peaks = local_maxima(level_db)
    az = np.asarray(azimuth_deg)
    reach = np.inf if half_angle is None else 2 * half_angle
    left = [p for p in peaks if -reach < az[p] < 0]
    right = [p for p in peaks if 0 < az[p] < reach]
    if not left or not right:
        return None
    lp = max(left, key=lambda p: level_db[p])
    rp = max(right, key=lambda p: level_db[p])
    lo, hi = min(lp, rp), max(lp, rp)
    dip = level_db[lo:hi + 1].min()
    return float(min(level_db[lp], level_db[rp]) - dip)


def is_resolved(level_db: np.ndarray, azimuth_deg: np.ndarray, separation_db: float = 3.0,
                half_angle: Optional[float] = None) -> bool:
    dip = two_peak_dip(level_db, azimuth_deg, half_angle)
    return dip is not None and dip >= separation_db


@dataclass(frozen=True)
class ResolutionCurves:
    """Angular responses at the reflector range, one row per half-angle."""

    label: str
    half_angles: np.ndarray  # degrees
    azimuth: np.ndarray  # degrees
    levels_db: np.ndarray  # (n_half_angles, n_azimuth)

    @property
    def resolved(self) -> np.ndarray:
        return np.array([is_resolved(row, self.azimuth, half_angle=a)
                         for a, row in zip(self.half_angles, self.levels_db)])

    @property
    def dips(self) -> List[Optional[float]]:
        return [two_peak_dip(row, self.azimuth, a) for a, row in zip(self.half_angles, self.levels_db)]

    def min_resolvable(self) -> float:
        """Smallest half-angle from which every larger swept half-angle is resolved."""
        ok = self.resolved
        if not ok[-1]:
            return math.nan
        k = ok.size - 1
        while k > 0 and ok[k - 1]:
            k -= 1
        return float(self.half_angles[k])


def resolution_sweep(array: MicrophoneArray, beamformers: Sequence[BeamformerSpec],
                     half_angles: Sequence[float], grid: DirectionGrid, params: PipelineParams,
                     range_m: float = 1.5, half_window: float = 0.1e-3) -> Dict[str, ResolutionCurves]:
    """Two equal reflectors at ``+-a`` degrees azimuth and equal range, for each ``a``."""
    delays = far_field_delays(array, grid, params.sound_speed)
    centre = params.range_to_sample(range_m)
    w = int(round(half_window * params.sample_rate))
    az = np.degrees(grid.azimuth)
    rows: Dict[str, List[np.ndarray]] = {b.label: [] for b in beamformers}
    for a in half_angles:
        if abs(a) > 90:
            raise ValueError("half-angle outside the scan")
        refl = [Reflector(range_m, Direction.from_degrees(a)), Reflector(range_m, Direction.from_degrees(-a))]
        rec = simulate_scene(array, refl, params, margin=half_window + 1e-3)
        images = form_images(rec, delays, beamformers, params, (centre - w, centre + w + 1))
        for img in images:
            rows[img.label].append(to_db(img.pixels[:, w]))
    return {label: ResolutionCurves(label, np.asarray(half_angles, dtype=float), az, np.array(r))
            for label, r in rows.items()}
