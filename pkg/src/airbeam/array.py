"""Array geometries, direction grids and far-field delay tables.

Coordinate frame: +x points forward (broadside of an array lying in the
y-z plane), +y to the left, +z up.  A direction (azimuth, elevation) maps to
the unit vector ``(cos el cos az, cos el sin az, sin el)`` pointing from the
array towards the source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

SOUND_SPEED = 343.0


@dataclass(frozen=True)
class MicrophoneArray:
    """Microphone positions in meters, shape ``(N, 3)``.

    ``delay_offsets`` optionally holds a per-channel delay (seconds) that is
    added to every steering delay of that channel.
    """

    positions: np.ndarray
    delay_offsets: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim == 1 and pos.size == 3:
            pos = pos[None, :]
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must have shape (N, 3), got {pos.shape}")
        if pos.shape[0] < 1:
            raise ValueError("array needs at least one microphone")
        if not np.all(np.isfinite(pos)):
            raise ValueError("microphone positions must be finite")
        if pos.shape[0] > 1:
            diff = pos[:, None, :] - pos[None, :, :]
            dist = np.sqrt((diff ** 2).sum(-1))
            np.fill_diagonal(dist, np.inf)
            if dist.min() <= 0.0:
                raise ValueError("two microphones share the same position")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

        if self.delay_offsets is not None:
            off = np.array(self.delay_offsets, dtype=np.float64).reshape(-1)
            if off.shape[0] != pos.shape[0] or not np.all(np.isfinite(off)):
                raise ValueError("delay_offsets must be finite with one entry per microphone")
            off.setflags(write=False)
            object.__setattr__(self, "delay_offsets", off)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def n_mics(self) -> int:
        return self.positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    @property
    def diameter(self) -> float:
        """Largest distance between two microphones."""
        if self.n_mics == 1:
            return 0.0
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())


@dataclass(frozen=True)
class Direction:
    azimuth: float
    elevation: float = 0.0

    def __post_init__(self):
        if not (-math.pi - 1e-12 <= self.azimuth <= math.pi + 1e-12):
            raise ValueError(f"azimuth {self.azimuth} rad outside [-pi, pi]")
        if not (-math.pi / 2 - 1e-12 <= self.elevation <= math.pi / 2 + 1e-12):
            raise ValueError(f"elevation {self.elevation} rad outside [-pi/2, pi/2]")

    @classmethod
    def from_degrees(cls, azimuth: float, elevation: float = 0.0) -> "Direction":
        return cls(math.radians(azimuth), math.radians(elevation))

    @property
    def unit_vector(self) -> np.ndarray:
        return direction_vectors(np.array([self.azimuth]), np.array([self.elevation]))[0]


def direction_vectors(azimuth: np.ndarray, elevation: np.ndarray) -> np.ndarray:
    """Unit vectors (M, 3) pointing from the array towards each direction."""
    az = np.asarray(azimuth, dtype=np.float64)
    el = np.asarray(elevation, dtype=np.float64)
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


@dataclass(frozen=True)
class DirectionGrid:
    """Ordered directions of interest.

    Stored as parallel azimuth/elevation arrays (radians).  ``shape`` is set
    for two-axis grids as ``(n_elevation, n_azimuth)``, elevation-major.
    """

    azimuth: np.ndarray
    elevation: np.ndarray
    shape: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        az = np.array(self.azimuth, dtype=np.float64).reshape(-1)
        el = np.array(self.elevation, dtype=np.float64).reshape(-1)
        if el.size == 1 and az.size > 1:
            el = np.full_like(az, el[0])
        if az.size < 1:
            raise ValueError("direction grid must not be empty")
        if az.shape != el.shape:
            raise ValueError("azimuth and elevation must have the same length")
        if np.any(np.abs(az) > math.pi + 1e-12) or np.any(np.abs(el) > math.pi / 2 + 1e-12):
            raise ValueError("directions out of range")
        if self.shape is not None and self.shape[0] * self.shape[1] != az.size:
            raise ValueError(f"grid shape {self.shape} does not match {az.size} directions")
        az.setflags(write=False)
        el.setflags(write=False)
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)

    def __len__(self) -> int:
        return self.azimuth.size

    def __getitem__(self, index: int) -> Direction:
        return Direction(float(self.azimuth[index]), float(self.elevation[index]))

    def __iter__(self) -> Iterator[Direction]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_directions(cls, directions: Sequence[Direction]) -> "DirectionGrid":
        return cls(np.array([d.azimuth for d in directions]),
                   np.array([d.elevation for d in directions]))

    @property
    def unit_vectors(self) -> np.ndarray:
        return direction_vectors(self.azimuth, self.elevation)

    def nearest(self, direction: Direction) -> int:
        """Index of the grid direction with the smallest angle to ``direction``."""
        return int(np.argmax(self.unit_vectors @ direction.unit_vector))


@dataclass(frozen=True)
class DelayTable:
    """Pre-steering delays (N, M) in seconds.

    Sign convention: ``x_i(t) = m_i(t + delays[i, psi])`` aligns a plane wave
    arriving from direction ``psi`` on all channels.
    """

    delays: np.ndarray
    sound_speed: float
    reference: np.ndarray = field(default_factory=lambda: np.zeros(3))
    grid: Optional[DirectionGrid] = None

    @property
    def n_mics(self) -> int:
        return self.delays.shape[0]

    @property
    def n_directions(self) -> int:
        return self.delays.shape[1]


def far_field_delays(array: MicrophoneArray, grid: DirectionGrid, c: float = SOUND_SPEED,
                     reference: Optional[Sequence[float]] = None) -> DelayTable:
    """Plane-wave steering delays for every microphone and direction.

    ``tau = (p - reference) . u / c`` with ``u`` the propagation vector (from
    the source towards the array).  The reference defaults to the centroid.
    """
    if not c > 0:
        raise ValueError(f"sound speed must be positive, got {c}")
    if len(array) < 1 or len(grid) < 1:
        raise ValueError("array and grid must be non-empty")
    ref = array.centroid if reference is None else np.asarray(reference, dtype=np.float64)
    rel = array.positions - ref[None, :]
    delays = -(rel @ grid.unit_vectors.T) / c
    if array.delay_offsets is not None:
        delays = delays + array.delay_offsets[:, None]
    delays.setflags(write=False)
    return DelayTable(delays, float(c), ref.copy(), grid)


def hex_circular_array(radius: float, edge: float) -> MicrophoneArray:
    """Hexagonal-lattice points within ``radius`` of the origin.

    One microphone sits at the origin; the array lies in the y-z plane so its
    broadside is the +x axis.
    """
    if not radius > 0 or not edge > 0:
        raise ValueError("radius and edge must be positive")
    k = int(math.ceil(radius / edge)) + 1
    i, j = np.meshgrid(np.arange(-2 * k, 2 * k + 1), np.arange(-2 * k, 2 * k + 1), indexing="ij")
    u = edge * (i + 0.5 * j)
    v = edge * (math.sqrt(3) / 2) * j
    keep = np.hypot(u, v) <= radius * (1 + 1e-9)
    u, v = u[keep], v[keep]
    order = np.lexsort((u, v))
    pos = np.column_stack([np.zeros(order.size), u[order], v[order]])
    return MicrophoneArray(pos)


def spiral_array(n_mics: int, radius: float) -> MicrophoneArray:
    """Fermat (sunflower) spiral of ``n_mics`` points filling a disc in the y-z plane."""
    if n_mics < 1 or not radius > 0:
        raise ValueError("need n_mics >= 1 and radius > 0")
    golden = math.pi * (3 - math.sqrt(5))
    k = np.arange(n_mics)
    r = radius * np.sqrt((k + 0.5) / n_mics)
    phi = k * golden
    return MicrophoneArray(np.column_stack([np.zeros(n_mics), r * np.cos(phi), r * np.sin(phi)]))


def _inclusive_count(lo: float, hi: float, step: float) -> int:
    # tolerate float noise such as (90 - -90) / 0.05 = 3599.9999...
    return int(math.floor((hi - lo) / step + 1e-9)) + 1


def azimuth_scan_grid(az_min: float, az_max: float, step: float,
                      elevation: float = 0.0) -> DirectionGrid:
    """Inclusive azimuth sweep at a fixed elevation (all radians)."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if az_min > az_max:
        raise ValueError("az_min must not exceed az_max")
    n = _inclusive_count(az_min, az_max, step)
    az = az_min + step * np.arange(n)
    return DirectionGrid(az, np.full(n, float(elevation)))


def two_axis_grid(az_min: float, az_max: float, el_min: float, el_max: float,
                  step: float) -> DirectionGrid:
    """Azimuth x elevation grid (radians), elevation-major ordering."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    az = az_min + step * np.arange(_inclusive_count(az_min, az_max, step))
    el = el_min + step * np.arange(_inclusive_count(el_min, el_max, step))
    ee, aa = np.meshgrid(el, az, indexing="ij")
    return DirectionGrid(aa.reshape(-1), ee.reshape(-1), shape=(el.size, az.size))
