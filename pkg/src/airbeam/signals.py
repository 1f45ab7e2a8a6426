"""Synthetic sonar signals and the pre/post stages of the imaging pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps

from airbeam.array import SOUND_SPEED, Direction, DirectionGrid, MicrophoneArray, far_field_delays

FRACTIONAL_DELAY_TAPS = 64


@dataclass(frozen=True)
class MultichannelRecording:
    """Samples ``(N, T)`` at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] < 1 or x.shape[0] < 1:
            raise ValueError(f"samples must be a non-empty (N, T) matrix, got shape {x.shape}")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(x)):
            raise ValueError("recording contains non-finite samples")
        object.__setattr__(self, "samples", x)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class ChirpSpec:
    f_start: float = 25e3
    f_end: float = 50e3
    duration: float = 2.5e-3
    sample_rate: float = 450e3
    amplitude: float = 1.0
    taper: float = 0.0  # fraction of the duration covered by raised-cosine ramps

    def __post_init__(self):
        nyq = self.sample_rate / 2
        if not (0 < self.f_start < nyq and 0 < self.f_end < nyq):
            raise ValueError(f"chirp band {self.f_start}-{self.f_end} Hz violates Nyquist ({nyq} Hz)")
        if not self.duration > 0:
            raise ValueError("chirp duration must be positive")
        if not 0 <= self.taper <= 1:
            raise ValueError("taper must lie in [0, 1]")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass(frozen=True)
class Reflector:
    range: float
    direction: Direction = Direction(0.0, 0.0)
    reflectivity: float = 1.0

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError("reflector range must be positive")
        if self.reflectivity < 0:
            raise ValueError("reflectivity must be non-negative")


def generate_chirp(spec: ChirpSpec) -> np.ndarray:
    """Linear FM sweep from ``f_start`` to ``f_end`` with peak ``amplitude``."""
    n = spec.n_samples
    t = np.arange(n) / spec.sample_rate
    rate = (spec.f_end - spec.f_start) / spec.duration
    phase = 2 * np.pi * (spec.f_start * t + 0.5 * rate * t ** 2)
    # sin keeps the first sample at zero; cos would start on a full-scale step
    x = np.sin(phase)
    if spec.taper > 0:
        x = x * sps.windows.tukey(n, spec.taper)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x * (spec.amplitude / peak)
    return x


@lru_cache(maxsize=4096)
def _fractional_kernel(frac: float, taps: int) -> np.ndarray:
    # kernel sample k sits at integer offset k - taps//2 + 1
    m = np.arange(taps) - (taps // 2 - 1) - frac
    beta = 8.0
    w = np.i0(beta * np.sqrt(np.clip(1 - (2 * m / taps) ** 2, 0, None))) / np.i0(beta)
    h = np.sinc(m) * w
    return h / h.sum()


def fractional_delay(x: np.ndarray, delay: float, length: int, taps: int = FRACTIONAL_DELAY_TAPS) -> np.ndarray:
    """Delay ``x`` by ``delay`` samples (windowed-sinc), output truncated to ``length``."""
    out = np.zeros(length)
    k = int(math.floor(delay))
    frac = delay - k
    if frac < 1e-12:
        y, start = x, k
    elif frac > 1 - 1e-12:
        y, start = x, k + 1
    else:
        y = np.convolve(x, _fractional_kernel(round(frac, 12), taps))
        start = k - (taps // 2 - 1)
    lo = max(start, 0)
    hi = min(start + y.size, length)
    if hi > lo:
        out[lo:hi] = y[lo - start:hi - start]
    return out


def synthesize_echoes(array: MicrophoneArray, emitted: np.ndarray, reflectors: Sequence[Reflector],
                      sample_rate: float, n_samples: int, c: float = SOUND_SPEED,
                      spreading: bool = False, reference: Optional[Sequence[float]] = None) -> MultichannelRecording:
    """Pulse-echo recording of point reflectors in the far field.

    A reflector at range ``r`` contributes the emitted signal to channel
    ``i`` with arrival time ``2 r / c + tau_i`` where ``tau_i`` is the
    steering delay of its direction, so ``m_i(t + tau_i)`` realigns it.  With ``spreading`` the amplitude is
    further divided by ``r``.
    """
    emitted = np.asarray(emitted, dtype=np.float64)
    out = np.zeros((len(array), n_samples))
    if not reflectors:
        return MultichannelRecording(out, sample_rate)
    grid = DirectionGrid.from_directions([r.direction for r in reflectors])
    tau = far_field_delays(array, grid, c, reference).delays
    for k, refl in enumerate(reflectors):
        onset = 2 * refl.range / c
        latest = (onset + tau[:, k].max()) * sample_rate
        if math.ceil(latest) + emitted.size > n_samples:
            raise ValueError(f"echo of reflector at {refl.range} m does not fit in {n_samples} samples")
        gain = refl.reflectivity / (refl.range if spreading else 1.0)
        if gain == 0:
            continue
        for i in range(len(array)):
            out[i] += gain * fractional_delay(emitted, (onset + tau[i, k]) * sample_rate, n_samples)
    return MultichannelRecording(out, sample_rate)


def noise_scale(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 20.0)


def add_noise(rec: MultichannelRecording, snr_mic: float, rng_seed: int) -> MultichannelRecording:
    """Add white Gaussian noise scaled by ``10**(-snr_mic/20)``; echo amplitude assumed 1."""
    rng = np.random.default_rng(rng_seed)
    noise = rng.standard_normal(rec.samples.shape)
    return MultichannelRecording(rec.samples + noise_scale(snr_mic) * noise, rec.sample_rate)


def matched_filter(rec: MultichannelRecording, emitted: np.ndarray) -> MultichannelRecording:
    """Correlate every channel with ``emitted``, normalised by its energy.

    Output sample ``k`` holds the correlation at lag ``k``, so an echo that
    starts at sample ``k`` peaks there with value equal to its amplitude.
    """
    emitted = np.asarray(emitted, dtype=np.float64)
    if emitted.size == 0:
        raise ValueError("emitted signal is empty")
    if emitted.size > rec.n_samples:
        raise ValueError("emitted signal is longer than the recording")
    energy = float(emitted @ emitted)
    if energy == 0:
        raise ValueError("emitted signal has zero energy")
    full = sps.fftconvolve(rec.samples, emitted[None, ::-1], mode="full", axes=1)
    lag0 = emitted.size - 1
    return MultichannelRecording(full[:, lag0:lag0 + rec.n_samples] / energy, rec.sample_rate)


@lru_cache(maxsize=32)
def lowpass_taps(cutoff: float, sample_rate: float, stopband_db: float = 60.0) -> np.ndarray:
    """Kaiser windowed-sinc low-pass; transition band equals the cutoff."""
    nyq = sample_rate / 2
    width = min(cutoff, nyq - cutoff) / nyq
    numtaps, beta = sps.kaiserord(stopband_db, width)
    numtaps |= 1  # odd length gives an integer group delay
    h = sps.firwin(numtaps, cutoff, window=("kaiser", beta), fs=sample_rate)
    h = h / h.sum()
    h.setflags(write=False)
    return h


def envelope_detect(x: np.ndarray, cutoff: float, sample_rate: float, axis: int = -1) -> np.ndarray:
    """Rectify and zero-phase low-pass ``x`` along ``axis``; negatives clamp to 0."""
    if not 0 < cutoff < sample_rate / 2:
        raise ValueError(f"cutoff {cutoff} Hz must lie in (0, {sample_rate / 2}) Hz")
    x = np.abs(np.asarray(x, dtype=np.float64))
    h = lowpass_taps(float(cutoff), float(sample_rate))
    half = h.size // 2
    x = np.moveaxis(x, axis, -1)
    pad = [(0, 0)] * (x.ndim - 1) + [(half, half)]
    xp = np.pad(x, pad, mode="edge")
    shape = [1] * (x.ndim - 1) + [h.size]
    y = sps.oaconvolve(xp, h.reshape(shape), mode="valid", axes=-1)
    np.maximum(y, 0.0, out=y)
    return np.moveaxis(y, -1, axis)
