"""Matched filter -> beamformer -> envelope detection, plus scene simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from airbeam.array import SOUND_SPEED, DelayTable, MicrophoneArray
from airbeam.beamform import AcousticImage, BeamformerSpec, beamform_images
from airbeam.signals import (ChirpSpec, MultichannelRecording, Reflector, add_noise, envelope_detect,
                             generate_chirp, lowpass_taps, matched_filter, synthesize_echoes)


@dataclass(frozen=True)
class PipelineParams:
    sample_rate: float = 450e3
    sound_speed: float = SOUND_SPEED
    chirp: ChirpSpec = field(default_factory=ChirpSpec)
    envelope_cutoff: float = 5e3
    use_matched_filter: bool = True
    interpolation: str = "linear"
    spreading: bool = False

    def __post_init__(self):
        if self.chirp.sample_rate != self.sample_rate:
            raise ValueError("chirp and pipeline sample rates differ")
        if not 0 < self.envelope_cutoff < self.sample_rate / 2:
            raise ValueError("envelope cutoff must lie below Nyquist")

    @property
    def emitted(self) -> np.ndarray:
        return generate_chirp(self.chirp)

    @property
    def pulse_samples(self) -> int:
        return self.chirp.n_samples

    def range_to_sample(self, r: float) -> int:
        return int(round(2 * r / self.sound_speed * self.sample_rate))


def simulate_scene(array: MicrophoneArray, reflectors: Sequence[Reflector], params: PipelineParams,
                   n_samples: Optional[int] = None, snr_mic: Optional[float] = None,
                   seed: int = 0, margin: float = 1e-3) -> MultichannelRecording:
    """Echo recording of ``reflectors``; optional white noise at ``snr_mic`` dB."""
    if n_samples is None:
        far = max((r.range for r in reflectors), default=0.0)
        t_end = 2 * far / params.sound_speed + array.diameter / params.sound_speed + params.chirp.duration
        n_samples = int(math.ceil((t_end + margin) * params.sample_rate))
    rec = synthesize_echoes(array, params.emitted, reflectors, params.sample_rate, n_samples,
                            params.sound_speed, params.spreading)
    if snr_mic is not None:
        rec = add_noise(rec, snr_mic, seed)
    return rec


def form_images(rec: MultichannelRecording, delays: DelayTable, specs: Sequence[BeamformerSpec],
                params: PipelineParams, window: Optional[Tuple[int, int]] = None) -> List[AcousticImage]:
    """Envelope images for every beamformer over recording samples ``window = (start, stop)``.

    The beamformer runs on a window widened by the low-pass half-length so
    the returned columns carry no filter edge effects.
    """
    if params.use_matched_filter:
        rec = matched_filter(rec, params.emitted)
    start, stop = (0, rec.n_samples) if window is None else window
    if stop <= start:
        raise ValueError("empty time window")
    half = lowpass_taps(float(params.envelope_cutoff), float(rec.sample_rate)).size // 2
    raw = beamform_images(rec, delays, specs, start - half, stop - start + 2 * half, params.interpolation)
    out = []
    for img in raw:
        env = envelope_detect(img.pixels, params.envelope_cutoff, rec.sample_rate, axis=1)
        out.append(AcousticImage(np.ascontiguousarray(env[:, half:env.shape[1] - half]), img.grid,
                                 rec.sample_rate, start / rec.sample_rate, img.sound_speed, img.label))
    return out


def range_window(params: PipelineParams, r_min: float, r_max: float) -> Tuple[int, int]:
    return params.range_to_sample(r_min), params.range_to_sample(r_max) + 1
