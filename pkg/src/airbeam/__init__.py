"""Far-field acoustic imaging: pre-steering, DAS, higher-order DMAS and coherence factor."""

from airbeam.array import (Direction, DirectionGrid, MicrophoneArray, azimuth_scan_grid, far_field_delays,
                           hex_circular_array, spiral_array, two_axis_grid)
from airbeam.beamform import (AcousticImage, BeamformerSpec, beamform_image, beamform_images,
                              coherence_factor, das, dmas_brute_force, dmas_fast, dmas_general)
from airbeam.signals import ChirpSpec, MultichannelRecording, Reflector

__version__ = "0.1.0"

__all__ = [
    "AcousticImage", "BeamformerSpec", "ChirpSpec", "Direction", "DirectionGrid", "MicrophoneArray",
    "MultichannelRecording", "Reflector", "azimuth_scan_grid", "beamform_image", "beamform_images",
    "coherence_factor", "das", "dmas_brute_force", "dmas_fast", "dmas_general", "far_field_delays",
    "hex_circular_array", "spiral_array", "two_axis_grid",
]
