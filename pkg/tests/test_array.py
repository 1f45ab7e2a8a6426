import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from airbeam.array import (Direction, DirectionGrid, MicrophoneArray, azimuth_scan_grid,
                           far_field_delays, hex_circular_array, spiral_array, two_axis_grid)

C = 343.0


def _lattice_count(radius, edge):
    """Independent count of triangular-lattice points inside a closed disc."""
    n = int(radius / edge) + 2
    count = 0
    for j in range(-2 * n, 2 * n + 1):
        for i in range(-2 * n, 2 * n + 1):
            x = edge * (i + j / 2)
            y = edge * j * math.sqrt(3) / 2
            if math.hypot(x, y) <= radius * (1 + 1e-9):
                count += 1
    return count


class TestMicrophoneArray:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            MicrophoneArray(np.zeros((3, 2)))
        with pytest.raises(ValueError):
            MicrophoneArray(np.zeros((0, 3)))

    def test_rejects_duplicates_and_nonfinite(self):
        with pytest.raises(ValueError):
            MicrophoneArray(np.array([[0, 0, 0], [0, 0, 0.0]]))
        with pytest.raises(ValueError):
            MicrophoneArray(np.array([[0, np.nan, 0.0]]))

    def test_offsets_length_checked(self):
        with pytest.raises(ValueError):
            MicrophoneArray(np.eye(3), delay_offsets=[0.0, 1.0])

    def test_diameter_and_centroid(self):
        arr = MicrophoneArray(np.array([[0, -1, 0], [0, 1, 0], [0, 0, 3.0]]))
        assert arr.diameter == pytest.approx(math.sqrt(10))
        np.testing.assert_allclose(arr.centroid, [0, 0, 1])


class TestDirections:
    def test_range_checks(self):
        with pytest.raises(ValueError):
            Direction(4.0, 0.0)
        with pytest.raises(ValueError):
            Direction(0.0, 2.0)

    def test_broadside_is_plus_x(self):
        np.testing.assert_allclose(Direction(0, 0).unit_vector, [1, 0, 0])
        np.testing.assert_allclose(Direction.from_degrees(90).unit_vector, [0, 1, 0], atol=1e-15)

    def test_scan_counts(self):
        assert len(azimuth_scan_grid(-math.pi / 2, math.pi / 2, math.radians(0.05))) == 3601
        assert len(azimuth_scan_grid(-math.pi / 2, math.pi / 2, math.radians(1))) == 181

    def test_two_axis_order(self):
        g = two_axis_grid(-0.1, 0.1, -0.2, 0.2, 0.1)
        assert g.shape == (5, 3)
        assert g[1].azimuth == pytest.approx(0.0) and g[1].elevation == pytest.approx(-0.2)

    def test_nearest(self):
        g = azimuth_scan_grid(-1, 1, 0.1)
        assert g[g.nearest(Direction(0.33))].azimuth == pytest.approx(0.3)


class TestDelays:
    def test_single_mic_on_axis(self):
        arr = MicrophoneArray(np.array([[0.1, 0, 0]]))
        d = far_field_delays(arr, DirectionGrid([0.0], [0.0]), C, reference=[0, 0, 0])
        assert abs(d.delays[0, 0]) == pytest.approx(0.1 / 343, rel=1e-12)
        # the mic nearer the source hears the wave first, so it must be read earlier
        assert d.delays[0, 0] < 0

    def test_planar_broadside_zero(self):
        d = far_field_delays(spiral_array(32, 0.05), DirectionGrid([0.0], [0.0]), C)
        assert np.abs(d.delays).max() < 1e-12

    def test_spread_bounded_by_diameter(self, rng):
        arr = MicrophoneArray(rng.uniform(-0.05, 0.05, (16, 3)))
        g = DirectionGrid(rng.uniform(-math.pi, math.pi, 50), rng.uniform(-1.5, 1.5, 50))
        d = far_field_delays(arr, g, C).delays
        assert np.all(d.max(0) - d.min(0) <= arr.diameter / C + 1e-15)

    def test_plane_wave_oracle(self):
        """Aligning with +tau must cancel the exact arrival-time differences of a distant source."""
        spacing = 0.1
        arr = MicrophoneArray(np.array([[0, -spacing / 2, 0], [0, spacing / 2, 0]]))
        for az in np.radians([-60, -20, 0, 35, 80]):
            src = 1e4 * Direction(az, 0).unit_vector
            arrival = np.linalg.norm(src[None, :] - arr.positions, axis=1) / C
            tau = far_field_delays(arr, DirectionGrid([az], [0.0]), C).delays[:, 0]
            # x_i(t) = m_i(t + tau_i) peaks at arrival_i - tau_i; identical on both channels
            aligned = arrival - tau
            assert abs(aligned[0] - aligned[1]) < 1e-9
            assert abs(tau[1] - tau[0]) == pytest.approx(spacing * abs(math.sin(az)) / C, abs=1e-9)

    def test_plane_wave_sampled_lag(self):
        """Peak lag of sampled pulses matches the delay-table difference."""
        fs = 10e6
        arr = MicrophoneArray(np.array([[0, -0.05, 0], [0, 0.05, 0]]))
        az = math.radians(40)
        src = 50.0 * Direction(az, 0).unit_vector
        arrival = np.linalg.norm(src[None, :] - arr.positions, axis=1) / C
        t = arrival.min() - 50e-6 + np.arange(4000) / fs
        pulses = [np.exp(-0.5 * ((t - a) / 2e-6) ** 2) for a in arrival]
        xc = np.correlate(pulses[1], pulses[0], mode="full")
        lag = (np.argmax(xc) - (t.size - 1)) / fs
        tau = far_field_delays(arr, DirectionGrid([az], [0.0]), C).delays[:, 0]
        assert lag == pytest.approx(tau[1] - tau[0], abs=1.5 / fs)

    def test_translation_invariance(self, rng):
        pos = rng.uniform(-0.05, 0.05, (8, 3))
        g = DirectionGrid(rng.uniform(-3, 3, 20), rng.uniform(-1.5, 1.5, 20))
        shift = np.array([0.3, -1.2, 2.0])
        a = far_field_delays(MicrophoneArray(pos), g, C, reference=[0, 0, 0]).delays
        b = far_field_delays(MicrophoneArray(pos + shift), g, C, reference=shift).delays
        assert np.abs(a - b).max() < 1e-12

    def test_rotation_invariance(self, rng):
        pos = rng.uniform(-0.05, 0.05, (8, 3))
        g = DirectionGrid(rng.uniform(-3, 3, 20), rng.uniform(-1.4, 1.4, 20))
        rot = Rotation.from_euler("zyx", [0.4, -0.3, 1.1])
        u = rot.apply(g.unit_vectors)
        g_rot = DirectionGrid(np.arctan2(u[:, 1], u[:, 0]), np.arcsin(np.clip(u[:, 2], -1, 1)))
        a = far_field_delays(MicrophoneArray(pos), g, C, reference=[0, 0, 0]).delays
        b = far_field_delays(MicrophoneArray(rot.apply(pos)), g_rot, C, reference=[0, 0, 0]).delays
        assert np.abs(a - b).max() < 1e-12

    def test_offsets_added(self):
        arr = MicrophoneArray(np.array([[0, 0, 0], [0, 0.01, 0]]), delay_offsets=[1e-5, -2e-5])
        d = far_field_delays(arr, DirectionGrid([0.0], [0.0]), C).delays
        np.testing.assert_allclose(d[:, 0], [1e-5, -2e-5], atol=1e-15)

    def test_delay_table_carries_grid(self):
        g = azimuth_scan_grid(-0.5, 0.5, 0.1)
        d = far_field_delays(spiral_array(4, 0.02), g, C)
        assert d.grid is g and d.delays.shape == (4, len(g))


class TestGeometries:
    def test_hex_one_cm(self):
        assert hex_circular_array(0.01, 0.005).n_mics == 19

    @pytest.mark.parametrize("radius", [0.01, 0.02, 0.04, 0.06])
    def test_hex_matches_lattice_count(self, radius):
        assert hex_circular_array(radius, 0.005).n_mics == _lattice_count(radius, 0.005)

    def test_hex_spacing_and_plane(self):
        arr = hex_circular_array(0.02, 0.005)
        assert np.all(arr.positions[:, 0] == 0)
        d = np.linalg.norm(arr.positions[:, None] - arr.positions[None], axis=-1)
        np.fill_diagonal(d, np.inf)
        assert d.min() == pytest.approx(0.005)

    def test_spiral(self):
        arr = spiral_array(32, 0.05)
        assert arr.n_mics == 32
        assert np.linalg.norm(arr.positions, axis=1).max() <= 0.05
        assert np.all(arr.positions[:, 0] == 0)
