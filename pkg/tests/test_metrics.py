import math

import numpy as np
import pytest

from airbeam.array import (Direction, azimuth_scan_grid, far_field_delays, hex_circular_array, spiral_array,
                           two_axis_grid)
from airbeam.beamform import AcousticImage, BeamformerSpec
from airbeam.metrics import (ResolutionCurves, beamwidth_3db, compute_psf, compute_psfs, dynamic_range,
                             image_snr, is_resolved, lobe_width, local_maxima, main_lobe_mask,
                             peak_sidelobe_level, psf_from_image, range_width_3db, resolution_sweep,
                             strongest_peaks, to_db, two_peak_dip)
from airbeam.pipeline import PipelineParams, form_images, simulate_scene
from airbeam.signals import Reflector

PARAMS = PipelineParams()
ALL_SPECS = [BeamformerSpec(n, cf) for cf in (False, True) for n in range(1, 6)]


def _image(pixels, grid=None, fs=1.0):
    pixels = np.asarray(pixels, dtype=float)
    if grid is None:
        grid = azimuth_scan_grid(-1.0, 1.0, 2.0 / (pixels.shape[0] - 1))
    return AcousticImage(pixels, grid, fs)


@pytest.fixture(scope="module")
def off_axis_psfs():
    arr = spiral_array(16, 0.05)
    grid = azimuth_scan_grid(-math.pi / 2, math.pi / 2, math.radians(1))
    src = Reflector(1.0, Direction.from_degrees(12))
    return grid, src, compute_psfs(arr, grid, ALL_SPECS, src, PARAMS, half_window=0.2e-3)


def test_to_db():
    np.testing.assert_allclose(to_db([1.0, 0.1, 0.0]), [0.0, -20.0, -300.0])
    assert np.all(to_db(np.zeros(3)) == -300.0)


class TestPsf:
    def test_normalised_and_peak_at_source(self, off_axis_psfs):
        grid, src, psfs = off_axis_psfs
        for p in psfs:
            assert p.image.pixels.max() == 0.0
            assert np.all(p.image.pixels <= 0.0)
            assert p.peak[0] == grid.nearest(src.direction), p.label
            assert abs(p.image.ranges[p.peak[1]] - src.range) < 343 / PARAMS.sample_rate

    def test_das_symmetric_for_symmetric_array(self):
        arr = hex_circular_array(0.02, 0.005)
        grid = azimuth_scan_grid(-math.pi / 2, math.pi / 2, math.radians(1))
        p = compute_psf(arr, grid, BeamformerSpec(1), Reflector(1.0), PARAMS, half_window=0.1e-3)
        level = p.directional_db
        np.testing.assert_allclose(level, level[::-1], atol=1e-6)

    def test_dynamic_range_ordering_small_array(self, off_axis_psfs):
        _, _, psfs = off_axis_psfs
        dr = [dynamic_range(p) for p in psfs]
        assert all(a < b for a, b in zip(dr[:5], dr[1:5]))
        assert all(dr[k + 5] > dr[k] for k in range(5))


class TestMainLobe:
    def test_flood_fill_stops_at_nulls(self):
        level = np.array([-20, -6, -30, -4, -1, 0, -2, -5, -40, -10, -50.0])
        mask = main_lobe_mask(level, azimuth_scan_grid(-1, 1, 0.2), 5)
        assert mask.tolist() == [False, False, True, True, True, True, True, True, True, False, False]

    def test_sidelobe_level_fixture(self):
        level = np.array([-20, -6, -30, -4, -1, 0, -2, -5, -40, -10, -50.0])
        img = _image(np.tile(10 ** (level / 20)[:, None], (1, 3)))
        p = psf_from_image(img)
        assert peak_sidelobe_level(p) == pytest.approx(-6.0)
        assert dynamic_range(p) == pytest.approx(6.0)

    def test_two_axis_neighbourhood(self):
        g = two_axis_grid(-0.2, 0.2, -0.2, 0.2, 0.1)
        level = np.full(25, -60.0)
        level[12] = 0.0
        level[6] = -10.0  # diagonal neighbour, reached downhill
        level[0] = -5.0  # corner, uphill again past the -10 dB ring
        mask = main_lobe_mask(level, g, 12)
        assert mask[6] and mask[12] and not mask[0]


class TestWidths:
    def test_gaussian_lobe(self):
        step = 0.1
        az = np.arange(-30, 30 + step / 2, step)
        sigma = 3.0
        lin = np.exp(-0.5 * (az / sigma) ** 2)
        grid = azimuth_scan_grid(math.radians(-30), math.radians(30), math.radians(step))
        p = psf_from_image(_image(lin[:, None] * np.ones((1, 3)), grid))
        # -3 dB amplitude crossing: exp(-x^2 / 2 sigma^2) = 10**(-3/20)
        expected = 2 * sigma * math.sqrt(2 * math.log(10 ** (3 / 20)))
        assert beamwidth_3db(p) == pytest.approx(expected, abs=step)

    def test_clipped_lobe_raises(self):
        with pytest.raises(ValueError):
            lobe_width(np.array([0.0, -1.0, -2.0]), np.arange(3.0), 0)

    def test_grid_refinement_invariance(self):
        arr = spiral_array(32, 0.05)
        widths = []
        for step in (0.5, 0.1):
            grid = azimuth_scan_grid(math.radians(-20), math.radians(20), math.radians(step))
            widths.append(beamwidth_3db(compute_psf(arr, grid, BeamformerSpec(1), Reflector(1.0), PARAMS,
                                                    half_window=0.05e-3)))
        assert abs(widths[0] - widths[1]) < 0.5

    def test_range_width_is_pulse_scale(self, off_axis_psfs):
        _, _, psfs = off_axis_psfs
        w = [range_width_3db(p) for p in psfs]
        # compressed pulse of a 25 kHz sweep: about c / (2 B) ~ 7 mm, widened by the 5 kHz envelope
        assert all(0.005 < v < 0.05 for v in w)


class TestImageSnr:
    def test_single_bright_pixel_is_capped(self):
        pix = np.zeros((11, 20))
        pix[5, 10] = 1.0
        rep = image_snr(_image(pix), (5, 10), 0.0, 0)
        assert rep.capped and rep.snr_image == 300.0 and rep.e_off == 0.0

    def test_uniform_image_is_zero_db(self):
        rep = image_snr(_image(np.ones((11, 20))), (5, 10), 0.2, 2)
        assert rep.snr_image == pytest.approx(0.0)
        assert not rep.capped

    def test_scale_invariance(self, rng):
        img = _image(rng.uniform(0, 1, (11, 30)))
        a = image_snr(img, (3, 4), 0.3, 3).snr_image
        b = image_snr(img.with_pixels(img.pixels * 1e6), (3, 4), 0.3, 3).snr_image
        assert a == pytest.approx(b, abs=1e-9)

    def test_guard_region_counts(self):
        rep = image_snr(_image(np.ones((11, 20))), (5, 10), 0.2 + 1e-9, 2)
        # 3 directions (+-0.2 rad at 0.2 spacing) x 5 samples guarded
        assert rep.n_off == 11 * 20 - 15

    def test_errors(self):
        with pytest.raises(ValueError):
            image_snr(_image(np.ones((3, 3))), (5, 0), 0.1, 1)
        with pytest.raises(ValueError):
            image_snr(_image(np.ones((3, 3))), (1, 1), 10.0, 10)


class TestResolution:
    def test_local_maxima_with_plateau(self):
        assert local_maxima(np.array([0, 1, 1, 1, 0, 2, 0, 3, 3])).tolist() == [2, 5]

    def test_two_peak_dip(self):
        az = np.linspace(-10, 10, 21)
        lv = -np.minimum((az - 5) ** 2, (az + 5) ** 2) / 2
        assert two_peak_dip(lv, az) == pytest.approx(12.5)
        assert is_resolved(lv, az)
        assert two_peak_dip(-az ** 2, az) is None
        # peaks at +-5 deg are too far from reflectors at +-1 deg to count
        assert two_peak_dip(lv, az, half_angle=1.0) is None

    def test_min_resolvable_uses_resolved_tail(self):
        az = np.linspace(-10, 10, 81)
        halves = np.array([2.0, 3.0, 4.0, 5.0])

        def split(a):
            return -np.minimum((az - a) ** 2, (az + a) ** 2)
        single = -az ** 2
        levels = np.array([split(2.0), single, split(4.0), split(5.0)])
        curves = ResolutionCurves("X", halves, az, levels)
        assert curves.resolved.tolist() == [True, False, True, True]
        assert curves.min_resolvable() == 4.0
        never = ResolutionCurves("X", halves[:2], az, np.array([split(2.0), single]))
        assert math.isnan(never.min_resolvable())

    def test_wide_separation_resolved_and_coincident_not(self):
        arr = spiral_array(32, 0.05)
        grid = azimuth_scan_grid(math.radians(-45), math.radians(45), math.radians(0.5))
        specs = [BeamformerSpec(n) for n in range(1, 6)]
        curves = resolution_sweep(arr, specs, [0.0, 30.0], grid, PARAMS)
        for c in curves.values():
            assert c.resolved.tolist() == [False, True], c.label

    def test_coincident_reflectors_double_amplitude(self):
        arr = spiral_array(16, 0.05)
        grid = azimuth_scan_grid(math.radians(-10), math.radians(10), math.radians(1))
        d = far_field_delays(arr, grid)
        centre = PARAMS.range_to_sample(1.5)
        win = (centre - 20, centre + 21)
        one = simulate_scene(arr, [Reflector(1.5)], PARAMS)
        two = simulate_scene(arr, [Reflector(1.5), Reflector(1.5)], PARAMS)
        for spec in (BeamformerSpec(1), BeamformerSpec(4)):
            a = form_images(one, d, [spec], PARAMS, win)[0].pixels
            b = form_images(two, d, [spec], PARAMS, win)[0].pixels
            # every DMAS order is positively homogeneous of degree one
            np.testing.assert_allclose(b, 2 * a, rtol=1e-9, atol=1e-12)


def test_strongest_peaks_respects_guard():
    pix = np.zeros((11, 30))
    pix[2, 5] = 1.0
    pix[3, 6] = 0.9  # inside the guard of the first peak
    pix[8, 20] = 0.5
    peaks = strongest_peaks(_image(pix), 2, 0.25, 3)
    assert peaks == [(2, 5), (8, 20)]
