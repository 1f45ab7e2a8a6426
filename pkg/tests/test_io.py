import struct

import numpy as np
import pytest

from airbeam import io as aio
from airbeam.array import MicrophoneArray, spiral_array
from airbeam.signals import MultichannelRecording


class TestRecording:
    def test_header_layout(self, tmp_path):
        rec = MultichannelRecording(np.array([[0.0]]), 450e3)
        path = tmp_path / "one.bin"
        aio.write_recording(rec, path)
        raw = path.read_bytes()
        assert aio.HEADER_SIZE == 28
        assert raw[:8] == b"AIRBEAM1"
        assert struct.unpack("<IQd", raw[8:28]) == (1, 1, 450e3)
        assert len(raw) == 28 + 4
        back = aio.read_recording(path)
        np.testing.assert_array_equal(back.samples, [[0.0]])

    def test_paper_sized_payload(self, tmp_path):
        rec = MultichannelRecording(np.zeros((32, 163840)), 450e3)
        path = tmp_path / "big.bin"
        aio.write_recording(rec, path)
        assert path.stat().st_size == 20971520 + aio.HEADER_SIZE

    def test_round_trip_bit_identical(self, tmp_path, rng):
        data = rng.standard_normal((5, 333)).astype(np.float32)
        path = tmp_path / "r.bin"
        aio.write_recording(MultichannelRecording(data.astype(np.float64), 96e3), path)
        back = aio.read_recording(path)
        assert back.sample_rate == 96e3
        assert back.samples.dtype == np.float64
        np.testing.assert_array_equal(back.samples.astype(np.float32).view(np.uint32), data.view(np.uint32))

    def test_channel_major(self, tmp_path):
        rec = MultichannelRecording(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]), 1.0)
        path = tmp_path / "c.bin"
        aio.write_recording(rec, path)
        payload = np.frombuffer(path.read_bytes()[28:], dtype="<f4")
        np.testing.assert_array_equal(payload, [1, 2, 3, 4, 5, 6])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTAFILE" + struct.pack("<IQd", 1, 1, 1.0) + b"\0" * 4)
        with pytest.raises(aio.RecordingFormatError, match="magic"):
            aio.read_recording(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "short.bin"
        path.write_bytes(b"AIRBEAM1" + struct.pack("<IQd", 2, 10, 1.0) + b"\0" * 40)
        with pytest.raises(aio.RecordingFormatError, match="payload"):
            aio.read_recording(path)
        path.write_bytes(b"AIRBEAM1")
        with pytest.raises(aio.RecordingFormatError, match="header"):
            aio.read_recording(path)

    def test_invalid_header_values(self, tmp_path):
        path = tmp_path / "zero.bin"
        path.write_bytes(b"AIRBEAM1" + struct.pack("<IQd", 0, 1, 1.0))
        with pytest.raises(aio.RecordingFormatError):
            aio.read_recording(path)

    def test_nan_rejected(self, tmp_path):
        path = tmp_path / "nan.bin"
        path.write_bytes(b"AIRBEAM1" + struct.pack("<IQd", 1, 2, 1.0) + np.array([0, np.nan], "<f4").tobytes())
        with pytest.raises(aio.RecordingFormatError, match="NaN"):
            aio.read_recording(path)


class TestGeometry:
    def test_round_trip(self, tmp_path):
        arr = spiral_array(7, 0.03)
        path = tmp_path / "g.csv"
        aio.write_geometry_csv(arr, path)
        np.testing.assert_array_equal(aio.read_geometry_csv(path).positions, arr.positions)

    def test_offsets_column(self, tmp_path):
        arr = MicrophoneArray(np.eye(3), delay_offsets=[0.0, 1e-6, -2e-6])
        path = tmp_path / "g.csv"
        aio.write_geometry_csv(arr, path)
        assert path.read_text().splitlines()[0] == "x,y,z,delay_offset"
        np.testing.assert_array_equal(aio.read_geometry_csv(path).delay_offsets, arr.delay_offsets)

    @pytest.mark.parametrize("text", ["", "a,b,c\n1,2,3\n", "x,y,z\n1,2\n", "x,y,z\n1,2,zz\n",
                                      "x,y,z\n0,0,0\n0,0,0\n"])
    def test_invalid(self, tmp_path, text):
        path = tmp_path / "g.csv"
        path.write_text(text)
        with pytest.raises(aio.GeometryFormatError):
            aio.read_geometry_csv(path)


class TestCsv:
    def test_format(self, tmp_path):
        path = tmp_path / "m.csv"
        aio.write_csv([{"radius_m": 0.01, "n_mics": 19, "beamformer": "DAS", "order": 1, "cf": False,
                        "beamwidth_deg": 23.5}], "beamwidth", path)
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw == b"radius_m,n_mics,beamformer,order,cf,beamwidth_deg\n0.01,19,DAS,1,0,23.5\n"
        assert aio.read_csv(path)[0]["beamwidth_deg"] == "23.5"

    def test_unknown_schema(self, tmp_path):
        with pytest.raises(KeyError):
            aio.write_csv([], "nope", tmp_path / "x.csv")


class TestPgm:
    def test_mapping_examples(self):
        g = aio.db_to_gray16(np.array([0.0, -60.0, -30.0, -90.0, 5.0]), -60.0)
        assert g.tolist() == [65535, 0, 32768, 0, 65535]

    def test_floor_must_be_negative(self):
        with pytest.raises(ValueError):
            aio.db_to_gray16(np.zeros(2), 0.0)

    def test_write_read_and_determinism(self, tmp_path, rng):
        img = -rng.uniform(0, 80, (4, 9))
        a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
        aio.write_pgm(img, -80.0, a)
        aio.write_pgm(img.copy(), -80.0, b)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes().startswith(b"P5\n9 4\n65535\n")
        back = aio.read_pgm(a)
        assert back.shape == (4, 9)
        np.testing.assert_array_equal(back, aio.db_to_gray16(img, -80.0))

    def test_uniform_zero_db(self, tmp_path):
        path = tmp_path / "z.pgm"
        aio.write_pgm(np.zeros((2, 3)), -40.0, path)
        assert np.all(aio.read_pgm(path) == 65535)
