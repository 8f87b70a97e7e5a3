import struct

import numpy as np
import pytest

from nirfuse import fileio
from nirfuse.errors import ArgumentError, ImageIOError
from nirfuse.image import Image, ImageKind


class TestPFM:
    @pytest.mark.parametrize("channels,kind", [(1, ImageKind.GRAY), (3, ImageKind.RGB)])
    def test_round_trip_is_bit_exact(self, tmp_path, rng, channels, kind):
        # Includes negatives and magnitudes far outside [0, 1].
        data = (rng.random((channels, 9, 13)).astype(np.float32) - 0.3) * 1e4
        img = Image(data, kind)
        path = str(tmp_path / "x.pfm")
        fileio.write_pfm(path, img)
        back = fileio.read_pfm(path)
        assert back.data.dtype == np.float32
        assert np.array_equal(back.data, img.data)
        assert back.kind is kind

    def test_reads_big_endian_payload(self, tmp_path):
        values = np.arange(6, dtype=">f4").reshape(2, 3)
        path = tmp_path / "be.pfm"
        with open(path, "wb") as fh:
            fh.write(b"Pf\n3 2\n1.0\n")
            fh.write(np.flipud(values).tobytes())
        img = fileio.read_pfm(str(path))
        np.testing.assert_array_equal(img.plane(0), values.astype(np.float32))

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "short.pfm"
        with open(path, "wb") as fh:
            fh.write(b"Pf\n4 4\n-1.0\n")
            fh.write(struct.pack("<5f", *range(5)))
        with pytest.raises(ImageIOError):
            fileio.read_pfm(str(path))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"P6\n1 1\n-1.0\n\x00\x00\x00\x00")
        with pytest.raises(ImageIOError):
            fileio.read_pfm(str(path))

    def test_zero_scale_rejected(self, tmp_path):
        path = tmp_path / "zs.pfm"
        path.write_bytes(b"Pf\n1 1\n0.0\n\x00\x00\x00\x00")
        with pytest.raises(ImageIOError):
            fileio.read_pfm(str(path))

    def test_row_order_is_bottom_up(self, tmp_path):
        img = Image(np.array([[0.0, 1.0], [2.0, 3.0]], dtype=np.float32), ImageKind.GRAY)
        path = tmp_path / "rows.pfm"
        fileio.write_pfm(str(path), img)
        payload = path.read_bytes().split(b"-1.0\n", 1)[1]
        stored = np.frombuffer(payload, dtype="<f4").reshape(2, 2)
        np.testing.assert_array_equal(stored, [[2.0, 3.0], [0.0, 1.0]])

    def test_two_channel_image_rejected(self, tmp_path):
        img = Image(np.zeros((2, 2, 2)), ImageKind.FEATURE)
        with pytest.raises(ArgumentError):
            fileio.write_pfm(str(tmp_path / "x.pfm"), img)


class TestPNG:
    def test_eight_bit_round_trip_within_one_level(self, tmp_path, rng):
        img = Image(rng.random((3, 7, 11)), ImageKind.RGB)
        path = str(tmp_path / "x.png")
        fileio.write_png(path, img, bit_depth=8)
        back = fileio.read_png(path)
        assert np.abs(back.data - img.data).max() <= 1.0 / 255.0 + 1e-7
        assert back.kind is ImageKind.RGB

    def test_eight_bit_exact_on_quantized_values(self, tmp_path):
        levels = np.arange(12, dtype=np.float32).reshape(3, 2, 2) * 20.0 / 255.0
        img = Image(levels, ImageKind.RGB)
        path = str(tmp_path / "q.png")
        fileio.write_png(path, img)
        back = fileio.read_png(path)
        np.testing.assert_allclose(back.data, img.data, atol=1e-7)

    def test_sixteen_bit_round_trip(self, tmp_path, rng):
        img = Image(rng.random((1, 6, 5)), ImageKind.GRAY)
        path = str(tmp_path / "g16.png")
        fileio.write_png(path, img, bit_depth=16)
        back = fileio.read_png(path)
        assert np.abs(back.data - img.data).max() <= 1.0 / 65535.0 + 1e-9

    def test_out_of_range_samples_clamped(self, tmp_path):
        img = Image(np.array([[-0.5, 1.5]], dtype=np.float32), ImageKind.GRAY)
        path = str(tmp_path / "c.png")
        fileio.write_png(path, img)
        back = fileio.read_png(path)
        np.testing.assert_array_equal(back.plane(0), [[0.0, 1.0]])

    def test_unsupported_bit_depth_rejected(self, tmp_path):
        img = Image(np.zeros((1, 2, 2)), ImageKind.GRAY)
        with pytest.raises(ArgumentError):
            fileio.write_png(str(tmp_path / "x.png"), img, bit_depth=12)

    def test_missing_file_raises_io_error(self, tmp_path):
        with pytest.raises(ImageIOError):
            fileio.read_png(str(tmp_path / "nope.png"))


def test_dispatch_by_extension(tmp_path, rng):
    img = Image(rng.random((1, 4, 4)), ImageKind.GRAY)
    pfm = str(tmp_path / "a.pfm")
    png = str(tmp_path / "a.png")
    fileio.save_image(pfm, img)
    fileio.save_image(png, img)
    assert np.array_equal(fileio.load_image(pfm).data, img.data)
    assert fileio.load_image(png).height == 4
    with pytest.raises(ImageIOError):
        fileio.save_image(str(tmp_path / "a.tiff"), img)
    with pytest.raises(ImageIOError):
        fileio.load_image(str(tmp_path / "a.bmp"))
