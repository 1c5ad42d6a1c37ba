"""Binary netpbm codec round-trips and header validation."""

import numpy as np
import pytest

from larvaekit.errors import MaxvalNot255, TruncatedPayload, UnsupportedFormat
from larvaekit.raster import RasterImage, decode_raster, encode_raster


class TestRasterImage:
    def test_buffer_length_checked(self):
        with pytest.raises(TruncatedPayload):
            RasterImage(2, 2, 1, b"\x00" * 3)

    def test_channels_checked(self):
        with pytest.raises(UnsupportedFormat):
            RasterImage(2, 2, 2, b"\x00" * 8)

    def test_dimensions_checked(self):
        with pytest.raises(UnsupportedFormat):
            RasterImage(0, 2, 1, b"")

    def test_array_round_trip_gray(self):
        img = RasterImage(3, 2, 1, bytes(range(6)))
        arr = img.to_array()
        assert arr.shape == (2, 3, 1)
        assert RasterImage.from_array(arr) == img

    def test_array_round_trip_rgb(self):
        img = RasterImage(2, 2, 3, bytes(range(12)))
        arr = img.to_array()
        assert arr.shape == (2, 2, 3)
        assert RasterImage.from_array(arr) == img


class TestDecode:
    def test_two_pixel_rgb(self):
        data = b"P6\n2 1\n255\n" + bytes([255, 0, 0, 0, 0, 255])
        img = decode_raster(data)
        assert (img.width, img.height, img.channels) == (2, 1, 3)
        assert img.pixels == bytes([255, 0, 0, 0, 0, 255])

    def test_grayscale(self):
        img = decode_raster(b"P5\n3 2\n255\n" + bytes(6))
        assert (img.width, img.height, img.channels) == (3, 2, 1)

    def test_comments_and_mixed_whitespace(self):
        data = b"P5 # magic\n# a comment line\n 3\t2 # dims\n255\n" + bytes(6)
        img = decode_raster(data)
        assert (img.width, img.height) == (3, 2)

    def test_wrong_magic(self):
        with pytest.raises(UnsupportedFormat):
            decode_raster(b"P3\n2 2\n255\n" + bytes(12))

    def test_maxval_must_be_255(self):
        with pytest.raises(MaxvalNot255):
            decode_raster(b"P5\n2 2\n65535\n" + bytes(8))

    def test_short_payload(self):
        with pytest.raises(TruncatedPayload):
            decode_raster(b"P6\n10 10\n255\n" + bytes(15))

    def test_long_payload(self):
        with pytest.raises(TruncatedPayload):
            decode_raster(b"P5\n2 2\n255\n" + bytes(5))


class TestEncode:
    def test_canonical_header(self):
        img = RasterImage(2, 1, 3, bytes(6))
        assert encode_raster(img) == b"P6\n2 1\n255\n" + bytes(6)

    def test_gray_magic(self):
        assert encode_raster(RasterImage(1, 1, 1, b"\x80")).startswith(b"P5\n")

    def test_decode_encode_identity_on_canonical_files(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            w = int(rng.integers(1, 12))
            h = int(rng.integers(1, 12))
            ch = int(rng.choice([1, 3]))
            payload = rng.integers(0, 256, size=w * h * ch, dtype=np.uint8).tobytes()
            magic = b"P5" if ch == 1 else b"P6"
            data = magic + b"\n%d %d\n255\n" % (w, h) + payload
            assert encode_raster(decode_raster(data)) == data

    def test_encode_decode_identity(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            w = int(rng.integers(1, 12))
            h = int(rng.integers(1, 12))
            ch = int(rng.choice([1, 3]))
            img = RasterImage(w, h, ch, rng.integers(0, 256, size=w * h * ch, dtype=np.uint8).tobytes())
            assert decode_raster(encode_raster(img)) == img
