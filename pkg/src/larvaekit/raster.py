"""In-memory raster images and a binary netpbm (P5/P6) codec.

The camera exports and every intermediate artifact use 8-bit samples, so
the codec is deliberately strict: maxval must be 255 and the payload must
match the header exactly. The reader tolerates header comments and mixed
whitespace; the writer always emits the canonical
``magic\\nwidth height\\n255\\n`` form, which makes encoded bytes stable
across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaxvalNot255, TruncatedPayload, UnsupportedFormat

_WHITESPACE = b" \t\r\n\x0b\x0c"


@dataclass(frozen=True)
class RasterImage:
    """Immutable 8-bit image, row-major, 1 (gray) or 3 (RGB) channels."""

    width: int
    height: int
    channels: int
    pixels: bytes

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise UnsupportedFormat(f"bad dimensions {self.width}x{self.height}")
        if self.channels not in (1, 3):
            raise UnsupportedFormat(f"unsupported channel count {self.channels}")
        expected = self.width * self.height * self.channels
        if len(self.pixels) != expected:
            raise TruncatedPayload(
                f"expected {expected} payload bytes, got {len(self.pixels)}"
            )

    def to_array(self) -> np.ndarray:
        """View the pixels as a (height, width, channels) uint8 array."""
        arr = np.frombuffer(self.pixels, dtype=np.uint8)
        return arr.reshape(self.height, self.width, self.channels)

    @staticmethod
    def from_array(arr: np.ndarray) -> "RasterImage":
        """Build an image from a (h, w) or (h, w, c) uint8 array."""
        if arr.dtype != np.uint8:
            raise UnsupportedFormat(f"expected uint8 samples, got {arr.dtype}")
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise UnsupportedFormat(f"bad array shape {arr.shape}")
        h, w, c = arr.shape
        return RasterImage(w, h, c, arr.tobytes())


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comments, netpbm style.
    n = len(data)
    while pos < n:
        b = data[pos]
        if b in _WHITESPACE:
            pos += 1
        elif b == 0x23:  # '#'
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise UnsupportedFormat("header ended before all fields were read")
    return data[start:pos], pos


def decode_raster(data: bytes) -> RasterImage:
    """Decode a binary netpbm stream (P5 grayscale or P6 RGB, maxval 255)."""
    magic, pos = _next_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormat(f"unrecognized magic {magic!r}")
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise UnsupportedFormat(f"{name} field {token!r} is not an integer") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise UnsupportedFormat(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise MaxvalNot255(f"maxval is {maxval}, this codec only handles 255")
    # Exactly one whitespace byte separates the header from the payload.
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise UnsupportedFormat("missing separator between header and payload")
    payload = data[pos + 1 :]
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    if len(payload) != expected:
        raise TruncatedPayload(f"expected {expected} payload bytes, got {len(payload)}")
    return RasterImage(width, height, channels, bytes(payload))


def encode_raster(image: RasterImage) -> bytes:
    """Encode to the canonical binary netpbm form."""
    magic = "P5" if image.channels == 1 else "P6"
    header = f"{magic}\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels
