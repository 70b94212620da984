"""In-memory image tensors, geometric ops, and PPM/PGM file IO.

Images are float64 arrays of shape (height, width, channels) with
intensities in [0, 1]; channels is 1 (gray) or 3 (RGB). File IO covers the
binary netpbm formats (P5 grayscale, P6 color) at 8 bits, which keeps the
toolkit free of codec dependencies.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ImageTensor:
    """An image as float64 intensities in [0, 1], shape (h, w, c)."""

    height: int
    width: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be positive")
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"({self.height}, {self.width}, {self.channels})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image data must be finite")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageTensor":
        """Wrap a (h, w), (h, w, 1) or (h, w, 3) array of [0, 1] floats."""
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise ValueError("expected a 2-D or 3-D array")
        return cls(a.shape[0], a.shape[1], a.shape[2], a)

    def luminance(self) -> np.ndarray:
        """Grayscale view (h, w); Rec.601 weights for color images."""
        if self.channels == 1:
            return self.data[:, :, 0]
        return (
            0.299 * self.data[:, :, 0]
            + 0.587 * self.data[:, :, 1]
            + 0.114 * self.data[:, :, 2]
        )


def bilinear_resize(img: ImageTensor, out_h: int, out_w: int) -> ImageTensor:
    """Resize to out_h x out_w with bilinear sampling at pixel centers.

    Aspect ratio is not preserved; non-square inputs stretch. Returns the
    input unchanged when the size already matches.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be positive")
    if (out_h, out_w) == (img.height, img.width):
        return img
    rows = (np.arange(out_h) + 0.5) * (img.height / out_h) - 0.5
    cols = (np.arange(out_w) + 0.5) * (img.width / out_w) - 0.5
    r0 = np.clip(np.floor(rows).astype(int), 0, img.height - 1)
    c0 = np.clip(np.floor(cols).astype(int), 0, img.width - 1)
    r1 = np.minimum(r0 + 1, img.height - 1)
    c1 = np.minimum(c0 + 1, img.width - 1)
    fr = np.clip(rows - r0, 0.0, 1.0)[:, None, None]
    fc = np.clip(cols - c0, 0.0, 1.0)[None, :, None]
    d = img.data
    top = d[r0][:, c0] * (1 - fc) + d[r0][:, c1] * fc
    bot = d[r1][:, c0] * (1 - fc) + d[r1][:, c1] * fc
    out = top * (1 - fr) + bot * fr
    return ImageTensor(out_h, out_w, img.channels, out)


def hflip(img: ImageTensor) -> ImageTensor:
    """Mirror around the vertical axis."""
    return ImageTensor(img.height, img.width, img.channels, img.data[:, ::-1].copy())


def crop(img: ImageTensor, top: int, left: int, size: int) -> ImageTensor:
    """Extract a size x size window with its corner at (top, left)."""
    if size < 1:
        raise ValueError("crop size must be positive")
    if top < 0 or left < 0 or top + size > img.height or left + size > img.width:
        raise ValueError(
            f"crop {size}x{size} at ({top}, {left}) exceeds {img.height}x{img.width} image"
        )
    return ImageTensor(size, size, img.channels, img.data[top : top + size, left : left + size].copy())


def random_crop(img: ImageTensor, size: int, rng: np.random.Generator) -> ImageTensor:
    """Crop at an offset drawn uniformly over all valid positions.

    Draws the row offset first, then the column offset, so callers relying
    on a shared generator get a reproducible stream.
    """
    if size > img.height or size > img.width:
        raise ValueError(f"crop size {size} exceeds image {img.height}x{img.width}")
    top = int(rng.integers(0, img.height - size + 1))
    left = int(rng.integers(0, img.width - size + 1))
    return crop(img, top, left, size)


def center_crop(img: ImageTensor, size: int) -> ImageTensor:
    if size > img.height or size > img.width:
        raise ValueError(f"crop size {size} exceeds image {img.height}x{img.width}")
    return crop(img, (img.height - size) // 2, (img.width - size) // 2, size)


def read_image(path: str | Path) -> ImageTensor:
    """Read a binary PGM (P5) or PPM (P6) file, mapping 8-bit values to [0, 1]."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    try:
        magic, rest = _take_token(raw)
        if magic not in (b"P5", b"P6"):
            raise ValueError(f"unsupported netpbm magic {magic!r}")
        width_tok, rest = _take_token(rest)
        height_tok, rest = _take_token(rest)
        maxval_tok, rest = _take_token(rest)
        width, height, maxval = int(width_tok), int(height_tok), int(maxval_tok)
        if maxval != 255:
            raise ValueError(f"only maxval 255 supported, got {maxval}")
        channels = 1 if magic == b"P5" else 3
        n = width * height * channels
        payload = rest[1 : 1 + n]  # single whitespace byte separates header and pixels
        if len(payload) != n:
            raise ValueError(f"expected {n} pixel bytes, found {len(payload)}")
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return ImageTensor(height, width, channels, arr.astype(np.float64) / 255.0)


def write_image(img: ImageTensor, path: str | Path) -> None:
    """Write a binary PGM (gray) or PPM (color) file at 8 bits."""
    path = Path(path)
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    payload = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8).tobytes()
    path.write_bytes(header + payload)


def _take_token(buf: bytes) -> tuple[bytes, bytes]:
    """Pop one whitespace-delimited header token, skipping # comments."""
    i = 0
    while True:
        while i < len(buf) and buf[i : i + 1].isspace():
            i += 1
        if i < len(buf) and buf[i : i + 1] == b"#":
            while i < len(buf) and buf[i : i + 1] != b"\n":
                i += 1
            continue
        break
    j = i
    while j < len(buf) and not buf[j : j + 1].isspace():
        j += 1
    if i == j:
        raise ValueError("truncated header")
    return buf[i:j], buf[j:]
