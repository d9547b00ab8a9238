"""HDR raster buffers with PFM serialization and mean-square error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ImageBuffer:
    """Row-major RGB image, float32 channels, finite and non-negative."""

    data: np.ndarray  # (height, width, 3) float32

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError("image data must have shape (height, width, 3)")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def zeros(cls, width: int, height: int) -> "ImageBuffer":
        return cls(np.zeros((height, width, 3), dtype=np.float32))


def write_pfm(img: ImageBuffer, path: str):
    """Write a color PFM: 'PF' header, dimensions, scale -1 (little endian),
    rows bottom-to-top."""
    data = np.asarray(img.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(b"PF\n")
        fh.write(f"{img.width} {img.height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(data[::-1].tobytes())


def read_pfm(path: str) -> ImageBuffer:
    """Read a color PFM written by write_pfm; rejects big-endian files."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"PF":
            raise ValueError(f"not a color PFM file (header {magic!r})")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise ValueError("malformed PFM dimensions line")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        if scale >= 0.0:
            raise ValueError("big-endian PFM (positive scale) is not supported")
        payload = fh.read(width * height * 3 * 4)
        if len(payload) != width * height * 3 * 4:
            raise ValueError("truncated PFM payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(height, width, 3)
    return ImageBuffer(data[::-1].copy())


def mse(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean over pixels and channels of the squared difference."""
    if a.data.shape != b.data.shape:
        raise ValueError("image dimensions differ")
    d = a.data.astype(np.float64) - b.data.astype(np.float64)
    return float(np.mean(d * d))
