"""Raster decode/encode to the normalized in-memory RGB representation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptImage,
    ImageNotFound,
    ImageWriteError,
    InvalidFormat,
    UnsupportedFormat,
)

SUPPORTED_FORMATS = ("PNG", "JPEG")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class RgbImage:
    """Gamma-encoded RGB image with samples in [0, 1].

    ``pixels`` has shape (height, width, 3). The array is made read-only on
    construction so images can be shared between threads.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not np.isfinite(px).all():
            raise ValueError("pixels must be finite")
        px = px.view()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def trusted(cls, pixels: np.ndarray) -> "RgbImage":
        """Wrap a float64 (H, W, 3) array already known to be finite and in range."""
        px = pixels.view()
        px.flags.writeable = False
        img = object.__new__(cls)
        object.__setattr__(img, "pixels", px)
        return img

    @classmethod
    def from_uint8(cls, data: np.ndarray) -> "RgbImage":
        return cls(np.asarray(data, dtype=np.float64) / 255.0)

    def to_uint8(self) -> np.ndarray:
        """Quantize to 8 bits with round-half-up."""
        return quantize(self.pixels)


def quantize(values: np.ndarray) -> np.ndarray:
    v = np.clip(values, 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def decode_image(path) -> RgbImage:
    """Read a PNG or JPEG file into an :class:`RgbImage`.

    Alpha is composited over white. Raises :class:`ImageNotFound`,
    :class:`UnsupportedFormat` or :class:`CorruptImage`.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageNotFound(f"no such image: {path}")
    try:
        with Image.open(path) as im:
            if im.format not in SUPPORTED_FORMATS:
                raise UnsupportedFormat(f"{path}: format {im.format} not supported")
            im.load()
            data = _to_rgb_array(im)
    except UnidentifiedImageError as exc:
        raise CorruptImage(f"{path}: not a decodable image") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        raise CorruptImage(f"{path}: {exc}") from exc
    return RgbImage(np.clip(data, 0.0, 1.0))


def _to_rgb_array(im: Image.Image) -> np.ndarray:
    has_alpha = im.mode in ("RGBA", "LA", "PA") or (
        im.mode == "P" and "transparency" in im.info
    )
    if not has_alpha:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    rgba = np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0
    alpha = rgba[..., 3:4]
    return rgba[..., :3] * alpha + (1.0 - alpha)


def encode_image(img: RgbImage, path, format: str = "png") -> None:
    """Write ``img`` as an 8-bit PNG or JPEG."""
    fmt = format.lower()
    if fmt not in ("png", "jpeg", "jpg"):
        raise InvalidFormat(f"unsupported output format: {format!r}")
    pil_format = "PNG" if fmt == "png" else "JPEG"
    out = Image.fromarray(img.to_uint8())
    path = Path(path)
    try:
        if pil_format == "JPEG":
            out.save(path, format=pil_format, quality=95)
        else:
            # fixed compression level keeps output bytes reproducible
            out.save(path, format=pil_format, compress_level=6)
    except OSError as exc:
        raise ImageWriteError(f"cannot write {path}: {exc}") from exc


def list_images(root) -> list[Path]:
    """All PNG/JPEG files under ``root``, recursively, in sorted order."""
    root = Path(root)
    return sorted(
        p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
