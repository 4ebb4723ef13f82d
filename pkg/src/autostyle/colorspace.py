"""Preprocessing chain: gamma compression, CIELab conversion and luminance stretch.

All transfer math runs on :class:`LabImage`, whose ``L`` plane holds L*/100 so
that luminance lives in [0, 1], while ``a`` and ``b`` stay in ordinary Lab
units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateLuminance
from .imgio import RgbImage

DEFAULT_GAMMA = 2.2
DEFAULT_CLIP = 0.005

# IEC 61966-2-1 primaries, D65
RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)
# white point taken from the matrix itself so RGB white lands on a = b = 0
WHITE = RGB_TO_XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabImage:
    """Planar CIELab image. ``L`` is normalized to [0, 1]."""

    L: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        planes = []
        for name in ("L", "a", "b"):
            p = np.asarray(getattr(self, name), dtype=np.float64)
            if p.ndim != 2:
                raise ValueError(f"plane {name} must be 2-D, got shape {p.shape}")
            p = p.view()
            p.flags.writeable = False
            planes.append(p)
            object.__setattr__(self, name, p)
        if not (planes[0].shape == planes[1].shape == planes[2].shape):
            raise ValueError("L, a, b planes must share one shape")
        if planes[0].size == 0:
            raise ValueError("image must have at least one pixel")
        L = planes[0]
        if not (L.min() >= 0.0 and L.max() <= 1.0):
            raise ValueError("L must lie in [0, 1]")
        if not (np.isfinite(planes[1]).all() and np.isfinite(planes[2]).all()):
            raise ValueError("a and b must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.L.shape

    @property
    def height(self) -> int:
        return self.L.shape[0]

    @property
    def width(self) -> int:
        return self.L.shape[1]

    def replace(self, L=None, a=None, b=None) -> "LabImage":
        return LabImage(
            self.L if L is None else L,
            self.a if a is None else a,
            self.b if b is None else b,
        )


def srgb_decode(v: np.ndarray) -> np.ndarray:
    """sRGB transfer function, encoded -> linear."""
    out = v + 0.055
    out *= 1.0 / 1.055
    np.power(out, 2.4, out=out)
    low = v <= 0.04045
    out[low] = v[low] / 12.92
    return out


def _linear_table(exponent: float) -> np.ndarray:
    return srgb_decode(np.power(np.arange(256) / 255.0, exponent))


def _linearize(v: np.ndarray, exponent: float) -> np.ndarray:
    """Gamma-compress then sRGB-decode; 8-bit valued input goes through a table."""
    scaled = v * 255.0
    codes = np.rint(scaled)
    if np.array_equal(scaled, codes):
        return _linear_table(exponent)[codes.astype(np.uint8)]
    if exponent != 1.0:
        v = np.power(v, exponent)
    return srgb_decode(v)


def srgb_encode(v: np.ndarray) -> np.ndarray:
    """sRGB transfer function, linear -> encoded."""
    out = 1.055 * np.power(v, 1.0 / 2.4) - 0.055
    low = v <= 0.0031308
    out[low] = v[low] * 12.92
    return out


def _lab_f(t: np.ndarray) -> np.ndarray:
    out = np.cbrt(t)
    low = t <= _DELTA**3
    out[low] = t[low] / (3 * _DELTA**2) + 4.0 / 29.0
    return out


def _lab_finv(t: np.ndarray) -> np.ndarray:
    out = t * t * t
    low = t <= _DELTA
    out[low] = 3 * _DELTA**2 * (t[low] - 4.0 / 29.0)
    return out


def _gamma_exponent(gamma: float, compress: bool) -> float:
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return 1.0 / gamma if compress else gamma


def srgb_to_lab(rgb: RgbImage, gamma: float = DEFAULT_GAMMA, compress: bool = True) -> LabImage:
    """Gamma-compress ``rgb`` and convert it to normalized Lab.

    Each stored channel value ``v`` becomes ``v ** (1/gamma)`` (or
    ``v ** gamma`` when ``compress`` is false) and is then run through the
    standard sRGB -> XYZ (D65) -> Lab conversion.
    """
    exponent = _gamma_exponent(gamma, compress)
    h, w = rgb.height, rgb.width
    n = h * w
    xyz = np.empty((3, n))
    _kernels.rgb_to_xyz(rgb.pixels.reshape(n, 3), exponent, _linear_table(exponent), RGB_TO_XYZ, WHITE, xyz)
    return _xyz_to_lab(xyz, h, w)


def _srgb_to_lab_direct(rgb: RgbImage, exponent: float) -> LabImage:
    """Vectorized reference for the compiled conversion."""
    h, w = rgb.height, rgb.width
    v = np.ascontiguousarray(rgb.pixels.reshape(-1, 3).T)
    xyz = RGB_TO_XYZ @ _linearize(v, exponent)
    xyz /= WHITE[:, None]
    return _xyz_to_lab(xyz, h, w)


def _xyz_to_lab(xyz: np.ndarray, h: int, w: int) -> LabImage:
    f = _lab_f(xyz)
    L = 1.16 * f[1] - 0.16
    a = 500.0 * (f[0] - f[1])
    b = 200.0 * (f[1] - f[2])
    np.clip(L, 0.0, 1.0, out=L)
    return LabImage(L.reshape(h, w), a.reshape(h, w), b.reshape(h, w))


def lab_to_srgb(lab: LabImage, gamma: float = DEFAULT_GAMMA, compress: bool = True) -> RgbImage:
    """Inverse of :func:`srgb_to_lab`; out-of-gamut colors are clamped.

    When the output exponent is at least one (the default compressing mode)
    the final per-channel curve is read from a dense table, accurate to
    about 1e-7; otherwise the curve is evaluated directly.
    """
    exponent = _gamma_exponent(gamma, compress)
    out_exponent = 1.0 / exponent
    if out_exponent >= 1.0:
        out = np.empty((lab.L.size, 3))
        _kernels.lab_to_rgb(
            lab.L.reshape(-1), lab.a.reshape(-1), lab.b.reshape(-1),
            XYZ_TO_RGB, WHITE, _kernels.encode_lut(out_exponent), out,
        )
        return RgbImage.trusted(out.reshape(lab.height, lab.width, 3))
    return _lab_to_srgb_direct(lab, out_exponent)


def _lab_to_srgb_direct(lab: LabImage, out_exponent: float) -> RgbImage:
    fy = (lab.L.reshape(-1) * 100.0 + 16.0) / 116.0
    f = np.empty((3, fy.size))
    f[0] = fy + lab.a.reshape(-1) / 500.0
    f[1] = fy
    f[2] = fy - lab.b.reshape(-1) / 200.0
    xyz = _lab_finv(f) * WHITE[:, None]
    lin = np.clip(XYZ_TO_RGB @ xyz, 0.0, 1.0)
    v = np.clip(srgb_encode(lin), 0.0, 1.0)
    if out_exponent != 1.0:
        v = np.power(v, out_exponent)
    return RgbImage(v.T.reshape(lab.height, lab.width, 3))


def stretch_luminance(lab: LabImage, clip_fraction: float = DEFAULT_CLIP) -> LabImage:
    """Clip the darkest/brightest ``clip_fraction`` of L and stretch to [0, 1].

    Quantiles use linear interpolation between order statistics. Raises
    :class:`DegenerateLuminance` when the two quantiles coincide.
    """
    if not 0.0 <= clip_fraction < 0.5:
        raise ValueError(f"clip_fraction must lie in [0, 0.5), got {clip_fraction}")
    lo, hi = np.quantile(lab.L, [clip_fraction, 1.0 - clip_fraction])
    if not hi > lo:
        raise DegenerateLuminance(f"luminance quantiles coincide at {lo:.6g}")
    L = np.clip((lab.L - lo) / (hi - lo), 0.0, 1.0)
    return lab.replace(L=L)


def preprocess(
    rgb: RgbImage,
    gamma: float = DEFAULT_GAMMA,
    clip_fraction: float = DEFAULT_CLIP,
    compress: bool = True,
) -> LabImage:
    """Gamma + Lab + stretch, with a constant-luminance image left unstretched."""
    lab = srgb_to_lab(rgb, gamma, compress)
    try:
        return stretch_luminance(lab, clip_fraction)
    except DegenerateLuminance as exc:
        log.warning("skipping luminance stretch: %s", exc)
        return lab
