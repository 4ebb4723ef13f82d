"""Compiled per-pixel loops for the color conversions.

On the output path the Lab -> XYZ -> linear RGB chain is evaluated exactly;
the final per-channel curve (sRGB encode followed by gamma expansion) is read
from a dense table, which avoids two scalar ``pow`` calls per sample. On the
input path 8-bit valued samples are linearized through a 256-entry table.
"""

from functools import lru_cache

import numpy as np
from numba import njit

ENCODE_LUT_SIZE = 65536

_D = 6.0 / 29.0
_D2x3 = 3.0 * _D * _D
_F0 = 4.0 / 29.0


@lru_cache(maxsize=8)
def encode_lut(exponent: float) -> np.ndarray:
    """Table of ``srgb_encode(x) ** exponent`` on a uniform grid over [0, 1]."""
    x = np.linspace(0.0, 1.0, ENCODE_LUT_SIZE + 1)
    enc = np.where(x <= 0.0031308, x * 12.92, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)
    lut = np.power(np.clip(enc, 0.0, 1.0), exponent)
    lut[0], lut[-1] = 0.0, 1.0
    lut.flags.writeable = False
    return lut


@njit(cache=True)
def _linearize(v, exponent, table):
    s = v * 255.0
    c = np.rint(s)
    if s == c:
        return table[int(c)]
    g = v ** exponent
    if g <= 0.04045:
        return g / 12.92
    return ((g + 0.055) / 1.055) ** 2.4


@njit(cache=True)
def rgb_to_xyz(px, exponent, table, M, W, out):
    """``px`` is (N, 3) encoded RGB; writes white-normalized XYZ into (3, N) ``out``."""
    for i in range(px.shape[0]):
        r = _linearize(px[i, 0], exponent, table)
        g = _linearize(px[i, 1], exponent, table)
        b = _linearize(px[i, 2], exponent, table)
        for c in range(3):
            out[c, i] = (M[c, 0] * r + M[c, 1] * g + M[c, 2] * b) / W[c]


@njit(cache=True)
def _finv(t):
    if t > _D:
        return t * t * t
    return _D2x3 * (t - _F0)


@njit(cache=True)
def _interp(lut, v):
    # v already clipped to [0, 1]
    n = lut.size - 1
    x = v * n
    j = int(x)
    if j >= n:
        return lut[n]
    lo = lut[j]
    return lo + (x - j) * (lut[j + 1] - lo)


@njit(cache=True)
def _lab_pixel(L, a, b, M, W, enc, out, i):
    fy = (L * 100.0 + 16.0) / 116.0
    x = W[0] * _finv(fy + a / 500.0)
    y = W[1] * _finv(fy)
    z = W[2] * _finv(fy - b / 200.0)
    for c in range(3):
        v = M[c, 0] * x + M[c, 1] * y + M[c, 2] * z
        v = min(max(v, 0.0), 1.0)
        out[i, c] = _interp(enc, v)


@njit(cache=True)
def lab_to_rgb(L, a, b, M, W, enc, out):
    for i in range(L.size):
        _lab_pixel(L[i], a[i], b[i], M, W, enc, out, i)


@njit(cache=True)
def render(L, a, b, T, mu_in, mu_style, tone, M, W, enc, out):
    """Chroma map, tone table and Lab -> RGB fused in one pass."""
    for i in range(L.size):
        da = a[i] - mu_in[0]
        db = b[i] - mu_in[1]
        a2 = T[0, 0] * da + T[0, 1] * db + mu_style[0]
        b2 = T[1, 0] * da + T[1, 1] * db + mu_style[1]
        l2 = _interp(tone, min(max(L[i], 0.0), 1.0))
        _lab_pixel(l2, a2, b2, M, W, enc, out, i)


def warmup() -> None:
    """Load (or compile) the kernels for writeable float64 arguments."""
    M = np.eye(3)
    lut = np.linspace(0.0, 1.0, 3)
    out = np.empty((1, 3))
    one = np.zeros(1)
    rgb_to_xyz(out, 1.0, np.zeros(256), M, np.ones(3), np.empty((3, 1)))
    lab_to_rgb(one, one, one, M, np.ones(3), lut, out)
    render(one, one, one, np.eye(2), np.zeros(2), np.zeros(2), lut, M, np.ones(3), lut, out)
