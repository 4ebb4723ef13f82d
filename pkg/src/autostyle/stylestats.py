"""Global style statistics of a Lab image.

A style is summarized by a Gaussian fit to the (a, b) chrominance samples and
by 32 mid-bin percentiles of the luminance distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .colorspace import LabImage
from .errors import NegativeEigenvalue, NotSymmetric

N_PERCENTILES = 32
PERCENTILE_LEVELS = (np.arange(N_PERCENTILES) + 0.5) / N_PERCENTILES
MAX_STAT_SAMPLES = 512 * 512


@dataclass(frozen=True, eq=False)
class ChromaStats:
    mean: np.ndarray  # (2,) Lab units
    cov: np.ndarray  # (2, 2) Lab units squared

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(2)
        cov = np.array(self.cov, dtype=np.float64).reshape(2, 2)
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ChromaStats":
        return cls(np.array(d["mean"]), np.array(d["cov"]))


@dataclass(frozen=True, eq=False)
class LumaFeature:
    q: np.ndarray  # (32,) nondecreasing, in [0, 1]

    def __post_init__(self):
        q = np.array(self.q, dtype=np.float64).reshape(-1)
        if q.size != N_PERCENTILES:
            raise ValueError(f"luminance feature needs {N_PERCENTILES} entries, got {q.size}")
        q.flags.writeable = False
        object.__setattr__(self, "q", q)


@dataclass(frozen=True, eq=False)
class StyleDescriptor:
    chroma: ChromaStats
    luma: LumaFeature

    def to_dict(self) -> dict:
        return {"chroma": self.chroma.to_dict(), "luma": self.luma.q.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StyleDescriptor":
        return cls(ChromaStats.from_dict(d["chroma"]), LumaFeature(np.array(d["luma"])))

    def same_as(self, other: "StyleDescriptor") -> bool:
        """Bitwise equality of every statistic."""
        return (
            np.array_equal(self.chroma.mean, other.chroma.mean)
            and np.array_equal(self.chroma.cov, other.chroma.cov)
            and np.array_equal(self.luma.q, other.luma.q)
        )


def subsample(img: LabImage, max_samples: int | None = MAX_STAT_SAMPLES) -> LabImage:
    """Regular-grid subsample so that at most ``max_samples`` pixels remain."""
    if max_samples is None or img.L.size <= max_samples:
        return img
    step = math.ceil(math.sqrt(img.L.size / max_samples))
    while math.ceil(img.height / step) * math.ceil(img.width / step) > max_samples:
        step += 1
    return LabImage(img.L[::step, ::step], img.a[::step, ::step], img.b[::step, ::step])


def chroma_stats(img: LabImage) -> ChromaStats:
    """Mean and population covariance of the (a, b) samples."""
    if img.L.size < 2:
        raise ValueError("chroma statistics need at least two pixels")
    a = img.a.reshape(-1)
    b = img.b.reshape(-1)
    ma, mb = a.mean(), b.mean()
    da = a - ma
    db = b - mb
    caa = np.mean(da * da)
    cbb = np.mean(db * db)
    cab = np.mean(da * db)
    return ChromaStats(np.array([ma, mb]), np.array([[caa, cab], [cab, cbb]]))


def luma_feature(img: LabImage) -> LumaFeature:
    """Luminance quantiles at levels (i + 0.5) / 32."""
    q = np.quantile(img.L.reshape(-1), PERCENTILE_LEVELS)
    q = np.maximum.accumulate(np.clip(q, 0.0, 1.0))
    return LumaFeature(q)


def style_descriptor(img: LabImage, max_samples: int | None = MAX_STAT_SAMPLES) -> StyleDescriptor:
    """Chroma and luma statistics of ``img``.

    Images with more than ``max_samples`` pixels are read on a regular
    subsampling grid; pass ``None`` to use every pixel.
    """
    img = subsample(img, max_samples)
    return StyleDescriptor(chroma_stats(img), luma_feature(img))


def check_psd2(m, tol: float = 1e-9) -> np.ndarray:
    """Validate a 2x2 symmetric PSD matrix and return its symmetrized copy."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()))
    if abs(m[0, 1] - m[1, 0]) > tol * scale:
        raise NotSymmetric(f"matrix is not symmetric: {m.tolist()}")
    off = 0.5 * (m[0, 1] + m[1, 0])
    half_tr = 0.5 * (m[0, 0] + m[1, 1])
    gap = math.hypot(0.5 * (m[0, 0] - m[1, 1]), off)
    if half_tr - gap < -tol * scale:
        raise NegativeEigenvalue(f"matrix has eigenvalue {half_tr - gap:.3g}")
    return np.array([[m[0, 0], off], [off, m[1, 1]]])


def sqrt_spd2(m) -> np.ndarray:
    """Principal square root of a 2x2 symmetric PSD matrix.

    Uses the closed form ``(M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M))``,
    which follows from Cayley-Hamilton.
    """
    m = check_psd2(m)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[0, 1]
    s = math.sqrt(max(det, 0.0))
    t2 = m[0, 0] + m[1, 1] + 2.0 * s
    if t2 <= 0.0:
        return np.zeros((2, 2))
    t = math.sqrt(t2)
    return np.array([[m[0, 0] + s, m[0, 1]], [m[0, 1], m[1, 1] + s]]) / t


def inv2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
