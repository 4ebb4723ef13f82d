"""Distances between style representations.

Hellinger distance feeds the style-similarity kernel used for voting; the
Frechet (Wasserstein-2) distance between chroma Gaussians drives diversity
sampling. Both have batched forms that broadcast over leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularCovariance
from .stylestats import ChromaStats, StyleDescriptor

SINGULAR_JITTER = 1e-9


@dataclass(frozen=True)
class SimilarityParams:
    lambda_l: float = 0.005
    lambda_c: float = 0.05
    epsilon: float = 1.0
    # divide the squared luma distance by the feature length
    normalize_luma: bool = False

    def __post_init__(self):
        for name in ("lambda_l", "lambda_c", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _det(c):
    return c[..., 0, 0] * c[..., 1, 1] - c[..., 0, 1] * c[..., 1, 0]


def _regularize(c):
    det = _det(c)
    if np.all(det > 0):
        return c, det
    c = np.array(c, dtype=np.float64, copy=True)
    singular = det <= 0
    c[singular, 0, 0] += SINGULAR_JITTER
    c[singular, 1, 1] += SINGULAR_JITTER
    return c, _det(c)


def hellinger_batch(mean_p, cov_p, mean_s, cov_s, epsilon: float = 1.0) -> np.ndarray:
    """Hellinger distance between chroma Gaussians with an epsilon-padded mean gap.

    ``mean_*`` have shape (..., 2) and ``cov_*`` (..., 2, 2); leading axes
    broadcast.
    """
    cov_p, det_p = _regularize(np.asarray(cov_p, dtype=np.float64))
    cov_s, det_s = _regularize(np.asarray(cov_s, dtype=np.float64))
    mu = np.abs(np.asarray(mean_p) - np.asarray(mean_s)) + epsilon
    avg = 0.5 * (cov_p + cov_s)
    det_avg = _det(avg)
    if np.any(det_avg <= 0):
        raise SingularCovariance("averaged covariance is singular")
    # mu^T avg^-1 mu via the explicit 2x2 inverse
    quad = (
        avg[..., 1, 1] * mu[..., 0] ** 2
        - (avg[..., 0, 1] + avg[..., 1, 0]) * mu[..., 0] * mu[..., 1]
        + avg[..., 0, 0] * mu[..., 1] ** 2
    ) / det_avg
    coef = np.sqrt(np.sqrt(np.maximum(det_p * det_s, 0.0))) / np.sqrt(det_avg)
    return np.clip(1.0 - coef * np.exp(-quad / 8.0), 0.0, 1.0)


def hellinger(p: ChromaStats, s: ChromaStats, epsilon: float = 1.0) -> float:
    return float(hellinger_batch(p.mean, p.cov, s.mean, s.cov, epsilon))


def luma_distance_sq(q_p, q_s, normalize: bool = False) -> np.ndarray:
    d = np.asarray(q_p) - np.asarray(q_s)
    dist = np.sum(d * d, axis=-1)
    return dist / d.shape[-1] if normalize else dist


def similarity_batch(mean_p, cov_p, luma_p, mean_s, cov_s, luma_s, params: SimilarityParams):
    """Style similarity R for broadcastable stacks of descriptors."""
    de2 = luma_distance_sq(luma_p, luma_s, params.normalize_luma)
    dh = hellinger_batch(mean_p, cov_p, mean_s, cov_s, params.epsilon)
    return np.exp(-de2 / params.lambda_l) * np.exp(-(dh * dh) / params.lambda_c)


def style_similarity(
    p: StyleDescriptor, s: StyleDescriptor, params: SimilarityParams = SimilarityParams()
) -> float:
    return float(
        similarity_batch(
            p.chroma.mean, p.chroma.cov, p.luma.q, s.chroma.mean, s.chroma.cov, s.luma.q, params
        )
    )


def frechet(p: ChromaStats, q: ChromaStats) -> float:
    """Frechet distance between two chroma Gaussians.

    For 2x2 PSD matrices ``tr sqrt(P^1/2 Q P^1/2)`` equals
    ``sqrt(tr(PQ) + 2 sqrt(det P det Q))``, so no matrix root is needed.
    """
    if np.array_equal(p.mean, q.mean) and np.array_equal(p.cov, q.cov):
        return 0.0
    P, Q = p.cov, q.cov
    dmu = p.mean - q.mean
    mean_term = float(dmu @ dmu)
    cross = float(np.sum(P * Q)) + 2.0 * math.sqrt(max(float(_det(P) * _det(Q)), 0.0))
    trace_term = float(np.trace(P) + np.trace(Q)) - 2.0 * math.sqrt(max(cross, 0.0))
    return math.sqrt(mean_term + max(trace_term, 0.0))


def pairwise_frechet(stats: list[ChromaStats]) -> np.ndarray:
    n = len(stats)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = frechet(stats[i], stats[j])
    return out
