"""Seeded k-means over semantic features and nearest-center lookup."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, TooFewPoints


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """k cluster centers in feature space, stored as float32."""

    centers: np.ndarray  # (k, dim)

    def __post_init__(self):
        c = np.array(self.centers, dtype=np.float32)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValueError(f"centers must be a non-empty (k, dim) array, got {c.shape}")
        if not np.isfinite(c).all():
            raise ValueError("centers must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "centers", c)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def _as_matrix(features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"features must form an (n, dim) array, got shape {X.shape}")
    return X


def sq_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances (n, k) via the norm expansion, clamped at 0."""
    d = (X * X).sum(axis=1)[:, None] - 2.0 * (X @ C.T) + (C * C).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0.0:
            cum = np.cumsum(d2)
            idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            # every point coincides with a chosen center
            taken = np.zeros(n, dtype=bool)
            taken[chosen] = True
            idx = int(np.flatnonzero(~taken)[0])
        chosen.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _cluster_means(X: np.ndarray, labels: np.ndarray, k: int):
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, X.shape[1]))
    present = np.flatnonzero(counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))[present]
    sums[present] = np.add.reduceat(X[order], starts, axis=0)
    return sums, counts


def kmeans_cluster(
    features,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-4,
    trace: list | None = None,
) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding.

    Stops once the relative center movement drops below ``tol`` or after
    ``max_iter`` iterations. Empty clusters are re-seeded at the point
    farthest from its center. If ``trace`` is given, the distortion of every
    assignment step is appended to it. Deterministic for fixed inputs.
    """
    X = _as_matrix(features)
    n = X.shape[0]
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if n < k:
        raise TooFewPoints(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(X, k, rng)

    for _ in range(max_iter):
        d = sq_distances(X, centers)
        labels = np.argmin(d, axis=1)
        dist = d[np.arange(n), labels]
        if trace is not None:
            trace.append(float(dist.sum()))
        sums, counts = _cluster_means(X, labels, k)
        new = centers.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        for j in np.flatnonzero(~filled):
            far = int(np.argmax(dist))
            new[j] = X[far]
            dist[far] = 0.0
        scale = np.linalg.norm(centers)
        shift = np.linalg.norm(new - centers) / (scale if scale > 0 else 1.0)
        centers = new
        if shift < tol:
            break
    return ClusterModel(centers.astype(np.float32))


def _check_dim(f: np.ndarray, model: ClusterModel) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    if f.size != model.dim:
        raise DimensionMismatch(f"feature has dimension {f.size}, model expects {model.dim}")
    return f


def center_distances(f, model: ClusterModel) -> np.ndarray:
    """Exact squared distances from one feature to every center."""
    f = _check_dim(f, model)
    diff = model.centers.astype(np.float64) - f
    return (diff * diff).sum(axis=1)


def assign_cluster(f, model: ClusterModel) -> int:
    """Index of the nearest center; ties go to the lowest id."""
    return int(np.argmin(center_distances(f, model)))


def assign_many(features, model: ClusterModel, chunk: int = 4096) -> np.ndarray:
    """Nearest-center labels for a stack of features."""
    X = _as_matrix(features)
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"features have dimension {X.shape[1]}, model expects {model.dim}")
    C = model.centers.astype(np.float64)
    labels = np.empty(X.shape[0], dtype=np.intp)
    for start in range(0, X.shape[0], chunk):
        block = X[start : start + chunk]
        labels[start : start + chunk] = np.argmin(sq_distances(block, C), axis=1)
    return labels
