"""Run-time style selection: nearest clusters, merged ranking, diverse sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .catalog.index import StyleIndex
from .catalog.kmeans import ClusterModel, center_distances
from .catalog.ranking import RankingTable, StyleEntry, sort_scores
from .errors import UnknownCluster
from .imgio import RgbImage
from .similarity import frechet
from .stylestats import StyleDescriptor


@dataclass(frozen=True)
class SelectionConfig:
    n_clusters: int = 3
    diversity_threshold: float = 7.5
    k_outputs: int = 5

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be at least 1")
        if self.k_outputs < 1:
            raise ValueError("k_outputs must be at least 1")
        if not self.diversity_threshold >= 0:
            raise ValueError("diversity_threshold must be non-negative")


def nearest_clusters(f, model: ClusterModel, n: int) -> list[int]:
    """The ``n`` closest cluster ids, ascending by distance, ties by id."""
    if not 1 <= n <= model.k:
        raise ValueError(f"n must lie in [1, {model.k}], got {n}")
    d = center_distances(f, model)
    return [int(i) for i in np.argsort(d, kind="stable")[:n]]


def merge_rankings(table: RankingTable, clusters) -> list[tuple[int, float]]:
    """Sum each style's score over ``clusters`` and sort descending, ties by id."""
    clusters = list(clusters)
    if not clusters:
        raise ValueError("at least one cluster is required")
    for c in clusters:
        if not 0 <= c < table.k:
            raise UnknownCluster(f"cluster {c} not in 0..{table.k - 1}")
    ids = np.sort(table.style_ids[clusters[0]])
    total = np.zeros(ids.size)
    for c in clusters:
        order = np.argsort(table.style_ids[c])
        total += table.scores[c][order].astype(np.float64)
    ids, total = sort_scores(ids, total)
    return [(int(i), float(s)) for i, s in zip(ids, total)]


def sample_diverse(ranked, styles: dict[int, StyleDescriptor], threshold: float, k: int) -> list[int]:
    """Greedy scan keeping styles at Frechet distance >= threshold from all kept ones."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    if k < 1:
        raise ValueError("k must be at least 1")
    accepted: list[int] = []
    for sid in ranked:
        cand = styles[sid].chroma
        if all(frechet(cand, styles[a].chroma) >= threshold for a in accepted):
            accepted.append(sid)
            if len(accepted) == k:
                break
    return accepted


@dataclass(frozen=True)
class Selection:
    entries: list[StyleEntry]
    scores: list[float]
    clusters: list[int]
    merged: list[tuple[int, float]]


def select_styles(
    img: RgbImage,
    index: StyleIndex,
    feature_provider: Callable[[RgbImage], np.ndarray],
    cfg: SelectionConfig = SelectionConfig(),
    feature=None,
) -> Selection:
    """Pick up to ``cfg.k_outputs`` diverse styles for ``img``.

    ``feature`` short-circuits ``feature_provider`` when the semantic feature
    of the input is already known.
    """
    f = feature_provider(img) if feature is None else feature
    n = min(cfg.n_clusters, index.model.k)
    clusters = nearest_clusters(f, index.model, n)
    merged = merge_rankings(index.rankings, clusters)
    picked = sample_diverse(
        [sid for sid, _ in merged], index.descriptors(), cfg.diversity_threshold, cfg.k_outputs
    )
    score = dict(merged)
    return Selection(
        entries=[index.style(sid) for sid in picked],
        scores=[score[sid] for sid in picked],
        clusters=clusters,
        merged=merged,
    )
