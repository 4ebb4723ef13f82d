"""Per-cluster style voting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..similarity import SimilarityParams, similarity_batch
from ..stylestats import StyleDescriptor
from .kmeans import ClusterModel, assign_many


@dataclass(frozen=True, eq=False)
class StyleEntry:
    style_id: int
    descriptor: StyleDescriptor
    source_path: str


@dataclass(frozen=True, eq=False)
class RankingTable:
    """Full style ranking of every cluster.

    Row ``c`` of ``style_ids`` lists all style ids of cluster ``c`` by
    decreasing aggregate score (ties by id); ``scores`` holds the matching
    float32 scores.
    """

    style_ids: np.ndarray  # (k, n) uint32
    scores: np.ndarray  # (k, n) float32

    def __post_init__(self):
        ids = np.array(self.style_ids, dtype=np.uint32)
        scores = np.array(self.scores, dtype=np.float32)
        if ids.ndim != 2 or ids.shape != scores.shape:
            raise ValueError("style_ids and scores must be matching (k, n) arrays")
        ids.flags.writeable = False
        scores.flags.writeable = False
        object.__setattr__(self, "style_ids", ids)
        object.__setattr__(self, "scores", scores)

    @property
    def k(self) -> int:
        return self.style_ids.shape[0]

    @property
    def n_styles(self) -> int:
        return self.style_ids.shape[1]

    def ranking(self, cluster: int) -> list[tuple[int, float]]:
        return [(int(i), float(s)) for i, s in zip(self.style_ids[cluster], self.scores[cluster])]

    def score_vector(self, cluster: int, id_order: np.ndarray) -> np.ndarray:
        """Scores of ``cluster`` rearranged to follow ``id_order``."""
        lookup = dict(zip(self.style_ids[cluster].tolist(), self.scores[cluster].tolist()))
        return np.array([lookup[int(i)] for i in id_order], dtype=np.float32)


def sort_scores(ids: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order by decreasing score, then increasing id."""
    order = np.lexsort((ids, -scores.astype(np.float64)))
    return ids[order], scores[order]


def _stack_descriptors(descriptors):
    means = np.array([d.chroma.mean for d in descriptors])
    covs = np.array([d.chroma.cov for d in descriptors])
    lumas = np.array([d.luma.q for d in descriptors])
    return means, covs, lumas


def vote_matrix(descriptors, styles, params: SimilarityParams, chunk: int = 2048) -> np.ndarray:
    """R(P, S) for every collection descriptor P (rows) and style S (columns)."""
    sm, sc, sl = _stack_descriptors([s.descriptor for s in styles])
    out = np.empty((len(descriptors), len(styles)))
    for start in range(0, len(descriptors), chunk):
        pm, pc, pl = _stack_descriptors(descriptors[start : start + chunk])
        out[start : start + chunk] = similarity_batch(
            pm[:, None], pc[:, None], pl[:, None], sm[None], sc[None], sl[None], params
        )
    return out


def build_ranking(
    model: ClusterModel,
    features,
    descriptors,
    styles,
    params: SimilarityParams = SimilarityParams(),
    labels=None,
) -> RankingTable:
    """Aggregate style similarity over each cluster's members and rank styles.

    ``features`` and ``descriptors`` describe the same collection images in
    the same order; ``labels`` may carry precomputed cluster assignments.
    Scores are summed in float64 and stored as float32, the persisted
    precision, before sorting.
    """
    if not styles:
        raise ValueError("at least one style is required")
    if labels is None:
        labels = assign_many(features, model) if len(descriptors) else np.empty(0, dtype=np.intp)
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size != len(descriptors):
        raise ValueError("labels and descriptors differ in length")

    votes = vote_matrix(list(descriptors), styles, params) if len(descriptors) else None
    ids = np.array([s.style_id for s in styles], dtype=np.uint32)
    k = model.k
    totals = np.zeros((k, len(styles)))
    if votes is not None:
        order = np.argsort(labels, kind="stable")
        counts = np.bincount(labels, minlength=k)
        present = np.flatnonzero(counts)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))[present]
        totals[present] = np.add.reduceat(votes[order], starts, axis=0)

    out_ids = np.empty((k, len(styles)), dtype=np.uint32)
    out_scores = np.empty((k, len(styles)), dtype=np.float32)
    for c in range(k):
        out_ids[c], out_scores[c] = sort_scores(ids, totals[c].astype(np.float32))
    return RankingTable(out_ids, out_scores)
