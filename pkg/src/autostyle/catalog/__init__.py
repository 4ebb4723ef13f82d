"""Offline catalog: semantic features, clustering, style voting, persistence."""

from .features import (
    BUILTIN_DIM,
    builtin_semantic_feature,
    load_external_features,
    normalize_feature,
    read_feature_file,
    write_feature_file,
)
from .index import StyleIndex, fingerprint, load_index, save_index
from .kmeans import ClusterModel, assign_cluster, assign_many, kmeans_cluster
from .ranking import RankingTable, StyleEntry, build_ranking

__all__ = [
    "BUILTIN_DIM",
    "ClusterModel",
    "RankingTable",
    "StyleEntry",
    "StyleIndex",
    "assign_cluster",
    "assign_many",
    "build_ranking",
    "builtin_semantic_feature",
    "fingerprint",
    "kmeans_cluster",
    "load_external_features",
    "load_index",
    "normalize_feature",
    "read_feature_file",
    "save_index",
    "write_feature_file",
]
