"""Clustering, representative selection, and naming for unrecognized
short-text user requests."""

from .corpus import RawUtterance, UtteranceRecord, deduplicate, normalize_text, read_corpus
from .embedding import EmbeddedCorpus, EncoderSpec, embed, encode_texts, fallback_encode
from .errors import (
    DataError,
    ProtocolError,
    ReqClusterError,
    TransportError,
    UsageError,
)
from .merging import MarkerSet, MergeConfig, extract_markers, keyword_merge, merge, semantic_merge
from .metrics import (
    EvalReport,
    LabeledDataset,
    adjusted_rand_index,
    clustered_ratio,
    evaluate_against_labels,
    naming_similarity,
    recommended_min_size,
    silhouette,
)
from .naming import ClusterName, NamingConfig, name_clusters, tokenize_and_stem
from .pipeline import PipelineConfig, run_pipeline
from .rbc import Cluster, Clustering, RbcConfig, rbc_cluster
from .representatives import DppKernel, RepConfig, build_kernel, dpp_sample, select_representatives

__version__ = "0.1.0"

__all__ = [
    "RawUtterance",
    "UtteranceRecord",
    "deduplicate",
    "normalize_text",
    "read_corpus",
    "EmbeddedCorpus",
    "EncoderSpec",
    "embed",
    "encode_texts",
    "fallback_encode",
    "ReqClusterError",
    "DataError",
    "UsageError",
    "TransportError",
    "ProtocolError",
    "MarkerSet",
    "MergeConfig",
    "extract_markers",
    "keyword_merge",
    "merge",
    "semantic_merge",
    "EvalReport",
    "LabeledDataset",
    "adjusted_rand_index",
    "clustered_ratio",
    "evaluate_against_labels",
    "naming_similarity",
    "recommended_min_size",
    "silhouette",
    "ClusterName",
    "NamingConfig",
    "name_clusters",
    "tokenize_and_stem",
    "PipelineConfig",
    "run_pipeline",
    "Cluster",
    "Clustering",
    "RbcConfig",
    "rbc_cluster",
    "DppKernel",
    "RepConfig",
    "build_kernel",
    "dpp_sample",
    "select_representatives",
    "__version__",
]
