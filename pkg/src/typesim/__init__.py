"""Similarity-learning type inference for Python functions.

The pipeline extracts per-function type hints from source code, removes
near-duplicate files, trains token embeddings and a two-branch recurrent
encoder with triplet loss, and answers type queries by nearest-neighbour
search over the learned type clusters.
"""

from .cluster import (
    KnnTypePredictor,
    Prediction,
    TypeClusterIndex,
    build_index,
    predict,
    top_n,
)
from .config import PipelineConfig, load_config, make_config
from .dedup import NearDuplicateDetector, TfidfCodeVectorizer
from .embedding import (
    EmbeddingTable,
    SequenceBundle,
    SkipGramEmbedder,
    build_argument_sequence,
    build_context_sequence,
    build_return_sequence,
)
from .encoder import (
    EncoderModel,
    TypeClusterEncoder,
    gradient_check,
    train_encoder,
    triplet_loss,
)
from .errors import (
    EmptyEvaluation,
    EmptyVocabulary,
    IndexBuildError,
    SplitError,
    StageError,
    TypesimError,
    UnminableTriplets,
    UnparsableAnnotation,
)
from .evaluation import (
    EvalReport,
    evaluate,
    match_exact,
    match_parametric,
    stratify,
    type_frequency_report,
)
from .extraction import (
    ArgumentRecord,
    CanonicalType,
    FunctionRecord,
    extract_corpus,
    filter_and_label,
    normalize_annotation,
    parse_module,
    tokenize_identifier,
)
from .pipeline import predict_for_source, run_pipeline, split_dataset
from .visible import (
    ImportGraph,
    VisibleTypeVocab,
    build_import_graph,
    build_vocab,
    mask_vector,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentRecord",
    "CanonicalType",
    "EmbeddingTable",
    "EmptyEvaluation",
    "EmptyVocabulary",
    "EncoderModel",
    "EvalReport",
    "FunctionRecord",
    "ImportGraph",
    "IndexBuildError",
    "KnnTypePredictor",
    "NearDuplicateDetector",
    "PipelineConfig",
    "Prediction",
    "SequenceBundle",
    "SkipGramEmbedder",
    "SplitError",
    "StageError",
    "TfidfCodeVectorizer",
    "TypeClusterEncoder",
    "TypeClusterIndex",
    "TypesimError",
    "UnminableTriplets",
    "UnparsableAnnotation",
    "VisibleTypeVocab",
    "build_argument_sequence",
    "build_context_sequence",
    "build_import_graph",
    "build_index",
    "build_return_sequence",
    "build_vocab",
    "evaluate",
    "extract_corpus",
    "filter_and_label",
    "gradient_check",
    "load_config",
    "make_config",
    "mask_vector",
    "match_exact",
    "match_parametric",
    "normalize_annotation",
    "parse_module",
    "predict",
    "predict_for_source",
    "run_pipeline",
    "split_dataset",
    "stratify",
    "tokenize_identifier",
    "top_n",
    "train_encoder",
    "triplet_loss",
    "type_frequency_report",
]
