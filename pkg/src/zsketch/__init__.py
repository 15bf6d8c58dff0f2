"""Cross-modal zero-shot sketch/image embedding and retrieval."""

from .feature_store import FeatureStore, Instance, SplitView, load_store, make_split, save_store
from .featurizer import FeaturizerConfig, PixelImage, extract, featurize_directory
from .losses import LossConfig, LossReport
from .retrieval import EmbeddingIndex, EvalReport, embed_all, evaluate, knn
from .semantics import SemanticTable, load_word_vectors, project
from .trainer import TrainConfig, TrainedModel, load_model, save_model, train

__version__ = "0.1.0"

__all__ = [
    "EmbeddingIndex",
    "EvalReport",
    "FeatureStore",
    "FeaturizerConfig",
    "Instance",
    "LossConfig",
    "LossReport",
    "PixelImage",
    "SemanticTable",
    "SplitView",
    "TrainConfig",
    "TrainedModel",
    "embed_all",
    "evaluate",
    "extract",
    "featurize_directory",
    "knn",
    "load_model",
    "load_store",
    "load_word_vectors",
    "make_split",
    "project",
    "save_model",
    "save_store",
    "train",
]
