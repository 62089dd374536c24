"""Multi-modal POI tagging: encoders, image-encoder pretraining, text-image
fusion, tag matching, training, metrics, and a synthetic corpus generator."""

from .config import ModelConfig, desk_config, validate_config
from .data import CorpusSpec, Dataset, PoiRecord, corpus_stats, generate_corpus, load_dataset
from .die import DieModel, pretrain_die
from .metrics import EvalReport, evaluate
from .model import M3PT
from .training import TrainState, evaluate_model, train

__all__ = [
    "ModelConfig", "desk_config", "validate_config",
    "CorpusSpec", "Dataset", "PoiRecord", "corpus_stats", "generate_corpus",
    "load_dataset", "DieModel", "pretrain_die", "EvalReport", "evaluate",
    "M3PT", "TrainState", "evaluate_model", "train",
]
