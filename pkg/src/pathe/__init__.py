"""Entity-agnostic knowledge graph embeddings from relation paths."""

from .config import RunConfig, parse_config
from .errors import DataError, NumericError, PatheError, ShapeError, UsageError
from .evaluation import EvalReport, effi, evaluate_lp, evaluate_rp, rank_of
from .kg import KnowledgeGraph, RelationalContext, Triple, load_tsv
from .model import ModelConfig, PatheModel, positional_indices
from .paths import Path, PathCorpus, load_corpus, mine_all, save_corpus
from .training import TrainConfig, sample_negatives, train

__all__ = [
    "DataError", "EvalReport", "KnowledgeGraph", "ModelConfig", "NumericError",
    "Path", "PathCorpus", "PatheError", "PatheModel", "RelationalContext",
    "RunConfig", "ShapeError", "TrainConfig", "Triple", "UsageError", "effi",
    "evaluate_lp", "evaluate_rp", "load_corpus", "load_tsv", "mine_all",
    "parse_config", "positional_indices", "rank_of", "sample_negatives",
    "save_corpus", "train",
]

__version__ = "0.1.0"
