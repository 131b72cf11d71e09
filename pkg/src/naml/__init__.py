"""NAML: attentive multi-view learning for news recommendation, on a small NumPy autodiff core."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import VIEWS, RunConfig, TrainConfig
from .data import Impression, read_behaviors, split_by_time
from .datagen import SyntheticSpec, generate
from .errors import (CheckpointError, ConfigError, DataError, DimensionError, GraphError,
                     IncompatibleCheckpointError, InvalidMaskError, NamlError, NumericalError, ParseError)
from .metrics import RankingMetrics, evaluate
from .model import NAML
from .tensor import Tensor, backward, gradcheck, no_grad
from .text import CategoryIndex, NewsStore, Vocabulary, build_vocab, load_pretrained_embeddings
from .trainer import train

__version__ = "0.1.0"
