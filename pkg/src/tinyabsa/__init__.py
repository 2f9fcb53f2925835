"""Desk-scale aspect-based sentiment analysis toolkit.

A self-contained stack: numpy-backed tensors with tape-based reverse-mode
autodiff, a small trainable transformer encoder (or frozen imported
embeddings), three interchangeable classification heads (FCN, CNN, GCN),
a fixed fine-tuning regimen with patience stopping, and a multi-seed
experiment harness with mean ± standard-error reporting.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, backward
from .data import Example, SplitSpec
from .encoder import EncoderConfig, preset
from .heads import HeadConfig
from .tokenizer import Vocab
from .training import TrainConfig

__all__ = [
    "Tape",
    "Tensor",
    "backward",
    "Example",
    "SplitSpec",
    "EncoderConfig",
    "preset",
    "HeadConfig",
    "Vocab",
    "TrainConfig",
    "__version__",
]
