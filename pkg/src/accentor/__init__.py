"""Diacritics restoration with a small acausal temporal convolutional labeler.

Train from any UTF-8 corpus (the stripped text is the input, the original is
the target), evaluate against copy/dictionary baselines, and ship the model as
a single portable binary that the bundled web demo can run client-side.
"""

from .lang import DiacriticTable, available_languages, builtin_table, dediacritize
from .model import AtcnConfig, AtcnModel, CharVocab, build_vocab
from .modelfile import load_model, save_model
from .trainer import TrainConfig, evaluate_model, train_model

__all__ = [
    "AtcnConfig",
    "AtcnModel",
    "CharVocab",
    "DiacriticTable",
    "TrainConfig",
    "available_languages",
    "build_vocab",
    "builtin_table",
    "dediacritize",
    "evaluate_model",
    "load_model",
    "save_model",
    "train_model",
]

__version__ = "0.1.0"
