"""Structured flow generative models for cross-lingual POS tagging and parsing."""

from .corpus import (EmbeddingTable, ObservedSequence, Sentence, UPOS_TAGS, apply_alignment,
                     build_observations, load_contextual_embeddings, load_embeddings, parse_conllu)
from .model import ModelParams, init_model
from .transfer import TransferConfig, finetune_target, pretrain_source

__version__ = "0.1.0"

__all__ = [
    "EmbeddingTable", "ObservedSequence", "Sentence", "UPOS_TAGS", "apply_alignment", "build_observations",
    "load_contextual_embeddings", "load_embeddings", "parse_conllu", "ModelParams", "init_model",
    "TransferConfig", "finetune_target", "pretrain_source",
]
