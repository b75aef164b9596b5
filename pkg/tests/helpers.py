"""Small synthetic corpora shared by the training and checkpoint tests."""

import numpy as np

from structflow.synthetic import (dmv_flow_model, hmm_flow_model, misalign, random_orthogonal,
                                  sample_parsing_corpus, sample_tagging_corpus)
from structflow.transfer import TransferConfig, pretrain_source


def tagging_data(seed=0, n=40):
    rng = np.random.default_rng(seed)
    gen = hmm_flow_model(2, 4, 2, rng)
    source = sample_tagging_corpus(gen, n, rng, max_len=6)
    target = misalign(sample_tagging_corpus(gen, n, rng, max_len=6), random_orthogonal(4, rng))
    return gen, source, target


def parsing_data(seed=0, n=30):
    rng = np.random.default_rng(seed)
    gen = dmv_flow_model(K=2, word_dim=2, tag_dim=2, n_layers=2, rng=rng)
    return gen, sample_parsing_corpus(gen, n, rng, max_len=6), sample_parsing_corpus(gen, n, rng, max_len=6)


def tiny_source_config(task="tag", **overrides):
    base = dict(n_categories=2, epochs=2, restarts=2, n_layers=2, learning_rate=0.03, batch_size=8)
    if task == "parse":
        base["tag_dim"] = 2
    base.update(overrides)
    return TransferConfig.source(task, **base)


def tiny_source(task="tag", seed=0):
    _, source, target = tagging_data(seed) if task == "tag" else parsing_data(seed)
    return pretrain_source(source, tiny_source_config(task, seed=seed)), target
