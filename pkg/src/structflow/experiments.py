"""Desk-scale synthetic experiments (supervised recovery, cross-lingual transfer).

A known HMM + coupling-flow model generates a "source language"; the
"target language" is a fresh sample whose observation vectors are passed
through a random orthogonal map, simulating an imperfect embedding alignment.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import synthetic
from .transfer import TransferConfig, evaluate_params, finetune_target, pretrain_source


@dataclass
class SyntheticSetup:
    seed: int = 0
    K: int = 3
    D: int = 4
    generator_layers: int = 4
    separation: float = 2.0
    n_train: int = 500
    n_test: int = 200
    n_target: int = 300
    source_epochs: int = 10
    source_lr: float = 0.03
    restarts: int = 1
    # None: Haar-random orthogonal map; a float: rotation exp(A) with ||A||_2 = angle
    misalignment_angle: float | None = None


@dataclass
class RecoveryResult:
    test_accuracy: float
    oracle_accuracy: float
    dev_metric: float
    seconds: float
    checkpoint: object = field(repr=False, default=None)


@dataclass
class TransferResult:
    in_domain_accuracy: float
    flow_fix_accuracy: float
    finetuned_accuracy: float
    accuracy_by_epoch: list
    nll_by_epoch: list
    seconds: float


def _data(setup: SyntheticSetup):
    rng = np.random.default_rng(setup.seed)
    gen = synthetic.hmm_flow_model(setup.K, setup.D, setup.generator_layers, rng, separation=setup.separation)
    train = synthetic.sample_tagging_corpus(gen, setup.n_train, rng, prefix="train")
    test = synthetic.sample_tagging_corpus(gen, setup.n_test, rng, prefix="test")
    target = synthetic.sample_tagging_corpus(gen, setup.n_target, rng, prefix="target")
    if setup.misalignment_angle is None:
        Q = synthetic.random_orthogonal(setup.D, rng)
    else:
        A = rng.normal(size=(setup.D, setup.D))
        A = (A - A.T) / 2
        Q = expm(A * setup.misalignment_angle / np.linalg.norm(A, 2))
    return gen, train, test, target, synthetic.misalign(target, Q)


def source_config(setup: SyntheticSetup) -> TransferConfig:
    return TransferConfig.source("tag", n_categories=setup.K, restarts=setup.restarts,
                                 epochs=setup.source_epochs, learning_rate=setup.source_lr,
                                 seed=setup.seed)


def synthetic_recovery(setup: SyntheticSetup | None = None) -> RecoveryResult:
    setup = setup or SyntheticSetup()
    gen, train, test, _, _ = _data(setup)
    start = time.perf_counter()
    ckpt = pretrain_source(train, source_config(setup))
    return RecoveryResult(
        test_accuracy=evaluate_params(ckpt.params, test),
        oracle_accuracy=evaluate_params(gen, test),
        dev_metric=ckpt.metadata["dev_metric"],
        seconds=time.perf_counter() - start,
        checkpoint=ckpt,
    )


def synthetic_transfer(setup: SyntheticSetup | None = None, config: TransferConfig | None = None,
                       source=None) -> TransferResult:
    setup = setup or SyntheticSetup()
    _, train, _, target_clean, target = _data(setup)
    start = time.perf_counter()
    if source is None:
        source = pretrain_source(train, source_config(setup))
    config = config or TransferConfig.finetune("tag", n_categories=setup.K, seed=setup.seed)
    accuracy = []
    out = finetune_target(source, target, config,
                          callback=lambda epoch, params: accuracy.append(evaluate_params(params, target)))
    return TransferResult(
        in_domain_accuracy=evaluate_params(source.params, target_clean),
        flow_fix_accuracy=accuracy[0],
        finetuned_accuracy=accuracy[-1],
        accuracy_by_epoch=accuracy,
        nll_by_epoch=out.metadata["history"],
        seconds=time.perf_counter() - start,
    )
