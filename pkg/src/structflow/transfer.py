"""Source pretraining and regularised target fine-tuning.

Pipeline: train a supervised model on the source treebank once, then copy it
into a target model and fine-tune on unlabeled target sentences while an L2
penalty pulls every parameter group back toward the frozen source values.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .checkpoint import Checkpoint
from .corpus import ObservedSequence
from .errors import DataError, ShapeError
from .metrics import uas_counts
from .model import ModelParams, decode, group_of, init_model, supervised_loss, unsupervised_loss

log = logging.getLogger(__name__)

# penalty coefficient per parameter group; tag embeddings are frozen when fine-tuning
_BETA_FOR_GROUP = {"prior": "beta1", "emission": "beta2", "flow": "beta3"}


@dataclass
class TransferConfig:
    task: str = "tag"
    beta1: float = 0.0
    beta2: float = 500.0
    beta3: float = 80.0
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    max_finetune_length: int | None = None
    restarts: int = 5
    seed: int = 0
    flow: str = "nice"
    n_layers: int = 8
    tag_dim: int = 0
    n_categories: int = 17

    def __post_init__(self):
        if self.task not in ("tag", "parse"):
            raise ValueError(f"task must be 'tag' or 'parse', not {self.task!r}")
        for name in ("beta1", "beta2", "beta3", "learning_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.epochs < 0 or self.batch_size < 1 or self.restarts < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and restarts >= 1 required")
        if self.task == "tag" and self.tag_dim:
            raise ValueError("tag embeddings are only used for parsing")

    @classmethod
    def source(cls, task="tag", **overrides):
        """Defaults for supervised source training."""
        base = dict(task=task, epochs=10, restarts=5, batch_size=32 if task == "tag" else 16)
        if task == "parse":
            base["tag_dim"] = 16
        base.update(overrides)
        return cls(**base)

    @classmethod
    def finetune(cls, task="tag", group="distant", **overrides):
        """Defaults for target fine-tuning.

        Tagging uses one beta for every language; parsing uses a weaker
        pull for distant languages than for nearby ones.
        """
        if task == "tag":
            base = dict(task="tag", beta1=0.0, beta2=500.0, beta3=80.0, epochs=10, batch_size=32)
        else:
            b = {"distant": 0.1, "nearby": 1.0}[group]
            # only sentences shorter than 40 tokens are used for adaptation
            base = dict(task="parse", beta1=b, beta2=b, beta3=b, epochs=5, batch_size=16,
                        max_finetune_length=39, tag_dim=16)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @property
    def betas(self):
        return self.beta1, self.beta2, self.beta3


def l2_penalty(params_q: ModelParams, anchor_p: ModelParams, beta1, beta2, beta3):
    """Soft-sharing penalty ``sum_g beta_g/2 * ||q_g - p_g||^2``.

    Returns ``(value, grads)``; ``grads`` has zero tag-embedding entries.
    """
    betas = {"beta1": beta1, "beta2": beta2, "beta3": beta3}
    q, p = params_q.tensors(), anchor_p.tensors()
    if list(q) != list(p):
        raise ShapeError("parameter layouts differ between target and anchor")
    grads = params_q.zeros_like()
    g = grads.tensors()
    value = 0.0
    for name, qv in q.items():
        if qv.shape != p[name].shape:
            raise ShapeError(f"{name}: shape {qv.shape} vs anchor {p[name].shape}")
        group = group_of(name)
        if group not in _BETA_FOR_GROUP:
            continue
        beta = betas[_BETA_FOR_GROUP[group]]
        diff = qv - p[name]
        value += 0.5 * beta * float(np.sum(diff * diff))
        g[name][...] = beta * diff
    return value, grads


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    decay1: float = 0.9
    decay2: float = 0.999
    eps: float = 1e-8

    def as_dict(self):
        return {"t": self.t, "m": self.m, "v": self.v}

    @classmethod
    def from_dict(cls, data):
        return cls(m=dict(data["m"]), v=dict(data["v"]), t=int(data["t"]))


def adam_step(state: AdamState, params: dict, grads: dict, learning_rate: float):
    """One bias-corrected Adam update, in place on the arrays in ``params``.

    Only names present in ``grads`` are updated.
    """
    state.t += 1
    bc1 = 1.0 - state.decay1 ** state.t
    bc2 = 1.0 - state.decay2 ** state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m, v = state.m[name], state.v[name]
        m *= state.decay1
        m += (1.0 - state.decay1) * g
        v *= state.decay2
        v += (1.0 - state.decay2) * (g * g)
        params[name] -= learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def _batch_grads(params, batch, loss_fn):
    """Mean loss and gradients over the batch, reduced in sentence order."""
    total = 0.0
    acc = None
    for obs in batch:
        value, g = loss_fn(params, obs)
        total += value
        acc = g if acc is None else acc.add_(g)
    scale = 1.0 / len(batch)
    for value in acc.tensors().values():
        value *= scale
    return total * scale, acc


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def evaluate_params(params: ModelParams, corpus: Sequence[ObservedSequence]) -> float:
    """Tagging accuracy or UAS (punctuation excluded) over ``corpus``."""
    correct = total = 0
    for obs in corpus:
        pred = decode(params, obs)
        if params.task == "tag":
            correct += sum(p == g for p, g in zip(pred, obs.upos))
            total += len(pred)
        else:
            c, t = uas_counts(pred, obs.gold_heads, obs.upos)
            correct += c
            total += t
    return correct / total if total else 0.0


def mean_negloglik(params, corpus, loss_fn=unsupervised_loss) -> float:
    return float(np.mean([loss_fn(params, obs)[0] for obs in corpus])) if corpus else 0.0


def _word_dim(corpus):
    dims = {obs.words.shape[1] for obs in corpus}
    if len(dims) != 1:
        raise ShapeError(f"inconsistent word-vector dimensions {sorted(dims)}")
    return dims.pop()


def _check_observations(params: ModelParams, corpus):
    word_dim = _word_dim(corpus)
    if word_dim + params.tag_dim != params.D:
        raise ShapeError(f"word dim {word_dim} + tag dim {params.tag_dim} != model dim {params.D}")


def train_supervised(params: ModelParams, corpus, config: TransferConfig, rng, dev=None):
    """Adam on the batch-mean supervised loss; keeps the epoch with the best dev metric."""
    state = AdamState()
    dev = corpus if dev is None else dev
    best_metric, best_params = evaluate_params(params, dev), params.copy()
    for epoch in range(config.epochs):
        for idx in _batches(len(corpus), config.batch_size, rng):
            _, grads = _batch_grads(params, [corpus[i] for i in idx], supervised_loss)
            adam_step(state, params.tensors(), grads.tensors(), config.learning_rate)
            params.flow.check_invertible()
        metric = evaluate_params(params, dev)
        log.info("epoch %d dev metric %.4f", epoch + 1, metric)
        if metric > best_metric:
            best_metric, best_params = metric, params.copy()
    return best_params, best_metric


def pretrain_source(corpus: Sequence[ObservedSequence], config: TransferConfig, dev=None) -> Checkpoint:
    """Supervised training with random restarts; the best dev metric wins.

    Restart ``r`` uses seed ``config.seed + r``; ties go to the lowest seed.
    """
    if not corpus:
        raise DataError("source corpus is empty")
    for obs in corpus:
        if obs.upos is None or (config.task == "parse" and obs.gold_heads is None):
            raise DataError(f"sentence {obs.sent_id!r} lacks gold annotation for task {config.task!r}")
    word_dim = _word_dim(corpus)
    K = config.n_categories
    if max(max(obs.upos) for obs in corpus) >= K:
        raise DataError(f"tag ids exceed n_categories={K}")
    results = []
    for r in range(config.restarts):
        seed = config.seed + r
        rng = np.random.default_rng(seed)
        params = init_model(config.task, K, word_dim, config.tag_dim, config.flow, config.n_layers, rng)
        params, metric = train_supervised(params, corpus, config, rng, dev)
        log.info("restart %d (seed %d): dev metric %.4f", r, seed, metric)
        results.append((metric, seed, params))
    best = max(results, key=lambda item: (item[0], -item[1]))
    metadata = {
        "phase": "source",
        "seed": best[1],
        "dev_metric": best[0],
        "restart_metrics": [m for m, _, _ in results],
        "config": asdict(config),
    }
    return Checkpoint(params=best[2], metadata=metadata)


def finetune_target(source: Checkpoint, corpus: Sequence[ObservedSequence], config: TransferConfig,
                    callback=None) -> Checkpoint:
    """Unsupervised target training regularised toward the source parameters.

    Word vectors are never trained and tag embeddings stay at their source
    values. Sentences longer than ``config.max_finetune_length`` are skipped.
    ``callback(epoch, params)`` runs after initialisation (epoch 0) and after
    every epoch.
    """
    anchor = source.params
    if anchor.task != config.task:
        raise DataError(f"source checkpoint is for {anchor.task!r}, config asks for {config.task!r}")
    if not corpus:
        raise DataError("target corpus is empty")
    _check_observations(anchor, corpus)
    train = [obs for obs in corpus
             if config.max_finetune_length is None or obs.length <= config.max_finetune_length]
    if not train:
        raise DataError("no target sentences within max_finetune_length")

    params = anchor.copy()
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    history = [mean_negloglik(params, train)]
    if callback is not None:
        callback(0, params)
    for epoch in range(config.epochs):
        for idx in _batches(len(train), config.batch_size, rng):
            _, grads = _batch_grads(params, [train[i] for i in idx], unsupervised_loss)
            _, penalty = l2_penalty(params, anchor, *config.betas)
            grads.add_(penalty)
            trainable = {k: v for k, v in grads.tensors().items() if group_of(k) != "tag_embeddings"}
            adam_step(state, params.tensors(), trainable, config.learning_rate)
            params.flow.check_invertible()
        history.append(mean_negloglik(params, train))
        log.info("fine-tune epoch %d: mean target NLL %.6f", epoch + 1, history[-1])
        if callback is not None:
            callback(epoch + 1, params)
    metadata = {
        "phase": "finetune",
        "seed": config.seed,
        "config": asdict(config),
        "history": history,
        "finetune_sentences": len(train),
        "source": source.metadata,
    }
    return Checkpoint(params=params, metadata=metadata, optimizer=state.as_dict())
