"""Structured flow model: prior + Gaussian emissions + invertible projection.

Each loss returns ``(negloglik, grads)`` where ``grads`` is a
:class:`ModelParams` of the same layout holding d(negloglik)/d(param).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dmv, markov
from .corpus import ObservedSequence
from .dmv import DmvParams
from .emission import EmissionParams, emission_backward, emission_loglikes, init_emission
from .errors import DataError, NumericalError, ShapeError
from .flow import FlowCache, FlowParams, flow_backward, flow_inverse, init_flow
from .markov import MarkovParams

GROUPS = ("prior", "emission", "flow", "tag_embeddings")


@dataclass
class ModelParams:
    prior: MarkovParams | DmvParams
    emission: EmissionParams
    flow: FlowParams
    tag_embeddings: np.ndarray | None = None

    def __post_init__(self):
        if self.emission.D != self.flow.dim:
            raise ShapeError(f"emission dim {self.emission.D} != flow dim {self.flow.dim}")
        if self.emission.K != self.prior.K:
            raise ShapeError(f"emission K {self.emission.K} != prior K {self.prior.K}")
        if self.tag_embeddings is not None and self.tag_embeddings.shape[0] != self.prior.K:
            raise ShapeError("tag embedding table must have one row per category")

    @property
    def task(self):
        return "tag" if isinstance(self.prior, MarkovParams) else "parse"

    @property
    def K(self):
        return self.prior.K

    @property
    def D(self):
        return self.flow.dim

    @property
    def tag_dim(self):
        return 0 if self.tag_embeddings is None else self.tag_embeddings.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        """All parameter arrays by name, in checkpoint order. Views, not copies."""
        out = {}
        out.update(self.prior.tensors("prior"))
        out.update(self.emission.tensors("emission"))
        out.update(self.flow.tensors("flow"))
        if self.tag_embeddings is not None:
            out["tag_embeddings"] = self.tag_embeddings
        return out

    def zeros_like(self):
        return ModelParams(self.prior.zeros_like(), self.emission.zeros_like(), self.flow.zeros_like(),
                           None if self.tag_embeddings is None else np.zeros_like(self.tag_embeddings))

    def copy(self):
        return ModelParams(self.prior.copy(), self.emission.copy(), self.flow.copy(),
                           None if self.tag_embeddings is None else self.tag_embeddings.copy())

    def add_(self, other: "ModelParams", scale=1.0):
        """In-place ``self += scale * other`` over every tensor."""
        mine = self.tensors()
        for name, value in other.tensors().items():
            mine[name] += scale * value
        return self


def group_of(name: str) -> str:
    return name.split(".", 1)[0]


def init_model(task, K, word_dim, tag_dim=0, flow="nice", n_layers=8, rng=None):
    rng = np.random.default_rng(rng)
    D = word_dim + tag_dim
    prior = markov.init_markov(K, rng) if task == "tag" else dmv.init_dmv(K, rng)
    tag_emb = rng.normal(0.0, 1.0, size=(K, tag_dim)) if tag_dim else None
    if task == "tag" and tag_dim:
        raise ValueError("tag embeddings are only used for parsing")
    return ModelParams(prior, init_emission(K, D, rng), init_flow(flow, D, n_layers, rng), tag_emb)


def observation_matrix(params: ModelParams, obs: ObservedSequence) -> np.ndarray:
    """x for one sentence, with the tag half taken from ``params``."""
    if params.tag_embeddings is None:
        x = obs.words
    else:
        if obs.upos is None:
            raise DataError(f"sentence {obs.sent_id!r}: tag embeddings need UPOS tags")
        x = np.concatenate([obs.words, params.tag_embeddings[list(obs.upos)]], axis=1)
    if x.shape[1] != params.D:
        raise ShapeError(f"observation dim {x.shape[1]} != model dim {params.D}")
    return x


def _project(params, obs):
    cache = FlowCache()
    x = observation_matrix(params, obs)
    e, logdet = flow_inverse(params.flow, x, cache)
    return e, logdet, cache


def _finish(params, obs, e, cache, loglik, grad_prior, emission_weights):
    """Turn d(loglik)/d(prior) and the emission weights into d(-loglik)/d(params)."""
    if not np.isfinite(loglik):
        raise NumericalError(f"non-finite log-likelihood for sentence {obs.sent_id!r}")
    l = e.shape[0]
    g_emit, g_e = emission_backward(params.emission, e, emission_weights)
    g_flow, g_x = flow_backward(params.flow, cache, -g_e, -float(l))
    for value in (*grad_prior.tensors().values(), *g_emit.tensors().values()):
        value *= -1.0
    g_tag = None
    if params.tag_embeddings is not None:
        g_tag = np.zeros_like(params.tag_embeddings)
        np.add.at(g_tag, list(obs.upos), g_x[:, obs.words.shape[1]:])
    return -loglik, ModelParams(grad_prior, g_emit, g_flow, g_tag)


def _gold_tags(obs):
    if obs.upos is None:
        raise DataError(f"sentence {obs.sent_id!r} has no UPOS tags")
    return list(obs.upos)


def _one_hot(tags, K):
    w = np.zeros((len(tags), K))
    w[np.arange(len(tags)), tags] = 1.0
    return w


def unsupervised_tag_loss(params: ModelParams, obs: ObservedSequence):
    """Negative marginal log-likelihood with the Markov prior."""
    e, logdet, cache = _project(params, obs)
    E = emission_loglikes(params.emission, e)
    gamma, xi, logZ = markov.posteriors(params.prior, E)
    loglik = logZ + e.shape[0] * logdet
    return _finish(params, obs, e, cache, loglik, markov.posterior_grads(params.prior, gamma, xi), gamma)


def supervised_tag_loss(params: ModelParams, obs: ObservedSequence, tags=None):
    """Negative joint log-likelihood of observations and gold tags."""
    tags = _gold_tags(obs) if tags is None else list(tags)
    e, logdet, cache = _project(params, obs)
    E = emission_loglikes(params.emission, e)
    prior_lp, g_prior = markov.supervised_logprob(params.prior, tags)
    loglik = prior_lp + E[np.arange(len(tags)), tags].sum() + e.shape[0] * logdet
    return _finish(params, obs, e, cache, loglik, g_prior, _one_hot(tags, params.K))


def unsupervised_parse_loss(params: ModelParams, obs: ObservedSequence):
    """Negative log-likelihood with the tree marginalised by the DMV inside pass.

    Categories are clamped to the observed tags.
    """
    tags = _gold_tags(obs)
    e, logdet, cache = _project(params, obs)
    E = emission_loglikes(params.emission, e)
    logZ, g_prior = dmv.dmv_expected_counts(params.prior, tags)
    loglik = logZ + E[np.arange(len(tags)), tags].sum() + e.shape[0] * logdet
    return _finish(params, obs, e, cache, loglik, g_prior, _one_hot(tags, params.K))


def supervised_parse_loss(params: ModelParams, obs: ObservedSequence, heads=None):
    tags = _gold_tags(obs)
    heads = obs.gold_heads if heads is None else heads
    if heads is None:
        raise DataError(f"sentence {obs.sent_id!r} has no gold heads")
    e, logdet, cache = _project(params, obs)
    E = emission_loglikes(params.emission, e)
    tree_lp, g_prior = dmv.tree_logprob(params.prior, tags, heads)
    loglik = tree_lp + E[np.arange(len(tags)), tags].sum() + e.shape[0] * logdet
    return _finish(params, obs, e, cache, loglik, g_prior, _one_hot(tags, params.K))


def supervised_loss(params: ModelParams, obs: ObservedSequence):
    if params.task == "tag":
        return supervised_tag_loss(params, obs)
    return supervised_parse_loss(params, obs)


def unsupervised_loss(params: ModelParams, obs: ObservedSequence):
    if params.task == "tag":
        return unsupervised_tag_loss(params, obs)
    return unsupervised_parse_loss(params, obs)


def latent_embeddings(params: ModelParams, obs: ObservedSequence) -> np.ndarray:
    return flow_inverse(params.flow, observation_matrix(params, obs))[0]


def decode_tags(params: ModelParams, obs: ObservedSequence) -> list[int]:
    E = emission_loglikes(params.emission, latent_embeddings(params, obs))
    return markov.viterbi(params.prior, E)


def decode_parse(params: ModelParams, obs: ObservedSequence) -> list[int]:
    if obs.upos is None:
        raise DataError(f"sentence {obs.sent_id!r}: parsing needs UPOS tags")
    return dmv.viterbi_parse(params.prior, list(obs.upos))


def decode(params: ModelParams, obs: ObservedSequence) -> list[int]:
    return decode_tags(params, obs) if params.task == "tag" else decode_parse(params, obs)
