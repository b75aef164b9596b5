"""First-order Markov prior over tag sequences, in log space.

Probabilities are softmaxes of unconstrained logits: ``init_logits`` (K,) for
the first tag and ``trans_logits`` (K, K) with rows indexed by the previous
tag. ``emission_loglikes`` is always an ``(l, K)`` array of per-token scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from .errors import DataError, NumericalError


@dataclass
class MarkovParams:
    init_logits: np.ndarray
    trans_logits: np.ndarray

    @property
    def K(self):
        return self.init_logits.shape[0]

    def log_init(self):
        return log_softmax(self.init_logits)

    def log_trans(self):
        return log_softmax(self.trans_logits, axis=1)

    def tensors(self, prefix="prior"):
        return {f"{prefix}.init_logits": self.init_logits, f"{prefix}.trans_logits": self.trans_logits}

    def zeros_like(self):
        return MarkovParams(np.zeros_like(self.init_logits), np.zeros_like(self.trans_logits))

    def copy(self):
        return MarkovParams(self.init_logits.copy(), self.trans_logits.copy())


def init_markov(K, rng=None, scale=0.01):
    rng = np.random.default_rng(rng)
    return MarkovParams(rng.normal(0.0, scale, size=K), rng.normal(0.0, scale, size=(K, K)))


def _check(emission_loglikes):
    E = np.asarray(emission_loglikes, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] == 0:
        raise DataError("Markov prior needs at least one token")
    if np.isnan(E).any():
        raise NumericalError("NaN in emission scores")
    return E


def _forward_backward(params, E):
    log_pi, log_A = params.log_init(), params.log_trans()
    n, K = E.shape
    alpha = np.empty((n, K))
    beta = np.zeros((n, K))
    alpha[0] = log_pi + E[0]
    for t in range(1, n):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + log_A, axis=0) + E[t]
    for t in range(n - 2, -1, -1):
        beta[t] = logsumexp(log_A + (E[t + 1] + beta[t + 1])[None, :], axis=1)
    return alpha, beta, float(logsumexp(alpha[-1]))


def forward_logprob(params: MarkovParams, emission_loglikes) -> float:
    """log of the sum over all tag sequences of prior times emission scores."""
    E = _check(emission_loglikes)
    log_A = params.log_trans()
    alpha = params.log_init() + E[0]
    for t in range(1, E.shape[0]):
        alpha = logsumexp(alpha[:, None] + log_A, axis=0) + E[t]
    return float(logsumexp(alpha))


def posteriors(params: MarkovParams, emission_loglikes):
    """Forward-backward. Returns ``(gamma, xi, logZ)``.

    ``gamma[i, k]`` is the posterior of tag k at token i; ``xi[i, j, k]`` the
    posterior of the pair (j at i, k at i+1).
    """
    E = _check(emission_loglikes)
    alpha, beta, logZ = _forward_backward(params, E)
    gamma = np.exp(alpha + beta - logZ)
    log_A = params.log_trans()
    xi = np.exp(alpha[:-1, :, None] + log_A[None] + (E[1:] + beta[1:])[:, None, :] - logZ)
    return gamma, xi, logZ


def count_grads(params: MarkovParams, init_counts, trans_counts) -> MarkovParams:
    """Gradient of ``sum(counts * log-probs)`` w.r.t. the logits."""
    init_counts = np.asarray(init_counts, dtype=np.float64)
    trans_counts = np.asarray(trans_counts, dtype=np.float64)
    g_init = init_counts - init_counts.sum() * softmax(params.init_logits)
    g_trans = trans_counts - trans_counts.sum(axis=1, keepdims=True) * softmax(params.trans_logits, axis=1)
    return MarkovParams(g_init, g_trans)


def posterior_grads(params: MarkovParams, gamma, xi) -> MarkovParams:
    """Gradient of logZ w.r.t. the logits from forward-backward posteriors."""
    K = params.K
    trans_counts = xi.sum(axis=0) if len(xi) else np.zeros((K, K))
    return count_grads(params, gamma[0], trans_counts)


def viterbi(params: MarkovParams, emission_loglikes) -> list[int]:
    """Best tag sequence; ties go to the lower tag index."""
    E = _check(emission_loglikes)
    n, K = E.shape
    log_A = params.log_trans()
    delta = params.log_init() + E[0]
    back = np.zeros((n, K), dtype=np.int64)
    for t in range(1, n):
        scores = delta[:, None] + log_A
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(K)] + E[t]
    tags = [int(np.argmax(delta))]
    for t in range(n - 1, 0, -1):
        tags.append(int(back[t, tags[-1]]))
    return tags[::-1]


def sequence_score(params: MarkovParams, tags, emission_loglikes=None) -> float:
    """Joint log score of one tag sequence (prior plus optional emissions)."""
    log_pi, log_A = params.log_init(), params.log_trans()
    score = log_pi[tags[0]] + sum(log_A[p, c] for p, c in zip(tags[:-1], tags[1:]))
    if emission_loglikes is not None:
        E = np.asarray(emission_loglikes)
        score += E[np.arange(len(tags)), tags].sum()
    return float(score)


def supervised_logprob(params: MarkovParams, tags):
    """``log p(tags)`` under the prior and its gradient w.r.t. the logits."""
    tags = np.asarray(tags, dtype=np.int64)
    if tags.size == 0:
        raise DataError("empty tag sequence")
    K = params.K
    init_counts = np.zeros(K)
    init_counts[tags[0]] = 1.0
    trans_counts = np.zeros((K, K))
    np.add.at(trans_counts, (tags[:-1], tags[1:]), 1.0)
    return sequence_score(params, tags), count_grads(params, init_counts, trans_counts)
