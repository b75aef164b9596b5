"""Sampling corpora from known structured flow models.

Used by the test-suite and the experiment scripts: data drawn from a fixed
generating model gives an oracle for what training should recover.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, softmax
from scipy.stats import ortho_group

from .corpus import ObservedSequence
from .dmv import LEFT, RIGHT, DmvParams
from .emission import EmissionParams
from .flow import flow_forward, init_nice
from .markov import MarkovParams
from .model import ModelParams


def random_nice(dim, n_layers, rng, scale=0.5):
    """A coupling stack that is far from the identity."""
    flow = init_nice(dim, n_layers, rng=rng)
    for layer in flow.layers:
        layer.W2 = rng.normal(0.0, scale / np.sqrt(layer.W2.shape[1]), size=layer.W2.shape)
        layer.b1 = rng.normal(0.0, 0.1, size=layer.b1.shape)
        layer.b2 = rng.normal(0.0, 0.1, size=layer.b2.shape)
    return flow


def hmm_flow_model(K=3, D=4, n_layers=4, rng=None, separation=3.0, stickiness=1.5, flow_scale=0.5):
    """Markov prior with distinct transition rows, well separated Gaussians."""
    rng = np.random.default_rng(rng)
    prior = MarkovParams(rng.normal(0.0, 0.5, size=K),
                         rng.normal(0.0, 1.0, size=(K, K)) + stickiness * np.eye(K))
    means = rng.normal(0.0, 1.0, size=(K, D))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    emission = EmissionParams(means, np.full((K, D), np.log(0.3)))
    return ModelParams(prior, emission, random_nice(D, n_layers, rng, flow_scale))


def sample_tags(prior: MarkovParams, length, rng):
    tags = [rng.choice(prior.K, p=softmax(prior.init_logits))]
    A = softmax(prior.trans_logits, axis=1)
    for _ in range(length - 1):
        tags.append(rng.choice(prior.K, p=A[tags[-1]]))
    return [int(t) for t in tags]


def sample_latents(emission: EmissionParams, tags, rng):
    sd = np.sqrt(emission.variances()[tags])
    return emission.means[tags] + sd * rng.standard_normal(sd.shape)


def sample_tagging_corpus(model: ModelParams, n_sentences, rng=None, min_len=3, max_len=12,
                          prefix="syn"):
    """Sentences of (x = f(e), gold tags) drawn from ``model``."""
    rng = np.random.default_rng(rng)
    corpus = []
    for i in range(n_sentences):
        tags = sample_tags(model.prior, int(rng.integers(min_len, max_len + 1)), rng)
        e = sample_latents(model.emission, tags, rng)
        corpus.append(ObservedSequence(words=flow_forward(model.flow, e), upos=tuple(tags),
                                       sent_id=f"{prefix}-{i}"))
    return corpus


def sample_dmv_tree(prior: DmvParams, rng, max_len=10):
    """One (tags, heads) pair from the DMV generative story, or None if too long."""
    child_p = softmax(prior.child_logits, axis=2)
    stop_p = expit(prior.stop_logits)
    nodes = []  # (tag, parent node id or -1)

    def grow(tag, parent):
        """Returns this subtree's node ids in surface order."""
        me = len(nodes)
        nodes.append((tag, parent))
        if len(nodes) > max_len:
            raise OverflowError
        sides = []
        for side in (LEFT, RIGHT):
            kids = []
            while rng.random() >= stop_p[tag, side, int(bool(kids))]:
                kids.append(grow(int(rng.choice(prior.K, p=child_p[tag, side])), me))
            sides.append(kids)
        left, right = sides
        # dependents are generated outward, so the farthest left one is first on the surface
        order = [i for kid in reversed(left) for i in kid] + [me]
        return order + [i for kid in right for i in kid]

    try:
        order = grow(int(rng.choice(prior.K, p=softmax(prior.root_logits))), -1)
    except OverflowError:
        return None
    position = {node: i + 1 for i, node in enumerate(order)}
    tags = [nodes[i][0] for i in order]
    heads = [0 if nodes[i][1] < 0 else position[nodes[i][1]] for i in order]
    return tags, heads


def dmv_flow_model(K=3, word_dim=4, tag_dim=2, n_layers=4, rng=None, separation=3.0):
    rng = np.random.default_rng(rng)
    prior = DmvParams(rng.normal(0.0, 1.0, size=K), rng.normal(0.0, 1.5, size=(K, 2, K)),
                      rng.normal(0.5, 1.0, size=(K, 2, 2)))
    D = word_dim + tag_dim
    means = rng.normal(0.0, 1.0, size=(K, D))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    emission = EmissionParams(means, np.full((K, D), np.log(0.3)))
    tag_emb = rng.normal(0.0, 1.0, size=(K, tag_dim)) if tag_dim else None
    return ModelParams(prior, emission, random_nice(D, n_layers, rng), tag_emb)


def sample_parsing_corpus(model: ModelParams, n_sentences, rng=None, max_len=10, prefix="dep"):
    """Sentences with gold tags and projective gold trees; word vectors come
    from the first ``word_dim`` coordinates of ``f(e)``."""
    rng = np.random.default_rng(rng)
    word_dim = model.D - model.tag_dim
    corpus = []
    while len(corpus) < n_sentences:
        draw = sample_dmv_tree(model.prior, rng, max_len)
        if draw is None:
            continue
        tags, heads = draw
        e = sample_latents(model.emission, tags, rng)
        x = flow_forward(model.flow, e)
        corpus.append(ObservedSequence(words=x[:, :word_dim], upos=tuple(tags), gold_heads=tuple(heads),
                                       sent_id=f"{prefix}-{len(corpus)}"))
    return corpus


def random_orthogonal(dim, rng=None):
    return ortho_group.rvs(dim, random_state=np.random.default_rng(rng))


def misalign(corpus, matrix, prefix="tgt"):
    """Apply ``x <- M x`` to every word vector, simulating imperfect alignment."""
    return [ObservedSequence(words=obs.words @ np.asarray(matrix).T, upos=obs.upos,
                             gold_heads=obs.gold_heads, sent_id=f"{prefix}-{i}")
            for i, obs in enumerate(corpus)]
