import numpy as np
import pytest

from oracles import finite_difference, hmm_enumerate, max_relative_error, projective_trees
from structflow.corpus import ObservedSequence
from structflow.emission import VAR_FLOOR, EmissionParams, emission_loglikes
from structflow.errors import DataError, ShapeError
from structflow.flow import FlowParams, init_identity
from structflow.markov import MarkovParams, forward_logprob
from structflow.model import (ModelParams, decode, decode_parse, decode_tags, init_model, latent_embeddings,
                              supervised_parse_loss, supervised_tag_loss, unsupervised_parse_loss,
                              unsupervised_tag_loss)
from structflow.synthetic import random_nice

LOSSES = {
    "unsupervised_tag": unsupervised_tag_loss,
    "supervised_tag": supervised_tag_loss,
    "unsupervised_parse": unsupervised_parse_loss,
    "supervised_parse": supervised_parse_loss,
}


def random_tagger(rng, K=2, D=4, layers=2):
    params = init_model("tag", K, D, flow="nice", n_layers=layers, rng=rng)
    params.flow = random_nice(D, layers, rng, scale=0.7)
    params.prior.init_logits[:] = rng.normal(size=K)
    params.prior.trans_logits[:] = rng.normal(size=(K, K))
    params.emission.means[:] = rng.normal(size=(K, D))
    params.emission.log_vars[:] = rng.normal(size=(K, D)) * 0.3
    return params


def random_parser(rng, K=2, word_dim=2, tag_dim=2, layers=2):
    params = init_model("parse", K, word_dim, tag_dim=tag_dim, n_layers=layers, rng=rng)
    params.flow = random_nice(word_dim + tag_dim, layers, rng, scale=0.7)
    for arr in params.prior.tensors().values():
        arr[...] = rng.normal(size=arr.shape)
    params.emission.means[:] = rng.normal(size=params.emission.means.shape)
    params.emission.log_vars[:] = rng.normal(size=params.emission.log_vars.shape) * 0.3
    return params


def observation(rng, n, word_dim, K, heads=None):
    return ObservedSequence(words=rng.normal(size=(n, word_dim)), upos=tuple(rng.integers(0, K, size=n).tolist()),
                            gold_heads=heads, sent_id="s")


@pytest.mark.parametrize("name", list(LOSSES))
def test_gradients_match_finite_differences(name, rng):
    if name.endswith("tag"):
        params = random_tagger(rng)
        obs = observation(rng, 3, 4, 2)
    else:
        params = random_parser(rng)
        obs = observation(rng, 3, 2, 2, heads=(2, 0, 2))
    loss = LOSSES[name]
    _, grads = loss(params, obs)
    numeric = finite_difference(lambda: loss(params, obs)[0], params.tensors())
    assert max_relative_error(grads.tensors(), numeric) < 1e-4


def test_word_vectors_receive_no_gradient(rng):
    # the loss gradient is only reported for parameters, never for obs.words
    params = random_parser(rng)
    obs = observation(rng, 3, 2, 2)
    _, grads = unsupervised_parse_loss(params, obs)
    assert set(grads.tensors()) == set(params.tensors())


def test_identity_flow_single_category_is_iid_gaussian(rng):
    params = ModelParams(MarkovParams(np.zeros(1), np.zeros((1, 1))),
                         EmissionParams(rng.normal(size=(1, 3)), rng.normal(size=(1, 3))), init_identity(3))
    obs = observation(rng, 4, 3, 1)
    nll, _ = unsupervised_tag_loss(params, obs)
    assert nll == pytest.approx(-emission_loglikes(params.emission, obs.words).sum(), abs=1e-10)
    assert supervised_tag_loss(params, obs)[0] == pytest.approx(nll, abs=1e-12)


def test_linear_flow_closed_form():
    params = ModelParams(MarkovParams(np.zeros(1), np.zeros((1, 1))),
                         EmissionParams(np.zeros((1, 2)), np.full((1, 2), np.log(1 - VAR_FLOOR))),
                         FlowParams("linear", 2, W=2 * np.eye(2)))
    obs = ObservedSequence(words=np.zeros((3, 2)), upos=(0, 0, 0))
    nll, _ = unsupervised_tag_loss(params, obs)
    assert -nll == pytest.approx(3 * (-np.log(2 * np.pi) + 2 * np.log(2)), abs=1e-10)


def test_unsupervised_tag_decomposition(rng):
    params = random_tagger(rng)
    obs = observation(rng, 5, 4, 2)
    e = latent_embeddings(params, obs)
    E = emission_loglikes(params.emission, e)
    logZ = hmm_enumerate(params.prior.init_logits, params.prior.trans_logits, E)[0]
    # NICE has zero logdet, so the loss is the structured marginal at e alone
    assert unsupervised_tag_loss(params, obs)[0] == pytest.approx(-logZ, abs=1e-10)
    assert forward_logprob(params.prior, E) == pytest.approx(logZ, abs=1e-10)


def test_supervised_at_least_unsupervised(rng):
    for _ in range(10):
        params = random_tagger(rng, K=3)
        obs = observation(rng, 4, 4, 3)
        assert supervised_tag_loss(params, obs)[0] >= unsupervised_tag_loss(params, obs)[0] - 1e-12
        pparams = random_parser(rng, K=3)
        pobs = observation(rng, 4, 2, 3, heads=(2, 0, 2, 3))
        assert supervised_parse_loss(pparams, pobs)[0] >= unsupervised_parse_loss(pparams, pobs)[0] - 1e-12


def test_parse_marginal_over_trees(rng):
    params = random_parser(rng)
    for n in (1, 2, 3):
        obs = observation(rng, n, 2, 2)
        joint = [-supervised_parse_loss(params, obs, heads=tree)[0] for tree in projective_trees(n)]
        assert np.logaddexp.reduce(joint) == pytest.approx(-unsupervised_parse_loss(params, obs)[0], abs=1e-10)


def test_single_token_parse_equality(rng):
    params = random_parser(rng)
    obs = observation(rng, 1, 2, 2, heads=(0,))
    assert supervised_parse_loss(params, obs)[0] == pytest.approx(unsupervised_parse_loss(params, obs)[0])
    assert decode_parse(params, obs) == [0]


@pytest.mark.parametrize("task", ["tag", "parse"])
def test_small_gradient_steps_are_monotone(task, rng):
    if task == "tag":
        params, obs, loss = random_tagger(rng), observation(rng, 5, 4, 2), unsupervised_tag_loss
    else:
        params, obs, loss = random_parser(rng), observation(rng, 5, 2, 2), unsupervised_parse_loss
    values = []
    for _ in range(10):
        value, grads = loss(params, obs)
        values.append(value)
        params.add_(grads, -1e-3)
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_decode_tags_matches_enumeration(rng):
    params = random_tagger(rng, K=3)
    obs = observation(rng, 5, 4, 3)
    E = emission_loglikes(params.emission, latent_embeddings(params, obs))
    best = hmm_enumerate(params.prior.init_logits, params.prior.trans_logits, E)[3]
    assert decode_tags(params, obs) == best
    assert decode(params, obs) == decode(params, obs)


def test_single_category_decodes_constant(rng):
    params = random_tagger(rng, K=1)
    assert decode_tags(params, observation(rng, 4, 4, 1)) == [0, 0, 0, 0]


def test_tag_embeddings_enter_observations(rng):
    params = random_parser(rng)
    obs = observation(rng, 3, 2, 2)
    before = unsupervised_parse_loss(params, obs)[0]
    params.tag_embeddings += 0.5
    assert unsupervised_parse_loss(params, obs)[0] != before


def test_shape_checks(rng):
    params = random_tagger(rng)
    with pytest.raises(ShapeError):
        unsupervised_tag_loss(params, observation(rng, 3, 5, 2))
    with pytest.raises(ShapeError):
        ModelParams(params.prior, EmissionParams(np.zeros((2, 6)), np.zeros((2, 6))), params.flow)
    with pytest.raises(ValueError):
        init_model("tag", 2, 4, tag_dim=2)


def test_missing_annotation(rng):
    parser = random_parser(rng)
    with pytest.raises(DataError):
        supervised_parse_loss(parser, observation(rng, 3, 2, 2))
    with pytest.raises(DataError):
        unsupervised_parse_loss(parser, ObservedSequence(words=np.zeros((2, 2)), upos=None))
