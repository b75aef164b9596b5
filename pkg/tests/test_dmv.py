import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import log_expit, log_softmax

from oracles import dmv_enumerate, finite_difference, max_relative_error, projective_trees
from structflow.corpus import is_projective
from structflow.dmv import (DmvParams, dmv_expected_counts, expected_arcs, inside_logprob, tree_logprob,
                            viterbi_parse, viterbi_score)
from structflow.errors import DataError


def random_params(rng, K, scale=1.0):
    return DmvParams(rng.normal(size=K) * scale, rng.normal(size=(K, 2, K)) * scale,
                     rng.normal(size=(K, 2, 2)) * scale)


def enumerate_params(params, tags):
    return dmv_enumerate(params.root_logits, params.child_logits, params.stop_logits, tags)


def test_tree_counts():
    assert [len(projective_trees(n)) for n in range(1, 6)] == [1, 2, 7, 30, 143]


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
@settings(max_examples=60, deadline=None)
def test_inside_and_viterbi_match_enumeration(seed, n, K):
    rng = np.random.default_rng(seed)
    params = random_params(rng, K)
    tags = rng.integers(0, K, size=n).tolist()
    logZ, trees, scores = enumerate_params(params, tags)
    assert inside_logprob(params, tags) == pytest.approx(logZ, rel=1e-10, abs=1e-12)
    for tree, score in zip(trees, scores):
        assert tree_logprob(params, tags, tree)[0] == pytest.approx(score, abs=1e-10)
    assert viterbi_score(params, tags) == pytest.approx(scores.max(), abs=1e-10)


def test_single_token_closed_form(rng):
    params = random_params(rng, 3)
    t = 2
    expected = (log_softmax(params.root_logits)[t] + log_expit(params.stop_logits[t, 0, 0])
                + log_expit(params.stop_logits[t, 1, 0]))
    assert inside_logprob(params, [t]) == pytest.approx(expected, abs=1e-12)
    assert tree_logprob(params, [t], [0])[0] == pytest.approx(expected, abs=1e-12)
    assert viterbi_parse(params, [t]) == [0]
    _, grads = dmv_expected_counts(params, [t])
    onehot = np.eye(3)[t]
    np.testing.assert_allclose(grads.root_logits, onehot - np.exp(log_softmax(params.root_logits)), atol=1e-12)
    assert not grads.child_logits.any()


def test_two_token_identity(rng):
    params = random_params(rng, 2)
    tags = [0, 1]
    both = np.logaddexp(tree_logprob(params, tags, [2, 0])[0], tree_logprob(params, tags, [0, 1])[0])
    assert both == pytest.approx(inside_logprob(params, tags), abs=1e-10)


def test_gradients_match_finite_differences(rng):
    for n in (1, 2, 3, 4):
        params = random_params(rng, 3)
        tags = rng.integers(0, 3, size=n).tolist()
        _, grads = dmv_expected_counts(params, tags)
        numeric = finite_difference(lambda: inside_logprob(params, tags), params.tensors())
        assert max_relative_error(grads.tensors(), numeric) < 1e-6


def test_tree_gradient_matches_finite_differences(rng):
    params = random_params(rng, 3)
    tags, heads = [0, 2, 1, 2], [2, 0, 4, 2]
    _, grads = tree_logprob(params, tags, heads)
    numeric = finite_difference(lambda: tree_logprob(params, tags, heads)[0], params.tensors())
    assert max_relative_error(grads.tensors(), numeric) < 1e-6


def test_expected_arcs_match_enumeration(rng):
    params = random_params(rng, 2)
    tags = [1, 0, 0, 1]
    logZ, trees, scores = enumerate_params(params, tags)
    want = np.zeros((5, 5))
    for tree, score in zip(trees, scores):
        for m, h in enumerate(tree, start=1):
            want[h, m] += np.exp(score - logZ)
    arcs = expected_arcs(params, tags)
    np.testing.assert_allclose(arcs, want, atol=1e-10)
    assert arcs[1:, 1:].sum() == pytest.approx(len(tags) - 1)
    assert arcs[0].sum() == pytest.approx(1.0)


def test_permutation_symmetry(rng):
    K = 3
    params = random_params(rng, K)
    perm = np.array([2, 0, 1])  # new label of old category c is perm[c]
    inv = np.argsort(perm)
    relabelled = DmvParams(params.root_logits[inv], params.child_logits[inv][:, :, inv],
                           params.stop_logits[inv])
    tags = [0, 1, 2, 2, 1]
    assert inside_logprob(relabelled, perm[tags].tolist()) == pytest.approx(inside_logprob(params, tags), abs=1e-10)


def test_tree_logprob_bounded_by_inside(rng):
    params = random_params(rng, 3)
    tags = [0, 1, 2, 1]
    logZ = inside_logprob(params, tags)
    for tree in projective_trees(4):
        assert tree_logprob(params, tags, tree)[0] <= logZ + 1e-12


def test_non_projective_tree_is_scored(rng):
    params = random_params(rng, 2)
    heads = [3, 4, 0, 3]
    assert not is_projective(heads)
    logp, _ = tree_logprob(params, [0, 1, 0, 1], heads)
    assert np.isfinite(logp)


def test_viterbi_is_projective_for_longer_sentences(rng):
    params = random_params(rng, 4, scale=2.0)
    for n in (6, 9, 12):
        heads = viterbi_parse(params, rng.integers(0, 4, size=n).tolist())
        assert sorted(heads).count(0) == 1
        assert is_projective(heads)


def test_empty_sentence_rejected(rng):
    with pytest.raises(DataError):
        inside_logprob(random_params(rng, 2), [])
