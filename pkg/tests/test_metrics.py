import io
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structflow.corpus import UPOS_INDEX, Sentence, parse_conllu
from structflow.errors import DataError
from structflow.metrics import (EvalReport, evaluate_corpus, language_distance, relation_recall, tagging_accuracy,
                                uas)

T = UPOS_INDEX

# five gold sentences with hand-written predictions; PUNCT tokens carry wrong heads on purpose
GOLD = [
    dict(tokens="dogs bark .", upos=["NOUN", "VERB", "PUNCT"], heads=[2, 0, 2], rels=["nsubj", "root", "punct"]),
    dict(tokens="go home now", upos=["VERB", "NOUN", "ADV"], heads=[0, 1, 1], rels=["root", "obj", "advmod"]),
    dict(tokens="the cat sat on mat .", upos=["DET", "NOUN", "VERB", "ADP", "NOUN", "PUNCT"],
         heads=[2, 3, 0, 5, 3, 3], rels=["det", "nsubj", "root", "case", "obl", "punct"]),
    dict(tokens="yes", upos=["INTJ"], heads=[0], rels=["root"]),
    dict(tokens="saw her cat !", upos=["VERB", "PRON", "NOUN", "PUNCT"], heads=[0, 3, 1, 1],
         rels=["root", "nmod:poss", "obj", "punct"]),
]
PRED_HEADS = [[2, 0, 1], [0, 1, 2], [2, 3, 0, 3, 3, 5], [0], [0, 1, 1, 3]]
PRED_TAGS = [["NOUN", "VERB", "PUNCT"], ["NOUN", "NOUN", "ADV"], ["DET", "NOUN", "VERB", "ADP", "VERB", "PUNCT"],
             ["INTJ"], ["VERB", "DET", "NOUN", "PUNCT"]]

# non-punctuation tokens with correct heads: 2/2, 2/3, 4/5, 1/1, 2/3
UAS = Fraction(11, 14)
# wrong tags: go, mat, her
ACCURACY = Fraction(14, 17)


def gold_sentences():
    return [Sentence(tokens=tuple(s["tokens"].split()), upos=tuple(T[u] for u in s["upos"]),
                     heads=tuple(s["heads"]), deprels=tuple(s["rels"]), sent_id=str(i))
            for i, s in enumerate(GOLD)]


def pred_sentences():
    return [Sentence(tokens=g.tokens, upos=tuple(T[u] for u in tags), heads=tuple(heads), sent_id=g.sent_id)
            for g, tags, heads in zip(gold_sentences(), PRED_TAGS, PRED_HEADS)]


def test_fixture_uas_and_accuracy():
    gold, pred = gold_sentences(), pred_sentences()
    report = evaluate_corpus("parse", pred, gold)
    assert report.metric["uas"] == pytest.approx(float(UAS), abs=1e-12)
    assert report.token_count == 17 and report.sentence_count == 5
    tag_report = evaluate_corpus("tag", pred, gold)
    assert tag_report.metric["accuracy"] == pytest.approx(float(ACCURACY), abs=1e-12)


def test_fixture_per_sentence_uas():
    want = [1.0, 2 / 3, 0.8, 1.0, 2 / 3]
    for g, p, w in zip(gold_sentences(), pred_sentences(), want):
        assert uas(p.heads, g.heads, g.upos) == pytest.approx(w)


def test_fixture_relation_recall():
    report = evaluate_corpus("parse", pred_sentences(), gold_sentences())
    rr = report.per_relation_recall
    assert rr["nsubj"] == (1.0, 2)
    assert rr["obj"] == (1.0, 2)
    assert rr["advmod"] == (0.0, 1)
    assert rr["case"] == (0.0, 1)
    assert rr["nmod"] == (0.0, 1)  # nmod:poss counts under its base label
    # recomposition: count-weighted recall equals recall over every labelled arc
    arcs = [(p, g) for ps, gs in zip(PRED_HEADS, GOLD) for p, g in zip(ps, gs["heads"])]
    overall = sum(p == g for p, g in arcs) / len(arcs)
    assert sum(r * n for r, n in rr.values()) / sum(n for _, n in rr.values()) == pytest.approx(overall)


def test_uas_examples():
    assert uas([2, 0], [2, 0], [T["NOUN"], T["VERB"]]) == 1.0
    assert uas([2, 0, 1], [2, 0, 2], [T["NOUN"], T["VERB"], T["PUNCT"]]) == 1.0
    assert uas([0, 0], [2, 0], [T["NOUN"], T["VERB"]]) == 0.5
    with pytest.raises(DataError):
        uas([0], [2, 0], [0, 0])


def test_tagging_accuracy_examples():
    assert tagging_accuracy([1, 2], [1, 2]) == 1.0
    assert tagging_accuracy([1, 2, 3, 4], [1, 2, 3, 0]) == 0.75
    with pytest.raises(DataError):
        tagging_accuracy([1], [1, 2])


def test_relation_recall_examples():
    assert relation_recall([1, 2], [1, 2], ["det", "amod"], "case") == (0.0, 0)
    assert relation_recall([1, 2], [1, 2], ["case", "case"], "case") == (1.0, 2)
    assert relation_recall([1, 0], [1, 2], ["case", "case"], "case") == (0.5, 2)


def test_language_distance():
    assert language_distance(0, 0, 0) == 0
    assert language_distance(1, 1, 1) == 1
    assert language_distance(0.9, 0.8, 0.88) == pytest.approx(0.86)
    with pytest.raises(DataError):
        language_distance(1.2, 0, 0)


def test_report_json_round_trip():
    report = evaluate_corpus("parse", pred_sentences(), gold_sentences())
    assert EvalReport.from_json(report.to_json()) == report


@given(st.permutations(range(5)))
@settings(max_examples=20, deadline=None)
def test_uas_invariant_to_sentence_order(order):
    gold, pred = gold_sentences(), pred_sentences()
    shuffled = evaluate_corpus("parse", [pred[i] for i in order], [gold[i] for i in order])
    assert shuffled.metric["uas"] == pytest.approx(float(UAS))


def test_gold_against_itself():
    gold = gold_sentences()
    assert evaluate_corpus("parse", gold, gold).metric["uas"] == 1.0
    assert evaluate_corpus("tag", gold, gold).metric["accuracy"] == 1.0


def test_mismatched_corpora():
    with pytest.raises(DataError):
        evaluate_corpus("tag", pred_sentences()[:4], gold_sentences())
    bare = parse_conllu(io.StringIO("1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n"))
    with pytest.raises(DataError):
        evaluate_corpus("tag", bare, bare)
