"""Tagging accuracy, UAS and per-relation recall."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .corpus import PUNCT_ID, Sentence
from .errors import DataError

# the four relations singled out in the cross-lingual error analysis
RELATIONS_OF_INTEREST = ("case", "nmod", "obj", "nsubj")


def _check_lengths(*seqs):
    if len({len(s) for s in seqs}) > 1:
        raise DataError(f"length mismatch: {[len(s) for s in seqs]}")


def tagging_accuracy(pred: Sequence[int], gold: Sequence[int]) -> float:
    _check_lengths(pred, gold)
    if not gold:
        return 0.0
    return sum(p == g for p, g in zip(pred, gold)) / len(gold)


def uas_counts(pred_heads, gold_heads, gold_upos):
    _check_lengths(pred_heads, gold_heads, gold_upos)
    correct = total = 0
    for p, g, tag in zip(pred_heads, gold_heads, gold_upos):
        if tag == PUNCT_ID:
            continue
        total += 1
        correct += p == g
    return correct, total


def uas(pred_heads, gold_heads, gold_upos) -> float:
    """Unlabeled attachment score over tokens whose gold UPOS is not PUNCT."""
    correct, total = uas_counts(pred_heads, gold_heads, gold_upos)
    return correct / total if total else 0.0


def relation_recall(pred_heads, gold_heads, gold_deprels, label):
    """Among gold arcs labelled ``label``, the fraction with the right head.

    Returns ``(recall, gold_count)``; recall is 0.0 when there are no such arcs.
    """
    _check_lengths(pred_heads, gold_heads, gold_deprels)
    hits = [p == g for p, g, rel in zip(pred_heads, gold_heads, gold_deprels) if rel == label]
    return (sum(hits) / len(hits) if hits else 0.0), len(hits)


def base_relation(label: str) -> str:
    return label.split(":", 1)[0]


def language_distance(genetic: float, geographic: float, syntactic: float) -> float:
    """Mean of the genetic, geographic and syntactic URIEL distances."""
    for value in (genetic, geographic, syntactic):
        if not 0.0 <= value <= 1.0:
            raise DataError(f"distance component {value} outside [0, 1]")
    return (genetic + geographic + syntactic) / 3.0


@dataclass
class EvalReport:
    task: str
    sentence_count: int
    token_count: int
    metric: dict[str, float]
    per_relation_recall: dict[str, tuple[float, int]] = field(default_factory=dict)

    def to_json(self) -> str:
        data = asdict(self)
        data["per_relation_recall"] = {k: list(v) for k, v in self.per_relation_recall.items()}
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        data["per_relation_recall"] = {k: tuple(v) for k, v in data["per_relation_recall"].items()}
        return cls(**data)


def evaluate_corpus(task: str, pred: Sequence[Sentence], gold: Sequence[Sentence]) -> EvalReport:
    """Score predicted sentences against gold ones (matched by position)."""
    if len(pred) != len(gold):
        raise DataError(f"{len(pred)} predicted sentences vs {len(gold)} gold")
    tokens = sum(len(g) for g in gold)
    if task == "tag":
        correct = 0
        for p, g in zip(pred, gold):
            if p.upos is None or g.upos is None:
                raise DataError(f"sentence {g.sent_id!r}: missing UPOS column")
            _check_lengths(p.upos, g.upos)
            correct += sum(a == b for a, b in zip(p.upos, g.upos))
        return EvalReport("tag", len(gold), tokens, {"accuracy": correct / tokens if tokens else 0.0})

    if task != "parse":
        raise DataError(f"unknown task {task!r}")
    correct = total = 0
    rel_hits: dict[str, list[int]] = {label: [0, 0] for label in RELATIONS_OF_INTEREST}
    for p, g in zip(pred, gold):
        if p.heads is None or g.heads is None or g.upos is None:
            raise DataError(f"sentence {g.sent_id!r}: missing HEAD or UPOS column")
        c, t = uas_counts(p.heads, g.heads, g.upos)
        correct += c
        total += t
        if g.deprels is not None:
            for ph, gh, rel in zip(p.heads, g.heads, g.deprels):
                slot = rel_hits.setdefault(base_relation(rel), [0, 0])
                slot[0] += ph == gh
                slot[1] += 1
    recall = {label: ((h / n if n else 0.0), n) for label, (h, n) in sorted(rel_hits.items())}
    return EvalReport("parse", len(gold), tokens, {"uas": correct / total if total else 0.0}, recall)
