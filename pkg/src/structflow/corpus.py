"""CoNLL-U treebanks, embedding tables and per-token observation sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .errors import ConlluParseError, EmbeddingError, ShapeError

# 17 UD universal POS tags, alphabetical; tag id = position.
UPOS_TAGS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
)
UPOS_INDEX = {tag: i for i, tag in enumerate(UPOS_TAGS)}
PUNCT_ID = UPOS_INDEX["PUNCT"]


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    upos: tuple[int, ...] | None
    heads: tuple[int, ...] | None = None
    deprels: tuple[str, ...] | None = None
    sent_id: str = ""
    # Original 10-column rows, kept so that predictions can be written back
    # without losing lemma/feats/misc columns.
    rows: tuple[tuple[str, ...], ...] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        n = len(self.tokens)
        if n == 0:
            raise ConlluParseError(f"sentence {self.sent_id!r} has no tokens")
        for name in ("upos", "heads", "deprels"):
            value = getattr(self, name)
            if value is not None and len(value) != n:
                raise ConlluParseError(f"sentence {self.sent_id!r}: {name} length {len(value)} != {n}")
        if self.heads is not None:
            check_tree(self.heads, self.sent_id)

    def __len__(self):
        return len(self.tokens)


def check_tree(heads: Sequence[int], sent_id: str = "") -> None:
    """Raise unless ``heads`` (1-based, 0 = root) is a single-rooted tree."""
    n = len(heads)
    if any(h < 0 or h > n for h in heads):
        raise ConlluParseError(f"sentence {sent_id!r}: head index out of range")
    if sum(1 for h in heads if h == 0) != 1:
        raise ConlluParseError(f"sentence {sent_id!r}: expected exactly one root")
    for start in range(1, n + 1):
        seen = set()
        node = start
        while node != 0:
            if node in seen:
                raise ConlluParseError(f"sentence {sent_id!r}: cycle through token {node}")
            seen.add(node)
            node = heads[node - 1]


def is_projective(heads: Sequence[int]) -> bool:
    """True if no two arcs cross (root arc from position 0 included)."""
    arcs = [(min(h, d), max(h, d)) for d, h in enumerate(heads, start=1)]
    for i, (a, b) in enumerate(arcs):
        for c, d in arcs[i + 1:]:
            if a < c < b < d or c < a < d < b:
                return False
    return True


def _parse_block(rows, sent_id, line_numbers):
    tokens, upos, heads, deprels = [], [], [], []
    kept_rows = []
    for cols, lineno in zip(rows, line_numbers):
        tok_id = cols[0]
        if "-" in tok_id or "." in tok_id:
            continue
        try:
            expected = len(tokens) + 1
            if int(tok_id) != expected:
                raise ConlluParseError(f"token id {tok_id} out of sequence (expected {expected})", lineno)
        except ValueError:
            raise ConlluParseError(f"non-integer token id {tok_id!r}", lineno) from None
        tokens.append(cols[1])
        tag = cols[3]
        if tag == "_":
            upos.append(None)
        elif tag in UPOS_INDEX:
            upos.append(UPOS_INDEX[tag])
        else:
            raise ConlluParseError(f"unknown UPOS tag {tag!r}", lineno)
        if cols[6] == "_":
            heads.append(None)
        else:
            try:
                heads.append(int(cols[6]))
            except ValueError:
                raise ConlluParseError(f"non-integer head {cols[6]!r}", lineno) from None
        deprels.append(None if cols[7] == "_" else cols[7])
        kept_rows.append(tuple(cols))

    def complete(values, what):
        missing = sum(v is None for v in values)
        if missing == len(values):
            return None
        if missing:
            raise ConlluParseError(f"sentence {sent_id!r}: {what} given for some tokens only", line_numbers[0])
        return tuple(values)

    return Sentence(
        tokens=tuple(tokens),
        upos=complete(upos, "UPOS"),
        heads=complete(heads, "HEAD"),
        deprels=complete(deprels, "DEPREL"),
        sent_id=sent_id,
        rows=tuple(kept_rows),
    )


def parse_conllu(stream: TextIO | Iterable[str]) -> list[Sentence]:
    """Read CoNLL-U text; multiword ranges and empty nodes are skipped."""
    sentences = []
    rows, line_numbers = [], []
    sent_id = None

    def flush():
        nonlocal rows, line_numbers, sent_id
        if rows:
            sid = sent_id if sent_id is not None else str(len(sentences) + 1)
            sentences.append(_parse_block(rows, sid, line_numbers))
        rows, line_numbers, sent_id = [], [], None

    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sent_id"):
                key, _, value = body.partition("=")
                if key.strip() == "sent_id":
                    sent_id = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(f"expected 10 tab-separated columns, got {len(cols)}", lineno)
        rows.append(cols)
        line_numbers.append(lineno)
    flush()
    return sentences


def serialize_conllu(sentences: Iterable[Sentence]) -> str:
    out = []
    for sent in sentences:
        out.append(f"# sent_id = {sent.sent_id}")
        for i, form in enumerate(sent.tokens):
            cols = list(sent.rows[i]) if sent.rows is not None else ["_"] * 10
            cols[0] = str(i + 1)
            cols[1] = form
            cols[3] = UPOS_TAGS[sent.upos[i]] if sent.upos is not None else "_"
            cols[6] = str(sent.heads[i]) if sent.heads is not None else "_"
            cols[7] = sent.deprels[i] if sent.deprels is not None else "_"
            out.append("\t".join(cols))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


@dataclass
class EmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray]
    fallback: np.ndarray

    def lookup(self, token: str) -> np.ndarray:
        vec = self.entries.get(token)
        if vec is None:
            vec = self.entries.get(token.lower())
        return self.fallback if vec is None else vec

    def __contains__(self, token):
        return token in self.entries


def load_embeddings(stream: TextIO | Iterable[str]) -> EmbeddingTable:
    """Load the word2vec/fastText text format ("count dim" header line)."""
    lines = iter(stream)
    try:
        header = next(lines).split()
    except StopIteration:
        raise EmbeddingError("empty embedding file") from None
    if len(header) != 2:
        raise EmbeddingError("header must be 'count dim'")
    try:
        dim = int(header[1])
    except ValueError:
        raise EmbeddingError(f"bad dimension in header: {header[1]!r}") from None
    if dim <= 0:
        raise EmbeddingError("embedding dimension must be positive")

    entries: dict[str, np.ndarray] = {}
    for row, line in enumerate(lines, start=1):
        parts = line.rstrip("\r\n").split(" ")
        if not parts or parts == [""]:
            continue
        if parts[-1] == "":
            parts = parts[:-1]
        if len(parts) != dim + 1:
            raise EmbeddingError(f"row {row}: expected {dim} values, got {len(parts) - 1}")
        try:
            entries[parts[0]] = np.array(parts[1:], dtype=np.float64)
        except ValueError:
            raise EmbeddingError(f"row {row}: non-numeric value") from None
    if not entries:
        raise EmbeddingError("embedding file has no vectors")
    fallback = np.mean(np.stack(list(entries.values())), axis=0)
    return EmbeddingTable(dim=dim, entries=entries, fallback=fallback)


def load_matrix(stream: TextIO | Iterable[str]) -> np.ndarray:
    """Read a whitespace-separated matrix, one row per line."""
    rows = [line.split() for line in stream if line.strip()]
    try:
        return np.array(rows, dtype=np.float64)
    except ValueError:
        raise ShapeError("alignment matrix rows are ragged or non-numeric") from None


def apply_alignment(table: EmbeddingTable, matrix: np.ndarray) -> EmbeddingTable:
    """Return a new table with every vector (and the fallback) mapped by ``matrix``."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape != (table.dim, table.dim):
        raise ShapeError(f"alignment matrix shape {matrix.shape} does not match dim {table.dim}")
    words = list(table.entries)
    if words:
        mapped = np.stack([table.entries[w] for w in words]) @ matrix.T
        entries = {w: mapped[i] for i, w in enumerate(words)}
    else:
        entries = {}
    return EmbeddingTable(dim=table.dim, entries=entries, fallback=matrix @ table.fallback)


class ContextualStore(Mapping):
    """Externally produced per-token vectors keyed by (sent_id, 1-based index)."""

    def __init__(self, dim: int, vectors: dict[tuple[str, int], np.ndarray]):
        self.dim = dim
        self._vectors = vectors

    def __getitem__(self, key):
        return self._vectors[key]

    def __iter__(self):
        return iter(self._vectors)

    def __len__(self):
        return len(self._vectors)

    def sentence_vectors(self, sentence: Sentence) -> np.ndarray:
        return np.stack([self._vectors[(sentence.sent_id, i)] for i in range(1, len(sentence) + 1)])


def load_contextual_embeddings(stream: TextIO | Iterable[str], corpus: Sequence[Sentence]) -> ContextualStore:
    vectors: dict[tuple[str, int], np.ndarray] = {}
    dim = None
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise EmbeddingError(f"line {lineno}: expected 'sent_id<TAB>index<TAB>values'")
        sid, idx, values = parts
        try:
            key = (sid, int(idx))
            vec = np.array(values.split(), dtype=np.float64)
        except ValueError:
            raise EmbeddingError(f"line {lineno}: non-numeric index or value") from None
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise EmbeddingError(f"line {lineno}: dimension {len(vec)} != {dim}")
        if key in vectors:
            raise EmbeddingError(f"line {lineno}: duplicate key {key}")
        vectors[key] = vec
    for sent in corpus:
        for i in range(1, len(sent) + 1):
            if (sent.sent_id, i) not in vectors:
                raise EmbeddingError(f"missing contextual vector for {(sent.sent_id, i)}")
    return ContextualStore(dim or 0, vectors)


@dataclass(frozen=True)
class ObservedSequence:
    """Observation vectors for one sentence.

    ``words`` is the frozen word-vector half. ``tags`` holds the tag-embedding
    half when the observation concatenates one; the model rebuilds that half
    from its own (trainable) tag embedding table.
    """

    words: np.ndarray
    upos: tuple[int, ...] | None
    gold_heads: tuple[int, ...] | None = None
    tags: np.ndarray | None = None
    sent_id: str = ""

    @property
    def x(self) -> np.ndarray:
        if self.tags is None:
            return self.words
        return np.concatenate([self.words, self.tags], axis=1)

    @property
    def length(self) -> int:
        return self.words.shape[0]

    @property
    def dim(self) -> int:
        return self.words.shape[1] + (0 if self.tags is None else self.tags.shape[1])


def build_observations(sentence: Sentence, vectors: EmbeddingTable | ContextualStore,
                       tag_embeddings: np.ndarray | None = None) -> ObservedSequence:
    if isinstance(vectors, ContextualStore):
        words = vectors.sentence_vectors(sentence)
    else:
        words = np.stack([vectors.lookup(tok) for tok in sentence.tokens])
    tags = None
    if tag_embeddings is not None:
        if sentence.upos is None:
            raise ConlluParseError(f"sentence {sentence.sent_id!r}: tag embeddings need UPOS tags")
        tags = np.asarray(tag_embeddings, dtype=np.float64)[list(sentence.upos)]
    if not np.all(np.isfinite(words)):
        raise EmbeddingError(f"sentence {sentence.sent_id!r}: non-finite embedding values")
    return ObservedSequence(words=words, upos=sentence.upos, gold_heads=sentence.heads,
                            tags=tags, sent_id=sentence.sent_id)


def build_corpus(sentences: Sequence[Sentence], vectors, tag_embeddings=None) -> list[ObservedSequence]:
    observations = [build_observations(s, vectors, tag_embeddings) for s in sentences]
    dims = {o.dim for o in observations}
    if len(dims) > 1:
        raise ShapeError(f"inconsistent observation dimensions {sorted(dims)}")
    return observations
