"""Dependency Model with Valence over observed tag sequences.

Generative story for one tree: the virtual root picks a single dependent
(``root_logits``). Every head then generates its left dependents outward
from the head, and independently its right dependents. Before each
attachment attempt it draws stop/continue from a Bernoulli whose logit
``stop_logits[tag, dir, adj]`` depends on whether it already has a
dependent on that side (``adj = 1``) or not (``adj = 0``); on continue, the
dependent's tag is drawn from ``softmax(child_logits[tag, dir])``.

Because tags are observed, the inside program below only marginalises over
single-root projective trees. It uses split-head spans so that valence is
read off the span itself: a right half ``h..e`` has a right dependent iff
``e > h``.

Chart layout (0-based positions, ``n`` tokens)::

    UR[h, e]  head h, right half h..e, still open (no STOP drawn yet)
    SR[h, e]  same, sealed with its right STOP
    UL[s, h]  head h, left half s..h, open
    SL[s, h]  sealed
    IR[h, m]  h has just attached m on the right (h < m), m's left half sealed
    IL[m, h]  h has just attached m on the left (m < h), m's right half sealed
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, log_softmax, logsumexp, softmax

from .corpus import is_projective
from .errors import DataError

LEFT, RIGHT = 0, 1
NO_CHILD, HAS_CHILD = 0, 1


@dataclass
class DmvParams:
    root_logits: np.ndarray   # (K,)
    child_logits: np.ndarray  # (K, 2, K): head tag, direction, child tag
    stop_logits: np.ndarray   # (K, 2, 2): head tag, direction, adjacency

    @property
    def K(self):
        return self.root_logits.shape[0]

    def tensors(self, prefix="prior"):
        return {f"{prefix}.root_logits": self.root_logits,
                f"{prefix}.child_logits": self.child_logits,
                f"{prefix}.stop_logits": self.stop_logits}

    def zeros_like(self):
        return DmvParams(np.zeros_like(self.root_logits), np.zeros_like(self.child_logits),
                         np.zeros_like(self.stop_logits))

    def copy(self):
        return DmvParams(self.root_logits.copy(), self.child_logits.copy(), self.stop_logits.copy())


def init_dmv(K, rng=None, scale=0.01):
    rng = np.random.default_rng(rng)
    return DmvParams(rng.normal(0.0, scale, size=K),
                     rng.normal(0.0, scale, size=(K, 2, K)),
                     rng.normal(0.0, scale, size=(K, 2, 2)))


@dataclass
class _Scores:
    """Per-sentence log-probabilities of every generative event."""

    root: np.ndarray   # (n,)       root picks token r
    child: np.ndarray  # (n, n)     head h draws tag of m (direction implied by m vs h)
    stop: np.ndarray   # (n, 2, 2)  log p(stop | h, dir, adj)
    cont: np.ndarray   # (n, 2, 2)  log p(continue | h, dir, adj)


def _scores(params: DmvParams, upos) -> tuple[np.ndarray, _Scores]:
    tags = np.asarray(upos, dtype=np.int64)
    if tags.ndim != 1 or tags.size == 0:
        raise DataError("DMV needs at least one token")
    if tags.min() < 0 or tags.max() >= params.K:
        raise DataError(f"tag ids must lie in 0..{params.K - 1}")
    n = tags.size
    log_child = log_softmax(params.child_logits, axis=2)     # (K, 2, K)
    pos = np.arange(n)
    direction = np.where(pos[None, :] < pos[:, None], LEFT, RIGHT)  # [h, m]
    child = log_child[tags[:, None], direction, tags[None, :]]
    child[pos, pos] = -np.inf
    stop_l = params.stop_logits[tags]
    return tags, _Scores(
        root=log_softmax(params.root_logits)[tags],
        child=child,
        stop=log_expit(stop_l),
        cont=log_expit(-stop_l),
    )


def _inside(sc: _Scores, n: int):
    UR = np.full((n, n), -np.inf)
    SR = np.full((n, n), -np.inf)
    UL = np.full((n, n), -np.inf)
    SL = np.full((n, n), -np.inf)
    IR = np.full((n, n), -np.inf)
    IL = np.full((n, n), -np.inf)
    for i in range(n):
        UR[i, i] = UL[i, i] = 0.0
        SR[i, i] = sc.stop[i, RIGHT, NO_CHILD]
        SL[i, i] = sc.stop[i, LEFT, NO_CHILD]
    for w in range(1, n):
        for s in range(n - w):
            t = s + w
            # h = s takes m = t on the right; split k in [s, t-1]
            terms = UR[s, s:t] + SL[s + 1:t + 1, t]
            terms = terms + np.where(np.arange(s, t) > s, sc.cont[s, RIGHT, HAS_CHILD],
                                     sc.cont[s, RIGHT, NO_CHILD])
            IR[s, t] = logsumexp(terms) + sc.child[s, t]
            # h = t takes m = s on the left; split k in [s, t-1], h's open left half k+1..t
            terms = SR[s, s:t] + UL[s + 1:t + 1, t]
            terms = terms + np.where(np.arange(s + 1, t + 1) < t, sc.cont[t, LEFT, HAS_CHILD],
                                     sc.cont[t, LEFT, NO_CHILD])
            IL[s, t] = logsumexp(terms) + sc.child[t, s]
        for s in range(n - w):
            t = s + w
            # outermost right dependent m of s in (s, t]
            UR[s, t] = logsumexp(IR[s, s + 1:t + 1] + SR[s + 1:t + 1, t])
            SR[s, t] = UR[s, t] + sc.stop[s, RIGHT, HAS_CHILD]
            # outermost left dependent m of t in [s, t)
            UL[s, t] = logsumexp(IL[s:t, t] + SL[s, s:t])
            SL[s, t] = UL[s, t] + sc.stop[t, LEFT, HAS_CHILD]
    top = sc.root + SL[0, :] + SR[:, n - 1]
    return dict(UR=UR, SR=SR, UL=UL, SL=SL, IR=IR, IL=IL, top=top), float(logsumexp(top))


def inside_logprob(params: DmvParams, upos) -> float:
    """log of the total probability of ``upos`` summed over projective trees."""
    tags, sc = _scores(params, upos)
    return _inside(sc, tags.size)[1]


def _event_grads(params: DmvParams, tags, root_w, child_w, stop_w, cont_w) -> DmvParams:
    """Chain rule from expected event counts (per token position) to logits."""
    K = params.K
    n = tags.size
    root_c = np.bincount(tags, weights=root_w, minlength=K).astype(np.float64)
    g_root = root_c - root_c.sum() * softmax(params.root_logits)

    child_c = np.zeros((K, 2, K))
    pos = np.arange(n)
    hh, mm = np.meshgrid(pos, pos, indexing="ij")
    mask = hh != mm
    direction = np.where(mm < hh, LEFT, RIGHT)
    np.add.at(child_c, (tags[hh[mask]], direction[mask], tags[mm[mask]]), child_w[mask])
    g_child = child_c - child_c.sum(axis=2, keepdims=True) * softmax(params.child_logits, axis=2)

    stop_c = np.zeros((K, 2, 2))
    cont_c = np.zeros((K, 2, 2))
    np.add.at(stop_c, tags, stop_w)
    np.add.at(cont_c, tags, cont_w)
    p_stop = expit(params.stop_logits)
    g_stop = stop_c * (1.0 - p_stop) - cont_c * p_stop
    return DmvParams(g_root, g_child, g_stop)


def _outside(sc: _Scores, chart, logZ, n):
    """Adjoints of logZ w.r.t. every chart item and every event score."""
    gUR, gSR, gUL, gSL, gIR, gIL = (np.zeros((n, n)) for _ in range(6))
    g_root = np.exp(chart["top"] - logZ)
    g_child = np.zeros((n, n))
    g_stop = np.zeros((n, 2, 2))
    g_cont = np.zeros((n, 2, 2))
    UR, SR, UL, SL, IR, IL = (chart[k] for k in ("UR", "SR", "UL", "SL", "IR", "IL"))

    gSL[0, :] += g_root
    gSR[:, n - 1] += g_root
    for w in range(n - 1, 0, -1):
        for s in range(n - w):
            t = s + w
            g_stop[s, RIGHT, HAS_CHILD] += gSR[s, t]
            gUR[s, t] += gSR[s, t]
            g_stop[t, LEFT, HAS_CHILD] += gSL[s, t]
            gUL[s, t] += gSL[s, t]

            p = np.exp(IR[s, s + 1:t + 1] + SR[s + 1:t + 1, t] - UR[s, t]) * gUR[s, t]
            gIR[s, s + 1:t + 1] += p
            gSR[s + 1:t + 1, t] += p
            p = np.exp(IL[s:t, t] + SL[s, s:t] - UL[s, t]) * gUL[s, t]
            gIL[s:t, t] += p
            gSL[s, s:t] += p
        for s in range(n - w):
            t = s + w
            g_child[s, t] += gIR[s, t]
            adj = np.arange(s, t) > s
            cont = np.where(adj, sc.cont[s, RIGHT, HAS_CHILD], sc.cont[s, RIGHT, NO_CHILD])
            p = np.exp(UR[s, s:t] + SL[s + 1:t + 1, t] + cont + sc.child[s, t] - IR[s, t]) * gIR[s, t]
            gUR[s, s:t] += p
            gSL[s + 1:t + 1, t] += p
            g_cont[s, RIGHT, HAS_CHILD] += p[adj].sum()
            g_cont[s, RIGHT, NO_CHILD] += p[~adj].sum()

            g_child[t, s] += gIL[s, t]
            adj = np.arange(s + 1, t + 1) < t
            cont = np.where(adj, sc.cont[t, LEFT, HAS_CHILD], sc.cont[t, LEFT, NO_CHILD])
            p = np.exp(SR[s, s:t] + UL[s + 1:t + 1, t] + cont + sc.child[t, s] - IL[s, t]) * gIL[s, t]
            gSR[s, s:t] += p
            gUL[s + 1:t + 1, t] += p
            g_cont[t, LEFT, HAS_CHILD] += p[adj].sum()
            g_cont[t, LEFT, NO_CHILD] += p[~adj].sum()
    for i in range(n):
        g_stop[i, RIGHT, NO_CHILD] += gSR[i, i]
        g_stop[i, LEFT, NO_CHILD] += gSL[i, i]
    return g_root, g_child, g_stop, g_cont


def dmv_expected_counts(params: DmvParams, upos):
    """Inside-outside. Returns ``(logZ, grads)`` with ``grads`` the gradient
    of logZ w.r.t. every logit, as a :class:`DmvParams`."""
    tags, sc = _scores(params, upos)
    n = tags.size
    chart, logZ = _inside(sc, n)
    g_root, g_child, g_stop, g_cont = _outside(sc, chart, logZ, n)
    return logZ, _event_grads(params, tags, g_root, g_child, g_stop, g_cont)


def expected_arcs(params: DmvParams, upos) -> np.ndarray:
    """Posterior arc marginals ``P[h, m]`` (h = 0 is the root, tokens 1-based)."""
    tags, sc = _scores(params, upos)
    n = tags.size
    chart, logZ = _inside(sc, n)
    g_root, g_child, _, _ = _outside(sc, chart, logZ, n)
    arcs = np.zeros((n + 1, n + 1))
    arcs[0, 1:] = g_root
    arcs[1:, 1:] = g_child
    return arcs


def _tree_events(heads):
    """Event counts of the generative story for a fixed tree.

    Returns ``(root, arcs, stops, conts)`` where ``arcs`` lists (h, m) pairs
    (0-based) and ``stops``/``conts`` list (h, dir, adj) triples.
    """
    n = len(heads)
    root = None
    deps = [([], []) for _ in range(n)]
    for m, h in enumerate(heads):
        if h == 0:
            root = m
        else:
            side = LEFT if m < h - 1 else RIGHT
            deps[h - 1][side].append(m)
    arcs, stops, conts = [], [], []
    for h in range(n):
        for side in (LEFT, RIGHT):
            kids = sorted(deps[h][side], key=lambda m: abs(m - h))
            for j, m in enumerate(kids):
                conts.append((h, side, NO_CHILD if j == 0 else HAS_CHILD))
                arcs.append((h, m))
            stops.append((h, side, HAS_CHILD if kids else NO_CHILD))
    return root, arcs, stops, conts


def tree_logprob(params: DmvParams, upos, heads):
    """Log probability of one tree and its gradient w.r.t. the logits.

    Non-projective trees are scored the same way (valence read from the
    tree's own dependents) even though the inside program never builds them.
    """
    tags, sc = _scores(params, upos)
    n = tags.size
    if len(heads) != n:
        raise DataError("heads and tags differ in length")
    root, arcs, stops, conts = _tree_events(heads)
    if root is None:
        raise DataError("tree has no root")
    root_w = np.zeros(n)
    root_w[root] = 1.0
    child_w = np.zeros((n, n))
    stop_w = np.zeros((n, 2, 2))
    cont_w = np.zeros((n, 2, 2))
    logp = sc.root[root]
    for h, m in arcs:
        logp += sc.child[h, m]
        child_w[h, m] += 1.0
    for ev in stops:
        logp += sc.stop[ev]
        stop_w[ev] += 1.0
    for ev in conts:
        logp += sc.cont[ev]
        cont_w[ev] += 1.0
    return float(logp), _event_grads(params, tags, root_w, child_w, stop_w, cont_w)


def viterbi_parse(params: DmvParams, upos) -> list[int]:
    """Highest-scoring projective tree as 1-based heads (0 = root).

    Ties prefer the earliest split point / outermost-dependent position,
    then the leftmost root.
    """
    tags, sc = _scores(params, upos)
    n = tags.size
    UR = np.full((n, n), -np.inf)
    SR = np.full((n, n), -np.inf)
    UL = np.full((n, n), -np.inf)
    SL = np.full((n, n), -np.inf)
    IR = np.full((n, n), -np.inf)
    IL = np.full((n, n), -np.inf)
    bIR = np.zeros((n, n), dtype=np.int64)
    bIL = np.zeros((n, n), dtype=np.int64)
    bUR = np.zeros((n, n), dtype=np.int64)
    bUL = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        UR[i, i] = UL[i, i] = 0.0
        SR[i, i] = sc.stop[i, RIGHT, NO_CHILD]
        SL[i, i] = sc.stop[i, LEFT, NO_CHILD]
    for w in range(1, n):
        for s in range(n - w):
            t = s + w
            terms = UR[s, s:t] + SL[s + 1:t + 1, t] + np.where(
                np.arange(s, t) > s, sc.cont[s, RIGHT, HAS_CHILD], sc.cont[s, RIGHT, NO_CHILD])
            k = int(np.argmax(terms))
            bIR[s, t] = s + k
            IR[s, t] = terms[k] + sc.child[s, t]
            terms = SR[s, s:t] + UL[s + 1:t + 1, t] + np.where(
                np.arange(s + 1, t + 1) < t, sc.cont[t, LEFT, HAS_CHILD], sc.cont[t, LEFT, NO_CHILD])
            k = int(np.argmax(terms))
            bIL[s, t] = s + k
            IL[s, t] = terms[k] + sc.child[t, s]
        for s in range(n - w):
            t = s + w
            terms = IR[s, s + 1:t + 1] + SR[s + 1:t + 1, t]
            k = int(np.argmax(terms))
            bUR[s, t] = s + 1 + k
            UR[s, t] = terms[k]
            SR[s, t] = UR[s, t] + sc.stop[s, RIGHT, HAS_CHILD]
            terms = IL[s:t, t] + SL[s, s:t]
            k = int(np.argmax(terms))
            bUL[s, t] = s + k
            UL[s, t] = terms[k]
            SL[s, t] = UL[s, t] + sc.stop[t, LEFT, HAS_CHILD]
    top = sc.root + SL[0, :] + SR[:, n - 1]
    root = int(np.argmax(top))

    heads = [0] * n
    heads[root] = 0
    # explicit stack instead of recursion; items are (kind, s, t)
    stack = [("SL", 0, root), ("SR", root, n - 1)]
    while stack:
        kind, s, t = stack.pop()
        if s == t:
            continue
        if kind == "SR":
            m = bUR[s, t]
            stack += [("IR", s, m), ("SR", m, t)]
        elif kind == "SL":
            m = bUL[s, t]
            stack += [("IL", m, t), ("SL", s, m)]
        elif kind == "IR":
            heads[t] = int(s) + 1
            k = bIR[s, t]
            stack += [("SR", s, k), ("SL", k + 1, t)]
        elif kind == "IL":
            heads[s] = int(t) + 1
            k = bIL[s, t]
            stack += [("SR", s, k), ("SL", k + 1, t)]
    if sum(1 for h in heads if h == 0) != 1 or not is_projective(heads):
        raise AssertionError(f"decoder produced an invalid tree {heads}")
    return heads


def viterbi_score(params: DmvParams, upos) -> float:
    heads = viterbi_parse(params, upos)
    return tree_logprob(params, upos, heads)[0]
