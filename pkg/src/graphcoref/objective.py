"""Pair scoring heads and training losses.

Both heads score a token pair from the concatenated hidden states,
``w . [h_i, h_j]``, plus a bilinear ``h_i^T U h_j`` term when the encoder is
configured with ``pair_scorer="biaffine"``.  Mention links use a logistic
output; coreference links use a softmax over the candidate antecedent heads
of each head plus a null antecedent whose logit is fixed at zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import ClusterSet, MentionSpan
from .encoder import EncoderParams
from .graph import MENTION, CorefGraph, assign_heads

__all__ = [
    "EPSILON",
    "CandidateSet",
    "MentionLogitMatrix",
    "AntecedentDistribution",
    "mention_scores",
    "antecedent_scores",
    "loss_mention",
    "loss_coref",
    "mention_backward",
    "antecedent_backward",
    "sigmoid",
]

# slot index of the null antecedent in every antecedent row
EPSILON = 0


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


@dataclass(frozen=True)
class CandidateSet:
    """Candidate mention heads, sorted by position, with their spans."""

    spans: tuple[MentionSpan, ...]

    def __post_init__(self):
        heads = [s.head for s in self.spans]
        if any(h is None for h in heads):
            raise ValueError("candidate spans need heads")
        if any(a >= b for a, b in zip(heads, heads[1:])):
            raise ValueError("candidate heads must be strictly increasing")

    @classmethod
    def from_spans(cls, spans: Sequence[MentionSpan]) -> "CandidateSet":
        if spans and any(s.head is None for s in spans):
            spans = assign_heads(spans)
        return cls(tuple(sorted(spans, key=lambda s: s.head)))

    @property
    def heads(self) -> np.ndarray:
        return np.array([s.head for s in self.spans], dtype=np.int64)

    def __len__(self):
        return len(self.spans)

    def antecedents(self, k: int) -> list[int | None]:
        """``A(i)`` for the ``k``-th head: ``None`` (the null slot) then earlier heads."""
        return [None] + [s.head for s in self.spans[:k]]


@dataclass
class MentionLogitMatrix:
    """Lower-triangular logits; row = mention end ``i``, column = start ``j``."""

    logits: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        n = self.logits.shape[0]
        return np.tril(np.ones((n, n), dtype=bool))

    @property
    def probs(self) -> np.ndarray:
        return np.where(self.mask, sigmoid(self.logits), 0.0)


@dataclass
class AntecedentDistribution:
    """Row ``k``: slot 0 is the null antecedent, slot ``m + 1`` is candidate ``m < k``."""

    logits: np.ndarray
    mask: np.ndarray
    candidates: CandidateSet

    @property
    def probs(self) -> np.ndarray:
        z = np.where(self.mask, self.logits, -np.inf)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def row(self, k: int) -> tuple[list[int | None], np.ndarray]:
        p = self.probs[k]
        return self.candidates.antecedents(k), p[: k + 1]


def _pair_logits(Ha, Hb, w, U, b=0.0):
    d = Ha.shape[1]
    out = (Ha @ w[:d])[:, None] + (Hb @ w[d:])[None, :] + b
    if U is not None:
        out = out + Ha @ U @ Hb.T
    return out


def _pair_backward(dZ, Ha, Hb, w, U):
    """Gradients of ``_pair_logits`` w.r.t. ``Ha, Hb, w, U``."""
    d = Ha.shape[1]
    ra, rb = dZ.sum(axis=1), dZ.sum(axis=0)
    dHa = ra[:, None] * w[:d]
    dHb = rb[:, None] * w[d:]
    dw = np.concatenate([Ha.T @ ra, Hb.T @ rb])
    dU = None
    if U is not None:
        dHa = dHa + dZ @ Hb @ U.T
        dHb = dHb + dZ.T @ Ha @ U
        dU = Ha.T @ dZ @ Hb
    return dHa, dHb, dw, dU


def mention_scores(hidden: np.ndarray, params: EncoderParams) -> MentionLogitMatrix:
    T = params.tensors
    z = _pair_logits(hidden, hidden, T["mention_w"], T.get("mention_u"), T["mention_b"])
    return MentionLogitMatrix(np.tril(z))


def mention_backward(d_logits: np.ndarray, hidden: np.ndarray, params: EncoderParams):
    """``(d_hidden, head_grads)`` for a gradient on the mention logits."""
    T = params.tensors
    dZ = np.tril(d_logits)
    dHa, dHb, dw, dU = _pair_backward(dZ, hidden, hidden, T["mention_w"], T.get("mention_u"))
    grads = {"mention_w": dw, "mention_b": np.array(dZ.sum())}
    if dU is not None:
        grads["mention_u"] = dU
    return dHa + dHb, grads


def antecedent_scores(hidden: np.ndarray, cands: CandidateSet, params: EncoderParams
                      ) -> AntecedentDistribution:
    T = params.tensors
    m = len(cands)
    logits = np.zeros((m, m + 1))
    mask = np.zeros((m, m + 1), dtype=bool)
    mask[:, EPSILON] = True
    if m:
        Hc = hidden[cands.heads]
        z = _pair_logits(Hc, Hc, T["coref_w"], T.get("coref_u"))
        earlier = np.tril(np.ones((m, m), dtype=bool), -1)
        logits[:, 1:] = np.where(earlier, z, 0.0)
        mask[:, 1:] = earlier
    return AntecedentDistribution(logits, mask, cands)


def antecedent_backward(d_logits: np.ndarray, hidden: np.ndarray, dist: AntecedentDistribution,
                        params: EncoderParams):
    T = params.tensors
    cands = dist.candidates
    d_hidden = np.zeros_like(hidden)
    grads = {"coref_w": np.zeros_like(T["coref_w"])}
    if "coref_u" in T:
        grads["coref_u"] = np.zeros_like(T["coref_u"])
    if len(cands) == 0:
        return d_hidden, grads
    idx = cands.heads
    Hc = hidden[idx]
    dZ = np.where(dist.mask[:, 1:], d_logits[:, 1:], 0.0)
    dHa, dHb, dw, dU = _pair_backward(dZ, Hc, Hc, T["coref_w"], T.get("coref_u"))
    d_hidden[idx] += dHa + dHb
    grads["coref_w"] = dw
    if dU is not None:
        grads["coref_u"] = dU
    return d_hidden, grads


def mention_targets(gold: CorefGraph) -> np.ndarray:
    return np.tril(gold.cells == MENTION).astype(np.float64)


def loss_mention(scores: MentionLogitMatrix, gold: CorefGraph | np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy over the lower triangle and its gradient."""
    z = scores.logits
    t = mention_targets(gold) if isinstance(gold, CorefGraph) else np.asarray(gold, dtype=np.float64)
    if t.shape != z.shape:
        raise ValueError("gold graph and scores differ in size")
    mask = scores.mask
    count = mask.sum()
    # softplus(-z) for positives, softplus(z) for negatives; finite at +-inf
    cell = _softplus(np.where(t > 0, -z, z))
    loss = float(cell[mask].sum() / count)
    with np.errstate(invalid="ignore"):
        grad = np.where(mask, (sigmoid(z) - t) / count, 0.0)
    return loss, grad


def gold_antecedents(cands: CandidateSet, gold: ClusterSet,
                     diagnostics: list[str] | None = None) -> np.ndarray:
    """Boolean ``(m, m + 1)`` matrix of true antecedent slots per candidate head.

    Heads outside every gold cluster, or without an earlier gold cluster-mate
    among the candidates, get the null slot.
    """
    m = len(cands)
    cluster_of = gold.cluster_of()
    target = np.zeros((m, m + 1), dtype=bool)
    labels = [cluster_of.get(s.key) for s in cands.spans]
    for k, lab in enumerate(labels):
        if lab is not None:
            for j in range(k):
                if labels[j] == lab:
                    target[k, j + 1] = True
        if not target[k].any():
            target[k, EPSILON] = True
    if diagnostics is not None:
        present = {s.key for s in cands.spans}
        for s in gold.mentions():
            if s.key not in present:
                diagnostics.append(f"gold mention {s.key} missing from candidates")
    return target


def loss_coref(dist: AntecedentDistribution, gold: ClusterSet | np.ndarray, cands: CandidateSet | None = None,
               diagnostics: list[str] | None = None) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood of the true antecedents, summed over heads.

    ``gold`` is either a cluster set or a precomputed boolean target matrix.
    """
    cands = dist.candidates if cands is None else cands
    if isinstance(gold, ClusterSet):
        target = gold_antecedents(cands, gold, diagnostics)
    else:
        target = np.asarray(gold, dtype=bool)
    if len(cands) == 0:
        return 0.0, np.zeros_like(dist.logits)
    z = np.where(dist.mask, dist.logits, -np.inf)
    zt = np.where(target & dist.mask, z, -np.inf)
    zmax = z.max(axis=1, keepdims=True)
    lse_all = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    ztmax = zt.max(axis=1, keepdims=True)
    lse_true = ztmax[:, 0] + np.log(np.exp(zt - ztmax).sum(axis=1))
    loss = float(np.sum(lse_all - lse_true))
    p = np.exp(z - lse_all[:, None])
    q = np.exp(zt - lse_true[:, None])
    return loss, p - q
