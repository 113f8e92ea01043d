"""Coreference metrics: MUC, B-cubed, CEAF-phi4, their average, and paired
bootstrap resampling.

Mentions are compared by exact ``(start, end)`` match.  Ratios with a zero
denominator are 0, and F1 is 0 when precision and recall are both 0.

Corpus-level scores pool numerators and denominators over documents.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import ClusterSet

__all__ = [
    "METRICS",
    "ScoreReport",
    "muc",
    "b_cubed",
    "ceaf_phi4",
    "avg_f1",
    "f1",
    "metric_counts",
    "score_corpus",
    "paired_bootstrap",
    "format_table",
]

METRICS = ("muc", "b3", "ceaf_phi4")


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def _clusters(cs: ClusterSet | Sequence) -> list[frozenset]:
    if isinstance(cs, ClusterSet):
        return [frozenset(s.key for s in c) for c in cs]
    return [frozenset(c) for c in cs]


def _muc_side(key, response):
    where = {m: k for k, c in enumerate(response) for m in c}
    num = den = 0
    for c in key:
        parts = {where.get(m, ("unaligned", m)) for m in c}
        num += len(c) - len(parts)
        den += len(c) - 1
    return num, den


def _b3_side(key, response):
    where = {m: c for c in response for m in c}
    num = 0.0
    den = 0
    for c in key:
        for m in c:
            den += 1
            if m in where:
                num += len(c & where[m]) / len(c)
    return num, den


def _phi4_matrix(key, response) -> np.ndarray:
    sim = np.zeros((len(key), len(response)))
    for a, k in enumerate(key):
        for b, r in enumerate(response):
            inter = len(k & r)
            if inter:
                sim[a, b] = 2.0 * inter / (len(k) + len(r))
    return sim


def _ceaf_total(key, response) -> float:
    if not key or not response:
        return 0.0
    sim = _phi4_matrix(key, response)
    rows, cols = linear_sum_assignment(sim, maximize=True)
    return float(sim[rows, cols].sum())


def metric_counts(key, response) -> np.ndarray:
    """``(3, 4)`` array of ``(p_num, p_den, r_num, r_den)`` per metric."""
    key, response = _clusters(key), _clusters(response)
    out = np.zeros((3, 4))
    rn, rd = _muc_side(key, response)
    pn, pd = _muc_side(response, key)
    out[0] = pn, pd, rn, rd
    rn, rd = _b3_side(key, response)
    pn, pd = _b3_side(response, key)
    out[1] = pn, pd, rn, rd
    total = _ceaf_total(key, response)
    out[2] = total, len(response), total, len(key)
    return out


def _prf(row) -> tuple[float, float, float]:
    p, r = float(_ratio(row[0], row[1])), float(_ratio(row[2], row[3]))
    return p, r, f1(p, r)


def muc(key, response) -> tuple[float, float, float]:
    """Link-based scores: recall counts the links needed to reconnect key
    clusters once split by the response partition."""
    return _prf(metric_counts(key, response)[0])


def b_cubed(key, response) -> tuple[float, float, float]:
    return _prf(metric_counts(key, response)[1])


def ceaf_phi4(key, response) -> tuple[float, float, float]:
    """Entity-based CEAF with the phi4 similarity and an optimal one-to-one
    cluster alignment (Kuhn-Munkres)."""
    return _prf(metric_counts(key, response)[2])


def avg_f1(reports) -> float:
    """Mean F1 of MUC, B-cubed and CEAF-phi4.

    Accepts a :class:`ScoreReport`, a mapping ``metric -> (p, r, f1)`` or a
    plain triple of F1 values.
    """
    if isinstance(reports, ScoreReport):
        return reports.avg_f1
    if isinstance(reports, dict):
        return float(np.mean([reports[m][2] for m in METRICS]))
    vals = list(reports)
    if len(vals) != 3:
        raise ValueError("need exactly three F1 values")
    return sum(vals) / 3.0


@dataclass
class ScoreReport:
    scores: dict[str, tuple[float, float, float]]
    key_mentions: int = 0
    response_mentions: int = 0
    p_values: dict[str, float] | None = field(default=None)

    @property
    def avg_f1(self) -> float:
        return float(np.mean([self.scores[m][2] for m in METRICS]))

    def to_dict(self) -> dict:
        out = {m: dict(zip(("p", "r", "f1"), self.scores[m])) for m in METRICS}
        out["avg_f1"] = self.avg_f1
        out["mentions"] = {"key": self.key_mentions, "response": self.response_mentions}
        if self.p_values is not None:
            out["p_values"] = self.p_values
        return out


def _report_from_counts(counts: np.ndarray, key_mentions=0, response_mentions=0) -> ScoreReport:
    return ScoreReport({m: _prf(counts[k]) for k, m in enumerate(METRICS)},
                       key_mentions, response_mentions)


def score_corpus(keys: Sequence[ClusterSet], responses: Sequence[ClusterSet]) -> ScoreReport:
    if len(keys) != len(responses):
        raise ValueError("key and response document counts differ")
    counts = sum((metric_counts(k, r) for k, r in zip(keys, responses)), np.zeros((3, 4)))
    return _report_from_counts(
        counts,
        sum(len(k.mentions()) for k in keys),
        sum(len(r.mentions()) for r in responses),
    )


def _f1_from_counts(c: np.ndarray) -> np.ndarray:
    """Vectorised F1 for counts shaped ``(..., 3, 4)``; returns ``(..., 3)``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(c[..., 1] > 0, c[..., 0] / np.where(c[..., 1] > 0, c[..., 1], 1), 0.0)
        r = np.where(c[..., 3] > 0, c[..., 2] / np.where(c[..., 3] > 0, c[..., 3], 1), 0.0)
        return np.where(p + r > 0, 2 * p * r / np.where(p + r > 0, p + r, 1), 0.0)


def paired_bootstrap(keys: Sequence[ClusterSet], sys_a: Sequence[ClusterSet], sys_b: Sequence[ClusterSet],
                     iterations: int = 1000, seed: int = 0) -> dict[str, float]:
    """One-sided paired bootstrap over documents.

    Returns, per metric and for the average F1, the fraction of resampled
    corpora on which system A does not score strictly higher than system B.
    """
    if not len(keys) == len(sys_a) == len(sys_b):
        raise ValueError("systems must cover the same documents")
    if len(keys) < 2:
        raise ValueError("paired bootstrap needs at least 2 documents")
    if iterations < 100:
        raise ValueError("iterations must be >= 100")
    ca = np.stack([metric_counts(k, r) for k, r in zip(keys, sys_a)])
    cb = np.stack([metric_counts(k, r) for k, r in zip(keys, sys_b)])
    n = len(keys)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(iterations, n))
    weights = np.zeros((iterations, n))
    np.add.at(weights, (np.arange(iterations)[:, None], idx), 1.0)
    fa = _f1_from_counts(np.einsum("bd,dmk->bmk", weights, ca))
    fb = _f1_from_counts(np.einsum("bd,dmk->bmk", weights, cb))
    out = {m: float(np.mean(fa[:, k] <= fb[:, k])) for k, m in enumerate(METRICS)}
    out["avg_f1"] = float(np.mean(fa.mean(axis=1) <= fb.mean(axis=1)))
    return out


def format_table(rows: dict[str, ScoreReport]) -> str:
    """Plain-text table: P/R/F1 for each metric, then the average F1."""
    head = f"{'system':<24}" + "".join(f"{m:^24}" for m in ("MUC", "B3", "CEAF_phi4")) + f"{'Avg F1':>8}"
    sub = f"{'':<24}" + "".join(f"{'P':>8}{'R':>8}{'F1':>8}" for _ in METRICS)
    lines = [head, sub]
    for name, rep in rows.items():
        cells = "".join(f"{100 * v:8.1f}" for m in METRICS for v in rep.scores[m])
        lines.append(f"{name:<24}{cells}{100 * rep.avg_f1:8.1f}")
    return "\n".join(lines)
