"""Strategies for documents longer than the encoder's window.

* truncation: keep the first ``K`` tokens;
* overlapping windows: segments of ``K`` tokens with stride ``K/2``, decoded
  left to right, each seeded with the graph already decoded on its overlap
  with the previous segment; segment graphs are merged by union;
* reduced document: a non-iterative detector proposes candidate mentions,
  then a second encoder refines coreference links over the concatenation of
  the candidate spans (separated by ``[SEP]``), whose token inputs add the
  original-document position and the detector's hidden state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import ClusterSet, Document, MentionSpan
from .encoder import EncoderParams, Vocab, encode
from .graph import COREF, MENTION, CorefGraph, clusters_to_output, decode_clusters, output_to_input
from .objective import mention_scores
from .refine import (RefinementConfig, RefinementTrace, TrainOptions, TrainResult, TrainSample,
                     mentions_from_probs, refine_ids, train)

__all__ = [
    "WindowPlan",
    "ReducedDoc",
    "plan_windows",
    "decode_windows",
    "decode_windows_detailed",
    "segment_documents",
    "detector_states",
    "detect_candidates",
    "reduce_document",
    "refine_reduced",
    "reduced_sample",
    "train_reduced",
    "truncate",
    "fit_candidates",
    "reduced_length",
]


@dataclass(frozen=True)
class WindowPlan:
    K: int
    segments: tuple[tuple[int, int], ...]

    def overlap(self, s: int) -> tuple[int, int]:
        """Global range shared by segment ``s`` and segment ``s - 1``."""
        if s == 0:
            return (self.segments[0][0], self.segments[0][0])
        return (self.segments[s][0], self.segments[s - 1][1])


def plan_windows(n: int, K: int) -> WindowPlan:
    if K < 2 or K % 2:
        raise ValueError(f"window size must be even and >= 2, got {K}")
    if n < 1:
        raise ValueError("empty document")
    segs = []
    start = 0
    while True:
        end = min(start + K, n)
        segs.append((start, end))
        if end >= n:
            break
        start += K // 2
    return WindowPlan(K, tuple(segs))


@dataclass
class WindowedResult:
    graph: CorefGraph
    plan: WindowPlan
    seeds: list[CorefGraph | None]
    traces: list[RefinementTrace]


def _place(cells: np.ndarray, offset: int, n: int) -> np.ndarray:
    out = np.zeros((n, n), dtype=np.int8)
    k = cells.shape[0]
    out[offset:offset + k, offset:offset + k] = cells
    return out


def decode_windows_detailed(doc: Document, params: EncoderParams, cfg: RefinementConfig, K: int
                            ) -> WindowedResult:
    ids = params.vocab.encode(doc.tokens)
    n = len(ids)
    plan = plan_windows(n, K)
    merged = np.zeros((n, n), dtype=np.int8)
    seeds, traces = [], []
    for s, (a, b) in enumerate(plan.segments):
        seed = None
        if s > 0:
            oa, ob = plan.overlap(s)
            local = np.zeros((b - a, b - a), dtype=np.int8)
            local[: ob - oa, : ob - oa] = np.tril(merged[oa:ob, oa:ob])
            seed = output_to_input(CorefGraph(local, "output"))
        seeds.append(seed)
        trace = refine_ids(ids[a:b], np.arange(b - a), params, cfg, g0_in=seed)
        traces.append(trace)
        part = _place(trace.final.cells, a, n)
        # later segment wins on the overlap
        merged = np.where(part != 0, part, merged)
        written = part != 0
        assert np.array_equal(merged[written], part[written])
    return WindowedResult(CorefGraph(merged, "output"), plan, seeds, traces)


def decode_windows(doc: Document, params: EncoderParams, cfg: RefinementConfig, K: int) -> CorefGraph:
    return decode_windows_detailed(doc, params, cfg, K).graph


def _restrict(doc: Document, a: int, b: int, doc_id: str, diagnostics: list[str] | None,
              report_all: bool = False) -> Document:
    gold = None
    if doc.gold is not None:
        kept = []
        for c in doc.gold:
            inside = [MentionSpan(s.start - a, s.end - a) for s in c if a <= s.start and s.end < b]
            if diagnostics is not None:
                diagnostics.extend(f"{doc.doc_id}: span {s.key} outside window [{a}, {b})"
                                   for s in c if (report_all or (s.start < b and s.end >= a))
                                   and not (a <= s.start and s.end < b))
            if inside:
                kept.append(inside)
        gold = ClusterSet(kept)
    bounds = sorted({0} | {x - a for x in doc.sentence_bounds if a < x < b})
    return Document(doc_id, doc.tokens[a:b], tuple(bounds), gold)


def segment_documents(doc: Document, K: int, diagnostics: list[str] | None = None) -> list[Document]:
    """Window a gold document into independent training samples.

    Spans straddling a segment boundary are dropped from that segment.
    """
    plan = plan_windows(len(doc), K)
    if len(plan.segments) == 1:
        return [doc]
    return [_restrict(doc, a, b, f"{doc.doc_id}#w{s}", diagnostics) for s, (a, b) in enumerate(plan.segments)]


def truncate(doc: Document, K: int, diagnostics: list[str] | None = None) -> Document:
    if len(doc) <= K:
        return doc
    return _restrict(doc, 0, K, doc.doc_id, diagnostics, report_all=True)


# --------------------------------------------------------------------------
# reduced document


def detector_states(doc: Document, params: EncoderParams, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Windowed non-iterative pass: ``(hidden (N, d), mention probabilities (N, N))``.

    On overlaps the later segment's values are kept.
    """
    ids = params.vocab.encode(doc.tokens)
    n = len(ids)
    hidden = np.zeros((n, params.config.d_model))
    probs = np.zeros((n, n))
    for a, b in plan_windows(n, K).segments:
        out = encode(ids[a:b], np.arange(b - a), None, params)
        hidden[a:b] = out.hidden
        probs[a:b, a:b] = mention_scores(out.hidden, params).probs
    return hidden, probs


def detect_candidates(doc: Document, params: EncoderParams, cfg: RefinementConfig, K: int,
                      recall_margin: float = 0.15) -> list[MentionSpan]:
    """Candidate mentions: probability above ``tau - recall_margin``.

    Candidates carry no heads; each becomes its own segment of the reduced
    document, where its first token serves as head.
    """
    _, probs = detector_states(doc, params, K)
    return _candidates(probs, cfg, recall_margin)


def _candidates(probs: np.ndarray, cfg: RefinementConfig, recall_margin: float) -> list[MentionSpan]:
    return mentions_from_probs(probs, cfg.tau - recall_margin, cfg.max_span_len, cfg.top_lambda, heads=False)


def reduced_length(spans: Sequence[MentionSpan]) -> int:
    """Token count of the reduced document built from ``spans``."""
    return sum(s.end - s.start + 2 for s in spans) - 1 if spans else 0


def fit_candidates(cands: Sequence[MentionSpan], probs: np.ndarray, budget: int,
                   keep: Sequence[MentionSpan] = (), diagnostics: list[str] | None = None
                   ) -> list[MentionSpan]:
    """Most probable candidates whose reduced document fits in ``budget`` tokens.

    Spans in ``keep`` are always retained and count against the budget.
    """
    kept = {s.key for s in keep}
    rest = [s for s in cands if s.key not in kept]
    if reduced_length([*keep, *rest]) <= budget:
        return sorted(rest)
    order = sorted(rest, key=lambda s: (-probs[s.end, s.start], s.key))
    used = reduced_length(list(keep))
    out = []
    for s in order:
        cost = s.end - s.start + 1 + (1 if used else 0)
        if used + cost <= budget:
            out.append(s)
            used += cost
    if diagnostics is not None:
        diagnostics.append(f"kept {len(out)} of {len(rest)} candidates to fit {budget} tokens")
    return sorted(out)


@dataclass
class ReducedDoc:
    tokens: tuple[str, ...]
    # original position per reduced token; -1 marks a separator
    positions: np.ndarray
    context: np.ndarray
    spans: tuple[MentionSpan, ...]
    original_spans: tuple[MentionSpan, ...]

    def __len__(self):
        return len(self.tokens)

    def to_original(self, span: MentionSpan) -> MentionSpan:
        return self.original_spans[self.spans.index(span)]

    def to_reduced(self, span: MentionSpan) -> MentionSpan:
        return self.spans[self.original_spans.index(span)]

    def encoder_positions(self, separator_position: int) -> np.ndarray:
        """Position ids for the encoder; far positions share the table's last row."""
        pos = np.minimum(self.positions, separator_position - 1)
        return np.where(self.positions < 0, separator_position, pos)

    def initial_output(self) -> CorefGraph:
        n = len(self)
        cells = np.zeros((n, n), dtype=np.int8)
        for s in self.spans:
            cells[s.end, s.start] = MENTION
        return CorefGraph(cells, "output")


def reduce_document(doc: Document, candidates: Sequence[MentionSpan], hidden: np.ndarray | None = None
                    ) -> ReducedDoc:
    """Concatenate candidate spans, ``[SEP]``-separated, in original order.

    Nested candidates are emitted separately, so shared tokens repeat.
    """
    n = len(doc)
    cands = sorted({MentionSpan(s.start, s.end) for s in candidates})
    for s in cands:
        if s.end >= n:
            raise ValueError(f"candidate {s.key} outside the document")
    d = hidden.shape[1] if hidden is not None else 0
    toks: list[str] = []
    pos: list[int] = []
    ctx: list[np.ndarray] = []
    spans, orig = [], []
    for k, s in enumerate(cands):
        if k:
            toks.append(Vocab.SEP)
            pos.append(-1)
            ctx.append(np.zeros(d))
        start = len(toks)
        for t in range(s.start, s.end + 1):
            toks.append(doc.tokens[t])
            pos.append(t)
            ctx.append(hidden[t] if hidden is not None else np.zeros(d))
        spans.append(MentionSpan(start, len(toks) - 1, start))
        orig.append(s)
    context = np.array(ctx) if ctx else np.zeros((0, d))
    return ReducedDoc(tuple(toks), np.array(pos, dtype=np.int64), context, tuple(spans), tuple(orig))


def _reduced_inputs(rd: ReducedDoc, coref: EncoderParams):
    ids = coref.vocab.encode(rd.tokens)
    pos = rd.encoder_positions(coref.config.separator_position)
    extra = rd.context if rd.context.shape[1] else None
    if extra is not None and extra.shape[1] != coref.config.d_model:
        raise ValueError("detector and coreference encoders must share d_model")
    return ids, pos, extra


@dataclass
class ReducedResult:
    graph: CorefGraph
    candidates: list[MentionSpan]
    reduced: ReducedDoc | None
    trace: RefinementTrace | None
    diagnostics: list[str] = field(default_factory=list)


def refine_reduced_detailed(doc: Document, detector: EncoderParams, coref: EncoderParams,
                            cfg: RefinementConfig, K: int, recall_margin: float = 0.15) -> ReducedResult:
    n = len(doc)
    hidden, probs = detector_states(doc, detector, K)
    diags: list[str] = []
    cands = fit_candidates(_candidates(probs, cfg, recall_margin), probs, coref.config.max_positions,
                           diagnostics=diags)
    if not cands:
        return ReducedResult(CorefGraph.empty(n), [], None, None, diags)
    rd = reduce_document(doc, cands, hidden)
    ids, pos, extra = _reduced_inputs(rd, coref)
    trace = refine_ids(ids, pos, coref, cfg, extra_input=extra, fixed_spans=rd.spans,
                       first=rd.initial_output())
    reduced_clusters = decode_clusters(trace.final)
    clusters = reduced_clusters.map_spans(rd.to_original)
    return ReducedResult(clusters_to_output(clusters, n, strict=False), cands, rd, trace, diags)


def refine_reduced(doc: Document, detector: EncoderParams, coref: EncoderParams, cfg: RefinementConfig,
                   K: int, recall_margin: float = 0.15) -> CorefGraph:
    """Two-stage prediction; the result is an output graph over ``doc``'s tokens.

    Only candidates that end up in a coreference cluster survive.
    """
    return refine_reduced_detailed(doc, detector, coref, cfg, K, recall_margin).graph


def reduced_sample(doc: Document, candidates: Sequence[MentionSpan], hidden: np.ndarray,
                   coref: EncoderParams, probs: np.ndarray | None = None) -> TrainSample:
    """Training sample for the coreference stage.

    Gold mentions missing from ``candidates`` are added; the target links
    each candidate to its closest earlier gold cluster-mate among the
    candidates.  Given ``probs``, the least likely non-gold candidates are
    dropped until the sample fits the encoder.
    """
    gold = doc.gold or ClusterSet()
    if probs is not None:
        candidates = fit_candidates(candidates, probs, coref.config.max_positions, gold.mentions())
    keys = {s.key for s in candidates} | {s.key for s in gold.mentions()}
    rd = reduce_document(doc, [MentionSpan(*k) for k in sorted(keys)], hidden)
    ids, pos, extra = _reduced_inputs(rd, coref)
    to_red = dict(zip((s.key for s in rd.original_spans), rd.spans))
    red_gold = ClusterSet([to_red[s.key] for s in c] for c in gold)
    cells = rd.initial_output().cells.copy()
    for c in red_gold:
        heads = sorted(s.start for s in c)
        for prev, cur in zip(heads, heads[1:]):
            cells[cur, prev] = COREF
    return TrainSample(doc.doc_id, ids, pos, CorefGraph(cells, "output"), red_gold,
                       extra_input=extra, fixed_spans=rd.spans)


def train_reduced(corpus: Sequence[Document], detector: EncoderParams, coref: EncoderParams,
                  cfg: RefinementConfig, detector_opts: TrainOptions, coref_opts: TrainOptions,
                  K: int, recall_margin: float = 0.15) -> tuple[TrainResult, TrainResult]:
    """Train the detector, then the coreference stage on its candidates.

    The two encoders are trained independently; the coreference stage sees
    the trained detector's hidden states as fixed inputs.
    """
    segments = [seg for d in corpus for seg in segment_documents(d, K)]
    det = train(segments, detector, cfg, detector_opts, mode="mention")
    samples = []
    for d in corpus:
        hidden, probs = detector_states(d, detector, K)
        cands = _candidates(probs, cfg, recall_margin)
        samples.append(reduced_sample(d, cands, hidden, coref, probs))
    cor = train(samples, coref, cfg, coref_opts, mode="coref")
    return det, cor
