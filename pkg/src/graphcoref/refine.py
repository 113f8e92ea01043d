"""Iterative graph refinement: predict, re-encode on the prediction, repeat.

Iteration 1 starts from the all-zero graph and only predicts mention links.
From iteration 2 on the whole graph is predicted.  Refinement stops when a
prediction equals the previous one or after ``t_max`` iterations; training
uses the same stopping rule and never backpropagates across iterations.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import ClusterSet, Document, MentionSpan
from .encoder import EncoderParams, backprop, encode
from .graph import (COREF, MENTION, CorefGraph, assign_heads, clusters_to_output, decode_graph,
                    output_to_input)
from .objective import (CandidateSet, antecedent_backward, antecedent_scores, loss_coref,
                        loss_mention, mention_backward, mention_scores)

log = logging.getLogger(__name__)

__all__ = [
    "RefinementConfig",
    "RefinementTrace",
    "TrainOptions",
    "TrainSample",
    "TrainResult",
    "TrainingDiverged",
    "Adam",
    "Momentum",
    "predict_graph",
    "refine",
    "refine_ids",
    "make_sample",
    "iteration_step",
    "train",
]


@dataclass(frozen=True)
class RefinementConfig:
    t_max: int = 4
    tau: float = 0.5
    max_span_len: int = 10
    # keep at most top_lambda * N mention links per graph
    top_lambda: float | None = None

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.max_span_len < 1:
            raise ValueError("max_span_len must be >= 1")


@dataclass
class RefinementTrace:
    graphs: list[CorefGraph]
    stop_reason: str
    diagnostics: list[dict] = field(default_factory=list)

    @property
    def final(self) -> CorefGraph:
        return self.graphs[-1]

    @property
    def iterations(self) -> int:
        return len(self.graphs)


def span_mask(n: int, max_span_len: int) -> np.ndarray:
    i, j = np.indices((n, n))
    return (j <= i) & (i - j < max_span_len)


def mentions_from_probs(probs: np.ndarray, threshold: float, max_span_len: int,
                        top_lambda: float | None = None, heads: bool = True) -> list[MentionSpan]:
    """Spans whose mention probability strictly exceeds ``threshold``.

    With ``heads`` the spans get heads and those left without a free token
    are dropped; otherwise every selected span is returned, sorted.
    """
    n = probs.shape[0]
    sel = span_mask(n, max_span_len) & (probs > threshold)
    ii, jj = np.nonzero(sel)
    if top_lambda is not None:
        cap = int(math.floor(top_lambda * n))
        if len(ii) > cap:
            order = np.argsort(-probs[ii, jj], kind="stable")[:cap]
            ii, jj = ii[order], jj[order]
    keys = list(zip(jj.tolist(), ii.tolist()))
    if not heads:
        return [MentionSpan(j, i) for j, i in sorted(keys)]
    return assign_heads(keys, drop_exhausted=True)


def choose_antecedents(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-row argmax slot; ties go to the closest antecedent, then to the null slot."""
    last = logits.shape[1] - 1
    z = np.where(mask, logits, -np.inf)
    # columns reordered as [latest candidate, ..., earliest candidate, null]
    rev = z[:, ::-1]
    return last - np.argmax(rev, axis=1)


def predict_graph(hidden: np.ndarray, iteration: int, cfg: RefinementConfig, params: EncoderParams,
                  fixed_spans: Sequence[MentionSpan] | None = None, coref: bool | None = None
                  ) -> CorefGraph:
    """Decode one output graph from hidden states.

    With ``fixed_spans`` the mention links are taken as given and only
    coreference links are predicted.  ``coref`` defaults to ``iteration >= 2``.
    """
    n = hidden.shape[0]
    if coref is None:
        coref = iteration >= 2
    if fixed_spans is None:
        probs = mention_scores(hidden, params).probs
        spans = mentions_from_probs(probs, cfg.tau, cfg.max_span_len, cfg.top_lambda)
    else:
        spans = list(fixed_spans)
    cells = np.zeros((n, n), dtype=np.int8)
    for s in spans:
        cells[s.end, s.start] = MENTION
    if coref and spans:
        cands = CandidateSet.from_spans(spans)
        dist = antecedent_scores(hidden, cands, params)
        slots = choose_antecedents(dist.logits, dist.mask)
        heads = cands.heads
        for k, slot in enumerate(slots.tolist()):
            if slot == 0:
                continue
            i, j = heads[k], heads[slot - 1]
            if cells[i, j] == 0:
                cells[i, j] = COREF
    return CorefGraph(cells, "output")


def refine_ids(ids, positions, params: EncoderParams, cfg: RefinementConfig,
               g0_in: CorefGraph | None = None, extra_input: np.ndarray | None = None,
               fixed_spans: Sequence[MentionSpan] | None = None, coref_from: int = 2,
               first: CorefGraph | None = None) -> RefinementTrace:
    """Refinement loop over an already encoded token sequence.

    ``first`` is an iteration-1 graph produced elsewhere (the detector of the
    two-stage strategy); the loop then starts at iteration 2 from it.
    """
    g_in = g0_in
    graphs: list[CorefGraph] = []
    diags = []
    stop = "max_iterations"
    if first is not None:
        graphs.append(first)
        diags.append({"iteration": 1, "mentions": first.count(MENTION), "coref_links": first.count(COREF)})
        g_in = output_to_input(first)
    for t in range(len(graphs) + 1, cfg.t_max + 1):
        out = encode(ids, positions, g_in, params, extra_input)
        g = predict_graph(out.hidden, t, cfg, params, fixed_spans, coref=t >= coref_from)
        graphs.append(g)
        diags.append({"iteration": t, "mentions": g.count(MENTION), "coref_links": g.count(COREF)})
        if len(graphs) > 1 and g == graphs[-2]:
            stop = "fixed_point"
            break
        g_in = output_to_input(g)
    return RefinementTrace(graphs, stop, diags)


def refine(doc: Document, params: EncoderParams, cfg: RefinementConfig) -> RefinementTrace:
    if params.vocab is None:
        raise ValueError("parameters carry no vocabulary")
    ids = params.vocab.encode(doc.tokens)
    return refine_ids(ids, np.arange(len(ids)), params, cfg)


# --------------------------------------------------------------------------
# optimisers


class Adam:
    def __init__(self, lr=2e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            tensors[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"t": np.array(self.t)}
        out.update({f"m/{k}": v for k, v in self.m.items()})
        out.update({f"v/{k}": v for k, v in self.v.items()})
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.t = int(arrays["t"])
        self.m = {k[2:]: v.astype(np.float64) for k, v in arrays.items() if k.startswith("m/")}
        self.v = {k[2:]: v.astype(np.float64) for k, v in arrays.items() if k.startswith("v/")}


class Momentum:
    """Heavy-ball gradient descent."""

    def __init__(self, lr=2e-3, momentum=0.9):
        self.lr, self.momentum = lr, momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, tensors, grads):
        for k, g in grads.items():
            vel = self.velocity.setdefault(k, np.zeros_like(g))
            vel *= self.momentum
            vel += g
            tensors[k] -= self.lr * vel

    def state_arrays(self):
        return {f"vel/{k}": v for k, v in self.velocity.items()}

    def load_state_arrays(self, arrays):
        self.velocity = {k[4:]: v.astype(np.float64) for k, v in arrays.items() if k.startswith("vel/")}


# --------------------------------------------------------------------------
# training


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainOptions:
    steps: int = 1000
    lr: float = 2e-3
    seed: int = 0
    optimizer: str = "adam"
    momentum: float = 0.9
    # probability that iteration t >= 2 sees the gold graph instead of the prediction
    teacher_forcing: float = 0.5
    mention_weight: float = 1.0
    coref_weight: float = 1.0
    clip_norm: float | None = None

    def make_optimizer(self):
        if self.optimizer == "adam":
            return Adam(self.lr)
        if self.optimizer == "momentum":
            return Momentum(self.lr, self.momentum)
        raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainSample:
    """One training sequence.

    ``gold_out`` is the target output graph.  ``fixed_spans`` (reduced
    coreference stage) freezes the mention set; the model then predicts
    coreference links only, from the first iteration.
    """

    doc_id: str
    ids: np.ndarray
    positions: np.ndarray
    gold_out: CorefGraph
    gold_clusters: ClusterSet
    extra_input: np.ndarray | None = None
    fixed_spans: tuple[MentionSpan, ...] | None = None

    @property
    def gold_in(self) -> CorefGraph:
        return output_to_input(self.gold_out)

    def initial_input(self) -> CorefGraph | None:
        if self.fixed_spans is None:
            return None
        n = len(self.ids)
        cells = np.zeros((n, n), dtype=np.int8)
        for s in self.fixed_spans:
            cells[s.end, s.start] = MENTION
        return output_to_input(CorefGraph(cells, "output"))


def make_sample(doc: Document, params: EncoderParams) -> TrainSample:
    gold = doc.gold or ClusterSet()
    return TrainSample(doc.doc_id, params.vocab.encode(doc.tokens), np.arange(len(doc)),
                       clusters_to_output(doc), gold)


@dataclass
class IterationResult:
    loss_m: float
    loss_c: float
    grads: dict[str, np.ndarray]
    prediction: CorefGraph


def iteration_step(params: EncoderParams, sample: TrainSample, g_in: CorefGraph | None,
                   in_spans: Sequence[MentionSpan], iteration: int, cfg: RefinementConfig,
                   opts: TrainOptions, mode: str = "joint") -> IterationResult:
    """Loss and gradients of one refinement iteration given its input graph.

    The coreference candidates are the mentions of the input graph (joint
    mode, iteration >= 2) or the sample's fixed spans (coref mode).
    """
    out = encode(sample.ids, sample.positions, g_in, params, sample.extra_input)
    H = out.hidden
    dH = np.zeros_like(H)
    head_grads: dict[str, np.ndarray] = {}
    loss_m = loss_c = 0.0
    if mode in ("joint", "mention"):
        ms = mention_scores(H, params)
        loss_m, dz = loss_mention(ms, sample.gold_out)
        d, g = mention_backward(dz * opts.mention_weight, H, params)
        dH += d
        head_grads.update(g)
        loss_m *= opts.mention_weight
    if mode == "coref":
        spans = list(sample.fixed_spans or ())
    elif mode == "joint" and iteration >= 2:
        spans = list(in_spans)
    else:
        spans = []
    if spans:
        cands = CandidateSet.from_spans(spans)
        dist = antecedent_scores(H, cands, params)
        loss_c, dlog = loss_coref(dist, sample.gold_clusters, cands)
        d, g = antecedent_backward(dlog * opts.coref_weight, H, dist, params)
        dH += d
        head_grads.update(g)
        loss_c *= opts.coref_weight
    grads = backprop(dH, out.cache, params)
    for k, v in head_grads.items():
        grads[k] = grads[k] + v
    coref = iteration >= 2 if mode == "joint" else mode == "coref"
    pred = predict_graph(H, iteration, cfg, params, sample.fixed_spans, coref=coref)
    return IterationResult(loss_m, loss_c, grads, pred)


@dataclass
class TrainResult:
    params: EncoderParams
    curve: list[dict]
    optimizer: object
    steps_done: int


def _order(n: int, seed: int, step: int) -> int:
    epoch, k = divmod(step, n)
    return int(np.random.default_rng([seed, epoch]).permutation(n)[k])


def train(corpus: Sequence[Document] | Sequence[TrainSample], params: EncoderParams,
          cfg: RefinementConfig, opts: TrainOptions, mode: str = "joint",
          start_step: int = 0, optimizer=None,
          on_iteration: Callable[[dict], None] | None = None,
          on_step: Callable[[int, EncoderParams, object], None] | None = None) -> TrainResult:
    """Train in place on ``params`` (a copy is not made).

    One step processes one document: every refinement iteration contributes
    an independent loss, gradients are summed over the iterations and a
    single optimizer update follows.  ``mode`` is ``"joint"`` (mentions then
    full graphs), ``"mention"`` (iteration 1 only, mention loss) or
    ``"coref"`` (iterations 2 and up over fixed candidate mentions,
    coreference loss only).
    """
    if mode not in ("joint", "mention", "coref"):
        raise ValueError(f"unknown training mode {mode!r}")
    if not corpus:
        raise ValueError("empty training corpus")
    samples = [s if isinstance(s, TrainSample) else make_sample(s, params) for s in corpus]
    if optimizer is None:
        optimizer = opts.make_optimizer()
    t_max = 1 if mode == "mention" else cfg.t_max
    # the coreference stage supplies iterations 2..t_max of the two-stage schedule
    t_first = 2 if mode == "coref" else 1
    if t_first > t_max:
        raise ValueError("the coreference stage needs t_max >= 2")
    curve = []
    for step in range(start_step, start_step + opts.steps):
        sample = samples[_order(len(samples), opts.seed, step)]
        rng = np.random.default_rng([opts.seed, step, 1])
        g_in = sample.initial_input()
        in_spans: list[MentionSpan] = []
        prev = None
        total = None
        lm_sum = lc_sum = 0.0
        records = []
        for t in range(t_first, t_max + 1):
            res = iteration_step(params, sample, g_in, in_spans, t, cfg, opts, mode)
            if not (math.isfinite(res.loss_m) and math.isfinite(res.loss_c)):
                raise TrainingDiverged(
                    f"non-finite loss at step {step}, doc {sample.doc_id}, iteration {t}: "
                    f"loss_m={res.loss_m}, loss_c={res.loss_c}")
            if total is None:
                total = res.grads
            else:
                for k, v in res.grads.items():
                    total[k] += v
            lm_sum += res.loss_m
            lc_sum += res.loss_c
            records.append({"step": step, "doc_id": sample.doc_id, "iteration": t,
                            "loss_m": res.loss_m, "loss_c": res.loss_c})
            if prev is not None and res.prediction == prev:
                break
            prev = res.prediction
            if rng.random() < opts.teacher_forcing:
                src = sample.gold_out
            else:
                src = res.prediction
            g_in = output_to_input(src)
            in_spans = decode_graph(src).spans
        t_stop = len(records)
        if opts.clip_norm is not None:
            norm = math.sqrt(sum(float(np.sum(v * v)) for v in total.values()))
            if not math.isfinite(norm):
                raise TrainingDiverged(f"non-finite gradient norm at step {step}")
            if norm > opts.clip_norm:
                for v in total.values():
                    v *= opts.clip_norm / norm
        optimizer.step(params.tensors, total)
        for r in records:
            r["t_stop"] = t_stop
            if on_iteration is not None:
                on_iteration(r)
        curve.append({"step": step, "doc_id": sample.doc_id, "loss_m": lm_sum, "loss_c": lc_sum,
                      "total": lm_sum + lc_sum, "t_stop": t_stop})
        if on_step is not None:
            on_step(step + 1, params, optimizer)
    return TrainResult(params, curve, optimizer, start_step + opts.steps)


def jsonl_logger(fh) -> Callable[[dict], None]:
    def write(record: dict):
        fh.write(json.dumps(record) + "\n")
    return write
