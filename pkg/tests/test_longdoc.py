import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphcoref import (COREF, ClusterSet, CorefGraph, Document, EncoderConfig, MentionSpan, RefinementConfig,
                        SyntheticConfig, Vocab, decode_clusters, decode_windows, detect_candidates, encode,
                        gen_synthetic, init_params, plan_windows, reduce_document, refine, refine_reduced,
                        truncate)
from graphcoref.graph import decode_graph
from graphcoref.longdoc import (decode_windows_detailed, fit_candidates, reduced_length, reduced_sample,
                                refine_reduced_detailed,
                                segment_documents)
from graphcoref.objective import mention_scores
from graphcoref.refine import predict_graph, span_mask


@pytest.fixture(scope="module")
def docs():
    return gen_synthetic(SyntheticConfig(n_docs=3, doc_len=(30, 40), nesting_prob=0.3, mention_len=(1, 3)), 5)


def _model(docs, seed=0, mention_b=None, d=8):
    vocab = Vocab.from_documents(docs)
    cfg = EncoderConfig(layers=1, heads=2, d_model=d, d_ff=16, vocab=len(vocab), max_positions=128)
    p = init_params(cfg, vocab, seed)
    if mention_b is not None:
        p.tensors["mention_b"][...] = mention_b
    return p


def test_window_examples():
    assert plan_windows(8, 4).segments == ((0, 4), (2, 6), (4, 8))
    assert plan_windows(3, 4).segments == ((0, 3),)
    assert plan_windows(4, 4).segments == ((0, 4),)
    assert plan_windows(9, 4).segments == ((0, 4), (2, 6), (4, 8), (6, 9))
    assert plan_windows(8, 4).overlap(1) == (2, 4)
    for bad in (3, 0, -2):
        with pytest.raises(ValueError):
            plan_windows(8, bad)
    with pytest.raises(ValueError):
        plan_windows(0, 4)


@given(st.integers(1, 300), st.integers(1, 40).map(lambda h: 2 * h))
def test_window_plan_invariants(n, K):
    segs = plan_windows(n, K).segments
    assert segs[0][0] == 0 and segs[-1][1] == n
    assert all(b - a <= K for a, b in segs)
    for (a0, b0), (a1, b1) in zip(segs, segs[1:]):
        assert a1 == a0 + K // 2
        assert b0 - a1 == min(K // 2, n - a1)
    if n <= K:
        assert len(segs) == 1


def test_short_documents_decode_like_single_pass(docs):
    cfg = RefinementConfig(t_max=3, max_span_len=3)
    for seed in range(3):
        p = _model(docs, seed, mention_b=2.0)
        for doc in docs:
            assert decode_windows(doc, p, cfg, 64) == refine(doc, p, cfg).final


def test_overlap_mentions_seed_next_segment(docs):
    p = _model(docs, 1, mention_b=6.0)
    cfg = RefinementConfig(t_max=2, max_span_len=2)
    doc = docs[0]
    res = decode_windows_detailed(doc, p, cfg, 16)
    assert len(res.plan.segments) > 2
    assert res.seeds[0] is None
    for s in range(1, len(res.plan.segments)):
        a, _ = res.plan.segments[s]
        oa, ob = res.plan.overlap(s)
        prev = res.traces[s - 1].final
        pa = res.plan.segments[s - 1][0]
        spans = [sp for sp in decode_graph(prev).spans if sp.start + pa >= oa and sp.end + pa < ob]
        assert spans
        for sp in spans:
            # the last token of an overlap mention links to a head inside the span
            i, j = sp.end + pa - a, sp.start + pa - a
            assert np.any(res.seeds[s].cells[i, j: i + 1] != 0)
        seed_mentions = res.seeds[s].cells[: ob - oa, : ob - oa]
        assert np.count_nonzero(seed_mentions) > 0
        assert np.all(res.seeds[s].cells[ob - oa:, :] == 0)


def test_windowed_coref_links_stay_inside_segments(docs):
    p = _model(docs, 2, mention_b=4.0)
    p.tensors["coref_w"][...] = 1.0
    cfg = RefinementConfig(t_max=3, max_span_len=2)
    res = decode_windows_detailed(docs[1], p, cfg, 12)
    ii, jj = np.nonzero(res.graph.cells == COREF)
    assert len(ii) > 0
    for i, j in zip(ii, jj):
        assert any(a <= j and i < b for a, b in res.plan.segments)


def test_truncate_examples():
    doc = Document("d", tuple("abcdefgh"), (0, 3, 6), ClusterSet([[(0, 1), (3, 4)], [(5, 6), (7, 7)]]))
    assert truncate(doc, 8) is doc
    diags = []
    t = truncate(doc, 4, diags)
    assert t.tokens == tuple("abcd")
    assert t.sentence_bounds == (0, 3)
    assert t.gold == ClusterSet([[(0, 1)]])
    assert sorted(diags) == [f"d: span {s} outside window [0, 4)" for s in ((3, 4), (5, 6), (7, 7))]
    long = Document("l", tuple("ab" * 6))
    assert len(truncate(long, 6)) == 6


def test_segment_documents(docs):
    doc = docs[0]
    assert segment_documents(doc, 64) == [doc]
    segs = segment_documents(doc, 16)
    assert [s.doc_id for s in segs] == [f"{doc.doc_id}#w{k}" for k in range(len(segs))]
    for seg, (a, b) in zip(segs, plan_windows(len(doc), 16).segments):
        assert seg.tokens == doc.tokens[a:b]
        for s in seg.gold.mentions():
            assert doc.tokens[s.start + a: s.end + a + 1] == seg.tokens[s.start: s.end + 1]


def test_reduce_examples():
    doc = Document("r", tuple(f"t{k}" for k in range(8)))
    rd = reduce_document(doc, [MentionSpan(4, 5), MentionSpan(0, 1)])
    assert rd.tokens == ("t0", "t1", Vocab.SEP, "t4", "t5")
    assert rd.positions.tolist() == [0, 1, -1, 4, 5]
    assert [s.key for s in rd.spans] == [(0, 1), (3, 4)]
    nested = reduce_document(doc, [MentionSpan(2, 5), MentionSpan(2, 3)])
    assert nested.tokens == ("t2", "t3", Vocab.SEP, "t2", "t3", "t4", "t5")
    assert nested.positions.tolist() == [2, 3, -1, 2, 3, 4, 5]
    empty = reduce_document(doc, [])
    assert len(empty) == 0 and empty.context.shape == (0, 0)
    with pytest.raises(ValueError):
        reduce_document(doc, [MentionSpan(7, 8)])


def test_reduced_maps_and_context():
    doc = Document("r", tuple(f"t{k}" for k in range(10)))
    hidden = np.arange(20.0).reshape(10, 2)
    cands = [MentionSpan(1, 3), MentionSpan(2, 2), MentionSpan(6, 6), MentionSpan(8, 9)]
    rd = reduce_document(doc, cands, hidden)
    for s in cands:
        assert rd.to_original(rd.to_reduced(s)) == s
        red = rd.to_reduced(s)
        assert rd.positions[red.start: red.end + 1].tolist() == list(range(s.start, s.end + 1))
    sep = rd.positions < 0
    assert np.all(rd.context[sep] == 0)
    assert np.array_equal(rd.context[~sep], hidden[rd.positions[~sep]])
    assert rd.encoder_positions(5).tolist() == [1, 2, 3, 5, 2, 5, 4, 5, 4, 4]
    g = rd.initial_output()
    assert sorted(decode_graph(g).spans) == sorted(rd.spans)


def test_candidates_grow_with_margin(docs):
    p = _model(docs, 3)
    cfg = RefinementConfig(max_span_len=4)
    for doc in docs:
        prev = set()
        for margin in (0.0, 0.01, 0.05, 0.2, 0.4):
            cur = {s.key for s in detect_candidates(doc, p, cfg, 64, margin)}
            assert prev <= cur
            prev = cur


def test_zero_margin_matches_first_iteration(docs):
    p = _model(docs, 4)
    cfg = RefinementConfig(max_span_len=4)
    doc = docs[0]
    H = encode(p.vocab.encode(doc.tokens), np.arange(len(doc)), None, p).hidden
    g1 = predict_graph(H, 1, cfg, p)
    cands = detect_candidates(doc, p, cfg, 64, 0.0)
    raw = np.argwhere(np.tril(mention_scores(H, p).probs > cfg.tau) & span_mask(len(doc), cfg.max_span_len))
    assert sorted(s.key for s in cands) == sorted((int(j), int(i)) for i, j in raw)
    # predicted mentions are the candidates that could be given a head
    assert {s.key for s in decode_graph(g1).spans} <= {s.key for s in cands}


def test_reduced_without_candidates_is_empty(docs):
    det = _model(docs, 0, mention_b=-20.0)
    cor = _model(docs, 1)
    g = refine_reduced(docs[0], det, cor, RefinementConfig(), 64)
    assert g == CorefGraph.empty(len(docs[0]))


@pytest.mark.parametrize("seed", range(4))
def test_reduced_mentions_are_candidates(docs, seed):
    det = _model(docs, seed, mention_b=1.0)
    cor = _model(docs, seed + 10)
    cor.tensors["coref_w"][...] = 0.5
    cfg = RefinementConfig(t_max=3, max_span_len=3)
    for doc in docs:
        res = refine_reduced_detailed(doc, det, cor, cfg, 16)
        cands = {s.key for s in res.candidates}
        assert cands
        found = decode_clusters(res.graph).mentions()
        assert {s.key for s in found} <= cands
        # every surviving mention corefers with something
        assert all(len(c) > 1 for c in decode_clusters(res.graph))


def test_reduced_model_dimensions_must_agree(docs):
    det = _model(docs, 0, mention_b=3.0, d=8)
    cor = _model(docs, 0, d=4)
    with pytest.raises(ValueError, match="d_model"):
        refine_reduced(docs[0], det, cor, RefinementConfig(max_span_len=2), 64)


def test_reduced_sample_targets_gold(docs):
    det = _model(docs, 0)
    doc = docs[2]
    hidden = np.zeros((len(doc), 8))
    extra = [MentionSpan(0, 0)]
    sample = reduced_sample(doc, extra, hidden, det)
    assert decode_clusters(sample.gold_out).mentions() == sample.gold_clusters.mentions()
    assert len(sample.fixed_spans) == len({s.key for s in doc.gold.mentions()} | {(0, 0)})
    assert sample.extra_input.shape == (len(sample.ids), 8)


def test_fit_candidates_keeps_most_probable():
    probs = np.zeros((10, 10))
    cands = [MentionSpan(0, 1), MentionSpan(3, 3), MentionSpan(5, 8)]
    probs[1, 0], probs[3, 3], probs[8, 5] = 0.9, 0.6, 0.8
    assert fit_candidates(cands, probs, 100) == cands
    # lengths 2, 1 and 4 plus separators
    assert fit_candidates(cands, probs, 7) == [MentionSpan(0, 1), MentionSpan(5, 8)]
    diags = []
    assert fit_candidates(cands, probs, 4, diagnostics=diags) == [MentionSpan(0, 1), MentionSpan(3, 3)]
    assert diags == ["kept 2 of 3 candidates to fit 4 tokens"]
    assert fit_candidates(cands, probs, 4, keep=[MentionSpan(5, 8)]) == []
    assert reduced_length(cands) == 9
