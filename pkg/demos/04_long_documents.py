"""Three ways to handle documents longer than the encoder's window: cut them,
slide overlapping windows, or keep only candidate mentions."""

import time

from graphcoref import (EncoderConfig, RefinementConfig, SyntheticConfig, TrainOptions, Vocab, decode_clusters,
                        decode_windows, detect_candidates, gen_synthetic, init_params, plan_windows, reduce_document,
                        refine_reduced, score_corpus, train, train_reduced, truncate)
from graphcoref.longdoc import segment_documents

docs = gen_synthetic(SyntheticConfig(n_docs=16, doc_len=(90, 120), n_entities=(2, 3), mention_len=(1, 2),
                                     min_gap=3), seed=2)
K = 32
doc = docs[0]
print(f"document of {doc.n} tokens, window K={K}")

plan = plan_windows(doc.n, K)
print("overlapping windows [start, end):", plan.segments)

notes: list[str] = []
short = truncate(doc, K, diagnostics=notes)
print(f"truncated to {short.n} tokens; {len(notes)} gold spans lost")

vocab = Vocab.from_documents(docs)
ecfg = EncoderConfig(layers=2, heads=2, d_model=32, d_ff=64, vocab=len(vocab), max_positions=128)
rcfg = RefinementConfig(t_max=3, max_span_len=2)

# Windowed model: one joint model trained on the overlapping segments.
t0 = time.perf_counter()
segments = [s for d in docs for s in segment_documents(d, K)]
windowed = train(segments, init_params(ecfg, vocab, seed=0), rcfg,
                 TrainOptions(steps=800, mention_weight=50.0)).params
print(f"\nwindowed model: {len(segments)} segments, {time.perf_counter() - t0:.1f}s")

# Reduced pipeline: a mention detector on windows, then a coreference model
# on the concatenated candidate mentions.
t0 = time.perf_counter()
detector, coref = init_params(ecfg, vocab, seed=1), init_params(ecfg, vocab, seed=2)
train_reduced(docs, detector, coref, rcfg, TrainOptions(steps=600), TrainOptions(steps=600), K=K)
print(f"reduced pipeline: {time.perf_counter() - t0:.1f}s")

cands = detect_candidates(doc, detector, rcfg, K)
gold = {m.key for m in doc.gold.mentions()}
print(f"{len(cands)} candidates, recall {len(gold & {c.key for c in cands}) / len(gold):.2f}")
red = reduce_document(doc, cands)
print(f"reduced document: {len(red.tokens)} tokens instead of {doc.n}")

keys = [d.gold for d in docs]
for name, decode in [
    ("overlapping windows", lambda d: decode_windows(d, windowed, rcfg, K)),
    ("reduced document", lambda d: refine_reduced(d, detector, coref, rcfg, K)),
]:
    rep = score_corpus(keys, [decode_clusters(decode(d)) for d in docs])
    print(f"{name:>20}: training-set Avg F1 {rep.avg_f1:.3f}")
