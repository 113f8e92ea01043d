"""The relation-aware encoder: attention with graph-dependent key and value
offsets, and a finite-difference check of the hand-written backward pass."""

import numpy as np

from graphcoref import (ClusterSet, CorefGraph, Document, EncoderConfig, RefinementConfig, TrainOptions, Vocab,
                        encode, init_params)
from graphcoref.encoder import relation_attention
from graphcoref.graph import decode_graph, output_to_input
from graphcoref.refine import iteration_step, make_sample

rng = np.random.default_rng(0)

# With all relation offsets zero the layer is ordinary scaled dot-product attention.
Q, K, V = (rng.normal(size=(5, 4)) for _ in range(3))
zero = np.zeros((5, 5, 4))
plain = np.exp(Q @ K.T / 2.0)
plain = (plain / plain.sum(1, keepdims=True)) @ V
print("zero offsets match plain attention:", np.allclose(relation_attention(Q, K, V, zero, zero), plain))

vocab = Vocab([f"w{k}" for k in range(20)])
cfg = EncoderConfig(layers=1, heads=2, d_model=8, d_ff=16, vocab=len(vocab), max_positions=16)
params = init_params(cfg, vocab, seed=1)
ids = rng.integers(2, len(vocab), 6)  # skip the reserved ids

# Same tokens, different input graphs: the hidden states move.
empty = encode(ids, np.arange(6), None, params).hidden
g = CorefGraph.from_triples(6, [(0, 0, 1), (3, 3, 1), (3, 0, 2)], kind="input")
linked = encode(ids, np.arange(6), g, params).hidden
print("hidden-state change from one coreference link:", float(np.abs(linked - empty).max()))

# One training iteration returns the mention and coreference losses with
# gradients for every tensor; compare a few entries to central differences.
doc = Document("toy", tuple(vocab.words[k] for k in ids), gold=ClusterSet([[(0, 1), (3, 3)]]))
sample = make_sample(doc, params)
g_in = output_to_input(sample.gold_out)
spans = decode_graph(sample.gold_out).spans


def step():
    return iteration_step(params, sample, g_in, spans, 2, RefinementConfig(), TrainOptions())


res = step()
print(f"loss: mention {res.loss_m:.4f}, coreference {res.loss_c:.4f}")
for name, idx in [("l0.wq", (0, 0)), ("l0.w1", (3, 5)), ("l0.rel_e", (2, 1)), ("mention_w", (1,))]:
    W = params.tensors[name]
    old = W[idx]
    W[idx] = old + 1e-5
    up = step()
    W[idx] = old - 1e-5
    down = step()
    W[idx] = old
    numeric = (up.loss_m + up.loss_c - down.loss_m - down.loss_c) / 2e-5
    print(f"{name}{idx}: analytic {res.grads[name][idx]: .6e}  numeric {numeric: .6e}")
