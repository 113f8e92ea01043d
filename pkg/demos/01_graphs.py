"""Clusters as graphs: encode a document's gold clusters, look at the matrix,
then decode it back."""

from graphcoref import SyntheticConfig, clusters_to_output, decode_clusters, gen_synthetic, output_to_input

doc = gen_synthetic(SyntheticConfig(n_docs=1, doc_len=(14, 16), nesting_prob=0.5), seed=3)[0]
print("tokens:", " ".join(doc.tokens))
for k, cluster in enumerate(doc.gold):
    print(f"entity {k}:", ["(%d,%d)" % (s.start, s.end) for s in cluster])

# Output encoding: 1 marks a span (row = end, column = start),
# 2 links a mention's head to the closest earlier head in its cluster.
out = clusters_to_output(doc)
print("\noutput graph")
print(out.to_text())

# The input encoding is what the next refinement step conditions on.
inp = output_to_input(out)
print("input graph cells per code:", {c: inp.count(c) for c in (1, 2)})

back = decode_clusters(out)
print("\ndecoded clusters equal gold:", back == doc.gold.non_singleton())

# Round trip over a larger nested corpus.
docs = gen_synthetic(SyntheticConfig(n_docs=300, doc_len=(50, 80), nesting_prob=0.5, mention_len=(1, 4)), seed=1)
bad = sum(decode_clusters(clusters_to_output(d)) != d.gold.non_singleton() for d in docs)
print(f"{len(docs)} documents, {bad} round-trip failures")
