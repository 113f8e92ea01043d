"""Scoring two systems with MUC, B-cubed and CEAF-phi4, then asking whether
the gap survives paired bootstrap resampling."""

import numpy as np

from graphcoref import ClusterSet, SyntheticConfig, gen_synthetic, paired_bootstrap, score_corpus
from graphcoref.metrics import format_table

key = ClusterSet([[(0, 0), (1, 1), (2, 2)]])
response = ClusterSet([[(0, 0), (1, 1)], [(2, 2)]])
print(format_table({"split entity": score_corpus([key], [response])}))

docs = gen_synthetic(SyntheticConfig(n_docs=80, doc_len=(40, 60), n_entities=(2, 4)), seed=4)
keys = [d.gold for d in docs]
rng = np.random.default_rng(0)


def damage(cs: ClusterSet, keep: float) -> ClusterSet:
    # drop each mention independently
    kept = ([m for m in c if rng.random() < keep] for c in cs)
    return ClusterSet([c for c in kept if c])


strong = [damage(k, 0.9) for k in keys]
weak = [damage(k, 0.75) for k in keys]
print()
print(format_table({"strong": score_corpus(keys, strong), "weak": score_corpus(keys, weak)}))

p = paired_bootstrap(keys, strong, weak, iterations=2000, seed=0)
print("\np-values, strong vs weak:", {k: round(v, 4) for k, v in p.items()})
p = paired_bootstrap(keys, strong, strong, iterations=2000, seed=0)
print("p-values, strong vs itself:", {k: round(v, 4) for k, v in p.items()})
