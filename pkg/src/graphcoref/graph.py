"""Token-level coreference graphs.

A graph over ``n`` tokens is an ``n x n`` integer matrix whose lower triangle
(``j <= i``) holds a relation code per token pair:

    0  no link
    1  mention link
    2  coreference link

Two encodings exist.  The *output* encoding is what the model predicts: one
mention link per span from its last token to its first token, stored at
``(end, start)``, and one coreference link per non-first mention to the head
of its closest preceding cluster-mate.  The *input* encoding is what the
encoder attends over: every mention token links to its head (the head links
to itself on the diagonal) and every pair of heads in a cluster is linked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import ClusterSet, Document, MentionSpan

NO_LINK, MENTION, COREF = 0, 1, 2
RELATION_CODES = (NO_LINK, MENTION, COREF)

__all__ = [
    "NO_LINK",
    "MENTION",
    "COREF",
    "CorefGraph",
    "HeadExhaustionError",
    "UnionFind",
    "assign_heads",
    "clusters_to_output",
    "output_to_input",
    "decode_clusters",
    "decode_graph",
    "validate",
]


class HeadExhaustionError(ValueError):
    pass


class UnionFind:
    """Disjoint sets with path halving and union by size."""

    def __init__(self, items: Iterable = ()):
        self._parent = {}
        self._size = {}
        for x in items:
            self.add(x)

    def add(self, x):
        if x not in self._parent:
            self._parent[x] = x
            self._size[x] = 1

    def __contains__(self, x):
        return x in self._parent

    def find(self, x):
        parent = self._parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]
        return ra

    def groups(self) -> list[list]:
        out: dict = {}
        for x in self._parent:
            out.setdefault(self.find(x), []).append(x)
        return [sorted(g) for g in out.values()]


@dataclass(frozen=True, eq=False)
class CorefGraph:
    """Relation matrix plus its encoding kind (``"input"`` or ``"output"``)."""

    cells: np.ndarray
    kind: str = "output"

    def __post_init__(self):
        if self.kind not in ("input", "output"):
            raise ValueError(f"unknown graph kind {self.kind!r}")
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
            raise ValueError(f"graph matrix must be square, got shape {cells.shape}")
        cells = cells.astype(np.int8, copy=True)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls, n: int, kind: str = "output") -> "CorefGraph":
        return cls(np.zeros((n, n), dtype=np.int8), kind)

    @classmethod
    def from_triples(cls, n: int, triples: Iterable[tuple[int, int, int]], kind: str = "output"):
        cells = np.zeros((n, n), dtype=np.int8)
        for i, j, code in triples:
            cells[i, j] = code
        return cls(cells, kind)

    @classmethod
    def from_text(cls, text: str, kind: str = "output") -> "CorefGraph":
        rows = [r.split() for r in text.strip().splitlines() if r.strip()]
        return cls(np.array(rows, dtype=np.int64), kind)

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    def __getitem__(self, ij):
        return int(self.cells[ij])

    def __eq__(self, other):
        if not isinstance(other, CorefGraph):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.cells, other.cells)

    def __repr__(self):
        return f"CorefGraph(n={self.n}, kind={self.kind!r}, links={self.triples()})"

    def triples(self) -> list[tuple[int, int, int]]:
        ii, jj = np.nonzero(self.cells)
        return [(int(i), int(j), int(self.cells[i, j])) for i, j in zip(ii, jj)]

    def to_text(self) -> str:
        """Dense matrix dump, one row per line."""
        return "\n".join(" ".join(str(int(v)) for v in row) for row in self.cells) + "\n"

    def symmetric_codes(self) -> np.ndarray:
        """Full matrix with the lower triangle mirrored into the upper one."""
        low = np.tril(self.cells)
        return low + np.tril(low, -1).T

    def count(self, code: int) -> int:
        return int(np.count_nonzero(np.tril(self.cells) == code))

    def subgraph(self, start: int, stop: int) -> "CorefGraph":
        return CorefGraph(self.cells[start:stop, start:stop], self.kind)


def assign_heads(spans: Sequence[MentionSpan | tuple[int, int]], drop_exhausted: bool = False
                 ) -> list[MentionSpan]:
    """Give every span the first of its tokens not already heading another span.

    Spans are processed by ``(start, end)``; the result is in that order.
    With ``drop_exhausted`` a span with no free token is left out instead of
    raising :class:`HeadExhaustionError`.
    """
    keys = sorted(s.key if isinstance(s, MentionSpan) else (int(s[0]), int(s[1])) for s in spans)
    if any(a == b for a, b in zip(keys, keys[1:])):
        raise ValueError("duplicate span in head assignment")
    used: set[int] = set()
    out = []
    for start, end in keys:
        if not 0 <= start <= end:
            raise ValueError(f"invalid span ({start}, {end})")
        head = start
        while head <= end and head in used:
            head += 1
        if head > end:
            if drop_exhausted:
                continue
            raise HeadExhaustionError(f"head exhaustion: every token of {(start, end)} already heads a span")
        used.add(head)
        out.append(MentionSpan(start, end, head))
    return out


def _chains(clusters: ClusterSet, heads: dict[tuple[int, int], int]) -> list[list[int]]:
    return [sorted(heads[s.key] for s in c) for c in clusters]


def clusters_to_output(doc: Document | ClusterSet, n: int | None = None, strict: bool = True) -> CorefGraph:
    """Gold clusters to the minimal output encoding.

    Some cluster sets have no exact encoding: a span whose tokens all head
    other spans, or a coreference link landing on a mention cell.  Strict
    mode raises; otherwise such spans are dropped and each head links to the
    closest earlier head of every part of its chain it is not yet joined to,
    skipping occupied cells.
    """
    if isinstance(doc, Document):
        clusters, n = (doc.gold or ClusterSet()), len(doc)
    else:
        clusters = doc
        if n is None:
            raise ValueError("n is required when passing a ClusterSet")
    spans = assign_heads(clusters.mentions(), drop_exhausted=not strict)
    heads = {s.key: s.head for s in spans}
    if not strict:
        clusters = ClusterSet(kept for c in clusters if (kept := [s for s in c if s.key in heads]))
    if len(set(heads.values())) != len(heads):
        raise AssertionError("head collision after head assignment")
    cells = np.zeros((n, n), dtype=np.int8)
    for s in spans:
        cells[s.end, s.start] = MENTION
    for chain in _chains(clusters, heads):
        if strict:
            for prev, cur in zip(chain, chain[1:]):
                if cells[cur, prev] == MENTION:
                    raise ValueError(f"mention link and coreference link share cell ({cur}, {prev})")
                cells[cur, prev] = COREF
            continue
        uf = UnionFind(chain)
        for k, cur in enumerate(chain):
            for prev in reversed(chain[:k]):
                if cells[cur, prev] != MENTION and uf.find(prev) != uf.find(cur):
                    cells[cur, prev] = COREF
                    uf.union(prev, cur)
    return CorefGraph(cells, "output")


@dataclass
class DecodedGraph:
    """Mentions (with heads), all clusters including singletons, stray links."""

    spans: list[MentionSpan]
    clusters: list[list[MentionSpan]]
    stray_links: list[tuple[int, int]]
    dropped_spans: list[tuple[int, int]]

    def cluster_set(self, keep_singletons: bool = False) -> ClusterSet:
        return ClusterSet(c for c in self.clusters if keep_singletons or len(c) > 1)


def decode_graph(g: CorefGraph) -> DecodedGraph:
    """Read mentions and coreference components out of an output graph."""
    if g.kind != "output":
        raise ValueError("decode_graph expects an output-kind graph")
    low = np.tril(g.cells)
    ii, jj = np.nonzero(low == MENTION)
    raw = [MentionSpan(int(j), int(i)) for i, j in zip(ii, jj)]
    spans = assign_heads(raw, drop_exhausted=True)
    kept = {s.key for s in spans}
    dropped = sorted(s.key for s in raw if s.key not in kept)
    by_head = {s.head: s for s in spans}
    uf = UnionFind(by_head)
    stray = []
    ci, cj = np.nonzero(low == COREF)
    for i, j in zip(ci.tolist(), cj.tolist()):
        if i in by_head and j in by_head and i != j:
            uf.union(i, j)
        else:
            stray.append((i, j))
    clusters = [[by_head[h] for h in grp] for grp in uf.groups()]
    clusters.sort(key=lambda c: min(c))
    return DecodedGraph(spans, clusters, stray, dropped)


def decode_clusters(g: CorefGraph, diagnostics: list[str] | None = None) -> ClusterSet:
    """Group mentions connected by coreference links; singletons are dropped.

    Coreference links whose endpoints are not mention heads are ignored and,
    if ``diagnostics`` is given, reported there.
    """
    dec = decode_graph(g)
    if diagnostics is not None:
        diagnostics.extend(f"ignored stray coreference link {c}" for c in dec.stray_links)
        diagnostics.extend(f"dropped span {s}: head exhaustion" for s in dec.dropped_spans)
    return dec.cluster_set()


def output_to_input(g: CorefGraph, spans: Sequence[MentionSpan] | None = None) -> CorefGraph:
    """Expand an output graph into the dense input encoding.

    ``spans`` may carry precomputed heads; it must list exactly the mentions
    of ``g``.
    """
    dec = decode_graph(g)
    if spans is not None:
        given = {s.key for s in spans}
        if given != {s.key for s in dec.spans}:
            raise ValueError("span list is inconsistent with the graph's mention links")
        if all(s.head is not None for s in spans):
            head_of = {s.key: s.head for s in spans}
            dec.spans = [MentionSpan(s.start, s.end, head_of[s.key]) for s in dec.spans]
            by_key = {s.key: s for s in dec.spans}
            dec.clusters = [[by_key[s.key] for s in c] for c in dec.clusters]
    n = g.n
    cells = np.zeros((n, n), dtype=np.int8)
    if dec.spans:
        starts = np.array([s.start for s in dec.spans])
        lengths = np.array([s.end - s.start + 1 for s in dec.spans])
        heads = np.repeat([s.head for s in dec.spans], lengths)
        offsets = np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths)
        tok = np.repeat(starts, lengths) + offsets
        cells[np.maximum(tok, heads), np.minimum(tok, heads)] = MENTION
    if dec.clusters:
        label = np.full(n, -1)
        for k, cluster in enumerate(dec.clusters):
            label[[s.head for s in cluster]] = k
        same = (label[:, None] == label[None, :]) & (label[:, None] >= 0)
        cells[np.tril(same, -1)] = COREF
    return CorefGraph(cells, "input")


def input_from_clusters(clusters: ClusterSet, n: int) -> CorefGraph:
    """Input encoding straight from clusters (singletons give mention links only)."""
    return output_to_input(clusters_to_output(clusters, n))


def validate(g: CorefGraph) -> list[str]:
    """Structural diagnostics; an empty list means the graph is well formed."""
    out = []
    cells = g.cells
    n = g.n
    iu, ju = np.nonzero(np.triu(cells, 1))
    out += [f"upper-triangle write at ({i}, {j})" for i, j in zip(iu.tolist(), ju.tolist())]
    bad = np.nonzero(~np.isin(cells, RELATION_CODES))
    out += [f"invalid code {int(cells[i, j])} at ({i}, {j})" for i, j in zip(*map(np.ndarray.tolist, bad))]
    low = np.tril(np.where(np.isin(cells, RELATION_CODES), cells, 0))
    if g.kind == "input":
        heads = {i for i in range(n) if low[i, i] == MENTION}
        mi, mj = np.nonzero(np.tril(low, -1) == MENTION)
        for i, j in zip(mi.tolist(), mj.tolist()):
            if i not in heads and j not in heads:
                out.append(f"dangling mention link at ({i}, {j})")
        ci, cj = np.nonzero(low == COREF)
        for i, j in zip(ci.tolist(), cj.tolist()):
            if i not in heads or j not in heads:
                out.append(f"coreference link between non-heads at ({i}, {j})")
    else:
        d = np.diag(low)
        out += [f"diagonal code {int(d[i])} at ({i}, {i})" for i in np.nonzero(d == COREF)[0].tolist()]
        dec = decode_graph(CorefGraph(low, "output"))
        out += [f"dangling coreference link at {c}" for c in dec.stray_links]
        out += [f"mention {s} cannot be given a head" for s in dec.dropped_spans]
    return out
