"""Documents, the CoNLL-2012 coreference format, sub-token remapping and
synthetic corpora.

Spans are inclusive ``(start, end)`` token index pairs.  A mention's head is
not part of its identity: two spans with equal boundaries compare equal
whatever heads they carry.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "MentionSpan",
    "ClusterSet",
    "Document",
    "TokenSplitMap",
    "ConllParseError",
    "SyntheticConfig",
    "parse_conll",
    "write_conll",
    "remap_spans",
    "chunk_splitter",
    "gen_synthetic",
    "read_jsonl",
    "write_jsonl",
    "doc_to_json",
    "doc_from_json",
]


class ConllParseError(ValueError):
    """Malformed CoNLL input.  ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True, order=True)
class MentionSpan:
    start: int
    end: int
    head: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"invalid span ({self.start}, {self.end})")
        if self.head is not None and not self.start <= self.head <= self.end:
            raise ValueError(f"head {self.head} outside span ({self.start}, {self.end})")

    @property
    def key(self) -> tuple[int, int]:
        return (self.start, self.end)

    def __len__(self):
        return self.end - self.start + 1

    def __repr__(self):
        if self.head is None:
            return f"({self.start},{self.end})"
        return f"({self.start},{self.end};h={self.head})"


class ClusterSet:
    """A partition of a set of mentions into entities.

    Equality ignores cluster order and span heads.
    """

    def __init__(self, clusters: Iterable[Iterable[MentionSpan | tuple[int, int]]] = ()):
        out = []
        seen = set()
        for cluster in clusters:
            spans = frozenset(s if isinstance(s, MentionSpan) else MentionSpan(*s) for s in cluster)
            if not spans:
                raise ValueError("empty cluster")
            for s in spans:
                if s.key in seen:
                    raise ValueError(f"span {s.key} occurs in more than one cluster")
                seen.add(s.key)
            out.append(spans)
        # order by first mention so entity ids are stable on output
        out.sort(key=lambda c: min(c))
        self.clusters: list[frozenset[MentionSpan]] = out

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    def __eq__(self, other):
        if not isinstance(other, ClusterSet):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())

    def __repr__(self):
        return f"ClusterSet({self.as_lists()})"

    def canonical(self) -> frozenset[frozenset[tuple[int, int]]]:
        return frozenset(frozenset(s.key for s in c) for c in self.clusters)

    def as_lists(self) -> list[list[list[int]]]:
        """Sorted plain-list form, ``[[[start, end], ...], ...]``."""
        return [[[s.start, s.end] for s in sorted(c)] for c in self.clusters]

    def mentions(self) -> list[MentionSpan]:
        return sorted(s for c in self.clusters for s in c)

    def non_singleton(self) -> "ClusterSet":
        return ClusterSet(c for c in self.clusters if len(c) > 1)

    def cluster_of(self) -> dict[tuple[int, int], int]:
        return {s.key: k for k, c in enumerate(self.clusters) for s in c}

    def without_crossing(self) -> tuple["ClusterSet", list[tuple[int, int]]]:
        """Drop spans that cross an earlier span of their own cluster.

        Such clusters cannot be written as CoNLL brackets.  Spans are visited
        by start, longer first; returns the cleaned set and the dropped keys.
        """
        out, dropped = [], []
        for c in self.clusters:
            kept: list[MentionSpan] = []
            for s in sorted(c, key=lambda m: (m.start, -m.end)):
                if any(k.start < s.start <= k.end < s.end or s.start < k.start <= s.end < k.end for k in kept):
                    dropped.append(s.key)
                else:
                    kept.append(s)
            out.append(kept)
        return ClusterSet(out), sorted(dropped)

    def map_spans(self, fn: Callable[[MentionSpan], MentionSpan | None]) -> "ClusterSet":
        """Apply ``fn`` to every span; spans mapped to ``None`` are dropped."""
        out = []
        for c in self.clusters:
            mapped = [m for m in (fn(s) for s in c) if m is not None]
            if mapped:
                out.append(mapped)
        return ClusterSet(out)


@dataclass(frozen=True)
class Document:
    doc_id: str
    tokens: tuple[str, ...]
    sentence_bounds: tuple[int, ...] = (0,)
    gold: ClusterSet | None = None
    # CoNLL columns between the word and the coreference column, kept verbatim
    extra_columns: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "sentence_bounds", tuple(self.sentence_bounds))
        n = len(self.tokens)
        if n < 1:
            raise ValueError(f"document {self.doc_id!r} has no tokens")
        b = self.sentence_bounds
        if not b or b[0] != 0 or any(x >= y for x, y in zip(b, b[1:])) or b[-1] >= n:
            raise ValueError(f"document {self.doc_id!r}: bad sentence bounds {b}")
        if self.gold is not None:
            for s in self.gold.mentions():
                if s.end >= n:
                    raise ValueError(f"document {self.doc_id!r}: span {s.key} out of range")
        if self.extra_columns is not None and len(self.extra_columns) != n:
            raise ValueError("extra_columns must have one entry per token")

    def __len__(self):
        return len(self.tokens)

    @property
    def n(self) -> int:
        return len(self.tokens)

    def with_gold(self, gold: ClusterSet | None) -> "Document":
        return replace(self, gold=gold)


# --------------------------------------------------------------------------
# CoNLL-2012

_BEGIN_RE = re.compile(r"^#begin document\s*(.*)$")
_HEADER_RE = re.compile(r"^\((.*)\);\s*part\s+(\d+)$")
_ITEM_RE = re.compile(r"^(\()?(\d+)(\))?$")


def _parse_coref_field(value: str, lineno: int) -> list[tuple[str, int]]:
    if value == "-":
        return []
    items = []
    for part in value.split("|"):
        m = _ITEM_RE.match(part)
        if not m or not (m.group(1) or m.group(3)):
            raise ConllParseError(f"bad coreference field {value!r}", lineno)
        opens, closes = bool(m.group(1)), bool(m.group(3))
        kind = "single" if opens and closes else ("open" if opens else "close")
        items.append((kind, int(m.group(2))))
    return items


def parse_conll(text: str) -> list[Document]:
    """Parse CoNLL-2012 coreference text into documents.

    Token lines hold either the full skeleton (``doc part index word ...
    coref``, five or more columns) or the short form ``word coref``.  Blank
    lines separate sentences.
    """
    docs: list[Document] = []
    current = None
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        m = _BEGIN_RE.match(line)
        if m:
            if current is not None:
                raise ConllParseError(
                    f"document {current['doc_id']!r} not closed before new #begin", lineno)
            current = dict(doc_id=m.group(1).strip(), tokens=[], extra=[], bounds=[0],
                           stacks={}, spans={}, begin=lineno, has_extra=False)
            continue
        if line.startswith("#end document"):
            if current is None:
                raise ConllParseError("#end document without #begin", lineno)
            docs.append(_finish_document(current, lineno))
            current = None
            continue
        if not line.strip():
            if current is not None and current["tokens"] and current["bounds"][-1] != len(current["tokens"]):
                current["bounds"].append(len(current["tokens"]))
            continue
        if line.startswith("#"):
            continue
        if current is None:
            raise ConllParseError("token line outside a document", lineno)
        cols = line.split()
        if len(cols) >= 5:
            word, extra = cols[3], tuple(cols[4:-1])
            current["has_extra"] = current["has_extra"] or bool(extra)
        elif len(cols) == 2:
            word, extra = cols[0], ()
        else:
            raise ConllParseError(f"expected 2 or at least 5 columns, got {len(cols)}", lineno)
        idx = len(current["tokens"])
        current["tokens"].append(word)
        current["extra"].append(extra)
        stacks, spans = current["stacks"], current["spans"]
        for kind, eid in _parse_coref_field(cols[-1], lineno):
            if kind == "open":
                stacks.setdefault(eid, []).append(idx)
                continue
            if kind == "single":
                start = idx
            else:
                if not stacks.get(eid):
                    raise ConllParseError(f"closing bracket for entity {eid} without opening", lineno)
                start = stacks[eid].pop()
            key = (start, idx)
            if key in spans:
                raise ConllParseError(f"duplicate span {key}", lineno)
            spans[key] = eid
    if current is not None:
        raise ConllParseError(f"document {current['doc_id']!r} is truncated (no #end document)",
                              current["begin"])
    return docs


def _finish_document(state: dict, lineno: int) -> Document:
    for eid, stack in state["stacks"].items():
        if stack:
            raise ConllParseError(f"unclosed bracket for entity {eid} opened at token {stack[-1]}",
                                  lineno)
    if not state["tokens"]:
        raise ConllParseError(f"document {state['doc_id']!r} has no tokens", lineno)
    by_entity: dict[int, list[tuple[int, int]]] = {}
    for key, eid in state["spans"].items():
        by_entity.setdefault(eid, []).append(key)
    bounds = state["bounds"]
    if bounds[-1] == len(state["tokens"]):
        bounds = bounds[:-1]
    return Document(
        doc_id=state["doc_id"],
        tokens=tuple(state["tokens"]),
        sentence_bounds=tuple(bounds),
        gold=ClusterSet(by_entity[e] for e in sorted(by_entity)),
        extra_columns=tuple(state["extra"]) if state["has_extra"] else None,
    )


def _coref_fields(doc: Document) -> list[str]:
    n = len(doc)
    opens: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    singles: list[list[int]] = [[] for _ in range(n)]
    closes: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    clusters = doc.gold.clusters if doc.gold is not None else []
    for eid, cluster in enumerate(clusters):
        spans = sorted(cluster)
        for a in spans:
            for b in spans:
                if a.start < b.start <= a.end < b.end:
                    raise ValueError(f"entity {eid} has crossing spans {a.key} and {b.key}; "
                                     "not representable in CoNLL brackets")
            if a.start == a.end:
                singles[a.start].append(eid)
            else:
                opens[a.start].append((a.end, eid))
                closes[a.end].append((a.start, eid))
    fields = []
    for t in range(n):
        items = [f"({e}" for _, e in sorted(opens[t], key=lambda x: (-x[0], x[1]))]
        items += [f"({e})" for e in sorted(singles[t])]
        items += [f"{e})" for _, e in sorted(closes[t])]
        fields.append("|".join(items) if items else "-")
    return fields


def write_conll(docs: Sequence[Document]) -> str:
    """Serialise documents in the CoNLL-2012 skeleton format."""
    lines: list[str] = []
    for doc in docs:
        m = _HEADER_RE.match(doc.doc_id)
        name, part = (m.group(1), int(m.group(2))) if m else (doc.doc_id or "-", 0)
        name = name.replace(" ", "_") or "-"
        lines.append(f"#begin document {doc.doc_id}")
        fields = _coref_fields(doc)
        bounds = set(doc.sentence_bounds)
        word_idx = 0
        for t, tok in enumerate(doc.tokens):
            if t in bounds and t > 0:
                lines.append("")
                word_idx = 0
            extra = doc.extra_columns[t] if doc.extra_columns is not None else ()
            lines.append("\t".join([name, str(part), str(word_idx), tok, *extra, fields[t]]))
            word_idx += 1
        lines.append("")
        lines.append("#end document")
    return "\n".join(lines) + ("\n" if lines else "")


# --------------------------------------------------------------------------
# JSON lines fixtures


def doc_to_json(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "tokens": list(doc.tokens),
        "clusters": doc.gold.as_lists() if doc.gold is not None else [],
        "sentence_bounds": list(doc.sentence_bounds),
    }


def doc_from_json(obj: dict) -> Document:
    for key in ("doc_id", "tokens", "clusters"):
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
    return Document(
        doc_id=str(obj["doc_id"]),
        tokens=tuple(obj["tokens"]),
        sentence_bounds=tuple(obj.get("sentence_bounds", (0,))),
        gold=ClusterSet([tuple(s) for s in c] for c in obj["clusters"]),
    )


def write_jsonl(docs: Iterable[Document]) -> str:
    return "".join(json.dumps(doc_to_json(d)) + "\n" for d in docs)


def read_jsonl(text: str) -> list[Document]:
    return [doc_from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


# --------------------------------------------------------------------------
# Sub-token remapping


@dataclass(frozen=True)
class TokenSplitMap:
    """Word <-> sub-token index correspondence.

    ``forward[w]`` is the inclusive sub-token range of word ``w``;
    ``inverse[t]`` is the word owning sub-token ``t``.
    """

    forward: tuple[tuple[int, int], ...]
    inverse: tuple[int, ...]

    def __post_init__(self):
        expected = 0
        for w, (a, b) in enumerate(self.forward):
            if a != expected or b < a:
                raise ValueError(f"word {w}: sub-token range ({a}, {b}) is not contiguous")
            expected = b + 1
        if expected != len(self.inverse):
            raise ValueError("forward ranges do not cover the sub-token sequence")
        for w, (a, b) in enumerate(self.forward):
            if any(self.inverse[t] != w for t in range(a, b + 1)):
                raise ValueError("inverse map disagrees with forward map")

    def to_subtokens(self, span: MentionSpan) -> MentionSpan:
        return MentionSpan(self.forward[span.start][0], self.forward[span.end][1])

    def to_words(self, span: MentionSpan) -> MentionSpan:
        return MentionSpan(self.inverse[span.start], self.inverse[span.end])

    def clusters_to_words(self, clusters: ClusterSet) -> ClusterSet:
        """Map sub-token clusters back to words.

        Spans that collapse onto an already mapped word span are dropped.
        """
        seen: set[tuple[int, int]] = set()

        def fn(s):
            w = self.to_words(s)
            if w.key in seen:
                return None
            seen.add(w.key)
            return w

        out = ([m for m in (fn(s) for s in sorted(c)) if m is not None] for c in clusters)
        return ClusterSet(c for c in out if c)


def chunk_splitter(width: int = 6) -> Callable[[str], list[str]]:
    """Split words longer than ``width`` characters into ``width``-sized chunks."""

    def split(word: str) -> list[str]:
        if len(word) <= width:
            return [word]
        return [word[i:i + width] for i in range(0, len(word), width)]

    return split


def remap_spans(doc: Document, split: Callable[[str], Sequence[str]]) -> tuple[Document, TokenSplitMap]:
    pieces: list[str] = []
    forward = []
    inverse = []
    for w, word in enumerate(doc.tokens):
        parts = list(split(word))
        if not parts:
            raise ValueError(f"splitter produced no pieces for word {w} ({word!r})")
        forward.append((len(pieces), len(pieces) + len(parts) - 1))
        inverse.extend([w] * len(parts))
        pieces.extend(parts)
    tmap = TokenSplitMap(tuple(forward), tuple(inverse))
    gold = doc.gold.map_spans(tmap.to_subtokens) if doc.gold is not None else None
    out = Document(
        doc_id=doc.doc_id,
        tokens=tuple(pieces),
        sentence_bounds=tuple(forward[b][0] for b in doc.sentence_bounds),
        gold=gold,
    )
    return out, tmap


# --------------------------------------------------------------------------
# Synthetic corpora


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for :func:`gen_synthetic`.  Ranges are inclusive ``(lo, hi)``.

    Each entity ``k`` owns two word forms: ``N{k}`` opens a multi-token
    mention and ``P{k}`` is a complete one-token mention.  Multi-token
    mentions continue with ``m*`` tokens and close on a ``z*`` token.  Filler
    words are ``w*``.
    """

    n_docs: int = 20
    doc_len: tuple[int, int] = (30, 50)
    n_entities: tuple[int, int] = (2, 3)
    mentions_per_entity: tuple[int, int] = (2, 3)
    mention_len: tuple[int, int] = (1, 3)
    vocab_size: int = 50
    n_names: int = 20
    nesting_prob: float = 0.0
    min_gap: int = 1
    n_singletons: tuple[int, int] = (0, 0)
    sentence_len: int = 12

    def __post_init__(self):
        for name in ("doc_len", "n_entities", "mentions_per_entity", "mention_len", "n_singletons"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name}: empty range ({lo}, {hi})")
        if self.mention_len[0] < 1 or self.doc_len[0] < 1:
            raise ValueError("mention_len and doc_len must be positive")
        if not 0.0 <= self.nesting_prob <= 1.0:
            raise ValueError("nesting_prob must lie in [0, 1]")
        if self.n_names < self.n_entities[1] + self.n_singletons[1]:
            raise ValueError("n_names smaller than the number of entities per document")
        if self.vocab_size < 1 or self.min_gap < 0:
            raise ValueError("vocab_size must be >= 1 and min_gap >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)


def _mention_tokens(rng, entity: int, length: int) -> list[str]:
    if length == 1:
        return [f"P{entity}"]
    mid = [f"m{rng.integers(5)}" for _ in range(length - 2)]
    return [f"N{entity}", *mid, f"z{rng.integers(5)}"]


def gen_synthetic(cfg: SyntheticConfig, seed: int) -> list[Document]:
    """Generate ``cfg.n_docs`` gold-annotated documents, reproducibly per ``seed``.

    Mentions are laid out left to right with at least ``cfg.min_gap`` filler
    tokens between them.  With probability ``nesting_prob`` a mention of
    length >= 3 gets a nested one-token mention of another entity inside it,
    or (for length >= 3 too) a two-token prefix mention sharing its start.
    """
    rng = np.random.default_rng(seed)
    docs = []
    for d in range(cfg.n_docs):
        n_tok = int(rng.integers(cfg.doc_len[0], cfg.doc_len[1] + 1))
        n_ent = int(rng.integers(cfg.n_entities[0], cfg.n_entities[1] + 1))
        n_single = int(rng.integers(cfg.n_singletons[0], cfg.n_singletons[1] + 1))
        names = rng.choice(cfg.n_names, size=n_ent + n_single, replace=False)
        labels: list[int] = []
        for k in range(n_ent):
            labels += [k] * int(rng.integers(cfg.mentions_per_entity[0], cfg.mentions_per_entity[1] + 1))
        labels += list(range(n_ent, n_ent + n_single))
        labels = [int(x) for x in rng.permutation(labels)]
        lengths = [int(rng.integers(cfg.mention_len[0], cfg.mention_len[1] + 1)) for _ in labels]
        slack = n_tok - sum(lengths) - max(len(labels) - 1, 0) * cfg.min_gap
        if slack < 0:
            raise ValueError(
                f"infeasible synthetic config: document {d} needs {n_tok - slack} tokens "
                f"but has {n_tok}")
        # split the slack over the len(labels)+1 gaps
        cuts = np.sort(rng.integers(0, slack + 1, size=len(labels)))
        extra = np.diff(np.concatenate([[0], cuts, [slack]]))
        tokens: list[str] = []
        clusters: dict[int, list[tuple[int, int]]] = {}
        for m, (lab, length) in enumerate(zip(labels, lengths)):
            tokens += [f"w{rng.integers(cfg.vocab_size)}" for _ in range(int(extra[m]) + (cfg.min_gap if m else 0))]
            start = len(tokens)
            ent = int(names[lab])
            tokens += _mention_tokens(rng, ent, length)
            clusters.setdefault(lab, []).append((start, start + length - 1))
            others = [k for k in range(n_ent) if k != lab]
            if length >= 3 and others and rng.random() < cfg.nesting_prob:
                inner = int(rng.choice(others))
                if rng.random() < 0.5:
                    pos = start + 1 + int(rng.integers(length - 2))
                    tokens[pos] = f"P{int(names[inner])}"
                    clusters.setdefault(inner, []).append((pos, pos))
                else:
                    tokens[start:start + 2] = [f"N{int(names[inner])}", f"z{rng.integers(5)}"]
                    clusters.setdefault(inner, []).append((start, start + 1))
        tokens += [f"w{rng.integers(cfg.vocab_size)}" for _ in range(int(extra[-1]))]
        bounds = tuple(range(0, len(tokens), max(cfg.sentence_len, 1)))
        docs.append(Document(
            doc_id=f"synth_{seed}_{d:04d}",
            tokens=tuple(tokens),
            sentence_bounds=bounds,
            gold=ClusterSet(clusters[k] for k in sorted(clusters)),
        ))
    return docs
