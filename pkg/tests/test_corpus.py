from importlib.resources import files

import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphcoref import (ClusterSet, ConllParseError, Document, MentionSpan, SyntheticConfig, TokenSplitMap,
                        gen_synthetic, parse_conll, read_jsonl, write_conll, write_jsonl)
from graphcoref.corpus import chunk_splitter, doc_from_json, remap_spans


def _short(fields, words=None):
    words = words or [f"t{k}" for k in range(len(fields))]
    body = "\n".join(f"{w} {f}" for w, f in zip(words, fields))
    return f"#begin document d\n{body}\n#end document\n"


def _coref_column(text):
    return [line.split("\t")[-1] for line in text.splitlines() if "\t" in line]


def test_parse_unannotated_token():
    (doc,) = parse_conll(_short(["-"]))
    assert doc.tokens == ("t0",) and len(doc.gold) == 0


def test_parse_single_token_mention():
    (doc,) = parse_conll(_short(["(0)"]))
    assert doc.gold == ClusterSet([[(0, 0)]])


def test_parse_nested_span():
    (doc,) = parse_conll(_short(["(0", "(1)", "-", "0)"]))
    assert doc.gold == ClusterSet([[(0, 3)], [(1, 1)]])


def test_write_nested_span_fields():
    doc = Document("d", ("a", "b", "c", "d"), gold=ClusterSet([[(0, 3)], [(1, 1)]]))
    assert _coref_column(write_conll([doc])) == ["(0", "(1)", "-", "0)"]


def test_write_empty_clusters():
    doc = Document("d", ("a", "b"), gold=ClusterSet())
    assert _coref_column(write_conll([doc])) == ["-", "-"]


def test_bracket_order():
    # opens by end descending, closes by start ascending
    doc = Document("d", tuple("abcdef"), gold=ClusterSet([[(0, 5)], [(0, 2)], [(3, 5)]]))
    fields = _coref_column(write_conll([doc]))
    # entity ids follow first mentions: (0,2) -> 0, (0,5) -> 1, (3,5) -> 2
    assert fields[0] == "(1|(0"
    assert fields[5] == "1)|2)"


@pytest.mark.parametrize("text, fragment", [
    (_short(["(0", "-"]), "unclosed"),
    (_short(["0)"]), "without opening"),
    (_short(["(0", "0)|(0", "0)"]), None),
    ("#begin document d\nx (0)\n", "truncated"),
    ("x -\n", "outside"),
    (_short(["(0)|(0)"]), "duplicate"),
    (_short(["(x)"]), "bad coreference field"),
])
def test_parse_errors(text, fragment):
    if fragment is None:
        parse_conll(text)
        return
    with pytest.raises(ConllParseError) as info:
        parse_conll(text)
    assert fragment in str(info.value)
    assert info.value.lineno is not None


def test_error_reports_line_number():
    with pytest.raises(ConllParseError) as info:
        parse_conll("#begin document d\na -\nb 3)\n#end document\n")
    assert info.value.lineno == 3


def test_bundled_fixture_round_trip():
    text = files("graphcoref").joinpath("data/nested_fixture.conll").read_text()
    docs = parse_conll(text)
    full, short = docs
    assert full.sentence_bounds == (0, 6, 15)
    assert full.gold == ClusterSet([
        [(0, 0), (2, 2)],
        [(2, 3), (9, 9)],
        [(6, 11), (15, 18), (18, 18)],
        [(10, 11)],
    ])
    assert full.extra_columns[0] == ("NNP", "*")
    assert short.gold == ClusterSet([[(0, 1), (3, 3)]])
    assert short.sentence_bounds == (0, 3)
    again = parse_conll(write_conll(docs))
    assert again == docs
    assert write_conll(again) == write_conll(docs)


def test_doc_header_fields():
    (doc,) = parse_conll("#begin document (bc/cnn/01); part 2\nw (0)\n#end document\n")
    line = write_conll([doc]).splitlines()[1].split("\t")
    assert line[:3] == ["bc/cnn/01", "2", "0"]


def test_crossing_same_entity_not_writable():
    doc = Document("d", tuple("abcd"), gold=ClusterSet([[(0, 2), (1, 3)]]))
    with pytest.raises(ValueError):
        write_conll([doc])


def _bracket_balance(text):
    opens, closes = {}, {}
    for field in _coref_column(text):
        for item in field.split("|"):
            if item == "-":
                continue
            e = item.strip("()")
            if item.startswith("("):
                opens[e] = opens.get(e, 0) + 1
            if item.endswith(")"):
                closes[e] = closes.get(e, 0) + 1
    return opens, closes


@pytest.mark.parametrize("seed", range(5))
def test_synthetic_round_trip_and_balance(seed):
    cfg = SyntheticConfig(n_docs=30, doc_len=(40, 60), nesting_prob=0.5, mention_len=(1, 4), n_singletons=(0, 2))
    docs = gen_synthetic(cfg, seed)
    text = write_conll(docs)
    assert parse_conll(text) == docs
    opens, closes = _bracket_balance(text)
    assert opens == closes


def test_jsonl_round_trip():
    docs = gen_synthetic(SyntheticConfig(n_docs=5, nesting_prob=0.3), 2)
    assert read_jsonl(write_jsonl(docs)) == docs
    with pytest.raises(ValueError):
        doc_from_json({"doc_id": "x", "tokens": ["a"]})


def test_identity_split():
    doc = Document("d", ("a", "b", "c"), gold=ClusterSet([[(0, 1), (2, 2)]]))
    sub, m = remap_spans(doc, lambda w: [w])
    assert sub == doc
    assert m.forward == ((0, 0), (1, 1), (2, 2))


def _split_word_one(w):
    return [w[:1], w[1:]] if w == "bb" else [w]


def test_split_single_span():
    doc = Document("d", ("a", "bb", "c"), gold=ClusterSet([[(1, 1)], [(0, 2)]]))
    sub, m = remap_spans(doc, _split_word_one)
    assert len(sub) == 4
    assert sub.gold == ClusterSet([[(1, 2)], [(0, 3)]])
    assert m.clusters_to_words(sub.gold) == doc.gold


def test_splitter_with_no_pieces():
    doc = Document("d", ("a", "b"))
    with pytest.raises(ValueError):
        remap_spans(doc, lambda w: [] if w == "b" else [w])


def test_chunk_splitter():
    split = chunk_splitter(6)
    assert split("abcdefghijklm") == ["abcdef", "ghijkl", "m"]
    assert split("short") == ["short"]


def test_token_split_map_validation():
    with pytest.raises(ValueError):
        TokenSplitMap(forward=((0, 1), (3, 3)), inverse=(0, 0, 1, 1))


@given(st.lists(st.text(alphabet="abcdefghij", min_size=1, max_size=15), min_size=1, max_size=12),
       st.data())
def test_remap_inverse_is_identity(words, data):
    n = len(words)
    starts = data.draw(st.lists(st.integers(0, n - 1), max_size=5, unique=True))
    spans = [(s, data.draw(st.integers(s, n - 1))) for s in starts]
    doc = Document("d", tuple(words), gold=ClusterSet([[sp] for sp in spans]))
    sub, m = remap_spans(doc, chunk_splitter(4))
    assert m.clusters_to_words(sub.gold) == doc.gold
    for s in sub.gold.mentions():
        back = m.to_words(s)
        assert m.to_subtokens(back) == MentionSpan(s.start, s.end)


def test_generator_determinism_and_empty():
    cfg = SyntheticConfig(n_docs=4)
    assert gen_synthetic(cfg, 7) == gen_synthetic(cfg, 7)
    assert gen_synthetic(SyntheticConfig(n_docs=0), 7) == []


def test_generator_without_nesting_is_disjoint():
    docs = gen_synthetic(SyntheticConfig(n_docs=40, doc_len=(40, 60), nesting_prob=0.0, mention_len=(1, 4)), 3)
    for d in docs:
        spans = d.gold.mentions()
        for a, b in zip(spans, spans[1:]):
            assert a.end < b.start


def test_generator_nesting_present():
    docs = gen_synthetic(SyntheticConfig(n_docs=40, doc_len=(40, 60), nesting_prob=1.0, mention_len=(3, 4)), 3)
    nested = 0
    for d in docs:
        spans = d.gold.mentions()
        nested += sum(a.start <= b.start and b.end <= a.end and a != b for a in spans for b in spans)
    assert nested > 0


def test_generator_infeasible_config():
    with pytest.raises(ValueError, match="infeasible"):
        gen_synthetic(SyntheticConfig(doc_len=(5, 5), n_entities=(3, 3), mentions_per_entity=(3, 3)), 0)


def test_document_validation():
    with pytest.raises(ValueError):
        Document("d", ())
    with pytest.raises(ValueError):
        Document("d", ("a",), gold=ClusterSet([[(0, 1)]]))
    with pytest.raises(ValueError):
        Document("d", ("a", "b"), sentence_bounds=(1,))
    with pytest.raises(ValueError):
        ClusterSet([[(0, 0)], [(0, 0)]])
    with pytest.raises(ValueError):
        MentionSpan(3, 2)


def test_without_crossing():
    cs = ClusterSet([[(0, 2), (1, 3), (5, 5)], [(2, 4)]])
    clean, dropped = cs.without_crossing()
    assert clean == ClusterSet([[(0, 2), (5, 5)], [(2, 4)]])
    assert dropped == [(1, 3)]
    write_conll([Document("x", tuple("abcdef"), gold=clean)])
