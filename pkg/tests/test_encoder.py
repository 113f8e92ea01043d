import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphcoref import CorefGraph, EncoderConfig, Vocab, encode, init_params, load_checkpoint, save_checkpoint
from graphcoref.encoder import (build_relation_tensors, relation_attention, relation_attention_backward,
                                relation_codes)
from oracles import gradcheck_setup, numeric_gradient, relative_errors, total_loss, vanilla_attention


def _qkv(rng, h, n, d):
    return (rng.normal(size=(h, n, d)) for _ in range(3))


@pytest.mark.parametrize("seed", range(10))
def test_zero_relations_match_vanilla_bit_exactly(seed):
    rng = np.random.default_rng(seed)
    h, n, d = 3, int(rng.integers(1, 20)), 4
    Q, K, V = _qkv(rng, h, n, d)
    codes = rng.integers(0, 3, size=(n, n))
    E = np.zeros((3, d))
    Lk, Lv = (E @ rng.normal(size=(d, d)))[codes], (E @ rng.normal(size=(d, d)))[codes]
    out = relation_attention(Q, K, V, Lk, Lv)
    ref = np.stack([vanilla_attention(Q[k], K[k], V[k]) for k in range(h)])
    assert np.array_equal(out, ref)


def test_zero_relation_table_makes_encoder_graph_blind():
    rng = np.random.default_rng(3)
    cfg = EncoderConfig(layers=2, heads=2, d_model=8, d_ff=8, vocab=10, max_positions=12)
    params = init_params(cfg, seed=1)
    for l in range(cfg.layers):
        params.tensors[f"l{l}.rel_e"][:] = 0.0
    ids = rng.integers(0, 10, 9)
    g = CorefGraph(np.tril(rng.integers(0, 3, (9, 9))), "input")
    a = encode(ids, np.arange(9), None, params).hidden
    b = encode(ids, np.arange(9), g, params).hidden
    assert np.array_equal(a, b)


def test_relations_change_scores():
    rng = np.random.default_rng(0)
    Q, K, V = _qkv(rng, 1, 5, 4)
    E = rng.normal(size=(3, 4))
    codes = np.zeros((5, 5), dtype=int)
    codes[3, 1] = 2
    Lk, Lv = E[codes], E[codes]
    _, A = relation_attention(Q, K, V, Lk, Lv, return_weights=True)
    _, A0 = relation_attention(Q, K, V, np.zeros_like(Lk), np.zeros_like(Lv), return_weights=True)
    assert not np.allclose(A[0, 3], A0[0, 3])
    # rows whose offsets are all the same code shift by a constant and keep their weights
    assert np.allclose(A[0, :3], A0[0, :3])


@given(st.integers(0, 2**31), st.integers(1, 12), st.integers(1, 4))
def test_attention_rows_are_distributions(seed, n, h):
    rng = np.random.default_rng(seed)
    Q, K, V = (10 * x for x in _qkv(rng, h, n, 3))
    Lk, Lv = rng.normal(size=(n, n, 3)), rng.normal(size=(n, n, 3))
    _, A = relation_attention(Q, K, V, Lk, Lv, return_weights=True)
    assert np.all(A >= 0)
    assert np.allclose(A.sum(axis=-1), 1.0)


def test_single_head_shapes():
    rng = np.random.default_rng(1)
    Q, K, V = (x[0] for x in _qkv(rng, 1, 4, 2))
    L = np.zeros((4, 4, 2))
    out = relation_attention(Q, K, V, L, L)
    assert out.shape == (4, 2)
    assert np.allclose(out, vanilla_attention(Q, K, V))


def test_attention_input_checks():
    z = np.zeros((1, 3, 2))
    with pytest.raises(ValueError, match="inconsistent"):
        relation_attention(z, z, z, np.zeros((3, 3, 3)), np.zeros((3, 3, 2)))
    bad = z.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        relation_attention(bad, z, z, np.zeros((3, 3, 2)), np.zeros((3, 3, 2)))


def test_attention_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    h, n, d = 2, 4, 3
    args = [rng.normal(size=(h, n, d)) for _ in range(3)] + [rng.normal(size=(n, n, d)) for _ in range(2)]
    W = rng.normal(size=(h, n, d))

    def f():
        return float(np.sum(W * relation_attention(*args)))

    _, A = relation_attention(*args, return_weights=True)
    grads = relation_attention_backward(W, *args, A)
    eps = 1e-6
    for a, g in zip(args, grads):
        num = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + eps
            up = f()
            a[idx] = old - eps
            num[idx] = (up - f()) / (2 * eps)
            a[idx] = old
        assert np.allclose(g, num, atol=1e-7)


def test_relation_codes_read_lower_triangle():
    cells = np.array([[1, 0, 0], [1, 0, 0], [2, 0, 1]])
    assert relation_codes(cells, 3).tolist() == [[1, 1, 2], [1, 0, 0], [2, 0, 1]]
    assert relation_codes(cells, 3, "zero").tolist() == [[1, 0, 0], [1, 0, 0], [2, 0, 1]]
    assert relation_codes(None, 2).tolist() == [[0, 0], [0, 0]]
    with pytest.raises(ValueError):
        relation_codes(cells, 4)


def test_build_relation_tensors_embed_each_code():
    E = np.arange(6.0).reshape(3, 2)
    W = np.eye(2)
    Lk, Lv = build_relation_tensors(np.array([[1, 0], [2, 0]]), E, W, 2 * W)
    assert Lk.shape == (2, 2, 2)
    assert Lk[1, 0].tolist() == E[2].tolist() == Lk[0, 1].tolist()
    assert Lv[0, 0].tolist() == (2 * E[1]).tolist()


def test_encoder_input_validation():
    cfg = EncoderConfig(layers=1, heads=1, d_model=4, d_ff=4, vocab=5, max_positions=4)
    p = init_params(cfg)
    with pytest.raises(ValueError, match="max_positions"):
        encode(np.zeros(5, int), np.arange(5), None, p)
    with pytest.raises(ValueError, match="vocabulary"):
        encode(np.array([5]), np.array([0]), None, p)
    with pytest.raises(ValueError, match="position"):
        encode(np.array([0]), np.array([5]), None, p)
    # the separator row sits one past the last ordinary position
    assert encode(np.array([0]), np.array([4]), None, p).hidden.shape == (1, 4)
    with pytest.raises(ValueError, match="extra_input"):
        encode(np.array([0]), np.array([0]), None, p, extra_input=np.zeros((1, 3)))


@pytest.mark.parametrize("kwargs", [{"d_model": 6, "heads": 4}, {"relation_types": 4},
                                    {"relation_sharing": "head"}, {"upper_codes": "copy"},
                                    {"pair_scorer": "mlp"}, {"vocab": 0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        EncoderConfig(**kwargs)


def test_vocab():
    v = Vocab(["x", "y", "x"])
    assert len(v) == 4
    assert v.encode(["y", "zz"]).tolist() == [3, 0]
    assert v.words[v.sep_id] == Vocab.SEP


def test_init_is_seeded():
    cfg = EncoderConfig(layers=1, heads=1, d_model=4, d_ff=4, vocab=5, max_positions=4)
    a, b, c = init_params(cfg, seed=2), init_params(cfg, seed=2), init_params(cfg, seed=3)
    assert all(np.array_equal(a[k], b[k]) for k in a.names())
    assert not np.array_equal(a["tok_emb"], c["tok_emb"])
    with pytest.raises(ValueError):
        init_params(cfg, Vocab(map(str, range(10))))


def test_checkpoint_round_trip(tmp_path, tiny_params):
    path = tmp_path / "m.npz"
    save_checkpoint(path, tiny_params, {"step": 3}, {"opt/t": np.array(3)})
    params, extra, aux = load_checkpoint(path)
    assert params.config == tiny_params.config
    assert params.vocab.words == tiny_params.vocab.words
    assert all(np.array_equal(params[k], tiny_params[k]) for k in tiny_params.names())
    assert extra == {"step": 3}
    assert int(aux["opt/t"]) == 3


def test_checkpoint_shape_mismatch(tmp_path, tiny_params):
    bad = tiny_params.copy()
    bad.tensors["l0.wq"] = np.zeros((3, 3))
    save_checkpoint(tmp_path / "bad.npz", bad)
    with pytest.raises(ValueError, match="l0.wq"):
        load_checkpoint(tmp_path / "bad.npz")
    del bad.tensors["l0.wq"]
    save_checkpoint(tmp_path / "missing.npz", bad)
    with pytest.raises(ValueError, match="missing"):
        load_checkpoint(tmp_path / "missing.npz")


@pytest.mark.parametrize("biaffine", [True, False])
def test_end_to_end_gradients(biaffine):
    params, sample, g_in, spans = gradcheck_setup(1, biaffine)
    _, analytic = total_loss(params, sample, g_in, spans)
    numeric = numeric_gradient(lambda: total_loss(params, sample, g_in, spans)[0], params)
    errs = relative_errors(analytic, numeric)
    assert max(errs.values()) < 1e-5, max(errs.items(), key=lambda kv: kv[1])


def test_key_bias_gradient_vanishes():
    params, sample, g_in, spans = gradcheck_setup()
    _, grads = total_loss(params, sample, g_in, spans)
    assert np.linalg.norm(grads["l0.bk"]) < 1e-12 * math.sqrt(grads["l0.bk"].size) + 1e-14
