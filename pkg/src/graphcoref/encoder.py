"""Transformer encoder whose self-attention is conditioned on a relation graph.

Every attention head scores query ``i`` against key ``j`` as

    Q_i . (K_j + Lk[i, j]) / sqrt(d_head)

and mixes values ``V_j + Lv[i, j]``, where ``Lk[i, j] = E[code(i, j)] @ W_k``
and ``Lv[i, j] = E[code(i, j)] @ W_v`` embed the relation code of the token
pair.  The stack is post-layer-norm (attention, residual, norm, GELU
feed-forward, residual, norm) and everything runs in float64 numpy with an
explicit backward pass.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import CorefGraph

__all__ = [
    "EncoderConfig",
    "EncoderParams",
    "EncoderOutput",
    "Vocab",
    "init_params",
    "relation_attention",
    "relation_attention_backward",
    "build_relation_tensors",
    "relation_codes",
    "encode",
    "backprop",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1
LN_EPS = 1e-6
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    heads: int = 4
    d_model: int = 32
    d_ff: int = 64
    vocab: int = 128
    max_positions: int = 512
    relation_types: int = 3
    # "layer": one relation table per layer shared by its heads; "global": one for the stack
    relation_sharing: str = "layer"
    # "mirror": pair (i, j) with j > i reads the code stored at (j, i); "zero": reads no-link
    upper_codes: str = "mirror"
    # "biaffine" adds h_i^T U h_j to the linear pair score; "linear" is W . [h_i, h_j] alone
    pair_scorer: str = "biaffine"
    init_seed: int = 0

    def __post_init__(self):
        for name in ("heads", "d_model", "d_ff", "vocab", "max_positions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.relation_types != 3:
            raise ValueError("relation_types is fixed at 3")
        if self.relation_sharing not in ("layer", "global"):
            raise ValueError(f"unknown relation_sharing {self.relation_sharing!r}")
        if self.upper_codes not in ("mirror", "zero"):
            raise ValueError(f"unknown upper_codes {self.upper_codes!r}")
        if self.pair_scorer not in ("biaffine", "linear"):
            raise ValueError(f"unknown pair_scorer {self.pair_scorer!r}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.heads

    @property
    def separator_position(self) -> int:
        """Position index reserved for separator tokens of reduced documents."""
        return self.max_positions


class Vocab:
    """Word <-> id table with reserved unknown and separator entries."""

    UNK, SEP = "[UNK]", "[SEP]"

    def __init__(self, words: Iterable[str] = ()):
        self.words: list[str] = [self.UNK, self.SEP]
        self.index = {w: i for i, w in enumerate(self.words)}
        for w in words:
            if w not in self.index:
                self.index[w] = len(self.words)
                self.words.append(w)

    @classmethod
    def from_documents(cls, docs) -> "Vocab":
        return cls(sorted({t for d in docs for t in d.tokens}))

    def __len__(self):
        return len(self.words)

    @property
    def sep_id(self) -> int:
        return self.index[self.SEP]

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        unk = self.index[self.UNK]
        return np.array([self.index.get(t, unk) for t in tokens], dtype=np.int64)


@dataclass
class EncoderParams:
    config: EncoderConfig
    tensors: dict[str, np.ndarray]
    vocab: Vocab | None = None

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.tensors.items()}, self.vocab)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))


def _relation_names(cfg: EncoderConfig, layer: int) -> tuple[str, str, str]:
    p = "" if cfg.relation_sharing == "global" else f"l{layer}."
    return p + "rel_e", p + "rel_wk", p + "rel_wv"


def expected_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d, dh, f = cfg.d_model, cfg.d_head, cfg.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (cfg.vocab, d),
        "pos_emb": (cfg.max_positions + 1, d),
    }
    for l in range(cfg.layers):
        p = f"l{l}."
        for w in ("wq", "wk", "wv", "wo"):
            shapes[p + w] = (d, d)
        for b in ("bq", "bk", "bv", "bo", "ln1_g", "ln1_b", "b2", "ln2_g", "ln2_b"):
            shapes[p + b] = (d,)
        shapes[p + "w1"] = (d, f)
        shapes[p + "b1"] = (f,)
        shapes[p + "w2"] = (f, d)
    rel_layers = [0] if cfg.relation_sharing == "global" else range(cfg.layers)
    for l in rel_layers:
        e, wk, wv = _relation_names(cfg, l)
        shapes[e] = (cfg.relation_types, dh)
        shapes[wk] = (dh, dh)
        shapes[wv] = (dh, dh)
    shapes["mention_w"] = (2 * d,)
    shapes["mention_b"] = ()
    shapes["coref_w"] = (2 * d,)
    if cfg.pair_scorer == "biaffine":
        shapes["mention_u"] = (d, d)
        shapes["coref_u"] = (d, d)
    return shapes


def init_params(cfg: EncoderConfig, vocab: Vocab | None = None, seed: int | None = None) -> EncoderParams:
    """Fixed-seed scaled-normal initialisation; layer-norm gains start at one."""
    rng = np.random.default_rng(cfg.init_seed if seed is None else seed)
    if vocab is not None and len(vocab) > cfg.vocab:
        raise ValueError(f"vocabulary of {len(vocab)} words exceeds config vocab={cfg.vocab}")
    tensors = {}
    for name, shape in expected_shapes(cfg).items():
        short = name.split(".")[-1]
        if short.startswith("ln") and short.endswith("_g"):
            t = np.ones(shape)
        elif len(shape) <= 1 and short not in ("mention_w", "coref_w"):
            t = np.zeros(shape)
        elif short in ("tok_emb", "pos_emb"):
            t = rng.normal(0.0, 1.0, shape)
        elif short == "rel_e":
            t = rng.normal(0.0, 1.0, shape)
            t[0] = 0.0
        elif short in ("mention_u", "coref_u"):
            t = rng.normal(0.0, 0.1 / cfg.d_model, shape)
        else:
            t = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), shape)
        tensors[name] = t.astype(np.float64)
    return EncoderParams(cfg, tensors, vocab)


# --------------------------------------------------------------------------
# attention with relation embeddings


def _softmax(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def relation_attention(Q, K, V, Lk, Lv, return_weights: bool = False):
    """Scaled dot-product attention with per-pair key and value offsets.

    ``Q, K, V`` are ``(heads, N, d)`` (a single head may be given as
    ``(N, d)``); ``Lk, Lv`` are ``(N, N, d)`` and shared by all heads.
    """
    Q, K, V = (np.asarray(a, dtype=np.float64) for a in (Q, K, V))
    single = Q.ndim == 2
    if single:
        Q, K, V = Q[None], K[None], V[None]
    Lk, Lv = np.asarray(Lk, dtype=np.float64), np.asarray(Lv, dtype=np.float64)
    h, n, d = Q.shape
    if K.shape != (h, n, d) or V.shape != (h, n, d) or Lk.shape != (n, n, d) or Lv.shape != (n, n, d):
        raise ValueError("inconsistent attention shapes")
    for a in (Q, K, V, Lk, Lv):
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite attention input")
    # (N, h, d) @ (N, d, N) -> (N, h, N): query i against its own row of Lk
    rel = np.matmul(Q.transpose(1, 0, 2), Lk.transpose(0, 2, 1)).transpose(1, 0, 2)
    scores = (Q @ K.transpose(0, 2, 1) + rel) / math.sqrt(d)
    A = _softmax(scores)
    out = A @ V + np.matmul(A.transpose(1, 0, 2), Lv).transpose(1, 0, 2)
    if single:
        out, A = out[0], A[0]
    return (out, A) if return_weights else out


def relation_attention_backward(dout, Q, K, V, Lk, Lv, A):
    """Gradients of :func:`relation_attention` (multi-head shapes only)."""
    d = Q.shape[-1]
    dout_t = dout.transpose(1, 0, 2)  # (N, h, d)
    dV = A.transpose(0, 2, 1) @ dout
    dLv = np.matmul(A.transpose(1, 2, 0), dout_t)
    dA = dout @ V.transpose(0, 2, 1) + np.matmul(dout_t, Lv.transpose(0, 2, 1)).transpose(1, 0, 2)
    dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True)) / math.sqrt(d)
    dQ = dS @ K + np.matmul(dS.transpose(1, 0, 2), Lk).transpose(1, 0, 2)
    dK = dS.transpose(0, 2, 1) @ Q
    dLk = np.matmul(dS.transpose(1, 2, 0), Q.transpose(1, 0, 2))
    return dQ, dK, dV, dLk, dLv


def relation_codes(g: CorefGraph | np.ndarray | None, n: int, upper: str = "mirror") -> np.ndarray:
    """Full ``(n, n)`` code matrix read from a lower-triangular graph."""
    if g is None:
        return np.zeros((n, n), dtype=np.int64)
    cells = g.cells if isinstance(g, CorefGraph) else np.asarray(g)
    if cells.shape != (n, n):
        raise ValueError(f"graph is {cells.shape[0]} tokens, input has {n}")
    low = np.tril(cells).astype(np.int64)
    if upper == "mirror":
        return low + np.tril(low, -1).T
    return low


def build_relation_tensors(g: CorefGraph | np.ndarray, E, W_k, W_v, upper: str = "mirror"):
    """``(Lk, Lv)`` of shape ``(N, N, d_head)`` for a graph."""
    cells = g.cells if isinstance(g, CorefGraph) else np.asarray(g)
    codes = relation_codes(cells, cells.shape[0], upper)
    return (np.asarray(E) @ W_k)[codes], (np.asarray(E) @ W_v)[codes]


# --------------------------------------------------------------------------
# encoder stack


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)


def _gelu(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x * x * x))
    return 0.5 * x * (1.0 + t), t


def _gelu_grad(x, t):
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)


@dataclass
class _LayerCache:
    x: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    Lk: np.ndarray
    Lv: np.ndarray
    A: np.ndarray
    O: np.ndarray
    ln1: tuple
    y: np.ndarray
    a: np.ndarray
    t: np.ndarray
    ga: np.ndarray
    ln2: tuple


@dataclass
class EncoderCache:
    ids: np.ndarray
    positions: np.ndarray
    codes: np.ndarray
    layers: list[_LayerCache]
    config: EncoderConfig


@dataclass
class EncoderOutput:
    hidden: np.ndarray
    cache: EncoderCache = field(repr=False)

    @property
    def attention(self) -> list[np.ndarray]:
        return [c.A for c in self.cache.layers]


def _split(x, h):
    n, d = x.shape
    return x.reshape(n, h, d // h).transpose(1, 0, 2)


def _merge(x):
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def encode(token_ids, positions, g_in: CorefGraph | np.ndarray | None, params: EncoderParams,
           extra_input: np.ndarray | None = None) -> EncoderOutput:
    """Run the encoder; ``g_in`` supplies the relation code of every token pair."""
    cfg = params.config
    T = params.tensors
    ids = np.asarray(token_ids, dtype=np.int64)
    pos = np.asarray(positions, dtype=np.int64)
    n = ids.shape[0]
    if pos.shape != ids.shape:
        raise ValueError("token_ids and positions differ in length")
    if n > cfg.max_positions:
        raise ValueError(f"sequence of {n} tokens exceeds max_positions={cfg.max_positions}; "
                         "window or reduce the document first")
    if n and (ids.min() < 0 or ids.max() >= cfg.vocab):
        raise ValueError("token id out of vocabulary range")
    if n and (pos.min() < 0 or pos.max() > cfg.separator_position):
        raise ValueError("position index out of range")
    codes = relation_codes(g_in, n, cfg.upper_codes)
    x = T["tok_emb"][ids] + T["pos_emb"][pos]
    if extra_input is not None:
        extra_input = np.asarray(extra_input, dtype=np.float64)
        if extra_input.shape != (n, cfg.d_model):
            raise ValueError(f"extra_input must be ({n}, {cfg.d_model})")
        x = x + extra_input
    caches = []
    h = cfg.heads
    for l in range(cfg.layers):
        p = f"l{l}."
        e_name, wk_name, wv_name = _relation_names(cfg, l)
        E = T[e_name]
        Lk = (E @ T[wk_name])[codes]
        Lv = (E @ T[wv_name])[codes]
        Q = _split(x @ T[p + "wq"] + T[p + "bq"], h)
        K = _split(x @ T[p + "wk"] + T[p + "bk"], h)
        V = _split(x @ T[p + "wv"] + T[p + "bv"], h)
        O, A = relation_attention(Q, K, V, Lk, Lv, return_weights=True)
        attn = _merge(O) @ T[p + "wo"] + T[p + "bo"]
        y, ln1 = _layer_norm(x + attn, T[p + "ln1_g"], T[p + "ln1_b"])
        a = y @ T[p + "w1"] + T[p + "b1"]
        ga, t = _gelu(a)
        f = ga @ T[p + "w2"] + T[p + "b2"]
        x_new, ln2 = _layer_norm(y + f, T[p + "ln2_g"], T[p + "ln2_b"])
        caches.append(_LayerCache(x, Q, K, V, Lk, Lv, A, O, ln1, y, a, t, ga, ln2))
        x = x_new
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite hidden states")
    return EncoderOutput(x, EncoderCache(ids, pos, codes, caches, cfg))


def backprop(d_hidden: np.ndarray, cache: EncoderCache, params: EncoderParams) -> dict[str, np.ndarray]:
    """Parameter gradients given the gradient of the loss w.r.t. the hidden states.

    Scoring-head entries are returned as zeros; the objective fills them in.
    """
    cfg = params.config
    if cache.config != cfg or len(cache.layers) != cfg.layers:
        raise ValueError("encoder cache does not match these parameters")
    T = params.tensors
    n = cache.ids.shape[0]
    if d_hidden.shape != (n, cfg.d_model):
        raise ValueError(f"gradient shape {d_hidden.shape} does not match ({n}, {cfg.d_model})")
    grads = params.zeros_like()
    dx = np.array(d_hidden, dtype=np.float64)
    codes_flat = cache.codes.ravel()
    masks = [codes_flat == c for c in range(cfg.relation_types)]
    for l in reversed(range(cfg.layers)):
        c = cache.layers[l]
        p = f"l{l}."
        # second sub-layer
        dz, grads[p + "ln2_g"], grads[p + "ln2_b"] = _layer_norm_backward(dx, T[p + "ln2_g"], c.ln2)
        dy = dz.copy()
        grads[p + "w2"] = c.ga.T @ dz
        grads[p + "b2"] = dz.sum(axis=0)
        da = (dz @ T[p + "w2"].T) * _gelu_grad(c.a, c.t)
        grads[p + "w1"] = c.y.T @ da
        grads[p + "b1"] = da.sum(axis=0)
        dy += da @ T[p + "w1"].T
        # first sub-layer
        dz, grads[p + "ln1_g"], grads[p + "ln1_b"] = _layer_norm_backward(dy, T[p + "ln1_g"], c.ln1)
        dx_prev = dz.copy()
        Om = _merge(c.O)
        grads[p + "wo"] = Om.T @ dz
        grads[p + "bo"] = dz.sum(axis=0)
        dO = _split(dz @ T[p + "wo"].T, cfg.heads)
        dQ, dK, dV, dLk, dLv = relation_attention_backward(dO, c.Q, c.K, c.V, c.Lk, c.Lv, c.A)
        for name, dproj, bname, wname in (("q", dQ, "bq", "wq"), ("k", dK, "bk", "wk"), ("v", dV, "bv", "wv")):
            dm = _merge(dproj)
            grads[p + wname] = c.x.T @ dm
            grads[p + bname] = dm.sum(axis=0)
            dx_prev += dm @ T[p + wname].T
        e_name, wk_name, wv_name = _relation_names(cfg, l)
        dh = cfg.d_head
        dLk_flat, dLv_flat = dLk.reshape(-1, dh), dLv.reshape(-1, dh)
        dEk = np.stack([dLk_flat[m].sum(axis=0) for m in masks])
        dEv = np.stack([dLv_flat[m].sum(axis=0) for m in masks])
        E = T[e_name]
        grads[e_name] = grads[e_name] + dEk @ T[wk_name].T + dEv @ T[wv_name].T
        grads[wk_name] = grads[wk_name] + E.T @ dEk
        grads[wv_name] = grads[wv_name] + E.T @ dEv
        dx = dx_prev
    np.add.at(grads["tok_emb"], cache.ids, dx)
    np.add.at(grads["pos_emb"], cache.positions, dx)
    return grads


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str | Path, params: EncoderParams, extra: dict | None = None,
                    arrays: dict[str, np.ndarray] | None = None) -> None:
    """Write config, vocabulary and named tensors to an ``.npz`` container.

    Layout: ``meta`` holds a JSON document ``{"format_version", "config",
    "vocab", "extra"}``; each tensor is stored under ``param/<name>``;
    optional auxiliary arrays (optimizer state) under ``aux/<name>``.
    """
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "vocab": params.vocab.words if params.vocab is not None else None,
        "extra": extra or {},
    }
    payload = {"meta": np.array(json.dumps(meta))}
    payload.update({f"param/{k}": v for k, v in params.tensors.items()})
    payload.update({f"aux/{k}": v for k, v in (arrays or {}).items()})
    buf = io.BytesIO()
    np.savez(buf, **payload)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[EncoderParams, dict, dict[str, np.ndarray]]:
    """Inverse of :func:`save_checkpoint`; validates every tensor shape."""
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        cfg = EncoderConfig(**meta["config"])
        tensors = {k[len("param/"):]: z[k].astype(np.float64) for k in z.files if k.startswith("param/")}
        aux = {k[len("aux/"):]: z[k] for k in z.files if k.startswith("aux/")}
    shapes = expected_shapes(cfg)
    if set(shapes) != set(tensors):
        missing, unknown = set(shapes) - set(tensors), set(tensors) - set(shapes)
        raise ValueError(f"checkpoint tensors mismatch: missing {sorted(missing)}, unknown {sorted(unknown)}")
    for k, shape in shapes.items():
        if tensors[k].shape != shape:
            raise ValueError(f"tensor {k}: shape {tensors[k].shape}, expected {shape}")
    vocab = None
    if meta["vocab"] is not None:
        vocab = Vocab()
        vocab.words = list(meta["vocab"])
        vocab.index = {w: i for i, w in enumerate(vocab.words)}
    return EncoderParams(cfg, {k: tensors[k] for k in shapes}, vocab), meta.get("extra", {}), aux
