"""A small pre-norm transformer encoder with a multi-width convolutional span head.

Everything is float64 numpy with hand-written backward passes. Parameters
live in plain ordered dicts of arrays so the optimizer and the checkpoint
writer can walk them in a fixed order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .spanmat import SpanMatrix, fit_mask
from .window import META_BITS, QueryPack

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class Dims:
    vocab_size: int
    max_len: int = 256
    dim: int = 32
    heads: int = 4
    layers: int = 2
    ff: int = 64
    K: int = 10
    L: int = 243

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if min(self.vocab_size, self.max_len, self.dim, self.heads, self.ff, self.K, self.L) < 1:
            raise ValueError(f"invalid dims {self}")
        if self.layers < 0:
            raise ValueError("layers must be non-negative")
        if self.max_len < self.K + self.L + 3:
            raise ValueError(f"max_len {self.max_len} < K + L + 3 = {self.K + self.L + 3}")


@dataclass
class ScoreGrid:
    logits: np.ndarray  # K x L
    mask: np.ndarray  # K x L, true where the span fits the window

    def probabilities(self) -> SpanMatrix:
        return SpanMatrix(np.where(self.mask, sigmoid(self.logits), 0.0))


@dataclass
class Model:
    dims: Dims
    encoder: dict
    head: dict

    def params(self) -> dict:
        out = {f"enc.{k}": v for k, v in self.encoder.items()}
        out.update({f"head.{k}": v for k, v in self.head.items()})
        return out

    def copy(self) -> "Model":
        return Model(self.dims, {k: v.copy() for k, v in self.encoder.items()},
                     {k: v.copy() for k, v in self.head.items()})


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def param_shapes(dims: Dims) -> tuple[dict, dict]:
    m, f = dims.dim, dims.ff
    enc = {"tok": (dims.vocab_size, m), "pos": (dims.max_len, m)}
    for l in range(dims.layers):
        enc.update({
            f"l{l}.ln1_g": (m,), f"l{l}.ln1_b": (m,),
            f"l{l}.wq": (m, m), f"l{l}.wk": (m, m), f"l{l}.wv": (m, m), f"l{l}.wo": (m, m),
            f"l{l}.ln2_g": (m,), f"l{l}.ln2_b": (m,),
            f"l{l}.w1": (m, f), f"l{l}.b1": (f,), f"l{l}.w2": (f, m), f"l{l}.b2": (m,),
        })
    enc.update({"lnf_g": (m,), "lnf_b": (m,)})
    head = {}
    for i in range(1, dims.K + 1):
        head[f"k{i}"] = (i, m + META_BITS)
        head[f"b{i}"] = ()
    return enc, head


def init_params(seed: int, dims: Dims) -> Model:
    """Glorot-uniform weights; layer-norm gains 1, every bias and shift 0."""
    rng = np.random.default_rng(seed)
    enc_shapes, head_shapes = param_shapes(dims)

    def make(name, shape):
        base = name.rsplit(".", 1)[-1]
        if base.endswith("_g"):
            return np.ones(shape)
        if base.endswith("_b") or base.startswith("b"):
            return np.zeros(shape)
        if base.startswith("k"):
            fan_in, fan_out = shape[0] * shape[1], 1
        else:
            fan_in, fan_out = shape
        a = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=shape)

    enc = {k: make(k, s) for k, s in enc_shapes.items()}
    head = {k: make(k, s) for k, s in head_shapes.items()}
    return Model(dims, enc, head)


# -- building blocks -------------------------------------------------------

def _ln_forward(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def _ln_backward(dy, cache):
    xhat, inv, g = cache
    n = xhat.shape[-1]
    dxhat = dy * g
    dx = inv / n * (n * dxhat - dxhat.sum(-1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(-1, keepdims=True))
    return dx, (dy * xhat).sum(0), dy.sum(0)


def _gelu(u):
    t = np.tanh(_GELU_C * (u + 0.044715 * u ** 3))
    return 0.5 * u * (1.0 + t), t


def _gelu_grad(u, t):
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * u * u)


def _softmax(s):
    s = s - s.max(-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(-1, keepdims=True)


def _check(x, where):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {where}")


def _split(x, h):
    n, m = x.shape
    return x.reshape(n, h, m // h).transpose(1, 0, 2)


def _merge(x):
    h, n, d = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * d)


# -- encoder ---------------------------------------------------------------

def _encode(pack: QueryPack, enc: dict, dims: Dims):
    ids = np.asarray(pack.ids)
    n = len(ids)
    if n > dims.max_len:
        raise ValueError(f"pack length {n} exceeds max_len {dims.max_len}")
    if ids.min() < 0 or ids.max() >= dims.vocab_size:
        raise ValueError(f"token id out of range for vocabulary of size {dims.vocab_size}")
    h = dims.heads
    scale = 1.0 / math.sqrt(dims.dim // h)
    x = enc["tok"][ids] + enc["pos"][:n]
    caches = []
    for l in range(dims.layers):
        p = f"l{l}."
        a, ln1 = _ln_forward(x, enc[p + "ln1_g"], enc[p + "ln1_b"])
        q, k, v = (_split(a @ enc[p + w], h) for w in ("wq", "wk", "wv"))
        att = _softmax(q @ k.transpose(0, 2, 1) * scale)
        ctx = _merge(att @ v)
        x1 = x + ctx @ enc[p + "wo"]
        b, ln2 = _ln_forward(x1, enc[p + "ln2_g"], enc[p + "ln2_b"])
        u = b @ enc[p + "w1"] + enc[p + "b1"]
        gu, t = _gelu(u)
        x2 = x1 + gu @ enc[p + "w2"] + enc[p + "b2"]
        _check(x2, f"encoder layer {l}")
        caches.append((a, ln1, q, k, v, att, ctx, b, ln2, u, gu, t))
        x = x2
    out, lnf = _ln_forward(x, enc["lnf_g"], enc["lnf_b"])
    _check(out, "final layer norm")
    return out, (ids, caches, lnf)


def encode(pack: QueryPack, model: Model) -> np.ndarray:
    """Contextual embedding per packed position, shape (len(pack), dim)."""
    return _encode(pack, model.encoder, model.dims)[0]


def attention_maps(pack: QueryPack, model: Model) -> list[np.ndarray]:
    _, (_, caches, _) = _encode(pack, model.encoder, model.dims)
    return [c[5] for c in caches]


def _encode_backward(dout, cache, enc, dims):
    ids, caches, lnf = cache
    h = dims.heads
    scale = 1.0 / math.sqrt(dims.dim // h)
    g = {}
    dx, g["lnf_g"], g["lnf_b"] = _ln_backward(dout, lnf)
    for l in reversed(range(dims.layers)):
        p = f"l{l}."
        a, ln1, q, k, v, att, ctx, b, ln2, u, gu, t = caches[l]
        # feed-forward branch
        g[p + "b2"] = dx.sum(0)
        g[p + "w2"] = gu.T @ dx
        du = (dx @ enc[p + "w2"].T) * _gelu_grad(u, t)
        g[p + "b1"] = du.sum(0)
        g[p + "w1"] = b.T @ du
        db, g[p + "ln2_g"], g[p + "ln2_b"] = _ln_backward(du @ enc[p + "w1"].T, ln2)
        dx = dx + db
        # attention branch
        g[p + "wo"] = ctx.T @ dx
        dctx = _split(dx @ enc[p + "wo"].T, h)
        datt = dctx @ v.transpose(0, 2, 1)
        dv = att.transpose(0, 2, 1) @ dctx
        ds = att * (datt - (datt * att).sum(-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 2, 1) @ q
        dq, dk, dv = _merge(dq), _merge(dk), _merge(dv)
        g[p + "wq"] = a.T @ dq
        g[p + "wk"] = a.T @ dk
        g[p + "wv"] = a.T @ dv
        da = dq @ enc[p + "wq"].T + dk @ enc[p + "wk"].T + dv @ enc[p + "wv"].T
        dxa, g[p + "ln1_g"], g[p + "ln1_b"] = _ln_backward(da, ln1)
        dx = dx + dxa
        _check(dx, f"backward through encoder layer {l}")
    n = len(ids)
    g["pos"] = np.zeros_like(enc["pos"])
    g["pos"][:n] = dx
    g["tok"] = np.zeros_like(enc["tok"])
    np.add.at(g["tok"], ids, dx)
    return {k: g[k] for k in enc}


# -- convolutional span head -------------------------------------------------

def _head_features(embeddings, pack: QueryPack):
    return np.concatenate([embeddings[pack.doc_slot], pack.meta], axis=1)


def conv_head(embeddings: np.ndarray, pack: QueryPack, model: Model) -> ScoreGrid:
    """Width-i kernels over (embedding ++ metadata) rows produce row i of the grid."""
    K, L = model.dims.K, model.dims.L
    F = _head_features(embeddings, pack)
    n = len(F)
    if n > L:
        raise ValueError(f"window of {n} tokens exceeds L={L}")
    logits = np.zeros((K, L))
    for i in range(1, min(K, n) + 1):
        P = F @ model.head[f"k{i}"].T
        c = n - i + 1
        row = np.full(c, float(model.head[f"b{i}"]))
        for j in range(i):
            row += P[j:j + c, j]
        logits[i - 1, :c] = row
    return ScoreGrid(logits, fit_mask(K, L, n))


def _head_backward(dlogits, F, model: Model):
    K = model.dims.K
    n = len(F)
    dF = np.zeros_like(F)
    g = {}
    for i in range(1, K + 1):
        kern = model.head[f"k{i}"]
        if i > n:
            g[f"k{i}"] = np.zeros_like(kern)
            g[f"b{i}"] = np.zeros(())
            continue
        c = n - i + 1
        drow = dlogits[i - 1, :c]
        dP = np.zeros((n, i))
        for j in range(i):
            dP[j:j + c, j] = drow
        g[f"k{i}"] = dP.T @ F
        g[f"b{i}"] = np.array(drow.sum())
        dF += dP @ kern
    return dF, g


# -- loss --------------------------------------------------------------------

def bce_loss(grid: ScoreGrid, target: SpanMatrix) -> float:
    z, t, mask = grid.logits, target.values, grid.mask
    if z.shape != t.shape:
        raise ValueError(f"grid shape {z.shape} != target shape {t.shape}")
    count = mask.sum()
    if count == 0:
        raise ValueError("every cell is masked")
    cell = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    return float(cell[mask].sum() / count)


def _bce_grad(grid: ScoreGrid, target: SpanMatrix):
    mask = grid.mask
    return np.where(mask, sigmoid(grid.logits) - target.values, 0.0) / mask.sum()


def forward(pack: QueryPack, model: Model) -> ScoreGrid:
    return conv_head(encode(pack, model), pack, model)


def predict(pack: QueryPack, model: Model) -> SpanMatrix:
    return forward(pack, model).probabilities()


def backward(pack: QueryPack, model: Model, target: SpanMatrix) -> tuple[float, dict]:
    """Loss and exact gradients for every parameter, keyed like ``Model.params()``."""
    H, cache = _encode(pack, model.encoder, model.dims)
    grid = conv_head(H, pack, model)
    loss = bce_loss(grid, target)
    F = _head_features(H, pack)
    dF, ghead = _head_backward(_bce_grad(grid, target), F, model)
    dH = np.zeros_like(H)
    dH[pack.doc_slot] = dF[:, :model.dims.dim]
    genc = _encode_backward(dH, cache, model.encoder, model.dims)
    grads = {f"enc.{k}": v for k, v in genc.items()}
    grads.update({f"head.{k}": v for k, v in ghead.items()})
    return loss, grads


# -- checkpoints ---------------------------------------------------------------

MAGIC = b"SEGCOREF-CKPT 1\n"


def save_checkpoint(model: Model, path) -> None:
    """Write ``MAGIC``, one JSON header line, then raw little-endian float64 groups.

    The header lists the dims (V, S, m, h, n, f, K, L) and every parameter
    group with its shape, in the order the data follows: ``tok``, ``pos``,
    per layer ``ln1_g ln1_b wq wk wv wo ln2_g ln2_b w1 b1 w2 b2``, then
    ``lnf_g lnf_b``, then head ``k1 b1 ... kK bK``.
    """
    params = model.params()
    header = {"dims": asdict(model.dims),
              "groups": [[k, list(v.shape)] for k, v in params.items()]}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for v in params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> Model:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not a checkpoint")
    nl = data.index(b"\n", len(MAGIC))
    header = json.loads(data[len(MAGIC):nl])
    dims = Dims(**header["dims"])
    pos = nl + 1
    enc, head = {}, {}
    for name, shape in header["groups"]:
        size = int(np.prod(shape)) * 8
        arr = np.frombuffer(data[pos:pos + size], dtype="<f8").reshape(shape).astype(np.float64)
        pos += size
        section, key = name.split(".", 1)
        (enc if section == "enc" else head)[key] = arr
    want_enc, want_head = param_shapes(dims)
    if list(enc) != list(want_enc) or list(head) != list(want_head) or pos != len(data):
        raise ValueError(f"{path}: parameter groups do not match header dims")
    return Model(dims, enc, head)
