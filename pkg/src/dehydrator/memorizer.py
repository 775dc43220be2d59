"""Single-layer decoder-only transformer that memorizes the record corpus.

Pure NumPy with hand-written backward passes. The block is pre-norm and has
three sublayers, each with its own layer norm and residual connection:

1. causal multi-head self-attention over the residual stream,
2. causal multi-head attention whose keys and values come from the embedded
   input (token + learned position), the "memory" input of a standard decoder
   layer wired to the sequence itself,
3. a GELU feedforward ``embed_dim -> ff_dim -> embed_dim``.

The output projection is tied to the token embedding and has its own bias.
With this layout the parameter counts land on the reference capacity sizes
(C1 about 18K through C6 about 2.38M).
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ContextOverflow, CorruptArtifact, InvalidConfig, NonFiniteLoss, VersionMismatch
from .serializer import EOR_ID, PAD_ID, VOCAB_SIZE, SegmentedCorpus, sliding_segments

CAPACITIES = {
    "C1": (32, 1, 128),
    "C2": (64, 2, 256),
    "C3": (128, 4, 512),
    "C4": (192, 6, 768),
    "C5": (256, 8, 1024),
    "C6": (384, 12, 1536),
}

CHECKPOINT_MAGIC = b"DHYCKPT\x00"
CHECKPOINT_VERSION = 1
INIT_STD = 0.02
LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int
    n_heads: int
    ff_dim: int
    context_len: int
    vocab_size: int = VOCAB_SIZE
    seed: int = 0
    capacity_label: str | None = None

    @classmethod
    def from_capacity(cls, label: str, context_len: int, seed: int = 0) -> "ModelConfig":
        try:
            d, h, ff = CAPACITIES[label]
        except KeyError:
            raise InvalidConfig(f"unknown capacity {label!r}; choose from {sorted(CAPACITIES)}") from None
        return cls(d, h, ff, context_len, VOCAB_SIZE, seed, label)

    def validate(self) -> None:
        for name in ("embed_dim", "n_heads", "ff_dim", "context_len", "vocab_size"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.embed_dim % self.n_heads:
            raise InvalidConfig(f"embed_dim {self.embed_dim} is not divisible by n_heads {self.n_heads}")
        if self.capacity_label is not None:
            expected = CAPACITIES.get(self.capacity_label)
            if expected != (self.embed_dim, self.n_heads, self.ff_dim):
                raise InvalidConfig(f"{self.capacity_label} does not match {expected}")

    def to_dict(self) -> dict:
        return {
            "capacity_label": self.capacity_label,
            "embed_dim": self.embed_dim,
            "n_heads": self.n_heads,
            "ff_dim": self.ff_dim,
            "context_len": self.context_len,
            "vocab_size": self.vocab_size,
            "seed": self.seed,
        }


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in checkpoint order."""
    d, ff, V, C = cfg.embed_dim, cfg.ff_dim, cfg.vocab_size, cfg.context_len
    shapes: dict[str, tuple[int, ...]] = {"tok_emb": (V, d), "pos_emb": (C, d)}
    for ln, attn in (("ln1", "attn"), ("ln2", "mem")):
        shapes[f"{ln}_g"] = (d,)
        shapes[f"{ln}_b"] = (d,)
        for p in "qkvo":
            shapes[f"{attn}_w{p}"] = (d, d)
            shapes[f"{attn}_b{p}"] = (d,)
    shapes.update(
        ln3_g=(d,), ln3_b=(d,), ff_w1=(d, ff), ff_b1=(ff,), ff_w2=(ff, d), ff_b2=(d,), out_b=(V,)
    )
    return shapes


def count_params(cfg: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())


@dataclass
class ModelState:
    config: ModelConfig
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def digest(self) -> str:
        return hashlib.sha256(to_checkpoint(self)).hexdigest()


def init_model(cfg: ModelConfig) -> ModelState:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("_g"):
            params[name] = np.ones(shape, dtype=np.float32)
        elif len(shape) == 1:
            params[name] = np.zeros(shape, dtype=np.float32)
        else:
            params[name] = (rng.standard_normal(shape) * INIT_STD).astype(np.float32)
    return ModelState(cfg, params)


# -- layers ----------------------------------------------------------------------------

def _layernorm(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def _layernorm_back(dy, cache):
    xhat, rstd, g = cache
    red = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(red)
    db = dy.sum(red)
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(-1, keepdims=True) - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def _gelu(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * x * (1.0 + t), t


def _gelu_back(dy, x, t):
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * dt)


def _causal_mask(T: int) -> np.ndarray:
    return np.triu(np.ones((T, T), dtype=bool), k=1)


def _attention(xq, xkv, P, prefix, n_heads, need_cache):
    B, T, d = xq.shape
    hd = d // n_heads
    scale = 1.0 / math.sqrt(hd)

    def split(x):
        return x.reshape(B, T, n_heads, hd).transpose(0, 2, 1, 3)

    q = split(xq @ P[prefix + "_wq"] + P[prefix + "_bq"])
    k = split(xkv @ P[prefix + "_wk"] + P[prefix + "_bk"])
    v = split(xkv @ P[prefix + "_wv"] + P[prefix + "_bv"])
    s = (q @ k.transpose(0, 1, 3, 2)) * scale
    s[..., _causal_mask(T)] = -np.inf
    s -= s.max(-1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(-1, keepdims=True)
    o = (p @ v).transpose(0, 2, 1, 3).reshape(B, T, d)
    out = o @ P[prefix + "_wo"] + P[prefix + "_bo"]
    cache = (xq, xkv, q, k, v, p, o, scale) if need_cache else None
    return out, cache


def _attention_back(dout, cache, P, prefix, G):
    xq, xkv, q, k, v, p, o, scale = cache
    B, T, d = xq.shape
    nh = q.shape[1]
    hd = d // nh
    d2 = dout.reshape(-1, d)
    G[prefix + "_wo"] += o.reshape(-1, d).T @ d2
    G[prefix + "_bo"] += d2.sum(0)
    do = (dout @ P[prefix + "_wo"].T).reshape(B, T, nh, hd).transpose(0, 2, 1, 3)
    dp = do @ v.transpose(0, 1, 3, 2)
    dv = p.transpose(0, 1, 3, 2) @ do
    ds = p * (dp - (dp * p).sum(-1, keepdims=True)) * scale
    dq = ds @ k
    dk = ds.transpose(0, 1, 3, 2) @ q

    def merge(x):
        return x.transpose(0, 2, 1, 3).reshape(-1, d)

    dq, dk, dv = merge(dq), merge(dk), merge(dv)
    xq2 = xq.reshape(-1, d)
    xkv2 = xkv.reshape(-1, d)
    G[prefix + "_wq"] += xq2.T @ dq
    G[prefix + "_bq"] += dq.sum(0)
    G[prefix + "_wk"] += xkv2.T @ dk
    G[prefix + "_bk"] += dk.sum(0)
    G[prefix + "_wv"] += xkv2.T @ dv
    G[prefix + "_bv"] += dv.sum(0)
    dxq = (dq @ P[prefix + "_wq"].T).reshape(B, T, d)
    dxkv = (dk @ P[prefix + "_wk"].T + dv @ P[prefix + "_wv"].T).reshape(B, T, d)
    return dxq, dxkv


def _forward(P, cfg: ModelConfig, ids: np.ndarray, need_cache: bool):
    B, T = ids.shape
    if T > cfg.context_len:
        raise ContextOverflow(T, cfg.context_len)
    h0 = P["tok_emb"][ids] + P["pos_emb"][:T]
    a, c_ln1 = _layernorm(h0, P["ln1_g"], P["ln1_b"])
    att, c_att = _attention(a, a, P, "attn", cfg.n_heads, need_cache)
    h1 = h0 + att
    b, c_ln2 = _layernorm(h1, P["ln2_g"], P["ln2_b"])
    mem, c_mem = _attention(b, h0, P, "mem", cfg.n_heads, need_cache)
    h2 = h1 + mem
    c, c_ln3 = _layernorm(h2, P["ln3_g"], P["ln3_b"])
    pre = c @ P["ff_w1"] + P["ff_b1"]
    act, t = _gelu(pre)
    h3 = h2 + act @ P["ff_w2"] + P["ff_b2"]
    logits = h3 @ P["tok_emb"].T + P["out_b"]
    cache = (ids, c_ln1, c_att, c_ln2, c_mem, c_ln3, c, pre, act, t, h3) if need_cache else None
    return logits, cache


def _backward(P, dlogits, cache, G):
    ids, c_ln1, c_att, c_ln2, c_mem, c_ln3, c, pre, act, t, h3 = cache
    B, T, V = dlogits.shape
    d = h3.shape[-1]
    dl2 = dlogits.reshape(-1, V)
    G["tok_emb"] += dl2.T @ h3.reshape(-1, d)
    G["out_b"] += dl2.sum(0)
    dh3 = dlogits @ P["tok_emb"]

    # feedforward sublayer
    dff = dh3.reshape(-1, d)
    G["ff_w2"] += act.reshape(-1, act.shape[-1]).T @ dff
    G["ff_b2"] += dff.sum(0)
    dpre = _gelu_back(dh3 @ P["ff_w2"].T, pre, t)
    dpre2 = dpre.reshape(-1, dpre.shape[-1])
    G["ff_w1"] += c.reshape(-1, d).T @ dpre2
    G["ff_b1"] += dpre2.sum(0)
    dc = dpre @ P["ff_w1"].T
    dx, dg, db = _layernorm_back(dc, c_ln3)
    G["ln3_g"] += dg
    G["ln3_b"] += db
    dh2 = dh3 + dx

    # memory attention sublayer
    db_, dh0 = _attention_back(dh2, c_mem, P, "mem", G)
    dx, dg, db = _layernorm_back(db_, c_ln2)
    G["ln2_g"] += dg
    G["ln2_b"] += db
    dh1 = dh2 + dx

    # self-attention sublayer
    dxq, dxkv = _attention_back(dh1, c_att, P, "attn", G)
    dx, dg, db = _layernorm_back(dxq + dxkv, c_ln1)
    G["ln1_g"] += dg
    G["ln1_b"] += db
    dh0 = dh0 + dh1 + dx

    G["pos_emb"][:T] += dh0.sum(0)
    onehot = np.zeros((B * T, V), dtype=dh0.dtype)
    onehot[np.arange(B * T), ids.reshape(-1)] = 1.0
    G["tok_emb"] += onehot.T @ dh0.reshape(-1, d)


def _softmax(logits):
    z = logits - logits.max(-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(-1, keepdims=True)


def forward(state: ModelState, ids) -> np.ndarray:
    """Logits ``B x T x vocab`` for a token batch ``B x T``."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    logits, _ = _forward(state.params, state.config, ids, need_cache=False)
    return logits


def loss_and_grads(P, cfg, inputs, targets, normalizer=None, grads=None):
    """Summed-then-normalized cross-entropy over non-pad targets, with gradients.

    ``normalizer`` defaults to the number of non-pad targets in this batch; pass
    the count of the full batch when accumulating over micro-batches.
    """
    logits, cache = _forward(P, cfg, inputs, need_cache=True)
    mask = targets != PAD_ID
    count = normalizer if normalizer is not None else max(int(mask.sum()), 1)
    probs = _softmax(logits)
    B, T, V = probs.shape
    flat_t = targets.reshape(-1)
    rows = np.arange(B * T)
    pflat = probs.reshape(-1, V)
    picked = pflat[rows, flat_t]
    m = mask.reshape(-1)
    loss_sum = float(-np.log(np.maximum(picked[m], 1e-30)).sum())
    dl = pflat.copy()
    dl[rows, flat_t] -= 1.0
    dl *= (m / count)[:, None].astype(dl.dtype)
    if grads is None:
        grads = {k: np.zeros_like(v) for k, v in P.items()}
    _backward(P, dl.reshape(B, T, V), cache, grads)
    return loss_sum / count, loss_sum, grads


def loss_only(P, cfg, inputs, targets) -> float:
    logits, _ = _forward(P, cfg, inputs, need_cache=False)
    probs = _softmax(logits)
    mask = targets != PAD_ID
    B, T, V = probs.shape
    picked = probs.reshape(-1, V)[np.arange(B * T), targets.reshape(-1)]
    m = mask.reshape(-1)
    return float(-np.log(np.maximum(picked[m], 1e-300)).sum() / max(int(m.sum()), 1))


# -- training --------------------------------------------------------------------------

@dataclass
class TrainReport:
    epochs: int
    losses: list[float]
    seconds: float
    early_stopped: bool

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def _adam(state: ModelState, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    if not state.adam_m:
        state.adam_m = {k: np.zeros_like(v) for k, v in state.params.items()}
        state.adam_v = {k: np.zeros_like(v) for k, v in state.params.items()}
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for k, p in state.params.items():
        g = grads[k]
        m = state.adam_m[k]
        v = state.adam_v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.dtype)


def train(
    state: ModelState,
    corpus: SegmentedCorpus,
    max_epochs: int = 5,
    batch: int = 4096,
    lr: float = 1e-3,
    early_stop_delta: float | None = 1e-3,
    micro_batch: int = 1024,
    callback: Callable[[int, float], None] | None = None,
    windows: str = "aligned",
    prefix_repeat: int = 1,
    lr_schedule: str = "constant",
) -> TrainReport:
    """Adam on mean next-token cross-entropy; pad targets carry no loss.

    Stops early once an epoch improves the mean loss by less than
    ``early_stop_delta``. Batch order is drawn from the model seed.

    ``windows="aligned"`` trains on the corpus segments as cut; ``"sliding"``
    trains on a window at every offset (see :func:`sliding_segments`), which
    costs about ``L`` times more per epoch but matches the decode context.
    ``lr_schedule="cosine"`` anneals the rate to zero over ``max_epochs``.
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    cfg = state.config
    if corpus.L != cfg.context_len:
        raise InvalidConfig(f"corpus segment length {corpus.L} != context_len {cfg.context_len}")
    if windows == "aligned":
        segs = corpus.segments
    elif windows == "sliding":
        segs = sliding_segments(corpus, prefix_repeat)
    else:
        raise InvalidConfig(f"unknown window mode {windows!r}")
    if lr_schedule not in ("constant", "cosine"):
        raise InvalidConfig(f"unknown lr schedule {lr_schedule!r}")
    total_steps = max_epochs * -(-len(segs) // batch)
    inputs_all, targets_all = segs[:, :-1], segs[:, 1:]
    rng = np.random.default_rng([cfg.seed, 1])
    P = state.params
    losses: list[float] = []
    early = False
    t0 = time.perf_counter()
    for epoch in range(max_epochs):
        order = rng.permutation(len(segs))
        total_loss = 0.0
        total_tok = 0
        for step, lo in enumerate(range(0, len(order), batch)):
            idx = order[lo : lo + batch]
            n_tok = int((targets_all[idx] != PAD_ID).sum())
            if n_tok == 0:
                continue
            grads = {k: np.zeros_like(v) for k, v in P.items()}
            batch_sum = 0.0
            for mlo in range(0, len(idx), micro_batch):
                midx = idx[mlo : mlo + micro_batch]
                _, s, _ = loss_and_grads(P, cfg, inputs_all[midx], targets_all[midx], n_tok, grads)
                batch_sum += s
            if not math.isfinite(batch_sum):
                raise NonFiniteLoss(epoch, step, batch_sum)
            rate = lr
            if lr_schedule == "cosine":
                rate = 0.5 * lr * (1.0 + math.cos(math.pi * (epoch * -(-len(segs) // batch) + step) / total_steps))
            _adam(state, grads, rate)
            total_loss += batch_sum
            total_tok += n_tok
        epoch_loss = total_loss / max(total_tok, 1)
        if not math.isfinite(epoch_loss):
            raise NonFiniteLoss(epoch, -1, epoch_loss)
        losses.append(epoch_loss)
        if callback is not None:
            callback(epoch, epoch_loss)
        if early_stop_delta is not None and len(losses) >= 2 and losses[-2] - losses[-1] < early_stop_delta:
            early = epoch + 1 < max_epochs
            break
    return TrainReport(len(losses), losses, time.perf_counter() - t0, early)


# -- generation ------------------------------------------------------------------------

class Generation(NamedTuple):
    tokens: list[int]
    truncated: bool


def generate_batch(
    state: ModelState,
    prompts: Sequence[Sequence[int]],
    max_len: int,
    terminator: int = EOR_ID,
    fixes: Sequence[Mapping[int, int] | None] | None = None,
) -> list[Generation]:
    """Greedy decoding for several prompts at once.

    The context of each step is the last ``context_len`` tokens. ``fixes``
    optionally maps stream positions to forced tokens; a forced token replaces
    the model's choice at that position before it is fed back.
    """
    C = state.config.context_len
    seqs = [list(map(int, p)) for p in prompts]
    for s in seqs:
        if len(s) >= C:
            raise ContextOverflow(len(s), C - 1)
    fixes = list(fixes) if fixes is not None else [None] * len(seqs)
    truncated = [False] * len(seqs)
    active = [i for i, s in enumerate(seqs) if len(s) < max_len]
    for i, s in enumerate(seqs):
        if len(s) >= max_len:
            truncated[i] = True
    while active:
        groups: dict[int, list[int]] = {}
        for i in active:
            groups.setdefault(min(len(seqs[i]), C), []).append(i)
        still = []
        for width, members in sorted(groups.items()):
            ctx = np.array([seqs[i][-width:] for i in members], dtype=np.int64)
            logits = forward(state, ctx)[:, -1, :]
            choice = np.argmax(logits, axis=-1)
            for i, tok in zip(members, choice):
                pos = len(seqs[i])
                f = fixes[i]
                tok = int(f.get(pos, tok)) if f else int(tok)
                seqs[i].append(tok)
                if tok == terminator:
                    continue
                if len(seqs[i]) >= max_len:
                    truncated[i] = True
                    continue
                still.append(i)
        active = sorted(still)
    return [Generation(s, t) for s, t in zip(seqs, truncated)]


def generate(
    state: ModelState,
    head: Sequence[int],
    max_len: int,
    terminator: int = EOR_ID,
    fixes: Mapping[int, int] | None = None,
) -> Generation:
    return generate_batch(state, [head], max_len, terminator, [fixes])[0]


def teacher_forced_predictions(
    state: ModelState, streams: Sequence[np.ndarray], chunk: int = 2048
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Greedy prediction and top-1/top-2 logit margin for every position >= 1.

    Position ``p`` is predicted from ``stream[max(0, p - C):p]``, which is what
    greedy decoding sees when every earlier token is correct. Entry ``p - 1`` of
    each returned array refers to position ``p``. Streams shorter than ``C`` are
    right-padded; causal attention keeps the padding from affecting them.
    """
    C = state.config.context_len
    if not streams:
        return []
    windows = []
    spans = []
    n_rows = 0
    for s in streams:
        s = np.asarray(s, dtype=np.int64)
        n_pos = len(s) - 1
        if len(s) < C:
            s = np.concatenate((s, np.full(C - len(s), PAD_ID, dtype=np.int64)))
        # one full window covers positions 1..C; each later position gets its own
        tail = np.lib.stride_tricks.sliding_window_view(s[1:-1], C) if len(s) > C + 1 else s[:0].reshape(0, C)
        windows.append(s[None, :C])
        windows.append(tail)
        spans.append((n_rows, len(tail), n_pos))
        n_rows += 1 + len(tail)
    flat = np.concatenate(windows)
    pred = np.empty((len(flat), C), dtype=np.int64)
    marg = np.empty((len(flat), C), dtype=np.float32)
    for lo in range(0, len(flat), chunk):
        logits = forward(state, flat[lo : lo + chunk])
        top2 = np.partition(logits, -2, axis=-1)[..., -2:]
        pred[lo : lo + chunk] = np.argmax(logits, axis=-1)
        marg[lo : lo + chunk] = top2[..., 1] - top2[..., 0]
    out = []
    for start, n_tail, n_pos in spans:
        rows = slice(start + 1, start + 1 + n_tail)
        out.append(
            (
                np.concatenate((pred[start], pred[rows, -1]))[:n_pos],
                np.concatenate((marg[start], marg[rows, -1]))[:n_pos],
            )
        )
    return out


# -- verification ------------------------------------------------------------------------

def grad_check(
    cfg: ModelConfig | None = None,
    h: float = 1e-4,
    seed: int = 0,
    batch: int = 3,
    T: int = 6,
    floor: float = 1e-6,
) -> float:
    """Largest per-group relative error between analytic and central-difference gradients.

    For each parameter group the error is ``|g_a - g_n| / max(|g_a| + |g_n|, floor)``
    in the 2-norm, evaluated in float64 on a random batch. The floor keeps
    groups whose true gradient is identically zero (key biases: softmax is
    shift-invariant per row) from dividing rounding noise by rounding noise.
    """
    if cfg is None:
        cfg = ModelConfig(8, 1, 16, T, VOCAB_SIZE, seed)
    state = init_model(cfg)
    rng = np.random.default_rng(seed + 7)
    P = {k: (v.astype(np.float64) + rng.standard_normal(v.shape) * 0.3) for k, v in state.params.items()}
    inputs = rng.integers(0, cfg.vocab_size, size=(batch, T))
    targets = rng.integers(0, cfg.vocab_size, size=(batch, T))
    targets[0, -1] = PAD_ID
    _, _, analytic = loss_and_grads(P, cfg, inputs, targets)
    worst = 0.0
    for name, p in P.items():
        numeric = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = loss_only(P, cfg, inputs, targets)
            p[i] = old - h
            down = loss_only(P, cfg, inputs, targets)
            p[i] = old
            numeric[i] = (up - down) / (2 * h)
        a = analytic[name]
        denom = max(np.linalg.norm(a) + np.linalg.norm(numeric), floor)
        worst = max(worst, float(np.linalg.norm(a - numeric) / denom))
    return worst


# -- checkpoint -------------------------------------------------------------------------------

def to_checkpoint(state: ModelState) -> bytes:
    """Versioned header followed by little-endian float32 tensors in declared order."""
    shapes = param_shapes(state.config)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": state.config.to_dict(),
        "dtype": "<f4",
        "params": [[name, list(shape)] for name, shape in shapes.items()],
    }
    head = json.dumps(header, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(state.params[n], dtype="<f4").tobytes() for n in shapes)
    return CHECKPOINT_MAGIC + struct.pack("<I", len(head)) + head + body


def from_checkpoint(data: bytes) -> ModelState:
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CorruptArtifact("not a model checkpoint")
    try:
        off = len(CHECKPOINT_MAGIC)
        (hlen,) = struct.unpack_from("<I", data, off)
        off += 4
        header = json.loads(data[off : off + hlen])
        off += hlen
        if header.get("version") != CHECKPOINT_VERSION:
            raise VersionMismatch(header.get("version"), CHECKPOINT_VERSION)
        c = header["config"]
        cfg = ModelConfig(
            c["embed_dim"], c["n_heads"], c["ff_dim"], c["context_len"], c["vocab_size"], c["seed"], c["capacity_label"]
        )
        params = {}
        for name, shape in header["params"]:
            n = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape)
            params[name] = arr.astype(np.float32)
            off += 4 * n
    except (struct.error, ValueError, KeyError, TypeError) as exc:
        raise CorruptArtifact(f"unreadable checkpoint: {exc}") from None
    if off != len(data):
        raise CorruptArtifact("checkpoint has trailing bytes")
    if set(params) != set(param_shapes(cfg)):
        raise CorruptArtifact("checkpoint parameter set does not match its config")
    return ModelState(cfg, params)
