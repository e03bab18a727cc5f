"""Dual-branch attention encoder: raw waveform and magnitude spectrum.

Both branches share one architecture: patch embedding with learned positions,
``depth`` attention blocks, mean pooling to a single vector. A projection
head per branch maps the pooled feature into the alignment space, and a
shared linear classifier produces fault logits from either branch's pooled
feature. During self-supervised pretraining an extra instance head classifies
views by their source-sample index.

Attention uses a single learned query map per head: the scores are
``(H Q_m) H^T / sqrt(d)`` and the values are ``H`` itself, with no separate
key or value projections. Head outputs are concatenated and projected back to
the model width by ``W_o``.

Parameters live in one flat :class:`~tfmeta.tensor.ParamSet` under
hierarchical names (``t/...`` time branch, ``f/...`` frequency branch,
``head/...``, ``cls/...``, ``inst/...``) so the meta-learning loop can swap
adapted copies functionally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .spectral import magnitude_rows

CLASSIFIER_PREFIXES = ("cls/", "inst/")


@dataclass
class ModelConfig:
    window: int = 2048
    patch: int = 128
    d_model: int = 64
    d_proj: int = 32
    heads: int = 4
    depth: int = 2
    n_classes: int = 3

    def __post_init__(self):
        if min(self.window, self.patch, self.d_model, self.d_proj) < 1:
            raise ContractError("model dimensions must be positive")
        if self.heads < 1 or self.depth < 0 or self.n_classes < 2:
            raise ContractError("invalid heads/depth/class count")

    @property
    def seq_len(self) -> int:
        return -(-self.window // self.patch)


@dataclass
class AttentionParams:
    """Per-head query maps (d x d each) and the output projection W_o (d x M*d)."""

    queries: list[T.Tensor]
    w_o: T.Tensor

    def __post_init__(self):
        d = self.queries[0].shape[-1]
        if self.w_o.shape != (d, len(self.queries) * d):
            raise DimensionError(
                f"w_o must be (d, M*d), got {self.w_o.shape} for M={len(self.queries)}"
            )


@dataclass
class BlockParams:
    attn: AttentionParams
    ff_w1: T.Tensor
    ff_b1: T.Tensor
    ff_w2: T.Tensor
    ff_b2: T.Tensor
    ln1_gain: T.Tensor
    ln1_bias: T.Tensor
    ln2_gain: T.Tensor
    ln2_bias: T.Tensor


@dataclass
class EncoderParams:
    embed_w: T.Tensor  # (patch, d)
    embed_b: T.Tensor  # (d,)
    positions: T.Tensor  # (seq_len, d)
    blocks: list[BlockParams] = field(default_factory=list)


@dataclass
class BranchOutput:
    pooled_time: T.Tensor
    z_time: T.Tensor
    logits_time: T.Tensor
    pooled_freq: T.Tensor | None = None
    z_freq: T.Tensor | None = None
    logits_freq: T.Tensor | None = None
    inst_time: T.Tensor | None = None
    inst_freq: T.Tensor | None = None


# ---------------------------------------------------------------------------
# initialization


def _uniform(rng, fan_in, *shape):
    bound = 1.0 / math.sqrt(fan_in)
    return T.parameter(rng.uniform(-bound, bound, size=shape))


def init_params(cfg: ModelConfig, n_instance_ids: int, seed: int) -> T.ParamSet:
    """Seeded uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] initialization.

    Layer-norm gains start at one and biases at zero so every block begins
    as a well-scaled identity-plus-residual map.
    """
    rng = np.random.default_rng(seed)
    p = T.ParamSet()
    d, m = cfg.d_model, cfg.heads
    for branch in ("t", "f"):
        p[f"{branch}/embed/w"] = _uniform(rng, cfg.patch, cfg.patch, d)
        p[f"{branch}/embed/b"] = _uniform(rng, cfg.patch, d)
        p[f"{branch}/embed/pos"] = _uniform(rng, d, cfg.seq_len, d)
        for b in range(cfg.depth):
            base = f"{branch}/block{b}"
            for h in range(m):
                p[f"{base}/attn/q{h}"] = _uniform(rng, d, d, d)
            p[f"{base}/attn/wo"] = _uniform(rng, m * d, d, m * d)
            p[f"{base}/ff/w1"] = _uniform(rng, d, d, 4 * d)
            p[f"{base}/ff/b1"] = _uniform(rng, d, 4 * d)
            p[f"{base}/ff/w2"] = _uniform(rng, 4 * d, 4 * d, d)
            p[f"{base}/ff/b2"] = _uniform(rng, 4 * d, d)
            p[f"{base}/ln1/g"] = T.parameter(np.ones(d))
            p[f"{base}/ln1/b"] = T.parameter(np.zeros(d))
            p[f"{base}/ln2/g"] = T.parameter(np.ones(d))
            p[f"{base}/ln2/b"] = T.parameter(np.zeros(d))
    for head in ("gt", "gf"):
        p[f"head/{head}/w1"] = _uniform(rng, d, d, d)
        p[f"head/{head}/b1"] = _uniform(rng, d, d)
        p[f"head/{head}/w2"] = _uniform(rng, d, d, cfg.d_proj)
        p[f"head/{head}/b2"] = _uniform(rng, d, cfg.d_proj)
    p["cls/w"] = _uniform(rng, d, d, cfg.n_classes)
    p["cls/b"] = _uniform(rng, d, cfg.n_classes)
    p["inst/w"] = _uniform(rng, d, d, n_instance_ids)
    p["inst/b"] = _uniform(rng, d, n_instance_ids)
    return p


def attention_view(params: T.ParamSet, base: str, heads: int) -> AttentionParams:
    return AttentionParams(
        queries=[params[f"{base}/attn/q{h}"] for h in range(heads)],
        w_o=params[f"{base}/attn/wo"],
    )


def encoder_view(params: T.ParamSet, branch: str, cfg: ModelConfig) -> EncoderParams:
    blocks = []
    for b in range(cfg.depth):
        base = f"{branch}/block{b}"
        blocks.append(
            BlockParams(
                attn=attention_view(params, base, cfg.heads),
                ff_w1=params[f"{base}/ff/w1"],
                ff_b1=params[f"{base}/ff/b1"],
                ff_w2=params[f"{base}/ff/w2"],
                ff_b2=params[f"{base}/ff/b2"],
                ln1_gain=params[f"{base}/ln1/g"],
                ln1_bias=params[f"{base}/ln1/b"],
                ln2_gain=params[f"{base}/ln2/g"],
                ln2_bias=params[f"{base}/ln2/b"],
            )
        )
    return EncoderParams(
        embed_w=params[f"{branch}/embed/w"],
        embed_b=params[f"{branch}/embed/b"],
        positions=params[f"{branch}/embed/pos"],
        blocks=blocks,
    )


# ---------------------------------------------------------------------------
# forward ops


def multi_head_attention(h: T.Tensor, p: AttentionParams) -> T.Tensor:
    """Apply every head to h (.., L, d) and project back to (.., L, d)."""
    d = h.shape[-1]
    inv = 1.0 / math.sqrt(d)
    outputs = []
    h_t = T.transpose(h)
    for q in p.queries:
        queries = T.matmul(h, q)
        scores = T.scale(T.matmul(queries, h_t), inv)
        outputs.append(T.matmul(T.softmax_rows(scores), h))
    return T.matmul(T.concat(outputs, axis=-1), T.transpose(p.w_o))


def attention_matrices(h: T.Tensor, p: AttentionParams) -> list[np.ndarray]:
    """The row-stochastic attention weights of each head (for inspection)."""
    d = h.shape[-1]
    inv = 1.0 / math.sqrt(d)
    mats = []
    with T.no_grad():
        for q in p.queries:
            scores = T.scale(T.matmul(T.matmul(h, q), T.transpose(h)), inv)
            mats.append(T.softmax_rows(scores).data)
    return mats


def embed(x, enc: EncoderParams, patch: int) -> T.Tensor:
    """Patchify rows of x into (B, L, d) tokens with learned positions.

    Inputs whose length is not a multiple of the patch size are zero padded.
    """
    arr = x.data if isinstance(x, T.Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    n, t = arr.shape
    l = -(-t // patch)
    max_l = enc.positions.shape[0]
    if l > max_l:
        raise DimensionError(
            f"input needs {l} positions but the encoder holds {max_l}"
        )
    if t != l * patch:
        padded = np.zeros((n, l * patch))
        padded[:, :t] = arr
        arr = padded
    tokens = T.matmul(T.Tensor(arr.reshape(n, l, patch)), enc.embed_w)
    pos = enc.positions if l == max_l else T.narrow(enc.positions, 0, 0, l)
    return T.add(T.add(tokens, enc.embed_b), pos)


def _block(h: T.Tensor, blk: BlockParams) -> T.Tensor:
    attended = multi_head_attention(h, blk.attn)
    h = T.layer_norm(T.add(h, attended), blk.ln1_gain, blk.ln1_bias)
    hidden = T.relu(T.add(T.matmul(h, blk.ff_w1), blk.ff_b1))
    ff = T.add(T.matmul(hidden, blk.ff_w2), blk.ff_b2)
    return T.layer_norm(T.add(h, ff), blk.ln2_gain, blk.ln2_bias)


def transformer_encode(h: T.Tensor, enc: EncoderParams) -> T.Tensor:
    """Run the block stack and mean-pool positions to one vector per row."""
    for blk in enc.blocks:
        h = _block(h, blk)
    return T.mean(h, axis=-2)


def _projection(pooled: T.Tensor, params: T.ParamSet, head: str) -> T.Tensor:
    hidden = T.relu(T.linear(pooled, params[f"head/{head}/w1"], params[f"head/{head}/b1"]))
    return T.linear(hidden, params[f"head/{head}/w2"], params[f"head/{head}/b2"])


def _as_batch(x) -> np.ndarray:
    from .augment import AugmentedView
    from .spectral import Signal

    if isinstance(x, AugmentedView):
        x = x.signal
    if isinstance(x, Signal):
        x = x.samples
    arr = np.asarray(x, dtype=np.float64)
    return arr[None, :] if arr.ndim == 1 else arr


def forward_branches(
    x, params: T.ParamSet, cfg: ModelConfig, instance: bool = False, freq: bool = True
) -> BranchOutput:
    """Encode a batch through both branches (or just time when freq=False).

    The frequency branch consumes the 2/T-scaled magnitude spectrum of each
    row; the transform itself is not differentiated (inputs are data, not
    parameters).
    """
    arr = _as_batch(x)
    t_enc = encoder_view(params, "t", cfg)
    pooled_t = transformer_encode(embed(arr, t_enc, cfg.patch), t_enc)
    out = BranchOutput(
        pooled_time=pooled_t,
        z_time=_projection(pooled_t, params, "gt"),
        logits_time=T.linear(pooled_t, params["cls/w"], params["cls/b"]),
    )
    if instance:
        out.inst_time = T.linear(pooled_t, params["inst/w"], params["inst/b"])
    if freq:
        f_enc = encoder_view(params, "f", cfg)
        pooled_f = transformer_encode(
            embed(magnitude_rows(arr), f_enc, cfg.patch), f_enc
        )
        out.pooled_freq = pooled_f
        out.z_freq = _projection(pooled_f, params, "gf")
        out.logits_freq = T.linear(pooled_f, params["cls/w"], params["cls/b"])
        if instance:
            out.inst_freq = T.linear(pooled_f, params["inst/w"], params["inst/b"])
    return out


def predict(
    x, params: T.ParamSet, cfg: ModelConfig, use_freq: bool = True
) -> np.ndarray:
    """Class predictions: argmax of the (fused) branch logits."""
    with T.no_grad():
        out = forward_branches(x, params, cfg, freq=use_freq)
        logits = out.logits_time.data
        if use_freq:
            logits = logits + out.logits_freq.data
    return np.argmax(logits, axis=-1)
