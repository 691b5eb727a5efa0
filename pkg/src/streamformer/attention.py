"""Multi-head attention over stream batches.

One MultiHeadAttention module is applied to every stream with the same
weights, which is what keeps the stream construction permutation
equivariant: attending within stream i never reads stream j, and the
fused variants read only the stream-symmetric aggregate.

Rotary position encoding is applied to queries and keys inside every
attention call, each side rotated by its own absolute positions, so all
score logits depend on relative offsets only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .streams import StreamBatch, aggregate


@dataclass(frozen=True)
class AttentionConfig:
    d_model: int
    heads: int
    rope_base: float = 10000.0

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise DimensionError("d_model must divide evenly into heads")
        if (self.d_model // self.heads) % 2 != 0:
            raise DimensionError("head width must be even for rotary pairs")

    @property
    def head_dim(self):
        return self.d_model // self.heads


@dataclass(frozen=True)
class AttentionMask:
    """Binary keep-mask over (query, key) pairs, (B, Lq, Lk).

    kind is "padding" or "look-ahead"; look-ahead masks are lower
    triangular intersected with key padding.  Construction rejects masks
    that would starve a query row of every key.
    """

    kind: str
    bits: np.ndarray

    def __post_init__(self):
        if self.kind not in ("padding", "look-ahead"):
            raise ContractError(f"unknown mask kind {self.kind!r}")
        if self.bits.ndim != 3:
            raise DimensionError("mask bits must be (B, Lq, Lk)")
        if not self.bits.any(axis=-1).all():
            raise ContractError("every query row needs at least one unmasked key")


def padding_mask(key_lengths, Lq, Lk):
    """Keep only real (non-padding) key positions, for every query row."""
    key_lengths = np.asarray(key_lengths)
    keep = np.arange(Lk)[None, :] < key_lengths[:, None]          # (B, Lk)
    bits = np.broadcast_to(keep[:, None, :], (len(key_lengths), Lq, Lk)).copy()
    return AttentionMask("padding", bits)


def look_ahead_mask(key_lengths, L):
    """Causal mask: query t sees keys <= t that are also real tokens."""
    key_lengths = np.asarray(key_lengths)
    tri = np.tril(np.ones((L, L), dtype=bool))
    keep = np.arange(L)[None, :] < key_lengths[:, None]
    bits = tri[None, :, :] & keep[:, None, :]
    return AttentionMask("look-ahead", bits)


class MultiHeadAttention:
    """Projections + rotary scaled dot-product attention, batched over
    leading (B, stream) axes.  Keys may carry a size-1 stream axis; they
    then broadcast to every query stream, sharing one buffer."""

    def __init__(self, prefix, cfg: AttentionConfig, rng):
        d = cfg.d_model
        bound = 1.0 / np.sqrt(d)
        self.cfg = cfg
        self.wq = T.Parameter(f"{prefix}.wq", rng.uniform(-bound, bound, (d, d)))
        self.wk = T.Parameter(f"{prefix}.wk", rng.uniform(-bound, bound, (d, d)))
        self.wv = T.Parameter(f"{prefix}.wv", rng.uniform(-bound, bound, (d, d)))
        self.wo = T.Parameter(f"{prefix}.wo", rng.uniform(-bound, bound, (d, d)))

    def parameters(self):
        return [self.wq, self.wk, self.wv, self.wo]

    def _heads(self, x):
        b, k, L, d = x.shape
        h, hd = self.cfg.heads, self.cfg.head_dim
        return T.transpose(T.reshape(x, (b, k, L, h, hd)), (0, 1, 3, 2, 4))

    def __call__(self, q_in, k_in, v_in, mask, q_positions, k_positions):
        """q_in (B,k,Lq,d); k_in/v_in (B,k|1,Lk,d); mask AttentionMask or None.

        Returns (output (B,k,Lq,d), attention weights ndarray (B,k,h,Lq,Lk)).
        """
        if q_in.ndim != 4 or k_in.ndim != 4:
            raise DimensionError("attention inputs must be (B, k, L, d)")
        q = self._heads(T.matmul(q_in, self.wq.tensor))
        k = self._heads(T.matmul(k_in, self.wk.tensor))
        v = self._heads(T.matmul(v_in, self.wv.tensor))
        q = T.rope_rotate(q, np.asarray(q_positions, float), self.cfg.rope_base)
        k = T.rope_rotate(k, np.asarray(k_positions, float), self.cfg.rope_base)
        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 2, 4, 3))),
                       1.0 / np.sqrt(self.cfg.head_dim))
        keep = None
        if mask is not None:
            keep = mask.bits[:, None, None, :, :]
        weights = T.softmax_rows(scores, keep)
        ctx = T.matmul(weights, v)                       # (B,k,h,Lq,hd)
        b, kk, h, Lq, hd = ctx.shape
        merged = T.reshape(T.transpose(ctx, (0, 1, 3, 2, 4)), (b, kk, Lq, h * hd))
        return T.matmul(merged, self.wo.tensor), weights.data


def _passthrough_inactive(H, new_hidden):
    act = H.active[:, :, None, None]
    return H.with_hidden(T.add(T.mul(new_hidden, act),
                               T.mul(H.hidden, 1.0 - act)))


def per_stream_attention(mha, H, mask):
    """Self-attention run independently inside each active stream.

    Inactive stream slots pass through untouched.  With k=1 this is plain
    self-attention.  Returns (StreamBatch of raw attention outputs, weights).
    """
    pos = np.arange(H.length)
    out, w = mha(H.hidden, H.hidden, H.hidden, mask, pos, pos)
    return _passthrough_inactive(H, out), w


def aggregated_attention(mha, H, mask):
    """Queries stay per-stream; keys and values are the fused aggregate.

    The aggregate is computed once and broadcast, so every stream attends
    over the identical key buffer.
    """
    pos = np.arange(H.length)
    fused = aggregate(H)
    kv = T.reshape(fused, (H.batch, 1, H.length, fused.shape[-1]))
    out, w = mha(H.hidden, kv, kv, mask, pos, pos)
    return _passthrough_inactive(H, out), w


def cross_attention(mha, H_dec, H_enc, mode, mask):
    """Decoder-to-encoder attention in one of two modes.

    "per": decoder stream i attends encoder stream i (streams must be
    aligned, which holds because the decoder reuses the encoder's stream
    ids).  "agg": every decoder stream attends the fused encoder sequence.
    """
    q_pos = np.arange(H_dec.length)
    k_pos = np.arange(H_enc.length)
    if mode == "per":
        if H_dec.k != H_enc.k or not np.array_equal(H_dec.stream_ids, H_enc.stream_ids):
            raise ContractError("per-stream cross attention needs aligned streams")
        kv = H_enc.hidden
    elif mode == "agg":
        fused = aggregate(H_enc)
        kv = T.reshape(fused, (H_enc.batch, 1, H_enc.length, fused.shape[-1]))
    else:
        raise ContractError(f"unknown cross attention mode {mode!r}")
    out, w = mha(H_dec.hidden, kv, kv, mask, q_pos, k_pos)
    return _passthrough_inactive(H_dec, out), w
