"""Encoder-decoder transformer over parallel embedding streams.

The architecture is built so renaming interchangeable symbols cannot change
what the model computes: renamings permute the streams, every stream-wise
component is weight-shared, stream mixing happens only through the
symmetric aggregate, and the projection reads each symbol's score off its
own stream.  The embedding table is tied three ways (encoder input,
decoder input, output projection share one buffer).

Layer composition follows two toggled stacks:

  encoder: [EP per-stream self-attention] [EA aggregated attention] ffn
  decoder: [DP masked per-stream self-attention] [DA masked aggregated
           attention] cross-attention per configured mode (CP per-stream,
           CA aggregated) ffn

Each enabled sublayer is wrapped as norm(x + dropout(sub(x))); disabling a
toggle removes the sublayer and its norm parameters entirely.

A conventional transformer with one stream and a full vocabulary table
(FlatVocabTransformer) is included as the non-invariant baseline.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .attention import (AttentionConfig, MultiHeadAttention, cross_attention,
                        aggregated_attention, look_ahead_mask, padding_mask,
                        per_stream_attention)
from .errors import ContractError, VocabularyError
from .streams import (EOS_ID, SOS_ID, StreamBatch, Vocabulary, aggregate,
                      pack_sequences, project, sequence_stream_ids)

CROSS_MODES = ("per", "agg")


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    heads: int = 4
    ffn_dim: int = 128
    enc_layers: int = 2
    dec_layers: int = 2
    use_ep: bool = True
    use_ea: bool = True
    use_dp: bool = True
    use_da: bool = True
    cross_modes: tuple[str, ...] = ("per",)
    cosine_head: bool = True
    dropout: float = 0.0
    rope_base: float = 10000.0

    def __post_init__(self):
        if not (self.use_ep or self.use_ea):
            raise ContractError("encoder needs at least one attention sublayer")
        if not (self.use_dp or self.use_da):
            raise ContractError("decoder needs at least one self-attention sublayer")
        if not self.cross_modes:
            raise ContractError("at least one cross-attention mode is required")
        if len(set(self.cross_modes)) != len(self.cross_modes):
            raise ContractError("duplicate cross-attention mode")
        for m in self.cross_modes:
            if m not in CROSS_MODES:
                raise ContractError(f"unknown cross-attention mode {m!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError("dropout must lie in [0, 1)")
        AttentionConfig(self.d_model, self.heads, self.rope_base)  # validates

    @property
    def attention(self):
        return AttentionConfig(self.d_model, self.heads, self.rope_base)

    @property
    def code(self):
        """Ablation code, e.g. "EP-DP-EA-DA-CP"."""
        parts = []
        if self.use_ep:
            parts.append("EP")
        if self.use_dp:
            parts.append("DP")
        if self.use_ea:
            parts.append("EA")
        if self.use_da:
            parts.append("DA")
        parts += ["CP" if m == "per" else "CA" for m in self.cross_modes]
        return "-".join(parts)

    @staticmethod
    def from_code(code, **overrides):
        """Build a config from an ablation code like "EP-DP-EA-CP"."""
        toggles = {"use_ep": False, "use_ea": False, "use_dp": False,
                   "use_da": False}
        cross = []
        for tok in code.split("-"):
            t = tok.strip().upper()
            if t == "EP":
                toggles["use_ep"] = True
            elif t == "EA":
                toggles["use_ea"] = True
            elif t == "DP":
                toggles["use_dp"] = True
            elif t == "DA":
                toggles["use_da"] = True
            elif t == "CP":
                cross.append("per")
            elif t == "CA":
                cross.append("agg")
            else:
                raise ContractError(f"unknown ablation token {tok!r}")
        return ModelConfig(cross_modes=tuple(cross), **toggles, **overrides)

    def to_dict(self):
        return {"d_model": self.d_model, "heads": self.heads,
                "ffn_dim": self.ffn_dim, "enc_layers": self.enc_layers,
                "dec_layers": self.dec_layers, "use_ep": self.use_ep,
                "use_ea": self.use_ea, "use_dp": self.use_dp,
                "use_da": self.use_da, "cross_modes": list(self.cross_modes),
                "cosine_head": self.cosine_head, "dropout": self.dropout,
                "rope_base": self.rope_base}

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["cross_modes"] = tuple(d["cross_modes"])
        return ModelConfig(**d)


def l2_normalize(x):
    """Unit-norm rows over the last axis; epsilon guards the zero vector."""
    s = T.tsum(T.mul(x, x), axis=-1, keepdims=True)
    return T.div(x, T.sqrt(T.add(s, 1e-12)))


class Norm:
    def __init__(self, prefix, d, eps=1e-5):
        self.gain = T.Parameter(f"{prefix}.gain", np.ones(d))
        self.bias = T.Parameter(f"{prefix}.bias", np.zeros(d))
        self.eps = eps

    def __call__(self, x):
        return T.layer_norm(x, self.gain.tensor, self.bias.tensor, self.eps)

    def parameters(self):
        return [self.gain, self.bias]


class FeedForward:
    def __init__(self, prefix, d, f, rng):
        b1 = 1.0 / np.sqrt(d)
        b2 = 1.0 / np.sqrt(f)
        self.w1 = T.Parameter(f"{prefix}.w1", rng.uniform(-b1, b1, (d, f)))
        self.b1 = T.Parameter(f"{prefix}.b1", np.zeros(f))
        self.w2 = T.Parameter(f"{prefix}.w2", rng.uniform(-b2, b2, (f, d)))
        self.b2 = T.Parameter(f"{prefix}.b2", np.zeros(d))

    def __call__(self, x):
        h = T.relu(T.add(T.matmul(x, self.w1.tensor), self.b1.tensor))
        return T.add(T.matmul(h, self.w2.tensor), self.b2.tensor)

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]


class _TrainCtx:
    """Dropout settings for one forward pass."""

    def __init__(self, rate=0.0, rng=None):
        self.rate = rate
        self.rng = rng


_EVAL = _TrainCtx()


def _residual_norm(H, sub, norm, ctx):
    """norm(x + dropout(sub(x))) for active streams; inactive pass through."""
    y = norm(T.add(H.hidden, T.dropout(sub, ctx.rate, ctx.rng)))
    act = H.active[:, :, None, None]
    return H.with_hidden(T.add(T.mul(y, act), T.mul(H.hidden, 1.0 - act)))


class EncoderLayer:
    def __init__(self, cfg: ModelConfig, prefix, rng):
        a = cfg.attention
        self.self_attn = self.self_norm = None
        self.agg_attn = self.agg_norm = None
        if cfg.use_ep:
            self.self_attn = MultiHeadAttention(f"{prefix}.self", a, rng)
            self.self_norm = Norm(f"{prefix}.self.norm", cfg.d_model)
        if cfg.use_ea:
            self.agg_attn = MultiHeadAttention(f"{prefix}.agg", a, rng)
            self.agg_norm = Norm(f"{prefix}.agg.norm", cfg.d_model)
        self.ffn = FeedForward(f"{prefix}.ffn", cfg.d_model, cfg.ffn_dim, rng)
        self.ffn_norm = Norm(f"{prefix}.ffn.norm", cfg.d_model)

    def __call__(self, H, mask, ctx=_EVAL):
        weights = None
        if self.self_attn is not None:
            sub, weights = per_stream_attention(self.self_attn, H, mask)
            H = _residual_norm(H, sub.hidden, self.self_norm, ctx)
        if self.agg_attn is not None:
            sub, _ = aggregated_attention(self.agg_attn, H, mask)
            H = _residual_norm(H, sub.hidden, self.agg_norm, ctx)
        H = _residual_norm(H, self.ffn(H.hidden), self.ffn_norm, ctx)
        return H, weights

    def parameters(self):
        out = []
        if self.self_attn is not None:
            out += self.self_attn.parameters() + self.self_norm.parameters()
        if self.agg_attn is not None:
            out += self.agg_attn.parameters() + self.agg_norm.parameters()
        return out + self.ffn.parameters() + self.ffn_norm.parameters()


class DecoderLayer:
    def __init__(self, cfg: ModelConfig, prefix, rng):
        a = cfg.attention
        self.self_attn = self.self_norm = None
        self.agg_attn = self.agg_norm = None
        if cfg.use_dp:
            self.self_attn = MultiHeadAttention(f"{prefix}.self", a, rng)
            self.self_norm = Norm(f"{prefix}.self.norm", cfg.d_model)
        if cfg.use_da:
            self.agg_attn = MultiHeadAttention(f"{prefix}.agg", a, rng)
            self.agg_norm = Norm(f"{prefix}.agg.norm", cfg.d_model)
        self.cross = []
        for mode in cfg.cross_modes:
            self.cross.append((mode,
                               MultiHeadAttention(f"{prefix}.cross.{mode}", a, rng),
                               Norm(f"{prefix}.cross.{mode}.norm", cfg.d_model)))
        self.ffn = FeedForward(f"{prefix}.ffn", cfg.d_model, cfg.ffn_dim, rng)
        self.ffn_norm = Norm(f"{prefix}.ffn.norm", cfg.d_model)

    def __call__(self, H, enc, m_la, m_pad, ctx=_EVAL):
        weights = None
        if self.self_attn is not None:
            sub, weights = per_stream_attention(self.self_attn, H, m_la)
            H = _residual_norm(H, sub.hidden, self.self_norm, ctx)
        if self.agg_attn is not None:
            # the look-ahead mask keeps the fused keys causal too
            sub, _ = aggregated_attention(self.agg_attn, H, m_la)
            H = _residual_norm(H, sub.hidden, self.agg_norm, ctx)
        for mode, mha, norm in self.cross:
            sub, _ = cross_attention(mha, H, enc, mode, m_pad)
            H = _residual_norm(H, sub.hidden, norm, ctx)
        H = _residual_norm(H, self.ffn(H.hidden), self.ffn_norm, ctx)
        return H, weights

    def parameters(self):
        out = []
        if self.self_attn is not None:
            out += self.self_attn.parameters() + self.self_norm.parameters()
        if self.agg_attn is not None:
            out += self.agg_attn.parameters() + self.agg_norm.parameters()
        for _, mha, norm in self.cross:
            out += mha.parameters() + norm.parameters()
        return out + self.ffn.parameters() + self.ffn_norm.parameters()


@dataclass
class DecodeResult:
    tokens: list
    score: float
    truncated: bool
    tied: bool


@dataclass
class InvarianceReport:
    max_logit_discrepancy: float
    decode_match: bool
    ties_flagged: bool
    decoded: list
    round_trip: list

    @property
    def passed(self):
        return self.decode_match and self.max_logit_discrepancy <= 1e-6


class Seq2SeqModel:
    """Stream-structured encoder-decoder with a tied embedding table."""

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, seed=0):
        self.cfg = cfg
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(cfg.d_model)
        # one buffer serves encoder input, decoder input and projection
        self.embedding = T.Parameter(
            "embed.w", rng.uniform(-bound, bound, (vocab.table_rows, cfg.d_model)))
        self.enc_layers = [EncoderLayer(cfg, f"enc.{i}", rng)
                           for i in range(cfg.enc_layers)]
        self.dec_layers = [DecoderLayer(cfg, f"dec.{i}", rng)
                           for i in range(cfg.dec_layers)]
        self.adacos = None   # attached by the trainer
        self._check_names()

    def _check_names(self):
        names = [p.name for p in self.parameters()]
        if len(set(names)) != len(names):
            raise ContractError("parameter names must be unique")

    def parameters(self):
        out = [self.embedding]
        for layer in self.enc_layers + self.dec_layers:
            out += layer.parameters()
        return out

    def parameter_names(self):
        return {p.name for p in self.parameters()}

    def label_columns(self, src, tgt):
        """Logit column index for each target token, given its source.

        Base tokens keep their id; an interchangeable token maps to the
        column of the stream that owns it in this source.
        """
        sids = sequence_stream_ids(src, self.vocab)
        cols = []
        for t in tgt:
            t = int(t)
            if self.vocab.is_inter(t):
                if t not in sids:
                    raise VocabularyError(
                        f"target symbol {t} does not appear in the source")
                cols.append(self.vocab.base_size + sids.index(t))
            else:
                cols.append(t)
        return cols

    # ----------------------------------------------------------------- forward

    def encode(self, srcs, ctx=_EVAL):
        """Run the encoder stack over a batch of source id sequences."""
        H = pack_sequences(srcs, self.embedding.tensor, self.vocab)
        mask = padding_mask(H.lengths, H.length, H.length)
        for layer in self.enc_layers:
            H, _ = layer(H, mask, ctx)
        return H

    def decode_hidden(self, tgt_inputs, enc, ctx=_EVAL):
        """Run the decoder stack; streams are pinned to the encoder's."""
        sid_lists = [[int(s) for s in row if s >= 0] for row in enc.stream_ids]
        H = pack_sequences(tgt_inputs, self.embedding.tensor, self.vocab,
                           stream_id_lists=sid_lists)
        m_la = look_ahead_mask(H.lengths, H.length)
        m_pad = padding_mask(enc.lengths, H.length, enc.length)
        for layer in self.dec_layers:
            H, _ = layer(H, enc, m_la, m_pad, ctx)
        return H

    def project_logits(self, H):
        """Stream projection; the cosine head normalizes both sides first."""
        W = self.embedding.tensor
        if self.cfg.cosine_head:
            H = H.with_hidden(l2_normalize(H.hidden))
            W = l2_normalize(W)
        return project(H, W)

    def forward_batch(self, srcs, tgt_inputs, ctx=_EVAL):
        """Teacher-forced logits (B, Lt, V_n + kmax) plus the stream ids."""
        enc = self.encode(srcs, ctx)
        dec = self.decode_hidden(tgt_inputs, enc, ctx)
        return self.project_logits(dec), enc.stream_ids

    def forward(self, src, tgt_input):
        """Single-sequence logits (Lt, V_n + k)."""
        logits, _ = self.forward_batch([list(src)], [list(tgt_input)])
        return T.index(logits, 0)

    def align_renamed_logits(self, logits, src, renamed_src, f):
        """Permute a renamed run's columns back into the base run's order.

        Stream columns follow their symbol: column for stream s in the base
        run lines up with the renamed run's column for stream f[s].
        """
        sids1 = sequence_stream_ids(src, self.vocab)
        sids2 = sequence_stream_ids(renamed_src, self.vocab)
        if not sids1:
            return logits
        n_base = self.vocab.base_size
        order = [sids2.index(f[s]) for s in sids1]
        return np.concatenate([logits[:, :n_base],
                               logits[:, n_base:][:, order]], axis=1)

    # ----------------------------------------------------------------- decode

    def begin_decode(self, src):
        with T.no_grad():
            enc = self.encode([list(src)])
        sids = enc.stream_ids[0]
        col_ids = np.concatenate([np.arange(self.vocab.base_size), sids])
        allowed = np.concatenate([np.ones(self.vocab.base_size, dtype=bool),
                                  sids >= 0])
        return _DecodeCtx(self, enc, col_ids, allowed)

    def step_logits(self, ctx, prefix):
        with T.no_grad():
            dec = self.decode_hidden([prefix], ctx.enc)
            row = self.project_logits(dec).data[0, -1]
        return row


class _DecodeCtx:
    def __init__(self, model, enc, col_ids, allowed):
        self.model = model
        self.enc = enc
        self.col_ids = col_ids
        self.allowed = allowed

    def logits(self, prefix):
        return self.model.step_logits(self, prefix)


def _log_softmax_allowed(row, allowed):
    vals = np.where(allowed, row, -np.inf)
    m = vals.max()
    lse = m + np.log(np.exp(vals - m).sum())
    return vals - lse


def _tied_inter_argmax(row, allowed, n_base):
    """Index of the winning column plus a renaming-sensitivity flag.

    First-maximum tie breaking gives the lowest token id.  The flag marks
    an exact tie between two interchangeable columns, the only place where
    tie breaking could interact with a renaming.
    """
    vals = np.where(allowed, row, -np.inf)
    best = int(vals.argmax())
    winners = np.flatnonzero(vals == vals[best])
    tied = int((winners >= n_base).sum()) >= 2
    return best, tied


def decode_greedy(model, src, max_len=64):
    """Argmax decoding until the end marker or the length bound."""
    ctx = model.begin_decode(src)
    n_base = model.vocab.base_size
    prefix = [SOS_ID]
    tokens = []
    score = 0.0
    tied = False
    for _ in range(max_len):
        row = ctx.logits(prefix)
        best, step_tied = _tied_inter_argmax(row, ctx.allowed, n_base)
        tied = tied or step_tied
        score += float(_log_softmax_allowed(row, ctx.allowed)[best])
        tok = int(ctx.col_ids[best])
        if tok == EOS_ID:
            return DecodeResult(tokens, score, False, tied)
        tokens.append(tok)
        prefix.append(tok)
    return DecodeResult(tokens, score, True, tied)


def decode_beam(model, src, width, max_len=64):
    """Beam search over summed log-probabilities.

    Returns up to `width` hypotheses, best first.  No length normalization,
    so width 1 reproduces greedy decoding exactly.
    """
    if width < 1:
        raise ContractError("beam width must be at least 1")
    ctx = model.begin_decode(src)
    n_base = model.vocab.base_size
    beams = [DecodeResult([], 0.0, False, False)]
    done = []
    for _ in range(max_len):
        candidates = []
        for hyp in beams:
            row = ctx.logits([SOS_ID] + hyp.tokens)
            logp = _log_softmax_allowed(row, ctx.allowed)
            _, step_tied = _tied_inter_argmax(row, ctx.allowed, n_base)
            for col in np.flatnonzero(ctx.allowed):
                tok = int(ctx.col_ids[col])
                cand = DecodeResult(hyp.tokens + [tok],
                                    hyp.score + float(logp[col]), False,
                                    hyp.tied or step_tied)
                candidates.append(cand)
        candidates.sort(key=lambda c: -c.score)  # stable: ties keep gen order
        beams = []
        for cand in candidates:
            if cand.tokens[-1] == EOS_ID:
                done.append(DecodeResult(cand.tokens[:-1], cand.score,
                                         False, cand.tied))
            else:
                beams.append(cand)
            if len(beams) >= width:
                break
        done.sort(key=lambda c: -c.score)
        done = done[:width]
        if not beams:
            break
        # log-probs only shrink scores, so a full done set that already
        # beats the best live hypothesis cannot be displaced
        if len(done) >= width and done[-1].score >= beams[0].score:
            break
    for hyp in beams:
        done.append(DecodeResult(hyp.tokens, hyp.score, True, hyp.tied))
    done.sort(key=lambda c: -c.score)
    return done[:width]


def score_sequence(model, src, tokens):
    """Summed log-probability of emitting tokens then the end marker."""
    ctx = model.begin_decode(src)
    prefix = [SOS_ID]
    total = 0.0
    for tok in list(tokens) + [EOS_ID]:
        row = ctx.logits(prefix)
        logp = _log_softmax_allowed(row, ctx.allowed)
        cols = np.flatnonzero((ctx.col_ids == tok) & ctx.allowed)
        if len(cols) == 0:
            raise ContractError(f"token {tok} has no emittable column")
        total += float(logp[cols[0]])
        prefix.append(tok)
    return total


def check_invariance(model, src, f, max_len=64):
    """Certify one source against one renaming.

    Decodes both the source and its renamed image, checks that un-renaming
    the second decode reproduces the first token for token, and compares
    teacher-forced logits with the interchangeable columns matched up
    through the renaming.
    """
    if model.cfg.dropout != 0.0:
        raise ContractError("invariance checks require dropout 0")
    src = [int(t) for t in src]
    base = decode_greedy(model, src, max_len)
    renamed_src = f(src)
    ren = decode_greedy(model, renamed_src, max_len)
    finv = f.inverse()
    round_trip = finv(ren.tokens)
    decode_match = round_trip == base.tokens

    y = base.tokens
    with T.no_grad():
        logits1 = model.forward(src, [SOS_ID] + y).data
        logits2 = model.forward(renamed_src, [SOS_ID] + f(y)).data
    aligned = model.align_renamed_logits(logits2, src, renamed_src, f)
    fin1, fin2 = np.isfinite(logits1), np.isfinite(aligned)
    if not np.array_equal(fin1, fin2):
        disc = float("inf")
    elif fin1.any():
        disc = float(np.max(np.abs(logits1[fin1] - aligned[fin2])))
    else:
        disc = 0.0
    return InvarianceReport(disc, decode_match, base.tied or ren.tied,
                            base.tokens, round_trip)


class FlatVocabTransformer:
    """Ordinary transformer baseline: one stream, per-symbol embedding rows.

    Shares the layer implementations with the stream model but embeds every
    token by identity, so renamed inputs meet different weights and nothing
    guarantees invariance.  Used as the comparison double in evaluations.
    """

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, seed=0):
        self.cfg = cfg
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(cfg.d_model)
        self.embedding = T.Parameter(
            "embed.w", rng.uniform(-bound, bound, (vocab.total_size, cfg.d_model)))
        self.enc_layers = [EncoderLayer(cfg, f"enc.{i}", rng)
                           for i in range(cfg.enc_layers)]
        self.dec_layers = [DecoderLayer(cfg, f"dec.{i}", rng)
                           for i in range(cfg.dec_layers)]
        self.adacos = None

    def parameters(self):
        out = [self.embedding]
        for layer in self.enc_layers + self.dec_layers:
            out += layer.parameters()
        return out

    def label_columns(self, src, tgt):
        """Every token keeps its own column in the flat table."""
        return [int(t) for t in tgt]

    def _single_stream(self, seqs):
        B = len(seqs)
        Lmax = max(len(s) for s in seqs)
        ids = np.zeros((B, 1, Lmax), dtype=np.int64)
        lengths = np.zeros(B, dtype=np.int64)
        for b, s in enumerate(seqs):
            ids[b, 0, :len(s)] = s
            lengths[b] = len(s)
        hidden = T.gather_rows(self.embedding.tensor, ids)
        return StreamBatch(hidden, np.zeros((B, 1, Lmax)), np.ones((B, 1)),
                           np.full((B, 1), -1, dtype=np.int64), lengths)

    def encode(self, srcs, ctx=_EVAL):
        H = self._single_stream(srcs)
        mask = padding_mask(H.lengths, H.length, H.length)
        for layer in self.enc_layers:
            H, _ = layer(H, mask, ctx)
        return H

    def decode_hidden(self, tgt_inputs, enc, ctx=_EVAL):
        H = self._single_stream(tgt_inputs)
        m_la = look_ahead_mask(H.lengths, H.length)
        m_pad = padding_mask(enc.lengths, H.length, enc.length)
        for layer in self.dec_layers:
            H, _ = layer(H, enc, m_la, m_pad, ctx)
        return H

    def project_logits(self, H):
        W = self.embedding.tensor
        feat = H.hidden
        if self.cfg.cosine_head:
            feat = l2_normalize(feat)
            W = l2_normalize(W)
        return T.index(T.matmul(feat, T.transpose(W, (1, 0))), (slice(None), 0))

    def forward_batch(self, srcs, tgt_inputs, ctx=_EVAL):
        enc = self.encode(srcs, ctx)
        dec = self.decode_hidden(tgt_inputs, enc, ctx)
        return self.project_logits(dec), enc.stream_ids

    def forward(self, src, tgt_input):
        logits, _ = self.forward_batch([list(src)], [list(tgt_input)])
        return T.index(logits, 0)

    def align_renamed_logits(self, logits, src, renamed_src, f):
        """One column per token here, so the renaming permutes columns."""
        perm = np.array([f[c] for c in range(self.vocab.total_size)])
        return logits[:, perm]

    def begin_decode(self, src):
        with T.no_grad():
            enc = self.encode([list(src)])
        col_ids = np.arange(self.vocab.total_size)
        allowed = np.ones(self.vocab.total_size, dtype=bool)
        return _DecodeCtx(self, enc, col_ids, allowed)

    def step_logits(self, ctx, prefix):
        with T.no_grad():
            dec = self.decode_hidden([prefix], ctx.enc)
            row = self.project_logits(dec).data[0, -1]
        return row


# ------------------------------------------------------------------ persistence

def save_model(model, path):
    """Checkpoint the parameters with config and vocabulary alongside."""
    arrays = {p.name: p.data for p in model.parameters()}
    meta = {"format": "streamformer-model v1",
            "kind": type(model).__name__,
            "config": model.cfg.to_dict(),
            "vocab": {"base": list(model.vocab.base_tokens),
                      "inter": list(model.vocab.inter_tokens)}}
    if model.adacos is not None:
        meta["adacos"] = {"scale": float(model.adacos.scale),
                          "class_count": int(model.adacos.class_count)}
    T.save_checkpoint(path, arrays, meta)


def load_model(path):
    """Rebuild a model from a checkpoint written by save_model."""
    arrays, meta = T.load_checkpoint(path)
    if meta.get("format") != "streamformer-model v1":
        raise ContractError("checkpoint does not hold a model")
    cfg = ModelConfig.from_dict(meta["config"])
    vocab = Vocabulary(tuple(meta["vocab"]["base"]), tuple(meta["vocab"]["inter"]))
    cls = FlatVocabTransformer if meta.get("kind") == "FlatVocabTransformer" else Seq2SeqModel
    model = cls(cfg, vocab, seed=0)
    own = {p.name: p for p in model.parameters()}
    if set(own) != set(arrays):
        raise ContractError("checkpoint parameters do not match the model")
    for name, arr in arrays.items():
        if own[name].data.shape != arr.shape:
            raise ContractError(f"shape mismatch for {name}")
        own[name].data = arr
    if "adacos" in meta:
        from .training import AdaCosState
        model.adacos = AdaCosState(meta["adacos"]["scale"],
                                   meta["adacos"]["class_count"])
    return model
