"""Attention variants: oracle agreement, masks, stream equivariance."""
import numpy as np
import pytest

from streamformer import attention as A
from streamformer import streams as S
from streamformer import tensor as T
from streamformer.errors import ContractError, DimensionError

from oracles import naive_attention

RNG = np.random.default_rng(23)


def make_H(B=1, k=3, L=5, d=8, active=None, seed=0):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(B, k, L, d))
    occ = np.zeros((B, k, L))
    for i in range(min(k, L)):
        occ[:, i, i] = 1.0
    act = np.ones((B, k)) if active is None else np.asarray(active, float)
    sids = np.tile(np.arange(3, 3 + k), (B, 1))
    return S.StreamBatch(T.Tensor(h), occ, act, sids,
                         np.full(B, L, dtype=np.int64))


def test_attention_config_validation():
    with pytest.raises(DimensionError):
        A.AttentionConfig(d_model=10, heads=3)
    with pytest.raises(DimensionError):
        A.AttentionConfig(d_model=6, heads=2)  # odd head width
    cfg = A.AttentionConfig(d_model=8, heads=2)
    assert cfg.head_dim == 4


def test_mask_constructors_and_validation():
    m = A.padding_mask([3, 2], Lq=4, Lk=4)
    assert m.bits.shape == (2, 4, 4)
    assert m.bits[1, 0].tolist() == [True, True, False, False]
    la = A.look_ahead_mask([4, 2], 4)
    assert la.kind == "look-ahead"
    assert la.bits[0, 1].tolist() == [True, True, False, False]
    assert la.bits[1, 3].tolist() == [True, True, False, False]
    with pytest.raises(ContractError):
        A.AttentionMask("padding", np.zeros((1, 2, 2), dtype=bool))
    with pytest.raises(ContractError):
        A.AttentionMask("diag", np.ones((1, 2, 2), dtype=bool))


def test_mha_single_head_matches_scalar_oracle():
    cfg = A.AttentionConfig(d_model=6, heads=1)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    x = RNG.normal(size=(1, 1, 4, 6))
    mask = A.padding_mask([4], 4, 4)
    out, w = mha(T.Tensor(x), T.Tensor(x), T.Tensor(x), mask,
                 np.arange(4), np.arange(4))
    q = x[0, 0] @ mha.wq.data
    k = x[0, 0] @ mha.wk.data
    v = x[0, 0] @ mha.wv.data
    want = naive_attention(q, k, v, mask.bits[0], np.arange(4), np.arange(4))
    want = want @ mha.wo.data
    assert np.max(np.abs(out.data[0, 0] - want)) <= 1e-10
    assert np.allclose(w.sum(axis=-1), 1.0)


def test_mha_multi_head_matches_per_head_oracle():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    x = RNG.normal(size=(1, 1, 5, 8))
    out, w = mha(T.Tensor(x), T.Tensor(x), T.Tensor(x), None,
                 np.arange(5), np.arange(5))
    q = x[0, 0] @ mha.wq.data
    k = x[0, 0] @ mha.wk.data
    v = x[0, 0] @ mha.wv.data
    keep = np.ones((5, 5), dtype=bool)
    ctx = np.zeros((5, 8))
    for h in range(2):
        sl = slice(h * 4, (h + 1) * 4)
        ctx[:, sl] = naive_attention(q[:, sl], k[:, sl], v[:, sl], keep,
                                     np.arange(5), np.arange(5))
    want = ctx @ mha.wo.data
    assert np.max(np.abs(out.data[0, 0] - want)) <= 1e-10


def test_masked_weights_are_zero_and_rows_sum_to_one():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    H = make_H(B=2, k=2, L=6)
    mask = A.look_ahead_mask([6, 4], 6)
    _, w = A.per_stream_attention(mha, H, mask)
    assert np.allclose(w.sum(axis=-1), 1.0)
    assert np.all(w[:, :, :, 0, 1:] == 0.0)       # causal row 0
    assert np.all(w[1, :, :, :, 4:] == 0.0)       # padded keys of sequence 1


def test_per_stream_attention_k1_equals_plain_and_batches_agree():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    H = make_H(B=1, k=3, L=5)
    out, _ = A.per_stream_attention(mha, H, None)
    for i in range(3):
        solo = S.StreamBatch(T.Tensor(H.hidden.data[:, i:i + 1]),
                             H.occupancy[:, i:i + 1], np.ones((1, 1)),
                             H.stream_ids[:, i:i + 1], H.lengths)
        alone, _ = A.per_stream_attention(mha, solo, None)
        assert np.max(np.abs(alone.hidden.data[0, 0] - out.hidden.data[0, i])) == 0.0


def test_per_stream_attention_is_permutation_equivariant_bitwise():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    H = make_H(B=2, k=4, L=6, seed=3)
    out, _ = A.per_stream_attention(mha, H, None)
    perm = [3, 1, 0, 2]
    out_p, _ = A.per_stream_attention(mha, H.permuted(perm), None)
    assert out.hidden.data[:, perm].tobytes() == out_p.hidden.data.tobytes()


def test_duplicated_stream_gets_identical_output():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    H = make_H(B=1, k=2, L=5, seed=4)
    H.hidden.data[0, 1] = H.hidden.data[0, 0]
    out, _ = A.per_stream_attention(mha, H, None)
    assert np.max(np.abs(out.hidden.data[0, 0] - out.hidden.data[0, 1])) <= 1e-12
    out_a, _ = A.aggregated_attention(mha, H, None)
    assert np.max(np.abs(out_a.hidden.data[0, 0] - out_a.hidden.data[0, 1])) <= 1e-12


def test_inactive_streams_pass_through_untouched():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    H = make_H(B=1, k=3, L=4, active=[[1, 0, 1]])
    before = H.hidden.data[0, 1].copy()
    out, _ = A.per_stream_attention(mha, H, None)
    assert np.array_equal(out.hidden.data[0, 1], before)
    out2, _ = A.aggregated_attention(mha, H, None)
    assert np.array_equal(out2.hidden.data[0, 1], before)


def test_aggregated_attention_uses_shared_key_buffer():
    # the fused keys enter with a size-1 stream axis: one buffer, broadcast
    # to every query stream, so key identity across streams is structural
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    H = make_H(B=1, k=3, L=5)
    out, _ = A.aggregated_attention(mha, H, None)
    fused = S.aggregate(H)
    kv = T.reshape(fused, (1, 1, 5, 8))
    out2, _ = mha(H.hidden, kv, kv, None, np.arange(5), np.arange(5))
    assert out.hidden.data.tobytes() == out2.data.tobytes()


def test_aggregated_attention_permutation_within_1e9():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    H = make_H(B=1, k=4, L=6, seed=8)
    out, _ = A.aggregated_attention(mha, H, None)
    perm = [2, 3, 1, 0]
    out_p, _ = A.aggregated_attention(mha, H.permuted(perm), None)
    assert np.max(np.abs(out.hidden.data[:, perm] - out_p.hidden.data)) <= 1e-9


def test_cross_attention_per_requires_alignment():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    Hd = make_H(B=1, k=2, L=4, seed=1)
    He = make_H(B=1, k=3, L=6, seed=2)
    with pytest.raises(ContractError):
        A.cross_attention(mha, Hd, He, "per", None)
    with pytest.raises(ContractError):
        A.cross_attention(mha, Hd, He, "sideways", None)
    out, w = A.cross_attention(mha, Hd, He, "agg", None)
    assert out.hidden.shape == (1, 2, 4, 8)
    assert w.shape[-1] == 6


def test_cross_attention_per_stream_pairs_streams():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    Hd = make_H(B=1, k=3, L=4, seed=5)
    He = make_H(B=1, k=3, L=6, seed=6)
    out, _ = A.cross_attention(mha, Hd, He, "per", None)
    for i in range(3):
        qd = S.StreamBatch(T.Tensor(Hd.hidden.data[:, i:i + 1]),
                           Hd.occupancy[:, i:i + 1], np.ones((1, 1)),
                           Hd.stream_ids[:, i:i + 1], Hd.lengths)
        ke = S.StreamBatch(T.Tensor(He.hidden.data[:, i:i + 1]),
                           He.occupancy[:, i:i + 1], np.ones((1, 1)),
                           He.stream_ids[:, i:i + 1], He.lengths)
        alone, _ = A.cross_attention(mha, qd, ke, "per", None)
        assert np.array_equal(alone.hidden.data[0, 0], out.hidden.data[0, i])


def test_causal_mask_blocks_future_bitwise():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    H = make_H(B=1, k=2, L=6, seed=7)
    mask = A.look_ahead_mask([6], 6)
    out, _ = A.per_stream_attention(mha, H, mask)
    bumped = H.hidden.data.copy()
    bumped[:, :, 4] += 10.0  # perturb position 4
    H2 = H.with_hidden(T.Tensor(bumped))
    out2, _ = A.per_stream_attention(mha, H2, mask)
    assert out.hidden.data[:, :, :4].tobytes() == out2.hidden.data[:, :, :4].tobytes()


def test_rope_shift_moves_into_scores():
    # scores depend on relative offsets: shifting all positions leaves them
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    x = T.Tensor(RNG.normal(size=(1, 1, 5, 8)))
    out1, w1 = mha(x, x, x, None, np.arange(5), np.arange(5))
    out2, w2 = mha(x, x, x, None, np.arange(5) + 13, np.arange(5) + 13)
    assert np.max(np.abs(w1 - w2)) <= 1e-9


def test_attention_parameter_count_independent_of_k():
    cfg = A.AttentionConfig(d_model=8, heads=2)
    mha = A.MultiHeadAttention("t", cfg, RNG)
    n_params = sum(p.data.size for p in mha.parameters())
    for k in (1, 2, 5):
        H = make_H(B=1, k=k, L=4, seed=k)
        A.per_stream_attention(mha, H, None)
        assert sum(p.data.size for p in mha.parameters()) == n_params


def test_gradient_check_through_all_attention_variants():
    cfg = A.AttentionConfig(d_model=4, heads=2)
    rng = np.random.default_rng(31)
    mha = A.MultiHeadAttention("t", cfg, rng)
    Hd = make_H(B=1, k=2, L=3, d=4, seed=1)
    He = make_H(B=1, k=2, L=4, d=4, seed=2)
    weight = rng.normal(size=(1, 2, 3, 4))
    mask = A.look_ahead_mask([3], 3)

    def loss_fn():
        a, _ = A.per_stream_attention(mha, Hd, mask)
        b, _ = A.aggregated_attention(mha, a, mask)
        c, _ = A.cross_attention(mha, b, He, "per", None)
        d, _ = A.cross_attention(mha, c, He, "agg", None)
        return T.tsum(T.mul(d.hidden, weight))

    report = T.gradient_check(mha.parameters(), loss_fn)
    assert max(report.values()) <= 1e-4
