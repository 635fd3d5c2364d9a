"""Network building blocks vs naive reference implementations."""

import numpy as np
import pytest

from qlic import autograd as ag
from qlic import modules
from qlic.autograd import Tensor
from qlic.modules import (Attention, Conv2d, ConvTranspose2d, CrossAttentionBlock,
                          LayerNorm, Linear, Mlp, PatchMerge, PatchSplit,
                          SwinBlock, multihead_attention)

from oracles import naive_attention, naive_conv2d


@pytest.fixture()
def mrng():
    return np.random.default_rng(77)


def test_conv2d_matches_naive(mrng):
    for stride, padding, groups, pad_mode in [(1, 0, 1, "zero"), (2, 2, 1, "zero"),
                                              (1, 1, 2, "zero"), (1, 1, 4, "replicate")]:
        conv = Conv2d(mrng, 4, 8, kernel=3, stride=stride, padding=padding,
                      groups=groups, pad_mode=pad_mode)
        x = mrng.normal(size=(2, 6, 6, 4)).astype(np.float32)
        got = conv(Tensor(x)).data
        want = naive_conv2d(x.astype(np.float64),
                            conv.weight.data.astype(np.float64),
                            conv.bias.data.astype(np.float64),
                            stride=stride, padding=padding, groups=groups,
                            pad_mode=pad_mode)
        np.testing.assert_allclose(got, want, atol=1e-5)


def test_conv_transpose_doubles_and_inverts_stride2_identity(mrng):
    # transposed conv with stride 2 must produce exactly 2x the extent
    tconv = ConvTranspose2d(mrng, 3, 5, kernel=5, stride=2, padding=2,
                            output_padding=1)
    x = Tensor(mrng.normal(size=(1, 4, 6, 3)).astype(np.float32))
    assert tconv(x).shape == (1, 8, 12, 5)


def test_conv_transpose_adjoint_of_conv(mrng):
    """conv_transpose with the same kernel is the adjoint map of conv:
    <conv(x), y> == <x, conv_T(y)>."""
    w = Tensor(mrng.normal(size=(5, 5, 3, 2)).astype(np.float64))
    x = Tensor(mrng.normal(size=(1, 8, 8, 3)).astype(np.float64))
    y = Tensor(mrng.normal(size=(1, 4, 4, 2)).astype(np.float64))
    # forward: stride-2 conv 8->4; adjoint: transpose 4->8 with flipped roles
    fwd = ag.conv2d(x, w, stride=2, padding=2)
    # weight layout for transpose is (kh, kw, c_in, c_out) with c_in = latent side
    wt = ag.transpose(w, (0, 1, 3, 2))
    back = ag.conv_transpose2d(y, wt, stride=2, padding=2, output_padding=1)
    lhs = float(np.sum(fwd.data * y.data))
    rhs = float(np.sum(x.data * back.data))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_layer_norm_statistics(mrng):
    ln = LayerNorm(16)
    x = Tensor(mrng.normal(loc=3.0, scale=5.0, size=(2, 4, 16)).astype(np.float32))
    out = ln(x).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-5)
    np.testing.assert_allclose(out.std(axis=-1), 1.0, atol=1e-2)


def test_linear_shapes(mrng):
    lin = Linear(mrng, 8, 3)
    x = Tensor(mrng.normal(size=(2, 5, 8)).astype(np.float32))
    assert lin(x).shape == (2, 5, 3)


def test_single_head_attention_matches_naive(mrng):
    d = 6
    q = mrng.normal(size=(1, 4, d)).astype(np.float64)
    kv = mrng.normal(size=(1, 7, d)).astype(np.float64)
    eye = Tensor(np.eye(d))
    got = multihead_attention(Tensor(q), Tensor(kv), eye, eye, eye, eye,
                              heads=1).data[0]
    want = naive_attention(q[0], kv[0], kv[0])
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_multihead_attention_is_headwise_concat(mrng):
    """Two heads with block-diagonal projections equal two independent
    single-head attentions on the half-spaces."""
    d = 8
    q = mrng.normal(size=(1, 5, d)).astype(np.float64)
    eye = Tensor(np.eye(d))
    got = multihead_attention(Tensor(q), Tensor(q), eye, eye, eye, eye,
                              heads=2).data[0]
    want = np.concatenate([naive_attention(q[0, :, :4], q[0, :, :4], q[0, :, :4]),
                           naive_attention(q[0, :, 4:], q[0, :, 4:], q[0, :, 4:])],
                          axis=-1)
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_attention_rejects_bad_head_count(mrng):
    with pytest.raises(Exception):
        att = Attention(mrng, 6, heads=4)
        att(Tensor(np.zeros((1, 3, 6), np.float32)),
            Tensor(np.zeros((1, 3, 6), np.float32)))


def test_swin_block_shape_and_locality(mrng):
    blk = SwinBlock(mrng, dim=8, heads=2, window=2, shift=0)
    x = mrng.normal(size=(1, 4, 4, 8)).astype(np.float32)
    out = blk(Tensor(x)).data
    assert out.shape == x.shape
    # unshifted windows: perturbing one window leaves the others unchanged
    x2 = x.copy()
    x2[0, 0, 0, 0] += 1.0
    out2 = blk(Tensor(x2)).data
    assert not np.allclose(out2[0, :2, :2], out[0, :2, :2])
    np.testing.assert_array_equal(out2[0, 2:, 2:], out[0, 2:, 2:])


def test_swin_shift_mixes_across_windows(mrng):
    blk = SwinBlock(mrng, dim=8, heads=2, window=2, shift=1)
    x = mrng.normal(size=(1, 4, 4, 8)).astype(np.float32)
    out = blk(Tensor(x)).data
    x2 = x.copy()
    x2[0, 1, 1, 0] += 1.0
    out2 = blk(Tensor(x2)).data
    # with a shift, the perturbation escapes the unshifted 2x2 window
    assert not np.allclose(out2[0, 2, 2], out[0, 2, 2])


def test_swin_window_too_large_rejected(mrng):
    blk = SwinBlock(mrng, dim=8, heads=2, window=4)
    with pytest.raises(Exception, match="window"):
        blk(Tensor(np.zeros((1, 2, 2, 8), np.float32)))


def test_swin_auto_clamp_allows_small_extent(mrng):
    blk = SwinBlock(mrng, dim=8, heads=2, window=4, auto_clamp=True)
    out = blk(Tensor(np.zeros((1, 2, 2, 8), np.float32)))
    assert out.shape == (1, 2, 2, 8)


def test_patch_split_merge_round_trip_shapes(mrng):
    split = PatchSplit(mrng, 16, 4)
    merge = PatchMerge(mrng, 4, 16)
    x = Tensor(mrng.normal(size=(1, 2, 2, 16)).astype(np.float32))
    up = split(x)
    assert up.shape == (1, 4, 4, 4)
    down = merge(up)
    assert down.shape == (1, 2, 2, 16)


def test_space_depth_pixel_placement():
    # depth_to_space must place channel blocks in raster 2x2 order
    x = np.arange(4, dtype=np.float32).reshape(1, 1, 1, 4)
    out = ag.depth_to_space(Tensor(x), 2).data
    np.testing.assert_array_equal(out[0, :, :, 0], [[0, 1], [2, 3]])
    back = ag.space_to_depth(Tensor(out), 2).data
    np.testing.assert_array_equal(back, x)


def test_cross_attention_block_shapes(mrng):
    blk = CrossAttentionBlock(mrng, dim=8, kv_dim=6, heads=2)
    q = Tensor(mrng.normal(size=(1, 4, 8)).astype(np.float32))
    kv = Tensor(mrng.normal(size=(1, 10, 6)).astype(np.float32))
    assert blk(q, kv).shape == (1, 4, 8)


def test_mlp_shapes(mrng):
    mlp = Mlp(mrng, 8)
    x = Tensor(mrng.normal(size=(2, 3, 8)).astype(np.float32))
    assert mlp(x).shape == (2, 3, 8)


def test_named_parameters_unique_and_complete(mrng):
    blk = SwinBlock(mrng, dim=8, heads=2, window=2)
    names = [n for n, _ in blk.named_parameters()]
    assert len(names) == len(set(names))
    assert any("attn" in n for n in names)
    assert any("norm1" in n for n in names)


def test_depth_conv_block_residual(mrng):
    blk = modules.DepthConvBlock(mrng, 8)
    x = mrng.normal(size=(1, 4, 4, 8)).astype(np.float32)
    out = blk(Tensor(x)).data
    assert out.shape == x.shape
    # zeroing the final pointwise conv reduces the block to identity
    blk.pw2.weight.data[:] = 0
    blk.pw2.bias.data[:] = 0
    np.testing.assert_allclose(blk(Tensor(x)).data, x, atol=1e-6)
