"""Parameterized building blocks: linear/conv layers, window and cross
attention, patch split/merge, and the depthwise-separable residual block.

Everything is NHWC. Initialization: uniform fan-in scaling for conv/linear
weights, truncated normal (std 0.02) for attention projections.
"""

from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .autograd import Tensor


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    x = rng.normal(0.0, std, size=shape)
    return np.clip(x, -2.0 * std, 2.0 * std).astype(np.float32)


class Module:
    """Tiny container: submodules and parameters discovered by attribute walk."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}" if prefix else key
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def to_dtype(self, dtype):
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        return self

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


def parameter(data: np.ndarray, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, rng, c_in: int, c_out: int, init: str = "fan_in"):
        if init == "attn":
            w = trunc_normal(rng, (c_in, c_out))
        else:
            w = kaiming_uniform(rng, (c_in, c_out), fan_in=c_in)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(c_out, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return ag.add(ag.matmul(x, self.weight), self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(dim, dtype=np.float32))
        self.bias = parameter(np.zeros(dim, dtype=np.float32))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ag.layer_norm(x, self.gain, self.bias, eps=self.eps)


class Conv2d(Module):
    def __init__(self, rng, c_in: int, c_out: int, kernel: int, stride: int = 1,
                 padding: int = 0, groups: int = 1, pad_mode: str = "zero"):
        fan_in = kernel * kernel * (c_in // groups)
        self.weight = parameter(
            kaiming_uniform(rng, (kernel, kernel, c_in // groups, c_out), fan_in)
        )
        self.bias = parameter(np.zeros(c_out, dtype=np.float32))
        self.stride = stride
        self.padding = padding
        self.groups = groups
        self.pad_mode = pad_mode

    def __call__(self, x: Tensor) -> Tensor:
        return ag.conv2d(x, self.weight, self.bias, stride=self.stride,
                         padding=self.padding, groups=self.groups,
                         pad_mode=self.pad_mode)


class ConvTranspose2d(Module):
    def __init__(self, rng, c_in: int, c_out: int, kernel: int, stride: int,
                 padding: int, output_padding: int):
        fan_in = kernel * kernel * c_in
        self.weight = parameter(
            kaiming_uniform(rng, (kernel, kernel, c_in, c_out), fan_in)
        )
        self.bias = parameter(np.zeros(c_out, dtype=np.float32))
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding

    def __call__(self, x: Tensor) -> Tensor:
        return ag.conv_transpose2d(x, self.weight, self.bias, stride=self.stride,
                                   padding=self.padding,
                                   output_padding=self.output_padding)


def multihead_attention(queries: Tensor, keys_values: Tensor,
                        wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor,
                        heads: int) -> Tensor:
    """Softmax attention over (B, T, D) token sets.

    Scale is 1/sqrt(D/heads); D must divide evenly into heads.
    """
    d = queries.shape[-1]
    if d % heads != 0:
        raise ag.AutogradError(f"model dim {d} not divisible by heads {heads}")
    dh = d // heads
    b, tq = queries.shape[0], queries.shape[1]
    tkv = keys_values.shape[1]

    def split_heads(t, tlen):
        t = ag.reshape(t, (b, tlen, heads, dh))
        return ag.transpose(t, (0, 2, 1, 3))

    q = split_heads(ag.matmul(queries, wq), tq)
    k = split_heads(ag.matmul(keys_values, wk), tkv)
    v = split_heads(ag.matmul(keys_values, wv), tkv)
    logits = ag.mul(ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    weights = ag.softmax(logits, axis=-1)
    mixed = ag.matmul(weights, v)
    mixed = ag.reshape(ag.transpose(mixed, (0, 2, 1, 3)), (b, tq, d))
    return ag.matmul(mixed, wo)


class Attention(Module):
    def __init__(self, rng, dim: int, heads: int, kv_dim: int | None = None):
        kv_dim = dim if kv_dim is None else kv_dim
        self.wq = parameter(trunc_normal(rng, (dim, dim)))
        self.wk = parameter(trunc_normal(rng, (kv_dim, dim)))
        self.wv = parameter(trunc_normal(rng, (kv_dim, dim)))
        self.wo = parameter(trunc_normal(rng, (dim, dim)))
        self.heads = heads

    def __call__(self, queries: Tensor, keys_values: Tensor) -> Tensor:
        return multihead_attention(queries, keys_values, self.wq, self.wk,
                                   self.wv, self.wo, self.heads)


class Mlp(Module):
    def __init__(self, rng, dim: int, expansion: int = 2):
        self.fc1 = Linear(rng, dim, dim * expansion)
        self.fc2 = Linear(rng, dim * expansion, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ag.gelu(self.fc1(x)))


def _roll2d(x: Tensor, shift_h: int, shift_w: int) -> Tensor:
    if shift_h:
        x = ag.concat([x[:, shift_h:], x[:, :shift_h]], axis=1)
    if shift_w:
        x = ag.concat([x[:, :, shift_w:], x[:, :, :shift_w]], axis=2)
    return x


class SwinBlock(Module):
    """Window self-attention + MLP, both with pre-norm residuals.

    With `auto_clamp` the effective window shrinks to the spatial extent
    (needed because the regional branch runs at several resolutions with
    one weight set); otherwise an oversized window is an error. Shifted
    windows use a plain cyclic shift without a boundary mask — acceptable
    for hyper branches where cross-boundary mixing is harmless.
    """

    def __init__(self, rng, dim: int, heads: int, window: int, shift: int = 0,
                 mlp_expansion: int = 2, auto_clamp: bool = False):
        self.norm1 = LayerNorm(dim)
        self.attn = Attention(rng, dim, heads)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(rng, dim, mlp_expansion)
        self.window = window
        self.shift = shift
        self.auto_clamp = auto_clamp

    def _axis_window(self, extent: int) -> int:
        if self.window <= extent and extent % self.window == 0:
            return self.window
        if not self.auto_clamp:
            if self.window > extent:
                raise ag.AutogradError(
                    f"window {self.window} larger than spatial extent {extent}"
                )
            raise ag.AutogradError(
                f"extent {extent} not divisible by window {self.window}"
            )
        # largest window <= the configured one that tiles this extent
        for ws in range(min(self.window, extent), 0, -1):
            if extent % ws == 0:
                return ws
        return 1

    def __call__(self, x: Tensor) -> Tensor:
        n, h, w, c = x.shape
        wh = self._axis_window(h)
        ww = self._axis_window(w)
        sh = self.shift if 0 < self.shift < wh else 0
        sw = self.shift if 0 < self.shift < ww else 0

        t = self.norm1(x)
        if sh or sw:
            t = _roll2d(t, sh, sw)
        t = ag.reshape(t, (n, h // wh, wh, w // ww, ww, c))
        t = ag.transpose(t, (0, 1, 3, 2, 4, 5))
        tokens = ag.reshape(t, (n * (h // wh) * (w // ww), wh * ww, c))
        tokens = self.attn(tokens, tokens)
        t = ag.reshape(tokens, (n, h // wh, w // ww, wh, ww, c))
        t = ag.transpose(t, (0, 1, 3, 2, 4, 5))
        t = ag.reshape(t, (n, h, w, c))
        if sh or sw:
            t = _roll2d(t, (h - sh) % h, (w - sw) % w)
        x = ag.add(x, t)
        return ag.add(x, self.mlp(self.norm2(x)))


class CrossAttentionBlock(Module):
    """Transformer block where queries attend to a separate token set."""

    def __init__(self, rng, dim: int, kv_dim: int, heads: int,
                 mlp_expansion: int = 2):
        self.norm_q = LayerNorm(dim)
        self.norm_kv = LayerNorm(kv_dim)
        self.attn = Attention(rng, dim, heads, kv_dim=kv_dim)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(rng, dim, mlp_expansion)

    def __call__(self, queries: Tensor, keys_values: Tensor) -> Tensor:
        x = ag.add(queries, self.attn(self.norm_q(queries), self.norm_kv(keys_values)))
        return ag.add(x, self.mlp(self.norm2(x)))


class PatchSplit(Module):
    """Shift channel elements to 2x2 spatial: depth-to-space, LN, linear."""

    def __init__(self, rng, c_in: int, c_out: int):
        if c_in % 4 != 0:
            raise ag.AutogradError(f"patch split needs channels ({c_in}) divisible by 4")
        self.norm = LayerNorm(c_in // 4)
        self.proj = Linear(rng, c_in // 4, c_out)

    def __call__(self, x: Tensor) -> Tensor:
        return self.proj(self.norm(ag.depth_to_space(x, 2)))


class PatchMerge(Module):
    """Inverse of PatchSplit: LN, linear, space-to-depth."""

    def __init__(self, rng, c_in: int, c_out: int):
        if c_out % 4 != 0:
            raise ag.AutogradError(f"patch merge needs output channels ({c_out}) divisible by 4")
        self.norm = LayerNorm(c_in)
        self.proj = Linear(rng, c_in, c_out // 4)

    def __call__(self, x: Tensor) -> Tensor:
        return ag.space_to_depth(self.proj(self.norm(x)), 2)


class DepthConvBlock(Module):
    """1x1 -> depthwise 3x3 (replicate pad) -> 1x1, with a residual path."""

    def __init__(self, rng, dim: int):
        self.pw1 = Conv2d(rng, dim, dim, kernel=1)
        self.dw = Conv2d(rng, dim, dim, kernel=3, padding=1, groups=dim,
                         pad_mode="replicate")
        self.pw2 = Conv2d(rng, dim, dim, kernel=1)

    def __call__(self, x: Tensor) -> Tensor:
        t = ag.leaky_relu(self.pw1(x))
        t = ag.leaky_relu(self.dw(t))
        return ag.add(x, self.pw2(t))
