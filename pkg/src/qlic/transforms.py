"""Image-to-latent transforms and the three hyper branches.

The main analysis/synthesis pair downsamples by 16 with four strided
5x5 convolutions (a simplified stand-in with the interface the entropy
model needs). The hyper branches cover three dependency ranges:

  * local:    patch split -> window-2 SwinT -> patch merge, receptive
              field pinned to a single latent position;
  * regional: SwinT stack with two patch merges (x4 spatial reduction);
  * global:   learned query tokens cross-attending to all latent tokens.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .modules import (Attention, Conv2d, ConvTranspose2d, CrossAttentionBlock,
                      Linear, Module, PatchMerge, PatchSplit, SwinBlock,
                      parameter, trunc_normal)


class AnalysisTransform(Module):
    """Image (B, H0, W0, 3) -> latent (B, H0/16, W0/16, C)."""

    def __init__(self, rng, latent_channels: int, widths=(16, 32, 32)):
        chain = (3,) + tuple(widths) + (latent_channels,)
        self.convs = [
            Conv2d(rng, chain[i], chain[i + 1], kernel=5, stride=2, padding=2)
            for i in range(4)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        h, w = x.shape[1], x.shape[2]
        if h % 16 != 0 or w % 16 != 0:
            raise ag.AutogradError(
                f"analysis input extents {h}x{w} must be divisible by 16"
            )
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < 3:
                x = ag.leaky_relu(x)
        return x


class SynthesisTransform(Module):
    """Latent (B, H, W, C) -> image (B, 16H, 16W, 3), clamped to [0, 1]."""

    def __init__(self, rng, latent_channels: int, widths=(32, 32, 16)):
        chain = (latent_channels,) + tuple(widths) + (3,)
        self.convs = [
            ConvTranspose2d(rng, chain[i], chain[i + 1], kernel=5, stride=2,
                            padding=2, output_padding=1)
            for i in range(4)
        ]

    def __call__(self, y: Tensor) -> Tensor:
        x = y
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < 3:
                x = ag.leaky_relu(x)
        return ag.clamp(x, 0.0, 1.0)


class LocalHyperAnalysis(Module):
    """y (B,H,W,C) -> local hyper latent (B,H,W,C_l); strictly per-position."""

    def __init__(self, rng, channels: int, local_channels: int, heads: int):
        mid = channels // 4
        self.split = PatchSplit(rng, channels, mid)
        self.swin = SwinBlock(rng, mid, heads, window=2)
        self.merge = PatchMerge(rng, mid, local_channels)

    def __call__(self, y: Tensor) -> Tensor:
        return self.merge(self.swin(self.split(y)))


class LocalHyperSynthesis(Module):
    """z_l (B,H,W,C_l) -> local features (B,H,W,2C); strictly per-position."""

    def __init__(self, rng, local_channels: int, channels: int, heads: int):
        mid = channels // 4
        # 1x1 expansion first: splitting the narrow latent directly would
        # leave a single channel after depth-to-space, which layer norm
        # collapses to a constant. The expansion is per-position, so the
        # branch stays strictly local.
        self.pre = Linear(rng, local_channels, 4 * mid)
        self.split = PatchSplit(rng, 4 * mid, mid)
        self.swin = SwinBlock(rng, mid, heads, window=2)
        self.merge = PatchMerge(rng, mid, 2 * channels)

    def __call__(self, z: Tensor) -> Tensor:
        return self.merge(self.swin(self.split(self.pre(z))))


class RegionalHyperAnalysis(Module):
    """y (B,H,W,C) -> regional hyper latent (B,H/4,W/4,C_r)."""

    def __init__(self, rng, channels: int, regional_channels: int, heads: int,
                 window: int = 4, shift: int = 2):
        cr = regional_channels
        self.merge1 = PatchMerge(rng, channels, cr)
        self.blocks = [
            SwinBlock(rng, cr, heads, window=window,
                      shift=0 if i % 2 == 0 else shift, auto_clamp=True)
            for i in range(5)
        ]
        self.merge2 = PatchMerge(rng, cr, cr)
        self.last = SwinBlock(rng, cr, heads, window=window, auto_clamp=True)

    def __call__(self, y: Tensor) -> Tensor:
        t = self.merge1(y)
        for block in self.blocks:
            t = block(t)
        return self.last(self.merge2(t))


class RegionalHyperSynthesis(Module):
    """z_r (B,H/4,W/4,C_r) -> regional features (B,H,W,2C)."""

    def __init__(self, rng, regional_channels: int, channels: int, heads: int,
                 window: int = 4, shift: int = 2):
        cr = regional_channels
        self.first = SwinBlock(rng, cr, heads, window=window, auto_clamp=True)
        self.split1 = PatchSplit(rng, cr, cr)
        self.blocks = [
            SwinBlock(rng, cr, heads, window=window,
                      shift=0 if i % 2 == 0 else shift, auto_clamp=True)
            for i in range(5)
        ]
        self.split2 = PatchSplit(rng, cr, 2 * channels)

    def __call__(self, z: Tensor) -> Tensor:
        t = self.split1(self.first(z))
        for block in self.blocks:
            t = block(t)
        return self.split2(t)


class GlobalHyperAnalysis(Module):
    """y (B,H,W,C) -> global hyper latent (B,N,C/N) via learned queries."""

    def __init__(self, rng, channels: int, num_tokens: int, heads: int):
        self.queries = parameter(trunc_normal(rng, (num_tokens, channels)))
        self.cross = CrossAttentionBlock(rng, channels, channels, heads)
        self.proj = Linear(rng, channels, channels // num_tokens)
        self.num_tokens = num_tokens

    def __call__(self, y: Tensor) -> Tensor:
        b, h, w, c = y.shape
        tokens = ag.reshape(y, (b, h * w, c))
        q = ag.broadcast_to(ag.reshape(self.queries, (1, self.num_tokens, c)),
                            (b, self.num_tokens, c))
        return self.proj(self.cross(q, tokens))


class GlobalHyperSynthesis(Module):
    """z_g (B,N,C/N) -> global features (B,N,2C) via per-token projection."""

    def __init__(self, rng, channels: int, num_tokens: int):
        self.proj = Linear(rng, channels // num_tokens, 2 * channels)

    def __call__(self, z: Tensor) -> Tensor:
        return self.proj(z)
