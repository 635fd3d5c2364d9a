"""The entropy-model-centric codec model.

Diversify: three hyper branches (local / regional / global) produce
quantized hyper latents plus synthesized feature tensors. Contextualize:
a four-step pipeline fuses previously coded elements with those
features, in a configurable order, yielding per-step (mu, sigma). Adapt:
the conditional Gaussian model of `qlic.entropy` prices each element.

All four steps share weights except the initial 1x1 convolution, which
carries step identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from . import entropy
from .autograd import Tensor
from .entropy import FactorizedPrior, clamp_sigma, gaussian_pmf, quantize, rate_bits
from .modules import Conv2d, CrossAttentionBlock, DepthConvBlock, Module
from .schedule import quadtree_schedule
from .transforms import (AnalysisTransform, GlobalHyperAnalysis,
                         GlobalHyperSynthesis, LocalHyperAnalysis,
                         LocalHyperSynthesis, RegionalHyperAnalysis,
                         RegionalHyperSynthesis, SynthesisTransform)

_ORDERS = ("RGL", "RLG", "GRL", "GLR", "LRG", "LGR")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CodecConfig:
    """Desk-scale defaults; every field is serialized into checkpoints and
    summarized in the bitstream variant byte."""

    channels: int = 32            # C
    local_channels: int = 4       # C_l
    regional_channels: int = 16   # C_r
    global_tokens: int = 4        # N
    order: str = "RGL"            # fusion order of the enabled branches
    step_adaptive: bool = True
    branches: str = "LRG"         # enabled hyper branches, subset of L/R/G
    backward_global: bool = False # reserved; not supported by this build
    heads: int = 2
    analysis_widths: tuple = (16, 32, 32)
    synthesis_widths: tuple = (32, 32, 16)
    swin_window: int = 4
    swin_shift: int = 2

    def validate(self) -> "CodecConfig":
        c, n = self.channels, self.global_tokens
        if c % 4 != 0:
            raise ConfigError(f"channels ({c}) must be divisible by 4")
        if c % n != 0:
            raise ConfigError(f"channels ({c}) must be divisible by global_tokens ({n})")
        if self.local_channels % 4 != 0:
            raise ConfigError("local_channels must be divisible by 4")
        if self.regional_channels % 4 != 0:
            raise ConfigError("regional_channels must be divisible by 4")
        if self.order not in _ORDERS:
            raise ConfigError(f"order must be one of {_ORDERS}, got {self.order!r}")
        if not self.branches or not set(self.branches) <= set("LRG"):
            raise ConfigError(f"branches must be a nonempty subset of LRG, got {self.branches!r}")
        if len(set(self.branches)) != len(self.branches):
            raise ConfigError("branches must not repeat")
        if self.backward_global:
            raise ConfigError("backward_global is reserved and not supported")
        if len(self.analysis_widths) != 3 or len(self.synthesis_widths) != 3:
            raise ConfigError("transform width chains must have 3 interior stages")
        return self

    def enabled_order(self) -> str:
        return "".join(ctx for ctx in self.order if ctx in self.branches)

    def variant_byte(self) -> int:
        b = _ORDERS.index(self.order)
        b |= int(self.step_adaptive) << 3
        for bit, ctx in enumerate("LRG"):
            if ctx in self.branches:
                b |= 1 << (4 + bit)
        b |= int(self.backward_global) << 7
        return b

    def to_text(self) -> str:
        lines = []
        for key, value in vars(self).items():
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CodecConfig":
        kwargs = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in cls.__dataclass_fields__:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _parse_field(key, value)
        return cls(**kwargs).validate()


def _parse_field(key: str, value: str):
    current = getattr(CodecConfig, key)
    if isinstance(current, bool):
        if value.lower() not in ("true", "false", "0", "1"):
            raise ConfigError(f"bad boolean for {key}: {value!r}")
        return value.lower() in ("true", "1")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, tuple):
        return tuple(int(v) for v in value.split(","))
    return value


@dataclass
class HyperLatentSet:
    """Quantized hyper latents, their features, and their rates (bits)."""

    z_hat: dict = field(default_factory=dict)      # branch -> Tensor
    features: dict = field(default_factory=dict)   # branch -> Tensor
    rates: dict = field(default_factory=dict)      # branch -> scalar Tensor


@dataclass
class ForwardResult:
    x_hat: Tensor
    y: Tensor
    y_hat: Tensor
    rate_y: Tensor
    rate_y_steps: list
    hyper: HyperLatentSet
    distortion: Tensor
    mu_steps: list      # np arrays (B,H,W,C), one per step
    sigma_steps: list
    num_pixels: int

    def rate_of(self, branch: str) -> float:
        t = self.hyper.rates.get(branch)
        return float(t.data) if t is not None else 0.0


class ContextModel(Module):
    """Per-step (mu, sigma) from the coded-so-far buffer and the features."""

    def __init__(self, rng, cfg: CodecConfig):
        c = cfg.channels
        d = 2 * c
        self.initial = [Conv2d(rng, c, d, kernel=1) for _ in range(4)]
        self.r_fuse = Conv2d(rng, 2 * d, d, kernel=1)
        self.r_blocks = [DepthConvBlock(rng, d) for _ in range(3)]
        self.g_fuse = CrossAttentionBlock(rng, d, d, cfg.heads)
        self.l_fuse1 = Conv2d(rng, 2 * d, d, kernel=1)
        self.l_fuse2 = Conv2d(rng, d, d, kernel=1)
        self.head = Conv2d(rng, d, d, kernel=1)
        self.cfg = cfg

    def _site(self, ctx: str, t: Tensor, feat: Tensor) -> Tensor:
        if ctx == "R":
            t = ag.leaky_relu(self.r_fuse(ag.concat([t, feat], axis=3)))
            for block in self.r_blocks:
                t = block(t)
            return t
        if ctx == "G":
            b, h, w, d = t.shape
            tokens = ag.reshape(t, (b, h * w, d))
            tokens = self.g_fuse(tokens, feat)
            return ag.reshape(tokens, (b, h, w, d))
        if ctx == "L":
            t = ag.leaky_relu(self.l_fuse1(ag.concat([t, feat], axis=3)))
            return ag.leaky_relu(self.l_fuse2(t))
        raise ConfigError(f"unknown context site {ctx!r}")

    def fused_features(self, features: dict, shape) -> Tensor:
        """Step-independent variant: pre-combine the enabled features once."""
        b, h, w, _ = shape
        t = Tensor(np.zeros((b, h, w, 2 * self.cfg.channels), dtype=np.float32))
        for ctx in self.cfg.enabled_order():
            t = self._site(ctx, t, features[ctx])
        return t

    def __call__(self, step: int, buffer: Tensor, features: dict,
                 fused: Tensor | None = None, debug: bool = False,
                 allowed_mask: np.ndarray | None = None):
        if debug and allowed_mask is not None:
            if np.any(buffer.data[:, ~allowed_mask] != 0):
                raise ConfigError(
                    f"buffer holds nonzero values at un-coded positions (step {step})"
                )
        t = self.initial[step](buffer)
        if fused is not None:
            t = self._site("R", t, fused)
        else:
            for ctx in self.cfg.enabled_order():
                t = self._site(ctx, t, features[ctx])
        u = self.head(t)
        c = self.cfg.channels
        mu = u[..., :c]
        sigma = clamp_sigma(u[..., c:])
        return mu, sigma


class ImageCodec(Module):
    """Full model: transforms, hyper branches, priors, and context model."""

    def __init__(self, cfg: CodecConfig, seed: int = 0):
        cfg.validate()
        rng = np.random.default_rng(seed)
        c = cfg.channels
        self.cfg = cfg
        self.analysis = AnalysisTransform(rng, c, cfg.analysis_widths)
        self.synthesis = SynthesisTransform(rng, c, cfg.synthesis_widths)
        if "L" in cfg.branches:
            self.local_analysis = LocalHyperAnalysis(rng, c, cfg.local_channels, cfg.heads)
            self.local_synthesis = LocalHyperSynthesis(rng, cfg.local_channels, c, cfg.heads)
            self.local_prior = FactorizedPrior(cfg.local_channels)
        if "R" in cfg.branches:
            self.regional_analysis = RegionalHyperAnalysis(
                rng, c, cfg.regional_channels, cfg.heads, cfg.swin_window, cfg.swin_shift)
            self.regional_synthesis = RegionalHyperSynthesis(
                rng, cfg.regional_channels, c, cfg.heads, cfg.swin_window, cfg.swin_shift)
            self.regional_prior = FactorizedPrior(cfg.regional_channels)
        if "G" in cfg.branches:
            self.global_analysis = GlobalHyperAnalysis(rng, c, cfg.global_tokens, cfg.heads)
            self.global_synthesis = GlobalHyperSynthesis(rng, c, cfg.global_tokens)
            self.global_prior = FactorizedPrior(c // cfg.global_tokens)
        self.context = ContextModel(rng, cfg)
        self._scale_table = entropy.default_scale_table()

    # -- branch plumbing ---------------------------------------------------

    def _branch(self, ctx: str):
        names = {"L": "local", "R": "regional", "G": "global"}[ctx]
        return (getattr(self, f"{names}_analysis"),
                getattr(self, f"{names}_synthesis"),
                getattr(self, f"{names}_prior"))

    def prior_for(self, ctx: str) -> FactorizedPrior:
        return self._branch(ctx)[2]

    @staticmethod
    def _channels_first(z: Tensor) -> Tensor:
        """(B, ..., ch) -> (ch, B*positions) for the factorized priors."""
        axes = tuple(range(z.ndim))
        t = ag.transpose(z, (axes[-1],) + axes[:-1])
        return ag.reshape(t, (z.shape[-1], -1))

    def diversify(self, y: Tensor, mode: str,
                  rng: np.random.Generator | None = None) -> HyperLatentSet:
        """Run the enabled hyper branches on the latent.

        mode 'train': noise-quantized rates, STE-quantized features;
        mode 'eval': hard rounding everywhere.
        """
        h, w = y.shape[1], y.shape[2]
        if h % 4 != 0 or w % 4 != 0:
            raise ConfigError(f"latent extents {h}x{w} must be divisible by 4")
        out = HyperLatentSet()
        for ctx in self.cfg.branches:
            analysis, synthesis, prior = self._branch(ctx)
            z = analysis(y)
            if mode == "train":
                z_rate = quantize(z, "noise", rng)
                z_hat = quantize(z, "ste")
            else:
                z_hat = quantize(z, "round")
                z_rate = z_hat
            out.rates[ctx] = rate_bits(prior.pmf(self._channels_first(z_rate)))
            out.z_hat[ctx] = z_hat
            out.features[ctx] = synthesis(z_hat)
        return out

    # -- full forward ------------------------------------------------------

    def forward(self, x: Tensor, mode: str = "train",
                rng: np.random.Generator | None = None,
                debug: bool = False) -> ForwardResult:
        if mode not in ("train", "eval"):
            raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
        if mode == "eval":
            with ag.no_grad():
                return self._forward_impl(x, mode, rng, debug)
        return self._forward_impl(x, mode, rng, debug)

    def _forward_impl(self, x: Tensor, mode: str,
                      rng: np.random.Generator | None,
                      debug: bool) -> ForwardResult:
        h0, w0 = x.shape[1], x.shape[2]
        if h0 % 64 != 0 or w0 % 64 != 0:
            raise ConfigError(f"image extents {h0}x{w0} must be divisible by 64")
        y = self.analysis(x)
        b, h, w, c = y.shape
        hyper = self.diversify(y, mode, rng)
        sched = quadtree_schedule(h, w, c)

        if mode == "train":
            y_hat = quantize(y, "ste")
            y_rate_target = quantize(y, "noise", rng)
        else:
            y_hat = quantize(y, "round")
            y_rate_target = y_hat

        fused = None
        if not self.cfg.step_adaptive:
            fused = self.context.fused_features(hyper.features, y.shape)

        buffer = Tensor(np.zeros(y.shape, dtype=y.data.dtype))
        rate_steps, mu_steps, sigma_steps = [], [], []
        coded = np.zeros(sched.masks[0].shape, dtype=bool)
        for i in range(4):
            mu, sigma = self.context(i, buffer, hyper.features, fused=fused,
                                     debug=debug, allowed_mask=coded)
            mu_steps.append(mu.data)
            sigma_steps.append(sigma.data)
            if mode == "eval":
                mu, sigma = self._snap_params(mu, sigma)
            p = gaussian_pmf(y_rate_target, mu, sigma)
            mask = sched.masks[i].astype(y.data.dtype)
            step_rate = ag.mul(
                ag.reduce_sum(ag.mul(ag.log(p), Tensor(mask))), -1.0 / np.log(2.0))
            rate_steps.append(step_rate)
            buffer = ag.add(buffer, ag.mul(y_hat, Tensor(mask)))
            coded |= sched.masks[i]

        rate_y = rate_steps[0]
        for r in rate_steps[1:]:
            rate_y = ag.add(rate_y, r)
        x_hat = self.synthesis(y_hat)
        diff = ag.add(x, ag.mul(x_hat, -1.0))
        distortion = ag.reduce_mean(ag.mul(diff, diff))
        return ForwardResult(
            x_hat=x_hat, y=y, y_hat=y_hat, rate_y=rate_y,
            rate_y_steps=rate_steps, hyper=hyper, distortion=distortion,
            mu_steps=mu_steps, sigma_steps=sigma_steps,
            num_pixels=b * h0 * w0,
        )

    def _snap_params(self, mu: Tensor, sigma: Tensor):
        """Eval-mode parameters as the coder will actually use them:
        integer mean shift and scale snapped up to the 64-entry table."""
        mu_q = Tensor(ag.round_half_away(mu.data))
        idx = entropy.sigma_to_index(sigma.data, self._scale_table)
        sigma_q = Tensor(self._scale_table[idx].astype(sigma.data.dtype))
        return mu_q, sigma_q

    def normalized_latents(self, result: ForwardResult):
        """Per-step standardized residuals (y - mu)/sigma over each mask."""
        sched = quadtree_schedule(*result.y.shape[1:4])
        out = []
        for i in range(4):
            mask = sched.masks[i]
            vals = ((result.y.data - result.mu_steps[i])
                    / result.sigma_steps[i])[:, mask]
            out.append(vals.reshape(-1))
        return out
