"""Image encode/decode: model likelihoods to real bytes and back.

The encoder and decoder run the same four-step schedule loop; the only
difference is whether latent symbols are produced or consumed. Both
sides derive every CDF table deterministically from the model
parameters, so decoded latents match the encoder's bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import container, entropy, rans
from .autograd import Tensor
from .model import ImageCodec
from .schedule import quadtree_schedule


class CodecError(ValueError):
    pass


def pad_image(image: np.ndarray, multiple: int = 64) -> np.ndarray:
    """Replicate-pad H and W up to the next multiple."""
    h, w = image.shape[:2]
    ph = -h % multiple
    pw = -w % multiple
    if ph == 0 and pw == 0:
        return image
    return np.pad(image, ((0, ph), (0, pw), (0, 0)), mode="edge")


@dataclass
class CodeTables:
    """All CDF tables a checkpoint implies; rebuilt, never serialized."""

    scale: np.ndarray
    gaussian: list
    factorized: dict  # branch -> list of per-channel tables

    @classmethod
    def from_model(cls, model: ImageCodec) -> "CodeTables":
        scale = entropy.default_scale_table()
        factorized = {
            ctx: entropy.factorized_cdf_tables(model.prior_for(ctx))
            for ctx in model.cfg.branches
        }
        return cls(scale=scale, gaussian=entropy.gaussian_cdf_tables(scale),
                   factorized=factorized)


@dataclass
class EncodeResult:
    bitstream: bytes
    y_hat: np.ndarray
    x_hat: np.ndarray
    substream_bits: dict
    model_bits: dict
    clamped_symbols: int


@dataclass
class DecodeResult:
    image: np.ndarray
    y_hat: np.ndarray
    header: container.Header


def _hyper_symbols(z: np.ndarray, tables) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten a (..., ch) hyper latent to (symbols, table_ids), clamping
    into each channel's support; returns the clamped array as well."""
    ch = z.shape[-1]
    lo = np.array([t.offset for t in tables])
    hi = np.array([t.offset + t.num_symbols - 1 for t in tables])
    clamped = np.clip(z, lo, hi)
    flat = clamped.reshape(-1, ch)
    ids = np.broadcast_to(np.arange(ch), flat.shape).reshape(-1)
    return flat.reshape(-1).astype(np.int64), ids, clamped


def _branch_shape(model: ImageCodec, ctx: str, h: int, w: int) -> tuple:
    cfg = model.cfg
    return {
        "L": (1, h, w, cfg.local_channels),
        "R": (1, h // 4, w // 4, cfg.regional_channels),
        "G": (1, cfg.global_tokens, cfg.channels // cfg.global_tokens),
    }[ctx]


def encode_image(model: ImageCodec, image: np.ndarray, lambda_index: int = 0,
                 tables: CodeTables | None = None) -> EncodeResult:
    """Compress one (H0, W0, 3) image in [0, 1] to a container bitstream."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise CodecError(f"expected (H, W, 3) image, got {image.shape}")
    if tables is None:
        tables = CodeTables.from_model(model)
    h0, w0 = image.shape[:2]
    padded = pad_image(image)
    ph, pw = padded.shape[:2]

    with ag.no_grad():
        x = Tensor(padded[None].astype(np.float32))
        y = model.analysis(x).data[0]  # (H, W, C)
        h, w, c = y.shape

        streams: dict[str, bytes] = {}
        model_bits: dict[str, float] = {}
        z_hats: dict[str, np.ndarray] = {}
        for ctx in model.cfg.branches:
            analysis, _, prior = model._branch(ctx)
            z = analysis(Tensor(y[None])).data
            z_round = ag.round_half_away(z).astype(np.int64)
            symbols, ids, clamped = _hyper_symbols(z_round, tables.factorized[ctx])
            z_hats[ctx] = clamped.astype(np.float32)
            streams[ctx] = rans.rans_encode(symbols, ids, tables.factorized[ctx])
            pmf = prior.pmf(model._channels_first(Tensor(clamped.astype(np.float32)))).data
            model_bits[ctx] = float(-np.sum(np.log2(pmf)))

        features = {
            ctx: model._branch(ctx)[1](Tensor(z_hats[ctx])) for ctx in model.cfg.branches
        }
        fused = None
        if not model.cfg.step_adaptive:
            fused = model.context.fused_features(features, (1, h, w, c))

        sched = quadtree_schedule(h, w, c)
        y_round = ag.round_half_away(y)
        buffer = np.zeros_like(y)
        y_symbols, y_ids = [], []
        y_bits = 0.0
        clamped_count = 0
        for i in range(4):
            mu, sigma = model.context(i, Tensor(buffer[None]), features, fused=fused)
            mask = sched.masks[i]
            mu_i = ag.round_half_away(mu.data[0][mask])
            idx = entropy.sigma_to_index(sigma.data[0][mask], tables.scale)
            residual = (y_round[mask] - mu_i).astype(np.int64)
            radius = np.array([tables.gaussian[j].num_symbols // 2 for j in idx])
            clamped_res = np.clip(residual, -radius, radius)
            clamped_count += int(np.sum(clamped_res != residual))
            coded = clamped_res + mu_i
            buffer[mask] = coded
            y_symbols.append(clamped_res)
            y_ids.append(idx)
            sigma_q = tables.scale[idx]
            p = entropy.gaussian_pmf(
                Tensor(coded.astype(np.float32)),
                Tensor(mu_i.astype(np.float32)),
                Tensor(sigma_q.astype(np.float32))).data
            y_bits += float(-np.sum(np.log2(p)))
        streams["Y"] = rans.rans_encode(
            np.concatenate(y_symbols), np.concatenate(y_ids), tables.gaussian)
        model_bits["Y"] = y_bits

        x_hat = model.synthesis(Tensor(buffer[None])).data[0, :h0, :w0]

    header = container.Header(
        variant=model.cfg.variant_byte(), lambda_index=lambda_index,
        orig_height=h0, orig_width=w0, padded_height=ph, padded_width=pw)
    data = container.serialize(header, streams)
    return EncodeResult(
        bitstream=data, y_hat=buffer.copy(), x_hat=x_hat,
        substream_bits={k: 8 * len(v) for k, v in streams.items()},
        model_bits=model_bits, clamped_symbols=clamped_count)


def decode_image(model: ImageCodec, data: bytes, lambda_index: int | None = None,
                 tables: CodeTables | None = None) -> DecodeResult:
    """Decode a container bitstream back to an image (and its latent)."""
    header, streams = container.parse(data)
    if header.variant != model.cfg.variant_byte():
        raise CodecError(
            f"bitstream variant 0x{header.variant:02x} does not match "
            f"checkpoint variant 0x{model.cfg.variant_byte():02x}")
    if lambda_index is not None and header.lambda_index != lambda_index:
        raise CodecError(
            f"bitstream lambda index {header.lambda_index} does not match "
            f"checkpoint lambda index {lambda_index}")
    if tables is None:
        tables = CodeTables.from_model(model)
    h, w = header.padded_height // 16, header.padded_width // 16
    c = model.cfg.channels

    with ag.no_grad():
        features = {}
        z_hats = {}
        for ctx in model.cfg.branches:
            shape = _branch_shape(model, ctx, h, w)
            ch = shape[-1]
            count = int(np.prod(shape))
            ids = np.broadcast_to(np.arange(ch), (count // ch, ch)).reshape(-1)
            symbols = rans.rans_decode(streams[ctx], ids, tables.factorized[ctx])
            z_hat = symbols.reshape(shape).astype(np.float32)
            z_hats[ctx] = z_hat
            features[ctx] = model._branch(ctx)[1](Tensor(z_hat))
        fused = None
        if not model.cfg.step_adaptive:
            fused = model.context.fused_features(features, (1, h, w, c))

        sched = quadtree_schedule(h, w, c)
        buffer = np.zeros((h, w, c), dtype=np.float32)
        decoder = rans.RansDecoder(streams["Y"])
        for i in range(4):
            mu, sigma = model.context(i, Tensor(buffer[None]), features, fused=fused)
            mask = sched.masks[i]
            mu_i = ag.round_half_away(mu.data[0][mask])
            idx = entropy.sigma_to_index(sigma.data[0][mask], tables.scale)
            residual = decoder.decode(idx, tables.gaussian)
            buffer[mask] = residual + mu_i
        decoder.finish()
        x_hat = model.synthesis(Tensor(buffer[None])).data[0]
    image = x_hat[: header.orig_height, : header.orig_width]
    return DecodeResult(image=image, y_hat=buffer, header=header)
