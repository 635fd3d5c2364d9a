"""Rate-distortion optimization: loss, training loop, lambda sweep values."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .checkpoint import Checkpoint
from .metrics import PSNR_INF
from .model import CodecConfig, ImageCodec
from .optim import Adam, backward_through, clip_global_norm

# Desk-scale lambda sweep (MSE scaled by 255^2); six rate points.
LAMBDA_VALUES = (0.0018, 0.0035, 0.0067, 0.013, 0.025, 0.0483)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lambda_index: int = 2
    lam: float | None = None          # overrides the table when set
    epochs: int = 10
    steps_per_epoch: int = 30
    batch_size: int = 4
    crop_size: int = 64
    seed: int = 0
    lr: float = 1e-4
    lr_decay_fraction: float = 0.9    # decay x0.1 after this fraction of epochs
    grad_clip: float = 1.0

    def validate(self) -> "TrainConfig":
        if self.effective_lambda() <= 0:
            raise TrainingError("lambda must be positive")
        if self.crop_size % 64 != 0:
            raise TrainingError(f"crop size {self.crop_size} must be divisible by 64")
        if self.epochs < 1 or self.steps_per_epoch < 1 or self.batch_size < 1:
            raise TrainingError("epochs, steps and batch size must be positive")
        return self

    def effective_lambda(self) -> float:
        if self.lam is not None:
            return self.lam
        return LAMBDA_VALUES[self.lambda_index]


def rd_loss(rates, x: Tensor, x_hat: Tensor, lam: float, num_pixels: int) -> Tensor:
    """bpp-normalized rate plus lambda * 255^2 * MSE (pixels in [0,1])."""
    if lam <= 0:
        raise TrainingError(f"lambda must be positive, got {lam}")
    total = rates[0]
    for r in rates[1:]:
        total = ag.add(total, r)
    diff = ag.add(x, ag.mul(x_hat, -1.0))
    mse = ag.reduce_mean(ag.mul(diff, diff))
    return ag.add(ag.mul(total, 1.0 / num_pixels), ag.mul(mse, lam * 255.0**2))


@dataclass
class TrainLogRow:
    step: int
    loss: float
    bpp_est: float
    psnr_est: float


@dataclass
class FitResult:
    checkpoint: Checkpoint
    log: list = field(default_factory=list)


def sample_batch(corpus, batch_size: int, crop: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((batch_size, crop, crop, 3), dtype=np.float32)
    for b in range(batch_size):
        img = corpus[rng.integers(len(corpus))]
        h, w = img.shape[:2]
        if h < crop or w < crop:
            raise TrainingError(f"corpus image {h}x{w} smaller than crop {crop}")
        i = rng.integers(h - crop + 1)
        j = rng.integers(w - crop + 1)
        out[b] = img[i : i + crop, j : j + crop]
    return out


def fit(corpus, cfg: TrainConfig, model: ImageCodec | None = None,
        model_cfg: CodecConfig | None = None, log_path: str | None = None,
        progress=None) -> FitResult:
    """Seeded deterministic training run; returns checkpoint plus CSV log."""
    cfg.validate()
    if not corpus:
        raise TrainingError("empty training corpus")
    if model is None:
        model = ImageCodec(model_cfg or CodecConfig(), seed=cfg.seed)
    lam = cfg.effective_lambda()
    rng = np.random.default_rng(cfg.seed)
    named = dict(model.named_parameters())
    optimizer = Adam(named, lr=cfg.lr)
    total_steps = cfg.epochs * cfg.steps_per_epoch
    decay_step = int(total_steps * cfg.lr_decay_fraction)
    log: list[TrainLogRow] = []
    for step in range(total_steps):
        if step == decay_step:
            optimizer.lr = cfg.lr * 0.1
        batch = sample_batch(corpus, cfg.batch_size, cfg.crop_size, rng)
        x = Tensor(batch)
        result = model.forward(x, mode="train", rng=rng)
        rates = [result.rate_y] + [result.hyper.rates[c] for c in sorted(result.hyper.rates)]
        loss = rd_loss(rates, x, result.x_hat, lam, result.num_pixels)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise TrainingError(f"non-finite loss at step {step}")
        optimizer.zero_grad()
        backward_through(loss, named.values())
        clip_global_norm(named.values(), cfg.grad_clip)
        optimizer.step()
        bpp = sum(float(r.data) for r in rates) / result.num_pixels
        mse = float(result.distortion.data)
        psnr = PSNR_INF if mse == 0 else 10.0 * np.log10(1.0 / mse)
        log.append(TrainLogRow(step=step, loss=loss_val, bpp_est=bpp, psnr_est=psnr))
        if progress is not None:
            progress(step, total_steps, loss_val)
    if log_path is not None:
        write_log(log, log_path)
    return FitResult(checkpoint=Checkpoint.from_model(model, cfg.lambda_index), log=log)


def write_log(log, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "bpp_est", "psnr_est"])
        for row in log:
            writer.writerow([row.step, f"{row.loss:.6f}", f"{row.bpp_est:.6f}",
                             f"{row.psnr_est:.4f}"])


def heldout_rd_loss(model: ImageCodec, images, lam: float) -> float:
    """Mean eval-mode rd_loss over a held-out image list."""
    total = 0.0
    for img in images:
        x = Tensor(img[None].astype(np.float32))
        result = model.forward(x, mode="eval")
        rates = [result.rate_y] + [result.hyper.rates[c] for c in sorted(result.hyper.rates)]
        bits = sum(float(r.data) for r in rates)
        mse = float(result.distortion.data)
        total += bits / result.num_pixels + lam * 255.0**2 * mse
    return total / len(images)
