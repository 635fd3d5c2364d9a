"""Latent diagnostics and runtime profiling.

`normalized_latent_stats` standardizes each coding step's latents by
the entropy model's own (mu, sigma) and summarizes the distribution —
a well-calibrated model keeps the spread comparable across all four
steps. `profile_model` times each sub-transform plus full encode and
decode. Timings are machine-specific and informational only.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .codec import CodeTables, decode_image, encode_image, pad_image
from .model import ImageCodec

HIST_BINS = 64
HIST_RANGE = (-8.0, 8.0)


@dataclass
class StepStats:
    step: int
    count: int
    min: float
    max: float
    mean: float
    std: float
    histogram: list  # 64 counts over [-8, 8]


def normalized_latent_stats(model: ImageCodec, image: np.ndarray) -> list:
    """Per-step stats of (y - mu)/sigma over that step's mask positions."""
    x = Tensor(pad_image(image)[None].astype(np.float32))
    result = model.forward(x, mode="eval")
    stats = []
    for i, vals in enumerate(model.normalized_latents(result)):
        hist, _ = np.histogram(vals, bins=HIST_BINS, range=HIST_RANGE)
        stats.append(StepStats(
            step=i + 1, count=int(vals.size),
            min=float(vals.min()), max=float(vals.max()),
            mean=float(vals.mean()), std=float(vals.std()),
            histogram=hist.tolist()))
    return stats


def write_stats_csv(stats_by_image: dict, path: str) -> None:
    """Rows: image_id, step, count, min, max, mean, std."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "step", "count", "min", "max", "mean", "std"])
        for image_id in sorted(stats_by_image):
            for s in stats_by_image[image_id]:
                writer.writerow([image_id, s.step, s.count, f"{s.min:.6f}",
                                 f"{s.max:.6f}", f"{s.mean:.6f}", f"{s.std:.6f}"])


def write_stats_json(stats_by_image: dict, path: str) -> None:
    """Full stats including histograms; bin edges recorded once."""
    payload = {
        "histogram_bins": HIST_BINS,
        "histogram_range": list(HIST_RANGE),
        "images": {
            image_id: [asdict(s) for s in stats]
            for image_id, stats in sorted(stats_by_image.items())
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _timed(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def profile_model(model: ImageCodec, image: np.ndarray, repeats: int = 3) -> dict:
    """Per-component wall times in seconds (best of `repeats`)."""
    padded = pad_image(image)
    timings: dict[str, float] = {}
    with ag.no_grad():
        x = Tensor(padded[None].astype(np.float32))
        y = model.analysis(x)
        timings["analysis"] = _timed(lambda: model.analysis(x), repeats)
        timings["synthesis"] = _timed(lambda: model.synthesis(y), repeats)
        for ctx, label in (("L", "local"), ("R", "regional"), ("G", "global")):
            if ctx not in model.cfg.branches:
                continue
            hyper_analysis, hyper_synthesis, _ = model._branch(ctx)
            z = hyper_analysis(y)
            timings[f"{label}_hyper_analysis"] = _timed(
                lambda fn=hyper_analysis: fn(y), repeats)
            timings[f"{label}_hyper_synthesis"] = _timed(
                lambda fn=hyper_synthesis, t=z: fn(t), repeats)

        features = {ctx: model._branch(ctx)[1](model._branch(ctx)[0](y))
                    for ctx in model.cfg.branches}
        fused = None
        if not model.cfg.step_adaptive:
            fused = model.context.fused_features(features, y.shape)
        buffer = Tensor(np.zeros(y.shape, dtype=np.float32))

        def run_context():
            for i in range(4):
                model.context(i, buffer, features, fused=fused)

        timings["context"] = _timed(run_context, repeats)

    tables = CodeTables.from_model(model)
    encoded = encode_image(model, image, tables=tables)
    timings["encode_total"] = _timed(
        lambda: encode_image(model, image, tables=tables), repeats)
    timings["decode_total"] = _timed(
        lambda: decode_image(model, encoded.bitstream, tables=tables), repeats)
    return timings


def format_profile(timings: dict) -> str:
    width = max(len(k) for k in timings)
    lines = [f"{name:<{width}}  {timings[name] * 1000.0:9.2f} ms"
             for name in timings]
    return "\n".join(lines)
