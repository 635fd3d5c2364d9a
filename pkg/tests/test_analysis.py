"""Latent diagnostics and profiling output formats."""

import csv
import json

import numpy as np

from qlic.analysis import (HIST_BINS, format_profile, normalized_latent_stats,
                           profile_model, write_stats_csv, write_stats_json)
from qlic.datasets import synthetic_image
from qlic.model import CodecConfig, ImageCodec


def test_stats_cover_all_steps_and_positions():
    model = ImageCodec(CodecConfig(), seed=0)
    img = synthetic_image(np.random.default_rng(0), 64, 64)
    stats = normalized_latent_stats(model, img)
    assert [s.step for s in stats] == [1, 2, 3, 4]
    total = sum(s.count for s in stats)
    assert total == 4 * 4 * 32  # latent grid times channels
    for s in stats:
        assert s.min <= s.mean <= s.max
        assert s.std >= 0
        assert len(s.histogram) == HIST_BINS
        assert sum(s.histogram) <= s.count  # outliers fall outside the range


def test_stats_handle_odd_image_extent():
    model = ImageCodec(CodecConfig(), seed=0)
    img = synthetic_image(np.random.default_rng(1), 65, 70)
    stats = normalized_latent_stats(model, img)
    assert sum(s.count for s in stats) == 8 * 8 * 32  # padded to 128x128


def test_trained_model_latents_are_finite_and_spread(trained_model, heldout_images):
    """The diagnostic must produce finite, non-degenerate numbers on a
    trained model. (How close std gets to 1 depends on training budget,
    so that is reported, not asserted.)"""
    stats = normalized_latent_stats(trained_model, heldout_images[0])
    for s in stats:
        assert np.isfinite([s.min, s.max, s.mean, s.std]).all()
        assert s.std > 0


def test_write_stats_csv(tmp_path):
    model = ImageCodec(CodecConfig(), seed=0)
    img = synthetic_image(np.random.default_rng(2), 64, 64)
    by_image = {"img0": normalized_latent_stats(model, img)}
    path = str(tmp_path / "stats.csv")
    write_stats_csv(by_image, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["image_id", "step", "count", "min", "max", "mean", "std"]
    assert len(rows) == 5
    assert rows[1][0] == "img0" and rows[1][1] == "1"


def test_write_stats_json(tmp_path):
    model = ImageCodec(CodecConfig(), seed=0)
    img = synthetic_image(np.random.default_rng(3), 64, 64)
    by_image = {"img0": normalized_latent_stats(model, img)}
    path = str(tmp_path / "stats.json")
    write_stats_json(by_image, path)
    payload = json.load(open(path))
    assert payload["histogram_bins"] == HIST_BINS
    assert payload["histogram_range"] == [-8.0, 8.0]
    steps = payload["images"]["img0"]
    assert len(steps) == 4
    assert len(steps[0]["histogram"]) == HIST_BINS


def test_profile_reports_all_components():
    model = ImageCodec(CodecConfig(), seed=0)
    img = synthetic_image(np.random.default_rng(4), 64, 64)
    timings = profile_model(model, img, repeats=1)
    expected = {"analysis", "synthesis", "context", "encode_total", "decode_total",
                "local_hyper_analysis", "local_hyper_synthesis",
                "regional_hyper_analysis", "regional_hyper_synthesis",
                "global_hyper_analysis", "global_hyper_synthesis"}
    assert set(timings) == expected
    assert all(v >= 0 for v in timings.values())
    text = format_profile(timings)
    assert "encode_total" in text and "ms" in text


def test_profile_skips_disabled_branches():
    model = ImageCodec(CodecConfig(branches="R", order="RGL"), seed=0)
    img = synthetic_image(np.random.default_rng(5), 64, 64)
    timings = profile_model(model, img, repeats=1)
    assert "local_hyper_analysis" not in timings
    assert "global_hyper_analysis" not in timings
    assert "regional_hyper_analysis" in timings
