"""Synthetic corpus: determinism, value range, and actual structure."""

import numpy as np

from qlic.datasets import synthetic_corpus, synthetic_image


def test_corpus_shape_and_range():
    corpus = synthetic_corpus(5, 96, 64, seed=3)
    assert len(corpus) == 5
    for img in corpus:
        assert img.shape == (96, 64, 3)
        assert img.dtype == np.float32
        assert img.min() >= 0.0 and img.max() <= 1.0


def test_corpus_deterministic():
    a = synthetic_corpus(3, 64, 64, seed=11)
    b = synthetic_corpus(3, 64, 64, seed=11)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_different_seeds_differ():
    a = synthetic_corpus(1, 64, 64, seed=0)[0]
    b = synthetic_corpus(1, 64, 64, seed=1)[0]
    assert not np.array_equal(a, b)


def test_images_within_corpus_differ():
    a, b = synthetic_corpus(2, 64, 64, seed=5)
    assert not np.array_equal(a, b)


def test_images_have_spatial_structure():
    """Structured images compress better than white noise: neighboring
    pixels must be strongly correlated."""
    img = synthetic_image(np.random.default_rng(2), 128, 128)
    x = img[:, :-1, :].ravel()
    y = img[:, 1:, :].ravel()
    corr = np.corrcoef(x, y)[0, 1]
    assert corr > 0.8


def test_images_are_not_flat():
    for img in synthetic_corpus(4, 128, 128, seed=9):
        assert img.std() > 0.05
