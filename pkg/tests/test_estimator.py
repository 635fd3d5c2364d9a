"""scikit-learn estimator front end: API conventions and round trips."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qlic.estimator import LearnedImageCodec

FAST = dict(epochs=1, steps_per_epoch=2, batch_size=1, crop_size=64)


def test_get_set_params_round_trip():
    est = LearnedImageCodec(lambda_index=4, seed=3, **FAST)
    params = est.get_params()
    assert params["lambda_index"] == 4
    est2 = LearnedImageCodec().set_params(**params)
    assert est2.get_params() == params


def test_clone_preserves_params():
    est = LearnedImageCodec(branches="RG", order="GLR", **FAST)
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()


def test_transform_before_fit_raises(corpus):
    with pytest.raises(NotFittedError):
        LearnedImageCodec(**FAST).transform(corpus[:1])


def test_fit_transform_inverse_round_trip(corpus):
    est = LearnedImageCodec(seed=0, **FAST)
    est.fit(corpus[:4])
    bitstreams = est.transform(corpus[:2])
    assert all(isinstance(b, bytes) and b for b in bitstreams)
    images = est.inverse_transform(bitstreams)
    for orig, rec in zip(corpus[:2], images):
        assert rec.shape == orig.shape
        assert rec.dtype == np.float32
    preds = est.predict(corpus[:1])
    np.testing.assert_array_equal(preds[0], images[0])


def test_single_image_accepted(corpus):
    est = LearnedImageCodec(seed=0, **FAST)
    est.fit(corpus[0])  # bare (H, W, 3) array, not a list
    assert est.transform(corpus[0])


def test_invalid_images_rejected(corpus):
    est = LearnedImageCodec(**FAST)
    with pytest.raises(ValueError, match=r"\(H, W, 3\)"):
        est.fit([np.zeros((8, 8), np.float32)])
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        est.fit([np.full((64, 64, 3), 2.0, np.float32)])
    with pytest.raises(ValueError, match="empty"):
        est.fit([])


def test_fit_is_seeded(corpus):
    a = LearnedImageCodec(seed=5, **FAST).fit(corpus[:3])
    b = LearnedImageCodec(seed=5, **FAST).fit(corpus[:3])
    assert a.transform(corpus[:1]) == b.transform(corpus[:1])


def test_branch_params_reach_model(corpus):
    est = LearnedImageCodec(branches="R", order="RGL", **FAST).fit(corpus[:2])
    assert est.model_.cfg.branches == "R"
    assert est.transform(corpus[:1])
