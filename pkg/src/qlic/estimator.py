"""scikit-learn style front end for the codec.

`LearnedImageCodec` treats compression as a transform: `fit` trains on
a list of images, `transform` maps images to bitstreams, and
`inverse_transform` maps bitstreams back. `predict` returns the
reconstruction directly (encode followed by decode). Handy for
pipeline-style experiments and grid searches over lambda.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .codec import CodeTables, decode_image, encode_image
from .model import CodecConfig, ImageCodec
from .training import TrainConfig, fit as train_fit


def _check_images(X) -> list:
    if isinstance(X, np.ndarray) and X.ndim == 3:
        X = [X]
    images = []
    for i, img in enumerate(X):
        arr = np.asarray(img, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image {i}: expected (H, W, 3), got {arr.shape}")
        if arr.min() < 0 or arr.max() > 1:
            raise ValueError(f"image {i}: values must lie in [0, 1]")
        images.append(arr)
    if not images:
        raise ValueError("empty image list")
    return images


class LearnedImageCodec(BaseEstimator, TransformerMixin):
    def __init__(self, lambda_index: int = 2, epochs: int = 10,
                 steps_per_epoch: int = 30, batch_size: int = 4,
                 crop_size: int = 64, lr: float = 1e-4, seed: int = 0,
                 order: str = "RGL", branches: str = "LRG",
                 step_adaptive: bool = True):
        self.lambda_index = lambda_index
        self.epochs = epochs
        self.steps_per_epoch = steps_per_epoch
        self.batch_size = batch_size
        self.crop_size = crop_size
        self.lr = lr
        self.seed = seed
        self.order = order
        self.branches = branches
        self.step_adaptive = step_adaptive

    def fit(self, X, y=None):
        images = _check_images(X)
        train_cfg = TrainConfig(
            lambda_index=self.lambda_index, epochs=self.epochs,
            steps_per_epoch=self.steps_per_epoch, batch_size=self.batch_size,
            crop_size=self.crop_size, lr=self.lr, seed=self.seed)
        model_cfg = CodecConfig(order=self.order, branches=self.branches,
                                step_adaptive=self.step_adaptive)
        result = train_fit(images, train_cfg, model_cfg=model_cfg)
        self.model_ = result.checkpoint.build_model()
        self.tables_ = CodeTables.from_model(self.model_)
        self.log_ = result.log
        return self

    def transform(self, X) -> list:
        check_is_fitted(self, "model_")
        return [encode_image(self.model_, img, lambda_index=self.lambda_index,
                             tables=self.tables_).bitstream
                for img in _check_images(X)]

    def inverse_transform(self, bitstreams) -> list:
        check_is_fitted(self, "model_")
        return [decode_image(self.model_, data, tables=self.tables_).image
                for data in bitstreams]

    def predict(self, X) -> list:
        return self.inverse_transform(self.transform(X))
