import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qlic.datasets import synthetic_corpus
from qlic.model import CodecConfig
from qlic.training import TrainConfig, fit

# Budget shared by every trained fixture so comparisons stay matched.
TRAIN_KW = dict(epochs=3, steps_per_epoch=20, batch_size=2, crop_size=64)


@pytest.fixture(scope="session")
def corpus():
    return synthetic_corpus(10, 128, 128, seed=42)


@pytest.fixture(scope="session")
def heldout_images():
    return synthetic_corpus(4, 128, 128, seed=1042)


def train_model(corpus, lambda_index=2, seed=0, branches="LRG", **extra):
    kw = dict(TRAIN_KW)
    kw.update(extra)
    cfg = TrainConfig(lambda_index=lambda_index, seed=seed, **kw)
    result = fit(corpus, cfg, model_cfg=CodecConfig(branches=branches))
    return result.checkpoint


@pytest.fixture(scope="session")
def trained_checkpoint(corpus):
    """One desk-scale checkpoint at the middle rate point."""
    return train_model(corpus, lambda_index=2, seed=0)


@pytest.fixture(scope="session")
def trained_checkpoint_high_rate(corpus):
    """A second checkpoint at a higher lambda (more bits, better quality)."""
    return train_model(corpus, lambda_index=4, seed=0)


@pytest.fixture(scope="session")
def trained_model(trained_checkpoint):
    return trained_checkpoint.build_model()


@pytest.fixture(scope="session")
def trained_model_high_rate(trained_checkpoint_high_rate):
    return trained_checkpoint_high_rate.build_model()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
