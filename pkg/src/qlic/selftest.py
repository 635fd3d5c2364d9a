"""Fast built-in property checks, exposed as the `selftest` subcommand.

A trimmed-down version of the full test suite that runs in seconds
with no fixtures: schedule partition laws, rANS round trips, pmf
normalization, a couple of finite-difference gradient checks, BD-rate
oracles, and a lossless encode/decode round trip on a freshly
initialized model. The pytest suite is the authority; this is a field
diagnostic.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from . import entropy, rans
from .autograd import Tensor
from .codec import CodeTables, decode_image, encode_image
from .datasets import synthetic_image
from .metrics import RDPoint, bd_rate
from .model import CodecConfig, ImageCodec
from .optim import gradient_check
from .schedule import quadtree_schedule

CHECKS = []


def _check(fn):
    CHECKS.append(fn)
    return fn


@_check
def schedule_partition():
    """Step masks partition positions; each step holds exactly 1/4."""
    for h, w, c in ((4, 4, 8), (8, 6, 4), (2, 2, 16)):
        sched = quadtree_schedule(h, w, c)
        total = sched.masks.sum(axis=0)
        assert np.all(total == 1), "masks do not partition"
        counts = sched.masks.sum(axis=(1, 2, 3))
        assert np.all(counts == h * w * c // 4), "unequal step sizes"


@_check
def rans_round_trip():
    """Random symbol streams under random tables decode to identity."""
    rng = np.random.default_rng(7)
    scale = entropy.default_scale_table()
    tables = entropy.gaussian_cdf_tables(scale[:8])
    for _ in range(20):
        n = int(rng.integers(0, 200))
        ids = rng.integers(0, len(tables), size=n)
        radius = np.array([tables[j].num_symbols // 2 for j in ids])
        symbols = rng.integers(-radius, radius + 1) if n else np.zeros(0, int)
        data = rans.rans_encode(symbols, ids, tables)
        out = rans.rans_decode(data, ids, tables)
        assert np.array_equal(out, symbols), "rANS round trip failed"


@_check
def pmf_normalization():
    """Gaussian-conditional pmf sums to 1 over its integer support."""
    rng = np.random.default_rng(3)
    for _ in range(50):
        mu = float(rng.uniform(-2, 2))
        sigma = float(rng.uniform(0.11, 64))
        radius = int(np.ceil(8 * sigma)) + 2
        grid = np.arange(-radius, radius + 1, dtype=np.float32) + round(mu)
        p = entropy.gaussian_pmf(Tensor(grid), Tensor(np.float32(mu)),
                                 Tensor(np.float32(sigma)), floor=False).data
        assert abs(float(p.sum()) - 1.0) < 1e-3, f"pmf sum {p.sum()}"


@_check
def gradients():
    """Finite differences agree for a small conv + layer-norm stack."""
    rng = np.random.default_rng(11)
    w = Tensor(rng.normal(size=(3, 3, 2, 2)).astype(np.float64), requires_grad=True)
    g = Tensor(rng.normal(size=(2,)).astype(np.float64), requires_grad=True)
    b = Tensor(rng.normal(size=(2,)).astype(np.float64), requires_grad=True)
    x = rng.normal(size=(1, 4, 4, 2)).astype(np.float64)

    def fn():
        h = ag.conv2d(Tensor(x), w, padding=1)
        h = ag.layer_norm(h, g, b)
        return ag.reduce_sum(ag.mul(ag.sigmoid(h), h))

    worst = gradient_check(fn, {"w": w, "gamma": g, "beta": b},
                           max_coords_per_param=6, rng=rng)
    assert worst < 1e-4, f"gradient mismatch {worst}"


@_check
def bd_rate_oracle():
    """Identity gives 0%; a uniform 5% rate shift gives exactly +5%."""
    anchor = [RDPoint(bpp=r, psnr=p) for r, p in
              ((0.2, 28.0), (0.4, 31.0), (0.8, 34.0), (1.6, 37.0))]
    assert bd_rate(anchor, anchor) == 0.0
    shifted = [RDPoint(bpp=p.bpp * 1.05, psnr=p.psnr) for p in anchor]
    assert abs(bd_rate(anchor, shifted) - 5.0) < 1e-6


@_check
def lossless_transport():
    """Encoder and decoder agree bit for bit, even untrained."""
    model = ImageCodec(CodecConfig(), seed=5)
    tables = CodeTables.from_model(model)
    img = synthetic_image(np.random.default_rng(21), 70, 90)
    enc = encode_image(model, img, tables=tables)
    dec = decode_image(model, enc.bitstream, tables=tables)
    assert np.array_equal(enc.y_hat, dec.y_hat), "latent mismatch"
    assert np.array_equal(enc.x_hat, dec.image), "reconstruction mismatch"


def run(report=print) -> int:
    """Run every check; returns 0 when all pass."""
    failures = 0
    for fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # report and keep going
            failures += 1
            report(f"FAIL {fn.__name__}: {exc}")
        else:
            report(f"ok   {fn.__name__}")
    return 1 if failures else 0
