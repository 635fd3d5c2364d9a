"""PSNR, bpp, and BD-rate against hand-computed values and a quadrature oracle."""

import numpy as np
import pytest

from qlic.metrics import (MetricError, RDPoint, bd_rate, bd_rate_per_image,
                          bpp, psnr)

from oracles import bd_rate_quadrature


# -- psnr ------------------------------------------------------------------


def test_psnr_known_value():
    a = np.zeros((8, 8, 3))
    b = np.full((8, 8, 3), 16.0 / 255.0)
    # MSE = (16/255)^2  ->  20*log10(255/16) = 24.0475 dB
    assert psnr(a, b) == pytest.approx(20.0 * np.log10(255.0 / 16.0), abs=1e-9)


def test_psnr_identical_is_inf():
    a = np.random.default_rng(0).random((4, 4, 3))
    assert psnr(a, a.copy()) == float("inf")


def test_psnr_half_range():
    a = np.zeros((2, 2))
    b = np.full((2, 2), 0.5)
    assert psnr(a, b) == pytest.approx(10.0 * np.log10(4.0), abs=1e-9)


def test_psnr_shape_mismatch_rejected():
    with pytest.raises(MetricError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))


# -- bpp -------------------------------------------------------------------


def test_bpp_known_values():
    assert bpp(b"\x00" * 1000, 100, 100) == pytest.approx(0.8)
    assert bpp(b"", 10, 10) == 0.0
    assert bpp(b"\xff", 1, 1) == 8.0


def test_bpp_bad_extents_rejected():
    with pytest.raises(MetricError):
        bpp(b"x", 0, 10)
    with pytest.raises(MetricError):
        bpp(b"x", 10, -1)


# -- RDPoint ---------------------------------------------------------------


def test_rdpoint_rejects_nonpositive_bpp():
    with pytest.raises(MetricError):
        RDPoint(bpp=0.0, psnr=30.0)
    with pytest.raises(MetricError):
        RDPoint(bpp=-1.0, psnr=30.0)


# -- bd_rate ---------------------------------------------------------------


def curve(pairs):
    return [RDPoint(bpp=r, psnr=p) for r, p in pairs]


ANCHOR = curve([(0.25, 30.0), (0.5, 33.0), (1.0, 36.5), (2.0, 40.0)])


def test_bd_rate_identity_is_zero():
    assert bd_rate(ANCHOR, ANCHOR) == pytest.approx(0.0, abs=1e-12)


def test_bd_rate_uniform_scale():
    """Scaling every rate by 1.05 at identical quality is exactly +5%."""
    test = curve([(r.bpp * 1.05, r.psnr) for r in ANCHOR])
    assert bd_rate(ANCHOR, test) == pytest.approx(5.0, abs=1e-6)
    half = curve([(r.bpp * 0.5, r.psnr) for r in ANCHOR])
    assert bd_rate(ANCHOR, half) == pytest.approx(-50.0, abs=1e-6)


def test_bd_rate_matches_quadrature_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        ps = np.sort(rng.uniform(28, 42, size=5))
        while np.any(np.diff(ps) < 0.3):
            ps = np.sort(rng.uniform(28, 42, size=5))
        anchor = curve([(float(np.exp(0.15 * p - 5.5 + rng.normal(0, 0.02))), float(p))
                        for p in ps])
        test = curve([(p.bpp * float(rng.uniform(0.8, 1.2)), p.psnr + 0.1)
                      for p in anchor])
        got = bd_rate(anchor, test)
        want = bd_rate_quadrature(anchor, test)
        assert got == pytest.approx(want, abs=1e-4, rel=1e-4)


def test_bd_rate_antisymmetry():
    test = curve([(r.bpp * 1.1, r.psnr + 0.2) for r in ANCHOR])
    fwd = bd_rate(ANCHOR, test)
    rev = bd_rate(test, ANCHOR)
    # (1+f/100) * (1+r/100) == 1 exactly for the log-domain average
    assert (1 + fwd / 100.0) * (1 + rev / 100.0) == pytest.approx(1.0, abs=1e-9)


def test_bd_rate_needs_four_points():
    with pytest.raises(MetricError, match="4"):
        bd_rate(ANCHOR[:3], ANCHOR)
    with pytest.raises(MetricError, match="4"):
        bd_rate(ANCHOR, ANCHOR[:2])


def test_bd_rate_rejects_nonmonotone_psnr():
    bad = curve([(0.25, 30.0), (0.5, 33.0), (1.0, 32.0), (2.0, 40.0)])
    with pytest.raises(MetricError, match="increasing"):
        bd_rate(bad, ANCHOR)


def test_bd_rate_rejects_disjoint_ranges():
    low = curve([(0.1, 20.0), (0.2, 22.0), (0.3, 24.0), (0.4, 26.0)])
    high = curve([(1.0, 36.0), (2.0, 38.0), (3.0, 40.0), (4.0, 42.0)])
    with pytest.raises(MetricError, match="overlap"):
        bd_rate(low, high)


def test_bd_rate_rejects_nonfinite_psnr():
    bad = ANCHOR[:3] + [RDPoint(bpp=4.0, psnr=float("inf"))]
    with pytest.raises(MetricError, match="finite"):
        bd_rate(bad, ANCHOR)


# -- bd_rate_per_image -----------------------------------------------------


def tagged(pairs, image_id):
    return [RDPoint(bpp=r, psnr=p, image_id=image_id) for r, p in pairs]


def test_bd_rate_per_image_averages():
    a1 = tagged([(0.25, 30.0), (0.5, 33.0), (1.0, 36.5), (2.0, 40.0)], "a")
    a2 = tagged([(0.3, 29.0), (0.6, 32.0), (1.2, 35.0), (2.4, 38.0)], "b")
    t1 = tagged([(r.bpp * 1.10, r.psnr) for r in a1], "a")
    t2 = tagged([(r.bpp * 0.90, r.psnr) for r in a2], "b")
    got = bd_rate_per_image(a1 + a2, t1 + t2)
    assert got == pytest.approx((10.0 - 10.0) / 2, abs=1e-6)


def test_bd_rate_per_image_missing_curve_rejected():
    a = tagged([(0.25, 30.0), (0.5, 33.0), (1.0, 36.5), (2.0, 40.0)], "a")
    with pytest.raises(MetricError, match="missing"):
        bd_rate_per_image(a, [])
