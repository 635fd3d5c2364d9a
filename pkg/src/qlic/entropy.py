"""Probability models for the coded symbols.

Two families:
  * a conditional Gaussian convolved with U(-1/2, 1/2) for the latent,
    parameterized by per-element (mu, sigma);
  * non-parametric per-channel factorized priors (a learned monotone
    cumulative) for the three hyper latents.

Plus the quantizers and the integerized 16-bit CDF tables that bridge
both models to the range coder bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as _special

from . import autograd as ag
from .autograd import Tensor
from .modules import Module, parameter

PRECISION = 16
CDF_TOTAL = 1 << PRECISION
LIKELIHOOD_MIN = 2.0**-16
SIGMA_MIN = 0.11
SIGMA_MAX = 256.0
SCALE_TABLE_SIZE = 64
TAIL_MASS = 1e-9


class EntropyError(ValueError):
    pass


# -- quantization ----------------------------------------------------------


def quantize(y: Tensor, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """noise: additive U(-1/2,1/2); ste: round with identity gradient;
    round: plain deterministic rounding (inference only)."""
    if mode == "noise":
        if rng is None:
            raise EntropyError("noise quantization needs a seeded generator")
        noise = rng.uniform(-0.5, 0.5, size=y.shape).astype(y.dtype)
        return ag.add(y, Tensor(noise))
    if mode == "ste":
        return ag.round_ste(y)
    if mode == "round":
        if y.requires_grad or y._prev:
            raise EntropyError("round quantization is inference-only; "
                               "use 'ste' on differentiable paths")
        return Tensor(ag.round_half_away(y.data))
    raise EntropyError(f"unknown quantization mode {mode!r}")


def clamp_sigma(sigma_preact: Tensor) -> Tensor:
    """Map a raw network output to sigma in [SIGMA_MIN, SIGMA_MAX] via exp."""
    return ag.exp(ag.clamp(sigma_preact, np.log(SIGMA_MIN), np.log(SIGMA_MAX)))


# -- Gaussian conditional --------------------------------------------------


def gaussian_pmf(symbols, mu: Tensor, sigma: Tensor, floor: bool = True) -> Tensor:
    """Per-element likelihood Phi((s+1/2-mu)/sigma) - Phi((s-1/2-mu)/sigma).

    Floored at 2^-16 by default so rates stay finite; pass floor=False
    for the exactly-normalized probabilities."""
    s = symbols if isinstance(symbols, Tensor) else Tensor(np.asarray(symbols))
    inv = ag.power(sigma, -1.0)
    centered = ag.add(s, ag.mul(mu, -1.0))
    upper = ag.std_normal_cdf(ag.mul(ag.add(centered, 0.5), inv))
    lower = ag.std_normal_cdf(ag.mul(ag.add(centered, -0.5), inv))
    diff = ag.add(upper, ag.mul(lower, -1.0))
    if not floor:
        return diff
    return ag.maximum(diff, LIKELIHOOD_MIN)


def rate_bits(likelihoods: Tensor) -> Tensor:
    """Total -log2 likelihood, in bits."""
    return ag.mul(ag.reduce_sum(ag.log(likelihoods)), -1.0 / np.log(2.0))


# -- factorized prior ------------------------------------------------------


class FactorizedPrior(Module):
    """Per-channel monotone cumulative built from softplus-positive matrix
    layers with tanh gates, squashed by a final sigmoid.

    The construction guarantees c is nondecreasing and maps R onto (0,1)
    for any parameter values.
    """

    # init_scale sets the width of the initial cumulative: the transition
    # happens over roughly +/- 6*init_scale, so 4 keeps nearly all mass
    # inside [-30, 30] before training starts.
    def __init__(self, channels: int, filters=(3, 3, 3, 3), init_scale: float = 4.0):
        self.channels = channels
        self.filters = tuple(filters)
        widths = (1,) + self.filters + (1,)
        scale = init_scale ** (1.0 / (len(self.filters) + 1))
        rng = np.random.default_rng(channels)  # init only; overwritten on load
        self.matrices = []
        self.biases = []
        self.gates = []
        for k in range(len(widths) - 1):
            w_in, w_out = widths[k], widths[k + 1]
            init = np.log(np.expm1(1.0 / scale / w_out))
            self.matrices.append(parameter(
                np.full((channels, w_in, w_out), init, dtype=np.float32)))
            self.biases.append(parameter(
                rng.uniform(-0.5, 0.5, size=(channels, 1, w_out)).astype(np.float32)))
            if k < len(widths) - 2:
                self.gates.append(parameter(
                    np.zeros((channels, 1, w_out), dtype=np.float32)))

    def cumulative(self, x) -> Tensor:
        """Evaluate c at `x`, shaped (channels, n_points)."""
        u = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
        u = ag.reshape(u, (self.channels, -1, 1))
        for k, (m, b) in enumerate(zip(self.matrices, self.biases)):
            u = ag.add(ag.matmul(u, ag.softplus(m)), b)
            if k < len(self.gates):
                u = ag.add(u, ag.mul(ag.tanh(self.gates[k]), ag.tanh(u)))
        return ag.reshape(ag.sigmoid(u), (self.channels, -1))

    def pmf(self, symbols) -> Tensor:
        """Likelihood c(s+1/2) - c(s-1/2), floored at 2^-16.

        `symbols` is (channels, n) and may be continuous during training.
        """
        s = symbols if isinstance(symbols, Tensor) else Tensor(np.asarray(symbols))
        upper = self.cumulative(ag.add(s, 0.5))
        lower = self.cumulative(ag.add(s, -0.5))
        return ag.maximum(ag.add(upper, ag.mul(lower, -1.0)), LIKELIHOOD_MIN)


# -- integerized CDF tables ------------------------------------------------


@dataclass
class CdfTable:
    """Integer CDF at 16-bit precision over symbols offset..offset+n-1.

    cdf[0] == 0, cdf[-1] == 65536, strictly increasing (every bucket >= 1).
    """

    offset: int
    cdf: np.ndarray  # uint32, length n+1

    @property
    def num_symbols(self) -> int:
        return len(self.cdf) - 1

    def contains(self, symbol: int) -> bool:
        return self.offset <= symbol < self.offset + self.num_symbols

    def start_freq(self, symbol: int) -> tuple[int, int]:
        i = symbol - self.offset
        return int(self.cdf[i]), int(self.cdf[i + 1] - self.cdf[i])

    def symbol_from_cum(self, cum: int) -> int:
        i = int(np.searchsorted(self.cdf, cum, side="right")) - 1
        return self.offset + i


def build_cdf_table(pmf, offset: int, min_mass: float = 1.0 - 1e-6) -> CdfTable:
    """Integerize a pmf to an exact total of 2^16 with every bucket >= 1.

    Uses 64-bit evaluation and largest-remainder rounding with
    index-ordered tie-breaks, so encoder and decoder always rebuild
    identical tables from identical parameters.
    """
    p = np.asarray(pmf, dtype=np.float64)
    n = p.size
    if n < 1:
        raise EntropyError("empty pmf")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise EntropyError("pmf must be finite and nonnegative")
    total = float(p.sum())
    if total < min_mass:
        raise EntropyError(f"support too narrow: pmf mass {total:.6g} < {min_mass:.6g}")
    if n > CDF_TOTAL:
        raise EntropyError(f"support of {n} symbols exceeds CDF precision")
    scaled = p / total * CDF_TOTAL
    freqs = np.maximum(np.floor(scaled), 1.0).astype(np.int64)
    rem = scaled - np.floor(scaled)
    diff = CDF_TOTAL - int(freqs.sum())
    if diff > 0:
        # hand out the shortfall to the largest remainders
        order = np.lexsort((np.arange(n), -rem))
        freqs[order[:diff]] += 1
    while diff < 0:
        candidates = np.flatnonzero(freqs > 1)
        order = candidates[np.lexsort((candidates, rem[candidates]))]
        take = order[: min(-diff, len(order))]
        freqs[take] -= 1
        diff += len(take)
    cdf = np.zeros(n + 1, dtype=np.uint32)
    cdf[1:] = np.cumsum(freqs)
    assert cdf[-1] == CDF_TOTAL
    return CdfTable(offset=int(offset), cdf=cdf)


def default_scale_table() -> np.ndarray:
    """64 log-spaced sigmas spanning [SIGMA_MIN, SIGMA_MAX]."""
    return np.exp(np.linspace(np.log(SIGMA_MIN), np.log(SIGMA_MAX),
                              SCALE_TABLE_SIZE))


def sigma_to_index(sigma: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Smallest table index with table[i] >= sigma (snap up, never down)."""
    idx = np.searchsorted(table, np.asarray(sigma, dtype=np.float64) - 1e-9)
    return np.clip(idx, 0, len(table) - 1).astype(np.int64)


def gaussian_cdf_tables(table: np.ndarray) -> list[CdfTable]:
    """Zero-mean Gaussian CDF tables, one per scale-table entry.

    Support radius covers one-sided tail mass below 1e-9, with a floor of
    32 so mean-shifted residuals keep headroom on poorly fit content.
    """
    tables = []
    for sigma in table:
        radius = max(32, int(np.ceil(6.2 * sigma)) + 2)
        s = np.arange(-radius, radius + 1, dtype=np.float64)
        p = _special.ndtr((s + 0.5) / sigma) - _special.ndtr((s - 0.5) / sigma)
        tables.append(build_cdf_table(p, offset=-radius))
    return tables


def factorized_cdf_tables(prior: FactorizedPrior, max_radius: int = 4096) -> list[CdfTable]:
    """Per-channel tables for a factorized prior, support grown until the
    tail mass per side drops below 1e-9."""
    tables = []
    with ag.no_grad():
        radius = 16
        while radius <= max_radius:
            edges = np.arange(-radius, radius + 1, dtype=np.float64) + 0.5
            grid = np.broadcast_to(edges, (prior.channels, edges.size)).copy()
            c = prior.cumulative(Tensor(grid.astype(np.float64))).data
            if np.all(c[:, 0] <= TAIL_MASS) and np.all(1.0 - c[:, -1] <= TAIL_MASS):
                break
            radius *= 2
        else:
            raise EntropyError("factorized prior support exceeds max radius")
        pmfs = np.diff(c, axis=1)
        # fold the sub-1e-9 tails into the edge buckets for exact mass
        pmfs[:, 0] += c[:, 0]
        pmfs[:, -1] += 1.0 - c[:, -1]
        for ch in range(prior.channels):
            tables.append(build_cdf_table(pmfs[ch], offset=-(radius - 1)))
    return tables
