"""Adam optimizer, global-norm clipping, and the finite-difference harness."""

from __future__ import annotations

import numpy as np

from .autograd import AutogradError, Tensor


class Adam:
    """Standard Adam with bias correction.

    State (first/second moments, step counter) lives here, one buffer
    pair per parameter, matched by name.
    """

    def __init__(self, named_params, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        self.params = dict(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise AutogradError(f"NaN/Inf gradient for parameter {name!r}")
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most `max_norm`."""
    total = 0.0
    tensors = [p for p in params if p.grad is not None]
    for p in tensors:
        total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in tensors:
            p.grad = p.grad * scale
    return norm


def backward_through(loss: Tensor, params) -> None:
    """Backward sweep that also zero-fills grads of unreachable parameters."""
    loss.backward()
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def gradient_check(fn, named_params, eps: float = 1e-4,
                   max_coords_per_param: int | None = None,
                   rng: np.random.Generator | None = None,
                   denom_floor: float = 1e-8) -> float:
    """Max relative error between analytic and central-difference gradients.

    `fn` must be a deterministic scalar-valued closure over the given
    parameters, and the parameters must be float64 (the whole check runs
    in 64-bit precision). Coordinates can be subsampled for expensive
    models via `max_coords_per_param`. `denom_floor` bounds the relative
    error's denominator from below; for deep graphs raise it to roughly
    the finite-difference noise floor (|loss| * 1e-12 / eps) so that
    coordinates with near-zero true derivative don't report pure
    rounding noise as error.
    """
    if not (1e-5 <= eps <= 1e-2):
        raise ValueError(f"eps {eps} outside [1e-5, 1e-2]")
    params = dict(named_params)
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise AutogradError(f"gradient_check requires float64 params ({name})")

    first = fn()
    second = fn()
    if first.data != second.data:
        raise AutogradError("fn is not deterministic: two evaluations differ")

    for p in params.values():
        p.grad = None
    loss = fn()
    backward_through(loss, params.values())
    analytic = {k: p.grad.copy() for k, p in params.items()}

    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n)
        if max_coords_per_param is not None and n > max_coords_per_param:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        a_flat = analytic[name].reshape(-1)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            hi = float(fn().data)
            flat[idx] = orig - eps
            lo = float(fn().data)
            flat[idx] = orig
            cd = (hi - lo) / (2.0 * eps)
            a = float(a_flat[idx])
            err = abs(a - cd) / max(abs(a), abs(cd), denom_floor)
            worst = max(worst, err)
    return worst
