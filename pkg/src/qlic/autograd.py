"""Minimal reverse-mode autodiff over numpy arrays.

The engine supports exactly the operation set needed by the codec:
elementwise arithmetic, matmul, reshape/transpose/concat/slice/pad,
reductions, conv2d (grouped, strided), transposed conv2d, and the
nonlinearities used by the transforms and entropy models.

All forward results are checked for NaN/Inf (disable via
`set_finite_checks(False)` for hot loops at your own risk).  Reductions
use numpy's sequential order, so repeated runs in one process are
bitwise reproducible.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _special

_FINITE_CHECKS = True
_GRAD_ENABLED = True


def set_finite_checks(enabled: bool) -> bool:
    """Toggle the per-op NaN/Inf guard; returns the previous setting."""
    global _FINITE_CHECKS
    prev = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return prev


class no_grad:
    """Context manager: ops executed inside build no graph."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class AutogradError(ValueError):
    pass


def _as_array(value, dtype=None):
    arr = np.asarray(value)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (the inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense array with an optional gradient slot.

    `data` is float32 by default; float64 is used by the finite-difference
    harness.  `grad`, when populated, always matches `data` in shape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = ()
        self.name = name

    # -- plumbing ----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad: np.ndarray):
        grad = grad.astype(self.data.dtype, copy=False)
        if self.grad is None:
            self.grad = grad.copy() if grad.base is not None or not grad.flags.owndata else grad
        else:
            self.grad = self.grad + grad

    # -- graph construction ------------------------------------------------

    def backward(self):
        """Reverse-mode sweep from a scalar loss.

        Visits each reachable node exactly once in reverse topological
        order.  Tensors not reachable from `self` keep grad=None; callers
        that need explicit zeros handle that themselves (see
        `qlic.optim.backward_through`).
        """
        if self.data.size != 1:
            raise AutogradError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node is not self and node._prev:
                # interior activation grads are not needed after use
                if not node.requires_grad:
                    node.grad = None

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __rtruediv__(self, other):
        return mul(power(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else None
    return Tensor(_as_array(value, dtype))


def _make(data: np.ndarray, parents, backward) -> Tensor:
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        names = ", ".join(p.name or "<unnamed>" for p in parents)
        raise AutogradError(f"non-finite values produced (inputs: {names})")
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad or p._prev for p in parents):
        out._prev = tuple(parents)
        out._backward = backward
        # mark as gradient-carrying interior node
        out.requires_grad = False
    return out


# -- elementwise ops -------------------------------------------------------


def add(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def bwd(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), bwd)


def mul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def bwd(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), bwd)


def power(a, exponent: float):
    a = as_tensor(a)
    e = float(exponent)

    def bwd(g):
        a._accumulate(g * e * np.power(a.data, e - 1.0))

    return _make(np.power(a.data, e), (a,), bwd)


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def bwd(g):
        a._accumulate(g * out_data)

    return _make(out_data, (a,), bwd)


def log(a):
    a = as_tensor(a)

    def bwd(g):
        a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), bwd)


def sqrt(a):
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def bwd(g):
        a._accumulate(g * 0.5 / out_data)

    return _make(out_data, (a,), bwd)


def tanh(a):
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def bwd(g):
        a._accumulate(g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), bwd)


def sigmoid(a):
    a = as_tensor(a)
    out_data = _special.expit(a.data)

    def bwd(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), bwd)


def softplus(a):
    a = as_tensor(a)
    out_data = np.logaddexp(0.0, a.data).astype(a.data.dtype)

    def bwd(g):
        a._accumulate(g * _special.expit(a.data))

    return _make(out_data, (a,), bwd)


def erf(a):
    a = as_tensor(a)
    two_over_sqrt_pi = 2.0 / np.sqrt(np.pi)

    def bwd(g):
        a._accumulate(g * two_over_sqrt_pi * np.exp(-a.data * a.data))

    return _make(_special.erf(a.data).astype(a.data.dtype), (a,), bwd)


def std_normal_cdf(a):
    """Phi(x) with gradient phi(x)."""
    a = as_tensor(a)
    inv_sqrt_2pi = 1.0 / np.sqrt(2.0 * np.pi)

    def bwd(g):
        a._accumulate(g * inv_sqrt_2pi * np.exp(-0.5 * a.data * a.data))

    return _make(_special.ndtr(a.data).astype(a.data.dtype), (a,), bwd)


def clamp(a, lo: float, hi: float):
    """Clip with pass-through gradient strictly inside [lo, hi]."""
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        a._accumulate(g * mask)

    return _make(np.clip(a.data, lo, hi), (a,), bwd)


def maximum(a, value: float):
    a = as_tensor(a)
    mask = a.data >= value

    def bwd(g):
        a._accumulate(g * mask)

    return _make(np.maximum(a.data, value), (a,), bwd)


def leaky_relu(a, slope: float = 0.01):
    a = as_tensor(a)
    mask = a.data >= 0.0

    def bwd(g):
        a._accumulate(g * np.where(mask, 1.0, slope))

    return _make(np.where(mask, a.data, slope * a.data), (a,), bwd)


def gelu(a):
    """tanh-approximation GELU (the variant used in transformer MLPs)."""
    a = as_tensor(a)
    c = np.sqrt(2.0 / np.pi)
    x = a.data
    inner = c * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def bwd(g):
        dinner = c * (1.0 + 3 * 0.044715 * x * x)
        da = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        a._accumulate(g * da.astype(x.dtype))

    return _make(out_data.astype(x.dtype), (a,), bwd)


def round_ste(a):
    """Round to nearest (half away from zero) with identity gradient."""
    a = as_tensor(a)

    def bwd(g):
        a._accumulate(g)

    return _make(round_half_away(a.data), (a,), bwd)


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Deterministic round with .5 ties away from zero (not banker's)."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


# -- shape ops -------------------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    old_shape = a.data.shape

    def bwd(g):
        a._accumulate(g.reshape(old_shape))

    return _make(a.data.reshape(shape), (a,), bwd)


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        a._accumulate(np.transpose(g, inverse))

    return _make(np.ascontiguousarray(np.transpose(a.data, axes)), (a,), bwd)


def take(a, index):
    a = as_tensor(a)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[index] = g
        a._accumulate(full)

    return _make(np.ascontiguousarray(a.data[index]), (a,), bwd)


def concat(tensors, axis: int):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t._accumulate(np.ascontiguousarray(g[tuple(sl)]))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def pad2d(a, pad: int, mode: str = "zero"):
    """Pad the H and W axes of an NHWC tensor."""
    a = as_tensor(a)
    if pad == 0:
        return a
    widths = ((0, 0), (pad, pad), (pad, pad), (0, 0))
    np_mode = {"zero": "constant", "replicate": "edge"}[mode]
    out_data = np.pad(a.data, widths, mode=np_mode)

    def bwd(g):
        if mode == "zero":
            a._accumulate(g[:, pad:-pad, pad:-pad, :])
        else:
            # fold replicated border gradients back onto the edge cells
            n, h, w, c = a.data.shape
            idx_h = np.clip(np.arange(h + 2 * pad) - pad, 0, h - 1)
            idx_w = np.clip(np.arange(w + 2 * pad) - pad, 0, w - 1)
            rows = np.zeros((n, h, w + 2 * pad, c), dtype=g.dtype)
            np.add.at(rows, (slice(None), idx_h), g)
            core = np.zeros_like(a.data)
            np.add.at(core, (slice(None), slice(None), idx_w), rows)
            a._accumulate(core)

    return _make(out_data, (a,), bwd)


def broadcast_to(a, shape):
    a = as_tensor(a)
    in_shape = a.data.shape

    def bwd(g):
        a._accumulate(_unbroadcast(g, in_shape))

    return _make(np.broadcast_to(a.data, shape).copy(), (a,), bwd)


def reduce_sum(a, axis=None, keepdims: bool = False):
    a = as_tensor(a)
    in_shape = a.data.shape

    def bwd(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g.reshape(()) if g.ndim else g, in_shape).copy())
            return
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, axes)
        a._accumulate(np.broadcast_to(g, in_shape).copy())

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), bwd)


def reduce_mean(a, axis=None, keepdims: bool = False):
    if axis is None:
        n = a.data.size if isinstance(a, Tensor) else np.asarray(a).size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        shape = a.data.shape if isinstance(a, Tensor) else np.asarray(a).shape
        n = int(np.prod([shape[ax] for ax in axes]))
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b)

    def bwd(g):
        if b.data.ndim == 1:
            ga = np.expand_dims(g, -1) * b.data
        else:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if a.data.ndim == 1:
            gb = np.expand_dims(a.data, -1) * np.expand_dims(g, -2)
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        a._accumulate(_unbroadcast(ga, a.data.shape))
        b._accumulate(_unbroadcast(gb, b.data.shape))

    return _make(np.matmul(a.data, b.data), (a, b), bwd)


def softmax(a, axis: int = -1):
    """Numerically stable softmax (max-subtracted)."""
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / np.sum(e, axis=axis, keepdims=True)

    def bwd(g):
        dot = np.sum(g * out_data, axis=axis, keepdims=True)
        a._accumulate(out_data * (g - dot))

    return _make(out_data, (a,), bwd)


def layer_norm(a, gain, bias, eps: float = 1e-5):
    """Normalize over the last axis, then apply the affine pair."""
    a = as_tensor(a)
    gain = as_tensor(gain, like=a)
    bias = as_tensor(bias, like=a)
    if a.data.shape[-1] == 0:
        raise AutogradError("layer_norm over a zero-length axis")
    if gain.data.shape != (a.data.shape[-1],) or bias.data.shape != (a.data.shape[-1],):
        raise AutogradError(
            f"layer_norm affine shapes {gain.data.shape}/{bias.data.shape} "
            f"do not match last extent {a.data.shape[-1]}"
        )
    mu = np.mean(a.data, axis=-1, keepdims=True)
    xc = a.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    norm = xc * inv
    out_data = norm * gain.data + bias.data

    def bwd(g):
        n = a.data.shape[-1]
        gnorm = g * gain.data
        gvar = np.sum(gnorm * xc, axis=-1, keepdims=True) * (-0.5) * inv**3
        gmu = -np.sum(gnorm * inv, axis=-1, keepdims=True) - 2.0 * gvar * np.mean(
            xc, axis=-1, keepdims=True
        )
        ga = gnorm * inv + gvar * 2.0 * xc / n + gmu / n
        a._accumulate(ga.astype(a.data.dtype))
        gain._accumulate(
            np.sum(g * norm, axis=tuple(range(g.ndim - 1))).astype(gain.data.dtype)
        )
        bias._accumulate(np.sum(g, axis=tuple(range(g.ndim - 1))).astype(bias.data.dtype))

    return _make(out_data.astype(a.data.dtype), (a, gain, bias), bwd)


# -- convolutions ----------------------------------------------------------


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0,
           groups: int = 1, pad_mode: str = "zero"):
    """NHWC convolution; weight is (kh, kw, cin_per_group, cout).

    Output spatial extent is floor((in + 2*padding - k)/stride) + 1.
    """
    x = as_tensor(x)
    weight = as_tensor(weight, like=x)
    if stride < 1:
        raise AutogradError(f"conv2d stride must be >= 1, got {stride}")
    kh, kw, cin_pg, cout = weight.data.shape
    cin = x.data.shape[3]
    if cin != cin_pg * groups:
        raise AutogradError(
            f"conv2d channel mismatch: input has {cin} channels but weight "
            f"expects {cin_pg}*{groups} (cin_per_group*groups)"
        )
    if cout % groups != 0:
        raise AutogradError(f"conv2d cout={cout} not divisible by groups={groups}")
    xp = pad2d(x, padding, mode=pad_mode)
    n, hp, wp, _ = xp.data.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise AutogradError(
            f"conv2d kernel {kh}x{kw} larger than padded input {hp}x{wp}"
        )
    cout_pg = cout // groups
    # weight's last axis holds output channels grouped contiguously:
    # group g produces channels [g*cout_pg, (g+1)*cout_pg)
    wmat = weight.data.reshape(kh, kw, cin_pg, groups, cout_pg)
    acc = np.zeros((n, ho, wo, groups, cout_pg), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            xs = xp.data[:, i : i + ho * stride : stride, j : j + wo * stride : stride, :]
            xs = xs.reshape(n, ho, wo, groups, cin_pg)
            acc += np.einsum("nhwgc,cgo->nhwgo", xs, wmat[i, j], optimize=True)
    out_data = acc.reshape(n, ho, wo, cout)

    def bwd(g):
        gacc = g.reshape(n, ho, wo, groups, cout_pg)
        gx = np.zeros_like(xp.data)
        gw = np.zeros((kh, kw, cin_pg, groups, cout_pg), dtype=weight.data.dtype)
        for i in range(kh):
            for j in range(kw):
                xs = xp.data[:, i : i + ho * stride : stride, j : j + wo * stride : stride, :]
                xs = xs.reshape(n, ho, wo, groups, cin_pg)
                gw[i, j] = np.einsum("nhwgc,nhwgo->cgo", xs, gacc, optimize=True)
                gxs = np.einsum("nhwgo,cgo->nhwgc", gacc, wmat[i, j], optimize=True)
                gx[:, i : i + ho * stride : stride, j : j + wo * stride : stride, :] += (
                    gxs.reshape(n, ho, wo, cin)
                )
        weight._accumulate(gw.reshape(weight.data.shape))
        xp._accumulate(gx)

    out = _make(out_data, (xp, weight), bwd)
    if bias is not None:
        out = add(out, bias)
    return out


def conv_transpose2d(x, weight, bias=None, stride: int = 2, padding: int = 2,
                     output_padding: int = 1):
    """NHWC transposed convolution; weight is (kh, kw, cin, cout).

    Output extent = (in - 1)*stride + k - 2*padding + output_padding.
    """
    x = as_tensor(x)
    weight = as_tensor(weight, like=x)
    kh, kw, cin, cout = weight.data.shape
    n, h, w, cx = x.data.shape
    if cx != cin:
        raise AutogradError(f"conv_transpose2d expects {cin} input channels, got {cx}")
    hf = (h - 1) * stride + kh
    wf = (w - 1) * stride + kw
    ho = hf - 2 * padding + output_padding
    wo = wf - 2 * padding + output_padding
    full = np.zeros((n, hf + output_padding, wf + output_padding, cout), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            full[:, i : i + h * stride : stride, j : j + w * stride : stride, :] += np.einsum(
                "nhwc,co->nhwo", x.data, weight.data[i, j], optimize=True
            )
    out_data = full[:, padding : padding + ho, padding : padding + wo, :]

    def bwd(g):
        gfull = np.zeros_like(full)
        gfull[:, padding : padding + ho, padding : padding + wo, :] = g
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(weight.data)
        for i in range(kh):
            for j in range(kw):
                gs = gfull[:, i : i + h * stride : stride, j : j + w * stride : stride, :]
                gx += np.einsum("nhwo,co->nhwc", gs, weight.data[i, j], optimize=True)
                gw[i, j] = np.einsum("nhwc,nhwo->co", x.data, gs, optimize=True)
        x._accumulate(gx)
        weight._accumulate(gw)

    out = _make(np.ascontiguousarray(out_data), (x, weight), bwd)
    if bias is not None:
        out = add(out, bias)
    return out


# -- pixel reshuffles ------------------------------------------------------


def depth_to_space(a, factor: int):
    """NHWC channel-to-spatial rearrangement; exact inverse of space_to_depth."""
    a = as_tensor(a)
    n, h, w, c = a.data.shape
    if factor < 1:
        raise AutogradError("reshuffle factor must be >= 1")
    if c % (factor * factor) != 0:
        raise AutogradError(
            f"depth_to_space needs channels ({c}) divisible by factor^2 ({factor * factor})"
        )
    co = c // (factor * factor)
    t = reshape(a, (n, h, w, factor, factor, co))
    t = transpose(t, (0, 1, 3, 2, 4, 5))
    return reshape(t, (n, h * factor, w * factor, co))


def space_to_depth(a, factor: int):
    a = as_tensor(a)
    n, h, w, c = a.data.shape
    if factor < 1:
        raise AutogradError("reshuffle factor must be >= 1")
    if h % factor != 0 or w % factor != 0:
        raise AutogradError(
            f"space_to_depth needs H,W ({h},{w}) divisible by factor {factor}"
        )
    t = reshape(a, (n, h // factor, factor, w // factor, factor, c))
    t = transpose(t, (0, 1, 3, 2, 4, 5))
    return reshape(t, (n, h // factor, w // factor, factor * factor * c))
