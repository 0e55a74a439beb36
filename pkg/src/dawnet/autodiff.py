"""Tape-based reverse-mode autodiff over dense float64 arrays.

Small by design: only the ops the detector needs, each with a hand-written
backward closure. Graphs are built eagerly during the forward pass and
replayed in reverse topological order by :func:`backward`. The convolution
and wavelet inner loops dispatch to :mod:`dawnet.backend`.
"""

from contextlib import contextmanager

import numpy as np

from . import backend
from .errors import ConfigError, NumericalError, ShapeError

FINITE_CHECKS = True

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction (inference / finite differences)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array plus an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr):
    if FINITE_CHECKS and not np.all(np.isfinite(arr)):
        raise NumericalError("non-finite values produced by a forward op")


def _make(data, parents, backward_fn) -> Tensor:
    _check_finite(data)
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(t: Tensor, g):
    if not t.requires_grad:
        return
    if FINITE_CHECKS and not np.all(np.isfinite(g)):
        raise NumericalError("non-finite gradient")
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def backward(loss: Tensor):
    """Populate ``.grad`` on every reachable tensor with requires_grad."""
    if loss.data.ndim != 0:
        raise ShapeError("backward expects a scalar loss")
    order = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))
    loss.grad = np.array(1.0)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


class ParamRegistry:
    """Named parameter tensors with stable (insertion) iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def register(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name: {name}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def names(self):
        return list(self._params)

    def tensors(self):
        return list(self._params.values())

    def items(self):
        return list(self._params.items())

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub shape mismatch: {a.data.shape} vs {b.data.shape}")

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")

    def bw(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _make(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def bw(g):
        _accumulate(a, g * c)

    return _make(a.data * c, (a,), bw)


def mul_scalar(a: Tensor, s: Tensor) -> Tensor:
    """Multiply by a learnable 0-d tensor (the attention gate)."""
    a, s = as_tensor(a), as_tensor(s)
    if s.data.ndim != 0:
        raise ShapeError("mul_scalar expects a 0-d scalar tensor")

    def bw(g):
        _accumulate(a, g * s.data)
        _accumulate(s, np.sum(g * a.data))

    return _make(a.data * s.data, (a, s), bw)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Broadcast a per-channel bias over (B,C,L) or per-feature over (B,F)."""
    x, b = as_tensor(x), as_tensor(b)
    if b.data.ndim != 1:
        raise ShapeError("bias must be 1-d")
    if x.data.ndim == 3:
        if x.data.shape[1] != b.data.shape[0]:
            raise ShapeError("bias length must match channel count")
        view = b.data[None, :, None]
        axes = (0, 2)
    elif x.data.ndim == 2:
        if x.data.shape[1] != b.data.shape[0]:
            raise ShapeError("bias length must match feature count")
        view = b.data[None, :]
        axes = (0,)
    else:
        raise ShapeError("add_bias supports 2-d or 3-d inputs")

    def bw(g):
        _accumulate(x, g)
        _accumulate(b, g.sum(axis=axes))

    return _make(x.data + view, (x, b), bw)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0.0

    def bw(g):
        _accumulate(x, g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    in_shape = x.data.shape

    def bw(g):
        _accumulate(x, g.reshape(in_shape))

    return _make(x.data.reshape(shape), (x,), bw)


def swap_cl(x: Tensor) -> Tensor:
    """Transpose the channel and length axes of a (B,C,L) tensor."""
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ShapeError("swap_cl expects a rank-3 tensor")

    def bw(g):
        _accumulate(x, np.ascontiguousarray(g.swapaxes(1, 2)))

    return _make(np.ascontiguousarray(x.data.swapaxes(1, 2)), (x,), bw)


def concat(parts, axis=1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(idx)])

    return _make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; rank 2 or batched rank 3 on both sides."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != b.data.ndim or a.data.ndim not in (2, 3):
        raise ShapeError("matmul expects two rank-2 or two rank-3 tensors")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")

    def bw(g):
        _accumulate(a, g @ b.data.swapaxes(-1, -2))
        _accumulate(b, a.data.swapaxes(-1, -2) @ g)

    return _make(a.data @ b.data, (a, b), bw)


def softmax_rows(x: Tensor) -> Tensor:
    """Numerically-stable softmax over the last axis."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = np.sum(g * y, axis=-1, keepdims=True)
        _accumulate(x, y * (g - dot))

    return _make(y, (x,), bw)


def mse(a: Tensor, b) -> Tensor:
    """Mean of squared differences over all elements."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mse shape mismatch: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    n = diff.size

    def bw(g):
        common = (2.0 / n) * g * diff
        _accumulate(a, common)
        _accumulate(b, -common)

    return _make(np.mean(diff * diff), (a, b), bw)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """v / ||v||_2 over the last axis; rejects zero vectors."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise NumericalError("cannot L2-normalize a zero vector")
    return v / norm


# ---------------------------------------------------------------------------
# padding helpers
# ---------------------------------------------------------------------------

def _pad_last(x, pl, pr, mode):
    if pl == 0 and pr == 0:
        return x
    if mode == "reflect":
        lmax = x.shape[-1] - 1
        if pl > lmax or pr > lmax:
            raise ShapeError(
                f"reflect padding ({pl},{pr}) needs input length > {max(pl, pr)}")
        return np.pad(x, [(0, 0)] * (x.ndim - 1) + [(pl, pr)], mode="reflect")
    if mode == "zero":
        return np.pad(x, [(0, 0)] * (x.ndim - 1) + [(pl, pr)], mode="constant")
    raise ConfigError(f"unknown padding mode: {mode!r}")


def _unpad_fold(gxp, pl, pr, mode):
    """Adjoint of _pad_last: route padded-region gradients back to sources."""
    length = gxp.shape[-1] - pl - pr
    gx = np.ascontiguousarray(gxp[..., pl:pl + length])
    if mode == "reflect":
        if pl:
            gx[..., 1:1 + pl] += gxp[..., :pl][..., ::-1]
        if pr:
            gx[..., length - 1 - pr:length - 1] += gxp[..., -pr:][..., ::-1]
    return gx


# ---------------------------------------------------------------------------
# convolution ops
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b=None, stride=1, padding=0,
           pad_mode="zero") -> Tensor:
    """Cross-correlation of (B,Cin,L) with (Cout,Cin,K) kernels."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeError("conv1d expects (B,Cin,L) input and (Cout,Cin,K) weight")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError("conv1d channel mismatch")
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    k = w.data.shape[2]
    if k > x.data.shape[2] + 2 * padding:
        raise ShapeError("kernel longer than padded input")
    xp = np.ascontiguousarray(_pad_last(x.data, padding, padding, pad_mode))
    y = backend.conv1d_fw(xp, np.ascontiguousarray(w.data), stride)

    def bw(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            gxp = backend.conv1d_gx(g, w.data, stride, xp.shape[2])
            _accumulate(x, _unpad_fold(gxp, padding, padding, pad_mode))
        if w.requires_grad:
            _accumulate(w, backend.conv1d_gw(g, xp, stride, k))

    out = _make(y, (x, w), bw)
    if b is not None:
        out = _with_bias(out, as_tensor(b))
    return out


def _with_bias(y: Tensor, b: Tensor) -> Tensor:
    view = b.data[None, :, None] if y.data.ndim == 3 else b.data[None, :]
    axes = (0, 2) if y.data.ndim == 3 else (0,)

    def bw(g):
        _accumulate(y, g)
        _accumulate(b, g.sum(axis=axes))

    return _make(y.data + view, (y, b), bw)


def conv1d_transpose(x: Tensor, w: Tensor, b=None, stride=1) -> Tensor:
    """Adjoint of conv1d: (B,Cp,L) x (Cp,Cq,K) -> (B,Cq,(L-1)*stride+K)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeError("conv1d_transpose expects rank-3 input and weight")
    if x.data.shape[1] != w.data.shape[0]:
        raise ShapeError("conv1d_transpose channel mismatch")
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    k = w.data.shape[2]
    y = backend.tconv1d_fw(np.ascontiguousarray(x.data),
                           np.ascontiguousarray(w.data), stride)

    def bw(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            _accumulate(x, backend.tconv1d_gx(g, w.data, stride))
        if w.requires_grad:
            _accumulate(w, backend.tconv1d_gw(g, x.data, stride, k))

    out = _make(y, (x, w), bw)
    if b is not None:
        out = _with_bias(out, as_tensor(b))
    return out


def dwt(x: Tensor, kernels) -> Tensor:
    """Depthwise multi-scale correlation with reflection padding.

    (B,C,L) x (S,K) -> (B,C,S,L); each channel is filtered by every kernel
    row independently and the length is preserved.
    """
    x = as_tensor(x)
    kern = as_tensor(kernels)
    if x.data.ndim != 3:
        raise ShapeError("dwt expects a (B,C,L) tensor")
    if kern.data.ndim != 2:
        raise ShapeError("dwt kernels must be (S,K)")
    k = kern.data.shape[1]
    pl = k // 2
    pr = k - 1 - pl
    xp = np.ascontiguousarray(_pad_last(x.data, pl, pr, "reflect"))
    y = backend.dwt_fw(xp, np.ascontiguousarray(kern.data))

    def bw(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            gxp = backend.dwt_gx(g, kern.data, xp.shape[2])
            _accumulate(x, _unpad_fold(gxp, pl, pr, "reflect"))
        if kern.requires_grad:
            _accumulate(kern, backend.dwt_gk(g, xp))

    return _make(y, (x, kern), bw)


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def grad_check(f, params, eps=1e-5, samples_per_param=None, rng=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` is a zero-argument callable returning a scalar loss Tensor built
    from ``params``. With ``samples_per_param`` set, only a seeded random
    subset of each parameter's elements is probed (needed for model-sized
    checks; exhaustive otherwise).

    A central difference is meaningless when the stencil straddles a ReLU
    kink, which is common when a bias shifts every pre-activation in a
    channel at once. Mismatched samples are therefore cross-examined with
    two independent smoothness probes -- a second-difference spike at the
    base point and the disagreement between the eps and eps/2 stencils --
    and dropped when either probe accounts for the discrepancy. A wrong
    analytic gradient at a smooth point passes both probes (the numeric
    estimates agree with each other, not with the analytic value) and still
    fails the check.
    """
    eps = float(eps)
    if not (1e-6 <= eps <= 1e-3):
        raise ConfigError("eps must lie in [1e-6, 1e-3]")
    params = list(params)
    for p in params:
        p.grad = None
    loss = f()
    backward(loss)
    f0 = float(loss.data)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if samples_per_param is not None and samples_per_param < n:
            idxs = rng.choice(n, size=samples_per_param, replace=False)
        else:
            idxs = range(n)
        def probe(j, h):
            orig = flat[j]
            flat[j] = orig + h
            with no_grad():
                fp = float(f().data)
            flat[j] = orig - h
            with no_grad():
                fm = float(f().data)
            flat[j] = orig
            return fp, fm

        for j in idxs:
            fp, fm = probe(j, eps)
            numeric = (fp - fm) / (2.0 * eps)
            a = ga.reshape(-1)[j]
            if not np.isfinite(numeric) or not np.isfinite(a):
                raise NumericalError("non-finite value in gradient check")
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-5)
            if rel > 1e-4:
                gap = abs(a - numeric)
                kink = abs(fp + fm - 2.0 * f0) / (2.0 * eps)
                fp2, fm2 = probe(j, 0.5 * eps)
                numeric2 = (fp2 - fm2) / eps
                stencil = abs(numeric - numeric2)
                if kink >= 0.5 * gap or stencil >= 0.25 * gap:
                    continue
            worst = max(worst, rel)
    return worst
