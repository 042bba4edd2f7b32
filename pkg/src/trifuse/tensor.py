"""Dense tensors with reverse-mode automatic differentiation.

Rank 0-3 tensors wrap contiguous numpy buffers; differentiable ops are
module-level functions that record onto the thread-local active
``Tape``. Gradients land in ``Tensor.grad`` after ``backward`` and
accumulate (sum) across multiple uses of a tensor inside one graph.

Policy decisions enforced here:

* precision is a process-global switch (float64 default; float32 for
  faster training) — see ``set_default_dtype``;
* every forward op validates that its output is finite and raises
  ``NonFiniteError`` instead of letting NaN/Inf propagate;
* a tape supports exactly one backward pass.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from . import backend

__all__ = [
    "Tensor", "Tape", "backward", "grad_check",
    "ShapeError", "NonFiniteError", "TapeError", "DegenerateInputError",
    "set_default_dtype", "get_default_dtype",
    "matmul", "transpose_last2", "add", "sub", "scale", "scalar_mul",
    "hadamard", "relu", "gelu", "mean", "tsum", "softmax_rows",
    "layer_norm", "add_const", "mul_const", "concat_last", "dropout",
    "embedding_lookup", "masked_mean_pool", "pick", "nll_from_probs",
]


class ShapeError(ValueError):
    """Operand shapes are inconsistent for the requested op."""


class NonFiniteError(ArithmeticError):
    """A forward op produced NaN/Inf (overflow is an error, not a value)."""


class TapeError(RuntimeError):
    """Tape misuse: repeated backward, non-scalar loss, nested conflicts."""


class DegenerateInputError(ValueError):
    """An input is structurally empty, e.g. a fully masked sequence."""


_DEFAULT_DTYPE = np.dtype(np.float64)


def set_default_dtype(dtype) -> None:
    """Select the global precision (float64 or float32) for new tensors."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ValueError(f"unsupported dtype {dtype!r}; use float64 or float32")
    _DEFAULT_DTYPE = dt


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """Dense row-major real array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=_DEFAULT_DTYPE)
        if arr.ndim > 3:
            raise ShapeError(f"rank {arr.ndim} exceeds the supported maximum of 3")
        if any(n <= 0 for n in arr.shape):
            raise ShapeError(f"extents must be positive, got {arr.shape}")
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Sugar for the common compositions; all routed through the op functions.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _result(arr: np.ndarray, requires_grad: bool) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.requires_grad = requires_grad
    t.grad = None
    return t


class _TapeEntry:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


_tls = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_tls, "tape", None)


class Tape:
    """Ordered record of differentiable ops; one backward pass allowed."""

    def __init__(self):
        self._entries: list[_TapeEntry] = []
        self._consumed = False
        self._outer: "Tape | None" = None

    def __enter__(self) -> "Tape":
        self._outer = _active_tape()
        _tls.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _tls.tape = self._outer
        self._outer = None
        return False

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, out: Tensor, inputs: Sequence[Tensor],
               backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> None:
        self._entries.append(_TapeEntry(out, tuple(inputs), backward_fn))

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from loss."""
    if tape._consumed:
        raise TapeError("tape already consumed by a previous backward pass")
    if loss.data.size != 1:
        raise TapeError(f"loss must be scalar, got shape {loss.shape}")
    tape._consumed = True
    loss.grad = np.ones_like(loss.data)
    for entry in reversed(tape._entries):
        dout = entry.out.grad
        if dout is None:
            continue  # not on any path to the loss
        grads = entry.backward_fn(dout)
        for inp, g in zip(entry.inputs, grads):
            if g is None or not inp.requires_grad:
                continue
            if inp.grad is None:
                inp.grad = np.zeros_like(inp.data)
            inp.grad += g


def _record(out_arr: np.ndarray, inputs: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    _check_finite(out_arr, op)
    tape = _active_tape()
    requires = tape is not None and any(t.requires_grad for t in inputs)
    out = _result(out_arr, requires)
    if requires:
        tape.record(out, inputs, backward_fn)
    return out


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: [m,k]@[k,n], [k]@[k,n], [B,m,k]@[k,n], [B,m,k]@[B,k,n]."""
    sa, sb = a.shape, b.shape
    ok = (
        (len(sa) == 2 and len(sb) == 2 and sa[1] == sb[0])
        or (len(sa) == 1 and len(sb) == 2 and sa[0] == sb[0])
        or (len(sa) == 3 and len(sb) == 2 and sa[2] == sb[0])
        or (len(sa) == 3 and len(sb) == 3 and sa[0] == sb[0] and sa[2] == sb[1])
    )
    if not ok:
        raise ShapeError(f"matmul shapes incompatible: {sa} @ {sb}")
    out = np.matmul(a.data, b.data)

    def back(dout):
        da = db = None
        if a.requires_grad:
            da = np.matmul(dout, np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            if len(sa) == 1:
                db = np.outer(a.data, dout)
            elif len(sa) == 3 and len(sb) == 2:
                k, n = sb
                db = a.data.reshape(-1, k).T @ dout.reshape(-1, n)
            else:
                db = np.matmul(np.swapaxes(a.data, -1, -2), dout)
        return da, db

    return _record(out, (a, b), back, "matmul")


def transpose_last2(x: Tensor) -> Tensor:
    if len(x.shape) < 2:
        raise ShapeError(f"transpose_last2 needs rank >= 2, got {x.shape}")
    out = np.swapaxes(x.data, -1, -2)

    def back(dout):
        return (np.swapaxes(dout, -1, -2),)

    return _record(out, (x,), back, "transpose_last2")


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    # Limited trailing-axis broadcast: bias [d] or table [S,d] onto [..,S,d].
    if len(b.shape) < len(a.shape) and a.shape[len(a.shape) - len(b.shape):] == b.shape:
        return
    raise ShapeError(f"{op} shapes incompatible: {a.shape} vs {b.shape}")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(range(grad.ndim - len(shape)))
    return grad.sum(axis=axes)


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "add")
    out = a.data + b.data

    def back(dout):
        return dout, _reduce_to(dout, b.shape)

    return _record(out, (a, b), back, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "sub")
    out = a.data - b.data

    def back(dout):
        return dout, -_reduce_to(dout, b.shape)

    return _record(out, (a, b), back, "sub")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = x.data * c

    def back(dout):
        return (dout * c,)

    return _record(out, (x,), back, "scale")


def scalar_mul(x: Tensor, s: Tensor) -> Tensor:
    """Multiply by a scalar tensor; differentiable in both arguments."""
    if s.size != 1:
        raise ShapeError(f"scalar_mul needs a scalar second arg, got {s.shape}")
    sval = s.data.reshape(())
    out = x.data * sval

    def back(dout):
        dx = dout * sval if x.requires_grad else None
        ds = (dout * x.data).sum().reshape(s.shape) if s.requires_grad else None
        return dx, ds

    return _record(out, (x, s), back, "scalar_mul")


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shapes incompatible: {a.shape} vs {b.shape}")
    out = a.data * b.data

    def back(dout):
        return dout * b.data, dout * a.data

    return _record(out, (a, b), back, "hadamard")


def relu(x: Tensor) -> Tensor:
    flat = x.data.reshape(-1)
    out = backend.active.relu_fwd(flat).reshape(x.shape)

    def back(dout):
        return (backend.active.relu_bwd(flat, np.ascontiguousarray(dout.reshape(-1))).reshape(x.shape),)

    return _record(out, (x,), back, "relu")


def gelu(x: Tensor) -> Tensor:
    flat = x.data.reshape(-1)
    out = backend.active.gelu_fwd(flat).reshape(x.shape)

    def back(dout):
        return (backend.active.gelu_bwd(flat, np.ascontiguousarray(dout.reshape(-1))).reshape(x.shape),)

    return _record(out, (x,), back, "gelu")


def mean(x: Tensor) -> Tensor:
    out = np.asarray(x.data.mean())
    n = x.size

    def back(dout):
        return (np.full(x.shape, float(dout) / n, dtype=x.data.dtype),)

    return _record(out, (x,), back, "mean")


def tsum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def back(dout):
        return (np.full(x.shape, float(dout), dtype=x.data.dtype),)

    return _record(out, (x,), back, "tsum")


def softmax_rows(x: Tensor) -> Tensor:
    """Row softmax over the last axis, max-subtracted for stability."""
    n = x.shape[-1]
    x2d = x.data.reshape(-1, n)
    y2d = backend.active.softmax_fwd(x2d)
    out = y2d.reshape(x.shape)

    def back(dout):
        d2 = np.ascontiguousarray(dout.reshape(-1, n))
        return (backend.active.softmax_bwd(y2d, d2).reshape(x.shape),)

    return _record(out, (x,), back, "softmax_rows")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm gain/bias must be ({d},), got {gain.shape} and {bias.shape}")
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    x2d = x.data.reshape(-1, d)
    y2d, xhat, inv_std = backend.active.layer_norm_fwd(x2d, gain.data, bias.data, float(eps))
    out = y2d.reshape(x.shape)

    def back(dout):
        d2 = np.ascontiguousarray(dout.reshape(-1, d))
        dx2, dgain, dbias = backend.active.layer_norm_bwd(d2, xhat, inv_std, gain.data)
        dx = dx2.reshape(x.shape) if x.requires_grad else None
        return dx, dgain if gain.requires_grad else None, dbias if bias.requires_grad else None

    return _record(out, (x, gain, bias), back, "layer_norm")


def add_const(x: Tensor, const: np.ndarray) -> Tensor:
    """Add a non-differentiable broadcastable constant (masks, positions)."""
    out = x.data + const
    if out.shape != x.shape:
        raise ShapeError(f"add_const must preserve shape: {x.shape} + {const.shape}")

    def back(dout):
        return (dout,)

    return _record(out, (x,), back, "add_const")


def mul_const(x: Tensor, const: np.ndarray) -> Tensor:
    """Multiply by a non-differentiable broadcastable constant."""
    out = x.data * const
    if out.shape != x.shape:
        raise ShapeError(f"mul_const must preserve shape: {x.shape} * {const.shape}")

    def back(dout):
        return (dout * const,)

    return _record(out, (x,), back, "mul_const")


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_last needs at least one tensor")
    lead = parts[0].shape[:-1]
    if any(p.shape[:-1] != lead for p in parts):
        raise ShapeError(f"concat_last leading shapes differ: {[p.shape for p in parts]}")
    widths = [p.shape[-1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=-1)

    def back(dout):
        grads, off = [], 0
        for w in widths:
            grads.append(dout[..., off:off + w])
            off += w
        return grads

    return _record(out, tuple(parts), back, "concat_last")


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity (and no RNG draw) when off or p == 0."""
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype)
    keep /= (1.0 - p)
    out = x.data * keep

    def back(dout):
        return (dout * keep,)

    return _record(out, (x,), back, "dropout")


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    if ids.min() < 0 or ids.max() >= table.shape[0]:
        raise IndexError(
            f"token id out of range: ids span [{ids.min()}, {ids.max()}], "
            f"table has {table.shape[0]} rows")
    out = table.data[ids]

    def back(dout):
        dt = np.zeros_like(table.data)
        np.add.at(dt, ids.reshape(-1), dout.reshape(-1, table.shape[1]))
        return (dt,)

    return _record(out, (table,), back, "embedding_lookup")


def masked_mean_pool(h: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over valid (mask-true) positions; [B,S,d] -> [B,d] or [S,d] -> [d]."""
    squeeze = len(h.shape) == 2
    h3 = h.data[None] if squeeze else h.data
    m2 = np.asarray(mask, dtype=bool).reshape(h3.shape[0], h3.shape[1])
    counts = m2.sum(axis=1)
    if (counts == 0).any():
        raise DegenerateInputError("masked_mean_pool: a sequence has no valid positions")
    maskf = m2.astype(h3.dtype)
    countsf = counts.astype(h3.dtype)
    out2 = backend.active.masked_pool_fwd(np.ascontiguousarray(h3), maskf, countsf)
    out = out2[0] if squeeze else out2

    def back(dout):
        d2 = np.ascontiguousarray(dout.reshape(out2.shape))
        dh = backend.active.masked_pool_bwd(d2, maskf, countsf)
        return (dh[0] if squeeze else dh,)

    return _record(out, (h,), back, "masked_mean_pool")


def pick(x: Tensor, index: int) -> Tensor:
    if len(x.shape) != 1:
        raise ShapeError(f"pick needs a rank-1 tensor, got {x.shape}")
    out = np.asarray(x.data[index])

    def back(dout):
        g = np.zeros_like(x.data)
        g[index] = float(dout)
        return (g,)

    return _record(out, (x,), back, "pick")


_LOG_FLOOR = 1e-12


def nll_from_probs(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Per-sample -log(p[label] + eps_floor); [B,C] -> [B] (or [C] -> scalar)."""
    squeeze = len(probs.shape) == 1
    p2 = probs.data[None] if squeeze else probs.data
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, c = p2.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise IndexError(f"label out of range [0, {c})")
    picked = p2[np.arange(n), labels]
    out_full = -np.log(picked + _LOG_FLOOR)
    out = np.asarray(out_full[0]) if squeeze else out_full

    def back(dout):
        d1 = np.atleast_1d(np.asarray(dout))
        dp = np.zeros_like(p2)
        dp[np.arange(n), labels] = -d1 / (picked + _LOG_FLOOR)
        return (dp[0] if squeeze else dp,)

    return _record(out, (probs,), back, "nll_from_probs")


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(loss_fn: Callable[[], Tensor],
               params: Iterable[tuple[str, Tensor]],
               eps: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference grads.

    ``loss_fn`` must be deterministic and close over ``params``; run this
    at float64 only. Relative error per coordinate is
    |a - n| / max(1, |a|, |n|).
    """
    params = list(params)
    for _, p in params:
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params
    }
    worst = 0.0
    for name, p in params:
        flat_analytic = analytic[name].reshape(-1)
        for i in range(p.size):
            orig = p.data.flat[i]
            p.data.flat[i] = orig + eps
            lp = loss_fn().item()
            p.data.flat[i] = orig - eps
            lm = loss_fn().item()
            p.data.flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            a = flat_analytic[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst:
                worst = err
    return worst
