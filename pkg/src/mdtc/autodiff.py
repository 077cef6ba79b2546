"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

A Tensor wraps a row-major numpy array. Operations executed while a Tape
is active record backward closures on it; ``backward`` replays the tape in
reverse recording order. Only leaf tensors (those not produced by a taped
op) accumulate gradients persistently across backward calls; intermediate
gradients are reset at the start of each replay.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError, UsageError

LOG_FLOOR = 1e-12

_TAPE_STACK: list["Tape | None"] = []


class Tensor:
    """Dense float64 array with optional gradient-tape participation."""

    __slots__ = ("data", "requires_grad", "grad", "_is_leaf")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._is_leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def detach(self) -> "Tensor":
        """A view of the same values, cut off from any tape."""
        return Tensor(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Small operator surface used by the loss/model code.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Tape:
    """Ordered record of operations for one backward replay.

    Not thread-safe: a tape is owned by the run that created it.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def _record(self, out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        out._is_leaf = False
        self._nodes.append((out, backward_fn))

    def __len__(self) -> int:
        return len(self._nodes)


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class _TapeSuppressor:
    def __enter__(self) -> None:
        _TAPE_STACK.append(None)

    def __exit__(self, exc_type, exc, tb) -> None:
        _TAPE_STACK.pop()


def no_tape() -> _TapeSuppressor:
    """Context inside which ops are never recorded (detached forwards)."""
    return _TapeSuppressor()


def _record_op(out: Tensor, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._record(out, backward_fn)
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Populate grads of every requires_grad ancestor of ``loss``.

    Leaf gradients accumulate additively across calls; intermediate
    gradients are recomputed per call.
    """
    tape = tape or active_tape()
    if tape is None:
        raise UsageError("backward() requires an active or explicit tape")
    if loss.data.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    for out, _ in tape._nodes:
        out.grad = None
    loss.grad = np.ones_like(loss.data)
    for out, backward_fn in reversed(tape._nodes):
        if out.grad is not None:
            backward_fn(out.grad)


# ---------------------------------------------------------------------------
# Operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _record_op(out, (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; ``b`` may be a 1-D bias broadcast over rows of ``a``."""
    bias = a.data.ndim == 2 and b.data.ndim == 1
    if not bias and a.shape != b.shape:
        raise ShapeError(f"add shapes incompatible: {a.shape} + {b.shape}")
    if bias and a.shape[1] != b.shape[0]:
        raise ShapeError(f"add bias width mismatch: {a.shape} + {b.shape}")
    out = Tensor(a.data + b.data)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, g.sum(axis=0) if bias else g)

    return _record_op(out, (a, b), backward_fn)


def neg(x: Tensor) -> Tensor:
    out = Tensor(-x.data)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(x, -g)

    return _record_op(out, (x,), backward_fn)


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(x, g * c)

    return _record_op(out, (x,), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes incompatible: {a.shape} * {b.shape}")
    out = Tensor(a.data * b.data)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _record_op(out, (a, b), backward_fn)


def relu(x: Tensor) -> Tensor:
    # Gradient at exactly 0 is defined as 0.
    out = Tensor(np.maximum(x.data, 0.0))

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(x, g * (x.data > 0.0))

    return _record_op(out, (x,), backward_fn)


def exp(x: Tensor) -> Tensor:
    out = Tensor(np.exp(x.data))

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(x, g * out.data)

    return _record_op(out, (x,), backward_fn)


def clamped_log(x: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """log(max(x, floor)); gradient is 1/x above the floor, 0 at or below it."""
    out = Tensor(np.log(np.maximum(x.data, floor)))

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(x, np.where(x.data > floor, g / np.maximum(x.data, floor), 0.0))

    return _record_op(out, (x,), backward_fn)


def log_softmax(x: Tensor) -> Tensor:
    """Rowwise log-softmax via max subtraction; rows of exp(out) sum to 1."""
    if x.data.ndim != 2 or x.shape[1] < 2:
        raise ShapeError(f"log_softmax needs an n x c matrix with c >= 2, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    out = Tensor(shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True)))

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(x, g - np.exp(out.data) * g.sum(axis=1, keepdims=True))

    return _record_op(out, (x,), backward_fn)


def softmax(x: Tensor) -> Tensor:
    return exp(log_softmax(x))


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Rowwise concatenation; backward splits the gradient at the seam."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat leading dimensions differ: {a.shape} vs {b.shape}")
    p = a.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1))

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g[:, :p])
        _accumulate(b, g[:, p:])

    return _record_op(out, (a, b), backward_fn)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None = None,
            training: bool = False) -> Tensor:
    """Inverted dropout; identity outside training mode or at rate 0."""
    if rate >= 1.0 or rate < 0.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise UsageError("training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * keep)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(x, g * keep)

    return _record_op(out, (x,), backward_fn)


def pick(x: Tensor, indices) -> Tensor:
    """One element per row: out[i] = x[i, indices[i]]."""
    idx = np.asarray(indices, dtype=np.int64)
    if x.data.ndim != 2 or idx.shape != (x.shape[0],):
        raise ShapeError(f"pick needs one index per row: {x.shape} vs {idx.shape}")
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= x.shape[1]:
        raise UsageError(f"pick index out of range for width {x.shape[1]}")
    rows = np.arange(x.shape[0])
    out = Tensor(x.data[rows, idx])

    def backward_fn(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, idx), g)
        _accumulate(x, gx)

    return _record_op(out, (x,), backward_fn)


def tsum(x: Tensor) -> Tensor:
    out = Tensor(x.data.sum())

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(x, np.broadcast_to(g, x.shape).copy())

    return _record_op(out, (x,), backward_fn)


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    out = Tensor(x.data.mean())

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(x, np.broadcast_to(g / n, x.shape).copy())

    return _record_op(out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# Verification harness


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between taped gradients of f at x and central
    finite differences with step h. f must be deterministic.
    """
    probe = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        loss = f(probe)
        backward(loss, tape)
    auto = probe.grad if probe.grad is not None else np.zeros_like(probe.data)

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        f_plus = f(Tensor(bumped.reshape(x.shape))).item()
        bumped[i] = flat[i] - h
        f_minus = f(Tensor(bumped.reshape(x.shape))).item()
        numeric[i] = (f_plus - f_minus) / (2.0 * h)

    auto = auto.reshape(-1)
    denom = np.maximum(np.maximum(np.abs(auto), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(auto - numeric) / denom))
