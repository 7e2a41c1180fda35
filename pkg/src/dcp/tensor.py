"""Dense 2-D float64 matrices with reverse-mode automatic differentiation.

Every numeric value in the training stack is a :class:`Tensor`: an immutable
rows-by-cols matrix of doubles that, when marked differentiable, records the
operations applied to it and accumulates ``grad`` during
:meth:`Tensor.backward`. Gradients add up across backward calls until
explicitly zeroed; discriminator and main updates reuse subgraphs, so
overwrite semantics would be wrong.

Broadcasting is deliberately minimal: a full matrix may combine with a row
vector (1 x n), a column vector (m x 1), a 1 x 1 scalar tensor, or a plain
Python float. Anything else raises :class:`ShapeError`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# Shift applied inside square roots on the gradient path so that distances and
# alignment losses keep finite gradients when their argument hits zero
# (coincident points, perfectly aligned matrices).
SQRT_SHIFT = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(ValueError):
    """An input value lies outside the mathematical domain of the operation."""


class EvaluationError(RuntimeError):
    """A checked function evaluated to a non-finite value."""


def _as_matrix(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D, got array of shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError("tensors must be non-empty")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class Tensor:
    """A rows x cols matrix of doubles, optionally recorded on a compute graph.

    ``values`` is frozen after construction; parameter updates replace the
    array rather than mutating it, which makes read-only sharing across
    concurrent evaluations safe. ``grad`` is ``None`` until a backward pass
    deposits into it.
    """

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, values, requires_grad: bool = False):
        self.values = _freeze(_as_matrix(values))
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[], None] | None = None

    @classmethod
    def _node(
        cls,
        values: np.ndarray,
        parents: tuple["Tensor", ...],
        backward_fn: Callable[[], None] | None,
    ) -> "Tensor":
        # Internal constructor for op outputs: the array is freshly computed
        # and owned by the node, so no defensive copy is needed.
        out = cls.__new__(cls)
        arr = np.ascontiguousarray(values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ShapeError(f"graph nodes must be non-empty matrices, got {arr.shape}")
        out.values = _freeze(arr)
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents)
        out._backward_fn = backward_fn if out.requires_grad else None
        return out

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def item(self) -> float:
        if self.values.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def detached(self) -> "Tensor":
        """A constant copy of this tensor, cut off from the graph."""
        return Tensor(self.values)

    def update_values(self, values: np.ndarray) -> None:
        """Swap in a new same-shape matrix.

        Only the trainer uses this, between steps; graphs built before the
        swap keep referencing the old (frozen) array.
        """
        arr = np.ascontiguousarray(values, dtype=np.float64)
        if arr.shape != self.values.shape:
            raise ShapeError(f"cannot replace {self.values.shape} values with {arr.shape}")
        self.values = _freeze(arr)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, delta: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros(self.values.shape)
        self.grad += delta

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- backward pass ----------------------------------------------------

    def backward(self) -> None:
        """Populate ``grad`` on every differentiable ancestor of this scalar.

        The graph is traversed once in reverse topological order. Repeated
        calls accumulate into existing ``grad`` buffers; zero them between
        optimization phases.
        """
        if self.shape != (1, 1):
            raise ShapeError(f"backward() needs a scalar (1x1) loss, got {self.shape}")
        if not self.requires_grad:
            return  # constant loss: no differentiable ancestors, nothing to do
        order: list[Tensor] = []
        seen: set[int] = {id(self)}
        stack: list[tuple[Tensor, int]] = [(self, 0)]
        while stack:
            node, idx = stack[-1]
            if idx < len(node._parents):
                stack[-1] = (node, idx + 1)
                parent = node._parents[idx]
                if parent.requires_grad and id(parent) not in seen:
                    seen.add(id(parent))
                    stack.append((parent, 0))
            else:
                order.append(node)
                stack.pop()
        # Derived nodes get a fresh gradient each pass; leaves keep accumulating
        # across passes until explicitly zeroed.
        for node in order:
            if node._parents:
                node.grad = None
        self._accumulate(np.ones((1, 1)))
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn()

    # -- elementwise arithmetic -------------------------------------------

    def _scalar_shift(self, c: float) -> "Tensor":
        out = Tensor._node(self.values + c, (self,), None)

        def bw() -> None:
            self._accumulate(out.grad)

        out._backward_fn = bw if out.requires_grad else None
        return out

    def _scalar_scale(self, c: float) -> "Tensor":
        out = Tensor._node(self.values * c, (self,), None)

        def bw() -> None:
            self._accumulate(out.grad * c)

        out._backward_fn = bw if out.requires_grad else None
        return out

    def __add__(self, other):
        other = _coerce(other)
        if isinstance(other, float):
            return self._scalar_shift(other)
        _check_broadcast(self, other, "+")
        out = Tensor._node(self.values + other.values, (self, other), None)

        def bw() -> None:
            g = out.grad
            self._accumulate(_reduce_to(g, self.shape))
            other._accumulate(_reduce_to(g, other.shape))

        out._backward_fn = bw if out.requires_grad else None
        return out

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        other = _coerce(other)
        if isinstance(other, float):
            return self._scalar_shift(-other)
        _check_broadcast(self, other, "-")
        out = Tensor._node(self.values - other.values, (self, other), None)

        def bw() -> None:
            g = out.grad
            self._accumulate(_reduce_to(g, self.shape))
            other._accumulate(_reduce_to(-g, other.shape))

        out._backward_fn = bw if out.requires_grad else None
        return out

    def __rsub__(self, other):
        other = _coerce(other)
        if not isinstance(other, float):
            return other.__sub__(self)
        out = Tensor._node(other - self.values, (self,), None)

        def bw() -> None:
            self._accumulate(-out.grad)

        out._backward_fn = bw if out.requires_grad else None
        return out

    def __neg__(self):
        return self._scalar_scale(-1.0)

    def __mul__(self, other):
        other = _coerce(other)
        if isinstance(other, float):
            return self._scalar_scale(other)
        _check_broadcast(self, other, "*")
        out = Tensor._node(self.values * other.values, (self, other), None)

        def bw() -> None:
            g = out.grad
            self._accumulate(_reduce_to(g * other.values, self.shape))
            other._accumulate(_reduce_to(g * self.values, other.shape))

        out._backward_fn = bw if out.requires_grad else None
        return out

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        other = _coerce(other)
        if isinstance(other, float):
            return self._scalar_scale(1.0 / other)
        _check_broadcast(self, other, "/")
        out = Tensor._node(self.values / other.values, (self, other), None)

        def bw() -> None:
            g = out.grad
            self._accumulate(_reduce_to(g / other.values, self.shape))
            other._accumulate(
                _reduce_to(-g * self.values / (other.values * other.values), other.shape)
            )

        out._backward_fn = bw if out.requires_grad else None
        return out

    def __rtruediv__(self, other):
        other = _coerce(other)
        if not isinstance(other, float):
            return other.__truediv__(self)
        out = Tensor._node(other / self.values, (self,), None)

        def bw() -> None:
            self._accumulate(-out.grad * other / (self.values * self.values))

        out._backward_fn = bw if out.requires_grad else None
        return out

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape ops ----------------------------------------------------------

    @property
    def T(self) -> "Tensor":
        out = Tensor._node(self.values.T, (self,), None)

        def bw() -> None:
            self._accumulate(out.grad.T)

        out._backward_fn = bw if out.requires_grad else None
        return out

    # -- reductions ---------------------------------------------------------

    def sum(self) -> "Tensor":
        out = Tensor._node(np.array([[self.values.sum()]]), (self,), None)

        def bw() -> None:
            self._accumulate(np.full(self.shape, out.grad[0, 0]))

        out._backward_fn = bw if out.requires_grad else None
        return out

    def mean(self) -> "Tensor":
        return self.sum() * (1.0 / self.values.size)

    # -- elementwise nonlinearities ------------------------------------------

    def relu(self) -> "Tensor":
        out = Tensor._node(np.maximum(self.values, 0.0), (self,), None)

        def bw() -> None:
            self._accumulate(out.grad * (self.values > 0.0))

        out._backward_fn = bw if out.requires_grad else None
        return out

    def sigmoid(self) -> "Tensor":
        x = self.values
        # Split by sign to avoid overflow in exp for large |x|.
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = Tensor._node(s, (self,), None)

        def bw() -> None:
            self._accumulate(out.grad * s * (1.0 - s))

        out._backward_fn = bw if out.requires_grad else None
        return out

    def log(self) -> "Tensor":
        bad = np.argwhere(self.values <= 0.0)
        if bad.size:
            i, j = bad[0]
            raise DomainError(
                f"log needs strictly positive entries; entry ({i}, {j}) is {self.values[i, j]}"
            )
        out = Tensor._node(np.log(self.values), (self,), None)

        def bw() -> None:
            self._accumulate(out.grad / self.values)

        out._backward_fn = bw if out.requires_grad else None
        return out

    def sqrt(self) -> "Tensor":
        """Elementwise square root; gradient stabilized by ``SQRT_SHIFT``.

        Callers whose argument can be exactly zero should add the shift to the
        argument themselves so the forward value reflects it too.
        """
        bad = np.argwhere(self.values < 0.0)
        if bad.size:
            i, j = bad[0]
            raise DomainError(
                f"sqrt needs nonnegative entries; entry ({i}, {j}) is {self.values[i, j]}"
            )
        root = np.sqrt(self.values)
        out = Tensor._node(root, (self,), None)

        def bw() -> None:
            self._accumulate(out.grad / (2.0 * np.sqrt(self.values + SQRT_SHIFT)))

        out._backward_fn = bw if out.requires_grad else None
        return out

    def clamp(self, lo: float, hi: float) -> "Tensor":
        """Clip values into [lo, hi]; gradient passes only where unclipped."""
        out = Tensor._node(np.clip(self.values, lo, hi), (self,), None)

        def bw() -> None:
            mask = (self.values >= lo) & (self.values <= hi)
            self._accumulate(out.grad * mask)

        out._backward_fn = bw if out.requires_grad else None
        return out


def _coerce(other):
    if isinstance(other, Tensor):
        return other
    if isinstance(other, (int, float, np.integer, np.floating)):
        return float(other)
    raise TypeError(f"cannot combine Tensor with {type(other).__name__}")


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        out_shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"shape mismatch for '{op}': {a.shape} vs {b.shape}") from None
    if out_shape != a.shape and out_shape != b.shape:
        raise ShapeError(
            f"only row/column/scalar broadcasting is supported for '{op}': {a.shape} vs {b.shape}"
        )


def _reduce_to(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    g = grad
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


# -- free-standing primitives ---------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with the standard gradient rules."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    out = Tensor._node(a.values @ b.values, (a, b), None)

    def bw() -> None:
        g = out.grad
        a._accumulate(g @ b.values.T)
        b._accumulate(a.values.T @ g)

    out._backward_fn = bw if out.requires_grad else None
    return out


_ACTIVATIONS = ("relu", "sigmoid", "log")


def activation(kind: str, x: Tensor) -> Tensor:
    """Apply an elementwise nonlinearity by name: relu, sigmoid, or log."""
    if kind not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}; expected one of {_ACTIVATIONS}")
    return getattr(x, kind)()


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over rows of -log softmax(logits)[row, label].

    Numerically stabilized by row-max subtraction, so saturated logits do not
    overflow.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, k = logits.shape
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for {n} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        bad = labels[(labels < 0) | (labels >= k)][0]
        raise IndexError(f"label {bad} out of range [0, {k})")
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1, keepdims=True)
    log_probs = z - np.log(sez)
    loss = -log_probs[np.arange(n), labels].mean()
    out = Tensor._node(np.array([[loss]]), (logits,), None)

    local = ez / sez
    local[np.arange(n), labels] -= 1.0
    local /= n

    def bw() -> None:
        logits._accumulate(out.grad[0, 0] * local)

    out._backward_fn = bw if out.requires_grad else None
    return out


def pairwise_euclidean(a: Tensor, b: Tensor) -> Tensor:
    """Matrix of Euclidean distances: entry (i, j) = ||a_i - b_j||.

    The forward value is exact (zero for coincident points); the backward rule
    uses the ``SQRT_SHIFT``-stabilized root so gradients stay finite there.
    """
    if a.cols != b.cols:
        raise ShapeError(f"feature dimensions differ: {a.shape} vs {b.shape}")
    diff = a.values[:, None, :] - b.values[None, :, :]
    sq = np.einsum("ijd,ijd->ij", diff, diff)
    out = Tensor._node(np.sqrt(sq), (a, b), None)

    def bw() -> None:
        w = out.grad / np.sqrt(sq + SQRT_SHIFT)
        a._accumulate(w.sum(axis=1, keepdims=True) * a.values - w @ b.values)
        b._accumulate(w.sum(axis=0)[:, None] * b.values - w.T @ a.values)

    out._backward_fn = bw if out.requires_grad else None
    return out


def vstack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack tensors with equal column counts into one tall matrix."""
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("vstack of nothing")
    cols = tensors[0].cols
    for t in tensors[1:]:
        if t.cols != cols:
            raise ShapeError(f"vstack column mismatch: {t.shape} vs (*, {cols})")
    out = Tensor._node(np.vstack([t.values for t in tensors]), tensors, None)

    def bw() -> None:
        offset = 0
        for t in tensors:
            t._accumulate(out.grad[offset : offset + t.rows])
            offset += t.rows

    out._backward_fn = bw if out.requires_grad else None
    return out


def backward(loss: Tensor) -> None:
    """Run the backward pass from a scalar loss."""
    loss.backward()


def zero_all_grads(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


# -- finite-difference verification ----------------------------------------


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_index: tuple[int, int]


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-6) -> GradCheckReport:
    """Compare the analytic gradient of ``f`` at ``x`` to central differences.

    ``f`` must build a fresh graph on each call; relative error uses
    max(|analytic|, |numeric|, 1e-8) as denominator.
    """
    probe = Tensor(x.values, requires_grad=True)
    out = f(probe)
    if out.shape != (1, 1):
        raise ShapeError(f"grad_check needs a scalar-valued f, got {out.shape}")
    if not np.isfinite(out.values).all():
        raise EvaluationError("f evaluated to a non-finite value at x")
    out.backward()
    analytic = np.zeros(x.shape) if probe.grad is None else probe.grad

    def f_at(values: np.ndarray) -> float:
        y = f(Tensor(values)).item()
        if not np.isfinite(y):
            raise EvaluationError("f evaluated to a non-finite value at a probe point")
        return y

    max_rel = 0.0
    worst = (0, 0)
    base = x.values
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            bumped = base.copy()
            bumped[i, j] = base[i, j] + h
            fp = f_at(bumped)
            bumped[i, j] = base[i, j] - h
            fm = f_at(bumped)
            numeric = (fp - fm) / (2.0 * h)
            a = analytic[i, j]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > max_rel:
                max_rel = rel
                worst = (i, j)
    return GradCheckReport(max_rel_error=max_rel, worst_index=worst)
