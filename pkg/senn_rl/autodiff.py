"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation on a tensor that requires gradients records a node holding the
operation kind, its operands and a vector-Jacobian product (VJP). The VJPs are
written with the same traced operations, so ``gradient(..., create_graph=True)``
returns tensors that can themselves be differentiated. That nested mode is what
the robustness loss needs: it contains an input gradient and is trained with a
parameter gradient.
"""

from __future__ import annotations

import hashlib
import itertools
import threading
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from senn_rl.errors import GradientError, NonFiniteError, ShapeError

FloatArray = NDArray[np.float64]
Operand = Union["Tensor", float, int, np.ndarray]
Vjp = Callable[["Tensor", "Tensor"], tuple[Union["Tensor", None], ...]]

_UIDS = itertools.count()
_STATE = threading.local()


def is_grad_enabled() -> bool:
    """Return whether operations are currently recorded."""
    return bool(getattr(_STATE, "enabled", True))


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate operations without recording them."""
    previous = is_grad_enabled()
    _STATE.enabled = False
    try:
        yield
    finally:
        _STATE.enabled = previous


@contextmanager
def enable_grad() -> Iterator[None]:
    """Record operations even inside an enclosing ``no_grad`` block."""
    previous = is_grad_enabled()
    _STATE.enabled = True
    try:
        yield
    finally:
        _STATE.enabled = previous


@dataclass(slots=True, eq=False)
class Node:
    """Recorded operation that produced a tensor."""

    kind: str
    inputs: tuple[Tensor, ...]
    vjp: Vjp


class Tensor:
    """Row-major float64 array that may participate in differentiation."""

    __slots__ = ("data", "requires_grad", "uid", "node", "name")
    # numpy defers binary operators to Tensor's reflected methods
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str | None = None) -> None:
        array = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            label = f" {name!r}" if name else ""
            raise NonFiniteError(f"leaf tensor{label} contains NaN or infinite values")
        self.data: FloatArray = array
        self.requires_grad = requires_grad
        self.uid = next(_UIDS)
        self.node: Node | None = None
        self.name = name

    @classmethod
    def _result(cls, data: ArrayLike, node: Node | None) -> Tensor:
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.requires_grad = node is not None
        out.uid = next(_UIDS)
        out.node = node
        out.name = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def values(self) -> list[float]:
        """Row-major flat list of the tensor's values."""
        return [float(value) for value in self.data.ravel()]

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError("item", self.shape)
        return float(self.data.reshape(()))

    def numpy(self) -> FloatArray:
        """Return a copy of the underlying array."""
        return np.array(self.data, copy=True)

    def detach(self) -> Tensor:
        """Return a constant tensor sharing no trace with this one."""
        return Tensor._result(self.data, None)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        if self.ndim == 0:
            raise ShapeError("len", self.shape)
        return self.shape[0]

    def __add__(self, other: Operand) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Operand) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Operand) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Operand) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Operand) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Operand) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Operand) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __pow__(self, exponent: float) -> Tensor:
        return power(self, exponent)

    def __matmul__(self, other: Operand) -> Tensor:
        return matmul(self, other)

    def __rmatmul__(self, other: Operand) -> Tensor:
        return matmul(other, self)

    def __getitem__(self, key: Any) -> Tensor:
        return index(self, key)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        target = shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape
        return reshape(self, target)

    def transpose(self, axes: Sequence[int] | None = None) -> Tensor:
        return transpose(self, axes)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def tanh(self) -> Tensor:
        return tanh(self)

    def relu(self) -> Tensor:
        return relu(self)

    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)


def as_tensor(value: Operand) -> Tensor:
    """Wrap a scalar or array as a constant tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def constant(value: ArrayLike) -> Tensor:
    """Build a constant without the finiteness check used for leaves."""
    return Tensor._result(value, None)


def _record(kind: str, data: ArrayLike, inputs: tuple[Tensor, ...], vjp: Vjp) -> Tensor:
    if is_grad_enabled() and any(tensor.requires_grad for tensor in inputs):
        return Tensor._result(data, Node(kind, inputs, vjp))
    return Tensor._result(data, None)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def sum_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Sum a broadcast result back down to ``shape``."""
    target = tuple(shape)
    if a.shape == target:
        return a
    lead = a.ndim - len(target)
    if lead < 0:
        raise ShapeError("sum_to", a.shape, target)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, size in enumerate(target) if size == 1 and a.shape[lead + i] != 1
    )
    data = a.data.sum(axis=axes, keepdims=True).reshape(target)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (broadcast_to(g, a.shape),)

    return _record("sum_to", data, (a,), vjp)


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    target = tuple(shape)
    if a.shape == target:
        return a
    try:
        data = np.broadcast_to(a.data, target).copy()
    except ValueError:
        raise ShapeError("broadcast_to", a.shape, target) from None

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (sum_to(g, a.shape),)

    return _record("broadcast_to", data, (a,), vjp)


def add(left: Operand, right: Operand) -> Tensor:
    a, b = as_tensor(left), as_tensor(right)
    _broadcast_shape("add", a, b)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return sum_to(g, a.shape), sum_to(g, b.shape)

    return _record("add", a.data + b.data, (a, b), vjp)


def sub(left: Operand, right: Operand) -> Tensor:
    a, b = as_tensor(left), as_tensor(right)
    _broadcast_shape("sub", a, b)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return sum_to(g, a.shape), sum_to(neg(g), b.shape)

    return _record("sub", a.data - b.data, (a, b), vjp)


def mul(left: Operand, right: Operand) -> Tensor:
    a, b = as_tensor(left), as_tensor(right)
    _broadcast_shape("mul", a, b)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return sum_to(mul(g, b), a.shape), sum_to(mul(g, a), b.shape)

    return _record("mul", a.data * b.data, (a, b), vjp)


def div(left: Operand, right: Operand) -> Tensor:
    a, b = as_tensor(left), as_tensor(right)
    _broadcast_shape("div", a, b)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return sum_to(div(g, b), a.shape), sum_to(neg(div(mul(g, out), b)), b.shape)

    return _record("div", a.data / b.data, (a, b), vjp)


def neg(value: Operand) -> Tensor:
    a = as_tensor(value)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (neg(g),)

    return _record("neg", -a.data, (a,), vjp)


def power(value: Operand, exponent: float) -> Tensor:
    a = as_tensor(value)
    p = float(exponent)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (mul(g, mul(p, power(a, p - 1.0))),)

    return _record("power", np.power(a.data, p), (a,), vjp)


def exp(value: Operand) -> Tensor:
    a = as_tensor(value)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (mul(g, out),)

    return _record("exp", np.exp(a.data), (a,), vjp)


def log(value: Operand) -> Tensor:
    a = as_tensor(value)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (div(g, a),)

    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    return _record("log", data, (a,), vjp)


def tanh(value: Operand) -> Tensor:
    a = as_tensor(value)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (mul(g, sub(1.0, mul(out, out))),)

    return _record("tanh", np.tanh(a.data), (a,), vjp)


def relu(value: Operand) -> Tensor:
    a = as_tensor(value)
    mask = constant((a.data > 0.0).astype(np.float64))

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (mul(g, mask),)

    return _record("relu", np.maximum(a.data, 0.0), (a,), vjp)


def reciprocal_safe(value: Operand) -> Tensor:
    """Elementwise 1/x with 0 wherever x == 0."""
    a = as_tensor(value)
    nonzero = a.data != 0.0
    data = np.zeros_like(a.data)
    np.divide(1.0, a.data, out=data, where=nonzero)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (neg(mul(g, mul(out, out))),)

    return _record("reciprocal_safe", data, (a,), vjp)


def safe_sqrt(value: Operand) -> Tensor:
    """Square root whose derivative at 0 is taken as 0."""
    a = as_tensor(value)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (mul(g, mul(0.5, reciprocal_safe(out))),)

    return _record("sqrt", np.sqrt(np.maximum(a.data, 0.0)), (a,), vjp)


def maximum(left: Operand, right: Operand) -> Tensor:
    a, b = as_tensor(left), as_tensor(right)
    shape = _broadcast_shape("maximum", a, b)
    pick_a = constant(np.broadcast_to(a.data >= b.data, shape).astype(np.float64))

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return sum_to(mul(g, pick_a), a.shape), sum_to(mul(g, sub(1.0, pick_a)), b.shape)

    return _record("maximum", np.maximum(a.data, b.data), (a, b), vjp)


def minimum(left: Operand, right: Operand) -> Tensor:
    a, b = as_tensor(left), as_tensor(right)
    shape = _broadcast_shape("minimum", a, b)
    pick_a = constant(np.broadcast_to(a.data <= b.data, shape).astype(np.float64))

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return sum_to(mul(g, pick_a), a.shape), sum_to(mul(g, sub(1.0, pick_a)), b.shape)

    return _record("minimum", np.minimum(a.data, b.data), (a, b), vjp)


def clip(value: Operand, low: float, high: float) -> Tensor:
    a = as_tensor(value)
    inside = constant(((a.data >= low) & (a.data <= high)).astype(np.float64))

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (mul(g, inside),)

    return _record("clip", np.clip(a.data, low, high), (a,), vjp)


def _matmul2d(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return _matmul2d(g, transpose(b)), _matmul2d(transpose(a), g)

    return _record("matmul", a.data @ b.data, (a, b), vjp)


def matmul(left: Operand, right: Operand) -> Tensor:
    """Matrix product for 1-D and 2-D operands."""
    a, b = as_tensor(left), as_tensor(right)
    if not (1 <= a.ndim <= 2 and 1 <= b.ndim <= 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    lhs = a if a.ndim == 2 else reshape(a, (1, a.shape[0]))
    rhs = b if b.ndim == 2 else reshape(b, (b.shape[0], 1))
    product = _matmul2d(lhs, rhs)
    out_shape = a.shape[:-1] + b.shape[1:]
    return product if product.shape == out_shape else reshape(product, out_shape)


def transpose(value: Operand, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(value)
    order = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    if sorted(order) != list(range(a.ndim)):
        raise ShapeError("transpose", a.shape, order)
    inverse = tuple(int(i) for i in np.argsort(order))

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (transpose(g, inverse),)

    return _record("transpose", np.transpose(a.data, order), (a,), vjp)


def reshape(value: Operand, shape: Sequence[int]) -> Tensor:
    a = as_tensor(value)
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (reshape(g, a.shape),)

    return _record("reshape", data, (a,), vjp)


def sum_(value: Operand, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(value)
    kept_shape = np.sum(a.data, axis=axis, keepdims=True).shape

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        expanded = g if keepdims else reshape(g, kept_shape)
        return (broadcast_to(expanded, a.shape),)

    return _record("sum", np.sum(a.data, axis=axis, keepdims=keepdims), (a,), vjp)


def mean(value: Operand, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(value)
    total = sum_(a, axis=axis, keepdims=keepdims)
    count = a.size // max(total.size, 1) if a.size else 1
    return div(total, float(count))


def index(value: Operand, key: Any) -> Tensor:
    a = as_tensor(value)
    data = np.array(a.data[key], dtype=np.float64)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (scatter(g, key, a.shape),)

    return _record("index", data, (a,), vjp)


def scatter(value: Operand, key: Any, shape: Sequence[int]) -> Tensor:
    """Place ``value`` at ``key`` inside zeros of ``shape`` (adjoint of ``index``)."""
    a = as_tensor(value)
    data = np.zeros(tuple(shape), dtype=np.float64)
    np.add.at(data, key, a.data)

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        return (index(g, key),)

    return _record("scatter", data, (a,), vjp)


def stack(values: Sequence[Operand], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(value) for value in values)
    if not tensors:
        raise ShapeError("stack", ())
    for tensor in tensors[1:]:
        if tensor.shape != tensors[0].shape:
            raise ShapeError("stack", tensors[0].shape, tensor.shape)
    position = axis if axis >= 0 else axis + tensors[0].ndim + 1

    def vjp(g: Tensor, out: Tensor) -> tuple[Tensor | None, ...]:
        prefix = (slice(None),) * position
        return tuple(index(g, prefix + (i,)) for i in range(len(tensors)))

    return _record("stack", np.stack([tensor.data for tensor in tensors], axis=position), tensors, vjp)


def norm(value: Operand, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    """Euclidean (Frobenius for matrices) norm; its gradient at 0 is 0."""
    a = as_tensor(value)
    return safe_sqrt(sum_(mul(a, a), axis=axis, keepdims=keepdims))


def log_softmax(value: Operand, axis: int = -1) -> Tensor:
    a = as_tensor(value)
    shifted = sub(a, constant(np.max(a.data, axis=axis, keepdims=True)))
    return sub(shifted, log(sum_(exp(shifted), axis=axis, keepdims=True)))


def softmax(value: Operand, axis: int = -1) -> Tensor:
    a = as_tensor(value)
    shifted_exp = exp(sub(a, constant(np.max(a.data, axis=axis, keepdims=True))))
    return div(shifted_exp, sum_(shifted_exp, axis=axis, keepdims=True))


@dataclass(frozen=True, slots=True)
class TraceEntry:
    """One recorded operation: kind, operand ids and result id."""

    kind: str
    operands: tuple[int, ...]
    result: int


@dataclass(slots=True)
class ComputationRecord:
    """Operations reachable from one output, operands before results."""

    output: int
    entries: list[TraceEntry]
    leaves: list[int]
    tensors: dict[int, Tensor] = field(repr=False)

    def __contains__(self, tensor: object) -> bool:
        return isinstance(tensor, Tensor) and tensor.uid in self.tensors

    def results(self) -> list[Tensor]:
        """Traced (non-leaf) tensors in topological order."""
        return [self.tensors[entry.result] for entry in self.entries]


def trace(output: Tensor) -> ComputationRecord:
    """Collect the computation record reachable from ``output``."""
    tensors: dict[int, Tensor] = {}
    stack_: list[Tensor] = [output]
    while stack_:
        tensor = stack_.pop()
        if tensor.uid in tensors:
            continue
        tensors[tensor.uid] = tensor
        if tensor.node is not None:
            stack_.extend(operand for operand in tensor.node.inputs if operand.requires_grad)

    traced = sorted((t for t in tensors.values() if t.node is not None), key=lambda t: t.uid)
    entries = [
        TraceEntry(
            kind=t.node.kind,
            operands=tuple(operand.uid for operand in t.node.inputs),
            result=t.uid,
        )
        for t in traced
        if t.node is not None
    ]
    leaves = sorted(uid for uid, t in tensors.items() if t.node is None and t.requires_grad)
    return ComputationRecord(output=output.uid, entries=entries, leaves=leaves, tensors=tensors)


def gradient(
    output: Tensor,
    wrt: Tensor | Sequence[Tensor] | ParameterSet,
    create_graph: bool = False,
    allow_unused: bool = False,
) -> Any:
    """Reverse-mode gradient of a scalar ``output``.

    Returns a tensor for a single ``wrt``, a list for a sequence and a name to
    tensor dict for a ParameterSet. With ``create_graph`` the backward pass is
    itself recorded, so the returned gradients can be differentiated again.
    """
    if output.size != 1:
        raise GradientError(f"gradient needs a scalar output, got shape {output.shape}")
    targets, unpack = _targets(wrt)
    record = trace(output)

    grads: dict[int, Tensor] = {output.uid: constant(np.ones(output.shape))}
    mode = enable_grad() if create_graph else no_grad()
    with mode:
        for tensor in reversed(record.results()):
            upstream = grads.get(tensor.uid)
            if upstream is None or tensor.node is None:
                continue
            for operand, operand_grad in zip(tensor.node.inputs, tensor.node.vjp(upstream, tensor)):
                if operand_grad is None or not operand.requires_grad:
                    continue
                previous = grads.get(operand.uid)
                grads[operand.uid] = operand_grad if previous is None else add(previous, operand_grad)

    results: list[Tensor] = []
    for target in targets:
        if target not in record and not allow_unused:
            raise GradientError(f"{target!r} is not on the trace of the requested output")
        found = grads.get(target.uid)
        if found is None:
            found = constant(np.zeros(target.shape))
        results.append(found if create_graph else found.detach())
    return unpack(results)


def _targets(
    wrt: Tensor | Sequence[Tensor] | ParameterSet,
) -> tuple[list[Tensor], Callable[[list[Tensor]], Any]]:
    if isinstance(wrt, Tensor):
        return [wrt], lambda grads: grads[0]
    if isinstance(wrt, ParameterSet):
        names = wrt.names()
        return list(wrt.values()), lambda grads: dict(zip(names, grads))
    return list(wrt), lambda grads: grads


def jacobian(f: Callable[[Tensor], Tensor], x: Operand, create_graph: bool = False) -> Tensor:
    """m x n Jacobian of a vector function, one reverse pass per output row."""
    point = as_tensor(x)
    if point.ndim != 1:
        raise ShapeError("jacobian", point.shape)
    leaf = point if point.requires_grad else Tensor(point.data, requires_grad=True)
    with enable_grad():
        output = f(leaf)
    if output.ndim != 1:
        raise ShapeError("jacobian", output.shape)
    rows = [
        gradient(output[i], leaf, create_graph=create_graph, allow_unused=True)
        for i in range(output.shape[0])
    ]
    return stack(rows)


class ParameterSet:
    """Uniquely named trainable tensors in deterministic insertion order."""

    def __init__(self, params: Iterable[tuple[str, Tensor]] = ()) -> None:
        self._params: dict[str, Tensor] = {}
        for name, tensor in params:
            self.add(name, tensor)

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"Duplicate parameter name: {name}")
        tensor.requires_grad = True
        tensor.name = name
        self._params[name] = tensor
        return tensor

    @classmethod
    def merge(cls, groups: Mapping[str, ParameterSet]) -> ParameterSet:
        """Combine sets under ``prefix.name`` while sharing the same tensors."""
        merged = cls()
        for prefix, group in groups.items():
            for name, tensor in group.items():
                merged._params[f"{prefix}.{name}"] = tensor
        return merged

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def values(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self) -> list[tuple[str, Tensor]]:
        return list(self._params.items())

    def arrays(self) -> dict[str, FloatArray]:
        """Copy every parameter out as a numpy array."""
        return {name: tensor.numpy() for name, tensor in self._params.items()}

    def assign(self, arrays: Mapping[str, ArrayLike]) -> None:
        """Overwrite parameter values in place; shapes must match exactly."""
        missing = set(self._params) - set(arrays)
        if missing:
            raise KeyError(f"Missing parameters: {sorted(missing)}")
        for name, tensor in self._params.items():
            array = np.array(arrays[name], dtype=np.float64)
            if array.shape != tensor.shape:
                raise ShapeError(f"assign {name}", tensor.shape, array.shape)
            tensor.data = array

    def fingerprint(self) -> str:
        """sha256 over names, shapes and raw float64 bytes."""
        digest = hashlib.sha256()
        for name, tensor in self._params.items():
            digest.update(name.encode("utf-8"))
            digest.update(repr(tensor.shape).encode("utf-8"))
            digest.update(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
        return digest.hexdigest()
