"""
Dense tensors with reverse-mode automatic differentiation.

Every op result that depends on a requires-grad tensor keeps a Node pointing at
its inputs and a backward rule. backward() records those nodes into a Tape in
topological order and replays it in reverse, with gradient accumulators that
start at zero on every pass.
"""
from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import NonFiniteError, ShapeError

_ids = itertools.count()
_grad_enabled = True

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no tape inside the block (evaluation, inference, teacher logits)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


@dataclass
class Node:
    """A recorded primitive op: its inputs and how to map the output gradient onto them."""
    op: str
    inputs: Tuple["Tensor", ...]
    backward: BackwardFn


class Tensor:
    """
    N-dimensional real array in row-major (NCHW for images) order.

    Python data defaults to 64-bit; float32 arrays stay float32.
    """

    __array_priority__ = 100

    def __init__(self, data: Any, requires_grad: bool = False, dtype: Any = None, name: Optional[str] = None):
        array = np.asarray(data, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.id = next(_ids)
        self._node: Optional[Node] = None

    # Properties

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} dtype={self.dtype} requires_grad={self.requires_grad}>"

    def __len__(self) -> int:
        return self.shape[0]

    # Conversions

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype: Any) -> Tensor:
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    def zero_grad(self) -> Tensor:
        self.grad = None
        return self

    # Operators (rules live in autodiff.ops)

    def __add__(self, other: Any) -> Tensor:
        from autodiff import ops
        return ops.elementwise("add", self, other)

    def __radd__(self, other: Any) -> Tensor:
        from autodiff import ops
        return ops.elementwise("add", ops.as_tensor(other, like=self), self)

    def __sub__(self, other: Any) -> Tensor:
        from autodiff import ops
        return ops.elementwise("sub", self, other)

    def __rsub__(self, other: Any) -> Tensor:
        from autodiff import ops
        return ops.elementwise("sub", ops.as_tensor(other, like=self), self)

    def __mul__(self, other: Any) -> Tensor:
        from autodiff import ops
        return ops.elementwise("mul", self, other)

    def __rmul__(self, other: Any) -> Tensor:
        from autodiff import ops
        return ops.elementwise("mul", ops.as_tensor(other, like=self), self)

    def __truediv__(self, other: Any) -> Tensor:
        from autodiff import ops
        return ops.elementwise("div", self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        from autodiff import ops
        return ops.elementwise("div", ops.as_tensor(other, like=self), self)

    def __neg__(self) -> Tensor:
        from autodiff import ops
        return ops.neg(self)

    def __pow__(self, exponent: float) -> Tensor:
        from autodiff import ops
        return ops.power(self, exponent)

    def __matmul__(self, other: Tensor) -> Tensor:
        from autodiff import ops
        return ops.matmul(self, other)

    def sum(self, axis: Any = None, keepdims: bool = False) -> Tensor:
        from autodiff import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> Tensor:
        from autodiff import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> Tensor:
        from autodiff import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def abs(self) -> Tensor:
        from autodiff import ops
        return ops.absolute(self)

    def backward(self) -> Dict[Tensor, np.ndarray]:
        return backward(self)


def make_op(op: str, data: np.ndarray, inputs: Sequence[Tensor], rule: BackwardFn) -> Tensor:
    """
    Wrap a forward result, check it is finite and record the node when any
    input needs a gradient.
    """
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    requires = _grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._node = Node(op, tuple(inputs), rule)
    return out


@dataclass
class TapeEntry:
    op: str
    input_ids: Tuple[int, ...]
    output_id: int


@dataclass
class Tape:
    """Ops reachable from an output, in topological (forward) order."""
    entries: List[TapeEntry] = field(default_factory=list)
    tensors: Dict[int, Tensor] = field(default_factory=dict)

    @classmethod
    def record(cls, output: Tensor) -> "Tape":
        tape = cls()
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        # Iterative post-order DFS; deep networks overflow recursion
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                node = tensor._node
                tape.entries.append(TapeEntry(node.op, tuple(t.id for t in node.inputs), tensor.id))
                continue
            if tensor.id in visited:
                continue
            visited.add(tensor.id)
            tape.tensors[tensor.id] = tensor
            if tensor._node is None:
                continue
            stack.append((tensor, True))
            for parent in tensor._node.inputs:
                if parent.requires_grad and parent.id not in visited:
                    stack.append((parent, False))
        return tape

    def replay(self, output: Tensor) -> Dict[int, np.ndarray]:
        """Run every backward rule in reverse order; returns accumulators by tensor id."""
        grads: Dict[int, np.ndarray] = {output.id: np.ones_like(output.data)}
        for entry in reversed(self.entries):
            upstream = grads.pop(entry.output_id, None)
            if upstream is None:
                continue
            node = self.tensors[entry.output_id]._node
            for parent, grad in zip(node.inputs, node.backward(upstream)):
                if grad is None or not parent.requires_grad:
                    continue
                if grad.shape != parent.shape:
                    raise ShapeError(f"{entry.op} backward produced {grad.shape} for input {parent.shape}")
                if not np.all(np.isfinite(grad)):
                    raise NonFiniteError(f"{entry.op} backward produced non-finite gradients")
                if parent.id in grads:
                    grads[parent.id] = grads[parent.id] + grad
                else:
                    grads[parent.id] = np.array(grad, dtype=parent.dtype, copy=True)
        return grads

    def __len__(self) -> int:
        return len(self.entries)


def backward(loss: Tensor) -> Dict[Tensor, np.ndarray]:
    """
    Reverse-mode gradient of a scalar loss.

    Returns a map from every requires-grad leaf reached to its gradient and
    stores the same array in leaf.grad (overwriting, never accumulating).
    """
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    tape = Tape.record(loss)
    accumulators = tape.replay(loss)

    gradients: Dict[Tensor, np.ndarray] = {}
    for tensor_id, tensor in tape.tensors.items():
        if tensor.is_leaf and tensor.requires_grad:
            grad = accumulators.get(tensor_id)
            if grad is None:
                grad = np.zeros_like(tensor.data)
            tensor.grad = grad
            gradients[tensor] = grad
    return gradients
