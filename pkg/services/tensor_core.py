"""
Dense double-precision tensors with reverse-mode automatic differentiation.

A Graph is an append-only list of nodes. Inputs always precede the node that
consumes them, so walking the list backwards is a valid reverse topological
order and backward never needs a separate sort.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Sequence

import numpy as np

from models.errors import (
    ContractViolation,
    DimensionError,
    NumericError,
    UnknownNodeError,
    UnsupportedOperationError,
)

LEAF = "leaf"
STOP_GRADIENT = "stop-gradient"


class OpKind(str, Enum):
    ADD = "add"
    SUBTRACT = "subtract"
    MULTIPLY = "multiply"
    MATMUL = "matmul"
    EXP = "exp"
    LOG = "log"
    TANH = "tanh"
    RELU = "relu"
    SQUARE = "square"
    SQRT = "sqrt"
    SUM = "sum-reduce"
    MEAN = "mean-reduce"
    BROADCAST_ROW = "broadcast-row"
    GATHER_ROWS = "gather-rows"
    CONCAT = "concat-last-axis"


@dataclass(eq=False)
class Tensor:
    """Row-major float64 values with an optional accumulated gradient."""

    values: np.ndarray
    requires_grad: bool = False
    grad: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 0:
            values = values.reshape(1)
        if any(extent < 1 for extent in values.shape):
            raise DimensionError(f"tensor extents must be positive, got shape {values.shape}")
        values.setflags(write=False)
        self.values = values

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class Node:
    kind: str
    inputs: tuple[int, ...]
    output: Tensor
    attrs: dict[str, Any] = field(default_factory=dict)


# --- shape rules -------------------------------------------------------------

def _arity(kind: OpKind, shapes: list[tuple[int, ...]], expected: int) -> None:
    if len(shapes) != expected:
        raise DimensionError(f"{kind.value} takes {expected} input(s), got {len(shapes)}")


def _elementwise_binary(kind, shapes, attrs):
    _arity(kind, shapes, 2)
    if shapes[0] != shapes[1]:
        raise DimensionError(f"{kind.value} needs equal shapes, got {shapes[0]} and {shapes[1]}")
    return shapes[0]


def _unary(kind, shapes, attrs):
    _arity(kind, shapes, 1)
    return shapes[0]


def _matmul_shape(kind, shapes, attrs):
    _arity(kind, shapes, 2)
    a, b = shapes
    if len(a) != 2 or len(b) != 2:
        raise DimensionError(f"matmul needs two matrices, got shapes {a} and {b}")
    if a[1] != b[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a} @ {b}")
    return (a[0], b[1])


def _reduce_shape(kind, shapes, attrs):
    _arity(kind, shapes, 1)
    axis = attrs.get("axis")
    shape = shapes[0]
    if axis is None:
        return (1,)
    if axis not in range(len(shape)):
        raise DimensionError(f"{kind.value} axis {axis} out of range for shape {shape}")
    return tuple(1 if i == axis else extent for i, extent in enumerate(shape))


def _broadcast_row_shape(kind, shapes, attrs):
    _arity(kind, shapes, 1)
    shape = shapes[0]
    rows = attrs.get("rows")
    if not isinstance(rows, int) or rows < 1:
        raise ContractViolation(f"broadcast-row needs a positive 'rows' attribute, got {rows!r}")
    if len(shape) == 1:
        return (rows, shape[0])
    if len(shape) == 2 and shape[0] == 1:
        return (rows, shape[1])
    raise DimensionError(f"broadcast-row needs a single row, got shape {shape}")


def _gather_rows_shape(kind, shapes, attrs):
    _arity(kind, shapes, 1)
    shape = shapes[0]
    indices = attrs.get("indices")
    if len(shape) != 2:
        raise DimensionError(f"gather-rows needs a matrix, got shape {shape}")
    if not indices:
        raise ContractViolation("gather-rows needs at least one row index")
    bad = [i for i in indices if not 0 <= i < shape[0]]
    if bad:
        raise DimensionError(f"gather-rows indices {bad} out of range for {shape[0]} rows")
    return (len(indices), shape[1])


def _concat_shape(kind, shapes, attrs):
    if not shapes:
        raise DimensionError("concat-last-axis needs at least one input")
    leading = shapes[0][:-1]
    for shape in shapes[1:]:
        if shape[:-1] != leading:
            raise DimensionError(f"concat-last-axis leading dimensions differ: {shapes}")
    return leading + (sum(shape[-1] for shape in shapes),)


# --- forward / backward rules -----------------------------------------------

def _reduce_backward(grad, value, attrs, divisor):
    axis = attrs.get("axis")
    if axis is None:
        grad = grad.reshape((1,) * value.ndim)
    return np.broadcast_to(grad / divisor, value.shape).copy()


def _sqrt_backward(grad, value, out):
    positive = out > 0
    safe = np.where(positive, out, 1.0)
    return np.where(positive, 0.5 * grad / safe, 0.0)


def _gather_backward(grad, value, indices):
    accumulated = np.zeros_like(value)
    np.add.at(accumulated, list(indices), grad)
    return accumulated


def _concat_backward(grad, values):
    widths = np.cumsum([v.shape[-1] for v in values])[:-1]
    return np.split(grad, widths, axis=-1)


@dataclass(frozen=True)
class OpRule:
    shape: Callable[..., tuple[int, ...]]
    forward: Callable[[list[np.ndarray], dict], np.ndarray]
    backward: Callable[[np.ndarray, list[np.ndarray], np.ndarray, dict], list[np.ndarray]]
    attrs: tuple[str, ...] = ()


OP_RULES: dict[OpKind, OpRule] = {
    OpKind.ADD: OpRule(
        _elementwise_binary,
        lambda v, a: v[0] + v[1],
        lambda g, v, out, a: [g, g],
    ),
    OpKind.SUBTRACT: OpRule(
        _elementwise_binary,
        lambda v, a: v[0] - v[1],
        lambda g, v, out, a: [g, -g],
    ),
    OpKind.MULTIPLY: OpRule(
        _elementwise_binary,
        lambda v, a: v[0] * v[1],
        lambda g, v, out, a: [g * v[1], g * v[0]],
    ),
    OpKind.MATMUL: OpRule(
        _matmul_shape,
        lambda v, a: v[0] @ v[1],
        lambda g, v, out, a: [g @ v[1].T, v[0].T @ g],
    ),
    OpKind.EXP: OpRule(
        _unary,
        lambda v, a: np.exp(v[0]),
        lambda g, v, out, a: [g * out],
    ),
    OpKind.LOG: OpRule(
        _unary,
        lambda v, a: np.log(v[0]),
        lambda g, v, out, a: [g / v[0]],
    ),
    OpKind.TANH: OpRule(
        _unary,
        lambda v, a: np.tanh(v[0]),
        lambda g, v, out, a: [g * (1.0 - out * out)],
    ),
    # subgradient at 0 is 0
    OpKind.RELU: OpRule(
        _unary,
        lambda v, a: np.where(v[0] > 0, v[0], 0.0),
        lambda g, v, out, a: [np.where(v[0] > 0, g, 0.0)],
    ),
    OpKind.SQUARE: OpRule(
        _unary,
        lambda v, a: v[0] * v[0],
        lambda g, v, out, a: [2.0 * v[0] * g],
    ),
    OpKind.SQRT: OpRule(
        _unary,
        lambda v, a: np.sqrt(v[0]),
        lambda g, v, out, a: [_sqrt_backward(g, v[0], out)],
    ),
    OpKind.SUM: OpRule(
        _reduce_shape,
        lambda v, a: (np.array([v[0].sum()]) if a.get("axis") is None
                      else v[0].sum(axis=a["axis"], keepdims=True)),
        lambda g, v, out, a: [_reduce_backward(g, v[0], a, 1.0)],
        attrs=("axis",),
    ),
    OpKind.MEAN: OpRule(
        _reduce_shape,
        lambda v, a: (np.array([v[0].mean()]) if a.get("axis") is None
                      else v[0].mean(axis=a["axis"], keepdims=True)),
        lambda g, v, out, a: [_reduce_backward(
            g, v[0], a, float(v[0].size if a.get("axis") is None else v[0].shape[a["axis"]]))],
        attrs=("axis",),
    ),
    OpKind.BROADCAST_ROW: OpRule(
        _broadcast_row_shape,
        lambda v, a: np.broadcast_to(v[0].reshape(1, -1), (a["rows"], v[0].shape[-1])).copy(),
        lambda g, v, out, a: [g.sum(axis=0).reshape(v[0].shape)],
        attrs=("rows",),
    ),
    OpKind.GATHER_ROWS: OpRule(
        _gather_rows_shape,
        lambda v, a: v[0][list(a["indices"])],
        lambda g, v, out, a: [_gather_backward(g, v[0], a["indices"])],
        attrs=("indices",),
    ),
    OpKind.CONCAT: OpRule(
        _concat_shape,
        lambda v, a: np.concatenate(v, axis=-1),
        lambda g, v, out, a: _concat_backward(g, v),
    ),
}


def _as_kind(kind: OpKind | str) -> OpKind:
    try:
        return OpKind(kind)
    except ValueError:
        raise UnsupportedOperationError(f"unsupported operation kind: {kind!r}") from None


class Graph:
    """
    Append-only computation graph.

    `pinned_stop_gradients`, when given, replaces the forward value of the k-th
    stop_gradient node with the k-th pinned array. grad_check uses it to
    difference a function with its stop-gradient outputs held constant.
    """

    def __init__(self, pinned_stop_gradients: Sequence[np.ndarray] | None = None) -> None:
        self._nodes: list[Node] = []
        self._tracks: list[bool] = []
        self._stop_gradient_ids: list[int] = []
        self._pinned = None if pinned_stop_gradients is None else list(pinned_stop_gradients)

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def stop_gradient_ids(self) -> list[int]:
        return list(self._stop_gradient_ids)

    def node(self, node_id: int) -> Node:
        if not isinstance(node_id, (int, np.integer)) or not 0 <= node_id < len(self._nodes):
            raise UnknownNodeError(f"no node with id {node_id!r} in a graph of {len(self._nodes)} nodes")
        return self._nodes[node_id]

    def value(self, node_id: int) -> np.ndarray:
        return self.node(node_id).output.values

    def shape(self, node_id: int) -> tuple[int, ...]:
        return self.node(node_id).output.shape

    def leaves(self) -> list[int]:
        """Ids of all leaves that require gradients."""
        return [i for i, n in enumerate(self._nodes) if n.kind == LEAF and n.output.requires_grad]

    def _append(self, node: Node, tracks: bool) -> int:
        self._nodes.append(node)
        self._tracks.append(tracks)
        return len(self._nodes) - 1

    def leaf(self, values, requires_grad: bool = True, name: str | None = None) -> int:
        tensor = Tensor(values, requires_grad=requires_grad)
        attrs = {"name": name} if name else {}
        return self._append(Node(LEAF, (), tensor, attrs), requires_grad)

    def constant(self, values) -> int:
        return self.leaf(values, requires_grad=False)

    def apply(self, kind: OpKind | str, inputs: Sequence[int], **attrs) -> int:
        op = _as_kind(kind)
        rule = OP_RULES[op]
        unknown = set(attrs) - set(rule.attrs)
        if unknown:
            raise ContractViolation(f"{op.value} does not accept attributes {sorted(unknown)}")
        if "indices" in attrs:
            attrs["indices"] = tuple(int(i) for i in attrs["indices"])
        nodes = [self.node(i) for i in inputs]
        shapes = [n.output.shape for n in nodes]
        expected = rule.shape(op, shapes, attrs)
        out = rule.forward([n.output.values for n in nodes], attrs)
        if out.shape != expected:
            raise DimensionError(f"{op.value} produced shape {out.shape}, expected {expected}")
        tracks = any(self._tracks[i] for i in inputs)
        return self._append(Node(op.value, tuple(int(i) for i in inputs), Tensor(out), attrs), tracks)

    def stop_gradient(self, x: int) -> int:
        source = self.node(x)
        values = source.output.values
        if self._pinned is not None:
            position = len(self._stop_gradient_ids)
            if position >= len(self._pinned):
                raise ContractViolation("more stop_gradient nodes than pinned values")
            values = np.asarray(self._pinned[position], dtype=np.float64)
            if values.shape != source.output.shape:
                raise DimensionError(
                    f"pinned value shape {values.shape} differs from {source.output.shape}")
        node_id = self._append(Node(STOP_GRADIENT, (int(x),), Tensor(values)), False)
        self._stop_gradient_ids.append(node_id)
        return node_id

    def backward(self, loss: int) -> dict[int, np.ndarray]:
        """
        Gradients of a scalar node with respect to every gradient-requiring leaf.

        Contributions from several paths are summed. Leaf tensors also
        accumulate the result in their `grad` field until the caller resets it.
        """
        loss_node = self.node(loss)
        if loss_node.output.size != 1:
            raise ContractViolation(
                f"backward needs a scalar loss, node {loss} has shape {loss_node.output.shape}")

        pending: dict[int, np.ndarray] = {loss: np.ones(loss_node.output.shape)}
        result: dict[int, np.ndarray] = {}
        for node_id in range(loss, -1, -1):
            grad = pending.pop(node_id, None)
            if grad is None or not self._tracks[node_id]:
                continue
            node = self._nodes[node_id]
            if node.kind == LEAF:
                result[node_id] = grad
                continue
            rule = OP_RULES[OpKind(node.kind)]
            values = [self._nodes[i].output.values for i in node.inputs]
            input_grads = rule.backward(grad, values, node.output.values, node.attrs)
            for input_id, input_grad in zip(node.inputs, input_grads):
                if not self._tracks[input_id]:
                    continue
                if input_id in pending:
                    pending[input_id] = pending[input_id] + input_grad
                else:
                    pending[input_id] = np.array(input_grad, dtype=np.float64)

        for leaf_id in self.leaves():
            tensor = self._nodes[leaf_id].output
            grad = result.setdefault(leaf_id, np.zeros(tensor.shape))
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
        return result

    def ancestors(self, node_id: int) -> set[int]:
        seen: set[int] = set()
        stack = [node_id]
        while stack:
            current = stack.pop()
            for parent in self.node(current).inputs:
                if parent not in seen:
                    seen.add(parent)
                    stack.append(parent)
        return seen

    # --- convenience wrappers -------------------------------------------------

    def add(self, a: int, b: int) -> int:
        return self.apply(OpKind.ADD, [a, b])

    def subtract(self, a: int, b: int) -> int:
        return self.apply(OpKind.SUBTRACT, [a, b])

    def multiply(self, a: int, b: int) -> int:
        return self.apply(OpKind.MULTIPLY, [a, b])

    def matmul(self, a: int, b: int) -> int:
        return self.apply(OpKind.MATMUL, [a, b])

    def exp(self, x: int) -> int:
        return self.apply(OpKind.EXP, [x])

    def log(self, x: int) -> int:
        return self.apply(OpKind.LOG, [x])

    def tanh(self, x: int) -> int:
        return self.apply(OpKind.TANH, [x])

    def relu(self, x: int) -> int:
        return self.apply(OpKind.RELU, [x])

    def square(self, x: int) -> int:
        return self.apply(OpKind.SQUARE, [x])

    def sqrt(self, x: int) -> int:
        return self.apply(OpKind.SQRT, [x])

    def sum(self, x: int, axis: int | None = None) -> int:
        return self.apply(OpKind.SUM, [x], axis=axis)

    def mean(self, x: int, axis: int | None = None) -> int:
        return self.apply(OpKind.MEAN, [x], axis=axis)

    def broadcast_row(self, x: int, rows: int) -> int:
        return self.apply(OpKind.BROADCAST_ROW, [x], rows=rows)

    def gather_rows(self, x: int, indices: Sequence[int]) -> int:
        return self.apply(OpKind.GATHER_ROWS, [x], indices=indices)

    def concat(self, inputs: Sequence[int]) -> int:
        return self.apply(OpKind.CONCAT, list(inputs))

    def full_like(self, x: int, fill: float) -> int:
        return self.constant(np.full(self.shape(x), fill, dtype=np.float64))

    def scale(self, x: int, factor: float) -> int:
        return self.multiply(x, self.full_like(x, factor))

    def negate(self, x: int) -> int:
        return self.subtract(self.full_like(x, 0.0), x)

    def dense(self, x: int, weight: int, bias: int) -> int:
        """x @ weight + bias, with the bias row broadcast over x's rows."""
        product = self.matmul(x, weight)
        return self.add(product, self.broadcast_row(bias, self.shape(product)[0]))

    def stack_rows(self, rows: Sequence[int]) -> int:
        """Stack single-row nodes into one matrix using one-hot column products."""
        if not rows:
            raise ContractViolation("stack_rows needs at least one row")
        count = len(rows)
        stacked = None
        for position, row in enumerate(rows):
            row_matrix = self.broadcast_row(row, 1)
            selector = np.zeros((count, 1))
            selector[position, 0] = 1.0
            placed = self.matmul(self.constant(selector), row_matrix)
            stacked = placed if stacked is None else self.add(stacked, placed)
        return stacked


@dataclass(frozen=True)
class GradCheckResult:
    max_relative_error: float
    checked: int
    excluded: frozenset[tuple[int, int]]


def grad_check(
    f: Callable[[Graph, list[int]], int],
    point: Sequence,
    h: float = 1e-6,
    pin_stop_gradients: bool = False,
) -> GradCheckResult:
    """
    Compare backward() against central differences of f.

    f receives a fresh graph and the ids of one leaf per entry of `point` and
    returns the id of a scalar node. The error per coordinate is
    |analytic - numeric| / max(1, |analytic|).

    Without pinning, every coordinate of a leaf whose value reaches a
    stop_gradient input is excluded and reported, since finite differences see
    through the stop. With pinning, stop_gradient outputs are frozen at their
    base values while differencing and every coordinate is checked.
    """
    if h <= 0:
        raise ContractViolation(f"finite-difference step must be positive, got {h}")
    base_values = [np.array(p, dtype=np.float64) for p in point]

    graph = Graph()
    leaf_ids = [graph.leaf(v) for v in base_values]
    loss = f(graph, leaf_ids)
    analytic = graph.backward(loss)

    pinned = None
    blocked_leaves: set[int] = set()
    if pin_stop_gradients:
        pinned = [graph.value(i) for i in graph.stop_gradient_ids]
    else:
        for sg_id in graph.stop_gradient_ids:
            reaching = graph.ancestors(sg_id)
            blocked_leaves.update(pos for pos, leaf in enumerate(leaf_ids) if leaf in reaching)

    def evaluate(values: list[np.ndarray], coordinate: tuple[int, int]) -> float:
        probe = Graph(pinned_stop_gradients=pinned)
        ids = [probe.leaf(v) for v in values]
        out = probe.value(f(probe, ids))
        if not np.all(np.isfinite(out)):
            raise NumericError(f"non-finite evaluation at leaf {coordinate[0]}, "
                               f"coordinate {coordinate[1]}", coordinate)
        return float(out.reshape(-1)[0])

    worst = 0.0
    checked = 0
    excluded: set[tuple[int, int]] = set()
    for position, values in enumerate(base_values):
        grad = analytic[leaf_ids[position]].reshape(-1)
        for coord in range(values.size):
            if position in blocked_leaves:
                excluded.add((position, coord))
                continue
            shifted = [v.copy() for v in base_values]
            flat = shifted[position].reshape(-1)
            flat[coord] = values.reshape(-1)[coord] + h
            plus = evaluate(shifted, (position, coord))
            flat[coord] = values.reshape(-1)[coord] - h
            minus = evaluate(shifted, (position, coord))
            numeric = (plus - minus) / (2.0 * h)
            error = abs(grad[coord] - numeric) / max(1.0, abs(grad[coord]))
            worst = max(worst, error)
            checked += 1
    return GradCheckResult(worst, checked, frozenset(excluded))
