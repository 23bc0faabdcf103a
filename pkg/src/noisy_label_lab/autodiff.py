"""Dense float64 tensors with reverse-mode automatic differentiation.

The op set is exactly what residual label cleaning needs: affine layers,
sigmoid/tanh, elementwise arithmetic, concatenation, clipping to [0, 1],
gradient stopping, absolute value, floor-clamped log, and sum reduction.

Graphs are define-by-run. Inputs always exist before the node that consumes
them, so creation order is a topological order; `backward` walks reachable
nodes in descending creation order, which fixes the gradient accumulation
order by construction and makes results bitwise reproducible. Tensor values
are frozen after construction. A graph lives on one thread; independent
graphs may run on separate threads (the shared id counter only needs to be
monotone, which `itertools.count` guarantees under the GIL).
"""

from __future__ import annotations

import itertools
import numbers
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, UsageError

_NODE_IDS = itertools.count()

# Nearest representable doubles inside (0, 1); sigmoid output is clamped
# here so saturated values never collapse onto the interval ends.
_OPEN_LO = np.nextafter(0.0, 1.0)
_OPEN_HI = np.nextafter(1.0, 0.0)

LOG_FLOOR = 1e-12


class Tensor:
    """Graph node holding a dense float64 array plus backward bookkeeping.

    `data` is read-only after construction. `grad` is (re)populated by each
    `backward` call that reaches the node.
    """

    __slots__ = ("data", "grad", "op", "parents", "stop_grad", "_bwd", "_nid")

    def __init__(self, values, op="leaf", parents=(), bwd=None, stop_grad=False):
        if op == "leaf":
            data = np.array(values, dtype=np.float64)
        else:
            data = np.asarray(values, dtype=np.float64)
        data.setflags(write=False)
        self.data = data
        self.grad = None
        self.op = op
        self.parents = tuple(parents)
        self.stop_grad = stop_grad
        self._bwd: Callable[[np.ndarray], None] | None = bwd
        self._nid = next(_NODE_IDS)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    # -- elementwise arithmetic ------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            _same_shape("add", self, other)
            a, b = self, other

            def bwd(g):
                a.grad += g
                b.grad += g

            return Tensor(self.data + other.data, op="add", parents=(self, other), bwd=bwd)
        c = _scalar("add", other)
        a = self

        def bwd(g):
            a.grad += g

        return Tensor(self.data + c, op="add_const", parents=(self,), bwd=bwd)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            _same_shape("sub", self, other)
            a, b = self, other

            def bwd(g):
                a.grad += g
                b.grad -= g

            return Tensor(self.data - other.data, op="sub", parents=(self, other), bwd=bwd)
        return self.__add__(-_scalar("sub", other))

    def __rsub__(self, other):
        c = _scalar("rsub", other)
        a = self

        def bwd(g):
            a.grad -= g

        return Tensor(c - self.data, op="rsub_const", parents=(self,), bwd=bwd)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            _same_shape("mul", self, other)
            a, b = self, other

            def bwd(g):
                a.grad += g * b.data
                b.grad += g * a.data

            return Tensor(self.data * other.data, op="mul", parents=(self, other), bwd=bwd)
        c = _scalar("mul", other)
        a = self

        def bwd(g):
            a.grad += g * c

        return Tensor(self.data * c, op="mul_const", parents=(self,), bwd=bwd)

    __rmul__ = __mul__

    def __neg__(self):
        a = self

        def bwd(g):
            a.grad -= g

        return Tensor(-self.data, op="neg", parents=(self,), bwd=bwd)

    def __abs__(self):
        a = self
        sign = np.sign(self.data)  # sign(0) == 0: subgradient 0 at the kink

        def bwd(g):
            a.grad += g * sign

        return Tensor(np.abs(self.data), op="abs", parents=(self,), bwd=bwd)

    def sum(self) -> Tensor:
        a = self

        def bwd(g):
            a.grad += g

        return Tensor(self.data.sum(), op="sum", parents=(self,), bwd=bwd)


def _scalar(op: str, value) -> float:
    if isinstance(value, numbers.Real):
        return float(value)
    raise UsageError(f"{op}: expected a Tensor or real scalar, got {type(value).__name__}")


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ConfigurationError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias for a 2-d batch, with the bias broadcast over rows."""
    xd, wd, bd = x.data, weight.data, bias.data
    if xd.ndim != 2:
        raise ConfigurationError(f"affine: input must be 2-d, got shape {xd.shape}")
    if wd.ndim != 2:
        raise ConfigurationError(f"affine: weight must be 2-d, got shape {wd.shape}")
    if bd.ndim != 1:
        raise ConfigurationError(f"affine: bias must be 1-d, got shape {bd.shape}")
    if xd.shape[1] != wd.shape[0]:
        raise ConfigurationError(
            f"affine: input has {xd.shape[1]} columns but weight has {wd.shape[0]} rows"
        )
    if wd.shape[1] != bd.shape[0]:
        raise ConfigurationError(
            f"affine: weight has {wd.shape[1]} columns but bias has {bd.shape[0]} entries"
        )

    def bwd(g):
        x.grad += g @ wd.T
        weight.grad += xd.T @ g
        bias.grad += g.sum(axis=0)

    return Tensor(xd @ wd + bd, op="affine", parents=(x, weight, bias), bwd=bwd)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, output clamped strictly inside (0, 1)."""
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))
    out = np.clip(out, _OPEN_LO, _OPEN_HI)

    def bwd(g):
        x.grad += g * out * (1.0 - out)

    return Tensor(out, op="sigmoid", parents=(x,), bwd=bwd)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bwd(g):
        x.grad += g * (1.0 - out * out)

    return Tensor(out, op="tanh", parents=(x,), bwd=bwd)


def clip01(x: Tensor) -> Tensor:
    """Clamp to [0, 1]; gradient passes on the closed interval, 0 outside.

    The boundary points carry gradient 1. Residual corrections start at
    exactly 0 on top of binary labels, so a mask open at 0 and 1 would
    zero every gradient into that branch and freeze it permanently.
    """
    inside = (x.data >= 0.0) & (x.data <= 1.0)

    def bwd(g):
        x.grad += g * inside

    return Tensor(np.clip(x.data, 0.0, 1.0), op="clip01", parents=(x,), bwd=bwd)


def stop_gradient(x: Tensor) -> Tensor:
    """Forward identity; backward propagates nothing into `x`."""
    return Tensor(x.data, op="stop_gradient", parents=(x,), stop_grad=True)


def log(x: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log of max(x, floor); gradient is 0 at or below the floor."""
    clamped = np.maximum(x.data, floor)
    above = x.data > floor

    def bwd(g):
        x.grad += g * above / clamped

    return Tensor(np.log(clamped), op="log", parents=(x,), bwd=bwd)


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise UsageError("concat: needs at least one tensor")
    nd = parts[0].data.ndim
    for p in parts[1:]:
        if p.data.ndim != nd:
            raise ConfigurationError(
                f"concat: rank mismatch, {nd}-d vs {p.data.ndim}-d"
            )
    if not -nd <= axis < nd:
        raise UsageError(f"concat: axis {axis} out of range for {nd}-d tensors")
    ax = axis % nd
    for d in range(nd):
        if d == ax:
            continue
        sizes = {p.data.shape[d] for p in parts}
        if len(sizes) > 1:
            raise ConfigurationError(f"concat: sizes along axis {d} differ: {sorted(sizes)}")
    offsets = np.cumsum([p.data.shape[ax] for p in parts])[:-1]

    def bwd(g):
        for p, piece in zip(parts, np.split(g, offsets, axis=ax)):
            p.grad += piece

    return Tensor(np.concatenate([p.data for p in parts], axis=ax), op="concat", parents=parts, bwd=bwd)


def backward(root: Tensor) -> dict[Tensor, np.ndarray]:
    """Propagate from a scalar root; returns {node: gradient} for reachable nodes.

    Each call reinitializes the gradients of every node it reaches, so
    repeated calls (even over different roots sharing leaves) never mix
    accumulations. Traversal does not descend past stop-gradient nodes.
    """
    if root.data.size != 1:
        raise UsageError(f"backward: root must be scalar-valued, got shape {root.shape}")
    nodes: dict[int, Tensor] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node._nid in nodes:
            continue
        nodes[node._nid] = node
        if not node.stop_grad:
            stack.extend(node.parents)
    order = [nodes[nid] for nid in sorted(nodes, reverse=True)]
    for node in order:
        node.grad = np.zeros_like(node.data)
    root.grad = np.ones_like(root.data)
    for node in order:
        if node.stop_grad or node._bwd is None:
            continue
        node._bwd(node.grad)
    return {node: node.grad for node in order}
