"""
Reverse-mode automatic differentiation on an append-only tape.

Every primitive (add, mul, div, exp, tanh, square, sum) appends one node
holding its value and the local partial derivative towards each operand.
Nodes are appended in evaluation order, so the tape is already topologically
sorted and the backward pass walks it once, last node first.

Values are numpy arrays so a single node carries all grid frequencies at
once. Complex quantities are pairs of real nodes multiplied through their
2x2 real form ``a + ib -> [[a, b], [-b, a]]``; no complex derivative
convention is involved.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np


Operand = Union['Node', np.ndarray, float]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    grad = np.asarray(grad)
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """
    Append-only record of primitive operations.
    """
    def __init__(self):
        self._values: List[np.ndarray] = []
        self._parents: List[Tuple[Tuple[int, np.ndarray], ...]] = []

    def __len__(self) -> int:
        return len(self._values)

    def variable(self, value) -> 'Node':
        """Add a leaf node."""
        return self.record(np.asarray(value, dtype=np.float64), ())

    def record(self, value: np.ndarray, parents: Sequence[Tuple[Operand, object]]) -> 'Node':
        """
        Append a node.

        Args:
            value: Forward value.
            parents: (operand, partial) pairs; operands that are not nodes
                are constants and are dropped.
        """
        links = tuple((p.index, np.asarray(partial, dtype=np.float64))
                      for p, partial in parents if isinstance(p, Node))
        self._values.append(np.asarray(value, dtype=np.float64))
        self._parents.append(links)
        return Node(self, len(self._values) - 1)

    def value(self, index: int) -> np.ndarray:
        return self._values[index]

    def backward(self, output: 'Node') -> List[Optional[np.ndarray]]:
        """
        Adjoints of a scalar output with respect to every node.

        Returns:
            List indexed by node position; None for nodes the output does
            not depend on.
        """
        if output.tape is not self:
            raise ValueError("Output node belongs to a different tape")
        if self._values[output.index].shape != ():
            raise ValueError("Backward pass needs a scalar output")

        adjoints: List[Optional[np.ndarray]] = [None] * (output.index + 1)
        adjoints[output.index] = np.array(1.0)
        for index in range(output.index, -1, -1):
            grad = adjoints[index]
            if grad is None:
                continue
            for parent, partial in self._parents[index]:
                contribution = _unbroadcast(grad * partial, self._values[parent].shape)
                if adjoints[parent] is None:
                    adjoints[parent] = contribution
                else:
                    adjoints[parent] = adjoints[parent] + contribution
        return adjoints

    def gradient(self, output: 'Node', wrt: Sequence['Node']) -> List[np.ndarray]:
        adjoints = self.backward(output)
        grads = []
        for node in wrt:
            grad = adjoints[node.index] if node.index < len(adjoints) else None
            grads.append(np.zeros_like(node.value) if grad is None else grad)
        return grads


@dataclass(frozen=True, eq=False)
class Node:
    """Handle to one tape entry."""
    tape: Tape
    index: int

    @property
    def value(self) -> np.ndarray:
        return self.tape.value(self.index)

    def __add__(self, other: Operand) -> 'Node':
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Operand) -> 'Node':
        return sub(self, other)

    def __rsub__(self, other: Operand) -> 'Node':
        return sub(other, self)

    def __mul__(self, other: Operand) -> 'Node':
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Operand) -> 'Node':
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> 'Node':
        return div(other, self)

    def __neg__(self) -> 'Node':
        return neg(self)


def value_of(x: Operand) -> np.ndarray:
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def _tape_of(*operands: Operand) -> Optional[Tape]:
    for operand in operands:
        if isinstance(operand, Node):
            return operand.tape
    return None


def add(a: Operand, b: Operand) -> Operand:
    tape = _tape_of(a, b)
    result = value_of(a) + value_of(b)
    if tape is None:
        return result
    return tape.record(result, ((a, 1.0), (b, 1.0)))


def sub(a: Operand, b: Operand) -> Operand:
    tape = _tape_of(a, b)
    result = value_of(a) - value_of(b)
    if tape is None:
        return result
    return tape.record(result, ((a, 1.0), (b, -1.0)))


def mul(a: Operand, b: Operand) -> Operand:
    tape = _tape_of(a, b)
    va, vb = value_of(a), value_of(b)
    if tape is None:
        return va * vb
    return tape.record(va * vb, ((a, vb), (b, va)))


def div(a: Operand, b: Operand) -> Operand:
    tape = _tape_of(a, b)
    va, vb = value_of(a), value_of(b)
    result = va / vb
    if tape is None:
        return result
    return tape.record(result, ((a, 1.0 / vb), (b, -result / vb)))


def neg(a: Operand) -> Operand:
    if not isinstance(a, Node):
        return -value_of(a)
    return a.tape.record(-a.value, ((a, -1.0),))


def square(a: Operand) -> Operand:
    va = value_of(a)
    if not isinstance(a, Node):
        return va * va
    return a.tape.record(va * va, ((a, 2.0 * va),))


def exp(a: Operand) -> Operand:
    result = np.exp(value_of(a))
    if not isinstance(a, Node):
        return result
    return a.tape.record(result, ((a, result),))


def tanh(a: Operand) -> Operand:
    result = np.tanh(value_of(a))
    if not isinstance(a, Node):
        return result
    return a.tape.record(result, ((a, 1.0 - result * result),))


def total(a: Operand) -> Operand:
    """Sum of all entries."""
    va = value_of(a)
    result = np.asarray(va.sum())
    if not isinstance(a, Node):
        return result
    return a.tape.record(result, ((a, np.ones_like(va)),))


class ComplexVar:
    """
    Complex quantity as a pair of real operands (re, im).
    """
    __slots__ = ('re', 'im')

    def __init__(self, re: Operand, im: Operand = 0.0):
        self.re = re
        self.im = im

    @classmethod
    def constant(cls, z: np.ndarray) -> 'ComplexVar':
        z = np.asarray(z, dtype=np.complex128)
        return cls(z.real.copy(), z.imag.copy())

    @property
    def value(self) -> np.ndarray:
        return value_of(self.re) + 1j * value_of(self.im)

    def __add__(self, other: 'ComplexVar') -> 'ComplexVar':
        return ComplexVar(add(self.re, other.re), add(self.im, other.im))

    def __sub__(self, other: 'ComplexVar') -> 'ComplexVar':
        return ComplexVar(sub(self.re, other.re), sub(self.im, other.im))

    def __neg__(self) -> 'ComplexVar':
        return ComplexVar(neg(self.re), neg(self.im))

    def __mul__(self, other: 'ComplexVar') -> 'ComplexVar':
        # First row of [[a, b], [-b, a]] @ [[c, d], [-d, c]]
        a, b, c, d = self.re, self.im, other.re, other.im
        return ComplexVar(sub(mul(a, c), mul(b, d)), add(mul(a, d), mul(b, c)))

    def scale(self, k: Operand) -> 'ComplexVar':
        """Multiply by a real operand."""
        return ComplexVar(mul(self.re, k), mul(self.im, k))

    def __truediv__(self, other: 'ComplexVar') -> 'ComplexVar':
        a, b, c, d = self.re, self.im, other.re, other.im
        denominator = add(square(c), square(d))
        re = div(add(mul(a, c), mul(b, d)), denominator)
        im = div(sub(mul(b, c), mul(a, d)), denominator)
        return ComplexVar(re, im)

    def abs2(self) -> Operand:
        """Squared magnitude |z|^2."""
        return add(square(self.re), square(self.im))
