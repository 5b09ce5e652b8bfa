"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tape`` records every operation as a ``Node`` in creation order, which is
already a topological order of the computation graph.  Calling
``Tape.backward`` on a scalar node walks that list in reverse and accumulates
vector-Jacobian products into each node's ``grad`` buffer.

The tape is dynamic: it is rebuilt for every forward pass, so recurrent
networks can unroll to whatever sequence length the data dictates.  Node
values are locked (read-only) once created; parameters are updated between
tapes, never inside one.  A tape is single-threaded, but distinct tapes
share no mutable state and may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AutodiffError(ValueError):
    """Base class for graph construction errors."""


class ShapeError(AutodiffError):
    """Operand shapes are incompatible with the requested op."""


class DomainError(AutodiffError):
    """Operand values fall outside the op's domain (e.g. log of x <= 0)."""


def _as_value(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def _lock(arr: np.ndarray) -> np.ndarray:
    if arr.flags.writeable:
        arr.flags.writeable = False
    return arr


class Node:
    """One entry of the tape: an op, its inputs, its value and its gradient."""

    __slots__ = ("id", "op", "inputs", "value", "grad", "_vjp")

    def __init__(self, nid, op, inputs, value, vjp=None):
        self.id = nid
        self.op = op
        self.inputs = inputs
        self.value = value
        self.grad = np.zeros(value.shape)
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(id={self.id}, op={self.op!r}, shape={self.value.shape})"


def _scalar_pair(op: str, a: Node, b: Node):
    """Validate elementwise operands: equal shapes, or one side scalar-sized."""
    if a.value.shape == b.value.shape:
        return None
    if b.value.size == 1:
        return "b"
    if a.value.size == 1:
        return "a"
    raise ShapeError(f"{op}: shapes {a.value.shape} and {b.value.shape} "
                     "differ and neither operand is a scalar")


class Tape:
    """Ordered record of graph nodes; owns forward ops and the backward pass."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._watched: dict[int, Node] = {}
        self._ran_backward = False

    # ------------------------------------------------------------------ leaves

    def leaf(self, values) -> Node:
        """Append a constant/input node holding a copy of ``values``."""
        return self._append("leaf", (), _as_value(values), None)

    def watch(self, array: np.ndarray) -> Node:
        """Leaf node for a parameter array, memoized per tape.

        Repeated calls with the same array object return the same node, so a
        layer applied several times in one forward pass accumulates all its
        gradient contributions in a single place.
        """
        node = self._watched.get(id(array))
        if node is None:
            node = self.leaf(array)
            self._watched[id(array)] = node
        return node

    def adopt(self, array: np.ndarray, node: Node) -> None:
        """Register ``node`` as the watched leaf for ``array``.

        Lets a graph builder substitute externally created leaves (e.g.
        perturbed copies during gradient checking) for a model's parameters.
        """
        self._watched[id(array)] = node

    def grad_of(self, array: np.ndarray) -> np.ndarray:
        """Gradient accumulated for a watched parameter array."""
        return self._watched[id(array)].grad

    def _append(self, op, inputs, value, vjp) -> Node:
        node = Node(len(self.nodes), op, inputs, _lock(value), vjp)
        self.nodes.append(node)
        return node

    # ------------------------------------------------------------- elementwise

    def add(self, a: Node, b: Node) -> Node:
        which = _scalar_pair("add", a, b)
        out_val = a.value + b.value

        def vjp(g):
            if which == "a":
                a.grad += g.sum()
                b.grad += g
            elif which == "b":
                a.grad += g
                b.grad += g.sum()
            else:
                a.grad += g
                b.grad += g
        return self._append("add", (a, b), out_val, vjp)

    def sub(self, a: Node, b: Node) -> Node:
        which = _scalar_pair("sub", a, b)
        out_val = a.value - b.value

        def vjp(g):
            if which == "a":
                a.grad += g.sum()
                b.grad -= g
            elif which == "b":
                a.grad += g
                b.grad -= g.sum()
            else:
                a.grad += g
                b.grad -= g
        return self._append("sub", (a, b), out_val, vjp)

    def mul(self, a: Node, b: Node) -> Node:
        """Hadamard product; one operand may be scalar-sized."""
        which = _scalar_pair("mul", a, b)
        out_val = a.value * b.value

        def vjp(g):
            if which == "a":
                a.grad += (g * b.value).sum()
                b.grad += g * a.value
            elif which == "b":
                a.grad += g * b.value
                b.grad += (g * a.value).sum()
            else:
                a.grad += g * b.value
                b.grad += g * a.value
        return self._append("mul", (a, b), out_val, vjp)

    def scale(self, a: Node, k: float) -> Node:
        """Multiply by a plain Python constant (not a graph input)."""
        k = float(k)

        def vjp(g):
            a.grad += g * k
        return self._append("scale", (a,), a.value * k, vjp)

    def add_rows(self, m: Node, v: Node) -> Node:
        """Add a vector to every row of a matrix (explicit bias broadcast)."""
        if m.value.ndim != 2 or v.value.ndim != 1 or m.value.shape[1] != v.value.shape[0]:
            raise ShapeError(f"add_rows: shapes {m.value.shape} and {v.value.shape}")
        out_val = m.value + v.value

        def vjp(g):
            m.grad += g
            v.grad += g.sum(axis=0)
        return self._append("add_rows", (m, v), out_val, vjp)

    # --------------------------------------------------------------- nonlinear

    def tanh(self, a: Node) -> Node:
        out_val = np.tanh(a.value)

        def vjp(g):
            a.grad += g * (1.0 - out_val * out_val)
        return self._append("tanh", (a,), out_val, vjp)

    def sigmoid(self, a: Node) -> Node:
        # exp(-|x|) never overflows; both branches of the identity stay stable
        t = np.exp(-np.abs(a.value))
        out_val = np.where(a.value >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))

        def vjp(g):
            a.grad += g * out_val * (1.0 - out_val)
        return self._append("sigmoid", (a,), out_val, vjp)

    def exp(self, a: Node) -> Node:
        out_val = np.exp(a.value)

        def vjp(g):
            a.grad += g * out_val
        return self._append("exp", (a,), out_val, vjp)

    def log(self, a: Node) -> Node:
        if np.any(a.value <= 0.0):
            raise DomainError(f"log: input has values <= 0 (min {a.value.min()})")
        out_val = np.log(a.value)

        def vjp(g):
            a.grad += g / a.value
        return self._append("log", (a,), out_val, vjp)

    def square(self, a: Node) -> Node:
        out_val = a.value * a.value

        def vjp(g):
            a.grad += 2.0 * g * a.value
        return self._append("square", (a,), out_val, vjp)

    # ------------------------------------------------------------------ linear

    def matmul(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.ndim not in (1, 2) or bv.ndim not in (1, 2):
            raise ShapeError(f"matmul: only 1-D/2-D operands, got {av.shape} @ {bv.shape}")
        inner_a = av.shape[-1]
        inner_b = bv.shape[0]
        if inner_a != inner_b:
            raise ShapeError(f"matmul: inner dims differ for {av.shape} @ {bv.shape}")
        out_val = av @ bv

        def vjp(g):
            if av.ndim == 2 and bv.ndim == 2:
                a.grad += g @ bv.T
                b.grad += av.T @ g
            elif av.ndim == 2 and bv.ndim == 1:
                a.grad += np.outer(g, bv)
                b.grad += av.T @ g
            elif av.ndim == 1 and bv.ndim == 2:
                a.grad += bv @ g
                b.grad += np.outer(av, g)
            else:
                a.grad += g * bv
                b.grad += g * av
        return self._append("matmul", (a, b), out_val, vjp)

    def transpose(self, a: Node) -> Node:
        if a.value.ndim != 2:
            raise ShapeError(f"transpose: expected matrix, got shape {a.value.shape}")

        def vjp(g):
            a.grad += g.T
        return self._append("transpose", (a,), a.value.T, vjp)

    # ------------------------------------------------------------- reductions

    def sum(self, a: Node) -> Node:
        out_val = np.asarray(np.sum(a.value))

        def vjp(g):
            a.grad += g
        return self._append("sum", (a,), out_val, vjp)

    def mean(self, a: Node) -> Node:
        n = a.value.size
        out_val = np.asarray(np.mean(a.value))

        def vjp(g):
            a.grad += g / n
        return self._append("mean", (a,), out_val, vjp)

    # ---------------------------------------------------------- restructuring

    def concat(self, a: Node, b: Node, axis: int = 0) -> Node:
        av, bv = a.value, b.value
        if av.ndim != bv.ndim or axis not in (0, 1) or axis >= av.ndim:
            raise ShapeError(f"concat: shapes {av.shape}, {bv.shape} along axis {axis}")
        out_val = np.concatenate([av, bv], axis=axis)
        split = av.shape[axis]

        def vjp(g):
            if axis == 0:
                a.grad += g[:split]
                b.grad += g[split:]
            else:
                a.grad += g[:, :split]
                b.grad += g[:, split:]
        return self._append("concat", (a, b), out_val, vjp)

    def slice(self, a: Node, start: int, stop: int, axis: int = 0) -> Node:
        av = a.value
        if axis not in (0, 1) or axis >= av.ndim:
            raise ShapeError(f"slice: axis {axis} invalid for shape {av.shape}")
        if not (0 <= start < stop <= av.shape[axis]):
            raise ShapeError(f"slice: range [{start}, {stop}) invalid for shape {av.shape}")
        out_val = av[start:stop] if axis == 0 else av[:, start:stop]

        def vjp(g):
            if axis == 0:
                a.grad[start:stop] += g
            else:
                a.grad[:, start:stop] += g
        return self._append("slice", (a,), out_val, vjp)

    # ---------------------------------------------------------------- backward

    def backward(self, root: Node) -> None:
        """Accumulate d(root)/d(node) into every node's grad buffer.

        Grads are reset first, so calling backward twice does not double
        count.  The root must be scalar-sized.
        """
        if root.value.size != 1:
            raise ShapeError(f"backward: root must be scalar, got shape {root.value.shape}")
        if self._ran_backward:  # grads are zero-initialized; only reruns must reset
            for node in self.nodes:
                node.grad[...] = 0.0
        self._ran_backward = True
        root.grad[...] = 1.0
        for node in reversed(self.nodes[: root.id + 1]):
            if node._vjp is not None and node.grad.any():
                node._vjp(node.grad)


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients against central differences."""

    max_rel_error: float
    passed: bool
    tol: float
    h: float
    worst: tuple  # (param index, flat index, analytic, numeric)

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        p, j, a, n = self.worst
        return (f"gradient check {status}: max rel err {self.max_rel_error:.3e} "
                f"(tol {self.tol:.1e}) at param {p}[{j}] analytic={a:.6e} numeric={n:.6e}")


def gradient_check(build, params, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of a scalar graph against finite differences.

    ``build(tape, param_nodes)`` must construct the graph on the given tape
    from leaf nodes for ``params`` (a list of float64 arrays) and return the
    scalar root node.  It must be deterministic in the parameter values.

    Central differences (f(p+h) - f(p-h)) / 2h are evaluated componentwise;
    the relative error uses a 1e-6 absolute floor so that exactly-zero
    gradients do not divide by zero.
    """
    if h <= 0:
        raise ValueError("gradient_check: h must be positive")
    params = [np.array(p, dtype=np.float64) for p in params]

    def evaluate(values):
        tape = Tape()
        nodes = [tape.leaf(v) for v in values]
        root = build(tape, nodes)
        return tape, nodes, root

    tape, nodes, root = evaluate(params)
    tape.backward(root)
    analytic = [n.grad.copy() for n in nodes]

    worst = (0, 0, 0.0, 0.0)
    max_rel = 0.0
    for pi, p in enumerate(params):
        flat = p.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            f_plus = float(evaluate(params)[2].value)
            flat[j] = orig - h
            f_minus = float(evaluate(params)[2].value)
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = analytic[pi].reshape(-1)[j]
            rel = abs(a - numeric) / max(1e-6, abs(a), abs(numeric))
            if rel > max_rel:
                max_rel = rel
                worst = (pi, j, float(a), float(numeric))
    return GradCheckReport(max_rel_error=max_rel, passed=max_rel <= tol,
                           tol=tol, h=h, worst=worst)
