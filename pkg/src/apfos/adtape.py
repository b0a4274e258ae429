"""Reverse-mode automatic differentiation on a linear tape.

Every tracked quantity is a :class:`Var` holding a float64 array (0-d for
scalars).  Operations append a node to the owning :class:`Tape` together with
one vector-Jacobian closure per input, so the node list is topologically
ordered by construction.  :meth:`Tape.backward` walks that list once in
reverse creation order, which makes repeated calls bit-reproducible.

Plain numbers and numpy arrays mix freely with ``Var`` objects and are treated
as constants.  The module-level functions (:func:`tanh`, :func:`sin`, ...)
dispatch on the argument type, so the same expression code runs on constants
(no tape) or on tracked values.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tape",
    "Var",
    "new_tape",
    "is_var",
    "value_of",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "square",
    "tanh",
    "sin",
    "cos",
    "exp",
    "sqrt",
    "matmul",
    "sum",
    "mean",
    "stack",
    "concatenate",
]

_Vjp = Callable[[np.ndarray], np.ndarray]


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tape:
    """Append-only record of operations rooted at a flat parameter vector.

    Parameters
    ----------
    params : array_like
        Values of the tracked parameters.  They are exposed as a single
        vector ``Var`` (:attr:`params`); slice it to obtain individual
        parameters.

    Notes
    -----
    A tape is single-owner.  Build a fresh tape for every loss evaluation.
    """

    def __init__(self, params: Sequence[float] | np.ndarray):
        theta = np.array(params, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(theta)):
            bad = np.flatnonzero(~np.isfinite(theta))
            raise ValueError(f"non-finite parameter at index {bad.tolist()}")
        self._shapes: list[tuple] = []
        self._tags: list[str] = []
        self._parents: list[tuple[tuple[int, _Vjp], ...]] = []
        self.params = self._push(theta, "param", ())

    # -- bookkeeping ---------------------------------------------------
    @property
    def num_tracked(self) -> int:
        """Number of scalar parameters with an adjoint slot."""
        return self.params.value.size

    @property
    def num_derived(self) -> int:
        """Number of nodes created after the parameter node."""
        return len(self._tags) - 1

    def __len__(self) -> int:
        return len(self._tags)

    def tag(self, index: int) -> str:
        return self._tags[index]

    def _push(self, value, tag: str, parents) -> "Var":
        value = np.asarray(value, dtype=np.float64)
        self._shapes.append(value.shape)
        self._tags.append(tag)
        self._parents.append(tuple(parents))
        return Var(self, len(self._tags) - 1, value)

    # -- reverse sweep -------------------------------------------------
    def backward(self, loss) -> np.ndarray:
        """Gradient of a scalar ``loss`` with respect to :attr:`params`.

        A constant (non-``Var``) loss yields a zero gradient.
        """
        n = self.num_tracked
        if not isinstance(loss, Var):
            if np.size(loss) != 1:
                raise ValueError("loss must be a scalar")
            return np.zeros(n)
        if loss.tape is not self:
            raise ValueError("loss node does not belong to this tape")
        if loss.value.size != 1:
            raise ValueError(f"loss must be a scalar, got shape {loss.value.shape}")

        adjoints: list[np.ndarray | None] = [None] * (loss.index + 1)
        adjoints[loss.index] = np.ones(self._shapes[loss.index])
        for i in range(loss.index, 0, -1):
            g = adjoints[i]
            if g is None:
                continue
            adjoints[i] = None
            for j, vjp in self._parents[i]:
                contrib = vjp(g)
                if adjoints[j] is None:
                    adjoints[j] = contrib
                else:
                    adjoints[j] = adjoints[j] + contrib
        g0 = adjoints[0]
        if g0 is None:
            return np.zeros(n)
        return np.array(g0, dtype=np.float64).reshape(-1)


def new_tape(params) -> Tape:
    """Create a tape tracking ``params`` (see :class:`Tape`)."""
    return Tape(params)


class Var:
    """A tape-tracked float64 array."""

    __slots__ = ("tape", "index", "value")
    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    def __repr__(self) -> str:
        return f"Var(#{self.index} {self.tape.tag(self.index)}, shape={self.value.shape})"

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def __len__(self) -> int:
        return len(self.value)

    def __float__(self) -> float:
        return float(self.value)

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __truediv__ = lambda self, o: div(self, o)
    __rtruediv__ = lambda self, o: div(o, self)
    __matmul__ = lambda self, o: matmul(self, o)
    __rmatmul__ = lambda self, o: matmul(o, self)
    __neg__ = lambda self: neg(self)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        p = float(p)
        x = self.value
        return self.tape._push(x**p, "pow", [(self.index, lambda g: g * p * x ** (p - 1))])

    def __getitem__(self, idx):
        x = self.value
        out = x[idx]
        shape = x.shape
        fancy = isinstance(idx, (list, np.ndarray)) or (
            isinstance(idx, tuple) and any(isinstance(k, (list, np.ndarray)) for k in idx)
        )

        def vjp(g):
            full = np.zeros(shape)
            if fancy:
                np.add.at(full, idx, g)
            else:
                full[idx] = g
            return full

        return self.tape._push(out, "getitem", [(self.index, vjp)])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        old = self.value.shape
        return self.tape._push(
            self.value.reshape(shape), "reshape", [(self.index, lambda g: g.reshape(old))]
        )

    @property
    def T(self):
        return self.tape._push(self.value.T, "transpose", [(self.index, lambda g: g.T)])


def is_var(x) -> bool:
    return isinstance(x, Var)


def value_of(x):
    """Underlying array of a ``Var``; constants pass through."""
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs) -> Tape:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("operands belong to different tapes")
    return tape


# -- binary arithmetic -----------------------------------------------------


def add(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return a + b
    av, bv = value_of(a), value_of(b)
    out = av + bv
    parents = []
    if isinstance(a, Var):
        sa = av.shape
        parents.append((a.index, lambda g: _unbroadcast(g, sa)))
    if isinstance(b, Var):
        sb = bv.shape
        parents.append((b.index, lambda g: _unbroadcast(g, sb)))
    return tape._push(out, "add", parents)


def sub(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return a - b
    av, bv = value_of(a), value_of(b)
    out = av - bv
    parents = []
    if isinstance(a, Var):
        sa = av.shape
        parents.append((a.index, lambda g: _unbroadcast(g, sa)))
    if isinstance(b, Var):
        sb = bv.shape
        parents.append((b.index, lambda g: -_unbroadcast(g, sb)))
    return tape._push(out, "sub", parents)


def mul(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return a * b
    av, bv = value_of(a), value_of(b)
    out = av * bv
    parents = []
    if isinstance(a, Var):
        sa = np.shape(av)
        parents.append((a.index, lambda g: _unbroadcast(g * bv, sa)))
    if isinstance(b, Var):
        sb = np.shape(bv)
        parents.append((b.index, lambda g: _unbroadcast(g * av, sb)))
    return tape._push(out, "mul", parents)


def div(a, b):
    bv = value_of(b)
    if np.any(np.asarray(bv) == 0):
        where = f"node #{b.index} ({b.tape.tag(b.index)})" if isinstance(b, Var) else "constant"
        raise ZeroDivisionError(f"division by zero: denominator is {where}")
    tape = _tape_of(a, b)
    if tape is None:
        return a / b
    av = value_of(a)
    out = av / bv
    parents = []
    if isinstance(a, Var):
        sa = np.shape(av)
        parents.append((a.index, lambda g: _unbroadcast(g / bv, sa)))
    if isinstance(b, Var):
        sb = np.shape(bv)
        parents.append((b.index, lambda g: _unbroadcast(-g * out / bv, sb)))
    return tape._push(out, "div", parents)


def neg(a):
    if not isinstance(a, Var):
        return -a
    return a.tape._push(-a.value, "neg", [(a.index, lambda g: -g)])


def matmul(a, b):
    """Matrix product for operands of rank 1 or 2."""
    tape = _tape_of(a, b)
    if tape is None:
        return a @ b
    av, bv = np.asarray(value_of(a)), np.asarray(value_of(b))
    out = av @ bv
    a2 = av if av.ndim == 2 else av[None, :]
    b2 = bv if bv.ndim == 2 else bv[:, None]

    def as2(g):
        g = np.asarray(g)
        if av.ndim == 1:
            g = g[None, ...]
        if bv.ndim == 1:
            g = g[..., None]
        return g

    parents = []
    if isinstance(a, Var):
        parents.append((a.index, lambda g: (as2(g) @ b2.T).reshape(av.shape)))
    if isinstance(b, Var):
        parents.append((b.index, lambda g: (a2.T @ as2(g)).reshape(bv.shape)))
    return tape._push(out, "matmul", parents)


# -- unary functions ---------------------------------------------------------


def square(x):
    if not isinstance(x, Var):
        return x * x
    v = x.value
    return x.tape._push(v * v, "square", [(x.index, lambda g: 2.0 * g * v)])


def tanh(x):
    if not isinstance(x, Var):
        return np.tanh(x)
    t = np.tanh(x.value)
    return x.tape._push(t, "tanh", [(x.index, lambda g: g * (1.0 - t * t))])


def sin(x):
    if not isinstance(x, Var):
        return np.sin(x)
    v = x.value
    return x.tape._push(np.sin(v), "sin", [(x.index, lambda g: g * np.cos(v))])


def cos(x):
    if not isinstance(x, Var):
        return np.cos(x)
    v = x.value
    return x.tape._push(np.cos(v), "cos", [(x.index, lambda g: -g * np.sin(v))])


def exp(x):
    if not isinstance(x, Var):
        return np.exp(x)
    e = np.exp(x.value)
    return x.tape._push(e, "exp", [(x.index, lambda g: g * e)])


def sqrt(x):
    v = value_of(x)
    if np.any(np.asarray(v) < 0):
        where = f"node #{x.index} ({x.tape.tag(x.index)})" if isinstance(x, Var) else "constant"
        raise ValueError(f"sqrt of negative value: argument is {where}")
    if not isinstance(x, Var):
        return np.sqrt(x)
    r = np.sqrt(v)
    return x.tape._push(r, "sqrt", [(x.index, lambda g: 0.5 * g / r)])


# -- reductions and structure -------------------------------------------------


def sum(x, axis=None):  # noqa: A001 - mirrors numpy
    if not isinstance(x, Var):
        return np.sum(x, axis=axis)
    shape = x.value.shape

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return x.tape._push(np.sum(x.value, axis=axis), "sum", [(x.index, vjp)])


def mean(x, axis=None):
    n = np.size(value_of(x)) if axis is None else np.shape(value_of(x))[axis]
    return sum(x, axis=axis) * (1.0 / n)


def stack(xs, axis=0):
    tape = _tape_of(*xs)
    if tape is None:
        return np.stack(xs, axis=axis)
    vals = [np.asarray(value_of(x), dtype=np.float64) for x in xs]
    out = np.stack(vals, axis=axis)
    parents = []
    for k, x in enumerate(xs):
        if isinstance(x, Var):
            parents.append((x.index, lambda g, k=k: np.take(g, k, axis=axis)))
    return tape._push(out, "stack", parents)


def concatenate(xs, axis=0):
    tape = _tape_of(*xs)
    if tape is None:
        return np.concatenate(xs, axis=axis)
    vals = [np.asarray(value_of(x), dtype=np.float64) for x in xs]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    parents = []
    for k, x in enumerate(xs):
        if isinstance(x, Var):
            lo, hi = bounds[k], bounds[k + 1]
            parents.append(
                (x.index, lambda g, lo=lo, hi=hi: np.take(g, np.arange(lo, hi), axis=axis))
            )
    return tape._push(out, "concatenate", parents)
