"""Second-order forward jets over spatial coordinates.

A :class:`Jet` carries a value, its spatial gradient and (for order 2) its
spatial Hessian.  Components can be plain numbers, numpy arrays or tape
``Var`` objects, so jets built on top of network parameters remain
differentiable with respect to those parameters.  The Python float ``0.0`` is
used as a structural zero and is skipped by the arithmetic helpers.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import adtape as ad

__all__ = [
    "Jet",
    "seed_coordinate",
    "coordinate_jets",
    "constant",
    "tanh",
    "sin",
    "cos",
    "exp",
    "sqrt",
    "dot",
    "cross",
    "divergence",
    "gradient_jets",
    "anisotropic_operators",
]


def _is_zero(c) -> bool:
    return type(c) is float and c == 0.0


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return ad.add(a, b)


def _sub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return ad.neg(b)
    return ad.sub(a, b)


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return 0.0
    return ad.mul(a, b)


def _take(c, idx):
    if isinstance(c, (float, int)):
        return c
    return c[idx]


class Jet:
    """Value plus spatial derivatives of one quantity.

    Parameters
    ----------
    value : component
    grad : sequence of components, one per spatial axis
    hess : optional dim x dim nested sequence; only the upper triangle is read
        and the stored matrix mirrors it, so ``hess[i][j] is hess[j][i]``.
    """

    __slots__ = ("value", "grad", "hess")
    __array_ufunc__ = None

    def __init__(self, value, grad: Sequence, hess=None):
        self.value = value
        self.grad = tuple(grad)
        if hess is not None:
            d = len(self.grad)
            upper = {(i, j): hess[i][j] for i in range(d) for j in range(i, d)}
            hess = tuple(
                tuple(upper[(min(i, j), max(i, j))] for j in range(d)) for i in range(d)
            )
        self.hess = hess

    @property
    def dim(self) -> int:
        return len(self.grad)

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, dim={self.dim})"

    # -- helpers -------------------------------------------------------
    def _check(self, other: "Jet") -> None:
        if other.dim != self.dim:
            raise ValueError(f"jet dimension mismatch: {self.dim} vs {other.dim}")
        if other.order != self.order:
            raise ValueError(f"jet order mismatch: {self.order} vs {other.order}")

    def _upper(self):
        d = self.dim
        return [(i, j) for i in range(d) for j in range(i, d)]

    def map(self, fn) -> "Jet":
        """Apply a linear, component-wise map ``fn`` to every component."""
        grad = [0.0 if _is_zero(g) else fn(g) for g in self.grad]
        hess = None
        if self.hess is not None:
            hess = [[0.0] * self.dim for _ in range(self.dim)]
            for i, j in self._upper():
                h = self.hess[i][j]
                hess[i][j] = 0.0 if _is_zero(h) else fn(h)
        return Jet(fn(self.value), grad, hess)

    def __getitem__(self, idx) -> "Jet":
        return self.map(lambda c: _take(c, idx))

    def with_order(self, order: int) -> "Jet":
        if order == self.order:
            return self
        if order == 1:
            return Jet(self.value, self.grad)
        raise ValueError("cannot raise jet order")

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            grad = [_add(a, b) for a, b in zip(self.grad, other.grad)]
            hess = None
            if self.hess is not None:
                hess = [[0.0] * self.dim for _ in range(self.dim)]
                for i, j in self._upper():
                    hess[i][j] = _add(self.hess[i][j], other.hess[i][j])
            return Jet(ad.add(self.value, other.value), grad, hess)
        return Jet(ad.add(self.value, other), self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self):
        return self.map(ad.neg)

    def __sub__(self, other):
        if isinstance(other, Jet):
            return self + (-other)
        return Jet(ad.sub(self.value, other), self.grad, self.hess)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self.map(lambda c: ad.mul(c, other))
        self._check(other)
        u, v = self, other
        grad = [_add(_mul(gu, v.value), _mul(u.value, gv)) for gu, gv in zip(u.grad, v.grad)]
        hess = None
        if u.hess is not None:
            hess = [[0.0] * u.dim for _ in range(u.dim)]
            for i, j in u._upper():
                h = _add(_mul(u.hess[i][j], v.value), _mul(u.value, v.hess[i][j]))
                h = _add(h, _mul(u.grad[i], v.grad[j]))
                h = _add(h, _mul(u.grad[j], v.grad[i]))
                hess[i][j] = h
        return Jet(ad.mul(u.value, v.value), grad, hess)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        r = ad.div(1.0, self.value)
        r2 = ad.mul(r, r)
        return _chain(self, r, ad.neg(r2), 2.0 * ad.mul(r2, r))

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self.map(lambda c: ad.div(c, other))

    def __rtruediv__(self, other):
        return self.reciprocal() * other


def _chain(x: Jet, f0, f1, f2) -> Jet:
    """Compose a scalar function with value f0, f' = f1, f'' = f2 at x.value."""
    grad = [_mul(f1, g) for g in x.grad]
    hess = None
    if x.hess is not None:
        hess = [[0.0] * x.dim for _ in range(x.dim)]
        for i, j in x._upper():
            hess[i][j] = _add(_mul(f1, x.hess[i][j]), _mul(f2, _mul(x.grad[i], x.grad[j])))
    return Jet(f0, grad, hess)


def tanh(x: Jet) -> Jet:
    t = ad.tanh(x.value)
    d1 = 1.0 - ad.square(t)
    d2 = None if x.hess is None else -2.0 * ad.mul(t, d1)
    return _chain(x, t, d1, d2)


def sin(x: Jet) -> Jet:
    s = ad.sin(x.value)
    return _chain(x, s, ad.cos(x.value), None if x.hess is None else ad.neg(s))


def cos(x: Jet) -> Jet:
    c = ad.cos(x.value)
    return _chain(x, c, ad.neg(ad.sin(x.value)), None if x.hess is None else ad.neg(c))


def exp(x: Jet) -> Jet:
    e = ad.exp(x.value)
    return _chain(x, e, e, e)


def sqrt(x: Jet) -> Jet:
    r = ad.sqrt(x.value)
    d1 = ad.div(0.5, r)
    d2 = None if x.hess is None else ad.div(-0.25, ad.mul(r, ad.mul(r, r)))
    return _chain(x, r, d1, d2)


def seed_coordinate(k: int, x0, dim: int, order: int = 1) -> Jet:
    """Jet of the k-th coordinate: value ``x0``, gradient ``e_k``, zero Hessian."""
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if not 0 <= k < dim:
        raise ValueError(f"axis {k} out of range for dim {dim}")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    grad = [1.0 if i == k else 0.0 for i in range(dim)]
    hess = [[0.0] * dim for _ in range(dim)] if order == 2 else None
    return Jet(np.asarray(x0, dtype=np.float64), grad, hess)


def coordinate_jets(points: np.ndarray, order: int = 1) -> list[Jet]:
    """Seed one jet per coordinate of ``points`` with shape (N, d)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = points.shape[1]
    return [seed_coordinate(k, points[:, k], d, order) for k in range(d)]


def constant(value, dim: int, order: int = 1) -> Jet:
    hess = [[0.0] * dim for _ in range(dim)] if order == 2 else None
    return Jet(value, [0.0] * dim, hess)


def dot(grad: Sequence, vec: Sequence):
    """sum_i grad[i] * vec[i] for component sequences."""
    out = 0.0
    for g, v in zip(grad, vec):
        out = _add(out, _mul(g, v))
    return out


def cross(a: Sequence[Jet], b: Sequence[Jet]) -> list[Jet]:
    return [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]


def divergence(v: Sequence[Jet]):
    """sum_i d v_i / d x_i."""
    d = v[0].dim
    if len(v) != d or any(c.dim != d for c in v):
        raise ValueError("vector field length must equal jet dimension")
    out = 0.0
    for i, c in enumerate(v):
        out = _add(out, c.grad[i])
    return out


def gradient_jets(u: Jet) -> list[Jet]:
    """Order-1 jets of the partial derivatives of an order-2 jet."""
    if u.hess is None:
        raise ValueError("gradient_jets needs an order-2 jet")
    return [Jet(u.grad[i], u.hess[i]) for i in range(u.dim)]


def anisotropic_operators(psi: Jet, b: Sequence[Jet]) -> dict:
    """Parallel/perpendicular gradients and Laplacians of ``psi`` along ``b``.

    ``b`` must be a unit field given as order-1 jets (its first derivatives
    enter the parallel Laplacian ``div(b (b . grad psi))``).
    """
    if psi.hess is None:
        raise ValueError("anisotropic operators need an order-2 jet")
    if len(b) != psi.dim or not all(isinstance(c, Jet) for c in b):
        raise ValueError("frame must supply b as jets with first derivatives")
    d = psi.dim
    bv = [c.value for c in b]
    g = psi.grad
    bg = dot(g, bv)
    grad_par = [_mul(bi, bg) for bi in bv]
    grad_perp = [_sub(gi, pi) for gi, pi in zip(g, grad_par)]
    div_b = 0.0
    for i in range(d):
        div_b = _add(div_b, b[i].grad[i])
    # d_k (b . grad psi) = sum_i (d_k b_i) g_i + b_i H_ik
    d_bg = []
    for k in range(d):
        s = 0.0
        for i in range(d):
            s = _add(s, _mul(b[i].grad[k], g[i]))
            s = _add(s, _mul(bv[i], psi.hess[i][k]))
        d_bg.append(s)
    lap_par = _add(_mul(div_b, bg), dot(d_bg, bv))
    lap = 0.0
    for i in range(d):
        lap = _add(lap, psi.hess[i][i])
    lap_perp = _sub(lap, lap_par)
    return {
        "grad_par": grad_par,
        "grad_perp": grad_perp,
        "lap_par": lap_par,
        "lap_perp": lap_perp,
    }
