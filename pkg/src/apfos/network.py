"""Fully connected tanh network with a flat parameter vector.

Layout of the flat vector: layer by layer, the weight matrix ``W`` of shape
``(n_l, n_{l-1})`` in row-major order followed by the bias ``B`` of length
``n_l``.  Inputs live in the unit square/cube and are mapped to ``[-1, 1]^d``
by ``x -> 2x - 1`` before the first layer.  The last layer is affine.

Output columns are positional: ``(phi, tau, sigma)`` for the 2D first-order
system, ``(phi, tau, chi, sigma)`` in 3D and ``(phi,)`` for the second-order
(non-AP) scheme.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import adtape as ad
from .jets import Jet, coordinate_jets
from . import jets as jt

__all__ = [
    "LayerSpec",
    "layer_spec",
    "param_count",
    "init_params",
    "unpack",
    "forward",
    "forward_jets",
    "NetworkModel",
]

LayerSpec = tuple[int, ...]


def layer_spec(dim: int, hidden: Sequence[int], n_out: int) -> LayerSpec:
    sizes = (int(dim), *(int(h) for h in hidden), int(n_out))
    validate(sizes)
    return sizes


def validate(sizes: Sequence[int]) -> None:
    if len(sizes) < 2:
        raise ValueError(f"need at least input and output sizes, got {list(sizes)}")
    if any(int(n) < 1 for n in sizes):
        raise ValueError(f"layer sizes must be >= 1, got {list(sizes)}")


def param_count(sizes: Sequence[int]) -> int:
    """sum_l n_l * (n_{l-1} + 1)."""
    validate(sizes)
    return int(sum(sizes[l] * (sizes[l - 1] + 1) for l in range(1, len(sizes))))


def init_params(sizes: Sequence[int], seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases, drawn from ``default_rng(seed)``."""
    validate(sizes)
    rng = np.random.default_rng(seed)
    chunks = []
    for l in range(1, len(sizes)):
        n_in, n_out = sizes[l - 1], sizes[l]
        bound = np.sqrt(6.0 / (n_in + n_out))
        chunks.append(rng.uniform(-bound, bound, size=n_out * n_in))
        chunks.append(np.zeros(n_out))
    return np.concatenate(chunks)


def unpack(theta, sizes: Sequence[int]) -> list[tuple]:
    """Split a flat vector (array or ``Var``) into ``[(W, B), ...]``."""
    n = param_count(sizes)
    if len(theta) != n:
        raise ValueError(f"parameter vector has length {len(theta)}, expected {n}")
    layers = []
    pos = 0
    for l in range(1, len(sizes)):
        n_in, n_out = sizes[l - 1], sizes[l]
        W = theta[pos : pos + n_out * n_in].reshape(n_out, n_in)
        pos += n_out * n_in
        B = theta[pos : pos + n_out]
        pos += n_out
        layers.append((W, B))
    return layers


def forward(theta, sizes: Sequence[int], x):
    """Evaluate the network.

    ``x`` is either an array of points, shape ``(N, d)`` or ``(d,)``, giving an
    output array ``(N, n_L)``; or a sequence of ``d`` coordinate jets, giving a
    list of ``n_L`` output jets.
    """
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], Jet):
        return _forward_jet(theta, sizes, x)
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if pts.shape[1] != sizes[0]:
        raise ValueError(f"network expects {sizes[0]}-d input, got {pts.shape[1]}-d")
    layers = unpack(theta, sizes)
    h = 2.0 * pts - 1.0
    for W, B in layers[:-1]:
        h = ad.tanh(ad.add(ad.matmul(h, W.T), B))
    W, B = layers[-1]
    return ad.add(ad.matmul(h, W.T), B)


def _affine(j: Jet, Wt, B) -> Jet:
    out = j.map(lambda c: ad.matmul(c, Wt))
    return Jet(ad.add(out.value, B), out.grad, out.hess)


def _forward_jet(theta, sizes, coords: Sequence[Jet]) -> list[Jet]:
    d = len(coords)
    if d != sizes[0]:
        raise ValueError(f"network expects {sizes[0]}-d input, got {d} coordinate jets")
    order = coords[0].order
    if any(c.order != order or c.dim != d for c in coords):
        raise ValueError("coordinate jets must share order and dimension")
    # pack the coordinate jets into one jet whose components are (N, d) arrays
    value = np.stack([np.broadcast_to(np.asarray(c.value, dtype=np.float64), np.shape(coords[0].value)) for c in coords], axis=-1)
    value = np.atleast_2d(value)
    grad = [_pack([c.grad[k] for c in coords]) for k in range(d)]
    hess = None
    if order == 2:
        hess = [[_pack([c.hess[i][k] for c in coords]) for k in range(d)] for i in range(d)]
    h = Jet(2.0 * value - 1.0, [2.0 * g if not jt._is_zero(g) else 0.0 for g in grad],
            None if hess is None else [[2.0 * e if not jt._is_zero(e) else 0.0 for e in row] for row in hess])
    layers = unpack(theta, sizes)
    for W, B in layers[:-1]:
        h = jt.tanh(_affine(h, W.T, B))
    W, B = layers[-1]
    out = _affine(h, W.T, B)
    return [out[:, k] for k in range(sizes[-1])]


def _pack(components):
    if all(jt._is_zero(c) for c in components):
        return 0.0
    if any(ad.is_var(c) for c in components):
        raise ValueError("coordinate jets must not depend on tracked parameters")
    arrs = [np.asarray(c, dtype=np.float64) for c in components]
    shape = np.broadcast_shapes(*(a.shape for a in arrs))
    return np.atleast_2d(np.stack([np.broadcast_to(a, shape) for a in arrs], axis=-1))


def forward_jets(theta, sizes: Sequence[int], points: np.ndarray, order: int = 1) -> list[Jet]:
    """Output jets at ``points`` (shape ``(N, d)``), derivatives up to ``order``."""
    return _forward_jet(theta, sizes, coordinate_jets(points, order))


class NetworkModel:
    """Callable ``(points, order) -> list of output jets`` bound to parameters."""

    def __init__(self, sizes: Sequence[int], theta):
        self.sizes = tuple(sizes)
        self.theta = theta

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    def __call__(self, points, order: int = 1) -> list[Jet]:
        return forward_jets(self.theta, self.sizes, points, order)
