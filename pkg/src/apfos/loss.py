"""Discrete least-squares functionals.

All functionals take a *model*, i.e. a callable ``model(points, order)``
returning output jets (a :class:`~apfos.network.NetworkModel` or an
:class:`~apfos.problem.ExactModel`), and a :class:`LossData` bundle holding
everything that does not depend on the model: points, field frame, forcing,
boundary data and observations.  Each returns ``(total, breakdown)`` where
``total`` is tape-tracked whenever the model or eps is.

Terms are summed in a fixed order (interior, Dirichlet, Neumann,
observation) so repeated evaluations are bit-identical.  eps only ever
multiplies; nothing divides by it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import adtape as ad
from . import jets as jt
from .problem import CollocationSet, ObservationSet, ProblemInstance, dirichlet_g, forcing, frame_at

__all__ = [
    "TERMS",
    "LossWeights",
    "LossBreakdown",
    "LossData",
    "prepare",
    "apfos_loss_2d",
    "apfos_loss_3d",
    "nonap_loss_2d",
    "ident_apfos_loss_2d",
    "ident_nonap_loss_2d",
]

TERMS = ("interior", "perp_grad", "par_grad", "dirichlet", "neumann_phi", "neumann_aux", "observation")


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights; the usual symbols map as

    forward APFOS  (beta_D, beta_N)             -> dirichlet, neumann(=neumann_aux)
    identification (beta_e, beta_f1..3, beta_N1, beta_N2)
                   -> observation, interior, perp_grad, par_grad, neumann, neumann_aux
    non-AP         (alpha_D, alpha_N) and (alpha_e, alpha_f, alpha_N)
    """

    interior: float = 1.0
    perp_grad: float = 1.0
    par_grad: float = 1.0
    dirichlet: float = 1.0
    neumann: float = 1.0
    neumann_aux: float | None = None
    observation: float = 0.0

    def __post_init__(self):
        for name in ("interior", "perp_grad", "par_grad", "dirichlet", "neumann", "observation"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be >= 0")
        if self.neumann_aux is not None and self.neumann_aux < 0:
            raise ValueError("weight neumann_aux must be >= 0")

    def term(self, name: str) -> float:
        if name == "neumann_phi":
            return self.neumann
        if name == "neumann_aux":
            return self.neumann if self.neumann_aux is None else self.neumann_aux
        return getattr(self, name)

    @classmethod
    def forward(cls, n_dirichlet: int) -> "LossWeights":
        """(beta_D, beta_N) = (N_d, 1); also the non-AP (alpha_D, alpha_N)."""
        return cls(dirichlet=float(n_dirichlet), neumann=1.0)

    @classmethod
    def identification(cls, n_interior: int, n_neumann: int) -> "LossWeights":
        """(beta_e, beta_f1, beta_f2, beta_f3, beta_N1, beta_N2) = (N_f, 1, 1, N_f, N_n, 1)."""
        return cls(
            observation=float(n_interior), interior=1.0, perp_grad=1.0,
            par_grad=float(n_interior), neumann=float(n_neumann), neumann_aux=1.0,
            dirichlet=0.0,
        )

    @classmethod
    def nonap_identification(cls, n_interior: int, n_neumann: int) -> "LossWeights":
        """(alpha_e, alpha_f, alpha_N) = (N_f, N_f, N_n)."""
        return cls(observation=float(n_interior), interior=float(n_interior),
                   neumann=float(n_neumann), dirichlet=0.0)


@dataclass
class LossBreakdown:
    """Unweighted mean-squared terms plus the weighted total."""

    terms: dict[str, float]
    weights: dict[str, float]
    total: float

    def weighted_sum(self) -> float:
        return float(sum(self.weights[k] * v for k, v in self.terms.items()))

    def row(self) -> dict[str, float]:
        return {"total": self.total, **{k: self.terms.get(k, 0.0) for k in TERMS}}


@dataclass
class LossData:
    """Model-independent inputs of a functional, precomputed once per run."""

    dim: int
    eps: float
    interior: np.ndarray
    dirichlet: np.ndarray
    neumann: np.ndarray
    normals: np.ndarray
    f: np.ndarray
    g: np.ndarray
    # frame values (N, d) and divergences (N,) at interior points
    b: np.ndarray
    perp: list[np.ndarray]
    div_b: np.ndarray
    div_perp: list[np.ndarray]
    # frame values at Neumann points
    b_n: np.ndarray
    perp_n: list[np.ndarray]
    # order-1 frame jets at interior points (second-order scheme)
    b_jets: list | None = None
    obs: np.ndarray | None = None
    fallback: int = 0

    @property
    def points(self) -> np.ndarray:
        return np.concatenate([self.interior, self.dirichlet, self.neumann])

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.interior), len(self.dirichlet), len(self.neumann)


def _frame_arrays(fr, n: int, d: int):
    b = np.stack([np.broadcast_to(np.asarray(c.value, dtype=float), (n,)) for c in fr.b], axis=-1)
    perp = [
        np.stack([np.broadcast_to(np.asarray(c.value, dtype=float), (n,)) for c in vec], axis=-1)
        for vec in fr.perp
    ]

    def div(vec):
        return np.broadcast_to(np.asarray(jt.divergence(vec), dtype=float), (n,)).copy()

    return b, perp, div(fr.b), [div(v) for v in fr.perp]


def prepare(instance: ProblemInstance, colloc: CollocationSet,
            obs: ObservationSet | None = None) -> LossData:
    """Evaluate frame, forcing, boundary data and observations at the collocation points."""
    d = instance.dim
    n_f, n_d, n_n = colloc.counts
    if n_f:
        fr = frame_at(instance, colloc.interior)
        b, perp, div_b, div_perp = _frame_arrays(fr, n_f, d)
        f = np.asarray(forcing(instance, colloc.interior), dtype=float)
        b_jets = fr.b
        fallback = fr.fallback
    else:
        b, perp = np.zeros((0, d)), [np.zeros((0, d))] * (d - 1)
        div_b, div_perp, f, b_jets, fallback = np.zeros(0), [np.zeros(0)] * (d - 1), np.zeros(0), None, 0
    if n_n:
        frn = frame_at(instance, colloc.neumann)
        b_n, perp_n, _, _ = _frame_arrays(frn, n_n, d)
        fallback += frn.fallback
    else:
        b_n, perp_n = np.zeros((0, d)), [np.zeros((0, d))] * (d - 1)
    g = dirichlet_g(instance, colloc.dirichlet) if n_d else np.zeros(0)
    values = None
    if obs is not None:
        if len(obs.points) != n_f or not np.array_equal(obs.points, colloc.interior):
            raise ValueError("observations must be taken at the interior collocation points")
        values = np.asarray(obs.values, dtype=float)
    return LossData(
        dim=d, eps=instance.eps,
        interior=colloc.interior, dirichlet=colloc.dirichlet,
        neumann=colloc.neumann, normals=colloc.normals,
        f=f, g=np.asarray(g, dtype=float),
        b=b, perp=perp, div_b=div_b, div_perp=div_perp,
        b_n=b_n, perp_n=perp_n, b_jets=b_jets, obs=values, fallback=fallback,
    )


# -- assembly ------------------------------------------------------------------


def _cols(a: np.ndarray):
    return [a[:, i] for i in range(a.shape[1])]


def _ms(r):
    """Mean of squares (tracked when ``r`` is)."""
    return ad.mean(ad.square(r))


def _finish(parts: dict, w: LossWeights):
    total = 0.0
    terms, weights = {}, {}
    for name in TERMS:
        if name not in parts:
            continue
        wt = float(w.term(name))
        terms[name] = float(ad.value_of(parts[name]))
        weights[name] = wt
        if wt != 0.0:
            total = ad.add(total, ad.mul(wt, parts[name]))
    return total, LossBreakdown(terms, weights, float(ad.value_of(total)))


def _split_rows(j: jt.Jet, n_f: int, n_d: int):
    sl_f, sl_d, sl_n = slice(0, n_f), slice(n_f, n_f + n_d), slice(n_f + n_d, None)
    return j[sl_f], j[sl_d], j[sl_n]


def _neumann_phi(grad_psi_n, eps, data: LossData):
    # eps * grad_perp(psi).n + grad_par(psi).n
    b_n = _cols(data.b_n)
    nrm = _cols(data.normals)
    bg = jt.dot(grad_psi_n, b_n)
    bn = jt.dot(b_n, nrm)
    gn = jt.dot(grad_psi_n, nrm)
    par = ad.mul(bg, bn)
    return ad.add(ad.mul(eps, ad.sub(gn, par)), par)


def _check_arity(outs, expected: int, what: str):
    if len(outs) != expected:
        raise ValueError(f"{what} needs {expected} model outputs, got {len(outs)}")


def _apfos(model: Callable, eps, data: LossData, w: LossWeights):
    d = data.dim
    n_f, n_d, n_n = data.counts
    outs = model(data.points, 1)
    _check_arity(outs, d + 1, f"{d}D first-order functional")
    rows = [_split_rows(o, n_f, n_d) for o in outs]
    parts = {}

    if n_f:
        psi, *aux, zeta = [r[0] for r in rows]
        b = _cols(data.b)
        perps = [_cols(p) for p in data.perp]
        div = ad.add(jt.dot(zeta.grad, b), ad.mul(zeta.value, data.div_b))
        for xi, p, dp in zip(aux, perps, data.div_perp):
            div = ad.add(div, ad.add(jt.dot(xi.grad, p), ad.mul(xi.value, dp)))
        parts["interior"] = _ms(ad.add(div, data.f))
        perp_t = 0.0
        for xi, p in zip(aux, perps):
            perp_t = ad.add(perp_t, _ms(ad.sub(jt.dot(psi.grad, p), xi.value)))
        parts["perp_grad"] = perp_t
        parts["par_grad"] = _ms(ad.sub(jt.dot(psi.grad, b), ad.mul(eps, zeta.value)))
    if n_d:
        parts["dirichlet"] = _ms(ad.sub(rows[0][1].value, data.g))
    if n_n:
        psi_n, *aux_n, zeta_n = [r[2] for r in rows]
        parts["neumann_phi"] = _ms(_neumann_phi(psi_n.grad, eps, data))
        flux = ad.mul(zeta_n.value, jt.dot(_cols(data.b_n), _cols(data.normals)))
        for xi, p in zip(aux_n, data.perp_n):
            flux = ad.add(flux, ad.mul(xi.value, jt.dot(_cols(p), _cols(data.normals))))
        parts["neumann_aux"] = _ms(flux)
    if w.observation != 0.0:
        if data.obs is None:
            raise ValueError("observation term requested but no observations were prepared")
        parts["observation"] = _ms(ad.sub(rows[0][0].value, data.obs))
    return _finish(parts, w)


def _nonap(model: Callable, eps, data: LossData, w: LossWeights):
    if data.dim != 2:
        raise ValueError("the second-order functional is implemented in 2D only")
    n_f, n_d, n_n = data.counts
    outs = model(data.points, 2)
    _check_arity(outs, 1, "second-order functional")
    psi_f, psi_d, psi_n = _split_rows(outs[0], n_f, n_d)
    parts = {}
    if n_f:
        ops = jt.anisotropic_operators(psi_f, data.b_jets)
        r = ad.add(ad.mul(eps, ad.add(ops["lap_perp"], data.f)), ops["lap_par"])
        parts["interior"] = _ms(r)
    if n_d:
        parts["dirichlet"] = _ms(ad.sub(psi_d.value, data.g))
    if n_n:
        parts["neumann_phi"] = _ms(_neumann_phi(psi_n.grad, eps, data))
    if w.observation != 0.0:
        if data.obs is None:
            raise ValueError("observation term requested but no observations were prepared")
        parts["observation"] = _ms(ad.sub(psi_f.value, data.obs))
    return _finish(parts, w)


def apfos_loss_2d(model, data: LossData, weights: LossWeights | None = None):
    """First-order system functional in 2D; model outputs (psi, xi, zeta)."""
    if data.dim != 2:
        raise ValueError("apfos_loss_2d needs 2D data")
    w = weights or LossWeights.forward(len(data.dirichlet))
    return _apfos(model, data.eps, data, w)


def apfos_loss_3d(model, data: LossData, weights: LossWeights | None = None):
    """First-order system functional in 3D; model outputs (psi, xi, kappa, zeta)."""
    if data.dim != 3:
        raise ValueError("apfos_loss_3d needs 3D data")
    w = weights or LossWeights.forward(len(data.dirichlet))
    return _apfos(model, data.eps, data, w)


def nonap_loss_2d(model, data: LossData, weights: LossWeights | None = None):
    """Balanced second-order functional: (eps lap_perp psi + lap_par psi + eps f)^2 + BCs."""
    w = weights or LossWeights.forward(len(data.dirichlet))
    return _nonap(model, data.eps, data, w)


def _ident_data(data: LossData):
    if data.obs is None or len(data.obs) == 0:
        raise ValueError("identification needs a non-empty observation set")


def ident_apfos_loss_2d(model, log_eps, data: LossData, weights: LossWeights | None = None):
    """Identification functional with eps = exp(log_eps); log_eps may be tracked."""
    if data.dim != 2:
        raise ValueError("ident_apfos_loss_2d needs 2D data")
    _ident_data(data)
    w = weights or LossWeights.identification(len(data.interior), len(data.neumann))
    return _apfos(model, ad.exp(log_eps), data, w)


def ident_nonap_loss_2d(model, log_eps, data: LossData, weights: LossWeights | None = None):
    """Second-order identification functional with eps = exp(log_eps)."""
    _ident_data(data)
    w = weights or LossWeights.nonap_identification(len(data.interior), len(data.neumann))
    return _nonap(model, ad.exp(log_eps), data, w)
