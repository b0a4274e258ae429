"""Manufactured anisotropic test problems on the unit square and cube.

Setup I (2D, coordinates ``(x, z)``)::

    B = (m pi theta (x^2 - x) sin(m pi z),  pi + theta (2x - 1) cos(m pi z))
    phi = phi0 + eps * cos(2 pi z) sin(pi x)
    phi0 = sin(omega (pi x + theta (x^2 - x) cos(m pi z)))

Setup II (3D, coordinates ``(x, y, z)``) uses a fixed field and
``phi = phi0 + eps * cos(2 pi z) sin(pi x) sin(pi y)`` with
``phi0 = sin(omega (pi x + (x^2 - x) sin(3 pi y) cos(pi z)))``.

In both setups ``phi0`` is constant along field lines (``b . grad phi0 == 0``),
which is what allows the forcing to be assembled without dividing by eps::

    f = -lap_perp(phi0) - eps lap_perp(p) - lap_par(p)

where ``p`` is the eps-perturbation profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Sequence

import numpy as np

from . import jets as jt
from .jets import Jet, coordinate_jets

__all__ = [
    "CaseParams",
    "CASES",
    "ProblemInstance",
    "FieldFrame",
    "CollocationSet",
    "ObservationSet",
    "FRAME_GUARD",
    "bfield",
    "frame",
    "frame_at",
    "exact_parts",
    "exact_phi",
    "exact_aux",
    "ExactModel",
    "forcing",
    "dirichlet_g",
    "sample",
    "eval_grid",
    "observations",
]

PI = np.pi
FRAME_GUARD = 1e-14
_ON_FACE_TOL = 1e-12


@dataclass(frozen=True)
class CaseParams:
    theta: float
    m: int
    omega: float


CASES = {
    1: CaseParams(0.0, 1, 2.0),
    2: CaseParams(2.0, 1, 2.0),
    3: CaseParams(10.0, 2, 2.0),
}


def _parse_eps(eps) -> float:
    if isinstance(eps, str):
        eps = float(Decimal(eps.strip()))
    eps = float(eps)
    if not np.isfinite(eps) or eps < 0:
        raise ValueError(f"eps must be finite and >= 0, got {eps!r}")
    return eps


@dataclass(frozen=True)
class ProblemInstance:
    """A setup (``"I"`` 2D or ``"II"`` 3D), case parameters and anisotropy eps.

    ``eps`` may be given as a decimal string such as ``"1e-20"``.
    """

    setup: str
    case: CaseParams
    eps: float

    def __post_init__(self):
        setup = str(self.setup).upper()
        if setup not in ("I", "II"):
            raise ValueError(f"setup must be 'I' or 'II', got {self.setup!r}")
        object.__setattr__(self, "setup", setup)
        case = self.case
        if isinstance(case, int):
            case = CASES[case]
        object.__setattr__(self, "case", case)
        object.__setattr__(self, "eps", _parse_eps(self.eps))

    @classmethod
    def from_case(cls, setup: str, case: int, eps) -> "ProblemInstance":
        if case not in CASES:
            raise ValueError(f"unknown case {case}; expected one of {sorted(CASES)}")
        return cls(setup, CASES[case], eps)

    @property
    def dim(self) -> int:
        return 2 if self.setup == "I" else 3

    @property
    def dirichlet_axes(self) -> tuple[int, ...]:
        return (0,) if self.dim == 2 else (0, 1)

    @property
    def neumann_axis(self) -> int:
        return self.dim - 1

    def with_eps(self, eps) -> "ProblemInstance":
        return ProblemInstance(self.setup, self.case, eps)


@dataclass
class FieldFrame:
    """Unit field ``b`` and perpendicular unit vectors, all as order-1 jets.

    ``perp`` holds one vector in 2D (``b_perp = (-b_z, b_x)``) and two in 3D.
    ``fallback`` counts points where a guard replaced the normalisation.
    """

    b: list[Jet]
    perp: list[list[Jet]]
    fallback: int = 0


@dataclass
class CollocationSet:
    interior: np.ndarray
    dirichlet: np.ndarray
    neumann: np.ndarray
    normals: np.ndarray
    seed: int | None = None

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.interior), len(self.dirichlet), len(self.neumann)


@dataclass
class ObservationSet:
    points: np.ndarray
    values: np.ndarray
    noise: float = 0.0
    seed: int | None = None


def _points(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def _coords(x, order: int) -> list[Jet]:
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], Jet):
        return list(x)
    return coordinate_jets(_points(x), order)


# -- field ---------------------------------------------------------------


def bfield(instance: ProblemInstance, x) -> list[Jet]:
    """Closed-form B-field as order-1 jets (``x``: points or coordinate jets)."""
    c = _coords(x, 1)
    if instance.dim == 2:
        X, Z = c
        th, m = instance.case.theta, instance.case.m
        q = X * X - X
        bx = (m * PI * th) * q * jt.sin(Z * (m * PI))
        bz = (2.0 * X - 1.0) * th * jt.cos(Z * (m * PI)) + PI
        return [bx, bz]
    X, Y, Z = c
    q = X * X - X
    s3y, c3y = jt.sin(Y * (3 * PI)), jt.cos(Y * (3 * PI))
    sz, cz = jt.sin(Z * PI), jt.cos(Z * PI)
    bx = q * s3y * sz * (2 * PI)
    by = q * s3y * sz * PI
    bz = (2.0 * X - 1.0) * s3y * cz * 2.0 + q * c3y * cz * (3 * PI) + 2 * PI
    return [bx, by, bz]


def _guarded(vec: list[Jet], mask: np.ndarray, fallback: Sequence[float]) -> list[Jet]:
    """Replace jets at masked points by a constant fallback vector."""
    if not mask.any():
        return vec
    out = []
    for comp, fb in zip(vec, fallback):
        val = np.where(mask, fb, comp.value)
        grad = [np.where(mask, 0.0, g) for g in comp.grad]
        out.append(Jet(val, grad))
    return out


def _normalise(vec: list[Jet], guard: float):
    norm2 = vec[0] * vec[0]
    for comp in vec[1:]:
        norm2 = norm2 + comp * comp
    mask = np.sqrt(norm2.value) < guard
    safe = Jet(np.where(mask, 1.0, norm2.value), [np.where(mask, 0.0, g) for g in norm2.grad])
    norm = jt.sqrt(safe)
    return [comp / norm for comp in vec], mask


def frame(instance: ProblemInstance, B: list[Jet], guard: float = FRAME_GUARD) -> FieldFrame:
    """Normalised field frame from B-field jets.

    Guards: where ``|B| < guard`` the field falls back to the last axis;
    in 3D, where ``|b x e_z| < guard`` the first perpendicular falls back to
    ``normalise(e_y x b)``.  Derivatives are zero at fallback points.
    """
    d = instance.dim
    b, mask = _normalise(B, guard)
    b = _guarded(b, mask, [0.0] * (d - 1) + [1.0])
    fallback = int(np.count_nonzero(mask))
    if d == 2:
        return FieldFrame(b, [[-b[1], b[0]]], fallback)
    zero = Jet(np.zeros_like(np.asarray(b[0].value)), [0.0, 0.0, 0.0])
    p1_raw = [b[1], -b[0], zero]  # b x e_z
    p1, mask1 = _normalise(p1_raw, guard)
    if mask1.any():
        # e_y x b = (b_z, 0, -b_x), frozen (zero derivatives) at the guarded points
        bz, bx = np.asarray(b[2].value), np.asarray(b[0].value)
        nrm = np.hypot(bz, bx)
        nrm = np.where(mask1 & (nrm > 0), nrm, 1.0)
        alt = [bz / nrm, np.zeros_like(bz), -bx / nrm]
        p1 = [
            Jet(np.where(mask1, a, c.value), [np.where(mask1, 0.0, g) for g in c.grad])
            for a, c in zip(alt, p1)
        ]
    p2 = jt.cross(b, p1)
    fallback += int(np.count_nonzero(mask1 & ~mask))
    return FieldFrame(b, [p1, p2], fallback)


def frame_at(instance: ProblemInstance, x) -> FieldFrame:
    return frame(instance, bfield(instance, x))


# -- exact solution ----------------------------------------------------------


def exact_parts(instance: ProblemInstance, x, order: int = 2) -> tuple[Jet, Jet]:
    """Jets of the field-aligned part ``phi0`` and the perturbation profile ``p``."""
    c = _coords(x, order)
    w = instance.case.omega
    if instance.dim == 2:
        X, Z = c
        th, m = instance.case.theta, instance.case.m
        u = X * PI + (X * X - X) * th * jt.cos(Z * (m * PI))
        phi0 = jt.sin(u * w)
        p = jt.cos(Z * (2 * PI)) * jt.sin(X * PI)
    else:
        X, Y, Z = c
        u = X * PI + (X * X - X) * jt.sin(Y * (3 * PI)) * jt.cos(Z * PI)
        phi0 = jt.sin(u * w)
        p = jt.cos(Z * (2 * PI)) * jt.sin(X * PI) * jt.sin(Y * PI)
    return phi0, p


def exact_phi(instance: ProblemInstance, x, order: int = 2) -> Jet:
    phi0, p = exact_parts(instance, x, order)
    if instance.eps == 0.0:
        return phi0
    return phi0 + p * instance.eps


def exact_aux(instance: ProblemInstance, x) -> dict:
    """Exact solution and auxiliaries as order-1 jets.

    ``tau = grad phi . b_perp`` (``tau, chi`` against the two perpendiculars
    in 3D) and ``sigma = grad p . b``, which equals ``grad phi . b / eps`` for
    every eps > 0 and stays defined at eps = 0.
    """
    pts = _points(x)
    fr = frame_at(instance, pts)
    phi = exact_phi(instance, pts, order=2)
    _, p = exact_parts(instance, pts, order=2)
    dphi = jt.gradient_jets(phi)
    dp = jt.gradient_jets(p)
    out = {"phi": phi.with_order(1), "frame": fr}
    out["tau"] = _dot_jets(dphi, fr.perp[0])
    if instance.dim == 3:
        out["chi"] = _dot_jets(dphi, fr.perp[1])
    out["sigma"] = _dot_jets(dp, fr.b)
    return out


def _dot_jets(a: list[Jet], b: list[Jet]) -> Jet:
    s = a[0] * b[0]
    for u, v in zip(a[1:], b[1:]):
        s = s + u * v
    return s


class ExactModel:
    """Exact fields packaged like network outputs (``(points, order) -> jets``)."""

    def __init__(self, instance: ProblemInstance, scheme: str = "apfos"):
        if scheme not in ("apfos", "nonap"):
            raise ValueError(f"unknown scheme {scheme!r}")
        self.instance = instance
        self.scheme = scheme

    @property
    def n_out(self) -> int:
        return 1 if self.scheme == "nonap" else self.instance.dim + 1

    def __call__(self, points, order: int = 1) -> list[Jet]:
        if self.scheme == "nonap":
            return [exact_phi(self.instance, points, order=order)]
        if order != 1:
            raise ValueError("exact auxiliaries are available as order-1 jets only")
        aux = exact_aux(self.instance, points)
        names = ["phi", "tau", "sigma"] if self.instance.dim == 2 else ["phi", "tau", "chi", "sigma"]
        return [aux[n] for n in names]


def forcing(instance: ProblemInstance, x) -> np.ndarray:
    """Right-hand side ``f`` at points, assembled without dividing by eps."""
    pts = _points(x)
    fr = frame_at(instance, pts)
    phi0, p = exact_parts(instance, pts, order=2)
    op0 = jt.anisotropic_operators(phi0, fr.b)
    opp = jt.anisotropic_operators(p, fr.b)
    eps = instance.eps
    return -op0["lap_perp"] - eps * opp["lap_perp"] - opp["lap_par"]


def dirichlet_g(instance: ProblemInstance, x) -> np.ndarray:
    pts = _points(x)
    on = np.zeros(len(pts), dtype=bool)
    for ax in instance.dirichlet_axes:
        on |= (np.abs(pts[:, ax]) <= _ON_FACE_TOL) | (np.abs(pts[:, ax] - 1.0) <= _ON_FACE_TOL)
    if not on.all():
        bad = np.flatnonzero(~on)[:5]
        raise ValueError(f"points not on the Dirichlet boundary: {pts[bad].tolist()}")
    return np.asarray(exact_phi(instance, pts, order=1).value)


# -- sampling ------------------------------------------------------------------


def _split(n: int, parts: int) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]


def _face_points(rng, n: int, dim: int, axis: int, side: float) -> np.ndarray:
    pts = rng.random((n, dim))
    pts[:, axis] = side
    return pts


def sample(instance: ProblemInstance, n_interior: int, n_dirichlet: int, n_neumann: int,
           seed: int) -> CollocationSet:
    """Random collocation points, drawn from ``default_rng(seed)``.

    Interior points are uniform in the open domain.  Boundary totals are split
    equally over the faces of each boundary group (low face of each axis
    first); Neumann points carry outward normals ``-e_z`` / ``+e_z``.
    """
    if min(n_interior, n_dirichlet, n_neumann) < 0:
        raise ValueError("collocation counts must be >= 0")
    d = instance.dim
    rng = np.random.default_rng(seed)
    interior = rng.random((n_interior, d))
    # resample the (measure-zero) points that land on the boundary
    while True:
        bad = np.any(interior <= 0.0, axis=1)
        if not bad.any():
            break
        interior[bad] = rng.random((int(bad.sum()), d))

    faces = [(ax, side) for ax in instance.dirichlet_axes for side in (0.0, 1.0)]
    dirichlet = [
        _face_points(rng, n, d, ax, side)
        for (ax, side), n in zip(faces, _split(n_dirichlet, len(faces)))
    ]
    dirichlet = np.concatenate(dirichlet) if dirichlet else np.zeros((0, d))

    nax = instance.neumann_axis
    neumann, normals = [], []
    for side, n in zip((0.0, 1.0), _split(n_neumann, 2)):
        neumann.append(_face_points(rng, n, d, nax, side))
        nrm = np.zeros((n, d))
        nrm[:, nax] = -1.0 if side == 0.0 else 1.0
        normals.append(nrm)
    return CollocationSet(
        interior=interior,
        dirichlet=dirichlet,
        neumann=np.concatenate(neumann),
        normals=np.concatenate(normals),
        seed=seed,
    )


def eval_grid(instance: ProblemInstance, n: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Uniform tensor grid with nodes ``i / (n - 1)``, boundary included.

    Points are returned in row-major order (last coordinate fastest) together
    with the grid shape ``(n,) * dim``.
    """
    if n < 2:
        raise ValueError(f"grid needs at least 2 nodes per axis, got {n}")
    axis = np.arange(n) / (n - 1)
    mesh = np.meshgrid(*([axis] * instance.dim), indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    return pts, (n,) * instance.dim


def observations(instance: ProblemInstance, points, noise: float, seed: int) -> ObservationSet:
    """Exact values at ``points`` plus ``noise * N(0, 1)`` from ``default_rng(seed)``."""
    if noise < 0:
        raise ValueError(f"noise level must be >= 0, got {noise}")
    pts = _points(points)
    exact = np.asarray(exact_phi(instance, pts, order=1).value, dtype=np.float64)
    values = exact.copy()
    if noise > 0:
        rng = np.random.default_rng(seed)
        values = exact + noise * rng.standard_normal(len(pts))
    return ObservationSet(points=pts, values=values, noise=float(noise), seed=seed)
