"""Finite-difference checks of parameter gradients and spatial jets.

Parameter gradients of each functional are compared with central
differences (step 1e-6) using the norm-wise relative error
``|g_ad - g_fd| / |g_fd|``.  The differences run on plain numpy values, so
they exercise the same loss code without a tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import adtape as ad
from . import loss as L
from . import network as N
from . import problem as P

__all__ = ["CheckResult", "LOSSES", "central_diff", "rel_error", "check_loss", "check_jets", "run_suite"]

LOSSES = ("apfos_2d", "apfos_3d", "nonap_2d", "ident_apfos_2d", "ident_nonap_2d")


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.error) and self.error < self.tol)


def central_diff(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2.0 * h)
    return g


def rel_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    den = np.linalg.norm(b)
    num = np.linalg.norm(a - b)
    return float(num / den) if den > 0 else float(num)


def _tiny_case(name: str, rng: np.random.Generator, width: int = 5):
    """Random small instance, network and evaluator pair for one functional."""
    dim = 3 if name == "apfos_3d" else 2
    setup = "II" if dim == 3 else "I"
    case = 2 if dim == 3 else int(rng.integers(1, 4))
    eps = float(rng.choice([1.0, 1e-2, 1e-20, 0.0])) if not name.startswith("ident") else None
    inst = P.ProblemInstance.from_case(setup, case, eps if eps is not None else 1.0)
    seed = int(rng.integers(2**31))
    ident = name.startswith("ident")
    colloc = P.sample(inst, 10, 0 if ident else 4, 4, seed)
    obs = P.observations(inst, colloc.interior, 0.01, seed) if ident else None
    data = L.prepare(inst, colloc, obs)
    n_out = 1 if "nonap" in name else dim + 1
    layers = (dim, width, width, n_out)
    theta = N.init_params(layers, seed) + 0.1 * rng.standard_normal(N.param_count(layers))
    fn = {
        "apfos_2d": L.apfos_loss_2d,
        "apfos_3d": L.apfos_loss_3d,
        "nonap_2d": L.nonap_loss_2d,
        "ident_apfos_2d": L.ident_apfos_loss_2d,
        "ident_nonap_2d": L.ident_nonap_loss_2d,
    }[name]
    if ident:
        x0 = np.concatenate([theta, [rng.uniform(-3.0, 1.0)]])

        def value(z):
            return fn(N.NetworkModel(layers, z[:-1]), z[-1], data)[0]
    else:
        x0 = theta

        def value(z):
            return fn(N.NetworkModel(layers, z), data)[0]

    return value, x0


def check_loss(name: str, rng: np.random.Generator, tol: float = 1e-5, h: float = 1e-6) -> CheckResult:
    value, x0 = _tiny_case(name, rng)
    tape = ad.Tape(x0)
    g_ad = tape.backward(value(tape.params))
    g_fd = central_diff(lambda z: float(value(z)), x0, h)
    return CheckResult(name, rel_error(g_ad, g_fd), tol)


def check_jets(rng: np.random.Generator, dim: int = 2, h: float = 1e-5):
    """Network output jets against differences of values (gradient) and of jet gradients (Hessian)."""
    layers = (dim, 5, 5, 2)
    theta = N.init_params(layers, int(rng.integers(2**31)))
    x = rng.uniform(0.1, 0.9, size=(3, dim))
    outs = N.forward_jets(theta, layers, x, order=2)
    g_err = h_err = 0.0
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = h
        vp = np.asarray(N.forward(theta, layers, x + e))
        vm = np.asarray(N.forward(theta, layers, x - e))
        jp = N.forward_jets(theta, layers, x + e, order=1)
        jm = N.forward_jets(theta, layers, x - e, order=1)
        for o, out in enumerate(outs):
            fd = (vp[:, o] - vm[:, o]) / (2 * h)
            g_err = max(g_err, rel_error(out.grad[k], fd))
            for i in range(dim):
                fd2 = (np.asarray(jp[o].grad[i]) - np.asarray(jm[o].grad[i])) / (2 * h)
                h_err = max(h_err, rel_error(out.hess[i][k], fd2))
    return CheckResult(f"jet_grad_{dim}d", g_err, 1e-5), CheckResult(f"jet_hess_{dim}d", h_err, 1e-4)


def run_suite(trials: int = 100, seed: int = 0, report=None) -> list[CheckResult]:
    """Worst-case result per check over ``trials`` random draws."""
    rng = np.random.default_rng(seed)
    worst: dict[str, CheckResult] = {}

    def keep(r: CheckResult):
        err = r.error if np.isfinite(r.error) else np.inf
        if r.name not in worst or err > worst[r.name].error:
            worst[r.name] = CheckResult(r.name, err, r.tol)

    for _ in range(trials):
        for name in LOSSES:
            keep(check_loss(name, rng))
        for dim in (2, 3):
            for r in check_jets(rng, dim):
                keep(r)
    out = list(worst.values())
    if report is not None:
        for r in out:
            report(r)
    return out
