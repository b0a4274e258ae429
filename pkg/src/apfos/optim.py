"""Adam, L-BFGS with a strong-Wolfe line search, and the training loop.

Both optimizers work on flat float64 vectors and a callable returning
``(value, gradient)``.  Stopping follows

    while |G_k - G_{k-1}| > tol and k <= max_iter: ...

so ``tol = 0`` runs the full budget unless the loss is exactly flat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "AdamState",
    "adam_step",
    "LbfgsConfig",
    "StopRule",
    "LbfgsResult",
    "strong_wolfe",
    "lbfgs_minimize",
    "NumericalError",
    "TrainResult",
    "train",
]

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


class NumericalError(RuntimeError):
    """Raised when the objective returns a non-finite value or gradient."""


@dataclass(frozen=True)
class StopRule:
    tol: float = 0.0
    max_iter: int = 1000

    def __post_init__(self):
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")

    def keep_going(self, k: int, prev: float | None, cur: float | None) -> bool:
        """True while iteration ``k`` (1-based) should run."""
        if k > self.max_iter:
            return False
        if prev is None or cur is None:
            return True
        return abs(cur - prev) > self.tol


# -- Adam ----------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), **hyper)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError(
            f"length mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)


# -- line search ---------------------------------------------------------------


def _cubic_min(x1, f1, g1, x2, f2, g2, lo, hi):
    """Minimiser of the cubic interpolating two points, clamped to [lo, hi]."""
    d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2)
    sq = d1 * d1 - g1 * g2
    if sq >= 0 and x1 != x2:
        d2 = math.sqrt(sq)
        if x1 > x2:
            d2 = -d2
        denom = g2 - g1 + 2.0 * d2
        if denom != 0:
            x = x2 - (x2 - x1) * ((g2 + d2 - d1) / denom)
            if np.isfinite(x):
                return min(max(x, lo), hi)
    return 0.5 * (lo + hi)


@dataclass
class _Point:
    t: float
    f: float
    g: np.ndarray
    d: float  # directional derivative


def strong_wolfe(fun: Objective, x: np.ndarray, t: float, direction: np.ndarray,
                 f0: float, g0: np.ndarray, c1: float = 1e-4, c2: float = 0.9,
                 max_evals: int = 25, tol_change: float = 1e-12):
    """Step length satisfying the strong Wolfe conditions.

    Bracketing phase followed by a cubic-interpolation zoom.  Returns
    ``(ok, t, f, g, n_evals)``; when no acceptable step is found, ``ok`` is
    False and the best point seen with ``f < f0`` (if any) is returned.
    """
    d0 = float(g0 @ direction)
    if d0 >= 0:
        return False, 0.0, f0, g0, 0
    d_max = np.max(np.abs(direction))
    prev = _Point(0.0, f0, g0, d0)
    evals = 0
    best = prev

    def evaluate(step):
        nonlocal evals, best
        f, g = fun(x + step * direction)
        evals += 1
        p = _Point(step, float(f), g, float(g @ direction))
        if np.isfinite(p.f) and p.f < best.f:
            best = p
        return p

    cur = evaluate(t)
    bracket = None
    i = 0
    while evals < max_evals:
        if not np.isfinite(cur.f):
            bracket = (prev, cur)
            break
        if cur.f > f0 + c1 * cur.t * d0 or (i > 0 and cur.f >= prev.f):
            bracket = (prev, cur)
            break
        if abs(cur.d) <= -c2 * d0:
            return True, cur.t, cur.f, cur.g, evals
        if cur.d >= 0:
            bracket = (prev, cur)
            break
        # extrapolate
        lo_t = cur.t + 0.01 * (cur.t - prev.t)
        hi_t = cur.t * 10.0
        nt = _cubic_min(prev.t, prev.f, prev.d, cur.t, cur.f, cur.d, lo_t, hi_t)
        prev, cur = cur, evaluate(nt)
        i += 1
    if bracket is None:
        return _fallback(best, f0, evals)

    lo, hi = bracket
    if not np.isfinite(hi.f):
        hi = _Point(hi.t, np.inf, hi.g, np.inf)
    # zoom: lo always satisfies sufficient decrease and has the lower value
    if hi.f < lo.f and np.isfinite(hi.f):
        lo, hi = hi, lo
    insuf = False
    while evals < max_evals:
        if abs(hi.t - lo.t) * d_max < tol_change:
            break
        a, b = min(lo.t, hi.t), max(lo.t, hi.t)
        if np.isfinite(hi.f):
            nt = _cubic_min(lo.t, lo.f, lo.d, hi.t, hi.f, hi.d, a, b)
        else:
            nt = 0.5 * (a + b)
        # keep away from the bracket ends
        eps = 0.1 * (b - a)
        if min(b - nt, nt - a) < eps:
            if insuf or nt >= b or nt <= a:
                nt = b - eps if abs(nt - b) < abs(nt - a) else a + eps
                insuf = False
            else:
                insuf = True
        else:
            insuf = False
        p = evaluate(nt)
        if not np.isfinite(p.f) or p.f > f0 + c1 * p.t * d0 or p.f >= lo.f:
            hi = p if np.isfinite(p.f) else _Point(p.t, np.inf, p.g, np.inf)
        else:
            if abs(p.d) <= -c2 * d0:
                return True, p.t, p.f, p.g, evals
            if p.d * (hi.t - lo.t) >= 0:
                hi = lo
            lo = p
    return _fallback(best, f0, evals)


def _fallback(best: _Point, f0: float, evals: int):
    if best.t > 0 and best.f < f0:
        return False, best.t, best.f, best.g, evals
    return False, 0.0, f0, None, evals


# -- L-BFGS --------------------------------------------------------------------


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 25
    curvature_eps: float = 1e-10


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    evaluations: int
    trace: list[tuple[int, float]] = field(default_factory=list)
    status: str = "max_iter"

    @property
    def line_search_failed(self) -> bool:
        return self.status == "line_search_failed"


def _two_loop(g: np.ndarray, pairs) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _checked(fun: Objective, x):
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericalError(f"non-finite objective (value {f})")
    return f, g


def lbfgs_minimize(fun: Objective, x0, config: LbfgsConfig = LbfgsConfig(),
                   stop: StopRule = StopRule(), callback=None) -> LbfgsResult:
    """Minimise ``fun`` with limited-memory BFGS.

    ``callback(k, x, f)`` runs after every accepted iteration ``k``; returning
    True stops the run.  Accepted values never increase.  A failed line
    search stops the run with ``status == "line_search_failed"`` and the best
    iterate so far.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = _checked(fun, x)
    evals = 1
    pairs: list[tuple[np.ndarray, np.ndarray, float]] = []
    res = LbfgsResult(x, f, g, 0, evals, [])
    prev_f = None
    k = 1
    status = "max_iter"

    def safe(xx):
        ff, gg = fun(xx)
        ff = float(ff)
        gg = np.asarray(gg, dtype=np.float64)
        if not np.all(np.isfinite(gg)):
            ff = np.inf
        return ff, gg

    while stop.keep_going(k, prev_f, f if prev_f is not None else None):
        gnorm1 = np.abs(g).sum()
        if gnorm1 == 0.0:
            prev_f = f
            res.trace.append((k, f))
            res.iterations = k
            if callback is not None:
                callback(k, x, f)
            status = "tol"
            break
        d = _two_loop(g, pairs)
        if g @ d >= 0:  # not a descent direction: restart from steepest descent
            pairs.clear()
            d = -g
        t0 = min(1.0, 1.0 / gnorm1) if not pairs else 1.0
        ok, t, f_new, g_new, n = strong_wolfe(safe, x, t0, d, f, g, config.c1, config.c2, config.max_ls)
        evals += n
        if g_new is None or t == 0.0:
            status = "line_search_failed"
            break
        s = t * d
        y = g_new - g
        sy = s @ y
        if sy > config.curvature_eps:
            pairs.append((s, y, 1.0 / sy))
            if len(pairs) > config.memory:
                pairs.pop(0)
        x = x + s
        prev_f, f, g = f, f_new, g_new
        res.trace.append((k, f))
        res.iterations = k
        stop_now = callback(k, x, f) if callback is not None else False
        if not ok:
            status = "line_search_failed"
            break
        if stop_now:
            status = "callback"
            break
        k += 1
    else:
        status = "tol" if k <= stop.max_iter else "max_iter"

    res.x, res.f, res.g, res.evaluations, res.status = x, f, g, evals, status
    return res


# -- training loop -------------------------------------------------------------


@dataclass
class TrainResult:
    params: np.ndarray
    value: float
    iterations: int
    status: str
    trace: list[dict]
    snapshots: dict[int, object] = field(default_factory=dict)


def train(evaluate: Callable, theta0, optimizer: str = "lbfgs", stop: StopRule = StopRule(),
          log_every: int = 1, snapshots: Sequence[int] = (), on_snapshot=None,
          lbfgs: LbfgsConfig = LbfgsConfig(), adam: dict | None = None,
          on_iter=None, log_offset: int = 0) -> TrainResult:
    """Run an optimizer on ``evaluate(theta) -> (value, grad, row)``.

    ``row`` is a dict of per-term values logged every ``log_every`` iterations
    (iteration 0 and the final iteration are always logged).  At each
    iteration in ``snapshots`` ``on_snapshot(k, theta)`` is called and its
    return value stored.  ``log_offset`` shifts the logging cadence so a
    run continuing from an earlier phase keeps a global rhythm.
    """
    snaps = set(int(s) for s in snapshots)
    trace: list[dict] = []
    stored: dict[int, object] = {}
    last_row = {}

    def fun(theta):
        value, grad, row = evaluate(theta)
        last_row.clear()
        last_row.update(row)
        return value, grad

    def record(k, theta, value, row):
        if on_iter is not None:
            on_iter(k, theta, value)
        if k in snaps and on_snapshot is not None:
            stored[k] = on_snapshot(k, theta)
        if (k + log_offset) % max(log_every, 1) == 0:
            trace.append({"iter": k, **row})

    theta = np.array(theta0, dtype=np.float64)
    value, grad, row0 = evaluate(theta)
    if not np.isfinite(value):
        raise NumericalError(f"non-finite initial loss {value}")
    trace.append({"iter": 0, **row0})
    if 0 in snaps and on_snapshot is not None:
        stored[0] = on_snapshot(0, theta)

    if optimizer == "lbfgs":
        rows_at_accept = {}

        def cb(k, x, f):
            # the last evaluation inside the line search is the accepted point
            # only when the search ended there; recompute the row otherwise
            row = dict(last_row) if last_row.get("total") == f else evaluate(x)[2]
            rows_at_accept[k] = row
            record(k, x, f, row)
            return False

        res = lbfgs_minimize(fun, theta, lbfgs, stop, callback=cb)
        theta, value, iters, status = res.x, res.f, res.iterations, res.status
        final_row = rows_at_accept.get(iters, row0)
    elif optimizer == "adam":
        state = AdamState.zeros(theta.size, **(adam or {}))
        prev, k, status, final_row = None, 1, "max_iter", row0
        while stop.keep_going(k, prev, value if prev is not None else None):
            new_theta, state = adam_step(state, theta, grad)
            new_value, new_grad, row = evaluate(new_theta)
            if not np.isfinite(new_value) or not np.all(np.isfinite(new_grad)):
                raise NumericalError(f"non-finite loss at Adam step {k}")
            prev, value, grad, theta, final_row = value, new_value, new_grad, new_theta, row
            record(k, theta, value, row)
            k += 1
        iters = k - 1
        if iters < stop.max_iter:
            status = "tol"
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")

    if not trace or trace[-1]["iter"] != iters:
        trace.append({"iter": iters, **final_row})
    return TrainResult(theta, float(value), iters, status, trace, stored)
