"""Forward runs, two-phase identification runs and width/depth sweeps."""

from __future__ import annotations

import datetime as _dt
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import adtape as ad
from . import loss as L
from . import metrics as M
from . import network as N
from . import problem as P
from .config import ConfigError, RunConfig, axis_names
from .optim import LbfgsConfig, NumericalError, StopRule, train

__all__ = ["RunResult", "run", "run_forward", "run_identify", "sweep", "SweepRow", "NUMERIC_FAILURES"]

log = logging.getLogger(__name__)

NUMERIC_FAILURES = ("line_search_failed", "non_finite")


@dataclass
class RunResult:
    config: RunConfig
    params: np.ndarray
    layers: tuple[int, ...]
    loss_trace: list[dict]
    error_trace: list[tuple[int, M.ErrorTriple]]
    grid_points: np.ndarray
    grid_shape: tuple[int, ...]
    pred: np.ndarray
    exact: np.ndarray
    slices: list[M.Slice]
    status: str
    fallback: dict
    started: str
    finished: str
    eps_hat: float | None = None
    eps_trace: list[tuple[int, int, float]] = field(default_factory=list)
    message: str = ""

    @property
    def failed(self) -> bool:
        return self.status in NUMERIC_FAILURES

    @property
    def final_errors(self) -> M.ErrorTriple | None:
        return self.error_trace[-1][1] if self.error_trace else None

    def manifest(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "version": __version__,
            "started": self.started,
            "finished": self.finished,
            "status": self.status,
            "message": self.message,
            "layers": list(self.layers),
            "frame_fallback": self.fallback,
            "eps_hat": self.eps_hat,
            "params": [float(v) for v in self.params],
            "loss_trace": self.loss_trace,
            "error_trace": [{"iter": k, **vars(e)} for k, e in self.error_trace],
            "eps_trace": [{"iter": k, "phase": ph, "eps": e} for k, ph, e in self.eps_trace],
        }


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _instance(cfg: RunConfig) -> P.ProblemInstance:
    return P.ProblemInstance.from_case(cfg.problem.setup, cfg.problem.case, cfg.problem.eps)


def _check(cfg: RunConfig, mode: str) -> None:
    if cfg.mode != mode:
        raise ConfigError(f"config has mode {cfg.mode!r}, expected {mode!r}")
    N.validate(cfg.layers)


def _weights(cfg: RunConfig, data: L.LossData) -> L.LossWeights:
    n_f, n_d, n_n = data.counts
    if cfg.mode == "forward":
        base = L.LossWeights.forward(n_d)
    elif cfg.scheme == "apfos":
        base = L.LossWeights.identification(n_f, n_n)
    else:
        base = L.LossWeights.nonap_identification(n_f, n_n)
    return replace(base, **cfg.weights)


def _forward_loss(cfg: RunConfig):
    if cfg.scheme == "nonap":
        return L.nonap_loss_2d
    return L.apfos_loss_2d if cfg.problem.dim == 2 else L.apfos_loss_3d


def _ident_loss(cfg: RunConfig):
    return L.ident_apfos_loss_2d if cfg.scheme == "apfos" else L.ident_nonap_loss_2d


class _Grid:
    """Evaluation grid with the exact solution cached."""

    def __init__(self, inst: P.ProblemInstance, n: int):
        self.points, self.shape = P.eval_grid(inst, n)
        self.exact = np.asarray(P.exact_phi(inst, self.points, order=1).value, dtype=np.float64)

    def predict(self, theta, layers) -> np.ndarray:
        return np.asarray(N.forward(theta, layers, self.points))[:, 0]

    def errors(self, theta, layers) -> M.ErrorTriple:
        return M.errors(self.predict(theta, layers), self.exact)


def _slices(cfg: RunConfig, grid: _Grid, pred: np.ndarray) -> list[M.Slice]:
    names = axis_names(cfg.problem.dim)
    out = []
    for s in cfg.output.slices:
        constraints = {names.index(k): v for k, v in s.items()}
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", M.SliceWarning)
            sl = M.slice_grid(pred, grid.exact, grid.shape, constraints)
        for w in caught:
            log.warning("%s", w.message)
        out.append(sl)
    return out


def _evaluator(fn, layers, data, weights, with_eps: bool):
    """Closure returning ``(value, grad, row)`` for the flat optimisation vector."""

    def evaluate(z):
        tape = ad.Tape(z)
        p = tape.params
        if with_eps:
            total, br = fn(N.NetworkModel(layers, p[:-1]), p[-1], data, weights)
        else:
            total, br = fn(N.NetworkModel(layers, p), data, weights)
        return br.total, tape.backward(total), br.row()

    return evaluate


def _finish(cfg, inst, grid, layers, theta, loss_trace, error_trace, status, fallback,
            started, message="", eps_hat=None, eps_trace=()):
    pred = grid.predict(theta, layers)
    return RunResult(
        config=cfg, params=np.asarray(theta), layers=layers,
        loss_trace=loss_trace, error_trace=error_trace,
        grid_points=grid.points, grid_shape=grid.shape, pred=pred, exact=grid.exact,
        slices=_slices(cfg, grid, pred), status=status, fallback=fallback,
        started=started, finished=_now(), eps_hat=eps_hat, eps_trace=list(eps_trace),
        message=message,
    )


def run_forward(cfg: RunConfig) -> RunResult:
    """Train a network on the forward functional and evaluate it on the grid."""
    _check(cfg, "forward")
    started = _now()
    inst = _instance(cfg)
    pc = cfg.problem
    colloc = P.sample(inst, pc.n_interior, pc.n_dirichlet, pc.n_neumann, cfg.seed)
    data = L.prepare(inst, colloc)
    weights = _weights(cfg, data)
    layers = cfg.layers
    theta0 = N.init_params(layers, cfg.init_seed)
    grid = _Grid(inst, pc.grid)
    oc = cfg.optimizer
    snaps = sorted(set(oc.snapshots) | {oc.max_iter})

    status, message = "ok", ""
    try:
        res = train(
            _evaluator(_forward_loss(cfg), layers, data, weights, False), theta0,
            optimizer=oc.name, stop=StopRule(oc.tol, oc.max_iter), log_every=oc.log_every,
            snapshots=snaps, on_snapshot=lambda k, th: grid.errors(th, layers),
            lbfgs=LbfgsConfig(oc.memory, oc.c1, oc.c2),
            adam=dict(lr=oc.lr, beta1=oc.beta1, beta2=oc.beta2, eps=oc.adam_eps),
        )
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return _finish(cfg, inst, grid, layers, theta0, [], [], "non_finite",
                       {"collocation": data.fallback}, started, str(exc))
    theta = res.params
    error_trace = sorted(res.snapshots.items())
    if res.iterations not in res.snapshots:
        error_trace.append((res.iterations, grid.errors(theta, layers)))
    if res.status == "line_search_failed":
        status, message = res.status, f"line search failed at iteration {res.iterations}"
    return _finish(cfg, inst, grid, layers, theta, res.trace, error_trace, status,
                   {"collocation": data.fallback}, started, message)


class _FrozenModel:
    """Network outputs evaluated once at fixed parameters (phase 1)."""

    def __init__(self, layers, theta, points, order):
        self.n_out = layers[-1]
        self._points = points
        self._order = order
        self._outs = N.forward_jets(theta, layers, points, order)

    def __call__(self, points, order=1):
        if order != self._order or points.shape != self._points.shape or not np.array_equal(points, self._points):
            raise ValueError("frozen model can only be evaluated at its cached points")
        return self._outs


def run_identify(cfg: RunConfig) -> RunResult:
    """Two-phase estimation of eps = exp(eps*) from interior observations.

    Phase 1 runs Adam on eps* with the network frozen at its initialisation
    (or jointly on both when ``pretrain_network`` is set); phase 2 runs L-BFGS
    on the network parameters and eps* together.  Iterations are numbered
    continuously across the phases.
    """
    _check(cfg, "identify")
    started = _now()
    inst = _instance(cfg)
    pc, ic, oc = cfg.problem, cfg.identification, cfg.optimizer
    colloc = P.sample(inst, pc.n_interior, 0, pc.n_neumann, cfg.seed)
    obs = P.observations(inst, colloc.interior, ic.noise, cfg.seed + 1)
    data = L.prepare(inst, colloc, obs)
    weights = _weights(cfg, data)
    layers = cfg.layers
    fn = _ident_loss(cfg)
    grid = _Grid(inst, pc.grid)
    theta = N.init_params(layers, cfg.init_seed)
    log_eps0 = float(np.log(float(ic.eps0)))
    fallback = {"collocation": data.fallback}
    eps_trace: list[tuple[int, int, float]] = [(0, 1, float(np.exp(log_eps0)))]
    n1 = ic.phase1_iter
    order = 2 if cfg.scheme == "nonap" else 1

    # phase 1
    if ic.pretrain_network:
        ev1 = _evaluator(fn, layers, data, weights, True)
        z0 = np.concatenate([theta, [log_eps0]])
    else:
        frozen = _FrozenModel(layers, theta, data.points, order)

        def ev1(z):
            tape = ad.Tape(z)
            total, br = fn(frozen, tape.params[0], data, weights)
            return br.total, tape.backward(total), br.row()

        z0 = np.array([log_eps0])
    try:
        r1 = train(
            ev1, z0, optimizer="adam", stop=StopRule(oc.tol, n1), log_every=oc.log_every,
            adam=dict(lr=ic.phase1_lr, beta1=oc.beta1, beta2=oc.beta2, eps=oc.adam_eps),
            on_iter=lambda k, z, v: eps_trace.append((k, 1, float(np.exp(z[-1])))),
        )
        if ic.pretrain_network:
            theta = r1.params[:-1]
        log_eps = float(r1.params[-1])
        done1 = r1.iterations

        # phase 2
        ev2 = _evaluator(fn, layers, data, weights, True)
        snaps = sorted(set(s - done1 for s in oc.snapshots if s > done1))
        r2 = train(
            ev2, np.concatenate([theta, [log_eps]]), optimizer="lbfgs",
            stop=StopRule(oc.tol, ic.phase2_iter), log_every=oc.log_every,
            snapshots=snaps, on_snapshot=lambda k, z: grid.errors(z[:-1], layers),
            lbfgs=LbfgsConfig(oc.memory, oc.c1, oc.c2),
            on_iter=lambda k, z, v: eps_trace.append((done1 + k, 2, float(np.exp(z[-1])))),
            log_offset=done1,
        )
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return _finish(cfg, inst, grid, layers, theta, [], [], "non_finite", fallback, started,
                       str(exc), eps_trace[-1][2], eps_trace)

    loss_trace = list(r1.trace)
    loss_trace += [dict(r, iter=done1 + r["iter"]) for r in r2.trace if r["iter"] > 0 or not r1.trace]
    theta, log_eps = r2.params[:-1], float(r2.params[-1])
    error_trace = [(done1 + k, e) for k, e in sorted(r2.snapshots.items())]
    final_iter = done1 + r2.iterations
    if not error_trace or error_trace[-1][0] != final_iter:
        error_trace.append((final_iter, grid.errors(theta, layers)))
    status, message = "ok", ""
    if r2.status == "line_search_failed":
        status, message = r2.status, f"line search failed at iteration {final_iter}"
    return _finish(cfg, inst, grid, layers, theta, loss_trace, error_trace, status, fallback,
                   started, message, float(np.exp(log_eps)), eps_trace)


def run(cfg: RunConfig) -> RunResult:
    return run_forward(cfg) if cfg.mode == "forward" else run_identify(cfg)


@dataclass(frozen=True)
class SweepRow:
    layers: int
    neurons: int
    E1: float
    E2: float
    Einf: float
    loss: float
    status: str


def sweep(cfg: RunConfig, depths, widths, out_dir=None, on_result=None) -> list[SweepRow]:
    """One run per (hidden layers, neurons) cell with the base config's seeds."""
    depths, widths = [int(d) for d in depths], [int(w) for w in widths]
    if not depths or not widths or min(depths + widths) < 1:
        raise ConfigError("sweep needs non-empty lists of positive depths and widths")
    rows = []
    for d in depths:
        for w in widths:
            cell = replace(cfg, network=replace(cfg.network, hidden=(w,) * d))
            if out_dir is not None:
                cell = cell.with_output(str(Path(out_dir) / f"L{d}_N{w}"))
            res = run(cell)
            e = res.final_errors or M.ErrorTriple(np.nan, np.nan, np.nan)
            final = res.loss_trace[-1]["total"] if res.loss_trace else np.nan
            rows.append(SweepRow(d, w, e.E1, e.E2, e.Einf, final, res.status))
            if on_result is not None:
                on_result(cell, res)
    return rows
