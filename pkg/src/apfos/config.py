"""Run configuration: YAML schema, defaults and validation.

A config file looks like::

    mode: forward            # forward | identify
    scheme: apfos            # apfos | nonap
    seed: 0
    problem:
      setup: I               # I (2D, coordinates x,z) | II (3D, x,y,z)
      case: 1
      eps: "1e-2"            # decimal string, parsed exactly
      n_interior: 1000
      n_dirichlet: 100
      n_neumann: 100
      grid: 100              # evaluation nodes per axis
    network:
      hidden: [20, 20, 20]
      init_seed: null        # defaults to seed
    weights: {}              # overrides of loss.LossWeights fields
    optimizer:
      name: lbfgs            # lbfgs | adam
      max_iter: 2000
      tol: 0.0
      log_every: 1
      snapshots: []          # the final iteration is always evaluated
      lr: 1.0e-3             # adam only
      memory: 10             # lbfgs only
    identification:
      eps0: "0.1"
      phase1_iter: 500
      phase1_lr: 1.0e-3
      phase2_iter: 2000
      noise: 0.0
      pretrain_network: false
    output:
      dir: runs/example
      slices: [{x: 0.5}]
      svg: true

Unknown keys are rejected.  A ``manifest.json`` written by a run is also
accepted; its ``config`` entry is read.  ``preset:NAME`` loads one of the
bundled configs listed by :func:`presets`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path

import yaml

from .loss import LossWeights
from .problem import CASES

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "NetworkConfig",
    "OptimizerConfig",
    "IdentificationConfig",
    "OutputConfig",
    "RunConfig",
    "from_dict",
    "load_config",
    "dump_config",
    "axis_names",
    "presets",
]

_PRESET_DIR = Path(__file__).with_name("presets")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def axis_names(dim: int) -> tuple[str, ...]:
    return ("x", "z") if dim == 2 else ("x", "y", "z")


def _decimal_str(value, what: str) -> str:
    text = str(value).strip()
    try:
        d = Decimal(text)
    except InvalidOperation:
        raise ConfigError(f"{what}: {value!r} is not a decimal number") from None
    if not d.is_finite():
        raise ConfigError(f"{what}: must be finite, got {value!r}")
    return text


@dataclass(frozen=True)
class ProblemConfig:
    setup: str = "I"
    case: int = 1
    eps: str = "1e-2"
    n_interior: int = 1000
    n_dirichlet: int = 100
    n_neumann: int = 100
    grid: int = 100

    @property
    def dim(self) -> int:
        return 2 if self.setup == "I" else 3


@dataclass(frozen=True)
class NetworkConfig:
    hidden: tuple[int, ...] = (20, 20, 20)
    init_seed: int | None = None


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "lbfgs"
    max_iter: int = 2000
    tol: float = 0.0
    log_every: int = 1
    snapshots: tuple[int, ...] = ()
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9


@dataclass(frozen=True)
class IdentificationConfig:
    eps0: str = "0.1"
    phase1_iter: int = 500
    phase1_lr: float = 1e-3
    phase2_iter: int = 2000
    noise: float = 0.0
    pretrain_network: bool = False


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs/out"
    slices: tuple = ()
    svg: bool = True


@dataclass(frozen=True)
class RunConfig:
    mode: str = "forward"
    scheme: str = "apfos"
    seed: int = 0
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    weights: dict = field(default_factory=dict)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    identification: IdentificationConfig = field(default_factory=IdentificationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def init_seed(self) -> int:
        return self.seed if self.network.init_seed is None else self.network.init_seed

    @property
    def n_out(self) -> int:
        return 1 if self.scheme == "nonap" else self.problem.dim + 1

    @property
    def layers(self) -> tuple[int, ...]:
        return (self.problem.dim, *self.network.hidden, self.n_out)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))

    def with_output(self, out: str) -> "RunConfig":
        return replace(self, output=replace(self.output, dir=str(out)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["network"]["hidden"] = list(self.network.hidden)
        d["optimizer"]["snapshots"] = list(self.optimizer.snapshots)
        d["output"]["slices"] = [dict(s) for s in self.output.slices]
        return d


# -- parsing -------------------------------------------------------------------


def _section(cls, raw, name: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(raw).__name__}")
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"{name}: unknown key(s) {sorted(extra)}; allowed {sorted(known)}")
    return cls(**raw)


def _int(value, what: str, lo: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{what}: expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{what}: must be >= {lo}, got {value}")
    return value


def _float(value, what: str, lo: float | None = None) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{what}: expected a number, got {value!r}")
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: expected a number, got {value!r}") from None
    if v != v or v in (float("inf"), float("-inf")):
        raise ConfigError(f"{what}: must be finite")
    if lo is not None and v < lo:
        raise ConfigError(f"{what}: must be >= {lo}, got {v}")
    return v


def from_dict(raw: dict) -> RunConfig:
    """Build and validate a :class:`RunConfig` from a parsed mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    known = {f.name for f in fields(RunConfig)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown top-level key(s) {sorted(extra)}; allowed {sorted(known)}")
    try:
        problem = _section(ProblemConfig, raw.get("problem"), "problem")
        network = _section(NetworkConfig, raw.get("network"), "network")
        optimizer = _section(OptimizerConfig, raw.get("optimizer"), "optimizer")
        ident = _section(IdentificationConfig, raw.get("identification"), "identification")
        output = _section(OutputConfig, raw.get("output"), "output")
    except TypeError as exc:  # pragma: no cover - guarded by the key check
        raise ConfigError(str(exc)) from None

    setup = str(problem.setup).upper()
    if setup not in ("I", "II"):
        raise ConfigError(f"problem.setup: expected 'I' or 'II', got {problem.setup!r}")
    _int(problem.case, "problem.case")
    if problem.case not in CASES:
        raise ConfigError(f"problem.case: expected one of {sorted(CASES)}, got {problem.case}")
    eps = _decimal_str(problem.eps, "problem.eps")
    if Decimal(eps) < 0:
        raise ConfigError(f"problem.eps: must be >= 0, got {eps}")
    problem = replace(
        problem, setup=setup, eps=eps,
        n_interior=_int(problem.n_interior, "problem.n_interior", 0),
        n_dirichlet=_int(problem.n_dirichlet, "problem.n_dirichlet", 0),
        n_neumann=_int(problem.n_neumann, "problem.n_neumann", 0),
        grid=_int(problem.grid, "problem.grid", 2),
    )

    hidden = network.hidden
    if not isinstance(hidden, (list, tuple)) or not hidden:
        raise ConfigError(f"network.hidden: expected a non-empty list of widths, got {hidden!r}")
    hidden = tuple(_int(h, "network.hidden", 1) for h in hidden)
    init_seed = network.init_seed
    if init_seed is not None:
        init_seed = _int(init_seed, "network.init_seed", 0)
    network = NetworkConfig(hidden, init_seed)

    if optimizer.name not in ("lbfgs", "adam"):
        raise ConfigError(f"optimizer.name: expected 'lbfgs' or 'adam', got {optimizer.name!r}")
    snaps = optimizer.snapshots or ()
    if not isinstance(snaps, (list, tuple)):
        raise ConfigError("optimizer.snapshots: expected a list of iterations")
    optimizer = replace(
        optimizer,
        max_iter=_int(optimizer.max_iter, "optimizer.max_iter", 0),
        tol=_float(optimizer.tol, "optimizer.tol", 0.0),
        log_every=_int(optimizer.log_every, "optimizer.log_every", 1),
        snapshots=tuple(sorted(set(_int(s, "optimizer.snapshots", 0) for s in snaps))),
        lr=_float(optimizer.lr, "optimizer.lr", 0.0),
        beta1=_float(optimizer.beta1, "optimizer.beta1", 0.0),
        beta2=_float(optimizer.beta2, "optimizer.beta2", 0.0),
        adam_eps=_float(optimizer.adam_eps, "optimizer.adam_eps", 0.0),
        memory=_int(optimizer.memory, "optimizer.memory", 1),
        c1=_float(optimizer.c1, "optimizer.c1", 0.0),
        c2=_float(optimizer.c2, "optimizer.c2", 0.0),
    )
    if not 0 < optimizer.c1 < optimizer.c2 < 1:
        raise ConfigError(f"optimizer: need 0 < c1 < c2 < 1, got c1={optimizer.c1}, c2={optimizer.c2}")
    if not (optimizer.beta1 < 1 and optimizer.beta2 < 1):
        raise ConfigError("optimizer: beta1 and beta2 must be < 1")

    eps0 = _decimal_str(ident.eps0, "identification.eps0")
    if Decimal(eps0) <= 0:
        raise ConfigError(f"identification.eps0: must be > 0, got {eps0}")
    if not isinstance(ident.pretrain_network, bool):
        raise ConfigError("identification.pretrain_network: expected true or false")
    ident = replace(
        ident, eps0=eps0,
        phase1_iter=_int(ident.phase1_iter, "identification.phase1_iter", 0),
        phase1_lr=_float(ident.phase1_lr, "identification.phase1_lr", 0.0),
        phase2_iter=_int(ident.phase2_iter, "identification.phase2_iter", 0),
        noise=_float(ident.noise, "identification.noise", 0.0),
    )

    names = axis_names(problem.dim)
    slices = []
    for s in output.slices or ():
        if not isinstance(s, dict) or not s:
            raise ConfigError(f"output.slices: each slice is a mapping like {{x: 0.5}}, got {s!r}")
        bad = set(s) - set(names)
        if bad:
            raise ConfigError(f"output.slices: unknown axis {sorted(bad)}; axes are {list(names)}")
        if len(s) != len(names) - 1:
            raise ConfigError(f"output.slices: {s!r} must fix {len(names) - 1} of the axes {list(names)}")
        slices.append({k: _float(v, f"output.slices.{k}") for k, v in s.items()})
        if any(not 0 <= v <= 1 for v in slices[-1].values()):
            raise ConfigError(f"output.slices: coordinates must lie in [0, 1], got {s!r}")
    if not isinstance(output.svg, bool):
        raise ConfigError("output.svg: expected true or false")
    output = OutputConfig(str(output.dir), tuple(slices), output.svg)

    mode = raw.get("mode", "forward")
    scheme = raw.get("scheme", "apfos")
    if mode not in ("forward", "identify"):
        raise ConfigError(f"mode: expected 'forward' or 'identify', got {mode!r}")
    if scheme not in ("apfos", "nonap"):
        raise ConfigError(f"scheme: expected 'apfos' or 'nonap', got {scheme!r}")
    if scheme == "nonap" and problem.dim != 2:
        raise ConfigError("scheme 'nonap' is available for setup I (2D) only")
    if mode == "identify" and problem.dim != 2:
        raise ConfigError("identification is available for setup I (2D) only")
    if mode == "identify" and problem.n_interior == 0:
        raise ConfigError("identification needs problem.n_interior > 0 observation points")
    seed = _int(raw.get("seed", 0), "seed", 0)

    weights = raw.get("weights") or {}
    if not isinstance(weights, dict):
        raise ConfigError("weights: expected a mapping of term weights")
    allowed = {f.name for f in fields(LossWeights)}
    bad = set(weights) - allowed
    if bad:
        raise ConfigError(f"weights: unknown term(s) {sorted(bad)}; allowed {sorted(allowed)}")
    weights = {k: _float(v, f"weights.{k}", 0.0) for k, v in weights.items()}

    return RunConfig(mode, scheme, seed, problem, network, weights, optimizer, ident, output)


def presets() -> list[str]:
    return sorted(p.stem for p in _PRESET_DIR.glob("*.yaml"))


def load_config(path) -> RunConfig:
    """Read a YAML config, a run manifest (JSON with a ``config`` entry) or ``preset:NAME``."""
    if str(path).startswith("preset:"):
        name = str(path)[len("preset:"):]
        if name not in presets():
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(presets())}")
        path = _PRESET_DIR / f"{name}.yaml"
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if isinstance(raw, dict) and "config" in raw:
            raw = raw["config"]
    else:
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    return from_dict(raw if raw is not None else {})


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
