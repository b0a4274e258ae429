"""Command line: ``apfos {run,identify,sweep,gradcheck,export}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure (non-finite
loss or aborted line search).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import astuple, fields
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .export import reexport, write_all
from .runner import SweepRow, run_forward, run_identify, sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("apfos")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "out", None) is not None:
        cfg = cfg.with_output(args.out)
    return cfg


def _summary(res) -> str:
    e = res.final_errors
    parts = [f"status={res.status}"]
    if res.loss_trace:
        parts.append(f"loss={res.loss_trace[-1]['total']:.4e}")
    if e is not None:
        parts.append(f"E1={e.E1:.4e} E2={e.E2:.4e} Einf={e.Einf:.4e}")
    if res.eps_hat is not None:
        parts.append(f"eps_hat={res.eps_hat:.6g}")
    return " ".join(parts)


def _cmd_train(args, mode: str) -> int:
    cfg = _load(args)
    if cfg.mode != mode:
        raise ConfigError(f"{args.config}: mode is {cfg.mode!r}; use `apfos {'run' if cfg.mode == 'forward' else 'identify'}`")
    res = run_forward(cfg) if mode == "forward" else run_identify(cfg)
    write_all(res)
    print(_summary(res))
    print(f"artifacts in {cfg.output.dir}")
    if res.failed:
        log.error("%s", res.message or res.status)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output.dir)
    failed = []

    def done(cell, res):
        write_all(res)
        print(f"{len(cell.network.hidden)}x{cell.network.hidden[0]}: {_summary(res)}")
        if res.failed:
            failed.append(cell.network.hidden)

    rows = sweep(cfg, args.layers, args.neurons, out_dir=out, on_result=done)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "sweep.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f.name for f in fields(SweepRow)])
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])
    print(f"table in {table}")
    return EXIT_NUMERIC if failed else EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    bad = 0

    def report(r):
        nonlocal bad
        bad += not r.ok
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name}: worst relative error {r.error:.3e} (tol {r.tol:g})")

    run_suite(args.trials, args.seed, report)
    return EXIT_NUMERIC if bad else EXIT_OK


def _cmd_export(args) -> int:
    files = reexport(args.manifest, args.out)
    for name, path in files.items():
        print(f"{name}: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apfos", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "forward run (mode: forward)"), ("identify", "two-phase eps identification (mode: identify)")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", help="YAML config or manifest.json")
        s.add_argument("--seed", type=int, help="override the global seed")
        s.add_argument("--out", help="override the output directory")

    s = sub.add_parser("sweep", help="hidden layers x neurons grid of forward runs")
    s.add_argument("config")
    s.add_argument("--layers", type=_int_list, required=True, help="e.g. 2,3,4")
    s.add_argument("--neurons", type=_int_list, required=True, help="e.g. 20,40,60")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")

    s = sub.add_parser("gradcheck", help="finite-difference checks of gradients and jets")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("export", help="re-emit artifacts from a manifest")
    s.add_argument("manifest")
    s.add_argument("--out", help="output directory (default: next to the manifest)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_train(args, "forward")
        if args.command == "identify":
            return _cmd_train(args, "identify")
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        return _cmd_export(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
