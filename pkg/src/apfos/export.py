"""Run artifacts: manifest, CSV traces, grid solution, slices and SVG plots.

Floats are written with ``repr`` so files round-trip exactly and two runs of
the same config produce identical bytes (timestamps live only in the
manifest).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import axis_names, from_dict
from .loss import TERMS
from .metrics import ErrorTriple, Slice

__all__ = [
    "LOSS_COLUMNS",
    "ERROR_COLUMNS",
    "write_all",
    "write_losses",
    "write_errors",
    "write_grid",
    "write_slice",
    "slice_svg",
    "slice_name",
    "reexport",
]

LOSS_COLUMNS = ("iter", "total", *TERMS)
ERROR_COLUMNS = ("iter", "E1", "E2", "Einf")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def _write_rows(path: Path, header, rows) -> Path:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    return path


def write_losses(path, trace: list[dict]) -> Path:
    return _write_rows(Path(path), LOSS_COLUMNS,
                       ([r["iter"], *(r.get(c, 0.0) for c in LOSS_COLUMNS[1:])] for r in trace))


def write_errors(path, error_trace) -> Path:
    return _write_rows(Path(path), ERROR_COLUMNS,
                       ([k, e.E1, e.E2, e.Einf] for k, e in error_trace))


def write_grid(path, points, pred, exact, dim: int) -> Path:
    header = (*axis_names(dim), "predicted", "exact")
    return _write_rows(Path(path), header,
                       ([*p, a, b] for p, a, b in zip(points, pred, exact)))


def slice_name(sl: Slice, dim: int) -> str:
    names = axis_names(dim)
    return "slice_" + "_".join(f"{names[a]}{req:g}" for a, (req, _) in sorted(sl.fixed.items()))


def write_slice(path, sl: Slice) -> Path:
    return _write_rows(Path(path), ("coordinate", "predicted", "exact"), sl.rows())


def slice_svg(sl: Slice, title: str = "", width: int = 480, height: int = 320) -> str:
    """Self-contained SVG with one polyline for the prediction and one for the exact profile."""
    pad = 40
    ys = np.concatenate([sl.pred, sl.exact])
    lo, hi = float(ys.min()), float(ys.max())
    if hi - lo < 1e-300:
        lo, hi = lo - 1.0, hi + 1.0

    def pts(values):
        xs = pad + sl.coord * (width - 2 * pad)
        yv = height - pad - (values - lo) / (hi - lo) * (height - 2 * pad)
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, yv))

    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'  <title>{title}</title>\n'
        f'  <rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        f'fill="none" stroke="#999"/>\n'
        f'  <polyline class="exact" fill="none" stroke="#000" stroke-width="1.5" points="{pts(sl.exact)}"/>\n'
        f'  <polyline class="predicted" fill="none" stroke="#d62728" stroke-width="1.5" '
        f'stroke-dasharray="5,3" points="{pts(sl.pred)}"/>\n'
        f'  <text x="{pad}" y="{pad - 10}" font-size="12">{title} (solid: exact, dashed: predicted; '
        f'range {lo:.3g} to {hi:.3g})</text>\n'
        f"</svg>\n"
    )


def write_all(result, out_dir=None) -> dict[str, Path]:
    """Write every artifact of a :class:`~apfos.runner.RunResult`."""
    cfg = result.config
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from None
    dim = cfg.problem.dim
    files = {
        "losses": write_losses(out / "losses.csv", result.loss_trace),
        "errors": write_errors(out / "errors.csv", result.error_trace),
        "grid": write_grid(out / "solution_grid.csv", result.grid_points, result.pred, result.exact, dim),
    }
    if result.eps_trace:
        files["eps_trace"] = _write_rows(out / "eps_trace.csv", ("iter", "phase", "eps"), result.eps_trace)
    for sl in result.slices:
        name = slice_name(sl, dim)
        files[name] = write_slice(out / f"{name}.csv", sl)
        if cfg.output.svg:
            p = out / f"{name}.svg"
            try:
                p.write_text(slice_svg(sl, name))
            except OSError as exc:
                raise OSError(f"cannot write {p}: {exc.strerror}") from None
            files[name + "_svg"] = p
    manifest = out / "manifest.json"
    try:
        manifest.write_text(json.dumps(result.manifest(), indent=1))
    except OSError as exc:
        raise OSError(f"cannot write {manifest}: {exc.strerror}") from None
    files["manifest"] = manifest
    return files


def reexport(manifest_path, out_dir=None) -> dict[str, Path]:
    """Rebuild all artifacts from a manifest (stored parameters and traces)."""
    from . import network as N
    from .runner import RunResult, _Grid, _instance, _slices

    manifest_path = Path(manifest_path)
    raw = json.loads(manifest_path.read_text())
    cfg = from_dict(raw["config"])
    layers = tuple(raw["layers"])
    theta = np.asarray(raw["params"], dtype=np.float64)
    if len(theta) != N.param_count(layers):
        raise ValueError(f"{manifest_path}: parameter count does not match layers {list(layers)}")
    grid = _Grid(_instance(cfg), cfg.problem.grid)
    pred = grid.predict(theta, layers)
    result = RunResult(
        config=cfg, params=theta, layers=layers, loss_trace=raw["loss_trace"],
        error_trace=[(r["iter"], ErrorTriple(r["E1"], r["E2"], r["Einf"])) for r in raw["error_trace"]],
        grid_points=grid.points, grid_shape=grid.shape, pred=pred, exact=grid.exact,
        slices=_slices(cfg, grid, pred), status=raw["status"], fallback=raw["frame_fallback"],
        started=raw["started"], finished=raw["finished"], eps_hat=raw.get("eps_hat"),
        eps_trace=[(r["iter"], r["phase"], r["eps"]) for r in raw.get("eps_trace", [])],
        message=raw.get("message", ""),
    )
    return write_all(result, out_dir if out_dir is not None else manifest_path.parent)
