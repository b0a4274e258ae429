"""Desk-scale forward solves: the first-order scheme versus the direct one.

Runs Case 1 with eps = 1e-20 under both schemes and writes the usual
artifacts (loss and error traces, grid, x = 0.5 slice with SVG) to runs/.
Takes about a minute.
"""
import logging

from apfos import export
from apfos.config import load_config
from apfos.runner import run

logging.basicConfig(level=logging.INFO, format="%(message)s")

for name in ("desk_forward", "desk_nonap"):
    cfg = load_config(f"preset:{name}")
    res = run(cfg)
    files = export.write_all(res)
    e = res.final_errors
    print(f"{cfg.scheme:6s} eps={cfg.problem.eps}: E1={e.E1:.2e} E2={e.E2:.2e} "
          f"Einf={e.Einf:.2e}  -> {files['manifest'].parent}")
