"""Recover eps from noise-free interior samples of the solution.

Phase 1 moves only ln(eps) with Adam; phase 2 trains network and ln(eps)
together with L-BFGS.  eps stays positive throughout since it is exp(ln eps).
"""
from dataclasses import replace

from apfos import export
from apfos.config import load_config
from apfos.runner import run_identify

base = load_config("preset:desk_identify")
for true_eps in ("1e-2", "1"):
    cfg = replace(base, problem=replace(base.problem, eps=true_eps))
    cfg = cfg.with_output(f"runs/identify_eps{true_eps}")
    res = run_identify(cfg)
    export.write_all(res)
    start = res.eps_trace[0][2]
    after1 = [e for _, ph, e in res.eps_trace if ph == 1][-1]
    print(f"true {true_eps:>5}: start {start:g}, after phase 1 {after1:.4g}, "
          f"final {res.eps_hat:.4g}  (E2 {res.final_errors.E2:.2e})")
