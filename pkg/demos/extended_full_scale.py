"""Full-scale forward runs compared with reference E2 values (not part of CI).

Each run uses a 4x60 network, N_f = 4000 and 10^4 L-BFGS iterations, which
is hours of CPU time per cell in pure numpy.  A cell passes when its E2 is
within 50x of the reference.

    python3 demos/extended_full_scale.py            # everything
    python3 demos/extended_full_scale.py --max-iter 200 --only case1_eps1
"""
import argparse
import time
from dataclasses import replace

from apfos import export
from apfos.config import load_config
from apfos.runner import run

# APFOS scheme, E2 after 10^4 iterations
REFERENCE = {
    "case1_eps1": ("full_2d_apfos", 1, "1", 1.06e-4),
    "case1_eps1e-2": ("full_2d_apfos", 1, "1e-2", 3.55e-4),
    "case1_eps1e-20": ("full_2d_apfos", 1, "1e-20", 5.56e-4),
    "case2_eps1": ("full_2d_apfos", 2, "1", 1.60e-4),
    "case2_eps1e-2": ("full_2d_apfos", 2, "1e-2", 7.65e-4),
    "case2_eps1e-20": ("full_2d_apfos", 2, "1e-20", 7.19e-4),
    # selected cell of the width/depth study: 4 layers of 60, Case 2, eps = 1e-20
    "width_depth_cell": ("full_width_depth_cell", 2, "1e-20", 7.19e-4),
}

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--only", nargs="*", choices=sorted(REFERENCE))
parser.add_argument("--max-iter", type=int, help="shorten runs for a smoke test")
parser.add_argument("--factor", type=float, default=50.0)
args = parser.parse_args()

failures = 0
for key in args.only or REFERENCE:
    name, case, eps, ref = REFERENCE[key]
    cfg = load_config(f"preset:{name}").with_output(f"runs/extended/{key}")
    cfg = replace(cfg, problem=replace(cfg.problem, case=case, eps=eps))
    if args.max_iter:
        opt = replace(cfg.optimizer, max_iter=args.max_iter,
                      snapshots=tuple(s for s in cfg.optimizer.snapshots if s < args.max_iter))
        cfg = replace(cfg, optimizer=opt)
    t0 = time.perf_counter()
    res = run(cfg)
    export.write_all(res)
    e2 = res.final_errors.E2 if res.final_errors else float("nan")
    ok = e2 <= args.factor * ref
    failures += not ok
    print(f"{'PASS' if ok else 'FAIL'} {key:18s} E2={e2:.3e} ref={ref:.2e} "
          f"ratio={e2 / ref:6.1f} {time.perf_counter() - t0:7.0f} s")

raise SystemExit(1 if failures else 0)
