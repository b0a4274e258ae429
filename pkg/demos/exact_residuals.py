"""Plug the manufactured solution into every functional.

If the first-order system and its forcing are consistent, each loss term is
zero up to rounding, for any eps, including eps = 0.
"""
from apfos import loss as L
from apfos import problem as P

for setup, case in [("I", 1), ("I", 2), ("I", 3), ("II", 2)]:
    for eps in (1.0, 1e-2, 1e-20, 0.0):
        inst = P.ProblemInstance.from_case(setup, case, eps)
        data = L.prepare(inst, P.sample(inst, 500, 100, 100, seed=0))
        fn = L.apfos_loss_3d if inst.dim == 3 else L.apfos_loss_2d
        total, br = fn(P.ExactModel(inst), data)
        print(f"setup {setup} case {case} eps={eps:<6g} loss={float(total):.2e}  "
              f"frame fallbacks={data.fallback}")
