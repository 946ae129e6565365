"""
Case 2 null solutions, checked numerically
==========================================

The null Case 2 family is written in closed form for sigma in {-1, 0, 1}.
This script evaluates two claims about it.

1. For sigma = -1 the closed form only solves the Killing equations when
   c2 = 0; any c2 != 0 leaves residuals at orders v^3 and v^2.
2. For sigma = 0 the vector is covariantly constant for every (c1, c2),
   according to both the frame equations and the coordinate oracle.
"""

# %%
import numpy as np

from kundtcsi import ccnv_residuals, killing_residuals
from kundtcsi.families import case_2_null

# %%
print("sigma = -1")
for c1, c2 in [(1.0, 0.0), (0.5, 0.0), (1.0, 0.5), (1.5, 1.0)]:
    F = case_2_null(-1, c1, c2)
    rep = killing_residuals(F.metric, F.coframe, F.candidate, F.samples(40), oracle_samples=40)
    worst = sorted(rep.failing())[:3]
    print(f"  c1={c1:<4} c2={c2:<4} frame={rep.max_residual:8.1e} oracle={rep.oracle_max:8.1e} failing={worst}")

# %%
print("sigma = 0")
rng = np.random.default_rng(5)
for _ in range(4):
    c1, c2 = (round(float(x), 3) for x in rng.uniform([0.5, -1.0], [1.5, 1.0]))
    F = case_2_null(0, c1, c2)
    cc = ccnv_residuals(F.metric, F.coframe, F.candidate, F.samples(40))
    print(f"  c1={c1:<6} c2={c2:<6} frame says CCNV: {cc.covariantly_constant}, "
          f"oracle max |nabla zeta| = {cc.oracle_nabla_max:.1e}")
