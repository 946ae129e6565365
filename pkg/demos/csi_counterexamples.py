"""
When the CSI0 conditions break
==============================

Starts from a CSI metric and spoils it in the two ways the checker
distinguishes: a quadratic v-dependence in W, and a cubic one in H.
"""

# %%
import sympy as sp

from kundtcsi import KundtMetric, coframe_for, csi0_check, default_family
from kundtcsi import exprcore as ec

v, x3 = ec.symbol("v"), ec.symbol("x3")

F = default_family("1.2.2b")
K = F.metric
pts = F.samples(50)


def show(title, metric):
    rep = csi0_check(metric, coframe_for(metric), pts)
    bad = ", ".join(rep.failed()) or "none"
    print(f"{title:<16} passes={rep.passes!s:<5} failing: {bad}")
    return rep


# %%
show("original", K)

# %%
# W picks up a v^2 term. The first-order conditions notice.
W = list(K.W)
W[0] = W[0] + v ** 2 * x3
show("v^2 in W", KundtMetric.from_functions(K.dim, K.H, W, K.gT))

# %%
# H picks up a v^3 term. Now the second-order conditions fail.
show("v^3 in H", KundtMetric.from_functions(K.dim, K.H + v ** 3, list(K.W), K.gT))

# %%
# The measured sigma is the constant R1212 should be; it is read off at
# every sample and compared with the declared value.
rep = show("original again", K)
print("sigma measured", sp.nsimplify(round(rep.sigma_measured, 12)), "declared", rep.sigma_declared)
