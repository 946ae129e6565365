"""Closed-form Killing-vector families and the case classifier.

Every constructor returns a :class:`FamilySpec`. Unpacking a spec gives
``(metric, candidate)`` for the Case 1 families and
``(metric, candidate, interval)`` for the Case 2 families, so

    K, cand = case_1_1_1(H0=x3**2)
    K, cand, interval = case_2_null(0, 1, 0, +1)

both work. The transverse metric defaults to the flat one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import sympy as sp

from . import exprcore as ec
from .curvature import _points_array, connection_table
from .exprcore import Expr
from .geometry import (
    Coframe,
    Domain,
    KundtMetric,
    coframe_for,
    frame_derivative,
    frame_W1,
    sigma_star,
)
from .killing import (
    KillingCandidate,
    build_components,
    killing_residuals,
    magnitude_orders,
    normalized_residual,
    split_terms,
)

CASE_LABELS = ("1.1.1", "1.1.2", "1.2.1a", "1.2.1b", "1.2.2a", "1.2.2b", "2-null", "2-timelike")
INSET = 1e-3
DEFAULT_TOL = 1e-9

x3 = ec.symbol("x3")


class FamilyError(ValueError):
    """Parameters violate a constraint of the requested family."""


@dataclass(frozen=True, eq=False)
class FamilySpec:
    label: str
    metric: KundtMetric
    candidate: KillingCandidate
    params: dict = field(default_factory=dict)
    interval: tuple | None = None
    domain: Domain | None = None

    def __post_init__(self):
        if self.domain is None:
            object.__setattr__(self, "domain", Domain(self.metric.dim))

    def __iter__(self):
        if self.label.startswith("2-"):
            return iter((self.metric, self.candidate, self.interval))
        return iter((self.metric, self.candidate))

    @cached_property
    def coframe(self) -> Coframe:
        return coframe_for(self.metric)

    def samples(self, n: int = 100, seed: int = 42) -> np.ndarray:
        return self.domain.sample(n, seed)

    def describe(self) -> str:
        bits = ", ".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"{self.label}({bits})"


def _fmt(v) -> str:
    if isinstance(v, sp.Basic):
        return ec.to_string(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _vec(values, n: int, name: str) -> tuple:
    if values is None:
        return (sp.Integer(0),) * n
    values = [ec.as_expr(w) for w in values]
    if len(values) > n:
        raise FamilyError(f"{name} has {len(values)} entries, expected at most {n}")
    return tuple(values) + (sp.Integer(0),) * (n - len(values))


def _check_free_of(exprs, symbols, what: str):
    for e in exprs:
        bad = [s for s in symbols if s in ec.as_expr(e).free_symbols]
        if bad:
            raise FamilyError(f"{what} must not depend on {', '.join(s.name for s in bad)}")


def _max_abs(exprs, K: KundtMetric, pts) -> np.ndarray:
    vals = ec.evaluate_many(list(exprs), K.names, pts)
    return np.abs(vals).max(axis=1)


def _probe_points(dim: int, n: int = 40, seed: int = 7, domain: Domain | None = None) -> np.ndarray:
    return (domain or Domain(dim)).sample(n, seed)


def _frame(K: KundtMetric) -> Coframe:
    return coframe_for(K)


# ---------------------------------------------------------------------------
# Case 1.1: zeta_1 = 0
# ---------------------------------------------------------------------------

def case_1_1_1(H0=0, W0=None, gT=None, dim: int = 4) -> FamilySpec:
    """Covariantly constant null vector: H = H0(u, x), W = W0(u, x), zeta = l."""
    n = dim - 2
    H0 = ec.as_expr(H0)
    W0 = _vec(W0, n, "W0")
    _check_free_of((H0,) + W0, [ec.V], "H0 and W0")
    K = KundtMetric.from_coefficients(dim, 0, [0] * n, W0, 0, H0, gT)
    cand = KillingCandidate(0, 0, 1)
    return FamilySpec("1.1.1", K, cand, {"H0": H0, "W0": W0})


def case_1_1_2(zeta2, gT=None, sigma=-1, dim: int = 4, H0=0, W0=None, tol: float = 1e-9) -> FamilySpec:
    """zeta = zeta2 l with H1 = -(ln zeta2)_u and W1_e = -(ln zeta2)_e."""
    n = dim - 2
    sigma = ec.as_expr(sigma)
    if not (sigma.is_number and float(sigma) < 0):
        raise FamilyError("Case 1.1.2 needs a constant sigma < 0")
    zeta2 = ec.as_expr(zeta2)
    _check_free_of([zeta2], [ec.V], "zeta2")
    xs = ec.coordinates(dim)[2:]
    W1 = tuple(sp.simplify(-sp.diff(zeta2, x) / zeta2) for x in xs)
    H1 = sp.simplify(-sp.diff(zeta2, ec.U) / zeta2)
    W0 = _vec(W0, n, "W0")
    K = KundtMetric.from_coefficients(dim, sigma, W1, W0, H1, H0, gT)
    C = _frame(K)
    # (D_i ln zeta2)^2 summed equals -4 sigma, i.e. sigma* = 0
    resid = sigma_star(K, C)
    pts = _probe_points(dim)
    r = _max_abs([resid], K, pts)[0] / (1 + 4 * abs(float(sigma)))
    if r > tol:
        raise FamilyError(f"sum_i (D_i ln zeta2)^2 != -4 sigma (residual {r:.3g})")
    return FamilySpec("1.1.2", K, KillingCandidate(0, 0, zeta2),
                      {"zeta2": zeta2, "sigma": sigma, "H0": ec.as_expr(H0), "W0": W0})


# ---------------------------------------------------------------------------
# Case 1.2: D3 zeta_1 = 0, zeta_1 = 1
# ---------------------------------------------------------------------------

def case_1_2_1a(W1=None, W0=None, sigma=1, gT=None, dim: int = 4, tol: float = 1e-9) -> FamilySpec:
    """H = sigma* v^2/8 with u-independent W; zeta = n + (sigma* v^2/8) l."""
    n = dim - 2
    W1 = _vec(W1, n, "W1")
    W0 = _vec(W0, n, "W0")
    _check_free_of(W1 + W0 + (ec.as_expr(sigma),), [ec.U, ec.V], "W1, W0 and sigma")
    K = KundtMetric.from_coefficients(dim, sigma, W1, W0, 0, 0, gT)
    ss = sigma_star(K, _frame(K))
    vals = ec.evaluate_many([ss], K.names, _probe_points(dim))[0]
    if np.any(np.abs(vals) <= tol):
        raise FamilyError("Case 1.2.1a needs sigma* != 0")
    return FamilySpec("1.2.1a", K, KillingCandidate(1, 0, 0),
                      {"sigma": ec.as_expr(sigma), "W1": W1, "W0": W0})


def case_1_2_1b(zeta20=0, W1=None, w=None, sigma=0, gT=None, dim: int = 4, tol: float = 1e-9) -> FamilySpec:
    """H = 0, W_e = W1_e v - (D_e zeta20 + W1_e zeta20) u + w_e; zeta = n + zeta20 l."""
    n = dim - 2
    zeta20 = ec.as_expr(zeta20)
    W1 = _vec(W1, n, "W1")
    w = _vec(w, n, "w")
    _check_free_of((zeta20,) + W1 + w, [ec.U, ec.V], "zeta20, W1 and w")
    xs = ec.coordinates(dim)[2:]
    W0 = tuple(-(sp.diff(zeta20, xs[e]) + W1[e] * zeta20) * ec.U + w[e] for e in range(n))
    K = KundtMetric.from_coefficients(dim, sigma, W1, W0, 0, 0, gT)
    C = _frame(K)
    pts = _probe_points(dim)
    ss, z = ec.evaluate_many([sigma_star(K, C), zeta20], K.names, pts)
    if np.abs(ss).max() > tol * (1 + 4 * abs(float(sigma))):
        raise FamilyError("Case 1.2.1b needs g^ef W1_e W1_f = -4 sigma")
    if np.any(z < -tol):
        raise FamilyError("Case 1.2.1b needs zeta20 >= 0")
    return FamilySpec("1.2.1b", K, KillingCandidate(1, 0, zeta20),
                      {"zeta20": zeta20, "sigma": ec.as_expr(sigma), "W1": W1, "w": w})


def _transport_residual(K, C, f, speed):
    """Terms of D2 f + speed D3 f."""
    return (sp.diff(f, ec.U), speed * frame_derivative(K, C, 3, f))


def case_1_2_2a_const(zeta3=1, zeta20=1, W1=None, W0n=None, sigma=0, gT=None, dim: int = 4,
                      domain: Domain | None = None, tol: float = 1e-9) -> FamilySpec:
    """Constant zeta3: H = -W1_3 zeta3 v, W_3 = W1_3 v + zeta20/zeta3, W_n = W1_n v + W0_n.

    The candidate is zeta = n + zeta20 l + zeta3 m^3. ``domain`` may restrict
    the sampling box so that zeta3^2 <= 2 zeta20 holds on it.
    """
    n = dim - 2
    zeta3 = ec.as_expr(zeta3)
    if not zeta3.is_number or zeta3 == 0:
        raise FamilyError("zeta3 must be a nonzero constant")
    zeta20 = ec.as_expr(zeta20)
    W1 = _vec(W1, n, "W1")
    W0n = _vec(W0n, n - 1, "W0n")
    _check_free_of((zeta20,) + W1 + W0n, [ec.V], "zeta20, W1 and W0n")
    W0 = (zeta20 / zeta3,) + W0n
    K = KundtMetric.from_coefficients(dim, sigma, W1, W0, -W1[0] * zeta3, 0, gT)
    C = _frame(K)
    domain = domain or Domain(dim)
    pts = _probe_points(dim, domain=domain)
    checks = {"c122zeta2A": _transport_residual(K, C, zeta20, zeta3)}
    for i in range(n):
        checks[f"c122w1nA[{i + 3}]"] = _transport_residual(K, C, W1[i], zeta3)
    for j in range(1, n):
        checks[f"c122w0nA[{j + 3}]"] = _transport_residual(K, C, W0[j], zeta3)
    checks["sigma*"] = (sigma_star(K, C),)
    for name, terms in checks.items():
        pieces = [p for t in terms for p in split_terms(t)] or [sp.Integer(0)]
        r = normalized_residual(ec.evaluate_many(pieces, K.names, pts)).max()
        if r > tol:
            raise FamilyError(f"constraint {name} violated (residual {r:.3g})")
    z = ec.evaluate_many([zeta20], K.names, pts)[0]
    if np.any(float(zeta3) ** 2 > 2 * z + tol):
        raise FamilyError("zeta3^2 <= 2 zeta20 fails on the domain (candidate would be spacelike)")
    return FamilySpec("1.2.2a", K, KillingCandidate(1, zeta3, zeta20),
                      {"zeta3": zeta3, "zeta20": zeta20, "sigma": ec.as_expr(sigma), "W1": W1,
                       "W0n": W0n}, domain=domain)


def case_1_2_2b(zeta20=0, W1=None, W0n=None, sigma=1, gT=None, dim: int = 4,
                tol: float = 1e-9) -> FamilySpec:
    """zeta3 = 1: H = sigma* v^2/8 - W1_3 v, W_3 = W1_3 v + zeta20; zeta = n + zeta2 l + m^3."""
    n = dim - 2
    zeta20 = ec.as_expr(zeta20)
    W1 = _vec(W1, n, "W1")
    W0n = _vec(W0n, n - 1, "W0n")
    _check_free_of((zeta20,) + W1 + W0n, [ec.V], "zeta20, W1 and W0n")
    K = KundtMetric.from_coefficients(dim, sigma, W1, (zeta20,) + W0n, -W1[0], 0, gT)
    C = _frame(K)
    pts = _probe_points(dim)
    checks = {"c122zeta2B": _transport_residual(K, C, zeta20, 1)}
    for i in range(n):
        checks[f"c122w1nB[{i + 3}]"] = _transport_residual(K, C, W1[i], 1)
    for j in range(1, n):
        checks[f"c122w0nB[{j + 3}]"] = _transport_residual(K, C, W0n[j - 1], 1)
    for name, terms in checks.items():
        pieces = [p for t in terms for p in split_terms(t)] or [sp.Integer(0)]
        r = normalized_residual(ec.evaluate_many(pieces, K.names, pts)).max()
        if r > tol:
            raise FamilyError(f"constraint {name} violated (residual {r:.3g})")
    ss = ec.evaluate_many([sigma_star(K, C)], K.names, pts)[0]
    if np.any(ss <= tol):
        raise FamilyError("Case 1.2.2b needs sigma* > 0")
    return FamilySpec("1.2.2b", K, KillingCandidate(1, 1, zeta20),
                      {"zeta20": zeta20, "sigma": ec.as_expr(sigma), "W1": W1, "W0n": W0n})


# ---------------------------------------------------------------------------
# Case 2: D3 zeta_1 != 0
# ---------------------------------------------------------------------------

def y_function(sigma: int, c1, c2) -> Expr:
    """(D3 zeta1)^(-1/2): the solution of y'' = -sigma y fixed by (c1, c2)."""
    c1, c2 = ec.as_expr(c1), ec.as_expr(c2)
    if sigma == -1:
        return c1 * sp.cosh(x3) + c2 * sp.sinh(x3)
    if sigma == 0:
        return c1 * x3 + c2
    if sigma == 1:
        return c1 * sp.cos(x3) + c2 * sp.sin(x3)
    raise FamilyError("sigma must be -1, 0 or 1")


def natural_interval(sigma: int, c1: float, c2: float) -> tuple:
    """Open x3-interval on which y = (D3 zeta1)^(-1/2) has no zero."""
    c1, c2 = float(c1), float(c2)
    if c1 == 0 and c2 == 0:
        raise FamilyError("(c1, c2) must not both vanish")
    if sigma == 1:
        x0 = math.atan(-c1 / c2) if c2 != 0 else -math.pi / 2
        return (x0, x0 + math.pi)
    if sigma == 0:
        if c1 == 0:
            raise FamilyError("sigma = 0 needs c1 != 0")
        x0 = -c2 / c1
        return (x0, math.inf) if c1 > 0 else (-math.inf, x0)
    if sigma == -1:
        if c2 != 0 and abs(c1 / c2) < 1:
            return (math.atanh(-c1 / c2), math.inf)
        if c2 != 0 and abs(c1 / c2) == 1:
            return (-math.inf, math.inf)
        return (-math.inf, math.inf)
    raise FamilyError("sigma must be -1, 0 or 1")


def sampling_window(interval: tuple, width: float = 3.0, inset: float = INSET) -> tuple:
    """Closed finite sub-interval used for sampling x3."""
    lo, hi = interval
    if math.isinf(lo) and math.isinf(hi):
        return (-width / 2, width / 2)
    if math.isinf(hi):
        return (lo + inset, lo + inset + width)
    if math.isinf(lo):
        return (hi - inset - width, hi - inset)
    return (lo + inset, hi - inset)


def _grid(window: tuple, n: int = 2001) -> np.ndarray:
    return np.linspace(window[0], window[1], n)


def _eval_x3(expr: Expr, xs: np.ndarray) -> np.ndarray:
    return np.asarray(ec.evaluate(expr, {"x3": xs}), dtype=float) * np.ones_like(xs)


def _case2_metric(sigma: int, zeta1: Expr, d3z1: Expr, W13: Expr, H0: Expr, dim: int) -> KundtMetric:
    n = dim - 2
    return KundtMetric.from_coefficients(dim, sigma, (W13,) + (0,) * (n - 1), (0,) * n, 0, H0)


def _check_d3z1(d3z1: Expr, window: tuple):
    vals = _eval_x3(d3z1, _grid(window))
    if np.any(vals == 0) or not (np.all(vals > 0) or np.all(vals < 0)):
        raise FamilyError("D3 zeta1 vanishes or changes sign on the interval")


def case_2_null(sigma: int, c1, c2, branch: int = 1, dim: int = 4, form: str = "printed") -> FamilySpec:
    """Null Case 2 family in the normalised gauge: W_3 = D3 ln(D3 zeta1) v, W_n = 0, H = sigma* v^2/8.

    ``form="printed"`` uses the closed forms for zeta1 as published.
    ``form="literal"`` uses zeta1 = C/y (sigma = 0) or C e^(branch x3)/y
    (sigma = -1), the forms for which g(xi, xi) vanishes identically.
    """
    if branch not in (1, -1):
        raise FamilyError("branch must be +1 or -1")
    y = y_function(sigma, c1, c2)
    yp = sp.diff(y, x3)
    c1e, c2e = ec.as_expr(c1), ec.as_expr(c2)
    s = branch
    if form == "printed":
        if sigma == 0:
            zeta1 = 1 / (c1e * (1 + s * sp.sqrt(2)) * y)
        else:
            zeta1 = (1 / y) / (yp + s * sp.sqrt(c1e ** 2 + c2e ** 2 + yp ** 2))
    elif form == "literal":
        if sigma == 0:
            zeta1 = 1 / (c1e * (1 + s * sp.sqrt(2)) * y)
        elif sigma == -1:
            zeta1 = sp.exp(s * x3) / y
        else:
            raise FamilyError("no literal null family exists for sigma = 1")
    else:
        raise FamilyError(f"unknown form {form!r}")
    interval = natural_interval(sigma, c1, c2)
    window = sampling_window(interval)
    d3z1 = sp.diff(zeta1, x3)
    _check_d3z1(d3z1, window)
    W13 = sp.diff(zeta1, x3, 2) / d3z1
    K = _case2_metric(sigma, zeta1, d3z1, W13, sp.Integer(0), dim)
    domain = Domain(dim).with_range("x3", *window)
    params = {"sigma": sigma, "c1": c1, "c2": c2, "branch": branch, "form": form}
    return FamilySpec("2-null", K, KillingCandidate(zeta1, 0, 0), params, interval, domain)


def timelike_zeta1(sigma: int, c1, c2, c3) -> Expr:
    c1e, c3e = ec.as_expr(c1), ec.as_expr(c3)
    y = y_function(sigma, c1, c2)
    if sigma == -1:
        return sp.sinh(x3) / (c1e * y) + c3e
    if sigma == 0:
        return -1 / (c1e * y) + c3e
    return sp.sin(x3) / (c1e * y) + c3e


def timelike_inequality(sigma: int, c1, c2, c3) -> Expr:
    """Left side of the timelike condition on zeta1, to be strictly negative.

    Equals y^2 times the v^2 magnitude coefficient:
    y^-2 - (sigma y^2 + y'^2) zeta1^2 - 2 y' zeta1 / y.
    """
    y = y_function(sigma, c1, c2)
    yp = sp.diff(y, x3)
    z = timelike_zeta1(sigma, c1, c2, c3)
    return 1 / y ** 2 - sp.expand(sigma * y ** 2 + yp ** 2) * z ** 2 - 2 * yp * z / y


def admissible_zeta20(sigma: int, c1, c2, a=1, b=0) -> Expr:
    """zeta20 = a y^2 + b y y', the span compatible with the Case 2 Killing equations."""
    y = y_function(sigma, c1, c2)
    return ec.as_expr(a) * y ** 2 + ec.as_expr(b) * y * sp.diff(y, x3)


def case2_H0(sigma: int, zeta1: Expr, y: Expr, zeta20: Expr) -> Expr:
    """H0 from the algebraic combination of the v^1 (22) and v^0 (23) equations."""
    d3z1 = 1 / y ** 2
    lny2 = sp.diff(y, x3, 2) / y - (sp.diff(y, x3) / y) ** 2
    lnz2 = sp.diff(zeta1, x3, 2) / zeta1 - (sp.diff(zeta1, x3) / zeta1) ** 2
    num = sp.diff(d3z1 * zeta20, x3) + lny2 * zeta20 * zeta1
    den = zeta1 ** 2 * (lnz2 + lny2)
    return num / den


def _runs(mask: np.ndarray) -> list:
    runs, start = [], None
    for k, ok in enumerate(mask):
        if ok and start is None:
            start = k
        if not ok and start is not None:
            runs.append((start, k - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def case_2_timelike(sigma: int, c1, c2, c3, zeta20=None, dim: int = 4, interval: tuple | None = None,
                    tol: float = 1e-9) -> FamilySpec:
    """Timelike Case 2 family: zeta1 from the integrated closed form, H0 from zeta20.

    With ``interval=None`` the largest sub-interval of the pole-free interval
    on which the timelike inequality, zeta1 > 0 and zeta20 > 0 all hold is
    used. An explicit ``interval`` is verified instead.
    """
    y = y_function(sigma, c1, c2)
    zeta1 = sp.cancel(sp.together(timelike_zeta1(sigma, c1, c2, c3)))
    zeta20 = admissible_zeta20(sigma, c1, c2) if zeta20 is None else ec.as_expr(zeta20)
    _check_free_of([zeta20], [ec.U, ec.V], "zeta20")
    H0 = case2_H0(sigma, zeta1, y, zeta20)
    ineq = timelike_inequality(sigma, c1, c2, c3)
    lny2 = sp.diff(y, x3, 2) / y - (sp.diff(y, x3) / y) ** 2
    lnz2 = sp.diff(zeta1, x3, 2) / zeta1 - (sp.diff(zeta1, x3) / zeta1) ** 2
    den = lnz2 + lny2
    natural = natural_interval(sigma, c1, c2)

    def ok_mask(xs):
        with np.errstate(all="ignore"):
            q = _eval_x3(ineq, xs)
            z = _eval_x3(zeta1, xs)
            z2 = _eval_x3(zeta20, xs)
            d = _eval_x3(den, xs)
        return (q < 0) & (z > 0) & (z2 > 0) & (np.abs(d) > 1e-12) & np.isfinite(q)

    if interval is None:
        window = sampling_window(natural)
        xs = _grid(window, 4001)
        runs = _runs(ok_mask(xs))
        if not runs:
            raise FamilyError("timelike inequality fails everywhere on the interval")
        a, b = max(runs, key=lambda r: r[1] - r[0])
        if b - a < 4:
            raise FamilyError("timelike inequality holds only on a negligible interval")
        step = xs[1] - xs[0]
        lo = natural[0] if a == 0 and not math.isinf(natural[0]) else xs[a] - (step if a else 0)
        hi = natural[1] if b == len(xs) - 1 and not math.isinf(natural[1]) else xs[b] + (step if b < len(xs) - 1 else 0)
        interval = (float(max(lo, natural[0])), float(min(hi, natural[1])))
        window = (float(xs[a] if a else window[0]), float(xs[b] if b < len(xs) - 1 else window[1]))
    else:
        interval = (float(interval[0]), float(interval[1]))
        if interval[0] < natural[0] or interval[1] > natural[1]:
            raise FamilyError(f"interval {interval} leaves the pole-free interval {natural}")
        window = sampling_window(interval)
        xs = _grid(window)
        bad = ~ok_mask(xs)
        if bad.any():
            raise FamilyError(f"timelike inequality or positivity fails at x3={xs[bad][0]:.6g}")
    d3z1 = 1 / y ** 2
    W13 = -2 * sp.diff(y, x3) / y
    K = _case2_metric(sigma, zeta1, d3z1, W13, H0, dim)
    domain = Domain(dim).with_range("x3", *window)
    params = {"sigma": sigma, "c1": c1, "c2": c2, "c3": c3, "zeta20": zeta20}
    spec = FamilySpec("2-timelike", K, KillingCandidate(zeta1, 0, zeta20), params, interval, domain)
    rep = killing_residuals(K, spec.coframe, spec.candidate, spec.samples(30, seed=3), tol,
                            oracle_samples=0)
    if not rep.passes:
        raise FamilyError(f"zeta20 is not admissible: Killing equations {rep.failing()} fail "
                          "(use a combination of y^2 and y y')")
    return spec


def choose_c3(sigma: int, c1, c2, at: float = 1.0, grid=None) -> float:
    """Smallest |c3| on a sweep for which the timelike conditions hold at x3 = ``at``."""
    grid = np.linspace(-6, 6, 1201) if grid is None else np.asarray(grid)
    order = np.argsort(np.abs(grid), kind="stable")
    for c3 in grid[order]:
        c3 = float(round(c3, 6))
        ineq = timelike_inequality(sigma, c1, c2, c3)
        z = timelike_zeta1(sigma, c1, c2, c3)
        q = float(ec.evaluate(ineq, {"x3": at}))
        if q < 0 and float(ec.evaluate(z, {"x3": at})) > 0:
            return c3
    raise FamilyError(f"no c3 in the sweep satisfies the timelike inequality at x3={at}")


# ---------------------------------------------------------------------------
# ODE witnesses
# ---------------------------------------------------------------------------

def verify_ode_zeta1(sigma, zeta1_sqrt_inv) -> Expr:
    """D3 D3 y + sigma y for y = (D3 zeta1)^(-1/2)."""
    y = ec.as_expr(zeta1_sqrt_inv)
    return sp.diff(y, x3, 2) + ec.as_expr(sigma) * y


def sigma_star_identity(K: KundtMetric, C: Coframe, zeta1) -> Expr:
    """sigma* - 2 D3 D3 ln(D3 zeta1), written with quotients to avoid logs."""
    zeta1 = ec.as_expr(zeta1)
    d3 = frame_derivative(K, C, 3, zeta1)
    dlog = frame_derivative(K, C, 3, d3) / d3
    return sigma_star(K, C) - 2 * frame_derivative(K, C, 3, dlog)


# ---------------------------------------------------------------------------
# classifier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseReport:
    label: str
    decisions: dict
    residuals: dict
    killing_max: float
    tol: float

    def path(self) -> str:
        return " -> ".join(f"{k}? {'yes' if v else 'no'}" for k, v in self.decisions.items())


def classify(K: KundtMetric, C: Coframe, cand: KillingCandidate, samples, tol: float = 1e-9) -> CaseReport:
    """Walk the case tree; every decision is a thresholded numeric residual."""
    pts = _points_array(samples)
    comps = build_components(K, C, cand)
    T = connection_table(K, C)
    W1 = frame_W1(K, C)
    ss = sigma_star(K, C)
    names = K.names
    z1, d3, z30, z20 = comps.zeta1, comps.D3zeta1, comps.zeta30, comps.Z20
    vals = ec.evaluate_many([z1, d3, z30, z20, ss, K.sigma], names, pts)
    z1v, d3v, z30v, z20v, ssv, sigv = vals
    scale1 = 1 + np.abs(z1v).max()
    res = {
        "D3zeta1": float(np.abs(d3v).max() / scale1),
        "zeta1": float(np.abs(z1v).max()),
        "sigma_star": float(np.abs(ssv).max() / (1 + 4 * np.abs(sigv).max())),
        "zeta3": float(np.abs(z30v).max()),
        "zeta20": float(np.abs(z20v).max()),
    }
    g23 = ec.evaluate_many(split_terms(frame_derivative(K, C, 3, ss) - ss * W1[0]), names, pts)
    res["Gbar2_3"] = float(normalized_residual(g23).max())
    kres = killing_residuals(K, C, cand, pts, tol, oracle_samples=0)
    res["22.v3"] = kres.normalized["22.v3"]
    dec = {}
    zero = lambda key: res[key] < tol  # noqa: E731
    dec["D3zeta1 = 0"] = zero("D3zeta1")
    if dec["D3zeta1 = 0"]:
        dec["zeta1 = 0"] = zero("zeta1")
        dec["sigma* = 0"] = zero("sigma_star")
        dec["zeta3 = 0"] = zero("zeta3")
        if dec["zeta1 = 0"]:
            if not dec["sigma* = 0"] or not dec["zeta3 = 0"]:
                label = "unclassified"
            else:
                dec["sigma = 0"] = bool(np.abs(sigv).max() < tol)
                label = "1.1.1" if dec["sigma = 0"] else "1.1.2"
        elif dec["zeta3 = 0"]:
            label = "1.2.1b" if dec["sigma* = 0"] else "1.2.1a"
        else:
            label = "1.2.2a" if dec["sigma* = 0"] else "1.2.2b"
    else:
        dec["Gbar2_3 = 0"] = zero("Gbar2_3")
        if dec["Gbar2_3 = 0"]:
            dec["zeta20 = 0"] = zero("zeta20")
            label = "2-null" if dec["zeta20 = 0"] else "2-timelike"
        else:
            label = "unclassified"
    return CaseReport(label, dec, res, kres.max_residual, tol)


# ---------------------------------------------------------------------------
# random valid instances
# ---------------------------------------------------------------------------

def _unit(rng, n):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


def _r(rng, lo=-1.0, hi=1.0, digits=3):
    return sp.Rational(str(round(float(rng.uniform(lo, hi)), digits)))


def random_family(label: str, rng: np.random.Generator | int = 0, dim: int = 4) -> FamilySpec:
    """A random valid instance of the family ``label``."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n = dim - 2
    xs = ec.coordinates(dim)[2:]
    u = ec.U
    last = xs[-1]
    if label == "1.1.1":
        H0 = _r(rng) * xs[0] ** 2 + _r(rng) * u * last + _r(rng) * sp.sin(xs[0])
        W0 = [_r(rng) * last * u] + [_r(rng) * xs[0] for _ in range(n - 1)]
        return case_1_1_1(H0, W0, dim=dim)
    if label == "1.1.2":
        s = _r(rng, 0.25, 2)
        k = 2 * np.sqrt(float(s)) * _unit(rng, n)
        # rationalise the direction while keeping |k|^2 = 4 s exactly
        kk = [sp.Rational(str(round(float(c), 3))) for c in k[:-1]]
        rest = 4 * s - sum(c ** 2 for c in kk)
        if rest < 0:
            kk = [0] * (n - 1)
            rest = 4 * s
        kk.append(sp.sqrt(rest) * (1 if k[-1] >= 0 else -1))
        zeta2 = sp.exp(sum(c * x for c, x in zip(kk, xs)) + _r(rng) * u)
        return case_1_1_2(zeta2, sigma=-s, dim=dim, H0=_r(rng) * xs[0] * u,
                          W0=[_r(rng) * last] + [0] * (n - 1))
    if label == "1.2.1a":
        W1 = [_r(rng) for _ in range(n)]
        sigma = _r(rng)
        while abs(4 * sigma + sum(w ** 2 for w in W1)) < sp.Rational(1, 4):
            sigma = _r(rng)
        W0 = [_r(rng) * sp.sin(last)] + [_r(rng) * xs[0] for _ in range(n - 1)]
        return case_1_2_1a(W1, W0, sigma, dim=dim)
    if label == "1.2.1b":
        s = _r(rng, 0, 1)
        W1 = [2 * sp.sqrt(s)] + [0] * (n - 1)
        zeta20 = _r(rng, 0, 1) * sp.exp(_r(rng) * last) + _r(rng, 0, 1)
        w = [_r(rng) * last] + [_r(rng) * xs[0] for _ in range(n - 1)]
        return case_1_2_1b(zeta20, W1, w, -s, dim=dim)
    if label == "1.2.2a":
        zeta3 = _r(rng, 0.5, 1.5) * (1 if rng.uniform() < 0.5 else -1)
        s = xs[0] - zeta3 * u
        zeta20 = zeta3 ** 2 / 2 + _r(rng, 0, 1) * s ** 2 + _r(rng, 0, 1)
        sig = -_r(rng, 0, 1)
        W1 = [2 * sp.sqrt(-sig)] + [0] * (n - 1)
        W0n = [_r(rng) * sp.sin(s) * last for _ in range(n - 1)]
        return case_1_2_2a_const(zeta3, zeta20, W1, W0n, sig, dim=dim)
    if label == "1.2.2b":
        s = xs[0] - u
        zeta20 = _r(rng, 0, 1) * sp.exp(_r(rng) * s) + _r(rng, 0, 1)
        W1 = [_r(rng) for _ in range(n)]
        sigma = _r(rng, 0.1, 1)
        W0n = [_r(rng) * sp.cos(s) + _r(rng) * last for _ in range(n - 1)]
        return case_1_2_2b(zeta20, W1, W0n, sigma, dim=dim)
    if label == "2-null":
        for _ in range(50):
            sigma = int(rng.integers(-1, 2))
            branch = int(rng.choice([-1, 1]))
            c1, c2 = float(_r(rng, 0.3, 1.5)), float(_r(rng))
            try:
                return case_2_null(sigma, c1, c2, branch, dim=dim)
            except FamilyError:
                continue
        raise FamilyError("could not draw a null Case 2 instance")
    if label == "2-timelike":
        for _ in range(50):
            sigma = int(rng.integers(-1, 2))
            c1, c2 = float(_r(rng, 0.3, 1.5)), float(_r(rng))
            c3 = float(_r(rng, -3, 3))
            b = _r(rng, -0.5, 0.5)
            try:
                return case_2_timelike(sigma, c1, c2, c3,
                                       zeta20=admissible_zeta20(sigma, c1, c2, 1, b), dim=dim)
            except FamilyError:
                continue
        raise FamilyError("could not draw a timelike Case 2 instance")
    raise FamilyError(f"unknown family label {label!r}")


def default_family(label: str, dim: int = 4) -> FamilySpec:
    """A fixed, documented instance per label."""
    xs = ec.coordinates(dim)[2:]
    n = dim - 2
    u = ec.U
    if label == "1.1.1":
        return case_1_1_1(xs[0] ** 2, dim=dim)
    if label == "1.1.2":
        return case_1_1_2(sp.exp(2 * xs[0]), sigma=-1, dim=dim)
    if label == "1.2.1a":
        return case_1_2_1a(sigma=1, dim=dim)
    if label == "1.2.1b":
        return case_1_2_1b(1, dim=dim)
    if label == "1.2.2a":
        return case_1_2_2a_const(1, 1, dim=dim)
    if label == "1.2.2b":
        return case_1_2_2b(xs[0] - u + 2, [0] * n, sigma=1, dim=dim)
    if label == "2-null":
        return case_2_null(0, 1, 0, 1, dim=dim)
    if label == "2-timelike":
        return case_2_timelike(0, 1, 1, choose_c3(0, 1, 1), dim=dim)
    raise FamilyError(f"unknown family label {label!r}")
