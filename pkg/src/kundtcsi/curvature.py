"""Frame connection, boost-weight Riemann components, CSI_0 checks and a coordinate oracle.

Two independent routes to the curvature live here. The frame route builds
closed-form expressions for the connection and Riemann components from H,
w_e and the coframe. The oracle route differentiates the coordinate metric
symbolically, evaluates the jets numerically, and assembles Christoffel
symbols and R_abcd with numpy. Comparing the two is the main consistency
check of the package.

Riemann convention (both routes): R^a_bcd = d_c G^a_db - d_d G^a_cb + ...,
lowered on the first index. In the frame, index 1 is e_1 = d_v and index 2
is e_2 = d_u - H d_v.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import sympy as sp

from . import exprcore as ec
from .exprcore import Expr
from .geometry import (
    Coframe,
    KundtMetric,
    Point,
    frame_derivative,
    frame_vectors,
    frame_W,
    frame_W0,
    frame_W1,
    sigma_star,
)


class SingularMetricError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _points_array(points) -> np.ndarray:
    if isinstance(points, Point):
        return points.as_array()[None, :]
    if len(points) and isinstance(points[0], Point):
        return np.array([p.as_array() for p in points])
    return np.atleast_2d(np.asarray(points, dtype=float))


def spread(values: np.ndarray, scales: np.ndarray | None = None) -> float:
    """Scale-aware constancy residual.

    max_p |f_p - median f| / (1 + |median f| + s_p), where ``s_p`` is the
    size of the pieces that combine into f at point p (zero if not given).
    Large cancelling pieces near a pole then do not count as variation.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    ref = float(np.median(values))
    s = 0.0 if scales is None else np.asarray(scales, dtype=float)
    return float((np.abs(values - ref) / (1.0 + abs(ref) + s)).max())


def _transverse_christoffel(gT, xs):
    n = len(xs)
    gi = gT.inv() if not gT.is_diagonal() else sp.diag(*[1 / gT[k, k] for k in range(n)])
    return [[[sp.Add(*[gi[a, d] * (sp.diff(gT[d, b], xs[c]) + sp.diff(gT[d, c], xs[b])
                                   - sp.diff(gT[b, c], xs[d])) for d in range(n)]) / 2
              for c in range(n)] for b in range(n)] for a in range(n)]


def transverse_covariant_W(K: KundtMetric, C: Coframe) -> list:
    """Frame components W_{i;j} = m_i^e m_j^f (d_f w_e - G~^g_fe w_g), v kept."""
    xs = K.xcoords
    n = len(xs)
    G = _transverse_christoffel(K.gT, xs)
    cov = [[sp.diff(K.W[e], xs[f]) - sp.Add(*[G[g][f][e] * K.W[g] for g in range(n)])
            for f in range(n)] for e in range(n)]
    return [[sp.Add(*[C.minv[e, i] * C.minv[f, j] * cov[e][f] for e in range(n) for f in range(n)])
             for j in range(n)] for i in range(n)]


def transverse_riemann(K: KundtMetric, C: Coframe) -> dict:
    """Non-zero frame components R~_ijkl of the transverse metric, keyed by (i, j, k, l)."""
    xs = K.xcoords
    n = len(xs)
    gT = K.gT
    if all(sp.diff(gT[a, b], x) == 0 for a in range(n) for b in range(n) for x in xs):
        return {}
    G = _transverse_christoffel(gT, xs)
    # lowered coordinate Riemann of gT
    R = {}
    for a in range(n):
        for b in range(n):
            for c in range(n):
                for d in range(n):
                    up = [sp.diff(G[e][d][b], xs[c]) - sp.diff(G[e][c][b], xs[d])
                          + sp.Add(*[G[e][c][f] * G[f][d][b] - G[e][d][f] * G[f][c][b]
                                     for f in range(n)]) for e in range(n)]
                    val = sp.Add(*[gT[a, e] * up[e] for e in range(n)])
                    if val != 0:
                        R[(a, b, c, d)] = val
    out = {}
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    val = sp.Add(*[C.minv[a, i] * C.minv[b, j] * C.minv[c, k] * C.minv[d, l] * r
                                   for (a, b, c, d), r in R.items()])
                    val = sp.simplify(val)
                    if val != 0:
                        out[(i, j, k, l)] = val
    return out


# ---------------------------------------------------------------------------
# connection table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConnectionTable:
    """Frame connection components; transverse lists are indexed from x3 (position 0).

    ``A[i][j]`` is the antisymmetric A_ij and the ``Gbar*``/``Abar*`` entries
    are its v-expansion coefficients together with those of G_2i2.
    """

    G21i: tuple
    G212: Expr
    G2i2: tuple
    Gi12: tuple
    Gi21: tuple
    Gi2j: tuple
    Gij2: tuple
    Gijk: tuple
    A: tuple
    Dijk: tuple
    Gbar2: tuple
    Gbar1: tuple
    Gbar0: tuple
    Abar1: tuple
    Abar0: tuple

    def G2i2_from_expansion(self) -> tuple:
        v = ec.V
        return tuple(g2 * v ** 2 / 8 + g1 * v + g0
                     for g2, g1, g0 in zip(self.Gbar2, self.Gbar1, self.Gbar0))


@lru_cache(maxsize=1024)
def connection_table(K: KundtMetric, C: Coframe) -> ConnectionTable:
    n = K.dim - 2
    xs = K.xcoords
    Dk = lambda idx, f: frame_derivative(K, C, idx, f)  # noqa: E731
    W = frame_W(K, C)
    W1 = frame_W1(K, C)
    W0 = frame_W0(K, C)
    H1, H0 = K.H1, K.H0
    s_star = sigma_star(K, C)

    half_D1W = tuple(Dk(1, w) / 2 for w in W)
    G2i2 = tuple(Dk(3 + i, K.H) - Dk(2, W[i]) for i in range(n))

    # A_ij = m_i^e m_j^f (D_f w_e - D_e w_f), with D_e = d_e - w_e d_v
    def Dcoord(e, f):
        return sp.diff(f, xs[e]) - K.W[e] * sp.diff(f, ec.V)

    curl = [[Dcoord(f, K.W[e]) - Dcoord(e, K.W[f]) for f in range(n)] for e in range(n)]
    A = tuple(tuple(sp.expand(sp.Add(*[C.minv[e, i] * C.minv[f, j] * curl[e][f]
                                       for e in range(n) for f in range(n)]))
                    for j in range(n)) for i in range(n))
    Abar1 = tuple(tuple(sp.diff(a, ec.V).subs(ec.V, 0) for a in row) for row in A)
    Abar0 = tuple(tuple(a.subs(ec.V, 0) for a in row) for row in A)

    m, mi = C.m, C.minv
    Dijk = tuple(tuple(tuple(
        sp.Add(*[sp.diff(m[i, e], xs[f]) * (mi[e, j] * mi[f, k] - mi[e, k] * mi[f, j])
                 for e in range(n) for f in range(n)])
        for k in range(n)) for j in range(n)) for i in range(n))
    Gijk = tuple(tuple(tuple(-(Dijk[i][j][k] + Dijk[j][k][i] - Dijk[k][i][j]) / 2
                             for k in range(n)) for j in range(n)) for i in range(n))

    D2 = lambda f: sp.diff(f, ec.U)  # noqa: E731  (v-independent arguments)
    Gbar2 = tuple(Dk(3 + i, s_star) - s_star * W1[i] for i in range(n))
    Gbar1 = tuple(Dk(3 + i, H1) - W0[i] * s_star / 4 - D2(W1[i]) for i in range(n))
    Gbar0 = tuple(Dk(3 + i, H0) - W0[i] * H1 - D2(W0[i]) + H0 * W1[i] for i in range(n))
    half_A = tuple(tuple(a / 2 for a in row) for row in A)
    return ConnectionTable(
        G21i=half_D1W, G212=Dk(1, K.H), G2i2=G2i2, Gi12=half_D1W, Gi21=half_D1W,
        Gi2j=half_A, Gij2=half_A, Gijk=Gijk, A=A, Dijk=Dijk,
        Gbar2=Gbar2, Gbar1=Gbar1, Gbar0=Gbar0, Abar1=Abar1, Abar0=Abar0,
    )


# ---------------------------------------------------------------------------
# frame Riemann components
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RiemannBW:
    """Boost weight +1 and 0 frame components (transverse indices from position 0)."""

    R121i: tuple
    R1212: Expr
    R12ij: tuple
    R1i2j: tuple
    Rtilde: dict = field(default_factory=dict)


@lru_cache(maxsize=1024)
def riemann_components(K: KundtMetric, C: Coframe) -> RiemannBW:
    n = K.dim - 2
    v = ec.V
    W = frame_W(K, C)
    Wv = [sp.diff(w, v) for w in W]
    Wvv = [sp.diff(w, v, 2) for w in W]
    Wc = transverse_covariant_W(K, C)
    Wcv = [[sp.diff(Wc[i][j], v) for j in range(n)] for i in range(n)]
    R121i = tuple(-w / 2 for w in Wvv)
    R1212 = -sp.diff(K.H, v, 2) + sp.Add(*[w ** 2 for w in Wv]) / 4
    R12ij = tuple(tuple((W[i] * Wvv[j] - W[j] * Wvv[i]) / 2 + (Wcv[i][j] - Wcv[j][i]) / 2
                        for j in range(n)) for i in range(n))
    R1i2j = tuple(tuple((-W[j] * Wvv[i] + Wcv[i][j] - Wv[i] * Wv[j] / 2) / 2
                        for j in range(n)) for i in range(n))
    return RiemannBW(R121i, R1212, R12ij, R1i2j, transverse_riemann(K, C))


# ---------------------------------------------------------------------------
# coordinate oracle
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1024)
def _metric_jets(g: sp.ImmutableMatrix, dim: int):
    X = ec.coordinates(dim)
    N = dim
    dg = {}
    ddg = {}
    for a in range(N):
        for b in range(a, N):
            for c in range(N):
                d1 = sp.diff(g[a, b], X[c])
                if d1 != 0:
                    dg[(a, b, c)] = d1
                    for d in range(c, N):
                        d2 = sp.diff(d1, X[d])
                        if d2 != 0:
                            ddg[(a, b, c, d)] = d2
    return dg, ddg


class OracleJets:
    """Numeric metric jets (g, dg, ddg) at a batch of points."""

    def __init__(self, g: sp.ImmutableMatrix, dim: int, pts: np.ndarray,
                 constants: dict | None = None, workers: int | None = None):
        self.dim = dim
        self.pts = pts
        N = dim
        P = pts.shape[0]
        names = ec.coordinate_names(dim)
        dg_s, ddg_s = _metric_jets(g, dim)
        gexprs = [(a, b, g[a, b]) for a in range(N) for b in range(a, N) if g[a, b] != 0]
        keys1 = list(dg_s)
        keys2 = list(ddg_s)
        allexprs = [e for _, _, e in gexprs] + [dg_s[k] for k in keys1] + [ddg_s[k] for k in keys2]
        vals = ec.evaluate_many(allexprs, names, pts, constants, workers) if allexprs else np.zeros((0, P))
        G = np.zeros((P, N, N))
        dG = np.zeros((P, N, N, N))
        ddG = np.zeros((P, N, N, N, N))
        k = 0
        for a, b, _ in gexprs:
            G[:, a, b] = G[:, b, a] = vals[k]
            k += 1
        for a, b, c in keys1:
            dG[:, a, b, c] = dG[:, b, a, c] = vals[k]
            k += 1
        for a, b, c, d in keys2:
            for (p, q) in ((a, b), (b, a)):
                ddG[:, p, q, c, d] = ddG[:, p, q, d, c] = vals[k]
            k += 1
        self.g, self.dg, self.ddg = G, dG, ddG
        dets = np.linalg.det(G)
        if np.any(np.abs(dets) < 1e-300) or not np.all(np.isfinite(dets)):
            bad = int(np.flatnonzero(~(np.abs(dets) >= 1e-300))[0])
            raise SingularMetricError(f"metric is singular at {Point.from_array(pts[bad])}")
        self.ginv = np.linalg.inv(G)
        # first kind: G_abc = 1/2 (g_ab,c + g_ac,b - g_bc,a)
        self.Gamma_low = 0.5 * (dG + np.swapaxes(dG, 2, 3) - np.einsum("pbca->pabc", dG))
        self.Gamma = np.einsum("pad,pdbc->pabc", self.ginv, self.Gamma_low)

    def riemann(self) -> np.ndarray:
        """All-lowered R_abcd at every point, shape (P, N, N, N, N)."""
        ddg = self.ddg
        # 1/2 (g_ad,bc + g_bc,ad - g_ac,bd - g_bd,ac)
        t1 = np.einsum("padbc->pabcd", ddg)
        t2 = np.einsum("pbcad->pabcd", ddg)
        t3 = np.einsum("pacbd->pabcd", ddg)
        t4 = np.einsum("pbdac->pabcd", ddg)
        lin = 0.5 * (t1 + t2 - t3 - t4)
        # + g_ef (G^e_bc G^f_ad - G^e_bd G^f_ac) = G_fbc G^f_ad - G_fbd G^f_ac
        quad = (np.einsum("pfbc,pfad->pabcd", self.Gamma_low, self.Gamma)
                - np.einsum("pfbd,pfac->pabcd", self.Gamma_low, self.Gamma))
        return lin + quad



def frame_matrix(K: KundtMetric, C: Coframe, pts: np.ndarray, constants=None, workers=None) -> np.ndarray:
    """Coordinate components of the frame vectors, shape (P, N, N) [point, frame, coord]."""
    E = frame_vectors(K, C)
    N = K.dim
    flat = [c for vec in E for c in vec]
    vals = ec.evaluate_many(flat, K.names, pts, constants, workers)
    return np.transpose(vals.reshape(N, N, -1), (2, 0, 1))


def riemann_oracle(K: KundtMetric, C: Coframe | None, p, constants=None) -> np.ndarray:
    """Coordinate R_abcd at ``p`` (a Point or an array of points).

    ``C`` is unused by the coordinate computation and accepted for a uniform
    call signature; use :func:`oracle_frame_riemann` for frame projections.
    """
    pts = _points_array(p)
    R = OracleJets(K.coordinate_metric(), K.dim, pts, constants).riemann()
    return R[0] if isinstance(p, Point) else R


def oracle_frame_riemann(K: KundtMetric, C: Coframe, pts, constants=None, workers=None) -> np.ndarray:
    pts = _points_array(pts)
    R = OracleJets(K.coordinate_metric(), K.dim, pts, constants, workers).riemann()
    E = frame_matrix(K, C, pts, constants, workers)
    return np.einsum("pabcd,pqa,prb,psc,ptd->pqrst", R, E, E, E, E, optimize=True)


@dataclass(frozen=True)
class RiemannComparison:
    sign: int
    max_deviation: float
    max_relative: float
    per_family: dict
    passes: bool
    n_points: int

    def summary(self) -> str:
        fam = ", ".join(f"{k}={v:.3e}" for k, v in sorted(self.per_family.items()))
        return (f"sign={self.sign:+d} max_rel={self.max_relative:.3e} over {self.n_points} points "
                f"[{fam}]")


def _frame_formula_arrays(K, C, RB: RiemannBW, pts, constants, workers):
    n = K.dim - 2
    entries = []  # (family, frame index tuple, expr)
    for i in range(n):
        entries.append(("R121i", (0, 1, 0, 2 + i), RB.R121i[i]))
    entries.append(("R1212", (0, 1, 0, 1), RB.R1212))
    for i in range(n):
        for j in range(n):
            entries.append(("R12ij", (0, 1, 2 + i, 2 + j), RB.R12ij[i][j]))
            entries.append(("R1i2j", (0, 2 + i, 1, 2 + j), RB.R1i2j[i][j]))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    entries.append(("Rtilde", (2 + i, 2 + j, 2 + k, 2 + l),
                                    RB.Rtilde.get((i, j, k, l), sp.Integer(0))))
    vals = ec.evaluate_many([e for _, _, e in entries], K.names, pts, constants, workers)
    return entries, vals


def compare_riemann(K: KundtMetric, C: Coframe, points, rtol: float = 1e-8,
                    constants=None, workers=None) -> RiemannComparison:
    """Frame formulas against the oracle projection, with one global sign chosen per call.

    Deviations are measured relative to max(1, largest |oracle component|)
    at each point.
    """
    pts = _points_array(points)
    RB = riemann_components(K, C)
    Rf = oracle_frame_riemann(K, C, pts, constants, workers)
    entries, vals = _frame_formula_arrays(K, C, RB, pts, constants, workers)
    oracle = np.array([Rf[:, a, b, c, d] for _, (a, b, c, d), _ in entries])
    scale = np.maximum(1.0, np.abs(Rf).reshape(pts.shape[0], -1).max(axis=1))
    # +1 is kept whenever it fits; on flat metrics both signs fit to roundoff
    best = None
    for s in (1, -1):
        dev = np.abs(oracle - s * vals) / scale
        if best is None or dev.max() < best[1].max():
            best = (s, dev)
        if not dev.size or dev.max() < rtol:
            break
    s, dev = best
    per = {}
    for (fam, _, _), row in zip(entries, dev):
        per[fam] = max(per.get(fam, 0.0), float(row.max()))
    mx = float(np.abs(oracle - s * vals).max()) if vals.size else 0.0
    mrel = float(dev.max()) if dev.size else 0.0
    return RiemannComparison(s, mx, mrel, per, mrel < rtol, pts.shape[0])


# ---------------------------------------------------------------------------
# CSI_0
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CSI0Report:
    passes: bool
    residuals: dict
    sigma_measured: float
    sigma_declared: float | None
    a_matrix: np.ndarray
    s_matrix: np.ndarray
    transverse_spread: float
    tol: float

    def failed(self) -> list:
        return [k for k, v in self.residuals.items() if not v < self.tol]


def csi0_check(K: KundtMetric, C: Coframe, samples, tol: float = 1e-9,
               constants=None, workers=None) -> CSI0Report:
    """Evaluate the CSI_0 conditions at ``samples``.

    Residuals: ``Wcsi1`` max |W_i,vv|; ``Wcsi2`` spread of H_vv - |W_v|^2/4
    (see :func:`spread`, scaled by the size of the two pieces);
    ``sigma`` deviation of that quantity from the declared sigma; ``Wcsi3``
    and ``Wcsi4`` spreads of the a and s matrices; ``transverse`` spread of
    the transverse frame curvature.
    """
    pts = _points_array(samples)
    n = K.dim - 2
    v = ec.V
    W = frame_W(K, C)
    Wv = [sp.diff(w, v) for w in W]
    Wvv = [sp.diff(w, v, 2) for w in W]
    Wc = transverse_covariant_W(K, C)
    Wcv = [[sp.diff(Wc[i][j], v) for j in range(n)] for i in range(n)]
    Hvv = sp.diff(K.H, v, 2)
    Rt = transverse_riemann(K, C)
    exprs = list(Wvv) + [Hvv] + list(Wv) + [x for row in Wcv for x in row] + list(Rt.values())
    vals = ec.evaluate_many(exprs, K.names, pts, constants, workers)
    k = 0
    wvv = vals[k:k + n]; k += n
    hvv = vals[k]; k += 1
    wv = vals[k:k + n]; k += n
    wcv = vals[k:k + n * n].reshape(n, n, -1); k += n * n
    rv = vals[k:]
    # combine numerically so each quantity comes with the size of its pieces
    qv = hvv - (wv ** 2).sum(axis=0) / 4
    qs = np.abs(hvv) + (wv ** 2).sum(axis=0) / 4
    wcvT = np.swapaxes(wcv, 0, 1)
    outer = wv[:, None, :] * wv[None, :, :]
    av = (wcv - wcvT) / 2
    a_s = (np.abs(wcv) + np.abs(wcvT)) / 2
    sv = (wcv + wcvT) / 2 - outer / 2
    s_s = a_s + np.abs(outer) / 2
    res = {
        "Wcsi1": float(np.abs(wvv).max()) if wvv.size else 0.0,
        "Wcsi2": spread(qv, qs),
    }
    declared = None
    try:
        declared = float(ec.evaluate(K.sigma, dict(constants or {})))
    except ec.ExprError:
        declared = None
    if declared is not None:
        res["sigma"] = float((np.abs(qv - declared) / (1.0 + abs(declared) + qs)).max())
    res["Wcsi3"] = max((spread(av[i, j], a_s[i, j]) for i in range(n) for j in range(n)), default=0.0)
    res["Wcsi4"] = max((spread(sv[i, j], s_s[i, j]) for i in range(n) for j in range(n)), default=0.0)
    tsp = max((spread(r) for r in rv), default=0.0)
    res["transverse"] = tsp
    passes = all(r < tol for r in res.values())
    return CSI0Report(passes, res, float(qv.mean()), declared, av.mean(axis=2), sv.mean(axis=2),
                      tsp, tol)


# ---------------------------------------------------------------------------
# Kundt vector
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KundtVectorReport:
    form_holds: bool
    lij_zero: bool
    L11: float
    L1i: float
    Li1: float
    Lij: float
    outside: float
    tol: float


def kundt_vector_check(K: KundtMetric, C: Coframe, samples, tol: float = 1e-9,
                       g_override=None, constants=None, workers=None) -> KundtVectorReport:
    """Frame components of l_{a;b} for l = du from oracle Christoffel symbols.

    With l_{a;b} = d_b l_a - G^c_ab l_c = -G^u_ab, the Kundt form allows only
    the (2,2), (2,i), (i,2) frame slots (L11, L1i, Li1). ``L_ij`` is reported
    separately. ``g_override`` replaces the coordinate metric (used to probe
    non-Kundt edits); the frame is still built from ``K`` and ``C``.
    """
    pts = _points_array(samples)
    g = sp.ImmutableMatrix(g_override) if g_override is not None else K.coordinate_metric()
    jets = OracleJets(g, K.dim, pts, constants, workers)
    nabla_l = -jets.Gamma[:, 0, :, :]
    E = frame_matrix(K, C, pts, constants, workers)
    L = np.einsum("pab,pqa,prb->pqr", nabla_l, E, E)
    n = K.dim - 2
    L11 = float(np.abs(L[:, 1, 1]).max())
    L1i = float(np.abs(L[:, 1, 2:]).max()) if n else 0.0
    Li1 = float(np.abs(L[:, 2:, 1]).max()) if n else 0.0
    Lij = float(np.abs(L[:, 2:, 2:]).max()) if n else 0.0
    outside = float(max(np.abs(L[:, 0, :]).max(), np.abs(L[:, :, 0]).max()))
    return KundtVectorReport(outside < tol and Lij < tol, Lij < tol, L11, L1i, Li1, Lij, outside, tol)
