"""Killing vector assembly, v-ordered Killing residuals, causality and CCNV tests.

A candidate is given by its generating data (zeta1, zeta3^(0), zeta2^(0)).
The covector is zeta = zeta_1 n + zeta_2 l + zeta_3 m^3 with

    zeta_3 = -D3(zeta_1) v + zeta3^(0)
    zeta_2 = Z22 v^2/2 + Z21 v + zeta2^(0)
    Z22    = sigma* zeta_1/4 - W1_3 D3(zeta_1)
    Z21    = W1_3 zeta3^(0) - D2 zeta_1 + H1 zeta_1

The frame equations below are the v-coefficients of the frame Killing tensor
K_ab = (L_zeta g)(e_a, e_b) for (ab) = (3i), (22), (23), (2n). Each equation
is kept as a list of terms so residuals can be normalised by the size of
the terms that cancel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import sympy as sp

from . import exprcore as ec
from .curvature import OracleJets, _points_array, connection_table, frame_matrix
from .exprcore import Expr
from .geometry import (
    Coframe,
    KundtMetric,
    frame_derivative,
    frame_to_coordinate,
    frame_W0,
    frame_W1,
    sigma_star,
)


class CandidateError(ValueError):
    pass


# ---------------------------------------------------------------------------
# candidate and components
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KillingCandidate:
    zeta1: Expr
    zeta30: Expr
    zeta20: Expr

    def __post_init__(self):
        for name in ("zeta1", "zeta30", "zeta20"):
            object.__setattr__(self, name, ec.as_expr(getattr(self, name)))
        bad = {s.name for s in self.zeta1.free_symbols} & ({"v"} | {f"x{k}" for k in range(4, 64)})
        if bad:
            raise CandidateError(f"zeta1 must depend on (u, x3) only, found {sorted(bad)}")
        for name in ("zeta30", "zeta20"):
            if ec.V in getattr(self, name).free_symbols:
                raise CandidateError(f"{name} must not depend on v")


@dataclass(frozen=True)
class KillingComponents:
    zeta1: Expr
    zeta2: Expr
    zeta3: Expr
    Z22: Expr
    Z21: Expr
    Z20: Expr
    zeta30: Expr
    D3zeta1: Expr

    def covector(self, dim: int) -> tuple:
        return (self.zeta1, self.zeta2, self.zeta3) + (sp.Integer(0),) * (dim - 3)


@lru_cache(maxsize=1024)
def build_components(K: KundtMetric, C: Coframe, cand: KillingCandidate) -> KillingComponents:
    z1 = cand.zeta1
    D3z1 = frame_derivative(K, C, 3, z1)
    W1 = frame_W1(K, C)
    s_star = sigma_star(K, C)
    Z22 = s_star * z1 / 4 - W1[0] * D3z1
    Z21 = W1[0] * cand.zeta30 - frame_derivative(K, C, 2, z1) + K.H1 * z1
    v = ec.V
    zeta2 = Z22 * v ** 2 / 2 + Z21 * v + cand.zeta20
    zeta3 = -D3z1 * v + cand.zeta30
    return KillingComponents(z1, zeta2, zeta3, Z22, Z21, cand.zeta20, cand.zeta30, D3z1)


def vector_field(K: KundtMetric, C: Coframe, comps: KillingComponents) -> tuple:
    """Coordinate components of the vector dual to the candidate covector."""
    return frame_to_coordinate(K, C, comps.covector(K.dim))


# ---------------------------------------------------------------------------
# frame Killing equations
# ---------------------------------------------------------------------------

#: weight w_k such that K_ab(v) = sum_k w_k * equation_k * v^k (see module docstring)
ORDER_WEIGHTS = {
    "22": {3: sp.Rational(-1, 4), 2: 1, 1: 2, 0: 2},
    "23": {2: sp.Rational(1, 2), 1: -1, 0: 1},
    "2n": {2: sp.Rational(1, 2), 1: 1, 0: 1},
}


@dataclass(frozen=True)
class Equation:
    key: str
    terms: tuple
    normative: bool = True
    note: str = ""

    @property
    def lhs(self) -> Expr:
        return sp.Add(*self.terms)


@lru_cache(maxsize=1024)
def killing_equations(K: KundtMetric, C: Coframe, cand: KillingCandidate) -> tuple:
    """All frame Killing equations as term lists (split by :func:`split_terms`).

    Keys: ``3i.a[i]``/``3i.b[i]`` for the two (3i) relations, ``22.v3`` to
    ``22.v0``, ``23.v2`` to ``23.v0`` and ``2n.v2[n]`` to ``2n.v0[n]``.
    Curved transverse metrics add ``nm.v1[j,k]``/``nm.v0[j,k]`` for the
    transverse block. The printed forms of the two equations whose coefficients differ from
    the direct expansion are kept as non-normative ``*.printed`` entries,
    and the Case 2 rearrangement of the v^0 (23) equation is kept as the
    non-normative ``23.v0.c2``.
    """
    comps = build_components(K, C, cand)
    n = K.dim - 2
    Dk = lambda idx, f: frame_derivative(K, C, idx, f)  # noqa: E731
    T = connection_table(K, C)
    W1 = frame_W1(K, C)
    W0 = frame_W0(K, C)
    H1, H0 = K.H1, K.H0
    ss = sigma_star(K, C)
    z1, z30, z20 = comps.zeta1, comps.zeta30, comps.Z20
    d3 = comps.D3zeta1
    Z22, Z21 = comps.Z22, comps.Z21
    G2, G1, G0 = T.Gbar2, T.Gbar1, T.Gbar0
    A1, A0 = T.Abar1, T.Abar0
    q = sp.Rational(1, 4)
    eqs = []
    for i in range(n):
        tag = f"[{i + 3}]"
        eqs.append(Equation("3i.a" + tag, (Dk(3 + i, z30), W0[i] * d3)))
        eqs.append(Equation("3i.b" + tag, (Dk(3 + i, d3), -W1[i] * d3)))
    eqs += [
        Equation("22.v3", (G2[0] * d3,)),
        Equation("22.v2", (Dk(2, Z22), q * ss * Z21, -H1 * Z22, -2 * G1[0] * d3, q * G2[0] * z30)),
        Equation("22.v2.printed", (Dk(2, Z22), q * ss * Z21, -H1 * Z22, -q * G1[0] * d3, q * G2[0] * z30),
                 normative=False, note="printed coefficient -1/4 on Gbar1_3 D3 zeta1"),
        Equation("22.v1", (Dk(2, Z21), q * ss * z20, -H0 * Z22, -G0[0] * d3, G1[0] * z30)),
        Equation("22.v0", (Dk(2, z20), -H0 * Z21, H1 * z20, G0[0] * z30)),
        Equation("23.v2", (q * ss * d3, Dk(3, Z22), -W1[0] * Z22, -q * G2[0] * z1)),
        Equation("23.v1", (Dk(2, d3), -H1 * d3, -Dk(3, Z21), W0[0] * Z22, G1[0] * z1)),
        Equation("23.v0", (Dk(2, z30), H0 * d3, Dk(3, z20), -W0[0] * Z21, -G0[0] * z1, W1[0] * z20)),
    ]
    if d3 != 0:
        eqs.append(Equation("23.v0.c2", (Dk(3, z20 * d3), -z1 ** 2 * Dk(3, H0 * d3 / z1)),
                            normative=False, note="Case 2 gauge rearrangement"))
    for j in range(1, n):
        tag = f"[{j + 3}]"
        eqs += [
            Equation("2n.v2" + tag, (Dk(3 + j, Z22), -W1[j] * Z22, -q * G2[j] * z1, 2 * A1[0][j] * d3)),
            Equation("2n.v2.printed" + tag, (Dk(3 + j, Z22), -W1[j] * Z22, -q * G2[j] * z1, A1[0][j] * d3),
                     normative=False, note="printed coefficient 1 on Abar1_3n D3 zeta1"),
            Equation("2n.v1" + tag, (Dk(3 + j, Z21), -W0[j] * Z22, -G1[j] * z1, -A1[0][j] * z30,
                                      A0[0][j] * d3)),
            Equation("2n.v0" + tag, (Dk(3 + j, z20), -W0[j] * Z21, -G0[j] * z1, W1[j] * z20,
                                      -A0[0][j] * z30)),
        ]
    # transverse block, identically zero when the m^3 direction is geodesic
    # and shear free in the transverse metric (always so for flat gT)
    for j in range(1, n):
        for k in range(j, n):
            S = T.Gijk[0][j][k] + T.Gijk[0][k][j]
            if S == 0:
                continue
            tag = f"[{j + 3},{k + 3}]"
            eqs.append(Equation("nm.v1" + tag, (d3 * S,)))
            eqs.append(Equation("nm.v0" + tag, (z30 * S,)))
    return tuple(_split_equation(e) for e in eqs)


def split_terms(expr: Expr, limit: int = 512) -> list:
    """Distribute products over sums one structural level at a time.

    The pieces add back up to ``expr``; they only serve as the scale in
    :func:`normalized_residual`, so a single term that hides a large
    internal cancellation is measured against its largest piece.
    """
    expr = ec.as_expr(expr)
    if isinstance(expr, sp.Add):
        out = []
        for a in expr.args:
            out.extend(split_terms(a, limit))
        return out
    if isinstance(expr, sp.Mul):
        parts = [[]]
        for f in expr.args:
            fs = split_terms(f, limit) if isinstance(f, (sp.Add, sp.Mul)) else [f]
            if len(parts) * len(fs) > limit:
                return [expr]
            parts = [p + [q] for p in parts for q in fs]
        # unevaluated products: canonicalising thousands of Muls dominates the cost
        return [p[0] if len(p) == 1 else sp.Mul(*p, evaluate=False) for p in parts]
    return [expr]


def _split_equation(e: Equation) -> Equation:
    pieces = tuple(p for t in e.terms for p in split_terms(t) if p != 0)
    return Equation(e.key, pieces or (sp.Integer(0),), e.normative, e.note)


def _eval_terms(eqs: Sequence[Equation], names, pts, constants, workers):
    flat = [t for e in eqs for t in e.terms]
    vals = ec.evaluate_many(flat, names, pts, constants, workers)
    out = {}
    k = 0
    for e in eqs:
        block = vals[k:k + len(e.terms)]
        k += len(e.terms)
        out[e.key] = block
    return out


def normalized_residual(term_values: np.ndarray) -> np.ndarray:
    """|sum of terms| / (1 + sum of |terms|) per sample."""
    term_values = np.atleast_2d(term_values)
    return np.abs(term_values.sum(axis=0)) / (1.0 + np.abs(term_values).sum(axis=0))


# ---------------------------------------------------------------------------
# residual report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualReport:
    """Per-equation residual maxima.

    ``raw`` holds max |lhs| and ``normalized`` the max of
    |lhs| / (1 + sum |terms|). ``passes`` uses the normalised values of the
    normative equations. ``oracle_max`` is the largest entry of
    |(L_zeta g)_ab| / (1 + sum of |terms| of that entry) from the coordinate oracle.
    """

    raw: dict
    normalized: dict
    normative: tuple
    tol: float
    oracle_max: float
    oracle_points: int
    notes: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max((self.normalized[k] for k in self.normative), default=0.0)

    @property
    def passes(self) -> bool:
        return self.max_residual < self.tol

    @property
    def oracle_passes(self) -> bool:
        return self.oracle_max < self.tol

    @property
    def agrees_with_oracle(self) -> bool:
        return self.passes == self.oracle_passes

    def failing(self) -> list:
        return [k for k in self.normative if not self.normalized[k] < self.tol]


def killing_residuals(K: KundtMetric, C: Coframe, cand: KillingCandidate, samples,
                      tol: float = 1e-9, oracle_samples: int = 10, constants=None,
                      workers=None) -> ResidualReport:
    pts = _points_array(samples)
    eqs = killing_equations(K, C, cand)
    vals = _eval_terms(eqs, K.names, pts, constants, workers)
    raw = {e.key: float(np.abs(vals[e.key].sum(axis=0)).max()) for e in eqs}
    norm = {e.key: float(normalized_residual(vals[e.key]).max()) for e in eqs}
    normative = tuple(e.key for e in eqs if e.normative)
    notes = {e.key: e.note for e in eqs if e.note}
    opts = pts[:oracle_samples]
    omax = 0.0
    if len(opts):
        comps = build_components(K, C, cand)
        L, _, S = lie_derivative_arrays(K, vector_field(K, C, comps), opts, constants, workers,
                                        with_scale=True)
        omax = float((np.abs(L) / (1.0 + S)).max())
    return ResidualReport(raw, norm, normative, tol, omax, len(opts), notes)


# ---------------------------------------------------------------------------
# coordinate oracle for the Lie derivative
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1024)
def _vector_jets(vec: tuple, dim: int):
    X = ec.coordinates(dim)
    return tuple(tuple(sp.diff(c, x) for x in X) for c in vec)


def lie_derivative_arrays(K: KundtMetric, vec: Sequence, points, constants=None, workers=None,
                          with_scale: bool = False):
    """(L_xi g)_ab at every point; returns (L, g) arrays of shape (P, N, N).

    With ``with_scale`` a third array holds the sum of the absolute values of
    the terms of each entry, the natural floating-point scale of the sum.
    """
    pts = _points_array(points)
    N = K.dim
    vec = tuple(ec.as_expr(c) for c in vec)
    jets = OracleJets(K.coordinate_metric(), N, pts, constants, workers)
    dvec = _vector_jets(vec, N)
    flat = list(vec) + [d for row in dvec for d in row]
    vals = ec.evaluate_many(flat, K.names, pts, constants, workers)
    xi = vals[:N].T  # (P, N)
    dxi = vals[N:].reshape(N, N, -1).transpose(2, 0, 1)  # (P, c, a) = d_a xi^c
    g, dg = jets.g, jets.dg
    L = (np.einsum("pc,pabc->pab", xi, dg)
         + np.einsum("pcb,pca->pab", g, dxi)
         + np.einsum("pac,pcb->pab", g, dxi))
    if not with_scale:
        return L, g
    ag, adx = np.abs(g), np.abs(dxi)
    S = (np.einsum("pc,pabc->pab", np.abs(xi), np.abs(dg))
         + np.einsum("pcb,pca->pab", ag, adx)
         + np.einsum("pac,pcb->pab", ag, adx))
    return L, g, S


def lie_derivative_oracle(K: KundtMetric, C: Coframe | None, vec: Sequence, p, constants=None) -> np.ndarray:
    """Symmetric N x N matrix (L_vec g)_ab at a single point ``p``."""
    L, _ = lie_derivative_arrays(K, vec, p, constants)
    return L[0]


def frame_killing_tensor(K: KundtMetric, C: Coframe, cand: KillingCandidate, points,
                         constants=None, workers=None) -> np.ndarray:
    """Oracle frame components K_ab = (L_zeta g)(e_a, e_b), shape (P, N, N)."""
    pts = _points_array(points)
    comps = build_components(K, C, cand)
    L, _ = lie_derivative_arrays(K, vector_field(K, C, comps), pts, constants, workers)
    E = frame_matrix(K, C, pts, constants, workers)
    return np.einsum("pab,pqa,prb->pqr", L, E, E)


def reassemble_killing_tensor(K: KundtMetric, C: Coframe, cand: KillingCandidate, points,
                              constants=None) -> dict:
    """K_33, K_3n, K_22, K_23 and K_2n rebuilt from the v-ordered equations.

    Returns a dict keyed by frame pairs (1-based) with arrays over points;
    comparing with :func:`frame_killing_tensor` checks the v-order split.
    """
    pts = _points_array(points)
    eqs = {e.key: e for e in killing_equations(K, C, cand)}
    v = pts[:, 1]
    out = {}

    def combine(prefix, suffix=""):
        total = np.zeros(pts.shape[0])
        for order, w in ORDER_WEIGHTS[prefix].items():
            e = eqs[f"{prefix}.v{order}{suffix}"]
            val = ec.evaluate_many([e.lhs], K.names, pts, constants)[0]
            total += float(w) * val * v ** order
        return total

    def lhs(key):
        return ec.evaluate_many([eqs[key].lhs], K.names, pts, constants)[0]

    out[(3, 3)] = 2 * lhs("3i.a[3]") - 2 * v * lhs("3i.b[3]")
    for j in range(4, K.dim + 1):
        out[(3, j)] = lhs(f"3i.a[{j}]") - v * lhs(f"3i.b[{j}]")
    for j in range(4, K.dim + 1):
        for k in range(j, K.dim + 1):
            key = f"[{j},{k}]"
            if f"nm.v1{key}" in eqs:
                out[(j, k)] = v * lhs(f"nm.v1{key}") - lhs(f"nm.v0{key}")
    out[(2, 2)] = combine("22")
    out[(2, 3)] = combine("23")
    for j in range(4, K.dim + 1):
        out[(2, j)] = combine("2n", f"[{j}]")
    return out


# ---------------------------------------------------------------------------
# causality
# ---------------------------------------------------------------------------

CAUSAL_CLASSES = ("null", "timelike", "spacelike-somewhere", "mixed")


@dataclass(frozen=True)
class CausalityReport:
    """Causal character from the expanded magnitude conditions.

    ``classification`` uses M = zeta_3^2 - 2 zeta_1 zeta_2, expanded as
    M = m2 v^2 - 2 m1 v + m0 with m2, m1, m0 the three order conditions.
    ``oracle_classification`` uses g_ab xi^a xi^b from the coordinate
    metric, which equals zeta_3^2 + 2 zeta_1 zeta_2 for the frame dual to
    the coframe. The two agree whenever zeta_1 zeta_2 vanishes.
    """

    classification: str
    m2_max: float
    m1_max: float
    m0_max: float
    magnitude_min: float
    magnitude_max: float
    oracle_classification: str
    oracle_min: float
    oracle_max: float
    abs_mismatch: float
    conditions: dict

    @property
    def conventions_agree(self) -> bool:
        return self.classification == self.oracle_classification


def magnitude_orders(K: KundtMetric, C: Coframe, cand: KillingCandidate) -> tuple:
    """(m2, m1, m0): the v^2, v^1 and v^0 non-spacelike conditions."""
    comps = build_components(K, C, cand)
    z1, d3, z30, z20 = comps.zeta1, comps.D3zeta1, comps.zeta30, comps.Z20
    W1 = frame_W1(K, C)
    ss = sigma_star(K, C)
    m2 = -ss * z1 ** 2 / 4 + W1[0] * d3 * z1 + d3 ** 2
    m1 = z1 * (W1[0] * z30 - frame_derivative(K, C, 2, z1) + K.H1 * z1) + d3 * z30
    m0 = z30 ** 2 - 2 * z1 * z20
    return m2, m1, m0


def _classify_values(vals: np.ndarray, tol: float, sizes: np.ndarray | None = None) -> str:
    """Sign pattern of ``vals``; ``sizes`` are the magnitudes of the summed pieces."""
    scale = 1.0 + (np.abs(vals) if sizes is None else sizes)
    pos = vals > tol * scale
    neg = vals < -tol * scale
    if pos.any():
        return "spacelike-somewhere"
    if neg.all():
        return "timelike"
    if not neg.any():
        return "null"
    return "mixed"


def causality(K: KundtMetric, C: Coframe, cand: KillingCandidate, samples, tol: float = 1e-10,
              constants=None, workers=None) -> CausalityReport:
    pts = _points_array(samples)
    comps = build_components(K, C, cand)
    m2, m1, m0 = magnitude_orders(K, C, cand)
    vec = vector_field(K, C, comps)
    g = K.coordinate_metric()
    N = K.dim
    z3sq = comps.zeta3 ** 2
    z12 = 2 * comps.zeta1 * comps.zeta2
    vals = ec.evaluate_many([m2, m1, m0, z3sq, z12] + list(vec), K.names, pts, constants, workers)
    m2v, m1v, m0v, z3v, z12v = vals[:5]
    mag = z3v - z12v
    mag_size = np.abs(z3v) + np.abs(z12v)
    xi = vals[5:].T
    gv = OracleJets(g, N, pts, constants, workers).g
    pieces = np.einsum("pa,pab,pb->pab", xi, gv, xi)
    orc = pieces.sum(axis=(1, 2))
    orc_size = np.abs(pieces).sum(axis=(1, 2))
    conds = {
        "m2_nonpositive": bool((m2v <= tol * (1 + np.abs(m2v))).all()),
        "m1_zero": bool((np.abs(m1v) <= tol * (1 + np.abs(m1v).max())).all()),
        "m0_nonpositive": bool((m0v <= tol * (1 + np.abs(m0v))).all()),
    }
    return CausalityReport(
        classification=_classify_values(mag, tol, mag_size),
        m2_max=float(m2v.max()), m1_max=float(np.abs(m1v).max()), m0_max=float(m0v.max()),
        magnitude_min=float(mag.min()), magnitude_max=float(mag.max()),
        oracle_classification=_classify_values(orc, tol, orc_size),
        oracle_min=float(orc.min()), oracle_max=float(orc.max()),
        abs_mismatch=float(np.abs(np.abs(orc) - np.abs(mag)).max()),
        conditions=conds,
    )


# ---------------------------------------------------------------------------
# covariantly constant vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CCNVReport:
    """Lemma conditions, antisymmetric-part residuals and the oracle check.

    ``lemma`` holds W1_3 zeta1 - 2 D3 zeta1, W1_n and A_nm (each should vanish).

    ``covariantly_constant`` is the frame verdict: lemma and (azeta)
    residuals below tolerance and the Killing equations satisfied.
    ``oracle_nabla_max`` is max |nabla_b zeta_a| from the coordinate oracle,
    each entry divided by 1 + |d_b zeta_a| + sum_c |Gamma^c_ab zeta_c|; it is an
    independent test of the same statement.
    """

    lemma: dict
    azeta: dict
    killing_passes: bool
    oracle_nabla_max: float
    oracle_antisym_max: float
    tol: float

    @property
    def lemma_passes(self) -> bool:
        return all(v < self.tol for v in self.lemma.values())

    @property
    def covariantly_constant(self) -> bool:
        return self.lemma_passes and all(v < self.tol for v in self.azeta.values()) and self.killing_passes

    @property
    def oracle_covariantly_constant(self) -> bool:
        return self.oracle_nabla_max < self.tol


def ccnv_residuals(K: KundtMetric, C: Coframe, cand: KillingCandidate, samples, tol: float = 1e-9,
                   constants=None, workers=None) -> CCNVReport:
    pts = _points_array(samples)
    n = K.dim - 2
    comps = build_components(K, C, cand)
    z1, z2, z3 = comps.zeta1, comps.zeta2, comps.zeta3
    Dk = lambda idx, f: frame_derivative(K, C, idx, f)  # noqa: E731
    T = connection_table(K, C)
    W1 = frame_W1(K, C)
    lemma_terms = {}
    if z1 != 0:
        lemma_terms["W1_3"] = (W1[0] * z1, -2 * Dk(3, z1))
        for j in range(1, n):
            lemma_terms[f"W1_{j + 3}"] = (W1[j],)
            for k in range(j + 1, n):
                lemma_terms[f"A_{j + 3}_{k + 3}"] = (T.A[j][k],)
    az = {
        "azeta12": (Dk(2, z1), -Dk(1, z2), -T.G212 * z1),
        "azeta23": (Dk(3, z2), -Dk(2, z3), T.G2i2[0] * z1),
    }
    for j in range(1, n):
        az[f"azeta2n[{j + 3}]"] = (Dk(3 + j, z2), T.G2i2[j] * z1)
        az[f"azeta3n[{j + 3}]"] = (Dk(3 + j, z3), -T.A[0][j] * z1)
    eqs = [_split_equation(Equation(k, t)) for k, t in list(lemma_terms.items()) + list(az.items())]
    vals = _eval_terms(eqs, K.names, pts, constants, workers)
    lemma = {k: float(normalized_residual(vals[k]).max()) for k in lemma_terms}
    azeta = {k: float(normalized_residual(vals[k]).max()) for k in az}
    kres = killing_residuals(K, C, cand, pts, tol, oracle_samples=0, constants=constants,
                             workers=workers)
    nab, anti = _oracle_nabla(K, C, comps, pts, constants, workers)
    return CCNVReport(lemma, azeta, kres.passes, nab, anti, tol)


def _oracle_nabla(K, C, comps, pts, constants, workers):
    """Scaled max of |nabla_b zeta_a| and of its antisymmetric part."""
    N = K.dim
    g = K.coordinate_metric()
    vec = vector_field(K, C, comps)
    low = [sp.Add(*[g[a, b] * vec[b] for b in range(N)]) for a in range(N)]
    X = ec.coordinates(N)
    dlow = [sp.diff(low[a], X[b]) for a in range(N) for b in range(N)]
    vals = ec.evaluate_many(low + dlow, K.names, pts, constants, workers)
    z = vals[:N].T
    dz = vals[N:].reshape(N, N, -1).transpose(2, 0, 1)  # (P, a, b) = d_b zeta_a
    jets = OracleJets(g, N, pts, constants, workers)
    nab = dz - np.einsum("pcab,pc->pab", jets.Gamma, z)
    scale = 1.0 + np.abs(dz) + np.einsum("pcab,pc->pab", np.abs(jets.Gamma), np.abs(z))
    nmax = float((np.abs(nab) / scale).max())
    anti = 0.5 * (nab - np.swapaxes(nab, 1, 2))
    amax = float((np.abs(anti) / (0.5 * (scale + np.swapaxes(scale, 1, 2)))).max())
    return nmax, amax
