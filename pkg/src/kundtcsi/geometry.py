"""Kundt CSI metric data, coframe construction, frame derivatives and transforms.

Coordinates are ``(u, v, x3, ..., xN)``. The line element is

    ds^2 = 2 du (dv + H du + w_e dx^e) + g_ef dx^e dx^f

with H and w_e polynomial in v of the CSI_0 form. Frame indices follow the
coframe ``theta^1 = n = dv + H du + w_e dx^e``, ``theta^2 = l = du`` and
``theta^i = m^i_e dx^e``; the dual frame is

    D1 = d_v,   D2 = d_u - H d_v,   D_i = m_i^e (d_e - w_e d_v).

Transverse frame indices i = 3..N are stored zero-based in Python lists, so
``W1[0]`` is the x3 component.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import sympy as sp

from . import exprcore as ec
from .exprcore import Expr


class GeometryError(ValueError):
    """Invalid geometric input (non positive-definite metric, singular transform, ...)."""


# ---------------------------------------------------------------------------
# points and sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Point:
    u: float
    v: float
    x: tuple

    @classmethod
    def from_array(cls, arr) -> "Point":
        arr = [float(a) for a in arr]
        return cls(arr[0], arr[1], tuple(arr[2:]))

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, *self.x], dtype=float)

    def bindings(self) -> dict:
        names = ec.coordinate_names(len(self.x) + 2)
        return dict(zip(names, self.as_array()))

    def __str__(self) -> str:
        names = ec.coordinate_names(len(self.x) + 2)
        return "(" + ", ".join(f"{n}={c:.6g}" for n, c in zip(names, self.as_array())) + ")"


@dataclass(frozen=True)
class Domain:
    """Axis-aligned sampling box with optional excluded x-intervals.

    ``ranges`` maps coordinate names to ``(low, high)``; unlisted coordinates
    default to ``[-1, 1]``. ``excludes`` lists ``(name, low, high)`` open
    intervals that samples must avoid (poles, sign changes).
    """

    dim: int
    ranges: tuple = ()
    excludes: tuple = ()

    def range_of(self, name: str) -> tuple:
        for n, lo, hi in self.ranges:
            if n == name:
                return (lo, hi)
        return (-1.0, 1.0)

    def with_range(self, name: str, lo: float, hi: float) -> "Domain":
        rest = tuple(r for r in self.ranges if r[0] != name)
        return Domain(self.dim, rest + ((name, float(lo), float(hi)),), self.excludes)

    def sample(self, n: int, seed: int = 42) -> np.ndarray:
        """Uniform samples of shape ``(n, dim)``, rejection-filtered against excludes."""
        rng = np.random.default_rng(seed)
        names = ec.coordinate_names(self.dim)
        out = np.empty((0, self.dim))
        tries = 0
        while out.shape[0] < n:
            tries += 1
            if tries > 100:
                raise GeometryError("sampling box is almost entirely excluded")
            block = np.column_stack([
                rng.uniform(*self.range_of(name), size=2 * n) for name in names
            ])
            keep = np.ones(block.shape[0], dtype=bool)
            for name, lo, hi in self.excludes:
                col = block[:, names.index(name)]
                keep &= ~((col > lo) & (col < hi))
            out = np.vstack([out, block[keep]])
        return out[:n]

    def points(self, n: int, seed: int = 42) -> list:
        return [Point.from_array(row) for row in self.sample(n, seed)]


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------

def _expr(value) -> Expr:
    return ec.as_expr(value)


@dataclass(frozen=True)
class KundtMetric:
    """Kundt metric data.

    ``H`` and ``W`` (coordinate components ``w_e``) are stored in full so that
    deliberately broken metrics (for mutation tests) can be represented; the
    CSI_0 coefficients ``W1``, ``W0``, ``H1``, ``H0`` are recovered as Taylor
    coefficients in v. ``sigma`` is the declared constant of the CSI_0 form.
    """

    dim: int
    sigma: Expr
    H: Expr
    W: tuple
    gT: sp.ImmutableMatrix

    def __post_init__(self):
        if self.dim < 4:
            raise GeometryError("dimension N must be at least 4")
        if len(self.W) != self.dim - 2:
            raise GeometryError(f"expected {self.dim - 2} W components, got {len(self.W)}")
        if self.gT.shape != (self.dim - 2, self.dim - 2):
            raise GeometryError("transverse metric has the wrong shape")
        if self.gT != self.gT.T:
            raise GeometryError("transverse metric is not symmetric")
        if ec.V in self.gT.free_symbols or ec.U in self.gT.free_symbols:
            raise GeometryError("transverse metric must depend on x^e only")

    # -- construction ------------------------------------------------------
    @classmethod
    def from_coefficients(cls, dim: int, sigma, W1: Sequence, W0: Sequence, H1, H0,
                          gT=None) -> "KundtMetric":
        """Assemble H and w_e from the CSI_0 coefficient functions."""
        n = dim - 2
        gT = sp.ImmutableMatrix(sp.eye(n) if gT is None else sp.Matrix(gT).applyfunc(_expr))
        W1 = tuple(_expr(w) for w in W1)
        W0 = tuple(_expr(w) for w in W0)
        sigma = _expr(sigma)
        s_star = 4 * sigma + _contract_inverse(gT, W1, W1)
        H = s_star * ec.V ** 2 / 8 + ec.V * _expr(H1) + _expr(H0)
        W = tuple(w1 * ec.V + w0 for w1, w0 in zip(W1, W0))
        # expanding large closed forms (nested radicals) is slow and gains nothing
        if sp.count_ops(H) < 60 and H.is_polynomial(ec.V):
            H = sp.expand(H)
        return cls(dim, sigma, H, W, gT)

    @classmethod
    def from_functions(cls, dim: int, H, W: Sequence, gT=None, sigma=None) -> "KundtMetric":
        """Wrap full H and w_e; ``sigma`` defaults to H_vv - |W_v|^2/4 at v = 0."""
        n = dim - 2
        gT = sp.ImmutableMatrix(sp.eye(n) if gT is None else sp.Matrix(gT).applyfunc(_expr))
        H = _expr(H)
        W = tuple(_expr(w) for w in W)
        if sigma is None:
            Wv = [sp.diff(w, ec.V).subs(ec.V, 0) for w in W]
            sigma = sp.diff(H, ec.V, 2).subs(ec.V, 0) - _contract_inverse(gT, Wv, Wv) / 4
        return cls(dim, _expr(sigma), H, W, gT)

    # -- coordinates and coefficients ---------------------------------------
    @property
    def coords(self) -> list:
        return ec.coordinates(self.dim)

    @property
    def xcoords(self) -> list:
        return self.coords[2:]

    @property
    def names(self) -> list:
        return ec.coordinate_names(self.dim)

    @property
    def W1(self) -> tuple:
        return tuple(sp.diff(w, ec.V).subs(ec.V, 0) for w in self.W)

    @property
    def W0(self) -> tuple:
        return tuple(w.subs(ec.V, 0) for w in self.W)

    @property
    def H1(self) -> Expr:
        return sp.diff(self.H, ec.V).subs(ec.V, 0)

    @property
    def H0(self) -> Expr:
        return self.H.subs(ec.V, 0)

    @property
    def sigma_star(self) -> Expr:
        """4 sigma + g^ef W1_e W1_f (frame independent)."""
        return 4 * self.sigma + _contract_inverse(self.gT, self.W1, self.W1)

    def coordinate_metric(self) -> sp.ImmutableMatrix:
        """Full N x N metric in coordinates (u, v, x3..xN)."""
        N = self.dim
        g = sp.zeros(N)
        g[0, 0] = 2 * self.H
        g[0, 1] = g[1, 0] = sp.Integer(1)
        for e, w in enumerate(self.W):
            g[0, 2 + e] = g[2 + e, 0] = w
        for e in range(N - 2):
            for f in range(N - 2):
                g[2 + e, 2 + f] = self.gT[e, f]
        return sp.ImmutableMatrix(g)

    def free_constants(self) -> set:
        syms = set(self.H.free_symbols) | set(self.sigma.free_symbols)
        for w in self.W:
            syms |= w.free_symbols
        syms |= self.gT.free_symbols
        return {s.name for s in syms} - set(self.names)


def _contract_inverse(gT, a, b) -> Expr:
    if all(x == 0 for x in a) or all(x == 0 for x in b):
        return sp.Integer(0)
    gi = _inverse(gT)
    n = gT.shape[0]
    return sp.Add(*[gi[e, f] * a[e] * b[f] for e in range(n) for f in range(n)])


def _inverse(M):
    if M.is_diagonal():
        return sp.ImmutableMatrix(sp.diag(*[1 / M[k, k] for k in range(M.shape[0])]))
    return sp.ImmutableMatrix(M.inv())


# ---------------------------------------------------------------------------
# coframe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Coframe:
    """Upper-triangular transverse coframe.

    ``m[i, e]`` is m^i_e (row: frame index, column: coordinate) and
    ``minv[e, i]`` is the inverse m_i^e, so that D_i = minv[e, i] d_e.
    """

    m: sp.ImmutableMatrix
    minv: sp.ImmutableMatrix

    @property
    def n(self) -> int:
        return self.m.shape[0]

    def frame_components(self, covector: Sequence) -> tuple:
        """Frame components X_i = m_i^e X_e of a transverse coordinate covector."""
        return tuple(sp.Add(*[self.minv[e, i] * covector[e] for e in range(self.n)])
                     for i in range(self.n))


def _is_constant(e: Expr, coordinate_names: Sequence[str]) -> bool:
    return not ({s.name for s in sp.sympify(e).free_symbols} & set(coordinate_names))


def build_coframe(gT, dim: int | None = None, check_samples: int = 20, seed: int = 0) -> Coframe:
    """Upper-triangular m with m^T m = gT and constant m^3_3.

    The factor is the transpose of the symbolic Cholesky factor (exact for
    diagonal and triangular-friendly inputs). Positive definiteness is checked
    numerically at ``check_samples`` points of ``[-1, 1]^(N-2)``.
    """
    gT = sp.ImmutableMatrix(sp.Matrix(gT).applyfunc(_expr))
    n = gT.shape[0]
    dim = dim or n + 2
    names = ec.coordinate_names(dim)
    if not _is_constant(gT[0, 0], names):
        raise GeometryError(f"g_33 = {ec.pretty(gT[0, 0])} is not constant")
    if gT != gT.T:
        raise GeometryError("transverse metric is not symmetric")
    if check_samples:
        rng = np.random.default_rng(seed)
        xs = names[2:]
        for _ in range(check_samples):
            b = {name: rng.uniform(-1, 1) for name in xs}
            try:
                G = np.array([[ec.evaluate(gT[i, j], b) for j in range(n)] for i in range(n)])
            except ec.ExprError:
                continue
            if np.min(np.linalg.eigvalsh(G)) <= 0:
                raise GeometryError("transverse metric is not positive definite at "
                                    + ", ".join(f"{k}={v:.4g}" for k, v in b.items()))
    if gT.is_diagonal():
        m = sp.diag(*[sp.sqrt(gT[k, k]) for k in range(n)])
    else:
        try:
            L = gT.cholesky(hermitian=False)
        except ValueError as exc:
            raise GeometryError(f"transverse metric is not positive definite: {exc}") from exc
        m = L.T
    # entries of a positive definite metric are positive, so sqrt(exp(2x)) = exp(x)
    m = sp.ImmutableMatrix(m.applyfunc(lambda e: sp.powsimp(sp.powdenest(e, force=True))))
    minv = sp.ImmutableMatrix(sp.Matrix(m).inv().applyfunc(sp.powsimp)) if not m.is_diagonal() \
        else sp.ImmutableMatrix(sp.diag(*[1 / m[k, k] for k in range(n)]))
    return Coframe(m, minv)


def coframe_for(K: KundtMetric) -> Coframe:
    return build_coframe(K.gT, K.dim)


# ---------------------------------------------------------------------------
# frame derivatives and frame components
# ---------------------------------------------------------------------------

FrameIndex = Union[int, str]


def _index(idx: FrameIndex, dim: int) -> int:
    k = int(idx)
    if not 1 <= k <= dim:
        raise GeometryError(f"frame index {idx} out of range 1..{dim}")
    return k


def frame_derivative(K: KundtMetric, C: Coframe, idx: FrameIndex, f: Expr) -> Expr:
    """Apply D_idx to ``f``; idx is 1, 2 or a transverse index 3..N."""
    k = _index(idx, K.dim)
    f = _expr(f)
    fv = sp.diff(f, ec.V)
    if k == 1:
        return fv
    if k == 2:
        return sp.diff(f, ec.U) - K.H * fv
    i = k - 3
    xs = K.xcoords
    return sp.Add(*[C.minv[e, i] * (sp.diff(f, xs[e]) - K.W[e] * fv) for e in range(K.dim - 2)])


def D(K: KundtMetric, C: Coframe, idx: FrameIndex, f: Expr) -> Expr:
    """Short alias of :func:`frame_derivative`."""
    return frame_derivative(K, C, idx, f)


def frame_W(K: KundtMetric, C: Coframe) -> tuple:
    """Frame components W_i = m_i^e w_e (full, v-dependent)."""
    return C.frame_components(K.W)


def frame_W1(K: KundtMetric, C: Coframe) -> tuple:
    return C.frame_components(K.W1)


def frame_W0(K: KundtMetric, C: Coframe) -> tuple:
    return C.frame_components(K.W0)


def sigma_star(K: KundtMetric, C: Coframe) -> Expr:
    """sigma* = 4 sigma + sum_i (W1_i)^2 with W1_i the frame components."""
    return 4 * K.sigma + sp.Add(*[w ** 2 for w in frame_W1(K, C)])


def frame_to_coordinate(K: KundtMetric, C: Coframe, comps: Sequence) -> tuple:
    """Coordinate components of zeta = zeta_1 n + zeta_2 l + zeta_i m^i (raised).

    Returns the N expressions (xi^u, xi^v, xi^3, ..., xi^N) of
    zeta_1 (d_u - H d_v) + zeta_2 d_v + zeta_i m_i^e (d_e - w_e d_v).
    """
    N = K.dim
    comps = [_expr(c) for c in comps]
    comps = comps + [sp.Integer(0)] * (N - len(comps))
    z1, z2, zs = comps[0], comps[1], comps[2:]
    xi_x = [sp.Add(*[zs[i] * C.minv[e, i] for i in range(N - 2)]) for e in range(N - 2)]
    xi_v = z2 - K.H * z1 - sp.Add(*[K.W[e] * xi_x[e] for e in range(N - 2)])
    return (z1, xi_v, *xi_x)


def frame_vectors(K: KundtMetric, C: Coframe) -> list:
    """Coordinate components of the dual frame (e_1, e_2, e_3, ..., e_N)."""
    N = K.dim
    out = []
    for a in range(N):
        comps = [0] * N
        if a == 0:
            vec = (0, 1) + (0,) * (N - 2)
        elif a == 1:
            vec = (1, -K.H) + (0,) * (N - 2)
        else:
            comps = [0] * N
            comps[a] = 1
            vec = frame_to_coordinate(K, C, [0, 0] + comps[2:])
        out.append(tuple(_expr(c) for c in vec))
    return out


# ---------------------------------------------------------------------------
# Kundt-form preserving transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpatialTransform:
    """x'^e = f^e(x); only affine maps are accepted."""

    f: tuple


@dataclass(frozen=True)
class VShift:
    """v' = v + h(u, x)."""

    h: Expr


@dataclass(frozen=True)
class UReparam:
    """u' = g(u), v' = v / g_u."""

    g: Expr


Transform = Union[SpatialTransform, VShift, UReparam]


def _jacobian_affine(T: SpatialTransform, xs: list):
    f = [_expr(c) for c in T.f]
    if len(f) != len(xs):
        raise GeometryError("spatial transform has the wrong number of components")
    J = sp.Matrix([[sp.diff(fe, x) for x in xs] for fe in f])
    if J.free_symbols & set(xs) or any(sp.diff(fe, ec.U) != 0 or sp.diff(fe, ec.V) != 0 for fe in f):
        raise GeometryError("only affine spatial transforms f(x) = J x + b are supported")
    if J.det() == 0:
        raise GeometryError("spatial transform has a singular Jacobian")
    b = sp.Matrix([fe.subs({x: 0 for x in xs}) for fe in f])
    return J, b


def apply_transform(K: KundtMetric, T: Transform, check_points: Sequence[Point] = ()) -> KundtMetric:
    """Transformed metric in the new coordinates (which reuse the names u, v, x^e).

    The new H', w'_e and g'_ef are expressed as functions of the new
    coordinates, so their v-Taylor coefficients are again the CSI_0
    coefficients in the new chart.
    """
    xs = K.xcoords
    u, v = ec.U, ec.V
    if isinstance(T, VShift):
        h = _expr(T.h)
        if v in h.free_symbols:
            raise GeometryError("h must not depend on v")
        back = {v: v - h}
        H = K.H.subs(back, simultaneous=True) - sp.diff(h, u)
        W = tuple(w.subs(back, simultaneous=True) - sp.diff(h, x) for w, x in zip(K.W, xs))
        return KundtMetric(K.dim, K.sigma, _tidy(H), tuple(_tidy(w) for w in W), K.gT)
    if isinstance(T, UReparam):
        g = _expr(T.g)
        if g.free_symbols - {u} - _constant_symbols(g, K):
            raise GeometryError("g must depend on u only")
        gu = sp.diff(g, u)
        guu = sp.diff(g, u, 2)
        for p in check_points:
            if abs(ec.evaluate(gu, p.bindings())) < 1e-14:
                raise GeometryError(f"g_u vanishes at {p}")
        if gu == 0:
            raise GeometryError("g_u vanishes identically")
        unew = sp.Dummy("unew")
        sols = sp.solve(sp.Eq(g, unew), u)
        if len(sols) != 1:
            raise GeometryError("could not invert g(u) uniquely")
        u_old = sols[0].subs(unew, u)
        gu_old = gu.subs(u, u_old)
        guu_old = guu.subs(u, u_old)
        v_old = v * gu_old
        sub = {u: u_old, v: v_old}
        H_old = K.H.subs(sub, simultaneous=True)
        H = (H_old + v_old * guu_old / gu_old) / gu_old ** 2
        W = tuple(w.subs(sub, simultaneous=True) / gu_old for w in K.W)
        # the v'^2 coefficient of H' equals the old one, so sigma is unchanged
        return KundtMetric(K.dim, K.sigma, _tidy(H), tuple(_tidy(w) for w in W), K.gT)
    if isinstance(T, SpatialTransform):
        J, b = _jacobian_affine(T, xs)
        Jinv = J.inv()
        xvec = sp.Matrix(xs)
        old = Jinv * (xvec - b)
        sub = {x: old[k] for k, x in enumerate(xs)}
        H = K.H.subs(sub, simultaneous=True)
        Wold = [w.subs(sub, simultaneous=True) for w in K.W]
        n = len(xs)
        W = tuple(sp.Add(*[Wold[f] * Jinv[f, e] for f in range(n)]) for e in range(n))
        gold = sp.Matrix(K.gT).subs(sub, simultaneous=True)
        gnew = Jinv.T * gold * Jinv
        return KundtMetric(K.dim, K.sigma, _tidy(H), tuple(_tidy(w) for w in W),
                           sp.ImmutableMatrix(gnew.applyfunc(_tidy)))
    raise TypeError(f"unknown transform {T!r}")


def transform_point(K: KundtMetric, T: Transform, p: Point) -> Point:
    """Image of an old-chart point in the new chart."""
    b = p.bindings()
    arr = p.as_array()
    if isinstance(T, VShift):
        arr[1] = arr[1] + ec.evaluate(_expr(T.h), b)
    elif isinstance(T, UReparam):
        g = _expr(T.g)
        arr[0] = ec.evaluate(g, b)
        arr[1] = arr[1] / ec.evaluate(sp.diff(g, ec.U), b)
    elif isinstance(T, SpatialTransform):
        arr[2:] = [ec.evaluate(_expr(f), b) for f in T.f]
    else:
        raise TypeError(f"unknown transform {T!r}")
    return Point.from_array(arr)


def _constant_symbols(e: Expr, K: KundtMetric) -> set:
    return {s for s in e.free_symbols if s.name not in K.names}


def _tidy(e: Expr) -> Expr:
    e = sp.sympify(e)
    if e.is_polynomial(ec.V):
        return sp.expand(e)
    return e
