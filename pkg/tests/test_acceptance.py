"""Acceptance criteria 1 to 9, run on N = 4 and N = 5 with 100 samples and seed 42.

Each test prints one ``criterion k: PASS|FAIL`` line; the lines are also
collected and repeated in the pytest terminal summary. Run this file
directly for the lines alone.
"""

from __future__ import annotations

import sys
from functools import lru_cache

import numpy as np
import sympy as sp

from kundtcsi import exprcore as ec
from kundtcsi import families as fam
from kundtcsi.curvature import compare_riemann, csi0_check, riemann_components
from kundtcsi.geometry import KundtMetric, Point, UReparam, VShift, apply_transform, coframe_for, transform_point
from kundtcsi.killing import causality, ccnv_residuals, killing_residuals

from exprgen import random_bindings, random_expression, relative_gap

DIMS = (4, 5)
SAMPLES = 100
SEED = 42
DRAWS = 20
RESULTS: list = []


def report(k: int, title: str, failures: list, checked: int, extra: str = "") -> bool:
    ok = not failures
    status = "PASS" if ok else "FAIL"
    line = f"criterion {k} ({title}): {status}; {checked - len(failures)}/{checked} checks hold"
    if extra:
        line += f"; {extra}"
    if failures:
        shown = "; ".join(failures[:4])
        more = f" (+{len(failures) - 4} more)" if len(failures) > 4 else ""
        line += f"; failing: {shown}{more}"
    RESULTS.append(line)
    print(line)
    return ok


def tag(dim, label, origin, spec=None):
    t = f"N={dim} {label} {origin}"
    if spec is not None and label.startswith("2-"):
        t += " sigma={sigma} c1={c1} c2={c2}".format(**spec.params)
    return t


@lru_cache(maxsize=None)
def pool(dim: int) -> tuple:
    """Default instance plus DRAWS seeded random draws for every label."""
    out = []
    for k, label in enumerate(fam.CASE_LABELS):
        out.append((label, "default", fam.default_family(label, dim)))
        rng = np.random.default_rng([SEED, dim, k])
        for d in range(DRAWS):
            out.append((label, f"draw {d}", fam.random_family(label, rng, dim)))
    return tuple(out)


def everything():
    for dim in DIMS:
        for label, origin, spec in pool(dim):
            yield dim, label, origin, spec


@lru_cache(maxsize=None)
def samples(spec) -> np.ndarray:
    return spec.samples(SAMPLES, seed=SEED)


# ---------------------------------------------------------------------------

def test_criterion_1_oracle_curvature():
    failures, checked, signs = [], 0, set()
    for dim, label, origin, spec in everything():
        checked += 1
        cmp = compare_riemann(spec.metric, spec.coframe, samples(spec)[:50], rtol=1e-8)
        signs.add(cmp.sign)
        if not cmp.passes:
            failures.append(f"{tag(dim, label, origin, spec)} rel={cmp.max_relative:.2e}")
    sign = ",".join(f"{s:+d}" for s in sorted(signs))
    assert report(1, "oracle curvature", failures, checked, f"global sign {sign}")


def test_criterion_2_killing():
    failures, checked = [], 0
    for dim, label, origin, spec in everything():
        checked += 1
        rep = killing_residuals(spec.metric, spec.coframe, spec.candidate, samples(spec),
                                tol=1e-9, oracle_samples=SAMPLES)
        if not (rep.max_residual < 1e-9 and rep.oracle_max < 1e-9):
            failures.append(f"{tag(dim, label, origin, spec)} frame={rep.max_residual:.1e} "
                            f"oracle={rep.oracle_max:.1e}")
    assert report(2, "Killing verification", failures, checked)


def _mutants(K: KundtMetric):
    v, x3 = ec.V, K.xcoords[0]
    W = list(K.W)
    W[0] = W[0] + v ** 2 * x3
    yield "Wcsi1", KundtMetric(K.dim, K.sigma, K.H, tuple(W), K.gT)
    yield "Wcsi2", KundtMetric(K.dim, K.sigma, K.H + v ** 3, K.W, K.gT)


def test_criterion_3_csi0():
    failures, checked = [], 0
    for dim, label, origin, spec in everything():
        checked += 1
        rep = csi0_check(spec.metric, spec.coframe, samples(spec), tol=1e-9)
        if not rep.passes:
            failures.append(f"{tag(dim, label, origin, spec)} fails {','.join(rep.failed())}")
        if origin == "default":
            for cond, mutant in _mutants(spec.metric):
                checked += 1
                mrep = csi0_check(mutant, spec.coframe, samples(spec), tol=1e-9)
                if cond not in mrep.failed():
                    failures.append(f"N={dim} {label} mutation for {cond} not detected")
    assert report(3, "CSI0 verification", failures, checked)


def test_criterion_4_ode_witnesses():
    failures, checked = [], 0
    rng = np.random.default_rng(SEED)
    xs = np.linspace(-1.5, 1.5, SAMPLES)
    for sigma in (-1, 0, 1):
        for _ in range(10):
            c1, c2 = rng.uniform(-2, 2, 2)
            y = fam.y_function(sigma, c1, c2)
            r = ec.evaluate(fam.verify_ode_zeta1(sigma, y), {"x3": xs})
            checked += 1
            if np.max(np.abs(r)) >= 1e-10:
                failures.append(f"ODE sigma={sigma} c1={c1:.3f} c2={c2:.3f} res={np.max(np.abs(r)):.1e}")
    for dim, label, origin, spec in everything():
        if not label.startswith("2-"):
            continue
        checked += 1
        expr = fam.sigma_star_identity(spec.metric, spec.coframe, spec.candidate.zeta1)
        vals = ec.evaluate_many([expr], spec.metric.names, samples(spec))[0]
        if np.max(np.abs(vals)) >= 1e-10:
            failures.append(f"sigma* identity {tag(dim, label, origin, spec)} res={np.max(np.abs(vals)):.1e}")
    assert report(4, "ODE witnesses", failures, checked)


def _zero_zeta20_121b(dim):
    return fam.case_1_2_1b(0, dim=dim)


def test_criterion_5_causality():
    failures, checked = [], 0
    expected = {"2-null": "null", "2-timelike": "timelike"}
    cases = [(d, lab, o, s) for d, lab, o, s in everything() if lab in ("2-null", "2-timelike", "1.2.1b")]
    cases += [(d, "1.2.1b", "zeta20=0", _zero_zeta20_121b(d)) for d in DIMS]
    for dim, label, origin, spec in cases:
        if label == "1.2.1b":
            z20 = ec.evaluate_many([spec.candidate.zeta20], spec.metric.names, samples(spec))[0]
            want = "null" if np.all(z20 == 0) else "timelike" if np.all(z20 > 0) else None
            if want is None:
                continue
        else:
            want = expected[label]
        if label == "2-timelike":
            p = spec.params
            ineq = fam.timelike_inequality(p["sigma"], p["c1"], p["c2"], p["c3"])
            q = ec.evaluate_many([ineq], spec.metric.names, samples(spec))[0]
            checked += 1
            if not np.all(q < 0):
                failures.append(f"{tag(dim, label, origin, spec)} timelike inequality violated")
        checked += 1
        rep = causality(spec.metric, spec.coframe, spec.candidate, samples(spec))
        if rep.classification != want:
            failures.append(f"{tag(dim, label, origin, spec)} gives {rep.classification} "
                            f"(metric g(xi,xi): {rep.oracle_classification})")
    assert report(5, "causality table", failures, checked)


def test_criterion_6_ccnv():
    failures, checked = [], 0
    want = {"1.1.1": True, "1.1.2": False, "1.2.1a": False, "1.2.2b": False,
            "2-null": False, "2-timelike": False}
    cases = [(d, lab, o, s) for d, lab, o, s in everything() if lab in want]
    for dim in DIMS:
        rng = np.random.default_rng([SEED, dim, 99])
        for k in range(5):
            zeta3 = sp.Rational(str(round(float(rng.uniform(0.5, 1.5)), 3)))
            zeta20 = zeta3 ** 2 / 2 + sp.Rational(str(round(float(rng.uniform(0, 1)), 3)))
            spec = fam.case_1_2_2a_const(zeta3, zeta20, dim=dim)
            cases.append((dim, "1.2.2a", f"degenerate {k}", spec))
    for dim, label, origin, spec in cases:
        checked += 1
        expect = True if label == "1.2.2a" else want[label]
        rep = ccnv_residuals(spec.metric, spec.coframe, spec.candidate, samples(spec)[:30])
        if rep.covariantly_constant != expect or rep.oracle_covariantly_constant != expect:
            failures.append(f"{tag(dim, label, origin, spec)} frame={rep.covariantly_constant} "
                            f"oracle={rep.oracle_covariantly_constant}")
    assert report(6, "CCNV conclusions", failures, checked)


def test_criterion_7_transform_invariance():
    failures, checked = [], 0
    for dim in DIMS:
        rng = np.random.default_rng([SEED, dim, 7])
        xs = ec.coordinates(dim)[2:]
        for label in fam.CASE_LABELS:
            spec = fam.default_family(label, dim)
            K = spec.metric
            a, b, c = (float(t) for t in rng.uniform(-1, 1, 3))
            h = sp.Float(a) * ec.U * xs[0] + sp.Float(b) * sp.sin(xs[-1]) + sp.Float(c) * ec.U ** 2
            for name, T in (("type2 h", VShift(h)), ("type3 g=2u", UReparam(2 * ec.U))):
                checked += 1
                K2 = apply_transform(K, T)
                R_old = riemann_components(K, spec.coframe).R1212
                R_new = riemann_components(K2, coframe_for(K2)).R1212
                pts = samples(spec)
                old = ec.evaluate_many([R_old], K.names, pts)[0]
                mapped = np.array([transform_point(K, T, Point.from_array(r)).as_array() for r in pts])
                new = ec.evaluate_many([R_new], K2.names, mapped)[0]
                dev = np.max(np.abs(new - old) / np.maximum(1.0, np.abs(old)))
                if not dev < 1e-8:
                    failures.append(f"N={dim} {label} {name} rel={dev:.1e}")
    assert report(7, "transform invariance", failures, checked)


def test_criterion_8_classifier():
    failures, checked = [], 0
    for dim, label, origin, spec in everything():
        if origin == "default":
            continue
        checked += 1
        rep = fam.classify(spec.metric, spec.coframe, spec.candidate, samples(spec))
        if rep.label != label:
            failures.append(f"{tag(dim, label, origin, spec)} classified {rep.label}")
    assert report(8, "classifier round-trip", failures, checked)


def test_criterion_9_gradients():
    failures = []
    rng = np.random.default_rng(SEED)
    for k in range(200):
        src = random_expression(rng)
        e = ec.parse_expr(src, ["x3", "c1", "u"])
        b = random_bindings(rng)
        exact = ec.evaluate(ec.differentiate(e, "x3"), b)
        approx = ec.finite_difference(e, "x3", b, h=1e-5)
        if not relative_gap(exact, approx) < 1e-5:
            failures.append(f"pair {k}: {src}")
    assert report(9, "gradient sanity", failures, 200)


if __name__ == "__main__":
    code = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                code = 1
    sys.exit(code)
