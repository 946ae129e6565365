"""Command line entry point: ``kundtcsi check | generate | oracle``.

Spec files are INI documents::

    [metric]
    dim = 4
    sigma = 0
    H1 = 0
    H0 = x3^2
    W1_3 = 0
    W0_3 = u*x4

    [transverse]          ; optional, defaults to the identity
    g_3_3 = 1

    [candidate]           ; optional
    zeta1 = 0
    zeta30 = 0
    zeta20 = 1

    [sampling]            ; optional
    count = 100
    seed = 42
    range.x3 = 0.5, 3.5
    exclude.x3 = -0.1, 0.1

    [tolerance]           ; optional
    csi = 1e-9
    killing = 1e-9

Missing W1_e, W0_e entries are zero. Instead of the coefficients, ``[metric]``
may give the full functions ``H`` and ``W_3, W_4, ...``, which may depend on
v. Reports are a human-readable block followed by ``key = value`` lines between ``--- machine ---`` markers.
Exit codes: 0 all checks pass, 1 some check fails, 2 input error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import sympy as sp

from . import __version__
from . import exprcore as ec
from .curvature import SingularMetricError, compare_riemann, csi0_check
from .families import CASE_LABELS, FamilyError, FamilySpec, choose_c3, classify, random_family
from . import families as fam
from .geometry import Coframe, Domain, GeometryError, KundtMetric, Point, coframe_for
from .killing import (
    KillingCandidate,
    build_components,
    causality,
    ccnv_residuals,
    killing_residuals,
    lie_derivative_arrays,
    vector_field,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class SpecError(ValueError):
    """Invalid spec file; the message names the section and key."""


@dataclass
class SpecFile:
    metric: KundtMetric
    candidate: KillingCandidate | None
    domain: Domain
    count: int
    seed: int
    tol_csi: float
    tol_killing: float
    digest: str
    label: str | None = None


# ---------------------------------------------------------------------------
# reading and writing spec files
# ---------------------------------------------------------------------------

def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    return cp


def _expr(cp, section, key, allowed, default="0"):
    src = cp.get(section, key, fallback=default)
    try:
        return ec.parse_expr(src, allowed_symbols=allowed)
    except ec.ExprSyntaxError as exc:
        raise SpecError(f"[{section}] {key}: column {exc.offset + 1}: {exc}") from None
    except ec.ExprError as exc:
        raise SpecError(f"[{section}] {key}: {exc}") from None


def _pair(cp, section, key):
    raw = cp.get(section, key)
    try:
        lo, hi = (float(t) for t in raw.split(","))
    except ValueError:
        raise SpecError(f"[{section}] {key}: expected 'low, high', got {raw!r}") from None
    if not lo < hi:
        raise SpecError(f"[{section}] {key}: empty interval {raw!r}")
    return lo, hi


def parse_spec(text: str) -> SpecFile:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"malformed spec: {exc}") from None
    if not cp.has_section("metric"):
        raise SpecError("missing [metric] section")
    try:
        dim = cp.getint("metric", "dim")
    except (configparser.Error, ValueError):
        raise SpecError("[metric] dim: expected an integer >= 4") from None
    if dim < 4:
        raise SpecError("[metric] dim: expected an integer >= 4")
    names = ec.coordinate_names(dim)
    xs = names[2:]
    coeff_keys = {"sigma", "H1", "H0"} | {f"W1_{x[1:]}" for x in xs} | {f"W0_{x[1:]}" for x in xs}
    full_keys = {"H"} | {f"W_{x[1:]}" for x in xs}
    present = set(cp.options("metric")) - {"dim"}
    for key in present:
        if key not in coeff_keys | full_keys:
            raise SpecError(f"[metric] {key}: unknown key")
    full = bool(present & full_keys)
    if full and present & (coeff_keys - {"sigma"}):
        raise SpecError("[metric] give either H, W_e or the coefficients H1, H0, W1_e, W0_e, not both")
    no_v = [n for n in names if n != "v"]
    sigma = _expr(cp, "metric", "sigma", [])
    if full:
        H = _expr(cp, "metric", "H", names)
        W = [_expr(cp, "metric", f"W_{x[1:]}", names) for x in xs]
    else:
        H1 = _expr(cp, "metric", "H1", no_v)
        H0 = _expr(cp, "metric", "H0", no_v)
        W1 = [_expr(cp, "metric", f"W1_{x[1:]}", no_v) for x in xs]
        W0 = [_expr(cp, "metric", f"W0_{x[1:]}", no_v) for x in xs]
    gT = None
    if cp.has_section("transverse"):
        n = dim - 2
        g = sp.eye(n)
        for key in cp.options("transverse"):
            try:
                _, a, b = key.split("_")
                i, j = xs.index(f"x{a}"), xs.index(f"x{b}")
            except ValueError:
                raise SpecError(f"[transverse] {key}: expected g_<e>_<f> with e, f in 3..{dim}") from None
            g[i, j] = g[j, i] = _expr(cp, "transverse", key, xs)
        gT = g
    try:
        if full:
            sig = sigma if cp.has_option("metric", "sigma") else None
            K = KundtMetric.from_functions(dim, H, W, gT, sig)
        else:
            K = KundtMetric.from_coefficients(dim, sigma, W1, W0, H1, H0, gT)
    except GeometryError as exc:
        raise SpecError(f"[metric] {exc}") from None
    cand = None
    if cp.has_section("candidate"):
        try:
            cand = KillingCandidate(_expr(cp, "candidate", "zeta1", no_v),
                                    _expr(cp, "candidate", "zeta30", no_v),
                                    _expr(cp, "candidate", "zeta20", no_v))
        except ValueError as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(f"[candidate] {exc}") from None
    ranges, excludes = [], []
    count, seed = 100, 42
    if cp.has_section("sampling"):
        for key in cp.options("sampling"):
            if key == "count":
                count = cp.getint("sampling", key)
            elif key == "seed":
                seed = cp.getint("sampling", key)
            elif key.startswith("range.") and key[6:] in names:
                ranges.append((key[6:], *_pair(cp, "sampling", key)))
            elif key.startswith("exclude.") and key[8:].split(".")[0] in names:
                excludes.append((key[8:].split(".")[0], *_pair(cp, "sampling", key)))
            else:
                raise SpecError(f"[sampling] {key}: unknown key")
    tol_csi = tol_k = 1e-9
    if cp.has_section("tolerance"):
        tol_csi = cp.getfloat("tolerance", "csi", fallback=tol_csi)
        tol_k = cp.getfloat("tolerance", "killing", fallback=tol_k)
    label = cp.get("family", "label", fallback=None) if cp.has_section("family") else None
    digest = hashlib.sha256(text.encode()).hexdigest()
    return SpecFile(K, cand, Domain(dim, tuple(ranges), tuple(excludes)), count, seed,
                    tol_csi, tol_k, digest, label)


def load_spec(path) -> SpecFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_spec(text)


def _s(e) -> str:
    return ec.to_string(ec.as_expr(e))


def render_spec(K: KundtMetric, cand: KillingCandidate | None = None, domain: Domain | None = None,
                count: int = 100, seed: int = 42, label: str | None = None, params: dict | None = None) -> str:
    lines = []
    if label:
        lines += ["[family]", f"label = {label}"]
        for k, v in (params or {}).items():
            if isinstance(v, (tuple, list)):
                v = "; ".join(_s(x) for x in v)
            elif isinstance(v, sp.Basic):
                v = _s(v)
            lines.append(f"{k} = {v}")
        lines.append("")
    lines += ["[metric]", f"dim = {K.dim}", f"sigma = {_s(K.sigma)}",
              f"H1 = {_s(K.H1)}", f"H0 = {_s(K.H0)}"]
    xs = K.names[2:]
    for name, vals in (("W1", K.W1), ("W0", K.W0)):
        for x, w in zip(xs, vals):
            if w != 0:
                lines.append(f"{name}_{x[1:]} = {_s(w)}")
    if K.gT != sp.eye(K.dim - 2):
        lines += ["", "[transverse]"]
        for i in range(K.dim - 2):
            for j in range(i, K.dim - 2):
                lines.append(f"g_{xs[i][1:]}_{xs[j][1:]} = {_s(K.gT[i, j])}")
    if cand is not None:
        lines += ["", "[candidate]", f"zeta1 = {_s(cand.zeta1)}", f"zeta30 = {_s(cand.zeta30)}",
                  f"zeta20 = {_s(cand.zeta20)}"]
    lines += ["", "[sampling]", f"count = {count}", f"seed = {seed}"]
    if domain is not None:
        for name, lo, hi in domain.ranges:
            lines.append(f"range.{name} = {lo!r}, {hi!r}")
        for k, (name, lo, hi) in enumerate(domain.excludes):
            lines.append(f"exclude.{name}.{k} = {lo!r}, {hi!r}")
    return "\n".join(lines) + "\n"


def render_family(F: FamilySpec, count: int = 100, seed: int = 42) -> str:
    return render_spec(F.metric, F.candidate, F.domain, count, seed, F.label, F.params)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6e}"
    return str(x)


class Report:
    def __init__(self, title: str):
        self.title = title
        self.human: list = []
        self.machine: list = []

    def line(self, text: str = ""):
        self.human.append(text)

    def kv(self, key: str, value):
        self.machine.append(f"{key} = {_num(value)}")

    def render(self) -> str:
        out = [self.title, "=" * len(self.title), *self.human, "", "--- machine ---", *self.machine,
               "--- end ---"]
        return "\n".join(out) + "\n"


def run_check(spec: SpecFile, tol: float | None = None, samples: int | None = None,
              seed: int | None = None) -> tuple:
    """Run every check on a parsed spec; returns (report, all_pass)."""
    K = spec.metric
    C = coframe_for(K)
    n = samples or spec.count
    seed = spec.seed if seed is None else seed
    pts = spec.domain.sample(n, seed)
    tol_c = tol or spec.tol_csi
    tol_k = tol or spec.tol_killing
    rep = Report(f"kundtcsi {__version__} check")
    rep.kv("version", __version__)
    rep.kv("input.sha256", spec.digest)
    rep.kv("samples", n)
    rep.kv("seed", seed)
    rep.line(f"input sha256 {spec.digest}")
    rep.line(f"dimension {K.dim}, {n} samples, seed {seed}")

    csi = csi0_check(K, C, pts, tol_c)
    rep.line("")
    rep.line(f"CSI0: {'pass' if csi.passes else 'FAIL'}")
    for key, val in csi.residuals.items():
        rep.line(f"  {key:<11s} {val:.3e}{'' if val < tol_c else '  <-- fails'}")
        rep.kv(f"csi.{key}", val)
    rep.kv("csi.pass", csi.passes)
    ok = csi.passes
    if spec.candidate is None:
        rep.line("")
        rep.line("no candidate: Killing, causality and CCNV checks skipped")
        rep.kv("overall.pass", ok)
        return rep, ok

    cand = spec.candidate
    kres = killing_residuals(K, C, cand, pts, tol_k)
    rep.line("")
    rep.line(f"Killing equations: {'pass' if kres.passes else 'FAIL'}"
             f" (max normalised residual {kres.max_residual:.3e}, oracle {kres.oracle_max:.3e})")
    for key in kres.normalized:
        flag = "" if key not in kres.normative else ("" if kres.normalized[key] < tol_k else "  <-- fails")
        extra = "" if key in kres.normative else "  (informational)"
        rep.line(f"  {key:<20s} {kres.normalized[key]:.3e}{flag}{extra}")
        rep.kv(f"killing.{key}", kres.normalized[key])
    rep.kv("killing.max", kres.max_residual)
    rep.kv("killing.oracle_max", kres.oracle_max)
    rep.kv("killing.pass", kres.passes and kres.oracle_passes)
    ok = ok and kres.passes and kres.oracle_passes

    caus = causality(K, C, cand, pts)
    rep.line("")
    rep.line(f"causality: {caus.classification} (metric g(xi,xi): {caus.oracle_classification})")
    rep.kv("causality.class", caus.classification)
    rep.kv("causality.oracle_class", caus.oracle_classification)
    rep.kv("causality.conventions_agree", caus.conventions_agree)
    for k, v in caus.conditions.items():
        rep.kv(f"causality.{k}", v)

    cc = ccnv_residuals(K, C, cand, pts[: min(len(pts), 30)], tol_k)
    rep.line(f"covariantly constant: {'yes' if cc.covariantly_constant else 'no'}"
             f" (oracle {'yes' if cc.oracle_covariantly_constant else 'no'})")
    rep.kv("ccnv.verdict", cc.covariantly_constant)
    rep.kv("ccnv.oracle", cc.oracle_covariantly_constant)
    for k, v in {**{f"lemma.{a}": b for a, b in cc.lemma.items()}, **cc.azeta}.items():
        rep.kv(f"ccnv.{k}", v)
    rep.kv("ccnv.oracle_nabla_max", cc.oracle_nabla_max)

    cr = classify(K, C, cand, pts, tol_k)
    rep.line(f"case: {cr.label}  [{cr.path()}]")
    rep.kv("case.label", cr.label)
    for k, v in cr.residuals.items():
        rep.kv(f"case.{k}", v)
    if spec.label is not None:
        rep.kv("case.declared", spec.label)
        rep.line(f"declared family: {spec.label}")
    rep.kv("overall.pass", ok)
    return rep, ok


def run_oracle(spec: SpecFile, points: int = 20, seed: int | None = None, at=None) -> tuple:
    K = spec.metric
    C = coframe_for(K)
    if at is not None:
        pts = np.atleast_2d(np.asarray(at, dtype=float))
        if pts.shape[1] != K.dim:
            raise SpecError(f"--at needs {K.dim} coordinates")
    else:
        pts = spec.domain.sample(points, spec.seed if seed is None else seed)
    rep = Report(f"kundtcsi {__version__} oracle")
    rep.kv("version", __version__)
    rep.kv("input.sha256", spec.digest)
    rep.kv("points", len(pts))
    cmp = compare_riemann(K, C, pts)
    rep.line(f"Riemann frame formulas vs coordinate oracle at {len(pts)} points")
    rep.line(f"  global sign {cmp.sign:+d}, max deviation {cmp.max_deviation:.3e}, "
             f"max relative {cmp.max_relative:.3e}")
    for fam_name, dev in cmp.per_family.items():
        rep.line(f"  {fam_name:<8s} {dev:.3e}")
        rep.kv(f"riemann.{fam_name}", dev)
    rep.kv("riemann.sign", cmp.sign)
    rep.kv("riemann.max_relative", cmp.max_relative)
    rep.kv("riemann.pass", cmp.passes)
    ok = cmp.passes
    if spec.candidate is not None:
        comps = build_components(K, C, spec.candidate)
        L, _, S = lie_derivative_arrays(K, vector_field(K, C, comps), pts, with_scale=True)
        lmax = float((np.abs(L) / (1.0 + S)).max())
        rep.line(f"Lie derivative of the metric along the candidate: max {lmax:.3e}")
        rep.kv("lie.max", lmax)
        rep.kv("lie.pass", lmax < spec.tol_killing)
        ok = ok and lmax < spec.tol_killing
    rep.kv("overall.pass", ok)
    return rep, ok


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def _exprs(raw: str | None):
    if raw is None:
        return None
    return [ec.parse_expr(t) for t in raw.split(";")]


def _one(raw: str | None, default):
    return default if raw is None else ec.parse_expr(raw)


def build_family(args) -> FamilySpec:
    label = args.case
    dim = args.dim
    if args.random is not None:
        return random_family(label, args.random, dim)
    sig = args.sigma
    if label == "1.1.1":
        return fam.case_1_1_1(_one(args.H0, 0), _exprs(args.W0), dim=dim)
    if label == "1.1.2":
        return fam.case_1_1_2(_one(args.zeta2, ec.parse_expr("exp(2*x3)")),
                              sigma=-1 if sig is None else sig, dim=dim,
                              H0=_one(args.H0, 0), W0=_exprs(args.W0))
    if label == "1.2.1a":
        return fam.case_1_2_1a(_exprs(args.W1), _exprs(args.W0), 1 if sig is None else sig, dim=dim)
    if label == "1.2.1b":
        return fam.case_1_2_1b(_one(args.zeta20, 0), _exprs(args.W1), _exprs(args.w),
                               0 if sig is None else sig, dim=dim)
    if label == "1.2.2a":
        return fam.case_1_2_2a_const(_one(args.zeta3, 1), _one(args.zeta20, 1), _exprs(args.W1),
                                     _exprs(args.W0n), 0 if sig is None else sig, dim=dim)
    if label == "1.2.2b":
        return fam.case_1_2_2b(_one(args.zeta20, 0), _exprs(args.W1), _exprs(args.W0n),
                               1 if sig is None else sig, dim=dim)
    sig = 0 if sig is None else int(sig)
    c1 = 1.0 if args.c1 is None else args.c1
    c2 = 0.0 if args.c2 is None else args.c2
    if label == "2-null":
        return fam.case_2_null(sig, c1, c2, args.branch, dim=dim, form=args.form)
    if label == "2-timelike":
        c3 = args.c3
        if c3 is None:
            if c1 == 0 and c2 == 0:
                raise FamilyError("(c1, c2) must not both vanish")
            c3 = choose_c3(sig, c1, c2, at=float(np.mean(fam.sampling_window(
                fam.natural_interval(sig, c1, c2)))))
        return fam.case_2_timelike(sig, c1, c2, c3, _one(args.zeta20, None), dim=dim)
    raise FamilyError(f"unknown case {label!r}")


def _branch(raw: str) -> int:
    if raw in ("+", "+1", "1"):
        return 1
    if raw in ("-", "-1"):
        return -1
    raise argparse.ArgumentTypeError("branch must be + or -")


def _sigma(raw: str) -> float:
    try:
        return float(sp.Rational(raw)) if "/" in raw else float(raw)
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(f"invalid sigma {raw!r}") from None


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kundtcsi", description="Kundt CSI curvature and Killing checks")
    p.add_argument("--version", action="version", version=f"kundtcsi {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="run CSI0, Killing, causality, CCNV and case checks")
    c.add_argument("spec")
    c.add_argument("--tol", type=float)
    c.add_argument("--samples", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--out")

    g = sub.add_parser("generate", help="write a spec file for a closed-form family")
    g.add_argument("case", choices=CASE_LABELS)
    g.add_argument("--sigma", type=_sigma)
    g.add_argument("--c1", type=float)
    g.add_argument("--c2", type=float)
    g.add_argument("--c3", type=float)
    g.add_argument("--branch", type=_branch, default=1)
    g.add_argument("--form", choices=("printed", "literal"), default="printed")
    g.add_argument("--dim", type=int, default=4)
    for name in ("H0", "zeta2", "zeta20", "zeta3"):
        g.add_argument(f"--{name}", help="expression")
    for name in ("W0", "W1", "w", "W0n"):
        g.add_argument(f"--{name}", help="';'-separated expressions")
    g.add_argument("--random", type=int, metavar="SEED", help="draw random valid parameters")
    g.add_argument("--samples", type=int, default=100)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--out")

    o = sub.add_parser("oracle", help="compare frame formulas with the coordinate oracle")
    o.add_argument("spec")
    o.add_argument("--points", type=int, default=20)
    o.add_argument("--seed", type=int)
    o.add_argument("--at", help="comma-separated coordinates of a single point")
    o.add_argument("--out")
    return p


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        if args.command == "check":
            rep, ok = run_check(load_spec(args.spec), args.tol, args.samples, args.seed)
            _emit(rep.render(), args.out)
            return EXIT_OK if ok else EXIT_FAIL
        if args.command == "oracle":
            at = None if args.at is None else [float(t) for t in args.at.split(",")]
            rep, ok = run_oracle(load_spec(args.spec), args.points, args.seed, at)
            _emit(rep.render(), args.out)
            return EXIT_OK if ok else EXIT_FAIL
        F = build_family(args)
        _emit(render_family(F, args.samples, args.seed), args.out)
        return EXIT_OK
    except (SpecError, FamilyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ec.DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ec.ExprError, GeometryError, SingularMetricError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
