"""Closed-form scalar expressions: parsing, printing, differentiation, evaluation.

Expressions are ordinary sympy trees restricted to a small vocabulary:
numbers, symbols, ``+ - * / ^`` and the unary functions in :data:`FUNCTIONS`.
Sympy supplies the immutable tree and the calculus rules; this module owns the
text grammar, the printer and a vectorised evaluator that reports domain
errors against the offending subexpression.
"""

from __future__ import annotations

import math
import re
from typing import Iterable, Mapping, Sequence

import numpy as np
import sympy as sp

Expr = sp.Expr
Bindings = Mapping[str, "float | np.ndarray"]

FUNCTIONS = {
    "exp": sp.exp,
    "ln": sp.log,
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
    "sqrt": sp.sqrt,
    "arctan": sp.atan,
    "arctanh": sp.atanh,
}

_PRINT_NAMES = {
    sp.exp: "exp",
    sp.log: "ln",
    sp.sin: "sin",
    sp.cos: "cos",
    sp.tan: "tan",
    sp.sinh: "sinh",
    sp.cosh: "cosh",
    sp.tanh: "tanh",
    sp.atan: "arctan",
    sp.atanh: "arctanh",
}

_NUMPY_FUNCS = {
    sp.exp: np.exp,
    sp.sin: np.sin,
    sp.cos: np.cos,
    sp.tan: np.tan,
    sp.sinh: np.sinh,
    sp.cosh: np.cosh,
    sp.tanh: np.tanh,
    sp.atan: np.arctan,
}


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, src: str = ""):
        self.offset = offset
        self.src = src
        super().__init__(f"{message} at byte offset {offset}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at byte offset {offset}")


class UnboundSymbolError(ExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"symbol {name!r} is not bound")


class DomainError(ExprError, ArithmeticError):
    """Raised when evaluation leaves the real domain of a subexpression.

    ``index`` is the position of the first failing sample when bindings are
    arrays, ``None`` for scalar evaluation.
    """

    def __init__(self, kind: str, subexpr: Expr, index: int | None = None,
                 bindings: dict | None = None):
        self.kind = kind
        self.subexpr = subexpr
        self.index = index
        self.bindings = bindings or {}
        where = ""
        if self.bindings:
            where = " at " + ", ".join(f"{k}={v:.6g}" for k, v in sorted(self.bindings.items()))
        super().__init__(f"{kind} in {to_string(subexpr)}{where}")


def symbol(name: str) -> sp.Symbol:
    return sp.Symbol(name)


U = symbol("u")
V = symbol("v")


def coordinate_names(dim: int) -> list[str]:
    if dim < 3:
        raise ValueError("dimension must be at least 3")
    return ["u", "v"] + [f"x{k}" for k in range(3, dim + 1)]


def coordinates(dim: int) -> list[sp.Symbol]:
    return [symbol(n) for n in coordinate_names(dim)]


def as_expr(value) -> Expr:
    """Coerce numbers, strings in the grammar, or sympy objects to an Expr."""
    if isinstance(value, sp.Basic):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(value, int):
        return sp.Integer(value)
    if isinstance(value, float):
        if value.is_integer() and abs(value) < 2**53:
            return sp.Integer(int(value))
        return sp.Float(value)
    if isinstance(value, str):
        return parse_expr(value, None)
    raise TypeError(f"cannot convert {type(value).__name__} to an expression")


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[a-zA-Z][a-zA-Z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(src: str):
    pos = 0
    tokens = []
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            bad = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {src[bad]!r}", bad, src)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, allowed: set[str] | None):
        self.src = src
        self.allowed = allowed
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, text, pos = self.take()
        if kind != "op" or text != op:
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {op!r}, found {found}", pos, self.src)

    def parse(self) -> Expr:
        e = self.sum()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", pos, self.src)
        return e

    def sum(self) -> Expr:
        e = self.product()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                rhs = self.product()
                e = e + rhs if text == "+" else e - rhs
            else:
                return e

    def product(self) -> Expr:
        e = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                rhs = self.unary()
                e = e * rhs if text == "*" else e / rhs
            else:
                return e

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return -self.unary()
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return base ** self.unary()
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            if re.fullmatch(r"\d+", text):
                return sp.Integer(int(text))
            return sp.Float(float(text))
        if kind == "name":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(text, pos)
                self.take()
                arg = self.sum()
                self.expect(")")
                return FUNCTIONS[text](arg)
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"function {text!r} needs an argument", pos, self.src)
            if self.allowed is not None and text not in self.allowed:
                raise UnknownIdentifierError(text, pos)
            return symbol(text)
        if kind == "op" and text == "(":
            e = self.sum()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos, self.src)


def parse_expr(src: str, allowed_symbols: Iterable[str] | None = None) -> Expr:
    """Parse ``src`` in the infix grammar.

    ``allowed_symbols=None`` accepts any identifier; otherwise identifiers
    outside the list (and outside the function set) raise
    :class:`UnknownIdentifierError`.
    """
    allowed = None if allowed_symbols is None else set(allowed_symbols)
    return _Parser(src, allowed).parse()


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

def _fmt_number(x: sp.Number) -> str:
    if isinstance(x, sp.Integer):
        s = str(int(x))
    elif isinstance(x, sp.Rational):
        s = f"{x.p}/{x.q}"
    else:
        s = repr(float(x))
        if s in ("inf", "-inf", "nan"):
            raise ExprError(f"cannot print non-finite number {s}")
    return s


def to_string(e: Expr) -> str:
    """Print ``e`` in the parser's grammar (fully parenthesised where needed)."""
    return _print(sp.sympify(e))


def _print(e) -> str:
    if isinstance(e, sp.Number):
        if e is sp.nan or e in (sp.oo, -sp.oo, sp.zoo):
            raise ExprError(f"cannot print {e}")
        s = _fmt_number(e)
        return f"({s})" if (e < 0 or isinstance(e, sp.Rational) and not isinstance(e, sp.Integer)) else s
    if isinstance(e, sp.Symbol):
        return e.name
    if e is sp.E:
        return "exp(1)"
    if e is sp.pi:
        return "(4*arctan(1))"
    if isinstance(e, sp.NumberSymbol):
        return repr(float(e))
    if isinstance(e, sp.Add):
        parts = [_print(a) for a in sp.Add.make_args(e)]
        return "(" + " + ".join(parts) + ")"
    if isinstance(e, sp.Mul):
        return "(" + "*".join(_print(a) for a in e.args) + ")"
    if isinstance(e, sp.Pow):
        return f"({_print(e.base)}^{_print(e.exp)})"
    if isinstance(e, sp.Function):
        fn = type(e)
        if fn in _PRINT_NAMES:
            return f"{_PRINT_NAMES[fn]}({_print(e.args[0])})"
    raise ExprError(f"expression outside the supported grammar: {e!r}")


def _strip_outer(s: str) -> str:
    # drop one redundant pair of outer parentheses for readability
    if s.startswith("(") and s.endswith(")"):
        depth = 0
        for k, ch in enumerate(s):
            depth += ch == "("
            depth -= ch == ")"
            if depth == 0 and k < len(s) - 1:
                return s
        return s[1:-1]
    return s


def pretty(e: Expr) -> str:
    return _strip_outer(to_string(e))


# ---------------------------------------------------------------------------
# calculus and simplification
# ---------------------------------------------------------------------------

def differentiate(e: Expr, s: "sp.Symbol | str") -> Expr:
    if isinstance(s, str):
        s = symbol(s)
    return sp.diff(e, s)


def free_names(e: Expr) -> set[str]:
    return {s.name for s in sp.sympify(e).free_symbols}


def simplify(e: Expr) -> Expr:
    """Constant folding, 0/1 identities and merging of powers of equal bases.

    No trigonometric or logarithmic identities are applied.
    """
    e = _rebuild(sp.sympify(e))
    return sp.powsimp(e, combine="exp", deep=True)


def _rebuild(e):
    if not e.args:
        return e
    args = [_rebuild(a) for a in e.args]
    return e.func(*args)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(e: Expr, bindings: Bindings):
    """Evaluate ``e`` in IEEE double precision.

    Bindings may hold scalars or equal-length 1-D arrays; array bindings give
    an array result. Domain violations raise :class:`DomainError` naming the
    subexpression (and the first offending sample for array input).
    """
    return _Evaluator.from_bindings(bindings).result(sp.sympify(e))


class _Evaluator:
    """Memoising tree walker; one instance may serve many expressions."""

    def __init__(self, values: dict):
        self.values = values
        self.cache: dict = {}
        self.scalar = all(np.ndim(v) == 0 for v in values.values())
        self.shape = np.broadcast_shapes(*[np.shape(v) for v in values.values()]) if values else ()

    @classmethod
    def from_bindings(cls, bindings: Bindings) -> "_Evaluator":
        return cls({k: np.asarray(val, dtype=float) for k, val in bindings.items()})

    def result(self, e):
        out = np.asarray(self(e), dtype=float)
        if self.scalar:
            return float(out)
        return np.broadcast_to(out, self.shape).astype(float)

    def __call__(self, e):
        hit = self.cache.get(e)
        if hit is not None:
            return hit
        with np.errstate(all="ignore"):
            out = self._eval(e)
        if not np.all(np.isfinite(out)):
            self._fail("non-finite value (overflow or pole)", e, ~np.isfinite(out))
        self.cache[e] = out
        return out

    def _fail(self, kind, e, mask):
        mask = np.broadcast_to(np.asarray(mask), np.broadcast_shapes(
            np.shape(mask), *[np.shape(v) for v in self.values.values()]))
        idx = None
        point = {}
        if mask.ndim:
            idx = int(np.flatnonzero(mask)[0])
            for k, v in self.values.items():
                v = np.broadcast_to(v, mask.shape)
                point[k] = float(v.flat[idx])
        else:
            point = {k: float(v) for k, v in self.values.items() if np.ndim(v) == 0}
        raise DomainError(kind, e, idx, point)

    def _eval(self, e):
        if isinstance(e, sp.Symbol):
            try:
                return self.values[e.name]
            except KeyError:
                raise UnboundSymbolError(e.name) from None
        if e.is_Number or isinstance(e, sp.NumberSymbol):
            if e is sp.zoo or e is sp.nan or e in (sp.oo, -sp.oo):
                self._fail("undefined constant", e, np.asarray(True))
            if e.is_real is False:
                self._fail("non-real constant", e, np.asarray(True))
            return np.asarray(float(e))
        if e is sp.I or e.is_number and e.is_real is False:
            self._fail("non-real constant", e, np.asarray(True))
        if isinstance(e, sp.Add):
            acc = self(e.args[0])
            for a in e.args[1:]:
                acc = acc + self(a)
            return acc
        if isinstance(e, sp.Mul):
            acc = self(e.args[0])
            for a in e.args[1:]:
                acc = acc * self(a)
            return acc
        if isinstance(e, sp.Pow):
            return self._pow(e)
        fn = type(e)
        if fn in _NUMPY_FUNCS:
            return _NUMPY_FUNCS[fn](self(e.args[0]))
        if fn is sp.log:
            x = self(e.args[0])
            bad = x <= 0
            if np.any(bad):
                self._fail("ln of non-positive value", e, bad)
            return np.log(x)
        if fn is sp.atanh:
            x = self(e.args[0])
            bad = np.abs(x) >= 1
            if np.any(bad):
                self._fail("arctanh outside (-1, 1)", e, bad)
            return np.arctanh(x)
        raise ExprError(f"cannot evaluate {e!r}")

    def _pow(self, e):
        base = self(e.base)
        ex = e.exp
        if ex.is_Integer:
            n = int(ex)
            if n < 0:
                bad = base == 0
                if np.any(bad):
                    self._fail("division by zero", e, bad)
                return 1.0 / base ** (-n)
            return base ** n
        expo = self(ex)
        frac = not (ex.is_Integer or (ex.is_number and float(ex).is_integer()))
        if frac:
            bad = base < 0
            if np.any(bad):
                self._fail("fractional power of negative value", e, bad)
        bad = (base == 0) & (expo < 0)
        if np.any(bad):
            self._fail("division by zero", e, bad)
        return np.power(base, expo)


def sample_bindings(points: np.ndarray, names: Sequence[str]) -> dict:
    """Column-wise bindings for an ``(n, len(names))`` array of sample points."""
    points = np.asarray(points, dtype=float)
    return {name: points[:, k] for k, name in enumerate(names)}


def finite_difference(e: Expr, s: str, bindings: Bindings, h: float = 1e-6):
    """Central difference of ``e`` along ``s``; an independent check on :func:`differentiate`."""
    up = dict(bindings)
    dn = dict(bindings)
    up[s] = np.asarray(bindings[s], dtype=float) + h
    dn[s] = np.asarray(bindings[s], dtype=float) - h
    return (evaluate(e, up) - evaluate(e, dn)) / (2 * h)


def is_finite_number(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


# ---------------------------------------------------------------------------
# batch evaluation
# ---------------------------------------------------------------------------

WORKERS_ENV = "KUNDTCSI_WORKERS"


def default_workers() -> int:
    """Worker count for sample sweeps, taken from ``KUNDTCSI_WORKERS`` (default 1)."""
    import os

    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def evaluate_many(exprs: Sequence[Expr], names: Sequence[str], points: np.ndarray,
                  constants: Bindings | None = None, workers: int | None = None) -> np.ndarray:
    """Evaluate each expression at every row of ``points``; returns ``(len(exprs), n)``.

    Rows are split into contiguous chunks when more than one worker is
    requested; results are reassembled in row order, so the output does not
    depend on the worker count.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    workers = default_workers() if workers is None else max(1, workers)
    exprs = [sp.sympify(e) for e in exprs]

    def run(block: np.ndarray) -> np.ndarray:
        b = dict(constants or {})
        b.update(sample_bindings(block, names))
        ev = _Evaluator.from_bindings(b)
        out = np.zeros((len(exprs), block.shape[0]))
        for k, e in enumerate(exprs):
            if e == 0:
                continue
            out[k] = ev.result(e)
        return out

    if workers == 1 or n < 2 * workers:
        return run(points)
    from concurrent.futures import ThreadPoolExecutor

    chunks = np.array_split(points, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(run, chunks))
    return np.concatenate(parts, axis=1)
