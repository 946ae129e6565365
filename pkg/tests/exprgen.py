"""Random expression trees in the exprcore grammar, smooth on x3 in [-2, 2].

Every generated expression is analytic on the sampling box: divisions and
logarithms only ever see arguments of the form 1 + z^2, and exp is applied
to bounded arguments.
"""

import numpy as np

LEAVES = ("x3", "c1", "u")


def random_expression(rng: np.random.Generator, depth: int = 3) -> str:
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.3:
            return f"{rng.integers(1, 6)}.{rng.integers(0, 10)}"
        return str(rng.choice(LEAVES))
    a = random_expression(rng, depth - 1)
    kind = rng.integers(0, 10)
    if kind == 0:
        return f"({a}) + ({random_expression(rng, depth - 1)})"
    if kind == 1:
        return f"({a}) - ({random_expression(rng, depth - 1)})"
    if kind == 2:
        return f"({a}) * ({random_expression(rng, depth - 1)})"
    if kind == 3:
        return f"({a}) / (1 + ({random_expression(rng, depth - 1)})^2)"
    if kind == 4:
        return f"({a})^{rng.integers(2, 4)}"
    if kind == 5:
        return f"{rng.choice(['sin', 'cos', 'arctan'])}({a})"
    if kind == 6:
        return f"exp(tanh({a}))"
    if kind == 7:
        return f"sqrt(1 + ({a})^2)"
    if kind == 8:
        return f"ln(1 + ({a})^2)"
    return f"{rng.choice(['sinh', 'cosh'])}(sin({a}))"


def random_bindings(rng: np.random.Generator) -> dict:
    return {"x3": rng.uniform(-2, 2), "c1": rng.uniform(-1.5, 1.5), "u": rng.uniform(-1, 1)}


def relative_gap(exact: float, approx: float) -> float:
    return abs(exact - approx) / max(1.0, abs(exact))
