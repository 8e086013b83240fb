"""Small arithmetic expression language for loads, fields and reference solutions.

Expressions are Python-syntax arithmetic over the names ``x1``, ``x2``,
``y1`` ... ``yN``, ``E`` and ``pi``, with a fixed set of elementwise
functions. Anything else (attribute access, subscripts, comprehensions,
unknown names) is rejected when the expression is compiled.
"""

from __future__ import annotations

import ast
import re
from typing import Callable, Sequence

import numpy as np
from scipy import special

FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "arctan": np.arctan,
    "Phi": special.ndtr,
    "min": np.minimum,
    "max": np.maximum,
}
CONSTANTS = {"pi": np.pi}

_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)
_PARAM = re.compile(r"^y([1-9][0-9]*)$")


class ExpressionError(ValueError):
    pass


class Expression:
    """A compiled expression, evaluated as ``expr(x, y, E)`` on points x of shape (n, 2)."""

    def __init__(self, source: str | float | int, n_params: int = 0):
        self.source = str(source)
        try:
            tree = ast.parse(self.source.strip(), mode="eval")
        except SyntaxError as err:
            raise ExpressionError(f"cannot parse {self.source!r}: {err.msg}") from None
        func_nodes = set()
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise ExpressionError(f"{type(node).__name__} not allowed in {self.source!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ExpressionError(f"only numeric constants allowed in {self.source!r}")
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or node.keywords:
                    raise ExpressionError(f"unsupported function call in {self.source!r}")
                func_nodes.add(id(node.func))
        names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name) and id(n) not in func_nodes}
        for name in names:
            if name in ("x1", "x2", "E") or name in CONSTANTS:
                continue
            m = _PARAM.match(name)
            if m is None:
                raise ExpressionError(f"unknown name {name!r} in {self.source!r}")
            if int(m.group(1)) > n_params:
                raise ExpressionError(f"{name} used but only {n_params} random parameters are defined")
        self.uses_E = "E" in names
        self.params = sorted(int(_PARAM.match(n).group(1)) for n in names if _PARAM.match(n))
        self._code = compile(tree, "<expression>", "eval")

    def __call__(self, x, y=(), E=None) -> np.ndarray:
        x = np.atleast_2d(x)
        env = dict(FUNCTIONS)
        env.update(CONSTANTS)
        env["x1"], env["x2"] = x[:, 0], x[:, 1]
        y = np.atleast_1d(np.asarray(y))
        for i in self.params:
            env[f"y{i}"] = y[i - 1]
        if self.uses_E:
            if E is None:
                raise ExpressionError(f"{self.source!r} needs the modulus E")
            env["E"] = E
        val = eval(self._code, {"__builtins__": {}}, env)  # noqa: S307 - AST checked above
        return np.broadcast_to(val, (len(x),))

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"


def compile_vector(sources: Sequence, n_params: int) -> Callable:
    """Vector-valued ``(x, y, E) -> (n, len(sources))`` from component expressions."""
    parts = [Expression(s, n_params) for s in sources]

    def fn(x, y=(), E=None):
        x = np.atleast_2d(x)
        return np.column_stack([p(x, y, E) for p in parts])

    fn.expressions = parts
    fn.uses_E = any(p.uses_E for p in parts)
    return fn


def complex_step_gradient(fn: Callable, x, y, step: float = 1e-20) -> np.ndarray:
    """Jacobian d fn_i / d x_j of a vector expression by complex-step differentiation, (n, m, 2)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cols = []
    for j in range(2):
        xc = x.astype(complex)
        xc[:, j] += 1j * step
        cols.append(np.imag(fn(xc, y)) / step)
    return np.stack(cols, axis=-1)
