"""Closed-form potentials V(x0, ..., x{n-1}).

Grammar: numbers, the constants ``pi`` and ``e``, coordinates ``x0``..``x{n-1}``,
binary ``+ - * /``, unary minus and the functions ``cos``, ``sin``, ``exp``.
The string is checked against this grammar with :mod:`ast` before sympy sees
it; sympy supplies the symbolic gradient and Hessian.
"""
from __future__ import annotations

import ast
import re

import numpy as np
import sympy as sp

_FUNCS = {"cos": sp.cos, "sin": sp.sin, "exp": sp.exp}
_CONSTS = {"pi": sp.pi, "e": sp.E}
_COORD = re.compile(r"x(\d+)$")


class ExpressionError(ValueError):
    pass


def _check(node, n):
    if isinstance(node, ast.Expression):
        return _check(node.body, n)
    if isinstance(node, ast.BinOp):
        if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div)):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left, n)
        _check(node.right, n)
        return
    if isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExpressionError("only unary + and - are allowed")
        _check(node.operand, n)
        return
    if isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS) or len(node.args) != 1 or node.keywords:
            raise ExpressionError("only cos(.), sin(.), exp(.) calls are allowed")
        _check(node.args[0], n)
        return
    if isinstance(node, ast.Name):
        m = _COORD.match(node.id)
        if m:
            if int(m.group(1)) >= n:
                raise ExpressionError(f"coordinate {node.id} out of range for dimension {n}")
            return
        if node.id in _CONSTS:
            return
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return
    raise ExpressionError(f"syntax element {type(node).__name__} not allowed")


class Potential:
    """A parsed potential with vectorized value, gradient and Hessian."""

    def __init__(self, text: str, n: int):
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(str(exc)) from exc
        _check(tree, n)
        self.text = text
        self.n = n
        xs = sp.symbols(f"x0:{n}")
        names = {f"x{i}": xs[i] for i in range(n)}
        names.update(_FUNCS)
        names.update(_CONSTS)
        expr = sp.sympify(text, locals=names)
        grad = [sp.diff(expr, xi) for xi in xs]
        hess = [[sp.diff(g, xj) for xj in xs] for g in grad]
        self._value = sp.lambdify(xs, expr, "numpy")
        self._grad = [sp.lambdify(xs, g, "numpy") for g in grad]
        self._hess = [[sp.lambdify(xs, h, "numpy") for h in row] for row in hess]

    def _args(self, x):
        x = np.asarray(x, float)
        return [x[..., i] for i in range(self.n)], x.shape[:-1]

    def value(self, x):
        args, shape = self._args(x)
        return np.broadcast_to(np.asarray(self._value(*args), float), shape).copy()

    def gradient(self, x):
        args, shape = self._args(x)
        return np.stack([np.broadcast_to(np.asarray(g(*args), float), shape) for g in self._grad], axis=-1)

    def hessian(self, x):
        args, shape = self._args(x)
        rows = [np.stack([np.broadcast_to(np.asarray(h(*args), float), shape) for h in row], axis=-1)
                for row in self._hess]
        return np.stack(rows, axis=-2)
