"""A tiny, safe expression language for initial-data fields.

Grammar: numbers, the coordinates ``x``, ``y``, ``z``, the constants ``pi``
and ``e``, binary ``+ - * / **``, unary ``+ -``, parentheses and the
functions ``sin``, ``cos``, ``exp``, ``sqrt``, ``log``, ``tanh``.  Expressions
are parsed with :mod:`ast` and only whitelisted nodes are evaluated, so a
config file cannot run arbitrary code.  Coordinates are cell centres on the
box ``[0, L1] x ... x [0, LN]``; ``Lx``, ``Ly``, ``Lz`` give the extents.
"""

from __future__ import annotations

import ast
import math
import operator

import numpy as np

from .errors import ConfigInvalid

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "log": np.log,
    "tanh": np.tanh,
}
_CONSTS = {"pi": math.pi, "e": math.e}


class ExpressionError(ConfigInvalid):
    pass


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        return _UNOPS[type(node.op)](_eval(node.operand, env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        return _FUNCS[node.func.id](_eval(node.args[0], env))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def evaluate(source, grid) -> np.ndarray:
    """Evaluate ``source`` at every cell centre of ``grid``; numbers broadcast."""
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        return np.full(grid.counts, float(source))
    if not isinstance(source, str):
        raise ExpressionError(f"expression must be a string or number, got {type(source).__name__}")
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    names = ("x", "y", "z")
    env = {}
    for k, arr in enumerate(grid.mesh()):
        env[names[k]] = arr
        env["L" + names[k]] = grid.extents[k]
    for k in range(grid.dim, 3):
        env[names[k]] = np.zeros(grid.counts)
        env["L" + names[k]] = 1.0
    try:
        with np.errstate(all="ignore"):
            out = _eval(tree, env)
    except (ArithmeticError, TypeError) as exc:
        raise ExpressionError(f"cannot evaluate {source!r}: {exc}") from None
    out = np.broadcast_to(np.asarray(out, dtype=float), grid.counts).copy()
    if not np.all(np.isfinite(out)):
        raise ExpressionError(f"expression {source!r} is not finite on the grid")
    return out
