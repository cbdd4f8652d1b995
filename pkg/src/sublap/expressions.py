"""Safe scalar-field expressions for configs and verification suites.

Expressions are parsed with `ast` and evaluated against a whitelist of
names: coordinates (x, y, z, t and x0..x{n-1}), numpy elementwise
functions, and the constants pi and e.  Anything else is rejected, so a
config typo fails loudly instead of producing a silent wrong field.
"""

from __future__ import annotations

import ast

import numpy as np

_FUNCS = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sqrt": np.sqrt,
    "log": np.log,
    "tanh": np.tanh,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_COORD_LETTERS = ["x", "y", "z", "t"]

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
    ast.Compare, ast.Gt, ast.GtE, ast.Lt, ast.LtE, ast.Load, ast.Tuple,
)


def compile_expression(expr, n):
    """Compile an expression string into a callable points (N, n) -> (N,)."""
    names = {}
    for k in range(n):
        if k < len(_COORD_LETTERS) and n <= len(_COORD_LETTERS):
            names[_COORD_LETTERS[k]] = k
        names[f"x{k}"] = k
    if n == 3:
        names["t"] = 2  # Heisenberg-style coordinates (x, y, t)
    tree = ast.parse(expr, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError(f"disallowed syntax in expression: {type(node).__name__}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ValueError("only whitelisted functions may be called")
        if isinstance(node, ast.Name):
            if node.id not in names and node.id not in _FUNCS and node.id not in _CONSTS:
                raise ValueError(f"unknown name in expression: {node.id!r}")
    code = compile(tree, "<field-expression>", "eval")

    def fn(points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        env = dict(_FUNCS)
        env.update(_CONSTS)
        for name, k in names.items():
            env[name] = pts[:, k]
        out = eval(code, {"__builtins__": {}}, env)
        out = np.asarray(out, dtype=float)
        if out.shape != (pts.shape[0],):
            out = np.broadcast_to(out, (pts.shape[0],)).copy()
        return out[0] if single else out

    fn.expression = expr
    return fn


def as_field_function(expr_or_fn, n):
    if callable(expr_or_fn):
        return expr_or_fn
    return compile_expression(str(expr_or_fn), n)
