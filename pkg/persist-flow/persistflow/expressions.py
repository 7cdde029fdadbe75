# -*- coding: utf-8 -*-
"""
Small arithmetic expression language for initial conditions and sources.

Expressions use the variables ``x``, ``y``, ``t``, numeric constants,
``+ - * / **``, parentheses and the functions ``exp``, ``min``, ``max``,
``abs``, ``sqrt`` and ``smoothstep(a, b, x)``. They are parsed once with
:mod:`ast` and evaluated on numpy arrays:

>>> e = Expression("0.8*x*(1-x)")
>>> e(x=np.array([0.0, 0.5, 1.0])).tolist()
[0.0, 0.2, 0.0]
>>> Expression("max(x, 2) + t")(x=np.array([1.0, 3.0]), t=1.0).tolist()
[3.0, 4.0]
>>> float(Expression("smoothstep(0, 1, 0.5)")())
0.5
>>> Expression("__import__('os')")
Traceback (most recent call last):
...
persistflow.expressions.ExpressionError: unsupported function '__import__'
"""
import ast
import operator
from typing import Callable, Dict, Optional

import numpy as np  # type: ignore


VARIABLES = ('x', 'y', 't')


class ExpressionError(ValueError):
    pass


def smoothstep(a, b, x):
    """
    Cubic smooth step, 0 at ``a`` and 1 at ``b``; ``a > b`` gives a
    decreasing step.

    >>> smoothstep(0.0, 1.0, np.array([-1.0, 0.25, 2.0])).tolist()
    [0.0, 0.15625, 1.0]
    """
    if a == b:
        raise ExpressionError("smoothstep needs a != b")
    s = np.clip((np.asarray(x, dtype=float) - a) / (b - a), 0.0, 1.0)
    return s * s * (3 - 2 * s)


FUNCTIONS = {
    'exp': np.exp,
    'sqrt': np.sqrt,
    'abs': np.abs,
    'min': np.minimum,
    'max': np.maximum,
    'smoothstep': smoothstep,
}  # type: Dict[str, Callable]

BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}

UNARY = {
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


class Expression:
    """ A parsed expression; call it with arrays for x, y and t """
    def __init__(self, text: str) -> None:
        self.text = text.strip()
        try:
            tree = ast.parse(self.text, mode='eval')
        except SyntaxError as e:
            raise ExpressionError("cannot parse {!r}: {}".format(text, e.msg))
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node) -> None:
        if isinstance(node, ast.BinOp):
            if type(node.op) not in BINARY:
                raise ExpressionError("unsupported operator {}".format(
                    type(node.op).__name__))
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in UNARY:
                raise ExpressionError("unsupported operator {}".format(
                    type(node.op).__name__))
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            name = getattr(node.func, 'id', None)
            if not isinstance(node.func, ast.Name) or name not in FUNCTIONS:
                raise ExpressionError("unsupported function {!r}".format(
                    name or ast.dump(node.func)))
            if node.keywords:
                raise ExpressionError("keyword arguments are not supported")
            for arg in node.args:
                self._check(arg)
        elif isinstance(node, ast.Name):
            if node.id not in VARIABLES:
                raise ExpressionError("unknown variable {!r}; use {}".format(
                    node.id, ', '.join(VARIABLES)))
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError("unsupported constant {!r}".format(
                    node.value))
        else:
            raise ExpressionError("unsupported syntax: {}".format(
                type(node).__name__))

    @property
    def variables(self):
        return sorted({n.id for n in ast.walk(self._tree)
                       if isinstance(n, ast.Name) and n.id in VARIABLES})

    def __call__(self, x=0.0, y=0.0, t=0.0):
        env = {'x': x, 'y': y, 't': t}
        x_arr = np.asarray(x, dtype=float)
        value = self._eval(self._tree, env)
        return np.broadcast_to(np.asarray(value, dtype=float),
                               np.broadcast(x_arr, np.asarray(y)).shape).copy()

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return BINARY[type(node.op)](self._eval(node.left, env),
                                         self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return UNARY[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Call):
            args = [self._eval(a, env) for a in node.args]
            return FUNCTIONS[node.func.id](*args)
        if isinstance(node, ast.Name):
            return np.asarray(env[node.id], dtype=float)
        return float(node.value)

    def on_nodes(self, x: np.ndarray, y: Optional[np.ndarray] = None,
                 t: float = 0.0) -> np.ndarray:
        """ Nodal values on a mesh """
        if y is None:
            y = np.zeros_like(x)
        return self(x=x, y=y, t=t)

    def __repr__(self):
        return "Expression(%r)" % self.text
