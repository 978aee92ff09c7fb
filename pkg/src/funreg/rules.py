"""Tiny arithmetic evaluator for sample-size rules such as ``ceil(n^0.667)``.

Only numbers, the variable ``n``, user constants, ``+ - * / ^ **`` and a few
math functions are accepted; anything else is a :class:`ConfigError`.
"""
from __future__ import annotations

import ast
import math
import operator

from .exceptions import ConfigError

_FUNCS = {"ceil": math.ceil, "floor": math.floor, "log": math.log, "log2": math.log2,
          "log10": math.log10, "sqrt": math.sqrt, "exp": math.exp, "min": min, "max": max,
          "round": round, "abs": abs}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow, ast.BitXor: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class Rule:
    """A parsed rule; call it with the sample size."""

    def __init__(self, text: str, constants: dict | None = None):
        self.text = str(text)
        self.constants = dict(constants or {})
        for name in self.constants:
            if name == "n" or name in _FUNCS:
                raise ConfigError(f"constant name {name!r} is reserved")
        try:
            self._tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse rule {self.text!r}: {exc.msg}") from exc
        self._check(self._tree.body)

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigError(f"rule {self.text!r}: only numeric literals are allowed")
        elif isinstance(node, ast.Name):
            if node.id != "n" and node.id not in self.constants:
                raise ConfigError(f"rule {self.text!r}: unknown name {node.id!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ConfigError(f"rule {self.text!r}: operator not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNOPS:
                raise ConfigError(f"rule {self.text!r}: operator not allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ConfigError(f"rule {self.text!r}: unsupported function call")
            for a in node.args:
                self._check(a)
        else:
            raise ConfigError(f"rule {self.text!r}: unsupported syntax {type(node).__name__}")

    def _eval(self, node, n):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            return n if node.id == "n" else self.constants[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, n), self._eval(node.right, n))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, n))
        return _FUNCS[node.func.id](*(self._eval(a, n) for a in node.args))

    def __call__(self, n: int) -> float:
        try:
            return self._eval(self._tree.body, n)
        except (ArithmeticError, ValueError) as exc:
            raise ConfigError(f"rule {self.text!r} failed at n={n}: {exc}") from exc

    def __repr__(self) -> str:
        return f"Rule({self.text!r})"
