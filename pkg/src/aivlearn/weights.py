"""Weighting functions pi(Z, L): identity on an instrument coordinate, a user
expression over named columns, or the fitted treatment propensity."""

from __future__ import annotations

import ast
import operator
from dataclasses import dataclass, field

import numpy as np


class ExpressionError(ValueError):
    pass


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_FUNCS = {"sin": np.sin, "cos": np.cos, "pow": np.power}


def _check(node, names):
    """Reject anything outside the arithmetic grammar before evaluating."""
    if isinstance(node, ast.Expression):
        return _check(node.body, names)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left, names)
        _check(node.right, names)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        return _check(node.operand, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return
    if isinstance(node, ast.Name):
        if node.id not in names:
            raise ExpressionError(f"unknown column {node.id!r}; available: {sorted(names)}")
        return
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        want = 2 if node.func.id == "pow" else 1
        if len(node.args) != want:
            raise ExpressionError(f"{node.func.id}() takes {want} argument(s)")
        for a in node.args:
            _check(a, names)
        return
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id]
    return _FUNCS[node.func.id](*[_eval(a, env) for a in node.args])


def compile_expression(text: str, names):
    """Parse ``text`` against the allowed column ``names``; returns the tree."""
    try:
        tree = ast.parse(text.replace("×", "*").replace("−", "-"), mode="eval")
    except SyntaxError as e:
        raise ExpressionError(f"cannot parse expression {text!r}: {e.msg}") from None
    _check(tree, set(names))
    return tree


def column_env(z: np.ndarray, l: np.ndarray) -> dict:
    env = {f"z{j}": z[:, j] for j in range(z.shape[1])}
    env.update({f"l{j}": l[:, j] for j in range(l.shape[1])})
    # single-instrument shorthand
    if z.shape[1] == 1:
        env["z"] = z[:, 0]
    return env


@dataclass(frozen=True)
class WeightingFunctionSpec:
    """Declarative weighting function.

    kind is one of ``identity`` (uses ``coordinate``), ``expression``
    (uses ``expression``) or ``propensity`` (fitted Pr(A=level | Z, L)).
    """

    kind: str = "identity"
    coordinate: int = 0
    expression: str | None = None
    level: int = 1
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in ("identity", "expression", "propensity"):
            raise ValueError(f"unknown weighting kind {self.kind!r}")
        if self.kind == "identity" and self.coordinate < 0:
            raise ValueError("coordinate must be non-negative")
        if self.kind == "expression" and not self.expression:
            raise ValueError("expression weighting needs an expression")

    @classmethod
    def identity_coordinate(cls, j: int = 0):
        return cls(kind="identity", coordinate=j)

    @classmethod
    def from_expression(cls, text: str):
        return cls(kind="expression", expression=text)

    @classmethod
    def fitted_propensity(cls, level: int = 1):
        return cls(kind="propensity", level=level)

    @classmethod
    def parse(cls, text: str) -> "WeightingFunctionSpec":
        """CLI form: ``identity:j``, ``propensity[:level]`` or ``expr:<text>``."""
        head, _, rest = text.partition(":")
        if head == "identity":
            return cls.identity_coordinate(int(rest or 0))
        if head == "propensity":
            return cls.fitted_propensity(int(rest or 1))
        if head in ("expr", "expression"):
            return cls.from_expression(rest)
        return cls.from_expression(text)

    @property
    def label(self) -> str:
        if self.kind == "identity":
            return f"z{self.coordinate}"
        if self.kind == "expression":
            return self.expression
        return f"propensity[{self.level}]"

    @property
    def is_fixed(self) -> bool:
        return self.kind != "propensity"

    def evaluate(self, z: np.ndarray, l: np.ndarray) -> np.ndarray:
        """Evaluate a fixed weighting function on (z, l) rows."""
        z = np.asarray(z, dtype=float)
        l = np.asarray(l, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if l.ndim == 1:
            l = l.reshape(z.shape[0], -1)
        if self.kind == "identity":
            if self.coordinate >= z.shape[1]:
                raise ValueError(f"identity coordinate {self.coordinate} >= instrument dimension {z.shape[1]}")
            out = z[:, self.coordinate].astype(float, copy=True)
        elif self.kind == "expression":
            env = column_env(z, l)
            tree = compile_expression(self.expression, env)
            with np.errstate(all="ignore"):
                out = np.broadcast_to(np.asarray(_eval(tree, env), dtype=float), (z.shape[0],)).copy()
        else:
            raise ValueError("a fitted propensity has no fixed evaluation; use the adaptive estimator")
        if not np.all(np.isfinite(out)):
            bad = np.nonzero(~np.isfinite(out))[0][:5]
            raise ValueError(f"weighting function is not finite at rows {bad.tolist()}")
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "coordinate": self.coordinate, "expression": self.expression,
                "level": self.level}


def is_close_constant(values: np.ndarray) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.ptp(v) <= 1e-12 * max(1.0, float(np.abs(v).max())))


__all__ = ["WeightingFunctionSpec", "ExpressionError", "compile_expression", "column_env"]
