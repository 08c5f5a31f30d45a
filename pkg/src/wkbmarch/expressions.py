"""Parser for user coefficient expressions a(x).

Grammar: ``+ - * / ^``, parentheses, numeric literals, the variable ``x``,
and the functions exp, log, sin, cos, sqrt.  The parsed tree is evaluated
directly on jets, so an expression model delivers derivatives of any order.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ConfigError
from .coeffs import CoefficientModel
from .jets import Jet

__all__ = ["ExpressionModel", "parse_expression"]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)

_FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ConfigError(f"bad character in expression at {text[pos:]!r}")
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num"))))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name")))
        else:
            op = m.group("op")
            tokens.append(("op", "^" if op == "**" else op))
        pos = m.end()
    tokens.append(("end", None))
    return tokens


class _Node:
    __slots__ = ("kind", "value", "args", "uses_x")

    def __init__(self, kind, value=None, args=(), uses_x=False):
        self.kind = kind
        self.value = value
        self.args = args
        self.uses_x = uses_x or any(a.uses_x for a in args)


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val = self.next()
        if kind != "op" or val != op:
            raise ConfigError(f"expected {op!r} in expression, found {val!r}")

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ConfigError(f"trailing input in expression: {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.next()
            rhs = self.term()
            node = _Node("add" if op == "+" else "sub", args=(node, rhs))
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.next()
            rhs = self.unary()
            node = _Node("mul" if op == "*" else "div", args=(node, rhs))
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.next()
            return _Node("neg", args=(self.unary(),))
        if self.peek() == ("op", "+"):
            self.next()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.next()
            expo = self.unary()  # right-associative
            return _Node("pow", args=(base, expo))
        return base

    def atom(self):
        kind, val = self.next()
        if kind == "num":
            return _Node("num", value=val)
        if kind == "name":
            if val == "x":
                return _Node("x", uses_x=True)
            if val in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return _Node(val, args=(arg,))
            raise ConfigError(f"unknown name {val!r} in expression")
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect_op(")")
            return node
        raise ConfigError(f"unexpected token {val!r} in expression")


def parse_expression(text: str) -> _Node:
    if not text.strip():
        raise ConfigError("empty expression")
    return _Parser(_tokenize(text)).parse()


def _eval_node(node: _Node, xjet: Jet) -> Jet:
    kind = node.kind
    if kind == "num":
        return Jet.constant(node.value, xjet.order, xjet.coef.shape[1:])
    if kind == "x":
        return xjet
    if kind == "neg":
        return -_eval_node(node.args[0], xjet)
    a = _eval_node(node.args[0], xjet)
    if kind in ("add", "sub", "mul", "div", "pow"):
        bnode = node.args[1]
        if kind == "pow" and not bnode.uses_x:
            # constant exponent: direct power recurrence, valid for a > 0
            r = float(_eval_node(bnode, xjet).value.flat[0])
            if r == round(r) and abs(r) < 64:
                # integer power stays exact for sign-changing bases
                n = int(round(r))
                if n == 0:
                    return Jet.constant(1.0, xjet.order, xjet.coef.shape[1:])
                out = a
                for _ in range(abs(n) - 1):
                    out = out * a
                return out if n > 0 else 1.0 / out
            return a.pow(r)
        b = _eval_node(bnode, xjet)
        if kind == "add":
            return a + b
        if kind == "sub":
            return a - b
        if kind == "mul":
            return a * b
        if kind == "div":
            return a / b
        return (b * a.log()).exp()  # general power through exp/log
    if kind == "exp":
        return a.exp()
    if kind == "log":
        return a.log()
    if kind == "sin":
        return a.sin()
    if kind == "cos":
        return a.cos()
    if kind == "sqrt":
        return a.sqrt()
    raise AssertionError(f"unhandled node kind {kind}")


class ExpressionModel(CoefficientModel):
    """Coefficient model defined by an expression string in x."""

    max_order = None

    def __init__(self, text: str, floor_samples: int = 2001):
        self.text = text.strip()
        self.tree = parse_expression(self.text)
        self.name = f"expr:{self.text}"
        # positivity probe on a dense grid; the floor is an estimate, not a proof
        xs = np.linspace(0.0, 1.0, floor_samples)
        vals = self.eval(xs, 0)
        vmin = float(np.min(vals))
        if not np.isfinite(vals).all() or vmin <= 0.0:
            raise ConfigError(
                f"expression {self.text!r} is not positive on [0, 1] "
                f"(min sampled value {vmin:g})"
            )
        self.a_floor = vmin * (1.0 - 1e-9)

    def jet(self, x, order: int) -> Jet:
        x = self.require(x, order)
        return _eval_node(self.tree, Jet.variable(x, order))

    def eval(self, x, k: int = 0):
        return self.jet(x, k).derivative(k)
