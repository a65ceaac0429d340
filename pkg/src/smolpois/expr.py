"""Parser and evaluator for closed-form diffusion coefficients a(r).

The CLI accepts coefficients as plain text like ``(1+r)^-2`` or
``(1+r)/r^2.5``.  This module turns such strings into an immutable
expression tree over the single free variable ``r`` and evaluates it on
scalars or numpy arrays.

Grammar (highest precedence first):

    ^            right-associative, exponent may carry a unary minus
    unary -
    * /
    + -

Functions: exp, ln, sqrt (arity 1) and pow (arity 2).  Whitespace is
insignificant.  Evaluation never returns a non-finite value silently:
division by zero, ln of a non-positive argument and overflow all raise
``EvalDomainError``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

_FUNCTIONS = {"exp": 1, "ln": 1, "sqrt": 1, "pow": 2}


class ParseError(ValueError):
    """Syntax problem in a coefficient string; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalDomainError(ArithmeticError):
    """Evaluation left the real domain (ln <= 0, x/0, overflow, 0^negative)."""


# --- expression tree -------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Node", ...]


Node = Union[Num, Var, Neg, BinOp, Call]


# --- tokenizer -------------------------------------------------------------

_OPERATOR_CHARS = set("+-*/^(),")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Return (kind, text, position) triples; kinds: num, ident, op."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPERATOR_CHARS:
            tokens.append(("op", c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            # optional exponent part: 1e-3, 2.5E+4
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
            lit = text[i:j]
            try:
                float(lit)
            except ValueError:
                raise ParseError(f"malformed number {lit!r}", i) from None
            tokens.append(("num", lit, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("eof", "", n))
    return tokens


# --- recursive-descent parser ----------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, text, position = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}, found {text or 'end of input'!r}", position)
        return self.advance()

    def parse(self) -> Node:
        node = self.expression()
        kind, text, position = self.peek()
        if kind != "eof":
            raise ParseError(f"trailing input {text!r}", position)
        return node

    def expression(self) -> Node:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(text, node, self.unary())
            else:
                return node

    def unary(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            # right-associative, and the exponent may be signed: r^-2, 2^3^2
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, text, position = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if text == "r":
                return Var()
            if text in _FUNCTIONS:
                self.expect_op("(")
                args = [self.expression()]
                while self.peek()[:2] == ("op", ","):
                    self.advance()
                    args.append(self.expression())
                self.expect_op(")")
                if len(args) != _FUNCTIONS[text]:
                    raise ParseError(
                        f"{text} takes {_FUNCTIONS[text]} argument(s), got {len(args)}",
                        position,
                    )
                return Call(text, tuple(args))
            raise ParseError(f"unknown identifier {text!r}", position)
        if kind == "op" and text == "(":
            node = self.expression()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected {text or 'end of input'!r}", position)


def parse_coefficient(text: str) -> Node:
    """Parse a coefficient string into an expression tree over ``r``."""
    if not text or not text.strip():
        raise ParseError("empty coefficient expression", 0)
    return _Parser(text).parse()


# --- evaluation -------------------------------------------------------------


def _check_finite(value, where: str):
    if not np.all(np.isfinite(value)):
        raise EvalDomainError(f"non-finite value in {where}")
    return value


def evaluate(tree: Node, r):
    """Evaluate ``tree`` at ``r`` (scalar or ndarray of positive reals).

    Raises ``EvalDomainError`` on any domain violation or overflow; an
    infinity is never returned silently.
    """
    r_arr = np.asarray(r, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(tree, r_arr)
    out = np.broadcast_to(np.asarray(out, dtype=float), r_arr.shape)
    _check_finite(out, "expression result")
    if np.isscalar(r) or np.ndim(r) == 0:
        return float(out)
    return np.array(out, dtype=float)


def _eval(node: Node, r):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return r
    if isinstance(node, Neg):
        return -_eval(node.operand, r)
    if isinstance(node, BinOp):
        left = _eval(node.left, r)
        right = _eval(node.right, r)
        if node.op == "+":
            return _check_finite(left + right, "addition")
        if node.op == "-":
            return _check_finite(left - right, "subtraction")
        if node.op == "*":
            return _check_finite(left * right, "multiplication")
        if node.op == "/":
            if np.any(right == 0.0):
                raise EvalDomainError("division by zero")
            return _check_finite(left / right, "division")
        if node.op == "^":
            return _pow(left, right)
        raise AssertionError(f"unknown operator {node.op}")
    if isinstance(node, Call):
        args = [_eval(a, r) for a in node.args]
        if node.name == "exp":
            return _check_finite(np.exp(args[0]), "exp")
        if node.name == "ln":
            if np.any(np.asarray(args[0]) <= 0.0):
                raise EvalDomainError("ln of a non-positive value")
            return _check_finite(np.log(args[0]), "ln")
        if node.name == "sqrt":
            if np.any(np.asarray(args[0]) < 0.0):
                raise EvalDomainError("sqrt of a negative value")
            return _check_finite(np.sqrt(args[0]), "sqrt")
        if node.name == "pow":
            return _pow(args[0], args[1])
        raise AssertionError(f"unknown function {node.name}")
    raise AssertionError(f"unknown node {node!r}")


def _pow(base, exponent):
    base_arr = np.asarray(base, dtype=float)
    exp_arr = np.asarray(exponent, dtype=float)
    if np.any((base_arr == 0.0) & (exp_arr < 0.0)):
        raise EvalDomainError("zero raised to a negative power")
    if np.any((base_arr < 0.0) & (exp_arr != np.round(exp_arr))):
        raise EvalDomainError("negative base with non-integer exponent")
    return _check_finite(np.power(base_arr, exp_arr), "power")


# --- pretty printing --------------------------------------------------------


def pretty(node: Node) -> str:
    """Fully parenthesized rendering; re-parsing reproduces the evaluation."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return "r"
    if isinstance(node, Neg):
        return f"(-{pretty(node.operand)})"
    if isinstance(node, BinOp):
        return f"({pretty(node.left)} {node.op} {pretty(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(pretty(a) for a in node.args)})"
    raise AssertionError(f"unknown node {node!r}")


# --- positivity check -------------------------------------------------------


@dataclass(frozen=True)
class PositivityReport:
    passed: bool
    samples_checked: int
    violations: tuple[tuple[float, str], ...]  # (r, description)


def validate_positivity(tree: Node, r_min: float, r_max: float, samples: int) -> PositivityReport:
    """Sample ``tree`` on log-spaced points of [r_min, r_max] and flag r with
    value <= 0, a non-finite value, or an evaluation error."""
    if not (0.0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")
    if samples < 2:
        raise ValueError("need samples >= 2")
    rs = np.geomspace(r_min, r_max, samples)
    violations: list[tuple[float, str]] = []
    for r in rs:
        try:
            value = evaluate(tree, float(r))
        except EvalDomainError as err:
            violations.append((float(r), str(err)))
            continue
        if value <= 0.0:
            violations.append((float(r), f"value {value!r} not positive"))
    return PositivityReport(
        passed=not violations,
        samples_checked=samples,
        violations=tuple(violations),
    )
