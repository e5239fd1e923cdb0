"""Scalar arithmetic expressions in the spatial variables ``x`` and ``y``.

Grammar (lowest to highest binding)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | 'x' | 'y' | 'pi' | FUNC '(' expr ')' | '(' expr ')'

``-x^2`` therefore means ``-(x^2)``. Expressions are immutable trees of frozen
dataclasses; evaluation is vectorised over numpy arrays and reentrant.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ExprDomainError, ExprError, ExprSyntaxError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
VARIABLES = ("x", "y")
CONSTANTS = {"pi": math.pi}

# binding power used by the printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


@dataclass(frozen=True)
class Num:
    value: float
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Const:
    name: str
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expression"
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"
    offset: int = field(default=0, compare=False, repr=False)


Expression = Union[Num, Var, Const, Neg, BinOp, Call]


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    encoded_offset = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", encoded_offset)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), encoded_offset))
        encoded_offset += len(m.group().encode("utf-8"))
        pos = m.end()
    tokens.append(_Token("end", "", encoded_offset))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0
        self.open_parens: list[int] = []

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect_close(self, opened_at: int):
        if self.tok.kind == "op" and self.tok.text == ")":
            self.advance()
            self.open_parens.pop()
            return
        if self.tok.kind == "end":
            raise ExprSyntaxError("unbalanced parentheses: '(' never closed", opened_at)
        raise ExprSyntaxError(f"expected ')' but found {self.tok.text!r}", self.tok.offset)

    def parse(self) -> Expression:
        if self.tok.kind == "end":
            raise ExprSyntaxError("empty expression", 0)
        node = self.expr()
        if self.tok.kind != "end":
            if self.tok.text == ")":
                raise ExprSyntaxError("unbalanced parentheses: unexpected ')'", self.tok.offset)
            raise ExprSyntaxError(f"unexpected token {self.tok.text!r}", self.tok.offset)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            t = self.advance()
            node = BinOp(t.text, node, self.term(), t.offset)
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            t = self.advance()
            node = BinOp(t.text, node, self.unary(), t.offset)
        return node

    def unary(self) -> Expression:
        if self.tok.kind == "op" and self.tok.text == "-":
            t = self.advance()
            return Neg(self.unary(), t.offset)
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            t = self.advance()
            return BinOp("^", base, self.unary(), t.offset)
        return base

    def atom(self) -> Expression:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text), t.offset)
        if t.kind == "name":
            self.advance()
            if t.text in FUNCTIONS:
                if not (self.tok.kind == "op" and self.tok.text == "("):
                    raise ExprSyntaxError(f"function '{t.text}' requires '('", self.tok.offset)
                opened = self.advance().offset
                self.open_parens.append(opened)
                arg = self.expr()
                self.expect_close(opened)
                return Call(t.text, arg, t.offset)
            if t.text in VARIABLES:
                return Var(t.text, t.offset)
            if t.text in CONSTANTS:
                return Const(t.text, t.offset)
            raise ExprSyntaxError(f"unknown identifier '{t.text}'", t.offset)
        if t.kind == "op" and t.text == "(":
            self.advance()
            self.open_parens.append(t.offset)
            node = self.expr()
            self.expect_close(t.offset)
            return node
        if t.kind == "end":
            raise ExprSyntaxError("unexpected end of input", t.offset)
        if t.text == ")":
            raise ExprSyntaxError("unbalanced parentheses: unexpected ')'", t.offset)
        raise ExprSyntaxError(f"unexpected token {t.text!r}", t.offset)


def parse_expr(source: str) -> Expression:
    """Parse ``source`` into an expression tree.

    Raises
    ------
    ExprSyntaxError
        With the byte offset of the offending token.
    """
    if not isinstance(source, str):
        raise ExprError(f"expression must be a string, got {type(source).__name__}")
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# printing


def _prec(node: Expression) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def to_source(node: Expression) -> str:
    """Render ``node`` with the minimal parentheses needed to reparse it identically."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        if _prec(node.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[node.op]
    left = to_source(node.left)
    right = to_source(node.right)
    if node.op == "^":
        # the base must be an atom; the exponent may be any unary
        if _prec(node.left) < _PREC["atom"]:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
    else:
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
    return f"{left}{node.op}{right}"


# ---------------------------------------------------------------------------
# evaluation


def _first_bad(mask, x, y):
    idx = np.flatnonzero(np.broadcast_to(mask, np.broadcast(x, y, mask).shape))
    if idx.size == 0:
        return None
    k = idx[0]
    xb = np.broadcast_to(x, np.broadcast(x, y, mask).shape).ravel()
    yb = np.broadcast_to(y, np.broadcast(x, y, mask).shape).ravel()
    return float(xb[k]), float(yb[k])


def _eval(node: Expression, x, y):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return x if node.name == "x" else y
    if isinstance(node, Const):
        return np.float64(CONSTANTS[node.name])
    if isinstance(node, Neg):
        return -_eval(node.operand, x, y)
    if isinstance(node, Call):
        a = _eval(node.arg, x, y)
        if node.func == "sqrt":
            bad = a < 0
            if np.any(bad):
                raise ExprDomainError("sqrt of negative value", to_source(node), _first_bad(bad, x, y))
        out = FUNCTIONS[node.func](a)
    else:
        a = _eval(node.left, x, y)
        b = _eval(node.right, x, y)
        if node.op == "+":
            out = a + b
        elif node.op == "-":
            out = a - b
        elif node.op == "*":
            out = a * b
        elif node.op == "/":
            bad = b == 0
            if np.any(bad):
                raise ExprDomainError("division by zero", to_source(node), _first_bad(bad, x, y))
            out = a / b
        else:
            bad = (a == 0) & (b < 0)
            if np.any(bad):
                raise ExprDomainError("division by zero (zero to negative power)", to_source(node),
                                      _first_bad(bad, x, y))
            bad = (a < 0) & (b != np.round(b))
            if np.any(bad):
                raise ExprDomainError("non-integer power of negative base", to_source(node),
                                      _first_bad(bad, x, y))
            out = np.power(a, b)
    bad = ~np.isfinite(out)
    if np.any(bad):
        raise ExprDomainError("non-finite result", to_source(node), _first_bad(bad, x, y))
    return out


def evaluate(e: Expression, x, y) -> np.ndarray:
    """Evaluate ``e`` on arrays of coordinates; the result broadcasts with ``x`` and ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(e, x, y)
    return np.broadcast_to(out, np.broadcast(x, y).shape).astype(float, copy=True)


def eval_expr(e: Expression, point) -> float:
    """Evaluate ``e`` at a single point ``(x, y)``."""
    return float(evaluate(e, point[0], point[1]))


def as_expression(value) -> Expression:
    """Accept an already-parsed expression, a string, or a number."""
    if isinstance(value, (Num, Var, Const, Neg, BinOp, Call)):
        return value
    if isinstance(value, bool):
        raise ExprError("booleans are not expressions")
    if isinstance(value, (int, float)):
        return parse_expr(repr(float(value))) if value >= 0 else Neg(Num(-float(value)))
    return parse_expr(value)
