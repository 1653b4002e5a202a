"""Scalar expressions of the time variable ``t``.

Matrix entries in run configs are written as small formulas such as
``"0.5+0.5*sin(pi/2*t)"``.  This module tokenizes and parses them with a
hand-written recursive-descent parser and evaluates the resulting tree in
IEEE double precision.

Grammar (lowest to highest binding)::

    expr    := term (('+' | '-') term)*
    term    := power (('*' | '/') power)*
    power   := unary ('^' power)?          # right-associative
    unary   := '-' unary | '+' unary | atom
    atom    := NUMBER | 't' | 'pi' | FUNC '(' expr ')' | '(' expr ')'

Unary signs bind tighter than ``^``, so ``-2^2`` evaluates to 4.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Const",
    "Neg",
    "BinOp",
    "Call",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ExprDomainError",
    "parse",
    "evaluate",
    "to_source",
]

FUNCTIONS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "sqrt": math.sqrt,
    "exp": math.exp,
    "abs": abs,
}

CONSTANTS = {"pi": math.pi}


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, source: str, offset: int):
        self.source = source
        self.offset = offset
        super().__init__(f"{message} at offset {offset} in {source!r}")


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name: str, source: str, offset: int):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", source, offset)


class ExprDomainError(ArithmeticError):
    """Raised when evaluation leaves the real domain (``sqrt(-1)``, ``1/0``)."""

    def __init__(self, message: str, node: "Expr"):
        self.node = node
        super().__init__(f"{message} in subexpression {to_source(node)}")


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Const, Neg, BinOp, Call]


# --- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num', 'ident', 'op', 'end'
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", source, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _fail(self, expected: str):
        tok = self.tok
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"expected {expected}, found {found}", self.source, tok.offset)

    def _accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            self._fail("operator or end of input")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.power()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.power())
        return node

    def power(self) -> Expr:
        base = self.unary()
        if self._accept("^"):
            return BinOp("^", base, self.power())
        return base

    def unary(self) -> Expr:
        if self._accept("-"):
            return Neg(self.unary())
        if self._accept("+"):
            return self.unary()
        return self.atom()

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.i += 1
            if tok.text == "t":
                return Var()
            if tok.text in CONSTANTS:
                return Const(tok.text)
            if tok.text in FUNCTIONS:
                if not self._accept("("):
                    self._fail(f"'(' after {tok.text}")
                arg = self.expr()
                if not self._accept(")"):
                    self._fail("')'")
                return Call(tok.text, arg)
            raise UnknownIdentifierError(tok.text, self.source, tok.offset)
        if self._accept("("):
            node = self.expr()
            if not self._accept(")"):
                self._fail("')'")
            return node
        self._fail("number, 't', constant, function or '('")


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree."""
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", str(source), 0)
    return _Parser(source).parse()


# --- evaluation --------------------------------------------------------------


def evaluate(e: Expr, t: float) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return float(t)
    if isinstance(e, Const):
        return CONSTANTS[e.name]
    if isinstance(e, Neg):
        return -evaluate(e.operand, t)
    if isinstance(e, BinOp):
        a = evaluate(e.left, t)
        b = evaluate(e.right, t)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise ExprDomainError("division by zero", e)
            return a / b
        try:
            out = math.pow(a, b)
        except (ValueError, ZeroDivisionError):
            raise ExprDomainError("power outside the real domain", e) from None
        except OverflowError:
            raise ExprDomainError("power overflow", e) from None
        return out
    if isinstance(e, Call):
        a = evaluate(e.arg, t)
        if e.func == "sqrt" and a < 0.0:
            raise ExprDomainError("sqrt of negative value", e)
        try:
            return FUNCTIONS[e.func](a)
        except (ValueError, OverflowError):
            raise ExprDomainError(f"{e.func} outside its domain", e) from None
    raise TypeError(f"not an expression node: {e!r}")


def to_source(e: Expr) -> str:
    """Fully parenthesised source text; ``parse(to_source(e))`` evaluates identically."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return "t"
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")
