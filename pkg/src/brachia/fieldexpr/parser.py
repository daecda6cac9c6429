"""Recursive-descent parser for the scalar expression language.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? power
    power  := atom ('^' INT)?
    atom   := NUMBER | 'x' INT | ('sin'|'cos'|'exp') '(' expr ')' | '(' expr ')'

Nodes are frozen dataclasses; evaluation goes through closures built once
per tree, so the same compiled expression runs on floats, numpy arrays,
:class:`~brachia.fieldexpr.dual.Dual` and :class:`~brachia.fieldexpr.jet.Jet`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence, Union

import numpy as np

from ..errors import (
    EvaluationDomainError,
    ExprSyntaxError,
    UnknownIdentifier,
    VariableIndexError,
)

FUNCTIONS = ("sin", "cos", "exp")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as written in the source text


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]


# --- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number | int | var | func | op | end
    text: str
    pos: int


def _tokenize(text: str, n: int) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        tok = m.group()
        if kind == "number":
            is_int = tok.isdigit()
            tokens.append(_Token("int" if is_int else "number", tok, pos))
        elif kind == "name":
            vm = re.fullmatch(r"x(\d+)", tok)
            if vm:
                idx = int(vm.group(1))
                if not 1 <= idx <= n:
                    raise VariableIndexError(
                        f"variable {tok} out of range for dimension {n}", text, pos
                    )
                tokens.append(_Token("var", tok, pos))
            elif tok in FUNCTIONS:
                tokens.append(_Token("func", tok, pos))
            else:
                raise UnknownIdentifier(f"unknown identifier {tok!r}", text, pos)
        elif kind == "op":
            tokens.append(_Token("op", tok, pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.tokens = _tokenize(text, n)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _error(self, message: str) -> ExprSyntaxError:
        return ExprSyntaxError(message, self.text, self.tok.pos)

    def _accept_op(self, *ops: str) -> str | None:
        if self.tok.kind == "op" and self.tok.text in ops:
            op = self.tok.text
            self.i += 1
            return op
        return None

    def _expect_op(self, op: str) -> None:
        if self._accept_op(op) is None:
            found = self.tok.text or "end of input"
            raise self._error(f"expected {op!r}, found {found!r}")

    def parse(self) -> Node:
        if self.tok.kind == "end":
            raise self._error("empty expression")
        node = self.expr()
        if self.tok.kind != "end":
            raise self._error(f"unexpected token {self.tok.text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while (op := self._accept_op("+", "-")) is not None:
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while (op := self._accept_op("*", "/")) is not None:
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self._accept_op("-") is not None:
            return Neg(self.power())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self._accept_op("^") is not None:
            if self.tok.kind != "int":
                raise self._error("exponent must be a non-negative integer literal")
            exponent = int(self.tok.text)
            self.i += 1
            return Pow(base, exponent)
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind in ("number", "int"):
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "var":
            self.i += 1
            return Var(int(tok.text[1:]))
        if tok.kind == "func":
            self.i += 1
            self._expect_op("(")
            arg = self.expr()
            self._expect_op(")")
            return Call(tok.text, arg)
        if self._accept_op("(") is not None:
            node = self.expr()
            self._expect_op(")")
            return node
        found = tok.text or "end of input"
        raise self._error(f"expected a number, variable, function or '(', found {found!r}")


def parse_node(text: str, n: int) -> Node:
    return _Parser(text, n).parse()


# --- printing ----------------------------------------------------------------

def to_text(node: Node) -> str:
    """Fully parenthesized source text that parses back to an equal tree."""
    if isinstance(node, Num):
        v = node.value
        if v < 0 or (v == 0 and math.copysign(1.0, v) < 0):
            return f"(-{repr(-v)})"
        return repr(v)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Pow):
        return f"({to_text(node.base)}^{node.exponent})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def max_var_index(node: Node) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Num):
        return 0
    if isinstance(node, (Neg, Pow, Call)):
        return max_var_index(node.arg if not isinstance(node, Pow) else node.base)
    return max(max_var_index(node.left), max_var_index(node.right))


# --- evaluation --------------------------------------------------------------

def _sin(v):
    if isinstance(v, (float, int)):
        return math.sin(v)
    if isinstance(v, np.ndarray):
        return np.sin(v)
    return v.sin()


def _cos(v):
    if isinstance(v, (float, int)):
        return math.cos(v)
    if isinstance(v, np.ndarray):
        return np.cos(v)
    return v.cos()


def _exp(v):
    if isinstance(v, (float, int)):
        return math.exp(v)
    if isinstance(v, np.ndarray):
        return np.exp(v)
    return v.exp()


_FUNC_IMPLS = {"sin": _sin, "cos": _cos, "exp": _exp}


def compile_node(node: Node) -> Callable[[Sequence[Any]], Any]:
    """Build a closure ``x -> value`` evaluating ``node`` with ``x[i-1]`` for ``xi``."""
    if isinstance(node, Num):
        v = node.value
        return lambda x: v
    if isinstance(node, Var):
        i = node.index - 1
        return lambda x: x[i]
    if isinstance(node, Neg):
        a = compile_node(node.arg)
        return lambda x: -a(x)
    if isinstance(node, Pow):
        b = compile_node(node.base)
        k = node.exponent
        return lambda x: b(x) ** k
    if isinstance(node, Call):
        a = compile_node(node.arg)
        fn = _FUNC_IMPLS[node.func]
        return lambda x: fn(a(x))
    if isinstance(node, BinOp):
        left = compile_node(node.left)
        right = compile_node(node.right)
        if node.op == "+":
            return lambda x: left(x) + right(x)
        if node.op == "-":
            return lambda x: left(x) - right(x)
        if node.op == "*":
            return lambda x: left(x) * right(x)
        if node.op == "/":
            return lambda x: left(x) / right(x)
    raise TypeError(f"not an expression node: {node!r}")


@dataclass(frozen=True)
class ScalarExpr:
    """Immutable parsed scalar expression over ``x1..xn``."""

    node: Node
    n: int
    _fn: Callable[[Sequence[Any]], Any] = field(
        init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self):
        if max_var_index(self.node) > self.n:
            raise VariableIndexError(f"expression uses variables beyond x{self.n}")
        object.__setattr__(self, "_fn", compile_node(self.node))

    @classmethod
    def parse(cls, text: str, n: int) -> "ScalarExpr":
        return cls(parse_node(text, n), n)

    def __call__(self, x: Sequence[Any]) -> Any:
        """Evaluate on any number type; raises on division by zero/overflow."""
        try:
            return self._fn(x)
        except (ZeroDivisionError, OverflowError) as exc:
            raise EvaluationDomainError(f"{self.text()}: {exc}") from exc

    def text(self) -> str:
        return to_text(self.node)

    def __str__(self) -> str:
        return self.text()
