"""Rate expressions over integer state vectors.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := NUMBER | 'x[' INT ']' | '(' expr ')'
            | 'min(' expr ',' expr ')' | 'max(' expr ',' expr ')'
            | 'ind(' expr CMP expr ')'
    NUMBER := INT | INT '/' INT
    CMP    := '<' | '<=' | '==' | '>=' | '>'

Coordinates are 1-based (``x[1]`` is the first one).  Values are exact
rationals; decimal literals are rejected.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

__all__ = ["RateSyntaxError", "Const", "Coord", "BinOp", "Call", "Ind", "parse_rate", "pretty", "evaluate"]


class RateSyntaxError(ValueError):
    def __init__(self, message: str, pos: int, src: str = ""):
        super().__init__(f"{message} at position {pos}" + (f" in {src!r}" if src else ""))
        self.pos = pos


@dataclass(frozen=True)
class Const:
    value: Fraction

    def eval(self, x):
        return self.value


@dataclass(frozen=True)
class Coord:
    index: int  # 1-based

    def eval(self, x):
        if not 1 <= self.index <= len(x):
            raise IndexError(f"x[{self.index}] out of range for a {len(x)}-vector")
        return Fraction(x[self.index - 1])


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"

    def eval(self, x):
        a, b = self.left.eval(x), self.right.eval(x)
        return a + b if self.op == "+" else a - b if self.op == "-" else a * b


@dataclass(frozen=True)
class Call:
    fn: str  # "min" or "max"
    left: "Node"
    right: "Node"

    def eval(self, x):
        f = min if self.fn == "min" else max
        return f(self.left.eval(x), self.right.eval(x))


_CMP = {"<": operator.lt, "<=": operator.le, "==": operator.eq, ">=": operator.ge, ">": operator.gt}


@dataclass(frozen=True)
class Ind:
    cmp: str
    left: "Node"
    right: "Node"

    def eval(self, x):
        return Fraction(1) if _CMP[self.cmp](self.left.eval(x), self.right.eval(x)) else Fraction(0)


Node = Union[Const, Coord, BinOp, Call, Ind]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:/\d+)?)(?P<bad>[.eE]\d*)?|(?P<name>min|max|ind|x)"
    r"|(?P<op><=|>=|==|[-+*(),<>\[\]]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            start = len(src) - len(src[pos:].lstrip())
            raise RateSyntaxError(f"unexpected character {src[start]!r}", start, src)
        start = m.start(m.lastgroup) if m.lastgroup else pos
        if m.group("bad"):
            raise RateSyntaxError("decimal literals are not allowed; write p/q", m.start("num"), src)
        if m.group("num"):
            toks.append(("num", m.group("num"), m.start("num")))
        elif m.group("name"):
            toks.append(("name", m.group("name"), m.start("name")))
        else:
            toks.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    toks.append(("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.k = 0

    def peek(self):
        return self.toks[self.k]

    def take(self, value: str | None = None, kind: str | None = None):
        tok = self.toks[self.k]
        if (value is not None and tok[1] != value) or (kind is not None and tok[0] != kind):
            want = value if value is not None else kind
            got = tok[1] or "end of input"
            raise RateSyntaxError(f"expected {want!r}, got {got!r}", tok[2], self.src)
        self.k += 1
        return tok

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[1] == "*":
            self.take()
            node = BinOp("*", node, self.factor())
        return node

    def factor(self) -> Node:
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            if "/" in val and int(val.split("/")[1]) == 0:
                raise RateSyntaxError("zero denominator", pos, self.src)
            return Const(Fraction(val))
        if kind == "name" and val == "x":
            self.take()
            self.take("[")
            idx = self.take(kind="num")
            if "/" in idx[1]:
                raise RateSyntaxError("coordinate index must be an integer", idx[2], self.src)
            if int(idx[1]) < 1:
                raise RateSyntaxError("coordinates are 1-based", idx[2], self.src)
            self.take("]")
            return Coord(int(idx[1]))
        if kind == "name":
            if val not in ("min", "max", "ind"):
                raise RateSyntaxError(f"unknown function {val!r}", pos, self.src)
            self.take()
            self.take("(")
            left = self.expr()
            if val == "ind":
                cmp_tok = self.peek()
                if cmp_tok[1] not in _CMP:
                    raise RateSyntaxError("expected comparison operator", cmp_tok[2], self.src)
                self.take()
                right = self.expr()
                self.take(")")
                return Ind(cmp_tok[1], left, right)
            self.take(",")
            right = self.expr()
            self.take(")")
            return Call(val, left, right)
        if val == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        raise RateSyntaxError(f"unexpected {val or 'end of input'!r}", pos, self.src)


def parse_rate(src: str) -> Node:
    """Parse a rate expression into an AST (see the module docstring)."""
    p = _Parser(src)
    node = p.expr()
    tok = p.peek()
    if tok[0] != "end":
        raise RateSyntaxError(f"unexpected {tok[1]!r}", tok[2], src)
    return node


def pretty(node: Node) -> str:
    """Canonical fully parenthesized text; ``parse_rate(pretty(t)) == t``."""
    if isinstance(node, Const):
        return str(node.value)
    if isinstance(node, Coord):
        return f"x[{node.index}]"
    if isinstance(node, BinOp):
        return f"({pretty(node.left)} {node.op} {pretty(node.right)})"
    if isinstance(node, Call):
        return f"{node.fn}({pretty(node.left)}, {pretty(node.right)})"
    return f"ind({pretty(node.left)} {node.cmp} {pretty(node.right)})"


def evaluate(node: Node, x: Sequence[int]) -> Fraction:
    return node.eval(tuple(x))
