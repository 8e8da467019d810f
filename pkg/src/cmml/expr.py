"""Expression language for derived attributes, applicability predicates and
subtype membership predicates.

Grammar (lowest to highest precedence):

    or_expr    := and_expr ("or" and_expr)*
    and_expr   := cmp_expr ("and" cmp_expr)*
    cmp_expr   := add_expr (("<"|"<="|"="|"!="|">="|">") add_expr)?
    add_expr   := mul_expr (("+"|"-") mul_expr)*
    mul_expr   := unary (("*"|"/") unary)*
    unary      := "-" unary | primary
    primary    := NUMBER | STRING | "true" | "false" | IDENT
                | AGG "(" IDENT ["." IDENT] ")"
                | FN "(" args ")" | "(" or_expr ")"

Aggregate heads are count/sum/mean/min/max over RELATIONSHIP.attribute
(count takes the bare relationship). Plain functions are years_between,
days_between, today, abs, if. String literals shaped YYYY-MM-DD parse as
date literals.
"""

from __future__ import annotations

import datetime as _dt
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .values import UNKNOWN, Null, is_null

AGG_KINDS = ("count", "sum", "mean", "min", "max")
FN_NAMES = ("years_between", "days_between", "today", "abs", "if")
CMP_OPS = ("<", "<=", "=", "!=", ">=", ">")
DAYS_PER_YEAR = 365.2425

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class ExprTypeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Literal(Expr):
    value: object  # float | str | bool | datetime.date


@dataclass(frozen=True)
class AttrRef(Expr):
    name: str


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # only "-"
    operand: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    args: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class Aggregate(Expr):
    kind: str  # count | sum | mean | min | max
    relationship: str
    attribute: Optional[str] = None  # None only for count


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<number>\d+(\.\d+)?([eE][+-]?\d+)?)
    | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<string>"[^"\n]*")
    | (?P<op><=|>=|!=|[<>=+\-*/(),.])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[i]!r}", line, col)
        lexeme = m.group(0)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, lexeme, line, col))
        nl = lexeme.count("\n")
        if nl:
            line += nl
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        i = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text:
            raise ExprSyntaxError(f"expected {text!r}, got {t.text or 'end of input'!r}", t.line, t.col)
        return self.next()

    def parse(self) -> Expr:
        e = self.or_expr()
        t = self.peek()
        if t.kind != "eof":
            raise ExprSyntaxError(f"unexpected trailing input {t.text!r}", t.line, t.col)
        return e

    def or_expr(self) -> Expr:
        e = self.and_expr()
        while self.peek().text == "or":
            self.next()
            e = Binary("or", e, self.and_expr())
        return e

    def and_expr(self) -> Expr:
        e = self.cmp_expr()
        while self.peek().text == "and":
            self.next()
            e = Binary("and", e, self.cmp_expr())
        return e

    def cmp_expr(self) -> Expr:
        e = self.add_expr()
        if self.peek().text in CMP_OPS:
            op = self.next().text
            e = Binary(op, e, self.add_expr())
        return e

    def add_expr(self) -> Expr:
        e = self.mul_expr()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            e = Binary(op, e, self.mul_expr())
        return e

    def mul_expr(self) -> Expr:
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            e = Binary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.next()
            return Unary("-", self.unary())
        return self.primary()

    def primary(self) -> Expr:
        t = self.peek()
        if t.kind == "number":
            self.next()
            return Literal(float(t.text))
        if t.kind == "string":
            self.next()
            body = t.text[1:-1]
            if _DATE_RE.match(body):
                try:
                    return Literal(_dt.date.fromisoformat(body))
                except ValueError:
                    raise ExprSyntaxError(f"bad date literal {body!r}", t.line, t.col)
            return Literal(body)
        if t.text == "(":
            self.next()
            e = self.or_expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.next()
            if t.text == "true":
                return Literal(True)
            if t.text == "false":
                return Literal(False)
            if self.peek().text == "(":
                return self._call_or_agg(t)
            return AttrRef(t.text)
        raise ExprSyntaxError(f"expected expression, got {t.text or 'end of input'!r}", t.line, t.col)

    def _call_or_agg(self, head: _Tok) -> Expr:
        self.expect("(")
        if head.text in AGG_KINDS:
            rel = self.peek()
            if rel.kind != "ident":
                raise ExprSyntaxError(
                    f"{head.text}(...) takes RELATIONSHIP or RELATIONSHIP.attribute", rel.line, rel.col
                )
            self.next()
            attr = None
            if self.peek().text == ".":
                self.next()
                a = self.peek()
                if a.kind != "ident":
                    raise ExprSyntaxError("expected attribute name after '.'", a.line, a.col)
                self.next()
                attr = a.text
            self.expect(")")
            if head.text == "count":
                if attr is not None:
                    raise ExprSyntaxError("count(...) takes a bare relationship", head.line, head.col)
            elif attr is None:
                raise ExprSyntaxError(f"{head.text}(...) requires RELATIONSHIP.attribute", head.line, head.col)
            return Aggregate(head.text, rel.text, attr)
        if head.text in FN_NAMES:
            args: list[Expr] = []
            if self.peek().text != ")":
                args.append(self.or_expr())
                while self.peek().text == ",":
                    self.next()
                    args.append(self.or_expr())
            self.expect(")")
            return Call(head.text, tuple(args))
        raise ExprSyntaxError(f"unknown function {head.text!r}", head.line, head.col)


def parse_expr(text: str) -> Expr:
    """Parse an expression; raises ExprSyntaxError with line/column on failure."""
    return _Parser(_tokenize(text)).parse()


# ---------------------------------------------------------------------------
# Pretty printer

_PRECEDENCE = {"or": 1, "and": 2, "<": 3, "<=": 3, "=": 3, "!=": 3, ">=": 3, ">": 3,
               "+": 4, "-": 4, "*": 5, "/": 5}


def pretty_print(expr: Expr) -> str:
    return _pp(expr, 0)


def _pp(e: Expr, parent_prec: int) -> str:
    if isinstance(e, Literal):
        v = e.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return str(int(v)) if v == int(v) and abs(v) < 1e15 else repr(v)
        if isinstance(v, _dt.date):
            return f'"{v.isoformat()}"'
        return f'"{v}"'
    if isinstance(e, AttrRef):
        return e.name
    if isinstance(e, Unary):
        return "-" + _pp(e.operand, 6)
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(_pp(a, 0) for a in e.args)})"
    if isinstance(e, Aggregate):
        inner = e.relationship if e.attribute is None else f"{e.relationship}.{e.attribute}"
        return f"{e.kind}({inner})"
    if isinstance(e, Binary):
        prec = _PRECEDENCE[e.op]
        # left-associative: right child needs parens at equal precedence
        s = f"{_pp(e.lhs, prec)} {e.op} {_pp(e.rhs, prec + 1)}"
        return f"({s})" if prec < parent_prec else s
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# Type checking


@dataclass
class TypeEnv:
    """Attribute kinds of the owning entity plus, per reachable relationship,
    the attribute kinds of the related entity (for aggregates)."""

    attrs: dict[str, str]
    rels: dict[str, dict[str, str]] = field(default_factory=dict)


_EQ_KINDS = {"nominal", "text", "identifier", "string"}


def type_of(expr: Expr, env: TypeEnv) -> str:
    """Static kind of the expression: one of the attribute kinds or 'boolean'.

    Raises ExprTypeError naming the offending subexpression.
    """
    if isinstance(expr, Literal):
        v = expr.value
        if isinstance(v, bool):
            return "boolean"
        if isinstance(v, float):
            return "numeric"
        if isinstance(v, _dt.date):
            return "date"
        return "string"
    if isinstance(expr, AttrRef):
        kind = env.attrs.get(expr.name)
        if kind is None:
            raise ExprTypeError(f"unknown attribute {expr.name!r}")
        return kind
    if isinstance(expr, Unary):
        k = type_of(expr.operand, env)
        if k != "numeric":
            raise ExprTypeError(f"unary '-' needs a numeric operand, got {k} in {pretty_print(expr)!r}")
        return "numeric"
    if isinstance(expr, Binary):
        lk = type_of(expr.lhs, env)
        rk = type_of(expr.rhs, env)
        op = expr.op
        if op in ("and", "or"):
            if lk != "boolean" or rk != "boolean":
                raise ExprTypeError(f"'{op}' needs boolean operands in {pretty_print(expr)!r}")
            return "boolean"
        if op in ("+", "-", "*", "/"):
            if lk != "numeric" or rk != "numeric":
                raise ExprTypeError(f"'{op}' needs numeric operands in {pretty_print(expr)!r}")
            return "numeric"
        # comparisons
        if op in ("=", "!="):
            same = lk == rk or (lk in _EQ_KINDS and rk in _EQ_KINDS)
            if not same:
                raise ExprTypeError(f"'{op}' over mismatched kinds {lk}/{rk} in {pretty_print(expr)!r}")
            return "boolean"
        if lk not in ("numeric", "date") or rk != lk:
            raise ExprTypeError(f"'{op}' needs two numerics or two dates in {pretty_print(expr)!r}")
        return "boolean"
    if isinstance(expr, Call):
        return _type_of_call(expr, env)
    if isinstance(expr, Aggregate):
        rel_attrs = env.rels.get(expr.relationship)
        if rel_attrs is None:
            raise ExprTypeError(f"unknown relationship {expr.relationship!r} in {pretty_print(expr)!r}")
        if expr.kind == "count":
            return "numeric"
        kind = rel_attrs.get(expr.attribute)
        if kind is None:
            raise ExprTypeError(
                f"unknown attribute {expr.attribute!r} on relationship {expr.relationship!r}"
            )
        if kind == "date":
            if expr.kind in ("min", "max"):
                return "date"
            raise ExprTypeError(f"{expr.kind} over a date attribute in {pretty_print(expr)!r}")
        if kind != "numeric":
            raise ExprTypeError(f"{expr.kind} needs a numeric or date attribute, got {kind}")
        return "numeric"
    raise TypeError(f"not an Expr: {expr!r}")


def _type_of_call(expr: Call, env: TypeEnv) -> str:
    fn, args = expr.fn, expr.args

    def arity(n: int):
        if len(args) != n:
            raise ExprTypeError(f"{fn} takes {n} argument(s), got {len(args)}")

    if fn == "today":
        arity(0)
        return "date"
    if fn in ("years_between", "days_between"):
        arity(2)
        for a in args:
            if type_of(a, env) != "date":
                raise ExprTypeError(f"{fn} needs date arguments in {pretty_print(expr)!r}")
        return "numeric"
    if fn == "abs":
        arity(1)
        if type_of(args[0], env) != "numeric":
            raise ExprTypeError(f"abs needs a numeric argument in {pretty_print(expr)!r}")
        return "numeric"
    if fn == "if":
        arity(3)
        if type_of(args[0], env) != "boolean":
            raise ExprTypeError(f"if condition must be boolean in {pretty_print(expr)!r}")
        tk = type_of(args[1], env)
        fk = type_of(args[2], env)
        if tk != fk:
            raise ExprTypeError(f"if branches disagree ({tk} vs {fk}) in {pretty_print(expr)!r}")
        return tk
    raise ExprTypeError(f"unknown function {fn!r}")


# ---------------------------------------------------------------------------
# Evaluation

RelatedRows = Callable[[str], Sequence[dict]]


def eval_expr(
    expr: Expr,
    row: dict,
    related: Optional[RelatedRows] = None,
    clock: Optional[_dt.date] = None,
    diagnostics: Optional[list[str]] = None,
):
    """Evaluate a type-checked expression over one row.

    Nulls propagate strictly (any null operand yields UNKNOWN), except count,
    which never sees nulls, and sum over an empty/all-null set, which is 0.
    Division by zero yields UNKNOWN plus a diagnostic. Pure given (row,
    related, clock).
    """
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, AttrRef):
        v = row.get(expr.name)
        return UNKNOWN if v is None else v
    if isinstance(expr, Unary):
        v = eval_expr(expr.operand, row, related, clock, diagnostics)
        return v if is_null(v) else -v
    if isinstance(expr, Binary):
        return _eval_binary(expr, row, related, clock, diagnostics)
    if isinstance(expr, Call):
        return _eval_call(expr, row, related, clock, diagnostics)
    if isinstance(expr, Aggregate):
        return _eval_aggregate(expr, row, related, diagnostics)
    raise TypeError(f"not an Expr: {expr!r}")


def _eval_binary(expr: Binary, row, related, clock, diagnostics):
    lhs = eval_expr(expr.lhs, row, related, clock, diagnostics)
    rhs = eval_expr(expr.rhs, row, related, clock, diagnostics)
    if is_null(lhs) or is_null(rhs):
        return UNKNOWN
    op = expr.op
    if op == "+":
        return lhs + rhs
    if op == "-":
        return lhs - rhs
    if op == "*":
        return lhs * rhs
    if op == "/":
        if rhs == 0:
            if diagnostics is not None:
                diagnostics.append(f"division by zero in {pretty_print(expr)!r}")
            return UNKNOWN
        return lhs / rhs
    if op == "and":
        return lhs and rhs
    if op == "or":
        return lhs or rhs
    if op == "<":
        return lhs < rhs
    if op == "<=":
        return lhs <= rhs
    if op == "=":
        return lhs == rhs
    if op == "!=":
        return lhs != rhs
    if op == ">=":
        return lhs >= rhs
    if op == ">":
        return lhs > rhs
    raise ValueError(f"bad operator {op!r}")


def _eval_call(expr: Call, row, related, clock, diagnostics):
    fn = expr.fn
    if fn == "today":
        if clock is None:
            raise ValueError("today() requires an injected clock date")
        return clock
    vals = [eval_expr(a, row, related, clock, diagnostics) for a in expr.args]
    if fn == "if":
        cond = vals[0]
        if is_null(cond):
            return UNKNOWN
        return vals[1] if cond else vals[2]
    if any(is_null(v) for v in vals):
        return UNKNOWN
    if fn == "years_between":
        return float(math.floor((vals[1] - vals[0]).days / DAYS_PER_YEAR))
    if fn == "days_between":
        return float((vals[1] - vals[0]).days)
    if fn == "abs":
        return abs(vals[0])
    raise ValueError(f"unknown function {fn!r}")


def _eval_aggregate(expr: Aggregate, row, related, diagnostics):
    if related is None:
        raise ValueError(f"aggregate {pretty_print(expr)!r} requires a related-rows provider")
    rows = related(expr.relationship)
    if expr.kind == "count":
        return float(len(rows))
    vals = [r.get(expr.attribute) for r in rows]
    vals = [v for v in vals if not is_null(v)]
    if expr.kind == "sum":
        return float(sum(vals))  # empty set -> 0
    if not vals:
        return UNKNOWN  # mean/min/max over an empty set
    if expr.kind == "mean":
        return float(sum(vals) / len(vals))
    if expr.kind == "min":
        return min(vals)
    if expr.kind == "max":
        return max(vals)
    raise ValueError(f"bad aggregate {expr.kind!r}")


def referenced_attrs(expr: Expr) -> set[str]:
    """Names of same-entity attributes the expression reads directly
    (aggregate targets live on related entities and are excluded)."""
    out: set[str] = set()
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, AttrRef):
            out.add(e.name)
        elif isinstance(e, Binary):
            stack.extend((e.lhs, e.rhs))
        elif isinstance(e, Unary):
            stack.append(e.operand)
        elif isinstance(e, Call):
            stack.extend(e.args)
    return out


def referenced_aggregates(expr: Expr) -> list[Aggregate]:
    out: list[Aggregate] = []
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Aggregate):
            out.append(e)
        elif isinstance(e, Binary):
            stack.extend((e.lhs, e.rhs))
        elif isinstance(e, Unary):
            stack.append(e.operand)
        elif isinstance(e, Call):
            stack.extend(e.args)
    return out
