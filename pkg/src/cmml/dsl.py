"""Textual schema format (.cmml): parser producing an EerSchema and a
canonical pretty-printer.

Top-level declarations are entity / relationship / generalization / task;
`#` starts a line comment. Embedded expressions (derivations, applicability
and membership predicates) use the expression language from `cmml.expr`.
Parsing recovers at declaration boundaries so one bad declaration does not
hide diagnostics in the rest of the file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import eer
from . import expr as ex
from .diagnostics import Report

KINDS = set(eer.ATTRIBUTE_KINDS)
_DECL_KEYWORDS = ("entity", "relationship", "generalization", "task")


@dataclass(frozen=True)
class SchemaSource:
    text: str
    origin: str = "<inline>"


_LEX_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<comment>\#[^\n]*)
    | (?P<number>\d+(\.\d+)?([eE][+-]?\d+)?)
    | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<string>"[^"\n]*")
    | (?P<op>--|<=|>=|!=|[{}(),.:=<>+\-*/])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int
    start: int
    end: int


class _ParseAbort(Exception):
    """Raised to unwind to the nearest declaration boundary."""


def _lex(source: SchemaSource, rep: Report) -> list[_Tok]:
    text = source.text
    toks: list[_Tok] = []
    line, col, i = 1, 1, 0
    while i < len(text):
        m = _LEX_RE.match(text, i)
        if not m:
            rep.error("lex", f"unexpected character {text[i]!r}", f"{source.origin}:{line}:{col}")
            i += 1
            col += 1
            continue
        lexeme = m.group(0)
        if m.lastgroup not in ("ws", "comment"):
            toks.append(_Tok(m.lastgroup, lexeme, line, col, i, m.end()))
        nl = lexeme.count("\n")
        if nl:
            line += nl
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        i = m.end()
    toks.append(_Tok("eof", "", line, col, len(text), len(text)))
    return toks


class _SchemaParser:
    def __init__(self, source: SchemaSource, rep: Report):
        self.source = source
        self.rep = rep
        self.toks = _lex(source, rep)
        self.pos = 0

    # -- token plumbing ------------------------------------------------------

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def loc(self, t: _Tok) -> str:
        return f"{self.source.origin}:{t.line}:{t.col}"

    def fail(self, message: str, t: _Tok | None = None):
        t = t or self.peek()
        self.rep.error("parse", message, self.loc(t))
        raise _ParseAbort()

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text:
            self.fail(f"expected {text!r}, got {t.text or 'end of file'!r}")
        return self.next()

    def ident(self, what: str) -> str:
        t = self.peek()
        if t.kind != "ident":
            self.fail(f"expected {what}, got {t.text or 'end of file'!r}")
        return self.next().text

    def _recover(self) -> None:
        """Skip to the next top-level declaration keyword, balancing braces."""
        depth = 0
        while True:
            t = self.peek()
            if t.kind == "eof":
                return
            if t.text == "{":
                depth += 1
            elif t.text == "}":
                if depth == 0:
                    self.next()
                    return
                depth -= 1
            elif depth == 0 and t.text in _DECL_KEYWORDS:
                return
            self.next()

    # -- embedded expressions --------------------------------------------------

    def _parse_paren_expr(self, what: str) -> ex.Expr:
        open_tok = self.expect("(")
        depth = 1
        start = self.peek().start
        while depth > 0:
            t = self.next()
            if t.kind == "eof":
                self.fail(f"unterminated {what} expression", open_tok)
            if t.text == "(":
                depth += 1
            elif t.text == ")":
                depth -= 1
                close = t
        return self._parse_expr_slice(start, close.start, open_tok)

    def _parse_trailing_expr(self, what_stops: tuple[str, ...]) -> ex.Expr:
        """Parse an expression running until a depth-0 stop keyword or '}'."""
        start_tok = self.peek()
        depth = 0
        end = start_tok.start
        while True:
            t = self.peek()
            if t.kind == "eof":
                break
            if depth == 0 and (t.text in what_stops or t.text == "}"):
                break
            if t.text == "(":
                depth += 1
            elif t.text == ")":
                depth -= 1
            end = t.end
            self.next()
        return self._parse_expr_slice(start_tok.start, end, start_tok)

    def _parse_expr_slice(self, start: int, end: int, at: _Tok) -> ex.Expr:
        text = self.source.text[start:end]
        try:
            return ex.parse_expr(text)
        except ex.ExprSyntaxError as err:
            self.fail(f"bad expression: {err}", at)

    # -- declarations ----------------------------------------------------------

    def parse(self) -> eer.EerSchema:
        entities: list[eer.EntityType] = []
        relationships: list[eer.Relationship] = []
        generalizations: list[eer.Generalization] = []
        tasks: list[eer.TaskDecl] = []
        while self.peek().kind != "eof":
            t = self.peek()
            try:
                if t.text == "entity":
                    entities.append(self._entity())
                elif t.text == "relationship":
                    relationships.append(self._relationship())
                elif t.text == "generalization":
                    generalizations.append(self._generalization())
                elif t.text == "task":
                    tasks.append(self._task())
                else:
                    self.fail(f"expected a declaration, got {t.text!r}")
            except _ParseAbort:
                self._recover()
        return eer.EerSchema(
            entities=tuple(entities),
            relationships=tuple(relationships),
            generalizations=tuple(generalizations),
            tasks=tuple(tasks),
        )

    def _attr_block(self) -> tuple[eer.Attribute, ...]:
        self.expect("{")
        attrs: list[eer.Attribute] = []
        while not self.at("}"):
            attrs.append(self._attr())
        self.expect("}")
        return tuple(attrs)

    def _attr(self) -> eer.Attribute:
        t = self.peek()
        is_key = derived = False
        if t.text == "key":
            self.next()
            is_key = True
        elif t.text == "derived":
            self.next()
            self.expect("attr")
            derived = True
        elif t.text == "attr":
            self.next()
        else:
            self.fail(f"expected 'key', 'attr' or 'derived attr', got {t.text or 'end of file'!r}")
        name = self.ident("attribute name")
        self.expect(":")
        kind_tok = self.peek()
        kind = self.ident("attribute kind")
        if kind not in KINDS:
            self.fail(f"unknown attribute kind {kind!r}", kind_tok)
        optional = False
        applicable_when = None
        derivation = None
        if self.at("optional"):
            self.next()
            optional = True
        if self.at("applicable_when"):
            self.next()
            applicable_when = self._parse_paren_expr("applicable_when")
        if self.at("="):
            eq = self.next()
            if not derived:
                self.fail("only 'derived attr' may carry '= expression'", eq)
            derivation = self._parse_trailing_expr(("key", "attr", "derived"))
        if derived and derivation is None:
            self.fail(f"derived attribute {name!r} needs '= expression'")
        return eer.Attribute(name, kind, is_key=is_key, optional=optional,
                             applicable_when=applicable_when, derivation=derivation)

    def _entity(self) -> eer.EntityType:
        self.expect("entity")
        name_tok = self.peek()
        name = self.ident("entity name")
        attrs = self._attr_block()
        if not any(a.is_key for a in attrs):
            self.rep.error("missing-key", f"entity {name} lacks a key", self.loc(name_tok))
        return eer.EntityType(name, attrs)

    def _card(self) -> tuple[int, str]:
        self.expect("(")
        lo = self.peek()
        if lo.text not in ("0", "1"):
            self.fail("minimum cardinality must be 0 or 1")
        self.next()
        self.expect(",")
        hi = self.peek()
        if hi.text not in ("1", "N"):
            self.fail("maximum cardinality must be 1 or N")
        self.next()
        self.expect(")")
        return int(lo.text), hi.text

    def _relationship(self) -> eer.Relationship:
        self.expect("relationship")
        name = self.ident("relationship name")
        self.expect("{")
        left_entity = self.ident("entity name")
        left_min, left_max = self._card()
        self.expect("--")
        right_min, right_max = self._card()
        right_entity = self.ident("entity name")
        self.expect("via")
        fks = [self.ident("foreign-key column")]
        if self.at(","):
            self.next()
            fks.append(self.ident("foreign-key column"))
        rel_attrs: tuple[eer.Attribute, ...] = ()
        if self.at("{"):
            rel_attrs = self._attr_block()
        self.expect("}")
        return eer.Relationship(
            name=name,
            left=eer.RelEnd(left_entity, left_min, left_max),
            right=eer.RelEnd(right_entity, right_min, right_max),
            fk_columns=tuple(fks),
            rel_attributes=rel_attrs,
        )

    def _generalization(self) -> eer.Generalization:
        self.expect("generalization")
        name = self.ident("generalization name")
        self.expect("of")
        supertype = self.ident("supertype entity")
        mode_tok = self.peek()
        mode = self.ident("'disjoint' or 'overlap'")
        if mode not in ("disjoint", "overlap"):
            self.fail(f"expected 'disjoint' or 'overlap', got {mode!r}", mode_tok)
        self.expect("{")
        subtypes: list[eer.Subtype] = []
        while self.at("subtype"):
            self.next()
            st_name = self.ident("subtype name")
            membership = None
            if self.at("when"):
                self.next()
                membership = self._parse_paren_expr("when")
            elif self.at("from"):
                self.next()
                self.expect("table")
            else:
                self.fail("subtype needs 'when (expr)' or 'from table'")
            st_attrs: tuple[eer.Attribute, ...] = ()
            if self.at("{"):
                st_attrs = self._attr_block()
            subtypes.append(eer.Subtype(st_name, membership, st_attrs))
        self.expect("}")
        return eer.Generalization(name, supertype, mode, tuple(subtypes))

    def _task(self) -> eer.TaskDecl:
        self.expect("task")
        name = self.ident("task name")
        self.expect("{")
        self.expect("target")
        entity = self.ident("target entity")
        self.expect(".")
        attr = self.ident("target attribute")
        split_by = None
        agg_set = eer.AGG_SET_ALL
        top_k = 20
        impute = "mean_mode"
        while not self.at("}"):
            t = self.peek()
            if t.text == "split_by":
                self.next()
                split_by = self.ident("generalization name")
            elif t.text == "agg":
                self.next()
                aggs = [self.ident("aggregate name")]
                while self.at(","):
                    self.next()
                    aggs.append(self.ident("aggregate name"))
                for a in aggs:
                    if a not in eer.AGG_SET_ALL:
                        self.fail(f"unknown aggregate {a!r}", t)
                agg_set = tuple(aggs)
            elif t.text == "top_k":
                self.next()
                n = self.peek()
                if n.kind != "number" or "." in n.text:
                    self.fail("top_k needs a positive integer")
                self.next()
                top_k = int(n.text)
            elif t.text == "impute":
                self.next()
                m = self.ident("'mean_mode' or 'none'")
                if m not in ("mean_mode", "none"):
                    self.fail(f"impute must be 'mean_mode' or 'none', got {m!r}", t)
                impute = m
            else:
                self.fail(f"unexpected {t.text!r} in task body")
        self.expect("}")
        return eer.TaskDecl(name, entity, attr, split_by=split_by, agg_set=agg_set,
                            top_k=top_k, impute=impute)


def parse_schema(source: SchemaSource) -> tuple[eer.EerSchema, Report]:
    """Parse schema text. Diagnostics carry file:line:column; the schema holds
    every declaration that parsed, in source order."""
    rep = Report()
    schema = _SchemaParser(source, rep).parse()
    return schema, rep


def parse_schema_file(path: str) -> tuple[eer.EerSchema, Report]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_schema(SchemaSource(fh.read(), origin=path))


# ---------------------------------------------------------------------------
# Pretty printer


def print_schema(schema: eer.EerSchema) -> SchemaSource:
    """Canonical text; parse_schema(print_schema(s)) is structurally equal to s."""
    out: list[str] = []
    for ent in schema.entities:
        out.append(f"entity {ent.name} {{")
        for a in ent.attributes:
            out.append(f"  {_attr_line(a)}")
        out.append("}")
        out.append("")
    for rel in schema.relationships:
        line = (
            f"relationship {rel.name} {{ {rel.left.entity} ({rel.left.min},{rel.left.max})"
            f" -- ({rel.right.min},{rel.right.max}) {rel.right.entity} via {', '.join(rel.fk_columns)}"
        )
        if rel.rel_attributes:
            out.append(line + " {")
            for a in rel.rel_attributes:
                out.append(f"  {_attr_line(a)}")
            out.append("} }")
        else:
            out.append(line + " }")
        out.append("")
    for gen in schema.generalizations:
        out.append(f"generalization {gen.name} of {gen.supertype} {gen.mode} {{")
        for st in gen.subtypes:
            head = f"  subtype {st.name} "
            head += "from table" if st.from_table else f"when ({ex.pretty_print(st.membership)})"
            if st.attributes:
                out.append(head + " {")
                for a in st.attributes:
                    out.append(f"    {_attr_line(a)}")
                out.append("  }")
            else:
                out.append(head)
        out.append("}")
        out.append("")
    for task in schema.tasks:
        out.append(f"task {task.name} {{")
        out.append(f"  target {task.target_entity}.{task.target_attr}")
        if task.split_by:
            out.append(f"  split_by {task.split_by}")
        if tuple(task.agg_set) != eer.AGG_SET_ALL:
            out.append(f"  agg {', '.join(task.agg_set)}")
        if task.top_k != 20:
            out.append(f"  top_k {task.top_k}")
        if task.impute != "mean_mode":
            out.append(f"  impute {task.impute}")
        out.append("}")
        out.append("")
    text = "\n".join(out).rstrip("\n")
    return SchemaSource(text + "\n" if text else "", origin="<printed>")


def _attr_line(a: eer.Attribute) -> str:
    head = "key" if a.is_key else ("derived attr" if a.is_derived else "attr")
    line = f"{head} {a.name}: {a.kind}"
    if a.optional:
        line += " optional"
    if a.applicable_when is not None:
        line += f" applicable_when ({ex.pretty_print(a.applicable_when)})"
    if a.derivation is not None:
        line += f" = {ex.pretty_print(a.derivation)}"
    return line
