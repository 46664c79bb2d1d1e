"""Recursive-descent parser for the Spider SQL subset.

Produces a bound, canonical :class:`~sqlrobust.sql_ir.SqlQuery`. Every error
carries the character offset where parsing stopped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .errors import SqlBindError, SqlSyntaxError, SqlUnsupportedError, ValidationError
from .schema import DatabaseSchema
from .sql_ir import (
    AGGREGATORS,
    ARITH_OPS,
    ColumnRef,
    Condition,
    ConditionTree,
    Literal,
    OrderBy,
    SetOp,
    SqlQuery,
    canonicalize,
)

KEYWORDS = frozenset(
    """select from where group by having order limit intersect union except join on as
    and or not between like in distinct asc desc""".split()
)
CLAUSE_END = frozenset({"where", "group", "having", "order", "limit", "intersect", "union", "except"})
UNSUPPORTED_WORDS = frozenset(
    """with over partition case when exists is null left right inner outer cross full
    natural using window cast""".split()
)
_SET_KINDS = ("intersect", "union", "except")

_LEX = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)
  | (?P<str>'(?:[^']|'')*'|"(?:[^"]|"")*")
  | (?P<bq>`[^`]*`)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>!=|<>|>=|<=|[=<>+\-*/(),.;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # word, num, str, op, eof
    value: str  # lowercased for words
    pos: int
    raw: str = ""


def tokenize_sql(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _LEX.match(text, pos)
        if not m:
            ch = text[pos]
            if ch in "'\"`":
                raise SqlSyntaxError(f"unterminated quote {ch}", pos)
            raise SqlSyntaxError(f"unexpected character {ch!r}", pos)
        kind = m.lastgroup
        raw = m.group(0)
        if kind == "word":
            toks.append(_Tok("word", raw.lower(), pos, raw))
        elif kind == "bq":
            toks.append(_Tok("word", raw[1:-1].lower(), pos, raw[1:-1]))
        elif kind == "str":
            q = raw[0]
            toks.append(_Tok("str", raw[1:-1].replace(q + q, q), pos, raw))
        elif kind == "num":
            toks.append(_Tok("num", raw, pos, raw))
        elif kind == "op":
            toks.append(_Tok("op", "!=" if raw == "<>" else raw, pos, raw))
        pos = m.end()
    while toks and toks[-1].kind == "op" and toks[-1].value == ";":
        toks.pop()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Scope:
    """Alias and table bindings of one SELECT block."""

    def __init__(self, schema: DatabaseSchema):
        self.schema = schema
        self.aliases: dict[str, int] = {}
        self.tables: list[int] = []


class _Parser:
    def __init__(self, text: str, schema: DatabaseSchema):
        self.text = text
        self.schema = schema
        self.toks = tokenize_sql(text)
        self.i = 0

    # -- token helpers ---------------------------------------------------
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *values: str) -> bool:
        t = self.tok
        return t.kind in ("word", "op") and t.value in values

    def is_kw(self, t: _Tok, *values) -> bool:
        return t.kind == "word" and t.value in values

    def advance(self) -> _Tok:
        t = self.tok
        self.i += 1
        return t

    def expect(self, value: str) -> _Tok:
        if not self.at(value):
            self.fail(f"expected {value.upper()!r}")
        return self.advance()

    def fail(self, message, tok: _Tok | None = None):
        tok = tok or self.tok
        got = "end of input" if tok.kind == "eof" else repr(tok.raw or tok.value)
        raise SqlSyntaxError(f"{message}, got {got}", tok.pos)

    def check_supported(self):
        t = self.tok
        if t.kind == "word" and t.value in UNSUPPORTED_WORDS:
            raise SqlUnsupportedError(f"unsupported construct {t.raw.upper()}", t.pos)

    # -- queries ---------------------------------------------------------
    def parse(self) -> SqlQuery:
        q = self.query()
        if self.tok.kind != "eof":
            self.check_supported()
            self.fail("unexpected trailing input")
        return q

    def query(self) -> SqlQuery:
        start = self.tok
        if self.is_kw(start, "with"):
            raise SqlUnsupportedError("unsupported construct WITH", start.pos)
        q = self.select_block()
        if self.is_kw(self.tok, *_SET_KINDS):
            kind = self.advance().value
            rhs = self.select_block()
            if self.is_kw(self.tok, *_SET_KINDS):
                raise SqlUnsupportedError("set-operation chains longer than one", self.tok.pos)
            q = replace(q, set_op=SetOp(kind, rhs))
        return q

    def _find_from(self) -> int:
        depth = 0
        for j in range(self.i, len(self.toks)):
            t = self.toks[j]
            if t.kind == "op" and t.value == "(":
                depth += 1
            elif t.kind == "op" and t.value == ")":
                depth -= 1
                if depth < 0:
                    break
            elif depth == 0 and t.kind == "word" and t.value == "from":
                return j
            elif depth == 0 and t.kind == "word" and t.value in CLAUSE_END:
                break
            elif t.kind == "eof":
                break
        self.fail("expected FROM clause", self.toks[j])

    def select_block(self) -> SqlQuery:
        self.expect("select")
        select_start = self.i
        from_at = self._find_from()
        scope = _Scope(self.schema)
        self.i = from_at + 1
        joins = self.from_clause(scope)
        after_from = self.i

        self.i = select_start
        distinct = False
        if self.at("distinct"):
            self.advance()
            distinct = True
        items = [self.val_unit(scope, in_select=True)]
        while self.at(","):
            self.advance()
            items.append(self.val_unit(scope, in_select=True))
        if self.i != from_at:
            self.check_supported()
            self.fail("expected ',' or FROM")
        self.i = after_from

        where = group_by = having = order_by = limit = None
        if self.at("where"):
            self.advance()
            where = self.condition_tree(scope)
        if self.at("group"):
            self.advance()
            self.expect("by")
            group_by = [self.val_unit(scope)]
            while self.at(","):
                self.advance()
                group_by.append(self.val_unit(scope))
        if self.at("having"):
            self.advance()
            having = self.condition_tree(scope)
        if self.at("order"):
            order_by = self.order_clause(scope)
        if self.at("limit"):
            self.advance()
            t = self.tok
            if t.kind != "num" or not t.value.isdigit():
                self.fail("expected integer after LIMIT")
            self.advance()
            limit = int(t.value)
        self.check_supported()
        try:
            return SqlQuery(
                select=tuple(items),
                from_tables=tuple(scope.tables),
                distinct=distinct,
                joins=tuple(joins),
                where=where,
                group_by=tuple(group_by or ()),
                having=having,
                order_by=order_by,
                limit=limit,
            )
        except ValidationError as exc:
            raise SqlUnsupportedError(str(exc), self.tok.pos) from None

    def from_clause(self, scope: _Scope) -> list[Condition]:
        joins: list[Condition] = []
        self.table_ref(scope)
        while True:
            self.check_supported()
            if self.at(",") or self.at("join"):
                self.advance()
                self.table_ref(scope)
            elif self.at("on"):
                self.advance()
                joins.append(self.condition(scope))
                while self.at("and"):
                    self.advance()
                    joins.append(self.condition(scope))
            else:
                break
        return joins

    def table_ref(self, scope: _Scope):
        t = self.tok
        if t.kind == "op" and t.value == "(":
            raise SqlUnsupportedError("subquery in FROM", t.pos)
        if t.kind != "word" or t.value in KEYWORDS:
            self.check_supported()
            self.fail("expected table name")
        tid = self.schema.table_id(t.value)
        if tid is None:
            raise SqlBindError(f"unknown table {t.raw!r}", t.raw, t.pos)
        self.advance()
        scope.tables.append(tid)
        scope.aliases.setdefault(t.value, tid)
        if self.at("as"):
            self.advance()
            a = self.tok
            if a.kind != "word" or a.value in KEYWORDS:
                self.fail("expected alias after AS")
            self.advance()
            scope.aliases[a.value] = tid
        elif self.tok.kind == "word" and self.tok.value not in KEYWORDS and self.tok.value not in UNSUPPORTED_WORDS:
            scope.aliases[self.advance().value] = tid

    def order_clause(self, scope: _Scope) -> OrderBy:
        self.advance()
        self.expect("by")
        cols, dirs = [], []
        while True:
            cols.append(self.val_unit(scope))
            if self.at("asc", "desc"):
                dirs.append((self.advance()))
            if not self.at(","):
                break
            self.advance()
        kinds = {d.value for d in dirs}
        if len(kinds) > 1:
            raise SqlUnsupportedError("mixed ORDER BY directions", dirs[-1].pos)
        return OrderBy(tuple(cols), kinds.pop() if kinds else "asc")

    # -- conditions --------------------------------------------------------
    def condition_tree(self, scope: _Scope) -> ConditionTree:
        conds = [self.condition(scope)]
        conns = []
        while self.at("and", "or"):
            conns.append(self.advance().value)
            conds.append(self.condition(scope))
        return ConditionTree(tuple(conds), tuple(conns))

    def condition(self, scope: _Scope) -> Condition:
        t = self.tok
        if t.kind == "op" and t.value == "(":
            raise SqlUnsupportedError("parenthesized condition groups", t.pos)
        if self.is_kw(t, "not"):
            raise SqlUnsupportedError("NOT before a condition", t.pos)
        left = self.val_unit(scope)
        self.check_supported()
        negated = False
        if self.at("not"):
            not_tok = self.advance()
            if self.at("like"):
                self.advance()
                return self._build(Condition, left, "not like", self.value(scope), pos=not_tok.pos)
            if self.at("in"):
                self.advance()
                return self._build(Condition, left, "not in", self.value(scope), pos=not_tok.pos)
            if self.at("between"):
                negated = True
            else:
                self.fail("expected LIKE, IN or BETWEEN after NOT")
        op_tok = self.tok
        if self.at("between"):
            self.advance()
            lo = self.literal()
            self.expect("and")
            hi = self.literal()
            return self._build(Condition, left, "between", (lo, hi), negated, pos=op_tok.pos)
        if self.at("like", "in"):
            self.advance()
            return self._build(Condition, left, op_tok.value, self.value(scope), pos=op_tok.pos)
        if self.at("=", "!=", ">", "<", ">=", "<="):
            self.advance()
            return self._build(Condition, left, op_tok.value, self.value(scope), pos=op_tok.pos)
        self.fail("expected comparison operator")

    def _build(self, cls, *args, pos):
        try:
            return cls(*args)
        except ValidationError as exc:
            raise SqlUnsupportedError(str(exc), pos) from None

    def literal(self) -> Literal:
        t = self.tok
        if t.kind == "str":
            self.advance()
            return Literal("str", t.value)
        if t.kind == "op" and t.value == "-" and self.peek().kind == "num":
            self.advance()
            return Literal("num", "-" + self.advance().value)
        if t.kind == "num":
            self.advance()
            return Literal("num", t.value)
        self.fail("expected literal")

    def value(self, scope: _Scope):
        t = self.tok
        if t.kind == "op" and t.value == "(":
            if self.is_kw(self.peek(), "select"):
                self.advance()
                sub = self.query()
                self.expect(")")
                return sub
            raise SqlUnsupportedError("parenthesized value lists", t.pos)
        if t.kind in ("str", "num") or (t.kind == "op" and t.value == "-"):
            return self.literal()
        return self.val_unit(scope)

    # -- column units ------------------------------------------------------
    def val_unit(self, scope: _Scope, in_select: bool = False) -> ColumnRef:
        first = self.col_unit(scope)
        if self.tok.kind == "op" and self.tok.value in ARITH_OPS:
            op = self.advance().value
            second = self.col_unit(scope)
            first = ColumnRef(first.column_id, first.agg, first.distinct, (op, second))
        if self.at("as") and in_select:
            raise SqlUnsupportedError("column aliases", self.tok.pos)
        return first

    def col_unit(self, scope: _Scope) -> ColumnRef:
        t = self.tok
        if t.kind == "op" and t.value == "(":
            self.advance()
            inner = self.col_unit(scope)
            self.expect(")")
            return inner
        if t.kind == "word" and self.peek().kind == "op" and self.peek().value == "(":
            if t.value not in AGGREGATORS or t.value == "none":
                raise SqlUnsupportedError(f"function {t.raw}()", t.pos)
            self.advance()
            self.advance()
            distinct = False
            if self.at("distinct"):
                self.advance()
                distinct = True
            if self.tok.kind == "op" and self.tok.value == "(":
                raise SqlUnsupportedError("aggregate over an expression", self.tok.pos)
            cid = self.column(scope)
            if self.tok.kind == "op" and self.tok.value in ARITH_OPS:
                raise SqlUnsupportedError("aggregate over an expression", self.tok.pos)
            self.expect(")")
            if self.schema.columns[cid].is_star and t.value != "count":
                raise SqlUnsupportedError(f"{t.value}(*)", t.pos)
            return ColumnRef(cid, t.value, distinct)
        if self.at("distinct"):
            raise SqlUnsupportedError("DISTINCT outside an aggregate or SELECT head", t.pos)
        return ColumnRef(self.column(scope))

    def column(self, scope: _Scope) -> int:
        t = self.tok
        if t.kind == "op" and t.value == "*":
            self.advance()
            return self.schema.star_id
        if t.kind != "word" or t.value in KEYWORDS:
            self.check_supported()
            self.fail("expected column")
        self.advance()
        if self.tok.kind == "op" and self.tok.value == ".":
            self.advance()
            c = self.tok
            if c.kind == "op" and c.value == "*":
                self.advance()
                return self.schema.star_id
            if c.kind != "word":
                self.fail("expected column after '.'")
            self.advance()
            tid = scope.aliases.get(t.value)
            if tid is None:
                tid = self.schema.table_id(t.value)
            if tid is None:
                raise SqlBindError(f"unknown table or alias {t.raw!r}", t.raw, t.pos)
            cid = self.schema.column_id(tid, c.value)
            if cid is None:
                raise SqlBindError(f"unknown column {t.raw}.{c.raw}", f"{t.raw}.{c.raw}", c.pos)
            return cid
        found = {}
        for tid in scope.tables:
            cid = self.schema.column_id(tid, t.value)
            if cid is not None:
                found.setdefault(cid, tid)
        if not found:
            if t.value in UNSUPPORTED_WORDS:
                raise SqlUnsupportedError(f"unsupported construct {t.raw.upper()}", t.pos)
            raise SqlBindError(f"unknown column {t.raw!r}", t.raw, t.pos)
        if len(found) > 1:
            raise SqlBindError(f"ambiguous column {t.raw!r}", t.raw, t.pos)
        return next(iter(found))


def parse_sql(text: str, schema: DatabaseSchema) -> SqlQuery:
    """Parse ``text`` against ``schema`` and return the canonical IR."""
    return canonicalize(_Parser(text, schema).parse())
