"""Canonical IR for the Spider SQL subset, plus canonicalization and serialization.

Column references are bound to schema column ids, so alias names never reach
the IR. Literals are kept verbatim (metrics ignore them).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

from .errors import ValidationError
from .schema import DatabaseSchema

AGGREGATORS = ("none", "max", "min", "count", "sum", "avg")
ARITH_OPS = ("+", "-", "*", "/")
COMPARISON_OPS = ("=", "!=", ">", "<", ">=", "<=")
CONDITION_OPS = COMPARISON_OPS + ("between", "like", "not like", "in", "not in")
SUBQUERY_OPS = COMPARISON_OPS + ("in", "not in")
CONNECTORS = ("and", "or")
SET_OPS = ("intersect", "union", "except")
DIRECTIONS = ("asc", "desc")


@dataclass(frozen=True)
class ColumnRef:
    column_id: int
    agg: str = "none"
    distinct: bool = False
    arith: tuple[str, "ColumnRef"] | None = None

    def __post_init__(self):
        if self.agg not in AGGREGATORS:
            raise ValidationError(f"unknown aggregator {self.agg!r}")
        if self.distinct and self.agg == "none":
            raise ValidationError("DISTINCT inside a column unit needs an aggregator")
        if self.arith is not None:
            op, other = self.arith
            if op not in ARITH_OPS:
                raise ValidationError(f"unknown arithmetic operator {op!r}")
            if other.arith is not None:
                raise ValidationError("arithmetic chains longer than one operator are unsupported")


@dataclass(frozen=True)
class Literal:
    kind: str  # "str" | "num"
    value: str


@dataclass(frozen=True)
class Condition:
    left: ColumnRef
    op: str
    right: Union[Literal, ColumnRef, "SqlQuery", tuple[Literal, Literal]]
    negated: bool = False

    def __post_init__(self):
        if self.op not in CONDITION_OPS:
            raise ValidationError(f"unknown condition operator {self.op!r}")
        if self.op == "between":
            if not (isinstance(self.right, tuple) and len(self.right) == 2
                    and all(isinstance(x, Literal) for x in self.right)):
                raise ValidationError("BETWEEN needs exactly two literals")
        elif isinstance(self.right, tuple):
            raise ValidationError(f"{self.op} takes a single right operand")
        if isinstance(self.right, SqlQuery) and self.op not in SUBQUERY_OPS:
            raise ValidationError(f"subquery not allowed with {self.op}")
        if self.op in ("in", "not in") and not isinstance(self.right, SqlQuery):
            raise ValidationError(f"{self.op} needs a subquery")
        if self.negated and self.op != "between":
            raise ValidationError("only BETWEEN carries a separate NOT flag")


@dataclass(frozen=True)
class ConditionTree:
    conditions: tuple[Condition, ...]
    connectors: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.conditions:
            raise ValidationError("empty condition tree")
        if len(self.connectors) != len(self.conditions) - 1:
            raise ValidationError("connector count must be condition count - 1")
        if any(c not in CONNECTORS for c in self.connectors):
            raise ValidationError(f"bad connector in {self.connectors}")


@dataclass(frozen=True)
class OrderBy:
    columns: tuple[ColumnRef, ...]
    direction: str = "asc"

    def __post_init__(self):
        if not self.columns:
            raise ValidationError("ORDER BY without columns")
        if self.direction not in DIRECTIONS:
            raise ValidationError(f"bad ORDER BY direction {self.direction!r}")


@dataclass(frozen=True)
class SetOp:
    kind: str
    query: "SqlQuery"

    def __post_init__(self):
        if self.kind not in SET_OPS:
            raise ValidationError(f"unknown set operator {self.kind!r}")
        if self.query.set_op is not None:
            raise ValidationError("set-operation chains longer than one are unsupported")


@dataclass(frozen=True)
class SqlQuery:
    select: tuple[ColumnRef, ...]
    from_tables: tuple[int, ...]
    distinct: bool = False
    joins: tuple[Condition, ...] = ()
    where: ConditionTree | None = None
    group_by: tuple[ColumnRef, ...] = ()
    having: ConditionTree | None = None
    order_by: OrderBy | None = None
    limit: int | None = None
    set_op: SetOp | None = None

    def __post_init__(self):
        if not self.select:
            raise ValidationError("SELECT list is empty")
        if not self.from_tables:
            raise ValidationError("FROM clause is empty")
        if self.joins and len(self.from_tables) < 2:
            raise ValidationError("join conditions need at least two FROM tables")
        if self.limit is not None and self.limit < 0:
            raise ValidationError("LIMIT must be non-negative")


# --------------------------------------------------------------------------
# canonicalization


def _col_key(c: ColumnRef):
    return (c.column_id, c.agg, c.distinct, _col_key(c.arith[1]) if c.arith else (), c.arith[0] if c.arith else "")


def _canon_cond(c: Condition, join: bool = False) -> Condition:
    right = c.right
    if isinstance(right, SqlQuery):
        right = canonicalize(right)
    if join and c.op == "=" and isinstance(right, ColumnRef) and _col_key(right) < _col_key(c.left):
        return replace(c, left=right, right=c.left)
    if right is not c.right:
        return replace(c, right=right)
    return c


def _canon_tree(t: ConditionTree | None) -> ConditionTree | None:
    if t is None:
        return None
    return replace(t, conditions=tuple(_canon_cond(c) for c in t.conditions))


def _join_sort_key(c: Condition):
    r = c.right
    rk = _col_key(r) if isinstance(r, ColumnRef) else (repr(r),)
    return (_col_key(c.left), c.op, rk)


def canonicalize(q: SqlQuery) -> SqlQuery:
    """Order FROM tables and join conditions; recurse into subqueries. Idempotent."""
    joins = tuple(sorted((_canon_cond(c, join=True) for c in q.joins), key=_join_sort_key))
    set_op = replace(q.set_op, query=canonicalize(q.set_op.query)) if q.set_op else None
    return replace(
        q,
        from_tables=tuple(sorted(q.from_tables)),
        joins=joins,
        where=_canon_tree(q.where),
        having=_canon_tree(q.having),
        set_op=set_op,
    )


# --------------------------------------------------------------------------
# serialization


def _quote(lit: Literal) -> str:
    if lit.kind == "num":
        return lit.value
    return "'" + lit.value.replace("'", "''") + "'"


class _Writer:
    def __init__(self, q: SqlQuery, schema: DatabaseSchema):
        self.schema = schema
        self.q = q
        self.aliases: dict[int, str] = {}
        if len(q.from_tables) > 1:
            for i, tid in enumerate(q.from_tables):
                self.aliases.setdefault(tid, f"T{i + 1}")

    def column(self, c: ColumnRef) -> str:
        col = self.schema.columns[c.column_id]
        if col.is_star:
            name = "*"
        elif self.aliases:
            prefix = self.aliases.get(col.table_id) or self.schema.tables[col.table_id].name
            name = f"{prefix}.{col.name}"
        else:
            name = col.name
        if c.agg != "none":
            name = f"{c.agg}({'DISTINCT ' if c.distinct else ''}{name})"
        if c.arith:
            name = f"{name} {c.arith[0]} {self.column(c.arith[1])}"
        return name

    def operand(self, r) -> str:
        if isinstance(r, Literal):
            return _quote(r)
        if isinstance(r, ColumnRef):
            return self.column(r)
        if isinstance(r, SqlQuery):
            return f"({serialize(r, self.schema)})"
        raise TypeError(f"unexpected operand {r!r}")

    def condition(self, c: Condition) -> str:
        left = self.column(c.left)
        if c.op == "between":
            lo, hi = c.right
            neg = "NOT " if c.negated else ""
            return f"{left} {neg}BETWEEN {_quote(lo)} AND {_quote(hi)}"
        return f"{left} {c.op.upper()} {self.operand(c.right)}"

    def tree(self, t: ConditionTree) -> str:
        parts = [self.condition(t.conditions[0])]
        for conn, cond in zip(t.connectors, t.conditions[1:]):
            parts.append(f"{conn.upper()} {self.condition(cond)}")
        return " ".join(parts)

    def from_clause(self) -> str:
        q = self.q
        if not self.aliases:
            return self.schema.tables[q.from_tables[0]].name
        parts = [f"{self.schema.tables[tid].name} AS T{i + 1}" for i, tid in enumerate(q.from_tables)]
        text = " JOIN ".join(parts)
        if q.joins:
            text += " ON " + " AND ".join(self.condition(c) for c in q.joins)
        return text

    def write(self) -> str:
        q = self.q
        out = ["SELECT"]
        if q.distinct:
            out.append("DISTINCT")
        out.append(", ".join(self.column(c) for c in q.select))
        out += ["FROM", self.from_clause()]
        if q.where:
            out += ["WHERE", self.tree(q.where)]
        if q.group_by:
            out += ["GROUP BY", ", ".join(self.column(c) for c in q.group_by)]
        if q.having:
            out += ["HAVING", self.tree(q.having)]
        if q.order_by:
            out += ["ORDER BY", ", ".join(self.column(c) for c in q.order_by.columns)]
            if q.order_by.direction == "desc":
                out.append("DESC")
        if q.limit is not None:
            out += ["LIMIT", str(q.limit)]
        if q.set_op:
            out += [q.set_op.kind.upper(), serialize(q.set_op.query, self.schema)]
        return " ".join(out)


def serialize(q: SqlQuery, schema: DatabaseSchema) -> str:
    """Render ``q`` as SQL text; ``parse_sql(serialize(q))`` equals ``canonicalize(q)``."""
    return _Writer(canonicalize(q), schema).write()


def strip_literals(q: SqlQuery) -> SqlQuery:
    """Replace every literal with a placeholder (used by literal-invariance tests)."""
    blank = Literal("str", "")

    def cond(c: Condition) -> Condition:
        r = c.right
        if isinstance(r, Literal):
            r = blank
        elif isinstance(r, tuple):
            r = (blank, blank)
        elif isinstance(r, SqlQuery):
            r = strip_literals(r)
        return replace(c, right=r)

    def tree(t):
        return None if t is None else replace(t, conditions=tuple(cond(c) for c in t.conditions))

    return replace(
        q,
        joins=tuple(cond(c) for c in q.joins),
        where=tree(q.where),
        having=tree(q.having),
        set_op=replace(q.set_op, query=strip_literals(q.set_op.query)) if q.set_op else None,
    )
