"""Spider-style exact match and per-component F1.

Each query is decomposed into ten multisets of hashable units. Literal values
never enter a unit, so two queries that differ only in literals match. A
query's *match key* bundles its unit multisets with its FROM tables; exact
match is equality of match keys, which also covers nested subqueries and
set-operation operands.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

from .errors import ValidationError
from .sql_ir import ColumnRef, Condition, ConditionTree, SqlQuery

COMPONENTS = (
    "SELECT",
    "SELECT (no AGG)",
    "WHERE",
    "WHERE (no OP)",
    "GROUP BY (no HAVING)",
    "GROUP BY",
    "ORDER BY",
    "AND/OR",
    "IUE",
    "KEYWORDS",
)

# DISTINCT counts as a keyword here, matching the select-level flag.
KEYWORDS_INCLUDE_DISTINCT = True


def _bag(units: Iterable) -> tuple:
    return tuple(sorted(units, key=repr))


def _strip_agg(c: ColumnRef) -> ColumnRef:
    return ColumnRef(c.column_id, arith=c.arith)


def _right_key(right):
    if isinstance(right, SqlQuery):
        return ("sql", match_key(right))
    if isinstance(right, ColumnRef):
        return ("col", right)
    return None


def _cond_unit(c: Condition) -> tuple:
    return (c.left, c.op, c.negated, _right_key(c.right))


def _conds(tree: ConditionTree | None) -> tuple[Condition, ...]:
    return tree.conditions if tree else ()


def _connectors(tree: ConditionTree | None) -> tuple[str, ...]:
    return tree.connectors if tree else ()


def _keywords(q: SqlQuery) -> set[str]:
    kw = {"select"}
    if q.where:
        kw.add("where")
    if q.group_by:
        kw.add("group")
    if q.having:
        kw.add("having")
    if q.order_by:
        kw.update(("order", q.order_by.direction))
    if q.limit is not None:
        kw.add("limit")
    if q.set_op:
        kw.add(q.set_op.kind)
    if q.distinct and KEYWORDS_INCLUDE_DISTINCT:
        kw.add("distinct")
    conds = _conds(q.where) + _conds(q.having)
    if "or" in _connectors(q.where) + _connectors(q.having):
        kw.add("or")
    for c in conds:
        if c.negated or c.op.startswith("not "):
            kw.add("not")
        if c.op in ("in", "not in"):
            kw.add("in")
        if c.op in ("like", "not like"):
            kw.add("like")
    return kw


def extract_components(q: SqlQuery) -> dict[str, Counter]:
    """Map each of the ten component names to its multiset of units."""
    where = _conds(q.where)
    out = {
        "SELECT": Counter(q.select),
        "SELECT (no AGG)": Counter(_strip_agg(c) for c in q.select),
        "WHERE": Counter(_cond_unit(c) for c in where),
        "WHERE (no OP)": Counter(c.left for c in where),
        "GROUP BY (no HAVING)": Counter(q.group_by),
        "GROUP BY": Counter(),
        "ORDER BY": Counter(),
        "AND/OR": Counter(_connectors(q.where)),
        "IUE": Counter(),
        "KEYWORDS": Counter(_keywords(q)),
    }
    if q.group_by or q.having:
        having = _bag(_cond_unit(c) for c in _conds(q.having))
        out["GROUP BY"][(_bag(q.group_by), having)] += 1
    if q.order_by:
        out["ORDER BY"][(q.order_by.columns, q.order_by.direction, q.limit is not None)] += 1
    if q.set_op:
        out["IUE"][(q.set_op.kind, match_key(q.set_op.query))] += 1
    return out


@lru_cache(maxsize=65536)
def match_key(q: SqlQuery) -> tuple:
    comps = extract_components(q)
    return tuple(_bag(comps[name].elements()) for name in COMPONENTS) + (tuple(sorted(q.from_tables)),)


def exact_match(pred: SqlQuery | None, gold: SqlQuery) -> bool:
    """Structural equality of component multisets and FROM tables, literals ignored."""
    if pred is None:
        return False
    return match_key(pred) == match_key(gold)


@dataclass
class ComponentCount:
    pred_total: int = 0
    gold_total: int = 0
    matched: int = 0

    @property
    def f1(self) -> float:
        denom = self.pred_total + self.gold_total
        return 1.0 if denom == 0 else 2.0 * self.matched / denom

    def __iadd__(self, other: "ComponentCount") -> "ComponentCount":
        self.pred_total += other.pred_total
        self.gold_total += other.gold_total
        self.matched += other.matched
        return self


@dataclass
class ComponentScores:
    counts: dict[str, ComponentCount] = field(default_factory=lambda: {n: ComponentCount() for n in COMPONENTS})

    def f1(self, name: str) -> float:
        return self.counts[name].f1

    def merge(self, other: "ComponentScores") -> "ComponentScores":
        out = ComponentScores()
        for n in COMPONENTS:
            out.counts[n] += self.counts[n]
            out.counts[n] += other.counts[n]
        return out

    def to_dict(self) -> dict:
        return {
            n: {"f1": c.f1, "pred_total": c.pred_total, "gold_total": c.gold_total, "matched": c.matched}
            for n, c in self.counts.items()
        }


@dataclass
class EvalResult:
    exact_match: bool
    components: ComponentScores


def component_counts(pred: SqlQuery | None, gold: SqlQuery) -> ComponentScores:
    g = extract_components(gold)
    p = extract_components(pred) if pred is not None else {n: Counter() for n in COMPONENTS}
    scores = ComponentScores()
    for n in COMPONENTS:
        scores.counts[n] = ComponentCount(
            pred_total=sum(p[n].values()),
            gold_total=sum(g[n].values()),
            matched=sum((p[n] & g[n]).values()),
        )
    return scores


def evaluate(pred: SqlQuery | None, gold: SqlQuery) -> EvalResult:
    return EvalResult(exact_match(pred, gold), component_counts(pred, gold))


def component_f1(pairs: Iterable[tuple[SqlQuery | None, SqlQuery]]) -> ComponentScores:
    """Corpus-level F1 per component from summed counts. Empty input scores 1.0 everywhere."""
    total = ComponentScores()
    for pred, gold in pairs:
        total = total.merge(component_counts(pred, gold))
    return total


def accuracy(results: Sequence[EvalResult]) -> float:
    if not results:
        raise ValidationError("accuracy of an empty result list is undefined")
    return sum(r.exact_match for r in results) / len(results)
