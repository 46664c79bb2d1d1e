"""Lexical schema linking and Multi-Annotation Selection (MAS).

Linking scans question n-grams (5 tokens down to 1) against every annotation
of every table and column and against stored cell values. MAS picks, per
schema item, the annotation that actually appears in the question so that a
lexical linker sees a matching surface form again.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping

from .schema import AnnotationSet, DatabaseSchema
from .text import STOPWORDS, Token, find_occurrences, norms, normalize_phrase, tokenize

MAX_NGRAM = 5
TAG_KINDS = ("exact-table", "partial-table", "exact-column", "partial-column", "cell-value")
_TARGET_ORDER = {"table": 0, "column": 1, "value": 2}


@dataclass(frozen=True)
class Target:
    kind: str  # "table" | "column" | "value"
    id: int  # table id, or column id for columns and cell values
    value: str | None = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "id": self.id}
        if self.value is not None:
            d["value"] = self.value
        return d


@dataclass(frozen=True)
class LinkTag:
    span: tuple[int, int]
    target: Target
    kind: str
    matched_annotation: str

    @property
    def exact(self) -> bool:
        return not self.kind.startswith("partial")

    def overlaps(self, other: "LinkTag") -> bool:
        return self.span[0] < other.span[1] and other.span[0] < self.span[1]

    def to_dict(self) -> dict:
        return {
            "span": list(self.span),
            "target": self.target.to_dict(),
            "kind": self.kind,
            "matched_annotation": self.matched_annotation,
        }


@dataclass(frozen=True)
class LinkedQuestion:
    question: str
    tokens: tuple[Token, ...]
    tags: tuple[LinkTag, ...]

    @property
    def words(self) -> list[str]:
        return norms(self.tokens)

    def span_text(self, span: tuple[int, int]) -> str:
        return " ".join(t.norm for t in self.tokens[span[0] : span[1]] if t.norm)

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "tokens": [t.text for t in self.tokens],
            "tags": [t.to_dict() for t in self.tags],
        }


# --------------------------------------------------------------------------
# phrase index

_INDEX_CACHE: dict[int, tuple[DatabaseSchema, dict, dict]] = {}


def _build_index(schema: DatabaseSchema):
    cached = _INDEX_CACHE.get(id(schema))
    if cached is not None and cached[0] is schema:
        return cached[1], cached[2]
    exact: dict[tuple[str, ...], list] = defaultdict(list)
    partial: dict[tuple[str, ...], list] = defaultdict(list)
    for kind, item_id, ann in schema.items():
        for phrase in ann.phrases:
            words = tuple(phrase.split())
            if not words or len(words) > MAX_NGRAM:
                continue
            exact[words].append((f"exact-{kind}", Target(kind, item_id), phrase))
            n = len(words)
            seen = set()
            for size in range(1, n):
                for i in range(n - size + 1):
                    sub = words[i : i + size]
                    if sub in seen or all(w in STOPWORDS for w in sub):
                        continue
                    seen.add(sub)
                    partial[sub].append((f"partial-{kind}", Target(kind, item_id), phrase))
    for col in schema.columns:
        for value in col.cell_values:
            words = tuple(normalize_phrase(value).split())
            if words and len(words) <= MAX_NGRAM and not all(w in STOPWORDS for w in words):
                exact[words].append(("cell-value", Target("value", col.id, value), " ".join(words)))
    if len(_INDEX_CACHE) > 256:
        _INDEX_CACHE.clear()
    _INDEX_CACHE[id(schema)] = (schema, exact, partial)
    return exact, partial


def candidate_tags(tokens: list[Token], schema: DatabaseSchema) -> list[LinkTag]:
    """Every lexical match before overlap resolution."""
    exact, partial = _build_index(schema)
    words = norms(tokens)
    out = []
    for n in range(MAX_NGRAM, 0, -1):
        for i in range(len(words) - n + 1):
            gram = tuple(words[i : i + n])
            if "" in gram:
                continue
            for kind, target, phrase in exact.get(gram, ()):
                out.append(LinkTag((i, i + n), target, kind, phrase))
            for kind, target, phrase in partial.get(gram, ()):
                out.append(LinkTag((i, i + n), target, kind, phrase))
    return out


def _priority(tag: LinkTag):
    return (
        -(tag.span[1] - tag.span[0]),
        0 if tag.exact else 1,
        tag.span[0],
        _TARGET_ORDER[tag.target.kind],
        tag.target.id,
        tag.matched_annotation,
    )


def resolve_overlaps(tags: list[LinkTag]) -> tuple[LinkTag, ...]:
    """Longer span, exact over partial, earlier span, table before column."""
    chosen: list[LinkTag] = []
    for tag in sorted(tags, key=_priority):
        if not any(tag.overlaps(c) for c in chosen):
            chosen.append(tag)
    return tuple(sorted(chosen, key=lambda t: t.span))


def link(question: str, schema: DatabaseSchema) -> LinkedQuestion:
    tokens = tokenize(question)
    return LinkedQuestion(question, tuple(tokens), resolve_overlaps(candidate_tags(tokens, schema)))


# --------------------------------------------------------------------------
# MAS


@dataclass(frozen=True)
class Collision:
    span: tuple[int, int]
    items: tuple[tuple[str, int], ...]

    def to_dict(self, schema: DatabaseSchema) -> dict:
        return {"span": list(self.span), "items": [schema.item_path(k, i) for k, i in self.items]}


@dataclass(frozen=True)
class ResolvedSchema:
    base: DatabaseSchema
    selected: tuple[tuple[tuple[str, int], str], ...]
    collisions: tuple[Collision, ...] = ()

    @property
    def selection(self) -> dict[tuple[str, int], str]:
        return dict(self.selected)

    def as_schema(self) -> DatabaseSchema:
        """The base schema with each item reduced to its selected annotation."""
        return self.base.with_annotations({key: AnnotationSet(phrase) for key, phrase in self.selected})

    def to_dict(self) -> dict:
        return {
            "db_id": self.base.db_id,
            "selected": {self.base.item_path(k, i): p for (k, i), p in self.selected},
            "changed": {
                self.base.item_path(k, i): p
                for (k, i), p in self.selected
                if p != self.base.annotations_of(k, i).default
            },
            "collisions": [c.to_dict(self.base) for c in self.collisions],
        }


def mas_select(question: str, schema: DatabaseSchema) -> ResolvedSchema:
    """Per item, select the longest annotation occurring in the question.

    Items with no occurring annotation keep their default; ties go to the
    earlier annotation in list order (default first).
    """
    words = norms(tokenize(question))
    selected = []
    spans: dict[tuple[int, int], list[tuple[tuple[str, int], bool]]] = defaultdict(list)
    for kind, item_id, ann in schema.items():
        best, best_len, best_starts = ann.default, 0, []
        for phrase in ann.phrases:
            ptoks = phrase.split()
            starts = list(find_occurrences(words, ptoks))
            if starts and len(ptoks) > best_len:
                best, best_len, best_starts = phrase, len(ptoks), starts
        selected.append(((kind, item_id), best))
        for s in best_starts:
            spans[(s, s + best_len)].append(((kind, item_id), best != ann.default))
    collisions = tuple(
        Collision(span, tuple(key for key, _ in entries))
        for span, entries in sorted(spans.items())
        if len(entries) > 1 and any(non_default for _, non_default in entries)
    )
    return ResolvedSchema(schema, tuple(selected), collisions)


def model_input(schema: DatabaseSchema, selection: Mapping[tuple[str, int], str] | None = None) -> str:
    """Serialized schema description handed to a model, one surface name per item."""
    selection = selection or {}

    def name(kind, item_id):
        return selection.get((kind, item_id), schema.annotations_of(kind, item_id).default)

    doc = {
        "db_id": schema.db_id,
        "table_names": [name("table", t.id) for t in schema.tables],
        "column_names": [[c.table_id, "*" if c.is_star else name("column", c.id)] for c in schema.columns],
        "column_types": [c.col_type for c in schema.columns],
        "primary_keys": list(schema.primary_keys),
        "foreign_keys": [list(fk) for fk in schema.foreign_keys],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def resolve_for_model(resolved: ResolvedSchema) -> str:
    return model_input(resolved.base, resolved.selection)
