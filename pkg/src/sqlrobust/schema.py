"""Database schemas with multiple natural-language annotations per item.

Mirrors the Spider ``tables.json`` layout. Every table and column carries an
:class:`AnnotationSet`; the default annotation is the human-readable name and
synonyms come from annotation files (hand-written or generated).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping

from .errors import SchemaParseError, ValidationError
from .text import normalize_phrase

SENTINEL = -1
COLUMN_TYPES = ("text", "number", "time", "boolean", "other")
DEFAULT_CELL_CAP = 1000


@dataclass(frozen=True)
class AnnotationSet:
    default: str
    synonyms: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.default:
            raise ValidationError("annotation default must be non-empty")
        seen = {self.default}
        for p in (self.default, *self.synonyms):
            if not p or normalize_phrase(p) != p:
                raise ValidationError(f"annotation {p!r} is not normalized")
        for p in self.synonyms:
            if p in seen:
                raise ValidationError(f"duplicate annotation {p!r}")
            seen.add(p)

    @classmethod
    def of(cls, default: str, synonyms: Iterable[str] = ()) -> "AnnotationSet":
        return cls(normalize_phrase(default), tuple(normalize_phrase(s) for s in synonyms))

    @property
    def phrases(self) -> tuple[str, ...]:
        """Default first, then synonyms in file order (the MAS tie-break order)."""
        return (self.default, *self.synonyms)

    def extend(self, phrases: Iterable[str]) -> "AnnotationSet":
        new = list(self.synonyms)
        for p in phrases:
            p = normalize_phrase(p)
            if p and p != self.default and p not in new:
                new.append(p)
        return replace(self, synonyms=tuple(new))


@dataclass(frozen=True)
class Column:
    id: int
    table_id: int
    name: str
    col_type: str
    annotations: AnnotationSet
    cell_values: tuple[str, ...] = ()

    @property
    def is_star(self) -> bool:
        return self.table_id == SENTINEL


@dataclass(frozen=True)
class Table:
    id: int
    name: str
    annotations: AnnotationSet
    column_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class DatabaseSchema:
    db_id: str
    tables: tuple[Table, ...]
    columns: tuple[Column, ...]
    primary_keys: tuple[int, ...] = ()
    foreign_keys: tuple[tuple[int, int], ...] = ()
    _table_idx: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        self._validate()
        idx = {t.name.lower(): t.id for t in self.tables}
        object.__setattr__(self, "_table_idx", idx)

    def _fail(self, msg):
        raise ValidationError(f"schema {self.db_id!r}: {msg}")

    def _validate(self):
        for i, t in enumerate(self.tables):
            if t.id != i:
                self._fail(f"table {t.name!r} has id {t.id}, expected {i}")
        for i, c in enumerate(self.columns):
            if c.id != i:
                self._fail(f"column {c.name!r} has id {c.id}, expected {i}")
            if c.col_type not in COLUMN_TYPES:
                self._fail(f"column {c.name!r} has unknown type {c.col_type!r}")
            if not c.is_star and not 0 <= c.table_id < len(self.tables):
                self._fail(f"column {c.name!r} references missing table {c.table_id}")
        stars = [c for c in self.columns if c.is_star]
        if len(stars) != 1:
            self._fail(f"expected exactly one star column, found {len(stars)}")
        names = set()
        for t in self.tables:
            key = t.name.lower()
            if key in names:
                self._fail(f"duplicate table name {t.name!r}")
            names.add(key)
            cols = set()
            for cid in t.column_ids:
                key = self.columns[cid].name.lower()
                if key in cols:
                    self._fail(f"duplicate column {t.name}.{self.columns[cid].name}")
                cols.add(key)
        n = len(self.columns)
        for pk in self.primary_keys:
            if not 0 <= pk < n or self.columns[pk].is_star:
                self._fail(f"primary key {pk} is not a valid non-star column")
        for a, b in self.foreign_keys:
            if not (0 <= a < n and 0 <= b < n):
                self._fail(f"foreign key ({a}, {b}) references a missing column")
            if a == b or self.columns[a].is_star or self.columns[b].is_star:
                self._fail(f"foreign key ({a}, {b}) is degenerate")

    @property
    def star_id(self) -> int:
        return next(c.id for c in self.columns if c.is_star)

    def table_id(self, name: str) -> int | None:
        tid = self._table_idx.get(name.lower())
        if tid is None:
            norm = normalize_phrase(name)
            for t in self.tables:
                if t.annotations.default == norm:
                    return t.id
        return tid

    def column_id(self, table_id: int, name: str) -> int | None:
        low = name.lower()
        if low == "*":
            return self.star_id
        for cid in self.tables[table_id].column_ids:
            if self.columns[cid].name.lower() == low:
                return cid
        norm = normalize_phrase(name)
        for cid in self.tables[table_id].column_ids:
            if self.columns[cid].annotations.default == norm:
                return cid
        return None

    def items(self) -> Iterator[tuple[str, int, AnnotationSet]]:
        """(kind, id, annotations) for every table, then every non-star column."""
        for t in self.tables:
            yield "table", t.id, t.annotations
        for c in self.columns:
            if not c.is_star:
                yield "column", c.id, c.annotations

    def item_path(self, kind: str, item_id: int) -> str:
        if kind == "table":
            return self.tables[item_id].name
        col = self.columns[item_id]
        if col.is_star:
            return "*"
        return f"{self.tables[col.table_id].name}.{col.name}"

    def resolve_path(self, path: str) -> tuple[str, int]:
        """Map ``table`` or ``table.column`` to ``(kind, id)``."""
        head, dot, tail = path.partition(".")
        tid = self.table_id(head.strip())
        if tid is None:
            raise ValidationError(f"schema {self.db_id!r}: unknown table in {path!r}")
        if not dot:
            return "table", tid
        cid = self.column_id(tid, tail.strip())
        if cid is None or self.columns[cid].is_star:
            raise ValidationError(f"schema {self.db_id!r}: unknown column in {path!r}")
        return "column", cid

    def annotations_of(self, kind: str, item_id: int) -> AnnotationSet:
        return (self.tables if kind == "table" else self.columns)[item_id].annotations

    def with_annotations(self, updates: Mapping[tuple[str, int], AnnotationSet]) -> "DatabaseSchema":
        tables = list(self.tables)
        columns = list(self.columns)
        for (kind, item_id), ann in updates.items():
            if kind == "table":
                tables[item_id] = replace(tables[item_id], annotations=ann)
            else:
                columns[item_id] = replace(columns[item_id], annotations=ann)
        return replace(self, tables=tuple(tables), columns=tuple(columns))

    def to_spider_dict(self) -> dict:
        return {
            "db_id": self.db_id,
            "table_names_original": [t.name for t in self.tables],
            "table_names": [t.annotations.default for t in self.tables],
            "column_names_original": [[c.table_id, c.name] for c in self.columns],
            "column_names": [[c.table_id, c.annotations.default if not c.is_star else "*"] for c in self.columns],
            "column_types": [_spider_type(c.col_type) for c in self.columns],
            "primary_keys": list(self.primary_keys),
            "foreign_keys": [list(fk) for fk in self.foreign_keys],
        }

    @classmethod
    def from_spider_dict(cls, entry: Mapping) -> "DatabaseSchema":
        db_id = entry.get("db_id", "<unknown>")
        try:
            t_orig = entry["table_names_original"]
            t_names = entry.get("table_names", t_orig)
            c_orig = entry["column_names_original"]
            c_names = entry.get("column_names", c_orig)
            c_types = entry.get("column_types", ["text"] * len(c_orig))
            pks = _flatten(entry.get("primary_keys", []))
            fks = [tuple(fk) for fk in entry.get("foreign_keys", [])]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"schema {db_id!r}: missing or malformed field {exc}") from None
        if not (len(t_orig) == len(t_names)) or not (len(c_orig) == len(c_names) == len(c_types)):
            raise ValidationError(f"schema {db_id!r}: parallel name/type lists differ in length")
        columns = []
        per_table: list[list[int]] = [[] for _ in t_orig]
        for i, ((tid, name), (_, human), ctype) in enumerate(zip(c_orig, c_names, c_types)):
            tid = SENTINEL if tid is None or tid < 0 else tid
            if tid != SENTINEL:
                if tid >= len(t_orig):
                    raise ValidationError(f"schema {db_id!r}: column {name!r} references missing table {tid}")
                per_table[tid].append(i)
            ann = AnnotationSet("all") if tid == SENTINEL else _default_annotation(human, name, db_id)
            columns.append(Column(i, tid, name, _our_type(ctype), ann))
        tables = tuple(
            Table(i, name, _default_annotation(human, name, db_id), tuple(per_table[i]))
            for i, (name, human) in enumerate(zip(t_orig, t_names))
        )
        return cls(db_id, tables, tuple(columns), tuple(pks), tuple(fks))


def _default_annotation(human: str, name: str, db_id: str) -> AnnotationSet:
    default = normalize_phrase(human) or normalize_phrase(name)
    if not default:
        raise ValidationError(f"schema {db_id!r}: item {name!r} has no usable name")
    return AnnotationSet(default)


def _our_type(t: str) -> str:
    t = str(t).lower()
    return t if t in COLUMN_TYPES else "other"


def _spider_type(t: str) -> str:
    return "others" if t == "other" else t


def _flatten(xs) -> list[int]:
    out = []
    for x in xs:
        if isinstance(x, (list, tuple)):
            out.extend(_flatten(x))
        else:
            out.append(int(x))
    return out


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaParseError(path, f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise SchemaParseError(path, str(exc)) from None


def load_schemas(path: str | os.PathLike) -> list[DatabaseSchema]:
    data = _read_json(path)
    if not isinstance(data, list):
        raise SchemaParseError(path, "expected a JSON array of database descriptions")
    return [DatabaseSchema.from_spider_dict(entry) for entry in data]


def dump_schemas(schemas: Iterable[DatabaseSchema], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_spider_dict() for s in schemas], fh, indent=2)


def schemas_by_id(schemas: Iterable[DatabaseSchema]) -> dict[str, DatabaseSchema]:
    return {s.db_id: s for s in schemas}


def _mapping(source) -> Mapping:
    if isinstance(source, Mapping):
        return source
    data = _read_json(source)
    if not isinstance(data, dict):
        raise SchemaParseError(source, "expected a JSON object")
    return data


def attach_annotations(schema: DatabaseSchema, annotations) -> DatabaseSchema:
    """Extend item annotation sets from ``{"table": [...], "table.column": [...]}``.

    ``annotations`` is a path or an already-loaded mapping. Phrases already in
    an item's set are skipped, so attaching the same file twice is a no-op.
    A phrase repeated inside one list is an error.
    """
    updates: dict[tuple[str, int], AnnotationSet] = {}
    for path, phrases in _mapping(annotations).items():
        key = schema.resolve_path(path)
        if isinstance(phrases, str) or not isinstance(phrases, list):
            raise ValidationError(f"schema {schema.db_id!r}: annotations for {path!r} must be a list")
        normed = [normalize_phrase(p) for p in phrases]
        if any(not p for p in normed):
            raise ValidationError(f"schema {schema.db_id!r}: empty annotation for {path!r}")
        if len(set(normed)) != len(normed):
            raise ValidationError(f"schema {schema.db_id!r}: duplicate annotation for {path!r}")
        current = updates.get(key, schema.annotations_of(*key))
        updates[key] = current.extend(normed)
    return schema.with_annotations(updates)


def load_cell_values(schema: DatabaseSchema, values, cap: int = DEFAULT_CELL_CAP) -> DatabaseSchema:
    """Attach literal samples from a ``{"table.column": [value, ...]}`` sidecar."""
    columns = list(schema.columns)
    for path, vals in _mapping(values).items():
        kind, cid = schema.resolve_path(path)
        if kind != "column":
            raise ValidationError(f"schema {schema.db_id!r}: cell values need a column path, got {path!r}")
        uniq = list(dict.fromkeys(str(v) for v in vals if v is not None))[:cap]
        columns[cid] = replace(columns[cid], cell_values=tuple(uniq))
    return replace(schema, columns=tuple(columns))


def split_annotation_file(data: Mapping) -> dict[str, Mapping]:
    """Annotation files may be keyed by db_id at the top level; return per-db maps.

    A flat file (item paths at top level) is returned under the key ``""``.
    """
    if data and all(isinstance(v, Mapping) for v in data.values()):
        return dict(data)
    return {"": data}
