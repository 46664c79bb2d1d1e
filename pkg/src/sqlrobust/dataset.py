"""Spider-format datasets, paired-corpus difference statistics and substitution reports."""

from __future__ import annotations

import json
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import AlignmentError, InputError, SchemaParseError, SqlParseError
from .linking import link
from .schema import DatabaseSchema
from .sql_ir import SqlQuery
from .sql_parser import parse_sql
from .text import tokenize

# Spider-Syn files name the question fields differently.
QUESTION_FIELDS = ("question", "SpiderSynQuestion", "SpiderQuestion")


@dataclass
class Example:
    db_id: str
    question: str
    query: str
    extra: dict = field(default_factory=dict, compare=False, repr=False)
    _gold: SqlQuery | None = field(default=None, compare=False, repr=False)

    def gold(self, schemas: Mapping[str, DatabaseSchema]) -> SqlQuery:
        """Parse the gold query once; the result is cached on the example."""
        if self._gold is None:
            schema = schemas.get(self.db_id)
            if schema is None:
                raise InputError(f"no schema for db_id {self.db_id!r}")
            self._gold = parse_sql(self.query, schema)
        return self._gold

    def to_dict(self) -> dict:
        return {**self.extra, "db_id": self.db_id, "question": self.question, "query": self.query}


def examples_from_rows(rows: Sequence, question_field: str | None = None, source: str = "<rows>") -> list[Example]:
    if not isinstance(rows, list):
        raise SchemaParseError(source, "expected a JSON array of examples")
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise InputError(f"{source}: row {i} is not an object")
        qfield = question_field or next((f for f in QUESTION_FIELDS if f in row), None)
        missing = [k for k in ("db_id", "query") if not isinstance(row.get(k), str)]
        if qfield is None or not isinstance(row.get(qfield), str):
            missing.append(question_field or "question")
        if missing:
            raise InputError(f"{source}: row {i} missing {', '.join(missing)}")
        extra = {k: v for k, v in row.items() if k not in ("db_id", "query", qfield)}
        out.append(Example(row["db_id"], row[qfield], row["query"], extra))
    return out


def load_examples(path: str | os.PathLike, question_field: str | None = None) -> list[Example]:
    try:
        with open(path, encoding="utf-8") as fh:
            rows = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaParseError(path, f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise SchemaParseError(path, str(exc)) from None
    return examples_from_rows(rows, question_field, str(path))


def dump_examples(examples: Iterable[Example]) -> list[dict]:
    return [e.to_dict() for e in examples]


def check_db_ids(examples: Iterable[Example], schemas: Mapping[str, DatabaseSchema]) -> None:
    for i, e in enumerate(examples):
        if e.db_id not in schemas:
            raise InputError(f"example {i}: unknown db_id {e.db_id!r}")


# --------------------------------------------------------------------------
# alignment


def lcs_pairs(a: Sequence[str], b: Sequence[str]) -> list[tuple[int, int]]:
    """Index pairs of a longest common subsequence.

    Among all longest alignments, pick one with the fewest contiguous edit
    blocks, so a phrase swap such as "payment method" -> "mode of paying"
    stays one edit even when the replacement shares a word with its context.
    """
    n, m = len(a), len(b)
    # best[i][j][p] = (matched, -blocks) for suffixes a[i:], b[j:]; p = previous step was a match
    best = [[[(0, 0), (0, 0)] for _ in range(m + 1)] for _ in range(n + 1)]
    for i in range(n, -1, -1):
        for j in range(m, -1, -1):
            for p in (0, 1):
                if i == n and j == m:
                    continue
                if i == n or j == m:
                    best[i][j][p] = (0, -p)
                    continue
                opts = []
                if a[i] == b[j]:
                    k, g = best[i + 1][j + 1][1]
                    opts.append((k + 1, g))
                k, g = best[i + 1][j][0]
                opts.append((k, g - p))
                k, g = best[i][j + 1][0]
                opts.append((k, g - p))
                best[i][j][p] = max(opts)
    pairs = []
    i = j = 0
    p = 1
    while i < n and j < m:
        target = best[i][j][p]
        if a[i] == b[j] and (best[i + 1][j + 1][1][0] + 1, best[i + 1][j + 1][1][1]) == target:
            pairs.append((i, j))
            i, j, p = i + 1, j + 1, 1
        elif (best[i + 1][j][0][0], best[i + 1][j][0][1] - p) == target:
            i, p = i + 1, 0
        else:
            j, p = j + 1, 0
    return pairs


@dataclass(frozen=True)
class Edit:
    orig_span: tuple[int, int]  # word indices into the original
    mod_span: tuple[int, int]
    original: str
    replacement: str
    category: str = "unclassified"  # schema-word | cell-value | unclassified


def align_edits(a: Sequence[str], b: Sequence[str]) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Contiguous gaps between LCS anchors, one per edit."""
    out = []
    pi = pj = 0
    for i, j in [*lcs_pairs(a, b), (len(a), len(b))]:
        if i > pi or j > pj:
            out.append(((pi, i), (pj, j)))
        pi, pj = i + 1, j + 1
    return out


def question_edits(original: str, modified: str, schema: DatabaseSchema | None) -> list[Edit]:
    """Edits turning ``original`` into ``modified``, classified by links on the original."""
    o_tokens = tokenize(original)
    m_words = [t.norm for t in tokenize(modified) if t.norm]
    o_index = [k for k, t in enumerate(o_tokens) if t.norm]  # word index -> token index
    o_words = [o_tokens[k].norm for k in o_index]
    if o_words == m_words:
        return []
    tags = link(original, schema).tags if schema is not None else ()
    edits = []
    for (i0, i1), (j0, j1) in align_edits(o_words, m_words):
        category = "unclassified"
        if i1 > i0:
            t0, t1 = o_index[i0], o_index[i1 - 1] + 1
            hit = [t for t in tags if t.span[0] < t1 and t0 < t.span[1]]
            if any(t.target.kind in ("table", "column") for t in hit):
                category = "schema-word"
            elif hit:
                category = "cell-value"
        edits.append(Edit((i0, i1), (j0, j1), " ".join(o_words[i0:i1]), " ".join(m_words[j0:j1]), category))
    return edits


def _pairs(original: Sequence[Example], modified: Sequence[Example]):
    if len(original) != len(modified):
        raise AlignmentError(f"corpus lengths differ: {len(original)} vs {len(modified)}")
    for i, (o, m) in enumerate(zip(original, modified)):
        if o.db_id != m.db_id:
            raise AlignmentError(f"row {i}: db_id {o.db_id!r} vs {m.db_id!r}")
    return zip(original, modified)


def corpus_edits(
    original: Sequence[Example], modified: Sequence[Example], schemas: Mapping[str, DatabaseSchema]
) -> list[list[Edit]]:
    return [question_edits(o.question, m.question, schemas.get(o.db_id)) for o, m in _pairs(original, modified)]


# --------------------------------------------------------------------------
# statistics


@dataclass
class DiffStats:
    corpus_size: int = 0
    modified_count: int = 0
    schema_word_mods: int = 0  # questions with at least one schema-word edit
    cell_value_mods: int = 0  # questions with at least one cell-value edit
    total_edits: int = 0
    edit_categories: dict = field(default_factory=lambda: {"schema-word": 0, "cell-value": 0, "unclassified": 0})
    distinct_replacement_words: int = 0
    distinct_replacement_phrases: int = 0
    distinct_substitutions: int = 0
    mean_changes_per_question: float = 0.0
    per_domain_mean_modified: float = 0.0
    split_overlap: tuple[int, float] | None = None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["edit_categories"] = dict(self.edit_categories)
        if self.split_overlap is not None:
            d["split_overlap"] = list(self.split_overlap)
        return d


def stats_from_edits(examples: Sequence[Example], edits: Sequence[Sequence[Edit]]) -> DiffStats:
    st = DiffStats(corpus_size=len(examples))
    repl_words, repl_phrases = set(), set()
    per_domain: dict[str, set] = defaultdict(set)
    for ex, q_edits in zip(examples, edits):
        per_domain.setdefault(ex.db_id, set())
        if not q_edits:
            continue
        st.modified_count += 1
        cats = {e.category for e in q_edits}
        st.schema_word_mods += "schema-word" in cats
        st.cell_value_mods += "cell-value" in cats
        for e in q_edits:
            st.total_edits += 1
            st.edit_categories[e.category] += 1
            if e.replacement:
                (repl_phrases if " " in e.replacement else repl_words).add(e.replacement)
            per_domain[ex.db_id].add((e.original, e.replacement))
    st.distinct_replacement_words = len(repl_words)
    st.distinct_replacement_phrases = len(repl_phrases)
    st.distinct_substitutions = len({p for s in per_domain.values() for p in s})
    if examples:
        st.mean_changes_per_question = st.total_edits / len(examples)
    modified_domains = [s for s in per_domain.values() if s]
    if modified_domains:
        st.per_domain_mean_modified = sum(len(s) for s in modified_domains) / len(modified_domains)
    return st


def diff_stats(
    original: Sequence[Example], modified: Sequence[Example], schemas: Mapping[str, DatabaseSchema]
) -> DiffStats:
    return stats_from_edits(original, corpus_edits(original, modified, schemas))


def report_from_edits(examples: Sequence[Example], edits: Sequence[Sequence[Edit]]) -> dict[str, list[dict]]:
    counts: dict[str, Counter] = defaultdict(Counter)
    for ex, q_edits in zip(examples, edits):
        for e in q_edits:
            counts[ex.db_id][(e.original, e.replacement)] += 1
    return {
        db: [{"original": o, "replacement": r, "count": n} for (o, r), n in sorted(c.items())]
        for db, c in sorted(counts.items())
    }


def substitution_report(
    original: Sequence[Example], modified: Sequence[Example], schemas: Mapping[str, DatabaseSchema]
) -> dict[str, list[dict]]:
    """Per db_id, deduplicated (original -> replacement) pairs with counts. No question text."""
    return report_from_edits(original, corpus_edits(original, modified, schemas))


def format_report(report: Mapping[str, list[dict]]) -> str:
    rows = [(db, e["original"], e["replacement"], str(e["count"])) for db, entries in report.items() for e in entries]
    header = ("db_id", "original", "replacement", "count")
    widths = [max(len(r[k]) for r in [header, *rows]) for k in range(4)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths[:-1]) + f"  {{:>{widths[-1]}}}"
    lines = [fmt.format(*header), "  ".join("-" * w for w in widths)]
    lines += [fmt.format(*r) for r in rows]
    return "\n".join(lines) + "\n"


def _pair_set(report: Mapping[str, list[dict]]) -> set[tuple[str, str]]:
    return {(e["original"], e["replacement"]) for entries in report.values() for e in entries}


def split_overlap(train_report: Mapping[str, list[dict]], dev_report: Mapping[str, list[dict]]) -> tuple[int, float]:
    """Shared (original, replacement) pairs, and their share of the dev report's distinct pairs."""
    train, dev = _pair_set(train_report), _pair_set(dev_report)
    shared = len(train & dev)
    return shared, (shared / len(dev) if dev else 0.0)


def parse_gold_all(examples: Sequence[Example], schemas: Mapping[str, DatabaseSchema]) -> list[str]:
    """Parse every gold query; return one error line per failure."""
    errors = []
    for i, e in enumerate(examples):
        try:
            e.gold(schemas)
        except (SqlParseError, InputError) as exc:
            errors.append(f"{i}: {exc}")
    return errors
