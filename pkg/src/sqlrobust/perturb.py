"""Synonym substitution over schema-linked question spans with the gold SQL held fixed."""

from __future__ import annotations

import hashlib
import logging
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .dataset import Example, substitution_report
from .errors import PlanValidationError, SqlRobustError
from .linking import LinkedQuestion, LinkTag, link
from .providers import Provider, SpanContext
from .schema import DatabaseSchema
from .text import RESERVED_WORDS, has_reserved, tokenize

log = logging.getLogger(__name__)

MAX_REPLACEMENT_TOKENS = 5
DEFAULT_PROVIDER_ORDER = ("lexicon", "contextual", "embedding")


def derive_seed(seed: int, index: int) -> int:
    """Per-example seed, stable across processes and independent of run order."""
    digest = hashlib.sha256(f"{seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class PlanEdit:
    span: tuple[int, int]  # token indices into the original question
    original: str
    replacement: str
    target: LinkTag
    provider: str

    def to_dict(self) -> dict:
        return {
            "span": list(self.span),
            "original": self.original,
            "replacement": self.replacement,
            "target": self.target.target.to_dict(),
            "link_kind": self.target.kind,
            "provider": self.provider,
        }


@dataclass(frozen=True)
class SubstitutionPlan:
    edits: tuple[PlanEdit, ...] = ()

    def __len__(self) -> int:
        return len(self.edits)

    def validate(self, n_tokens: int) -> None:
        spans = sorted(e.span for e in self.edits)
        for s, e in spans:
            if not 0 <= s < e <= n_tokens:
                raise PlanValidationError(f"edit span {(s, e)} outside question of {n_tokens} tokens")
        for (_, e1), (s2, _) in zip(spans, spans[1:]):
            if s2 < e1:
                raise PlanValidationError("plan has overlapping edits")


@dataclass
class PerturbedExample:
    db_id: str
    original_question: str
    question: str
    query: str  # copied byte for byte from the source example
    plan: SubstitutionPlan = field(default_factory=SubstitutionPlan)
    extra: dict = field(default_factory=dict, repr=False)
    surface: tuple[str, ...] = ()  # original character text of each edit
    error: str | None = None

    def to_dict(self) -> dict:
        edits = []
        for e, surf in zip(self.plan.edits, self.surface or ("",) * len(self.plan)):
            edits.append({**e.to_dict(), "surface": surf})
        out = {**self.extra, "db_id": self.db_id, "question": self.question, "query": self.query}
        out["original_question"] = self.original_question
        out["edits"] = edits
        if self.error:
            out["error"] = self.error
        return out

    def as_example(self) -> Example:
        return Example(self.db_id, self.question, self.query, dict(self.extra))


def find_substitutable_spans(linked: LinkedQuestion) -> list[LinkTag]:
    """Linked spans that may be replaced: every tag whose span holds no reserved word.

    Returns the tags themselves (each carries its ``span``), sorted by position.
    """
    out = []
    for tag in linked.tags:
        words = linked.words[tag.span[0] : tag.span[1]]
        if not has_reserved(words):
            out.append(tag)
    return sorted(out, key=lambda t: t.span)


def _cap(candidate: str) -> str:
    words = candidate.split()
    if len(words) > MAX_REPLACEMENT_TOKENS:
        log.info("truncating replacement %r to %d tokens", candidate, MAX_REPLACEMENT_TOKENS)
        return " ".join(words[:MAX_REPLACEMENT_TOKENS])
    return candidate


def plan_substitutions(
    linked: LinkedQuestion,
    providers: Sequence[Provider],
    budget: int,
    seed: int,
    db_id: str = "",
    example_index: int | None = None,
) -> SubstitutionPlan:
    """Pick up to ``budget`` spans uniformly at random (seeded) that some provider can fill."""
    if budget < 0:
        raise PlanValidationError("budget must be non-negative")
    if budget == 0:
        return SubstitutionPlan()
    spans = find_substitutable_spans(linked)
    random.Random(seed).shuffle(spans)
    words = tuple(linked.words)
    edits = []
    for tag in spans:
        if len(edits) == budget:
            break
        ctx = SpanContext(db_id, linked.question, words, tag.span, example_index)
        for provider in providers:
            cands = provider.candidates(ctx)
            if cands:
                edits.append(PlanEdit(tag.span, ctx.phrase, _cap(cands[0]), tag, provider.name))
                break
    return SubstitutionPlan(tuple(sorted(edits, key=lambda e: e.span)))


def _match_case(replacement: str, surface: str, at_start: bool) -> str:
    if at_start and surface[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


def apply_plan(example: Example, plan: SubstitutionPlan) -> PerturbedExample:
    tokens = tokenize(example.question)
    plan.validate(len(tokens))
    text = example.question
    surfaces = []
    for e in sorted(plan.edits, key=lambda e: e.span, reverse=True):
        s, t = e.span
        surface = text[tokens[s].start : tokens[t - 1].end]
        surfaces.append(surface)
        repl = _match_case(e.replacement, surface, s == 0)
        text = text[: tokens[s].start] + repl + text[tokens[t - 1].end :]
    return PerturbedExample(
        example.db_id, example.question, text, example.query, plan, dict(example.extra), tuple(reversed(surfaces))
    )


def perturb_example(
    example: Example,
    schema: DatabaseSchema,
    providers: Sequence[Provider],
    budget: int,
    seed: int,
    index: int | None = None,
) -> PerturbedExample:
    linked = link(example.question, schema)
    plan = plan_substitutions(linked, providers, budget, seed, example.db_id, index)
    return apply_plan(example, plan)


@dataclass
class GenerationReport:
    n: int = 0
    modified: int = 0
    total_edits: int = 0
    budget: int = 0
    seed: int = 0
    providers: tuple[str, ...] = ()
    provider_counts: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    substitutions: dict = field(default_factory=dict)

    @property
    def mean_edits_per_modified(self) -> float:
        return self.total_edits / self.modified if self.modified else 0.0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "modified": self.modified,
            "total_edits": self.total_edits,
            "mean_edits_per_question": self.total_edits / self.n if self.n else 0.0,
            "mean_edits_per_modified": self.mean_edits_per_modified,
            "budget": self.budget,
            "seed": self.seed,
            "providers": list(self.providers),
            "provider_counts": dict(sorted(self.provider_counts.items())),
            "errors": list(self.errors),
            "substitutions": self.substitutions,
        }


def generate_syn_dataset(
    examples: Sequence[Example],
    schemas: Mapping[str, DatabaseSchema],
    providers: Sequence[Provider],
    budget: int,
    seed: int,
    jobs: int = 1,
) -> tuple[list[PerturbedExample], GenerationReport]:
    """One output per input, in input order. Examples without a schema pass through unchanged."""
    if budget < 0:
        raise PlanValidationError("budget must be non-negative")

    def one(i: int) -> PerturbedExample:
        ex = examples[i]
        schema = schemas.get(ex.db_id)
        if schema is None:
            out = apply_plan(ex, SubstitutionPlan())
            out.error = f"no schema for db_id {ex.db_id!r}"
            return out
        try:
            return perturb_example(ex, schema, providers, budget, derive_seed(seed, i), i)
        except SqlRobustError as exc:
            out = apply_plan(ex, SubstitutionPlan())
            out.error = str(exc)
            return out

    if jobs > 1 and len(examples) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(one, range(len(examples))))
    else:
        outputs = [one(i) for i in range(len(examples))]

    report = GenerationReport(n=len(outputs), budget=budget, seed=seed, providers=tuple(p.name for p in providers))
    counts = Counter()
    for i, out in enumerate(outputs):
        if out.error:
            report.errors.append({"index": i, "error": out.error})
        if out.plan.edits:
            report.modified += 1
            report.total_edits += len(out.plan)
            counts.update(e.provider for e in out.plan.edits)
    report.provider_counts = dict(counts)
    report.substitutions = substitution_report(examples, [o.as_example() for o in outputs], schemas)
    return outputs, report


def invariant_violations(
    original: Example, perturbed: PerturbedExample, schema: DatabaseSchema, budget: int
) -> list[str]:
    """Independent check of the construction rules for one output; empty when all hold."""
    out = []
    if perturbed.query != original.query:
        out.append("sql changed")
    if len(perturbed.plan) > budget:
        out.append(f"{len(perturbed.plan)} edits exceed budget {budget}")
    if (perturbed.question != original.question) != bool(perturbed.plan.edits):
        out.append("question changed without a plan, or plan left it unchanged")
    tokens = tokenize(original.question)
    tag_spans = {t.span for t in link(original.question, schema).tags}
    rebuilt, last = [], 0
    for e in sorted(perturbed.plan.edits, key=lambda e: e.span):
        s, t = e.span
        if e.span not in tag_spans:
            out.append(f"edit {e.span} is not a linked span")
        if any(tok.norm in RESERVED_WORDS for tok in tokens[s:t]):
            out.append(f"edit {e.span} touches a reserved word")
        if has_reserved(e.replacement.split()):
            out.append(f"replacement {e.replacement!r} introduces a reserved word")
        rebuilt.append(original.question[last : tokens[s].start])
        rebuilt.append(_match_case(e.replacement, original.question[tokens[s].start : tokens[t - 1].end], s == 0))
        last = tokens[t - 1].end
    rebuilt.append(original.question[last:])
    if "".join(rebuilt) != perturbed.question:
        out.append("text outside edited spans changed")
    return out
