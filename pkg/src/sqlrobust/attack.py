"""Black-box synonym attacks that flip a predictor's exact match.

Per example: check the clean prediction, rank substitutable spans, then
greedily try provider candidates span by span until the prediction no longer
matches the gold query. Successes are confirmed with one more predict call.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .dataset import Example
from .errors import PredictTimeout, SqlRobustError, TransportError, ValidationError
from .linking import link
from .metrics import exact_match
from .perturb import PlanEdit, SubstitutionPlan, _cap, apply_plan, find_substitutable_spans
from .predictors import PredictorHandle, predict
from .providers import Provider, SpanContext
from .schema import DatabaseSchema
from .text import tokenize

log = logging.getLogger(__name__)

RANKING_POLICIES = ("deletion", "linking")


@dataclass(frozen=True)
class AttackConfig:
    max_edits: int = 1
    k: int = 5
    provider_order: tuple[str, ...] = ("lexicon", "contextual", "embedding")
    ranking: str = "deletion"
    seed: int = 0
    retries: int = 0

    def __post_init__(self):
        if self.max_edits < 1 or self.k < 1:
            raise ValidationError("attack needs max_edits >= 1 and k >= 1")
        if self.ranking not in RANKING_POLICIES:
            raise ValidationError(f"unknown ranking policy {self.ranking!r}")

    def to_dict(self) -> dict:
        return {
            "max_edits": self.max_edits,
            "k": self.k,
            "provider_order": list(self.provider_order),
            "ranking": self.ranking,
            "seed": self.seed,
            "retries": self.retries,
        }


@dataclass
class AttackResult:
    index: int
    status: str  # success | failed | pre-failed | error
    question: str
    plan: SubstitutionPlan = field(default_factory=SubstitutionPlan)
    queries_used: int = 0  # predict calls of the ranking and search phases
    clean_queries: int = 0
    verify_queries: int = 0
    nondeterministic: bool = False
    attackable: bool = False
    trials: list = field(default_factory=list)
    error: str | None = None

    @property
    def success(self) -> bool:
        return self.status == "success"

    @property
    def total_queries(self) -> int:
        return self.clean_queries + self.queries_used + self.verify_queries

    def to_dict(self) -> dict:
        out = {
            "id": self.index,
            "success": self.success,
            "status": self.status,
            "question": self.question,
            "queries_used": self.queries_used,
            "clean_queries": self.clean_queries,
            "verify_queries": self.verify_queries,
            "edits": [e.to_dict() for e in self.plan.edits],
            "nondeterministic": self.nondeterministic,
            "trials": self.trials,
        }
        if self.error:
            out["error"] = self.error
        return out


class _Session:
    """Counts predict calls for one example and hands out request ids."""

    def __init__(self, handle, example: Example, index: int, schema: DatabaseSchema, retries: int):
        self.handle, self.example, self.index, self.schema = handle, example, index, schema
        self.retries = retries
        self.calls = 0
        self.gold = example.gold({example.db_id: schema})

    def matches(self, question: str) -> bool:
        rid = f"{self.index}-{self.calls}"
        self.calls += 1
        pred = predict(self.handle, question, self.example.db_id, self.schema, rid, self.retries)
        return exact_match(pred.query, self.gold)


def _delete_span(question: str, span: tuple[int, int]) -> str:
    tokens = tokenize(question)
    s, e = span
    left = question[: tokens[s].start].rstrip()
    right = question[tokens[e - 1].end :].lstrip()
    return f"{left} {right}".strip() if left and right and right[0].isalnum() else left + right


def rank_spans(session: _Session, tags, policy: str) -> list:
    if policy == "linking":
        return sorted(tags, key=lambda t: (not t.exact, -(t.span[1] - t.span[0]), t.span))
    impact = {}
    for tag in tags:
        try:
            impact[tag.span] = not session.matches(_delete_span(session.example.question, tag.span))
        except TransportError:
            impact[tag.span] = False
    return sorted(tags, key=lambda t: (not impact[t.span], t.span))


def attack_example(
    handle: PredictorHandle,
    example: Example,
    schema: DatabaseSchema,
    providers: Sequence[Provider],
    config: AttackConfig,
    index: int = 0,
) -> AttackResult:
    session = _Session(handle, example, index, schema, config.retries)
    if not session.matches(example.question):
        return AttackResult(index, "pre-failed", example.question, clean_queries=session.calls)
    clean_calls = session.calls
    session.calls = 0

    linked = link(example.question, schema)
    tags = find_substitutable_spans(linked)
    result = AttackResult(index, "failed", example.question, clean_queries=clean_calls, attackable=bool(tags))
    if not tags:
        return result
    words = tuple(linked.words)
    edits: list[PlanEdit] = []
    for tag in rank_spans(session, tags, config.ranking):
        if len(edits) >= config.max_edits:
            break
        ctx = SpanContext(example.db_id, example.question, words, tag.span, index)
        first = None
        for provider in providers:
            try:
                cands = provider.candidates(ctx)[: config.k]
            except SqlRobustError as exc:
                log.warning("provider %s failed on example %d: %s", provider.name, index, exc)
                continue
            for cand in cands:
                edit = PlanEdit(tag.span, ctx.phrase, _cap(cand), tag, provider.name)
                first = first or edit
                plan = SubstitutionPlan(tuple(sorted([*edits, edit], key=lambda e: e.span)))
                question = apply_plan(example, plan).question
                try:
                    ok = session.matches(question)
                except TransportError as exc:
                    result.trials.append({"question": question, "verdict": "error", "error": str(exc)})
                    continue
                result.trials.append({"question": question, "verdict": "match" if ok else "flip"})
                if not ok:
                    result.plan, result.question = plan, question
                    result.queries_used = session.calls
                    return _verify(session, result)
        if first is not None:
            edits.append(first)
    result.plan = SubstitutionPlan(tuple(sorted(edits, key=lambda e: e.span)))
    result.queries_used = session.calls
    return result


def _verify(session: _Session, result: AttackResult) -> AttackResult:
    before = session.calls
    try:
        still_fails = not session.matches(result.question)
    except TransportError as exc:
        still_fails, result.error = False, f"verification failed: {exc}"
    result.verify_queries = session.calls - before
    if still_fails:
        result.status = "success"
    else:
        result.status = "failed"
        result.nondeterministic = result.error is None
    return result


@dataclass
class CampaignReport:
    results: list[AttackResult]
    config: AttackConfig

    def to_dict(self) -> dict:
        attacked = [r for r in self.results if r.status in ("success", "failed")]
        successes = sum(r.success for r in attacked)
        edits = [len(r.plan) for r in attacked if r.success]
        return {
            "success_rate": successes / len(attacked) if attacked else 0.0,
            "n": len(self.results),
            "attacked": len(attacked),
            "attackable": sum(r.attackable for r in self.results),
            "successes": successes,
            "pre_failed": sum(r.status == "pre-failed" for r in self.results),
            "errors": sum(r.status == "error" for r in self.results),
            "nondeterministic": sum(r.nondeterministic for r in self.results),
            "mean_queries": sum(r.queries_used for r in attacked) / len(attacked) if attacked else 0.0,
            "mean_edits_per_success": sum(edits) / len(edits) if edits else 0.0,
            "config": self.config.to_dict(),
            "per_example": [r.to_dict() for r in self.results],
        }


def generate_worstcase_set(
    handle: PredictorHandle,
    examples: Sequence[Example],
    schemas: Mapping[str, DatabaseSchema],
    providers: Sequence[Provider],
    config: AttackConfig,
    jobs: int = 1,
) -> tuple[list[dict], CampaignReport]:
    """Attack every example; keep the adversarial question on success, the original otherwise."""

    def one(i: int) -> AttackResult:
        ex = examples[i]
        schema = schemas.get(ex.db_id)
        if schema is None:
            return AttackResult(i, "error", ex.question, error=f"no schema for db_id {ex.db_id!r}")
        try:
            return attack_example(handle, ex, schema, providers, config, i)
        except (SqlRobustError, PredictTimeout) as exc:
            return AttackResult(i, "error", ex.question, error=f"{type(exc).__name__}: {exc}")

    if jobs > 1 and len(examples) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, range(len(examples))))
    else:
        results = [one(i) for i in range(len(examples))]

    if results and all(r.status == "error" and r.error and "Transport" in r.error for r in results):
        raise TransportError(f"predictor unreachable for all {len(results)} examples: {results[0].error}")

    rows = []
    for ex, r in zip(examples, results):
        row = ex.to_dict()
        if r.success:
            row["question"] = r.question
            row["original_question"] = ex.question
            row["edits"] = [e.to_dict() for e in r.plan.edits]
        rows.append(row)
    return rows, CampaignReport(results, config)


def adversarial_augment(train: Sequence[Example], results: Sequence[AttackResult]) -> tuple[list[dict], dict]:
    """Originals followed by successful adversarial variants, deduplicated on (db_id, question)."""
    rows, seen = [], set()
    for ex in train:
        key = (ex.db_id, ex.question)
        if key not in seen:
            seen.add(key)
            rows.append(ex.to_dict())
    n_orig = len(rows)
    for r in results:
        if not r.success:
            continue
        ex = train[r.index]
        key = (ex.db_id, r.question)
        if key in seen:
            continue
        seen.add(key)
        rows.append({**ex.to_dict(), "question": r.question})
    n_adv = len(rows) - n_orig
    meta = {"originals": n_orig, "adversarial": n_adv, "ratio": n_adv / n_orig if n_orig else 0.0}
    return rows, meta
