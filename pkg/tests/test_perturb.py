import random

import pytest
from hypothesis import given, settings, strategies as st

from sqlrobust.dataset import Example
from sqlrobust.errors import PlanValidationError
from sqlrobust.linking import link
from sqlrobust.perturb import (
    MAX_REPLACEMENT_TOKENS,
    PlanEdit,
    SubstitutionPlan,
    apply_plan,
    derive_seed,
    find_substitutable_spans,
    generate_syn_dataset,
    invariant_violations,
    perturb_example,
    plan_substitutions,
)
from sqlrobust.providers import LexiconProvider, SynonymLexicon

from conftest import load_fixture_schemas
from gen import synthetic_corpus, synthetic_lexicon

SCHEMAS = load_fixture_schemas()
LEXICON = LexiconProvider(SynonymLexicon.from_dict(synthetic_lexicon(SCHEMAS)))
CUST = "customers_and_addresses"


def spans_of(question, db):
    lq = link(question, SCHEMAS[db])
    return [(t.span, lq.span_text(t.span)) for t in find_substitutable_spans(lq)]


def test_substitutable_spans_include_tables_columns_and_values():
    assert spans_of("Which courses are taught on days MTW?", "college_1") == [
        ((1, 2), "courses"), ((5, 6), "days"), ((6, 7), "mtw")]


def test_reserved_words_are_never_substitutable():
    assert spans_of("What is the name of the dog?", "pets_1") == [((6, 7), "dog")]


def _plan(question, db, repl):
    lq = link(question, SCHEMAS[db])
    edits = [PlanEdit(t.span, lq.span_text(t.span), repl[lq.span_text(t.span)], t, "test")
             for t in lq.tags if lq.span_text(t.span) in repl]
    return SubstitutionPlan(tuple(edits))


def test_apply_plan_replaces_by_character_offsets():
    ex = Example(CUST, "What is the phone of all customers?", "SELECT phone FROM customers")
    out = apply_plan(ex, _plan(ex.question, CUST, {"phone": "telephone", "customers": "clients"}))
    assert out.question == "What is the telephone of all clients?"
    assert out.query == ex.query
    assert out.surface == ("phone", "customers")
    d = out.to_dict()
    assert d["original_question"] == ex.question and [e["replacement"] for e in d["edits"]] == ["telephone", "clients"]


def test_apply_plan_keeps_sentence_case():
    ex = Example(CUST, "Customers with a phone?", "SELECT phone FROM customers")
    out = apply_plan(ex, _plan(ex.question, CUST, {"customers": "clients"}))
    assert out.question == "Clients with a phone?"


def test_overlapping_edits_are_rejected():
    ex = Example(CUST, "What is the payment method?", "SELECT payment_method FROM customers")
    tag = link(ex.question, SCHEMAS[CUST]).tags[0]
    plan = SubstitutionPlan((PlanEdit((3, 5), "payment method", "x", tag, "t"),
                             PlanEdit((4, 5), "method", "y", tag, "t")))
    with pytest.raises(PlanValidationError):
        apply_plan(ex, plan)
    with pytest.raises(PlanValidationError):
        apply_plan(ex, SubstitutionPlan((PlanEdit((3, 99), "", "x", tag, "t"),)))


def test_budget_zero_is_identity():
    ex = Example(CUST, "What is the phone of all customers?", "SELECT phone FROM customers")
    out = perturb_example(ex, SCHEMAS[CUST], [LEXICON], budget=0, seed=1)
    assert out.question == ex.question and not out.plan.edits
    with pytest.raises(PlanValidationError):
        perturb_example(ex, SCHEMAS[CUST], [LEXICON], budget=-1, seed=1)


def test_long_replacements_are_capped():
    lq = link("What is the phone?", SCHEMAS[CUST])
    lex = LexiconProvider(SynonymLexicon.from_dict({"global": {"phone": ["a b c d e f g"]}}))
    plan = plan_substitutions(lq, [lex], budget=1, seed=0)
    assert len(plan.edits[0].replacement.split()) == MAX_REPLACEMENT_TOKENS


def test_first_provider_with_candidates_wins():
    lq = link("What is the phone?", SCHEMAS[CUST])
    empty = LexiconProvider(SynonymLexicon(), name="empty")
    other = LexiconProvider(SynonymLexicon.from_dict({"global": {"phone": ["mobile"]}}), name="other")
    plan = plan_substitutions(lq, [empty, LEXICON, other], budget=1, seed=0)
    assert plan.edits[0].provider == "lexicon"


def test_reserved_only_questions_pass_through():
    questions = [
        ("pets_1", "What is the name?"), ("pets_1", "Show the age and name."), ("college_1", "List the year."),
        ("pets_1", "How many pets are there?"), ("pets_1", "What is the weight of each pet?"),
        ("college_1", "List all courses."), ("college_1", "Show the salary of instructors."),
        (CUST, "What is the phone of all customers?"), (CUST, "List the email of customers."),
        ("world_1", "Which countries are in Asia?"),
    ]
    examples = [Example(db, q, "SELECT 1") for db, q in questions]
    outs, report = generate_syn_dataset(examples, SCHEMAS, [LEXICON], budget=2, seed=3)
    unchanged = [o.original_question for o in outs if o.question == o.original_question]
    assert unchanged == [q for _, q in questions[:3]]
    assert report.modified == 7


def test_missing_schema_is_reported_and_passed_through():
    ex = [Example("nope", "What is the phone?", "SELECT 1")]
    outs, report = generate_syn_dataset(ex, SCHEMAS, [LEXICON], budget=1, seed=0)
    assert outs[0].question == ex[0].question
    assert report.errors and report.errors[0]["index"] == 0


def test_derive_seed_is_stable():
    assert derive_seed(7, 3) == derive_seed(7, 3)
    assert derive_seed(7, 3) != derive_seed(7, 4) != derive_seed(8, 3)


CORPUS = synthetic_corpus(SCHEMAS, 60, seed=11)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 3))
def test_outputs_satisfy_invariants(seed, budget):
    outs, report = generate_syn_dataset(CORPUS, SCHEMAS, [LEXICON], budget=budget, seed=seed)
    assert len(outs) == len(CORPUS)
    for ex, out in zip(CORPUS, outs):
        assert invariant_violations(ex, out, SCHEMAS[ex.db_id], budget) == []
    assert report.total_edits <= budget * report.modified


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_parallel_generation_matches_serial(seed):
    a, _ = generate_syn_dataset(CORPUS, SCHEMAS, [LEXICON], budget=2, seed=seed, jobs=1)
    b, _ = generate_syn_dataset(CORPUS, SCHEMAS, [LEXICON], budget=2, seed=seed, jobs=4)
    assert [x.to_dict() for x in a] == [x.to_dict() for x in b]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_invariant_checker_catches_tampering(seed):
    outs, _ = generate_syn_dataset(CORPUS[:10], SCHEMAS, [LEXICON], budget=1, seed=seed)
    rng = random.Random(seed)
    i = rng.randrange(10)
    bad = outs[i]
    bad.question = bad.question + " extra"
    assert invariant_violations(CORPUS[i], bad, SCHEMAS[CORPUS[i].db_id], 1)
