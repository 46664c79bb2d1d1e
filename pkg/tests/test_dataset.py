import json

import pytest
from hypothesis import given, settings, strategies as st

from sqlrobust.dataset import (
    Example,
    align_edits,
    diff_stats,
    format_report,
    lcs_pairs,
    load_examples,
    parse_gold_all,
    question_edits,
    split_overlap,
    substitution_report,
)
from sqlrobust.errors import AlignmentError, InputError, SchemaParseError

from conftest import load_fixture_schemas
from oracles import brute_lcs_len

SCHEMAS = load_fixture_schemas()
CUST = "customers_and_addresses"


def test_load_spider_syn_field_names(tmp_path):
    f = tmp_path / "syn.json"
    f.write_text(json.dumps([{"db_id": "pets_1", "SpiderSynQuestion": "How many animals?",
                              "SpiderQuestion": "How many pets?", "query": "SELECT count(*) FROM pets"}]))
    ex = load_examples(f)[0]
    assert ex.question == "How many animals?" and ex.extra == {"SpiderQuestion": "How many pets?"}
    assert load_examples(f, question_field="SpiderQuestion")[0].question == "How many pets?"


def test_row_without_query_reports_its_index(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text(json.dumps([{"db_id": "pets_1", "question": "a", "query": "SELECT 1"},
                             {"db_id": "pets_1", "question": "b"}]))
    with pytest.raises(InputError, match="row 1 missing query"):
        load_examples(f)
    f.write_text("{")
    with pytest.raises(SchemaParseError):
        load_examples(f)


def test_extra_fields_survive_round_trip():
    ex = Example("pets_1", "q", "SELECT count(*) FROM pets", {"difficulty": "easy"})
    assert ex.to_dict() == {"difficulty": "easy", "db_id": "pets_1", "question": "q", "query": ex.query}


def test_parse_gold_all_lists_failures():
    exs = [Example("pets_1", "q", "SELECT count(*) FROM pets"), Example("pets_1", "q", "SELECT nope FROM pets"),
           Example("nowhere", "q", "SELECT 1")]
    errs = parse_gold_all(exs, SCHEMAS)
    assert [e.split(":")[0] for e in errs] == ["1", "2"]


def test_question_edits_classify_by_link():
    e = question_edits("Which courses are taught on days MTW?", "Which classes are taught on days Monday?",
                       SCHEMAS["college_1"])
    assert [(x.original, x.replacement, x.category) for x in e] == [
        ("courses", "classes", "schema-word"), ("mtw", "monday", "cell-value")]
    e = question_edits("Which courses are taught?", "Which courses were taught?", SCHEMAS["college_1"])
    assert [(x.original, x.replacement, x.category) for x in e] == [("are", "were", "unclassified")]


def test_phrase_swap_is_one_edit():
    e = question_edits("What is the payment method of all customers?",
                       "What is the mode of paying of all customers?", SCHEMAS[CUST])
    assert [(x.original, x.replacement) for x in e] == [("payment method", "mode of paying")]


def test_punctuation_and_case_are_not_edits():
    assert question_edits("List all pets.", "list all pets", SCHEMAS["pets_1"]) == []


def _corpus(pairs):
    orig = [Example(CUST, o, "SELECT 1") for o, _ in pairs]
    mod = [Example(CUST, m, "SELECT 1") for _, m in pairs]
    return orig, mod


def test_substitution_report_counts_repeats():
    orig, mod = _corpus([("What is the phone?", "What is the telephone?"),
                         ("List each phone.", "List each telephone."),
                         ("Show the phone of customers.", "Show the telephone of clients."),
                         ("How many customers?", "How many customers?")])
    rep = substitution_report(orig, mod, SCHEMAS)
    assert rep == {CUST: [{"original": "customers", "replacement": "clients", "count": 1},
                          {"original": "phone", "replacement": "telephone", "count": 3}]}
    text = format_report(rep)
    assert "telephone" in text and text.splitlines()[0].startswith("db_id")
    assert "What is" not in text


def test_diff_stats():
    orig, mod = _corpus([("What is the phone?", "What is the telephone?"),
                         ("Show the email of customers.", "Show the mail address of clients."),
                         ("How many customers?", "How many customers?")])
    st = diff_stats(orig, mod, SCHEMAS)
    assert (st.corpus_size, st.modified_count, st.total_edits) == (3, 2, 3)
    assert st.schema_word_mods == 2 and st.cell_value_mods == 0
    assert (st.distinct_replacement_words, st.distinct_replacement_phrases) == (2, 1)
    assert st.mean_changes_per_question == pytest.approx(1.0)
    assert st.per_domain_mean_modified == 3


def test_identical_corpora_have_zero_stats():
    orig, _ = _corpus([("What is the phone?", ""), ("List customers.", "")])
    st = diff_stats(orig, orig, SCHEMAS)
    assert st.modified_count == st.total_edits == st.distinct_substitutions == 0
    assert substitution_report(orig, orig, SCHEMAS) == {}


def test_misaligned_corpora_raise():
    orig, mod = _corpus([("a", "b"), ("c", "d")])
    with pytest.raises(AlignmentError):
        diff_stats(orig, mod[:1], SCHEMAS)
    with pytest.raises(AlignmentError):
        diff_stats(orig, [Example("pets_1", "b", ""), mod[1]], SCHEMAS)


def test_split_overlap():
    train = {"a": [{"original": "phone", "replacement": "telephone", "count": 2}]}
    dev = {"b": [{"original": "phone", "replacement": "telephone", "count": 1},
                 {"original": "email", "replacement": "mail", "count": 1}]}
    assert split_overlap(train, dev) == (1, 0.5)
    assert split_overlap(train, {}) == (0, 0.0)


WORD_LISTS = st.lists(st.sampled_from("a b c d e".split()), max_size=8)


@settings(max_examples=300)
@given(WORD_LISTS, WORD_LISTS)
def test_lcs_is_longest_and_valid(a, b):
    pairs = lcs_pairs(a, b)
    assert len(pairs) == brute_lcs_len(a, b)
    assert all(a[i] == b[j] for i, j in pairs)
    assert all(i1 < i2 and j1 < j2 for (i1, j1), (i2, j2) in zip(pairs, pairs[1:]))


@settings(max_examples=300)
@given(WORD_LISTS, WORD_LISTS)
def test_edits_rebuild_the_modified_sequence(a, b):
    out, last = [], 0
    for (i0, i1), (j0, j1) in align_edits(a, b):
        assert (i0, j0) != (i1, j1)
        out += a[last:i0] + b[j0:j1]
        last = i1
    assert out + a[last:] == b


@settings(max_examples=200)
@given(WORD_LISTS, WORD_LISTS, WORD_LISTS, st.lists(st.sampled_from("x y z".split()), min_size=1, max_size=4))
def test_single_swap_is_one_edit(pre, post, old, new):
    old = old or ["q"]
    a, b = pre + old + post, pre + new + post
    assert len(align_edits(a, b)) <= 1
