from hypothesis import given, settings, strategies as st

from sqlrobust.linking import Target, link, mas_select, model_input, resolve_for_model
from sqlrobust.schema import attach_annotations

from conftest import load_fixture_schemas

SCHEMAS = load_fixture_schemas()


def tags_of(question, db):
    return [(lq.span_text(t.span), t.kind) for lq in [link(question, SCHEMAS[db])] for t in lq.tags]


def test_exact_and_partial_links():
    assert tags_of("What is the flight number for airline JetBlue?", "flight_2") == [
        ("flight number", "exact-column"), ("airline", "exact-column")]
    assert tags_of("List the flight code of airports.", "flight_2") == [
        ("flight", "partial-column"), ("code", "partial-column"), ("airports", "exact-table")]


def test_longest_span_wins():
    lq = link("Show the payment method of customers.", SCHEMAS["customers_and_addresses"])
    texts = [lq.span_text(t.span) for t in lq.tags]
    assert "payment method" in texts and "payment" not in texts and "method" not in texts


def test_cell_value_link():
    s = SCHEMAS["pets_1"]
    value = next(v for c in s.columns for v in c.cell_values)
    lq = link(f"How many pets are {value}?", s)
    assert any(t.kind == "cell-value" and t.target.kind == "value" for t in lq.tags)


def test_unknown_words_are_not_linked():
    assert link("zebra quokka", SCHEMAS["pets_1"]).tags == ()


def test_link_serializes():
    d = link("List the weight of pets.", SCHEMAS["pets_1"]).to_dict()
    assert d["tokens"][-1] == "." and all({"span", "target", "kind"} <= set(t) for t in d["tags"])


def test_mas_picks_occurring_synonym():
    s = attach_annotations(SCHEMAS["customers_and_addresses"], {"Customers.phone": ["telephone", "phone number"]})
    r = mas_select("What is the telephone of each customer?", s)
    key = ("column", s.resolve_path("Customers.phone")[1])
    assert r.selection[key] == "telephone"
    assert r.to_dict()["changed"] == {"Customers.phone": "telephone"}
    assert r.as_schema().columns[key[1]].annotations.phrases == ("telephone",)


def test_mas_prefers_longest_then_list_order():
    s = attach_annotations(SCHEMAS["customers_and_addresses"],
                           {"Customers.phone": ["number", "phone number", "contact number"]})
    key = ("column", s.resolve_path("Customers.phone")[1])
    assert mas_select("the phone number please", s).selection[key] == "phone number"
    assert mas_select("the contact number please", s).selection[key] == "contact number"
    assert mas_select("nothing relevant", s).selection[key] == "phone"


def test_mas_reports_collisions():
    s = attach_annotations(SCHEMAS["world_1"], {"city.District": ["area"], "country.Region": ["area"]})
    r = mas_select("Which area is largest?", s)
    assert len(r.collisions) == 1
    assert sorted(r.to_dict()["collisions"][0]["items"]) == ["city.District", "country.Region"]


def test_singleton_schema_model_input_is_unchanged():
    s = SCHEMAS["pets_1"]
    assert resolve_for_model(mas_select("How many pets weigh more than 10?", s)) == model_input(s)


WORDS = st.sampled_from("the pets weight of student city code age what how many dog cat , ? is".split())


@settings(max_examples=100, deadline=None)
@given(st.lists(WORDS, max_size=14), st.sampled_from(sorted(SCHEMAS)))
def test_link_tags_are_disjoint_and_in_bounds(words, db):
    lq = link(" ".join(words), SCHEMAS[db])
    spans = [t.span for t in lq.tags]
    assert spans == sorted(spans)
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        assert a1 <= b0
    for t in lq.tags:
        assert 0 <= t.span[0] < t.span[1] <= len(lq.tokens)
        if t.exact and t.kind != "cell-value":
            assert lq.span_text(t.span) == t.matched_annotation
        assert isinstance(t.target, Target)


@settings(max_examples=100, deadline=None)
@given(st.lists(WORDS, max_size=14), st.sampled_from(sorted(SCHEMAS)))
def test_mas_selection_is_an_annotation_and_occurs(words, db):
    s = SCHEMAS[db]
    q = " ".join(words)
    r = mas_select(q, s)
    padded = " " + " ".join(w for w in words if w not in ",?") + " "
    for (kind, item_id), phrase in r.selected:
        ann = s.annotations_of(kind, item_id)
        assert phrase in ann.phrases
        assert phrase == ann.default or f" {phrase} " in padded
