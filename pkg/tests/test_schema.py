import json

import pytest
from hypothesis import given, strategies as st

from sqlrobust.errors import SchemaParseError, ValidationError
from sqlrobust.schema import (
    AnnotationSet,
    DatabaseSchema,
    attach_annotations,
    dump_schemas,
    load_cell_values,
    load_schemas,
    split_annotation_file,
)
from sqlrobust.text import normalize_phrase

from conftest import FIXTURES


def _entry(**over):
    e = {
        "db_id": "tiny",
        "table_names_original": ["Pets", "Owner"],
        "table_names": ["pets", "owner"],
        "column_names_original": [[-1, "*"], [0, "PetID"], [0, "pet_age"], [1, "OwnerID"], [1, "PetID"]],
        "column_names": [[-1, "*"], [0, "pet id"], [0, "pet age"], [1, "owner id"], [1, "pet id"]],
        "column_types": ["text", "number", "number", "number", "number"],
        "primary_keys": [1, 3],
        "foreign_keys": [[4, 1]],
    }
    e.update(over)
    return e


def test_default_annotations_come_from_human_names():
    s = DatabaseSchema.from_spider_dict(_entry())
    assert s.tables[0].annotations.default == "pets"
    assert s.columns[2].annotations == AnnotationSet("pet age")
    assert s.columns[0].is_star and s.star_id == 0


def test_spider_dict_round_trip(tmp_path):
    schemas = load_schemas(FIXTURES / "tables.json")
    dump_schemas(schemas, tmp_path / "t.json")
    again = load_schemas(tmp_path / "t.json")
    assert [s.to_spider_dict() for s in again] == [s.to_spider_dict() for s in schemas]


def test_lookup_is_case_insensitive():
    s = DatabaseSchema.from_spider_dict(_entry())
    assert s.table_id("pets") == 0 and s.table_id("OWNER") == 1
    assert s.column_id(0, "petid") == 1
    assert s.resolve_path("Owner.PetID") == ("column", 4)
    with pytest.raises(ValidationError):
        s.resolve_path("Owner.age")


@pytest.mark.parametrize("field, value", [
    ("foreign_keys", [[4, 9]]),
    ("foreign_keys", [[2, 2]]),
    ("primary_keys", [0]),
    ("table_names_original", ["Pets", "pets"]),
])
def test_invalid_schemas_are_rejected(field, value):
    with pytest.raises(ValidationError):
        DatabaseSchema.from_spider_dict(_entry(**{field: value}))


def test_unknown_column_type_becomes_other():
    s = DatabaseSchema.from_spider_dict(_entry(column_types=["text", "blob", "number", "number", "number"]))
    assert s.columns[1].col_type == "other"
    assert s.to_spider_dict()["column_types"][1] == "others"


def test_fk_within_one_table_is_allowed():
    s = DatabaseSchema.from_spider_dict(_entry(foreign_keys=[[2, 1]]))
    assert s.foreign_keys == ((2, 1),)


def test_unreadable_schema_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaParseError):
        load_schemas(bad)


def test_annotation_attach_is_idempotent():
    s = DatabaseSchema.from_spider_dict(_entry())
    ann = {"Pets": ["animals"], "Pets.pet_age": ["Animal Age", "years old"]}
    once = attach_annotations(s, ann)
    assert once.tables[0].annotations.phrases == ("pets", "animals")
    assert once.columns[2].annotations.synonyms == ("animal age", "years old")
    assert attach_annotations(once, ann) == once


def test_annotation_list_with_duplicates_is_an_error():
    s = DatabaseSchema.from_spider_dict(_entry())
    with pytest.raises(ValidationError):
        attach_annotations(s, {"Pets": ["animals", "Animals"]})
    with pytest.raises(ValidationError):
        attach_annotations(s, {"Pets": "animals"})


def test_cell_values_are_deduped_and_capped():
    s = DatabaseSchema.from_spider_dict(_entry())
    s = load_cell_values(s, {"Pets.pet_age": [1, 2, 2, None, 3, 4]}, cap=3)
    assert s.columns[2].cell_values == ("1", "2", "3")
    with pytest.raises(ValidationError):
        load_cell_values(s, {"Pets": ["x"]})


def test_split_annotation_file():
    flat = {"Pets": ["animals"]}
    assert split_annotation_file(flat) == {"": flat}
    nested = {"tiny": flat}
    assert split_annotation_file(nested) == nested


@given(st.text(max_size=30))
def test_normalize_phrase_is_idempotent(text):
    once = normalize_phrase(text)
    assert normalize_phrase(once) == once
    assert once == once.strip() and "  " not in once


@given(st.lists(st.from_regex(r"[a-z]{1,6}( [a-z]{1,6})?", fullmatch=True), min_size=1, max_size=6))
def test_annotation_extend_never_duplicates(phrases):
    a = AnnotationSet("base").extend(phrases)
    assert len(set(a.phrases)) == len(a.phrases)
    assert a.default == "base"
    assert set(phrases) - {"base"} <= set(a.synonyms)
