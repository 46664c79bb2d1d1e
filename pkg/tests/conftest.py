import json
from pathlib import Path

import pytest

from sqlrobust.dataset import load_examples
from sqlrobust.providers import SynonymLexicon
from sqlrobust.schema import attach_annotations, load_cell_values, load_schemas, schemas_by_id

FIXTURES = Path(__file__).parent / "fixtures"

_CRITERIA: dict[int, tuple[str, str]] = {}


def load_fixture_schemas(annotations: bool = False) -> dict:
    schemas = schemas_by_id(load_schemas(FIXTURES / "tables.json"))
    values = json.loads((FIXTURES / "cell_values.json").read_text())
    for db, v in values.items():
        schemas[db] = load_cell_values(schemas[db], v)
    if annotations:
        ann = json.loads((FIXTURES / "brittle_annotations.json").read_text())
        for db, a in ann.items():
            schemas[db] = attach_annotations(schemas[db], a)
    return schemas


@pytest.fixture(scope="session")
def schemas():
    return load_fixture_schemas()


@pytest.fixture(scope="session")
def annotated_schemas():
    return load_fixture_schemas(annotations=True)


@pytest.fixture(scope="session")
def brittle():
    return load_examples(FIXTURES / "brittle_dev.json")


@pytest.fixture(scope="session")
def oov_lexicon():
    return SynonymLexicon.from_dict(json.loads((FIXTURES / "oov_lexicon.json").read_text()))


@pytest.fixture(scope="session")
def corpus():
    return json.loads((FIXTURES / "sql_corpus.json").read_text())


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    num = getattr(item.function, "criterion", None)
    if num is None or report.when not in ("setup", "call"):
        return
    title = (item.function.__doc__ or "").strip().splitlines()[0]
    if report.failed:
        _CRITERIA[num] = ("FAIL", title)
    elif report.when == "call":
        _CRITERIA[num] = ("PASS", title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, title = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {title}")
