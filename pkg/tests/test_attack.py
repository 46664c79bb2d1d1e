import socket
import sys
import threading
import time

import pytest
from hypothesis import given, settings, strategies as st

from sqlrobust.attack import AttackConfig, AttackResult, adversarial_augment, attack_example, generate_worstcase_set
from sqlrobust.dataset import Example
from sqlrobust.errors import PredictTimeout, ProtocolError, TransportError, ValidationError
from sqlrobust.predictors import (
    EchoPredictor,
    HttpPredictor,
    InProcessPredictor,
    SubprocessPredictor,
    baseline_lexical_predictor,
    open_predictor,
    predict,
)
from sqlrobust.providers import LexiconProvider, SynonymLexicon
from sqlrobust.sql_parser import parse_sql
from sqlrobust import stub_predictor

from conftest import FIXTURES

PY = sys.executable
CUST = "customers_and_addresses"


@pytest.fixture(scope="module")
def setup(brittle, schemas, oov_lexicon):
    return brittle, schemas, [LexiconProvider(oov_lexicon)]


class Scripted:
    """Answers gold except on the listed call numbers, where it answers garbage."""

    def __init__(self, gold, bad_calls=()):
        self.gold, self.bad = gold, set(bad_calls)
        self.calls = 0

    def request(self, request_id, db_id, question):
        n = self.calls
        self.calls += 1
        return "SELEC nonsense" if n in self.bad else self.gold


def test_echo_stub_over_subprocess_is_never_flipped(setup):
    brittle, schemas, providers = setup
    cmd = [PY, "-m", "sqlrobust.stub_predictor", "echo", "--dataset", str(FIXTURES / "brittle_dev.json")]
    handle = SubprocessPredictor(cmd, timeout=30)
    try:
        rows, report = generate_worstcase_set(handle, brittle[:6], schemas, providers, AttackConfig(max_edits=2))
    finally:
        handle.close()
    d = report.to_dict()
    assert d["successes"] == 0 and d["attacked"] == 6
    assert [r["question"] for r in rows] == [e.question for e in brittle[:6]]


def test_garbage_predictor_is_pre_failed(setup):
    brittle, schemas, providers = setup
    handle = InProcessPredictor(lambda q, s: "SELEC x", schemas)
    r = attack_example(handle, brittle[0], schemas[brittle[0].db_id], providers, AttackConfig(), 0)
    assert r.status == "pre-failed" and r.clean_queries == 1 and r.queries_used == 0
    assert predict(handle, "q", "pets_1", schemas["pets_1"], "0-0").query is None


def test_baseline_is_flipped_and_verified(setup):
    brittle, schemas, providers = setup
    handle = InProcessPredictor(baseline_lexical_predictor, schemas)
    r = attack_example(handle, brittle[0], schemas[brittle[0].db_id], providers, AttackConfig(max_edits=3), 0)
    assert r.status == "success" and r.verify_queries == 1
    assert r.question != brittle[0].question and 1 <= len(r.plan) <= 3
    pred = baseline_lexical_predictor(r.question, schemas[brittle[0].db_id])
    assert pred != brittle[0].gold(schemas)


def test_always_gold_predictor_spends_the_whole_budget(schemas):
    ex = Example(CUST, "What is the phone and email of customers?", "SELECT phone , email FROM customers")
    lex = LexiconProvider(SynonymLexicon.from_dict(
        {"global": {"phone": ["telephone", "mobile"], "email": ["mail"], "customers": ["clients"]}}))
    handle = Scripted(ex.query)
    r = attack_example(handle, ex, schemas[CUST], [lex], AttackConfig(max_edits=2, k=5), 0)
    assert r.status == "failed" and len(r.plan) == 2
    # three deletion probes, then every candidate of the first two ranked spans
    assert r.queries_used == 3 + len(r.trials)
    assert r.clean_queries == 1 and r.verify_queries == 0
    assert handle.calls == r.total_queries


def test_linking_policy_makes_no_ranking_calls(schemas):
    ex = Example(CUST, "What is the phone?", "SELECT phone FROM customers")
    lex = LexiconProvider(SynonymLexicon.from_dict({"global": {"phone": ["telephone"]}}))
    r = attack_example(Scripted(ex.query), ex, schemas[CUST], [lex], AttackConfig(ranking="linking"), 0)
    assert r.queries_used == len(r.trials) == 1


def test_flaky_flip_is_marked_nondeterministic(schemas):
    ex = Example(CUST, "What is the phone?", "SELECT phone FROM customers")
    lex = LexiconProvider(SynonymLexicon.from_dict({"global": {"phone": ["telephone"]}}))
    # call 0 clean, call 1 deletion probe, call 2 the candidate flips, call 3 verification matches
    r = attack_example(Scripted(ex.query, bad_calls={2}), ex, schemas[CUST], [lex], AttackConfig(), 0)
    assert r.status == "failed" and r.nondeterministic and r.verify_queries == 1


def test_config_validation():
    with pytest.raises(ValidationError):
        AttackConfig(max_edits=0)
    with pytest.raises(ValidationError):
        AttackConfig(ranking="random")


def test_unreachable_predictor_for_every_example_raises(setup):
    brittle, schemas, providers = setup
    handle = HttpPredictor("http://127.0.0.1:9/predict", timeout=2)
    with pytest.raises(TransportError):
        generate_worstcase_set(handle, brittle[:2], schemas, providers, AttackConfig())


def test_augmentation_counts():
    train = [Example("pets_1", f"question {i}", "SELECT 1") for i in range(100)]
    results = [AttackResult(i, "success", f"variant {i}") for i in range(30)]
    results += [AttackResult(30, "success", "question 31"), AttackResult(40, "failed", "x")]
    rows, meta = adversarial_augment(train, results)
    assert len(rows) == 130
    assert meta == {"originals": 100, "adversarial": 30, "ratio": 0.3}


def test_subprocess_timeout_and_stale_ids(tmp_path):
    slow = SubprocessPredictor([PY, "-c", "import time; time.sleep(30)"], timeout=0.5)
    with pytest.raises(PredictTimeout):
        slow.request("0-0", "db", "q")
    slow.close()
    script = tmp_path / "stale.py"
    script.write_text(
        "import json, sys\n"
        "for line in sys.stdin:\n"
        "    req = json.loads(line)\n"
        "    print(json.dumps({'id': 'old', 'sql': 'x'}), flush=True)\n"
        "    print(json.dumps({'id': req['id'], 'sql': 'SELECT 1'}), flush=True)\n"
    )
    p = SubprocessPredictor([PY, str(script)], timeout=10)
    assert p.request("7-1", "db", "q") == "SELECT 1"
    p.close()


def test_subprocess_bad_json_is_protocol_error():
    p = SubprocessPredictor([PY, "-c", "import sys\nfor l in sys.stdin: print('oops', flush=True)"], timeout=10)
    with pytest.raises(ProtocolError):
        p.request("0-0", "db", "q")
    p.close()


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_http_transport_against_stub(brittle, schemas):
    port = _free_port()
    handle = EchoPredictor([e.query for e in brittle])
    threading.Thread(target=stub_predictor.serve_http, args=(handle, port), daemon=True).start()
    client = open_predictor(f"http://127.0.0.1:{port}/", timeout=10)
    for _ in range(50):
        try:
            sql = client.request("3-0", brittle[3].db_id, "anything")
            break
        except TransportError:
            time.sleep(0.05)
    assert sql == brittle[3].query


def test_open_predictor_picks_transport():
    assert isinstance(open_predictor("https://example.invalid/x"), HttpPredictor)
    assert isinstance(open_predictor("python -m thing"), SubprocessPredictor)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 19), st.integers(1, 3), st.integers(1, 4))
def test_attack_accounting_invariants(brittle, schemas, oov_lexicon, i, max_edits, k):
    ex = brittle[i]
    handle = InProcessPredictor(baseline_lexical_predictor, schemas)
    r = attack_example(handle, ex, schemas[ex.db_id], [LexiconProvider(oov_lexicon)],
                       AttackConfig(max_edits=max_edits, k=k), i)
    assert len(r.plan) <= max_edits
    assert r.clean_queries == 1
    assert r.verify_queries == (1 if r.trials and r.trials[-1]["verdict"] == "flip" else 0)
    if r.success:
        assert not baseline_lexical_predictor(r.question, schemas[ex.db_id]) == parse_sql(ex.query, schemas[ex.db_id])
    else:
        assert all(t["verdict"] == "match" for t in r.trials)
