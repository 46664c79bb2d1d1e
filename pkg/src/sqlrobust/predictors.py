"""Predictor transports and the built-in lexical baseline.

Every transport speaks the same line protocol: request ``{"id", "db_id",
"question"}``, response ``{"id", "sql"}``. Responses are matched by id.
"""

from __future__ import annotations

import json
import logging
import queue
import re
import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

from .errors import InputError, PredictTimeout, ProtocolError, SqlParseError, TransportError
from .linking import link
from .schema import DatabaseSchema
from .sql_ir import ColumnRef, Condition, ConditionTree, Literal, SqlQuery, serialize
from .sql_parser import parse_sql

log = logging.getLogger(__name__)


class PredictorHandle(Protocol):
    def request(self, request_id: str, db_id: str, question: str) -> str:
        """Return the raw SQL text for one question."""


# --------------------------------------------------------------------------
# transports


class InProcessPredictor:
    """Wrap ``fn(question, schema) -> SqlQuery | str`` as a handle."""

    def __init__(self, fn: Callable[[str, DatabaseSchema], SqlQuery | str], schemas: Mapping[str, DatabaseSchema]):
        self.fn = fn
        self.schemas = schemas

    def request(self, request_id: str, db_id: str, question: str) -> str:
        schema = self.schemas.get(db_id)
        if schema is None:
            raise TransportError(f"predictor does not serve db_id {db_id!r}")
        out = self.fn(question, schema)
        return out if isinstance(out, str) else serialize(out, schema)


class EchoPredictor:
    """Answers with the gold query of the example encoded in the request id prefix."""

    def __init__(self, gold_sql: Sequence[str]):
        self.gold_sql = list(gold_sql)

    def request(self, request_id: str, db_id: str, question: str) -> str:
        return self.gold_sql[example_index(request_id)]


def example_index(request_id: str) -> int:
    try:
        return int(str(request_id).split("-", 1)[0])
    except ValueError:
        raise ProtocolError(f"request id {request_id!r} carries no example index") from None


def _decode(raw, request_id: str) -> str:
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON response to {request_id}: {exc}") from None
    if not isinstance(msg, dict) or not isinstance(msg.get("sql"), str):
        raise ProtocolError(f"response to {request_id} lacks an 'sql' string")
    return msg


class SubprocessPredictor:
    """Line protocol over a child process's stdin/stdout."""

    def __init__(self, command: Sequence[str] | str, timeout: float = 30.0):
        self.command = command
        self.timeout = timeout
        self._lock = threading.Lock()
        self._proc = None
        self._lines: queue.Queue = queue.Queue()

    def _start(self):
        if self._proc is not None and self._proc.poll() is None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command,
                shell=isinstance(self.command, str),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot start predictor {self.command!r}: {exc}") from None
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True).start()

    @staticmethod
    def _pump(stream, lines: queue.Queue):
        for line in stream:
            lines.put(line)
        lines.put(None)

    def request(self, request_id: str, db_id: str, question: str) -> str:
        with self._lock:
            self._start()
            msg = json.dumps({"id": request_id, "db_id": db_id, "question": question})
            try:
                self._proc.stdin.write(msg + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise TransportError(f"predictor pipe closed: {exc}") from None
            while True:
                try:
                    line = self._lines.get(timeout=self.timeout)
                except queue.Empty:
                    raise PredictTimeout(request_id, self.timeout) from None
                if line is None:
                    raise TransportError("predictor exited")
                resp = _decode(line, request_id)
                if resp.get("id") == request_id:
                    return resp["sql"]
                log.warning("discarding stale response %r while waiting for %r", resp.get("id"), request_id)

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
            self._proc = None


class HttpPredictor:
    """``POST {url}`` with one JSON request per call."""

    def __init__(self, url: str, timeout: float = 30.0, max_in_flight: int = 4):
        self.url = url
        self.timeout = timeout
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def request(self, request_id: str, db_id: str, question: str) -> str:
        body = json.dumps({"id": request_id, "db_id": db_id, "question": question}).encode()
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        with self._slots:
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    raw = resp.read()
            except TimeoutError:
                raise PredictTimeout(request_id, self.timeout) from None
            except (urllib.error.URLError, OSError) as exc:
                if "timed out" in str(exc):
                    raise PredictTimeout(request_id, self.timeout) from None
                raise TransportError(f"predictor {self.url} unreachable: {exc}") from None
        resp = _decode(raw, request_id)
        if resp.get("id") != request_id:
            raise ProtocolError(f"response id {resp.get('id')!r} does not match {request_id!r}")
        return resp["sql"]


def open_predictor(spec: str, timeout: float = 30.0, max_in_flight: int = 4) -> PredictorHandle:
    """``http(s)://...`` selects HTTP; anything else is a shell command for the line protocol."""
    if re.match(r"https?://", spec):
        return HttpPredictor(spec, timeout, max_in_flight)
    if not spec.strip():
        raise InputError("empty predictor specification")
    return SubprocessPredictor(spec, timeout)


# --------------------------------------------------------------------------
# predict


@dataclass(frozen=True)
class Prediction:
    sql: str | None
    query: SqlQuery | None
    error: str | None = None


def predict(
    handle: PredictorHandle,
    question: str,
    db_id: str,
    schema: DatabaseSchema,
    request_id: str,
    retries: int = 0,
) -> Prediction:
    """Ask the predictor and parse its answer. Unparseable SQL is a recorded non-match."""
    for attempt in range(retries + 1):
        try:
            sql = handle.request(request_id, db_id, question)
            break
        except PredictTimeout:
            raise
        except TransportError:
            if attempt == retries:
                raise
    try:
        return Prediction(sql, parse_sql(sql, schema))
    except SqlParseError as exc:
        return Prediction(sql, None, str(exc))


# --------------------------------------------------------------------------
# lexical baseline

COUNT_CUES = (("how", "many"), ("number", "of"), ("count",))


def _has_cue(words: Sequence[str]) -> bool:
    for cue in COUNT_CUES:
        n = len(cue)
        if any(tuple(words[i : i + n]) == cue for i in range(len(words) - n + 1)):
            return True
    return False


def _literal(value: str, col_type: str) -> Literal:
    if col_type == "number":
        try:
            float(value)
            return Literal("num", value)
        except ValueError:
            pass
    return Literal("str", value)


def baseline_lexical_predictor(question: str, schema: DatabaseSchema) -> SqlQuery:
    """A deliberately lexical text-to-SQL heuristic.

    Links the question, picks the table with the most exact links (two points
    per table mention, one per column or value mention it can host, lowest id
    on ties), selects the linked columns of that table, turns cell-value links
    into equality filters and answers ``count(*)`` on a counting cue.
    """
    linked = link(question, schema)
    tags = [t for t in linked.tags if t.exact]
    star = schema.star_id
    if not tags:
        return SqlQuery(select=(ColumnRef(star, "count"),), from_tables=(schema.tables[0].id,))

    def hosts(table_id: int, phrase: str) -> list[int]:
        return [
            cid
            for cid in schema.tables[table_id].column_ids
            if phrase in schema.columns[cid].annotations.phrases
        ]

    scores = {t.id: 0 for t in schema.tables}
    for tag in tags:
        for t in schema.tables:
            if tag.kind == "exact-table" and tag.target.id == t.id:
                scores[t.id] += 2
            elif tag.kind == "exact-column" and hosts(t.id, tag.matched_annotation):
                scores[t.id] += 1
            elif tag.kind == "cell-value" and schema.columns[tag.target.id].table_id == t.id:
                scores[t.id] += 1
    best = min(scores, key=lambda tid: (-scores[tid], tid))

    select, where = [], []
    for tag in tags:
        if tag.kind == "exact-column":
            cols = hosts(best, tag.matched_annotation)
            if cols and cols[0] not in select:
                select.append(cols[0])
        elif tag.kind == "cell-value":
            col = schema.columns[tag.target.id]
            if col.table_id == best:
                where.append(Condition(ColumnRef(col.id), "=", _literal(tag.target.value, col.col_type)))
    where_cols = {c.left.column_id for c in where}
    select = [c for c in select if c not in where_cols]

    if _has_cue(linked.words):
        refs = (ColumnRef(star, "count"),)
    elif select:
        refs = tuple(ColumnRef(c) for c in select)
    else:
        refs = (ColumnRef(star),)
    tree = ConditionTree(tuple(where), ("and",) * (len(where) - 1)) if where else None
    return SqlQuery(select=refs, from_tables=(best,), where=tree)
