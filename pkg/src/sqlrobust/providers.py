"""Substitution candidate sources: curated lexicons, embedding neighbours, and an
external contextual proposer fed with same-domain questions.

Every provider drops reserved words and the phrase being replaced, and is
deterministic for fixed inputs.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .errors import InputError, ProtocolError, SchemaParseError, TransportError, ValidationError
from .schema import DatabaseSchema
from .text import RESERVED_WORDS, has_reserved, normalize_phrase, phrase_tokens

log = logging.getLogger(__name__)

DEFAULT_CONTEXT_SIZE = 3


def _allowed(candidate: str, original: str) -> bool:
    words = candidate.split()
    return bool(words) and candidate != original and not has_reserved(words)


def filter_candidates(candidates: Iterable[str], original: str) -> list[str]:
    """Normalize, drop reserved words and the original, dedupe preserving order."""
    original = normalize_phrase(original)
    out = []
    for c in candidates:
        c = normalize_phrase(c)
        if _allowed(c, original) and c not in out:
            out.append(c)
    return out


# --------------------------------------------------------------------------
# span context handed to providers


@dataclass(frozen=True)
class SpanContext:
    db_id: str
    question: str
    words: tuple[str, ...]
    span: tuple[int, int]
    example_index: int | None = None

    @property
    def phrase(self) -> str:
        return " ".join(w for w in self.words[self.span[0] : self.span[1]] if w)


class Provider(Protocol):
    name: str

    def candidates(self, ctx: SpanContext) -> list[str]: ...


# --------------------------------------------------------------------------
# lexicon


@dataclass(frozen=True)
class SynonymLexicon:
    global_entries: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    domains: Mapping[str, Mapping[str, tuple[str, ...]]] = field(default_factory=dict)

    def __post_init__(self):
        for scope, entries in [("global", self.global_entries), *self.domains.items()]:
            for key, values in entries.items():
                if key in RESERVED_WORDS:
                    raise ValidationError(f"lexicon {scope}: reserved word {key!r} cannot be a key")
                if key in values:
                    raise ValidationError(f"lexicon {scope}: {key!r} maps to itself")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SynonymLexicon":
        def norm(entries: Mapping) -> dict[str, tuple[str, ...]]:
            out = {}
            for k, vs in entries.items():
                if isinstance(vs, str):
                    raise ValidationError(f"lexicon entry {k!r} must map to a list")
                out[normalize_phrase(k)] = tuple(normalize_phrase(v) for v in vs)
            return out

        domains = {db: norm(entries) for db, entries in (data.get("domains") or {}).items()}
        return cls(norm(data.get("global") or {}), domains)

    def to_dict(self) -> dict:
        return {
            "global": {k: list(v) for k, v in self.global_entries.items()},
            "domains": {db: {k: list(v) for k, v in e.items()} for db, e in self.domains.items()},
        }

    def lookup(self, phrase: str, db_id: str | None = None) -> list[str]:
        phrase = normalize_phrase(phrase)
        domain = self.domains.get(db_id or "", {})
        values = domain[phrase] if phrase in domain else self.global_entries.get(phrase, ())
        return filter_candidates(values, phrase)


def load_lexicon(path) -> SynonymLexicon:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaParseError(path, f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise SchemaParseError(path, str(exc)) from None
    return SynonymLexicon.from_dict(data)


def lexicon_lookup(phrase: str, db_id: str | None, lexicon: SynonymLexicon) -> list[str]:
    return lexicon.lookup(phrase, db_id)


@dataclass
class LexiconProvider:
    lexicon: SynonymLexicon
    name: str = "lexicon"

    def candidates(self, ctx: SpanContext) -> list[str]:
        return self.lexicon.lookup(ctx.phrase, ctx.db_id)


# --------------------------------------------------------------------------
# embeddings


class EmbeddingTable:
    """Word vectors with cosine nearest-neighbour lookup."""

    def __init__(self, words: Sequence[str], vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(words):
            raise ValidationError("embedding matrix shape does not match vocabulary")
        self.words = [w.lower() for w in words]
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValidationError("embedding vocabulary has duplicate words")
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        self.unit = vectors / norms
        self.dim = vectors.shape[1]

    @classmethod
    def load(cls, path, limit: int | None = None) -> "EmbeddingTable":
        words, rows = [], []
        dim = None
        try:
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    parts = line.rstrip().split(" ")
                    if len(parts) < 2:
                        continue
                    if dim is None:
                        dim = len(parts) - 1
                    if len(parts) - 1 != dim:
                        raise InputError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
                    words.append(parts[0])
                    rows.append([float(x) for x in parts[1:]])
                    if limit and len(words) >= limit:
                        break
        except OSError as exc:
            raise InputError(f"{path}: {exc}") from None
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None
        return cls(words, np.array(rows).reshape(len(rows), dim or 0))

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.index

    def neighbors(self, word: str, k: int = 10, min_similarity: float = 0.0) -> list[tuple[str, float]]:
        if k < 1 or not 0.0 <= min_similarity <= 1.0:
            raise ValidationError("need k >= 1 and 0 <= min_similarity <= 1")
        w = word.lower()
        i = self.index.get(w)
        if i is None:
            log.info("embedding miss: %r", word)
            return []
        sims = self.unit @ self.unit[i]
        # descending similarity, then lexicographic
        order = sorted(range(len(self.words)), key=lambda j: (-sims[j], self.words[j]))
        out = []
        for j in order:
            cand = self.words[j]
            if j == i or cand in RESERVED_WORDS:
                continue
            if sims[j] < min_similarity:
                break
            out.append((cand, float(sims[j])))
            if len(out) == k:
                break
        return out


def embedding_neighbors(word: str, k: int, min_similarity: float, table: EmbeddingTable) -> list[tuple[str, float]]:
    return table.neighbors(word, k, min_similarity)


@dataclass
class EmbeddingProvider:
    table: EmbeddingTable
    k: int = 10
    min_similarity: float = 0.0
    name: str = "embedding"

    def candidates(self, ctx: SpanContext) -> list[str]:
        phrase = ctx.phrase
        if " " in phrase:  # single words only
            return []
        return filter_candidates((w for w, _ in self.table.neighbors(phrase, self.k, self.min_similarity)), phrase)


def auto_annotations(schema: DatabaseSchema, table: EmbeddingTable, k: int = 5, min_similarity: float = 0.0) -> dict:
    """Annotation mapping from embedding neighbours of single-word item names."""
    out = {}
    for kind, item_id, ann in schema.items():
        if " " in ann.default:
            continue
        syns = [w for w, _ in table.neighbors(ann.default, k, min_similarity)]
        syns = [s for s in filter_candidates(syns, ann.default) if s not in ann.phrases]
        if syns:
            out[schema.item_path(kind, item_id)] = syns
    return out


# --------------------------------------------------------------------------
# domain context


@dataclass(frozen=True)
class DomainContext:
    sentences: tuple[str, ...] = ()


def _schema_phrases(schema: DatabaseSchema | None) -> list[tuple[str, ...]]:
    if schema is None:
        return []
    phrases = {tuple(p.split()) for _, _, ann in schema.items() for p in ann.phrases}
    return sorted(phrases)


def _contains(words: Sequence[str], phrase: Sequence[str]) -> bool:
    n = len(phrase)
    return any(tuple(words[i : i + n]) == tuple(phrase) for i in range(len(words) - n + 1))


def build_domain_context(
    target_phrase: str,
    db_id: str,
    example_pool: Iterable,
    n: int = DEFAULT_CONTEXT_SIZE,
    schema: DatabaseSchema | None = None,
    exclude: str | None = None,
) -> DomainContext:
    """Pick up to ``n`` same-domain questions that mention the target or other schema words.

    Ranked by (contains target, number of distinct other schema phrases,
    shorter first, pool order). ``exclude`` is the question being perturbed.
    """
    if n <= 0:
        return DomainContext()
    target = phrase_tokens(target_phrase)
    others = [p for p in _schema_phrases(schema) if p != target]
    excluded = normalize_phrase(exclude) if exclude else None
    ranked = []
    seen = set()
    for pos, ex in enumerate(example_pool):
        ex_db, question = (ex.db_id, ex.question) if hasattr(ex, "db_id") else (ex[0], ex[1])
        if ex_db != db_id:
            continue
        norm_q = normalize_phrase(question)
        if norm_q == excluded or norm_q in seen:
            continue
        words = norm_q.split()
        has_target = bool(target) and _contains(words, target)
        n_other = sum(1 for p in others if _contains(words, p))
        if not has_target and n_other == 0:
            continue
        seen.add(norm_q)
        ranked.append((not has_target, -n_other, len(words), pos, question))
    ranked.sort()
    return DomainContext(tuple(r[-1] for r in ranked[:n]))


# --------------------------------------------------------------------------
# contextual proposer


class ContextualProposer(Protocol):
    def propose(self, request: dict) -> dict: ...


class StubProposer:
    """Offline proposer. ``answers`` is a fixed list or a callable(request) -> list."""

    def __init__(self, answers: Sequence[str] | Callable[[dict], Sequence[str]] | Mapping[str, Sequence[str]]):
        self.answers = answers
        self.requests: list[dict] = []

    def propose(self, request: dict) -> dict:
        self.requests.append(request)
        if callable(self.answers):
            cands = list(self.answers(request))
        elif isinstance(self.answers, Mapping):
            words = request["question_words"] if "question_words" in request else None
            s, e = request["mask_span"]
            key = " ".join(words[s:e]) if words else ""
            cands = list(self.answers.get(key, ()))
        else:
            cands = list(self.answers)
        return {"id": request["id"], "candidates": [{"phrase": c, "score": 1.0 / (i + 1)} for i, c in enumerate(cands)]}


class HttpProposer:
    """JSON-over-HTTP proposer with a cap on concurrent in-flight requests."""

    def __init__(self, url: str, timeout: float = 30.0, max_in_flight: int = 4):
        self.url = url
        self.timeout = timeout
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def propose(self, request: dict) -> dict:
        body = json.dumps(request).encode()
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        with self._slots:
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    raw = resp.read()
            except (urllib.error.URLError, OSError) as exc:
                raise TransportError(f"proposer {self.url} unreachable: {exc}") from None
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"proposer returned invalid JSON: {exc}") from None


_request_ids = itertools.count()


def contextual_candidates(
    question: str,
    span: tuple[int, int],
    context: DomainContext,
    endpoint: ContextualProposer,
    top_k: int = 10,
    request_id: str | None = None,
) -> list[str]:
    from .text import tokenize

    words = [t.norm for t in tokenize(question)]
    original = " ".join(w for w in words[span[0] : span[1]] if w)
    rid = request_id or f"ctx-{next(_request_ids)}"
    request = {
        "id": rid,
        "context": list(context.sentences),
        "question": question,
        "mask_span": [span[0], span[1]],
        "top_k": top_k,
    }
    if isinstance(endpoint, StubProposer):
        request = {**request, "question_words": words}
    response = endpoint.propose(request)
    if not isinstance(response, dict) or response.get("id") != rid:
        raise ProtocolError(f"response id mismatch for request {rid}")
    cands = response.get("candidates")
    if not isinstance(cands, list) or not all(isinstance(c, dict) and isinstance(c.get("phrase"), str) for c in cands):
        raise ProtocolError(f"malformed candidates for request {rid}")
    return filter_candidates((c["phrase"] for c in cands), original)[:top_k]


@dataclass
class ContextualProvider:
    proposer: ContextualProposer
    example_pool: Sequence = ()
    schemas: Mapping[str, DatabaseSchema] = field(default_factory=dict)
    context_size: int = DEFAULT_CONTEXT_SIZE
    top_k: int = 10
    name: str = "contextual"

    def candidates(self, ctx: SpanContext) -> list[str]:
        context = build_domain_context(
            ctx.phrase, ctx.db_id, self.example_pool, self.context_size, self.schemas.get(ctx.db_id), exclude=ctx.question
        )
        rid = f"{ctx.db_id}:{ctx.example_index}:{ctx.span[0]}-{ctx.span[1]}"
        try:
            return contextual_candidates(ctx.question, ctx.span, context, self.proposer, self.top_k, rid)
        except TransportError as exc:
            log.warning("contextual proposer failed for %s: %s", rid, exc)
            return []
