"""Command-line entry point: ``sqlrobust <command> [options]``.

Option values come from, in increasing priority: built-in defaults, a JSON
``--config`` file, ``SQLROBUST_<OPTION>`` environment variables, flags.
Every command prints one JSON summary line and writes its artifacts
atomically. Exit codes: 1 usage, 2 input, 3 transport, 4 validation.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
import tempfile
from typing import Any

from . import __version__
from .attack import AttackConfig, adversarial_augment, generate_worstcase_set
from .dataset import (
    Example,
    check_db_ids,
    corpus_edits,
    format_report,
    load_examples,
    report_from_edits,
    split_overlap,
    stats_from_edits,
)
from .errors import InputError, SchemaParseError, SqlParseError, SqlRobustError, ValidationError
from .linking import link, mas_select, model_input
from .metrics import ComponentScores, component_counts, exact_match
from .perturb import generate_syn_dataset
from .predictors import EchoPredictor, InProcessPredictor, baseline_lexical_predictor, open_predictor
from .providers import (
    ContextualProvider,
    EmbeddingProvider,
    EmbeddingTable,
    HttpProposer,
    LexiconProvider,
    load_lexicon,
)
from .schema import attach_annotations, load_cell_values, load_schemas, schemas_by_id, split_annotation_file
from .sql_parser import parse_sql

log = logging.getLogger("sqlrobust")

ENV_PREFIX = "SQLROBUST_"

# option name -> (type, default, help); shared across commands that declare it
OPTIONS: dict[str, tuple[Any, Any, str]] = {
    "tables": (str, None, "Spider-format tables.json"),
    "annotations": (str, None, "annotation file {item path: [synonyms]} or {db_id: {...}}"),
    "cell_values": (str, None, "cell-value sidecar {db_id: {table.column: [values]}}"),
    "dataset": (str, None, "JSON array of {db_id, question, query}"),
    "gold": (str, None, "gold dataset"),
    "predictions": (str, None, "JSONL of {index | id, sql}"),
    "original": (str, None, "original dataset"),
    "modified": (str, None, "modified dataset aligned with --original"),
    "dev_original": (str, None, "second split, original side (enables split overlap)"),
    "dev_modified": (str, None, "second split, modified side"),
    "lexicon": (str, None, "synonym lexicon JSON"),
    "embeddings": (str, None, "whitespace-separated word vectors"),
    "embedding_k": (int, 10, "neighbours fetched per word"),
    "min_similarity": (float, 0.0, "cosine floor for embedding neighbours"),
    "proposer_url": (str, None, "contextual proposer endpoint"),
    "context_size": (int, 3, "domain-context sentences sent to the proposer"),
    "providers": (str, "lexicon,contextual,embedding", "provider priority, comma separated"),
    "budget": (int, 1, "maximum edits per question"),
    "predictor": (str, None, "http(s) URL, shell command, builtin:baseline or builtin:echo"),
    "max_edits": (int, 1, "attack edit budget per question"),
    "k": (int, 5, "candidates tried per span and provider"),
    "ranking": (str, "deletion", "span ranking policy: deletion | linking"),
    "timeout": (float, 30.0, "seconds per predictor request"),
    "max_in_flight": (int, 4, "concurrent requests to HTTP services"),
    "retries": (int, 0, "retries on transport failure"),
    "augment": (str, None, "also write original + adversarial rows here"),
    "out": (str, None, "primary output path"),
    "report": (str, None, "report output path"),
    "text": (str, None, "human-readable table output path"),
    "seed": (int, 0, "random seed"),
    "jobs": (int, None, "worker threads (default: logical cores)"),
}

COMMANDS: dict[str, tuple[str, ...]] = {
    "evaluate": ("tables", "gold", "predictions", "out"),
    "perturb": (
        "tables", "annotations", "cell_values", "dataset", "lexicon", "embeddings", "embedding_k",
        "min_similarity", "proposer_url", "context_size", "providers", "budget", "out", "report",
    ),
    "attack": (
        "tables", "annotations", "cell_values", "dataset", "lexicon", "embeddings", "embedding_k",
        "min_similarity", "proposer_url", "context_size", "providers", "predictor", "max_edits", "k",
        "ranking", "timeout", "max_in_flight", "retries", "out", "report", "augment",
    ),
    "mas": ("tables", "annotations", "dataset", "out"),
    "link": ("tables", "annotations", "cell_values", "dataset", "out"),
    "stats": ("tables", "annotations", "cell_values", "original", "modified", "dev_original", "dev_modified", "out"),
    "report": ("tables", "annotations", "cell_values", "original", "modified", "out", "text"),
}

REQUIRED = {
    "evaluate": ("tables", "gold", "predictions"),
    "perturb": ("tables", "dataset", "out"),
    "attack": ("tables", "dataset", "predictor", "out"),
    "mas": ("tables", "annotations", "dataset", "out"),
    "link": ("tables", "dataset", "out"),
    "stats": ("tables", "original", "modified"),
    "report": ("tables", "original", "modified", "out"),
}


class UsageError(SqlRobustError):
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sqlrobust", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, opts in COMMANDS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--log-level", default="WARNING")
        for name in (*opts, "seed", "jobs"):
            typ, default, help_ = OPTIONS[name]
            suffix = f" (default {default})" if default is not None else ""
            p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None, help=help_ + suffix)
    return ap


def resolve_config(args: argparse.Namespace, env=None) -> dict:
    """Merge defaults, config file, environment and flags for ``args.command``."""
    env = os.environ if env is None else env
    names = (*COMMANDS[args.command], "seed", "jobs")
    cfg = {n: OPTIONS[n][1] for n in names}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaParseError(args.config, str(exc)) from None
        if not isinstance(data, dict):
            raise SchemaParseError(args.config, "config must be a JSON object")
        scoped = {**{k: v for k, v in data.items() if not isinstance(v, dict)}, **data.get(args.command, {})}
        for k, v in scoped.items():
            k = k.replace("-", "_")
            if k in cfg:
                cfg[k] = v
            elif k != "meta":
                log.warning("ignoring unknown config key %r", k)
    for n in names:
        raw = env.get(ENV_PREFIX + n.upper())
        if raw is not None:
            try:
                cfg[n] = OPTIONS[n][0](raw)
            except ValueError:
                raise UsageError(f"bad value for {ENV_PREFIX}{n.upper()}: {raw!r}") from None
    for n in names:
        v = getattr(args, n, None)
        if v is not None:
            cfg[n] = v
    if cfg["jobs"] is None:
        cfg["jobs"] = os.cpu_count() or 1
    missing = [n for n in REQUIRED[args.command] if cfg.get(n) in (None, "")]
    if missing:
        raise UsageError(f"{args.command}: missing " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return cfg


# --------------------------------------------------------------------------
# io helpers


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _meta(cfg: dict) -> dict:
    return {
        "version": __version__,
        "seed": cfg["seed"],
        "config": {k: cfg[k] for k in sorted(cfg) if k != "jobs"},
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def write_json(path: str, payload: dict, cfg: dict) -> None:
    """JSON object artifact with the effective config under ``meta``."""
    _atomic_write(path, json.dumps({**payload, "meta": _meta(cfg)}, indent=2, sort_keys=False) + "\n")


def write_rows(path: str, rows: list, cfg: dict, jsonl: bool = False) -> None:
    """Array or JSONL artifact; metadata goes to a ``.meta.json`` sidecar."""
    if jsonl:
        text = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)
    else:
        text = json.dumps(rows, indent=2, ensure_ascii=False) + "\n"
    _atomic_write(path, text)
    _atomic_write(path + ".meta.json", json.dumps(_meta(cfg), indent=2) + "\n")


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaParseError(path, f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise SchemaParseError(path, str(exc)) from None


def load_schema_set(cfg: dict) -> dict:
    schemas = schemas_by_id(load_schemas(cfg["tables"]))
    if cfg.get("annotations"):
        per_db = split_annotation_file(_read_json(cfg["annotations"]))
        flat = per_db.pop("", None)
        for db, s in list(schemas.items()):
            ann = per_db.get(db, flat)
            if ann:
                schemas[db] = attach_annotations(s, ann)
    if cfg.get("cell_values"):
        for db, values in _read_json(cfg["cell_values"]).items():
            if db in schemas:
                schemas[db] = load_cell_values(schemas[db], values)
    return schemas


def build_providers(cfg: dict, schemas: dict, pool) -> list:
    order = [p.strip() for p in cfg["providers"].split(",") if p.strip()]
    unknown = set(order) - {"lexicon", "contextual", "embedding"}
    if unknown:
        raise UsageError(f"unknown providers: {', '.join(sorted(unknown))}")
    out = []
    for name in order:
        if name == "lexicon" and cfg.get("lexicon"):
            out.append(LexiconProvider(load_lexicon(cfg["lexicon"])))
        elif name == "embedding" and cfg.get("embeddings"):
            table = EmbeddingTable.load(cfg["embeddings"])
            out.append(EmbeddingProvider(table, cfg["embedding_k"], cfg["min_similarity"]))
        elif name == "contextual" and cfg.get("proposer_url"):
            proposer = HttpProposer(cfg["proposer_url"], cfg.get("timeout", 30.0), cfg.get("max_in_flight", 4))
            out.append(ContextualProvider(proposer, pool, schemas, cfg["context_size"]))
    return out


# --------------------------------------------------------------------------
# commands


def cmd_evaluate(cfg: dict) -> dict:
    schemas = load_schema_set(cfg)
    gold = load_examples(cfg["gold"])
    check_db_ids(gold, schemas)
    preds: dict[int, str] = {}
    try:
        with open(cfg["predictions"], encoding="utf-8") as fh:
            for lineno, line in enumerate(fh):
                if not line.strip():
                    continue
                row = json.loads(line)
                if not isinstance(row, dict):
                    raise InputError(f"{cfg['predictions']}:{lineno + 1}: expected a JSON object")
                key = row.get("index", row.get("id"))
                if key is None or not isinstance(row.get("sql"), str):
                    raise InputError(f"{cfg['predictions']}:{lineno + 1}: need index/id and sql")
                try:
                    preds[int(key)] = row["sql"]
                except (TypeError, ValueError):
                    raise InputError(f"{cfg['predictions']}:{lineno + 1}: bad index {key!r}") from None
    except json.JSONDecodeError as exc:
        raise SchemaParseError(cfg["predictions"], f"invalid JSONL: {exc}") from None
    except OSError as exc:
        raise SchemaParseError(cfg["predictions"], str(exc)) from None

    total = ComponentScores()
    correct, scored = 0, 0
    unparseable, missing, gold_errors, per_example = [], [], [], []
    for i, ex in enumerate(gold):
        try:
            g = ex.gold(schemas)
        except SqlParseError as exc:
            gold_errors.append({"index": i, "error": str(exc)})
            continue
        p = None
        if i not in preds:
            missing.append(i)
        else:
            try:
                p = parse_sql(preds[i], schemas[ex.db_id])
            except SqlParseError as exc:
                unparseable.append({"index": i, "sql": preds[i], "error": str(exc)})
        em = exact_match(p, g)
        scored += 1
        correct += em
        total = total.merge(component_counts(p, g))
        per_example.append({"index": i, "exact_match": em})
    report = {
        "accuracy": correct / scored if scored else 0.0,
        "n": scored,
        "correct": correct,
        "components": total.to_dict(),
        "unparseable": unparseable,
        "missing": missing,
        "gold_unsupported": gold_errors,
        "per_example": per_example,
    }
    if cfg.get("out"):
        write_json(cfg["out"], report, cfg)
    return {"accuracy": report["accuracy"], "n": scored, "unparseable": len(unparseable), "missing": len(missing)}


def cmd_perturb(cfg: dict) -> dict:
    schemas = load_schema_set(cfg)
    examples = load_examples(cfg["dataset"])
    providers = build_providers(cfg, schemas, examples)
    outputs, report = generate_syn_dataset(examples, schemas, providers, cfg["budget"], cfg["seed"], cfg["jobs"])
    write_rows(cfg["out"], [o.to_dict() for o in outputs], cfg)
    if cfg.get("report"):
        write_json(cfg["report"], report.to_dict(), cfg)
    return {"n": report.n, "modified": report.modified, "edits": report.total_edits, "errors": len(report.errors)}


def _predictor(cfg: dict, schemas: dict, examples: list[Example]):
    spec = cfg["predictor"]
    if spec == "builtin:baseline":
        return InProcessPredictor(baseline_lexical_predictor, schemas)
    if spec == "builtin:echo":
        return EchoPredictor([e.query for e in examples])
    return open_predictor(spec, cfg["timeout"], cfg["max_in_flight"])


def cmd_attack(cfg: dict) -> dict:
    schemas = load_schema_set(cfg)
    examples = load_examples(cfg["dataset"])
    providers = build_providers(cfg, schemas, examples)
    order = tuple(p.name for p in providers)
    config = AttackConfig(cfg["max_edits"], cfg["k"], order, cfg["ranking"], cfg["seed"], cfg["retries"])
    handle = _predictor(cfg, schemas, examples)
    try:
        rows, campaign = generate_worstcase_set(handle, examples, schemas, providers, config, cfg["jobs"])
    finally:
        if hasattr(handle, "close"):
            handle.close()
    report = campaign.to_dict()
    write_rows(cfg["out"], rows, cfg)
    if cfg.get("report"):
        write_json(cfg["report"], report, cfg)
    if cfg.get("augment"):
        aug, ratio = adversarial_augment(examples, campaign.results)
        write_rows(cfg["augment"], aug, {**cfg, "augment_mix": ratio})
    keys = ("success_rate", "n", "attacked", "successes", "pre_failed", "errors", "mean_queries")
    return {k: report[k] for k in keys}


def cmd_mas(cfg: dict) -> dict:
    schemas = load_schema_set(cfg)
    examples = load_examples(cfg["dataset"])
    check_db_ids(examples, schemas)
    rows, changed, collisions = [], 0, 0
    for i, ex in enumerate(examples):
        resolved = mas_select(ex.question, schemas[ex.db_id])
        d = resolved.to_dict()
        changed += bool(d["changed"])
        collisions += len(d["collisions"])
        rows.append({"index": i, "question": ex.question, **d, "model_input": model_input(resolved.base, resolved.selection)})
    write_rows(cfg["out"], rows, cfg, jsonl=True)
    return {"n": len(rows), "changed": changed, "collisions": collisions}


def cmd_link(cfg: dict) -> dict:
    schemas = load_schema_set(cfg)
    examples = load_examples(cfg["dataset"])
    check_db_ids(examples, schemas)
    rows = [{"index": i, "db_id": ex.db_id, **link(ex.question, schemas[ex.db_id]).to_dict()} for i, ex in enumerate(examples)]
    write_rows(cfg["out"], rows, cfg, jsonl=True)
    return {"n": len(rows), "tags": sum(len(r["tags"]) for r in rows)}


def _edits_for(cfg: dict, schemas: dict, orig_key: str, mod_key: str):
    original, modified = load_examples(cfg[orig_key]), load_examples(cfg[mod_key])
    return original, corpus_edits(original, modified, schemas)


def cmd_stats(cfg: dict) -> dict:
    schemas = load_schema_set(cfg)
    original, edits = _edits_for(cfg, schemas, "original", "modified")
    if cfg.get("dev_original") and cfg.get("dev_modified"):
        dev, dev_edits = _edits_for(cfg, schemas, "dev_original", "dev_modified")
        stats = stats_from_edits([*original, *dev], [*edits, *dev_edits])
        stats.split_overlap = split_overlap(report_from_edits(original, edits), report_from_edits(dev, dev_edits))
        sizes = [len(original), len(dev)]
    else:
        stats = stats_from_edits(original, edits)
        sizes = [len(original)]
    payload = {**stats.to_dict(), "split_sizes": sizes}
    if cfg.get("out"):
        write_json(cfg["out"], payload, cfg)
    keys = ("modified_count", "schema_word_mods", "cell_value_mods", "mean_changes_per_question")
    return {k: payload[k] for k in keys} | {"split_overlap": payload["split_overlap"]}


def cmd_report(cfg: dict) -> dict:
    schemas = load_schema_set(cfg)
    original, edits = _edits_for(cfg, schemas, "original", "modified")
    report = report_from_edits(original, edits)
    write_json(cfg["out"], {"domains": report}, cfg)
    if cfg.get("text"):
        _atomic_write(cfg["text"], format_report(report))
    return {"domains": len(report), "pairs": sum(len(v) for v in report.values())}


HANDLERS = {
    "evaluate": cmd_evaluate,
    "perturb": cmd_perturb,
    "attack": cmd_attack,
    "mas": cmd_mas,
    "link": cmd_link,
    "stats": cmd_stats,
    "report": cmd_report,
}


def main(argv=None, env=None) -> int:
    args = None
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), stream=sys.stderr)
        cfg = resolve_config(args, env)
        summary = HANDLERS[args.command](cfg)
    except SqlRobustError as exc:
        command = args.command if args else None
        print(json.dumps({"command": command, "error": str(exc), "exit_code": exc.exit_code}), file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:  # stray config value type errors
        print(json.dumps({"error": str(exc), "exit_code": ValidationError.exit_code}), file=sys.stderr)
        return ValidationError.exit_code
    print(json.dumps({"command": args.command, "seed": cfg["seed"], **summary}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
