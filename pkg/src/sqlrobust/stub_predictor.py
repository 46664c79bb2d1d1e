"""Reference predictor speaking the line protocol, for tests and dry runs.

    python -m sqlrobust.stub_predictor echo --dataset dev.json
    python -m sqlrobust.stub_predictor baseline --tables tables.json
    python -m sqlrobust.stub_predictor garbage --http 8765

``echo`` answers with the gold query of the example whose index prefixes the
request id; ``baseline`` runs the built-in lexical predictor; ``garbage``
answers with unparseable SQL. Without ``--http`` it reads requests on stdin.
"""

from __future__ import annotations

import argparse
import json
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .dataset import load_examples
from .predictors import EchoPredictor, InProcessPredictor, baseline_lexical_predictor
from .schema import attach_annotations, load_schemas, schemas_by_id, split_annotation_file


class _Garbage:
    def request(self, request_id, db_id, question):
        return "SELEC x"


def build(args):
    if args.mode == "echo":
        return EchoPredictor([e.query for e in load_examples(args.dataset)])
    if args.mode == "garbage":
        return _Garbage()
    schemas = schemas_by_id(load_schemas(args.tables))
    if args.annotations:
        with open(args.annotations, encoding="utf-8") as fh:
            per_db = split_annotation_file(json.load(fh))
        schemas = {db: attach_annotations(s, per_db.get(db, per_db.get("", {}))) for db, s in schemas.items()}
    return InProcessPredictor(baseline_lexical_predictor, schemas)


def answer(handle, line: str) -> dict:
    req = json.loads(line)
    try:
        sql = handle.request(req["id"], req["db_id"], req["question"])
    except Exception as exc:  # the stub must keep serving
        sql = f"-- error: {exc}"
    return {"id": req["id"], "sql": sql}


def serve_stdio(handle):
    for line in sys.stdin:
        if line.strip():
            sys.stdout.write(json.dumps(answer(handle, line)) + "\n")
            sys.stdout.flush()


def serve_http(handle, port: int):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
            out = json.dumps(answer(handle, body.decode())).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(out)))
            self.end_headers()
            self.wfile.write(out)

        def log_message(self, *args):
            pass

    ThreadingHTTPServer(("127.0.0.1", port), Handler).serve_forever()


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m sqlrobust.stub_predictor")
    ap.add_argument("mode", choices=["echo", "baseline", "garbage"])
    ap.add_argument("--dataset")
    ap.add_argument("--tables")
    ap.add_argument("--annotations")
    ap.add_argument("--http", type=int, metavar="PORT")
    args = ap.parse_args(argv)
    if args.mode == "echo" and not args.dataset:
        ap.error("echo needs --dataset")
    if args.mode == "baseline" and not args.tables:
        ap.error("baseline needs --tables")
    handle = build(args)
    if args.http:
        serve_http(handle, args.http)
    else:
        serve_stdio(handle)


if __name__ == "__main__":
    main()
