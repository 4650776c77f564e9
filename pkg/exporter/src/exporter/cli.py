"""The `fashion-export` command line."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ExportError
from .export import export_detections, export_embeddings, export_queries


def _emit(report: dict):
    print(json.dumps(report, indent=2, sort_keys=True))


def cmd_embeddings(args) -> int:
    _emit(export_embeddings(args.images, args.metadata, args.out))
    return 0


def cmd_detections(args) -> int:
    _emit(export_detections(args.images, args.weights, args.out))
    return 0


def cmd_queries(args) -> int:
    _emit(export_queries(args.images, args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fashion-export",
        description="Produce the files the fashion post engine consumes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_emb = sub.add_parser("embeddings",
                           help="catalog.jsonl + embeddings.bin from a metadata file")
    p_emb.add_argument("--images", required=True)
    p_emb.add_argument("--metadata", required=True)
    p_emb.add_argument("--out", required=True)
    p_emb.set_defaults(func=cmd_embeddings)

    p_det = sub.add_parser("detections",
                           help="raw detections.jsonl for every image in a directory")
    p_det.add_argument("--images", required=True)
    p_det.add_argument("--weights", required=True)
    p_det.add_argument("--out", required=True)
    p_det.set_defaults(func=cmd_detections)

    p_q = sub.add_parser("queries", help="queries.jsonl sidecar for query images")
    p_q.add_argument("--images", required=True)
    p_q.add_argument("--out", required=True)
    p_q.set_defaults(func=cmd_queries)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExportError as exc:
        print(json.dumps({"error": exc.code, "detail": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
