"""The `engine` command line: index building, inference, evaluation,
catalog splitting, and the HTTP service.

Results go to stdout as JSON; log lines go to stderr as JSON lines, so
piping stdout stays clean.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import evalkit
from .color import default_palette, load_palette
from .config import PipelineConfig, default_config, load_config
from .detect import load_detections, load_image
from .errors import DataError, EngineError
from .fileio import read_text
from .evalkit import (PredictedBox, attribute_coverage, bleu, clip_sim_report,
                      default_synonyms, distinct_n, load_facets, load_groundtruth,
                      load_synonyms, map_score, meteor_lite, rouge)
from .genkit import PromptTemplate, load_templates
from .pipeline import (load_query_embeddings, record_to_json, run_pipeline,
                       split_catalog)
from .retrieval import build_index, load_catalog, load_embeddings, load_index, save_index


class _JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "level": record.levelname.lower(),
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key in ("event", "image_id", "detail"):
            value = getattr(record, key, None)
            if value is not None:
                payload[key] = value
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)


def configure_logging(stream=None):
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(_JsonLineFormatter())
    root = logging.getLogger("fashionpost")
    root.handlers = [handler]
    root.setLevel(logging.INFO)
    root.propagate = False


def _emit(payload: dict, out: str | None):
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else default_config()
    if getattr(args, "no_llm", False):
        cfg.gen = replace(cfg.gen, endpoint="", api_key="")
    return cfg


def _load_palette(cfg: PipelineConfig):
    return load_palette(cfg.paths.palette) if cfg.paths.palette else default_palette()


def _load_templates(cfg: PipelineConfig) -> PromptTemplate:
    if cfg.paths.templates_dir:
        return load_templates(cfg.paths.templates_dir)
    return PromptTemplate()


def _read_captions(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(read_text(path).splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            out[str(obj["image_id"])] = str(obj["caption"])
        except (json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"{path}:{lineno}: bad caption record: {exc}") from exc
    return out


def _read_tags(path: str) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for lineno, raw in enumerate(read_text(path).splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            out[str(obj["image_id"])] = [str(t) for t in obj["hashtags"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: bad hashtag record: {exc}") from exc
    return out


# ============================================================
# Subcommands
# ============================================================


def cmd_index_build(args) -> int:
    records = load_catalog(args.catalog)
    embeddings = load_embeddings(args.embeddings)
    index = build_index(records, embeddings)
    save_index(index, args.out)
    _emit({"records": len(index), "dim": index.dim, "out": args.out}, None)
    return 0


def cmd_infer(args) -> int:
    cfg = _load_cfg(args)
    index = load_index(args.index)
    entries = load_detections(args.detections)

    entry = None
    image_path = Path(args.image)
    wanted_id = args.image_id
    for e in entries:
        if wanted_id and e.image_id == wanted_id:
            entry = e
            break
        if not wanted_id and (e.image_path == str(image_path)
                              or Path(e.image_path).name == image_path.name):
            entry = e
            break
    if entry is None:
        raise DataError(f"no detections entry matches {args.image}")

    image = load_image(args.image)
    queries_path = args.queries or cfg.paths.queries
    query_lookup = load_query_embeddings(queries_path) if queries_path else {}
    record = run_pipeline(image, entry, index, cfg, query_lookup=query_lookup,
                          palette=_load_palette(cfg), templates=_load_templates(cfg))
    text = record_to_json(record)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_eval_captions(args) -> int:
    preds = _read_captions(args.pred)
    refs = _read_captions(args.ref)
    shared = sorted(set(preds) & set(refs))
    if not shared:
        raise DataError("no image ids shared between predictions and references")
    pairs = [(preds[i], refs[i]) for i in shared]
    r1s, r2s, rls = zip(*(rouge(c, r) for c, r in pairs))
    metrics = {
        "bleu": sum(bleu(c, r) for c, r in pairs) / len(pairs),
        "meteor_lite": sum(meteor_lite(c, r) for c, r in pairs) / len(pairs),
        "rouge1_f": sum(r1s) / len(r1s),
        "rouge2_f": sum(r2s) / len(r2s),
        "rougeL_f": sum(rls) / len(rls),
    }
    if args.clip_images and args.clip_pred and args.clip_orig:
        images = load_query_embeddings(args.clip_images)
        pred_embs = load_query_embeddings(args.clip_pred)
        orig_embs = load_query_embeddings(args.clip_orig)
        ids = sorted(set(images) & set(pred_embs) & set(orig_embs))
        report = clip_sim_report([images[i] for i in ids],
                                 [pred_embs[i] for i in ids],
                                 [orig_embs[i] for i in ids])
        metrics["clip"] = {"mean_pred": report.mean_pred,
                           "mean_orig": report.mean_orig,
                           "delta": report.delta}
    _emit({
        "metrics": metrics,
        "counts": {"pairs": len(pairs),
                   "pred_only": len(set(preds) - set(refs)),
                   "ref_only": len(set(refs) - set(preds))},
        "config": {"tokenizer": "lowercase, alnum + camelCase split",
                   "bleu_smoothing": "none"},
    }, args.out)
    return 0


def cmd_eval_hashtags(args) -> int:
    tags_by_id = _read_tags(args.tags)
    facet_sets = {f.image_id: f for f in load_facets(args.facets)}
    syn = load_synonyms(args.synonyms) if args.synonyms else default_synonyms()
    ids = sorted(tags_by_id)
    per_image_tags = [tags_by_id[i] for i in ids]
    per_image_facets = [
        facet_sets.get(i, evalkit.FacetSet(image_id=i, values={})) for i in ids
    ]
    report = attribute_coverage(per_image_tags, per_image_facets, syn, tau=args.tau)
    metrics = {
        "coverage_mean": report.mean,
        "coverage_at_tau": report.at_tau,
        "distinct_1": distinct_n(per_image_tags, 1),
        "distinct_2": distinct_n(per_image_tags, 2),
    }
    _emit({
        "metrics": metrics,
        "per_image": {i: c for i, c in zip(ids, report.per_image)},
        "counts": {"images": len(ids), "scored": report.scored,
                   "excluded": report.excluded},
        "config": {"tau": args.tau,
                   "synonyms": args.synonyms or "default",
                   "distinct_pooling": "corpus-wide"},
    }, args.out)
    return 0


def cmd_eval_detections(args) -> int:
    entries = load_detections(args.pred)
    preds = [
        PredictedBox(image_id=e.image_id, class_name=d.class_name, box=d.box,
                     confidence=d.confidence)
        for e in entries for d in e.detections
    ]
    gts = load_groundtruth(args.gt)
    map50, map_sweep = map_score(preds, gts)
    classes = sorted({g.class_name for g in gts})
    per_class = {
        c: evalkit.average_precision(preds, gts, c, 0.5) for c in classes
    }
    _emit({
        "metrics": {"map_50": map50, "map_50_95": map_sweep,
                    "per_class_ap_50": per_class},
        "counts": {"images": len(entries), "predictions": len(preds),
                   "groundtruth": len(gts)},
        "config": {"interpolation": "101-point",
                   "iou_thresholds": [0.5 + 0.05 * i for i in range(10)]},
    }, args.out)
    return 0


def cmd_split(args) -> int:
    records = load_catalog(args.catalog)
    result = split_catalog(records, args.ratio, args.seed)
    _emit({
        "train_ids": list(result.train_ids),
        "test_ids": list(result.test_ids),
        "flagged_categories": list(result.flagged_categories),
        "config": {"ratio": args.ratio, "seed": args.seed},
    }, args.out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load_cfg(args)
    index = load_index(args.index)
    queries_path = args.queries or cfg.paths.queries
    query_lookup = load_query_embeddings(queries_path) if queries_path else {}
    app = create_app(index, cfg, images_dir=args.images,
                     query_lookup=query_lookup, palette=_load_palette(cfg),
                     templates=_load_templates(cfg))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


# ============================================================
# Argument wiring
# ============================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="engine",
        description="Retrieval-augmented caption and hashtag engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="index management")
    index_sub = p_index.add_subparsers(dest="index_command", required=True)
    p_build = index_sub.add_parser("build", help="fuse catalog and embeddings")
    p_build.add_argument("--catalog", required=True)
    p_build.add_argument("--embeddings", required=True)
    p_build.add_argument("--out", required=True)
    p_build.set_defaults(func=cmd_index_build)

    p_infer = sub.add_parser("infer", help="run the pipeline on one image")
    p_infer.add_argument("--image", required=True)
    p_infer.add_argument("--detections", required=True)
    p_infer.add_argument("--index", required=True)
    p_infer.add_argument("--queries", help="query embedding sidecar (JSON lines)")
    p_infer.add_argument("--image-id", help="detections entry to use; default: match by path")
    p_infer.add_argument("--config")
    p_infer.add_argument("--no-llm", action="store_true",
                         help="skip the endpoint and use the rule fallback")
    p_infer.add_argument("--out")
    p_infer.set_defaults(func=cmd_infer)

    p_eval = sub.add_parser("eval", help="batch metrics")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)

    p_cap = eval_sub.add_parser("captions", help="lexical and embedding metrics")
    p_cap.add_argument("--pred", required=True)
    p_cap.add_argument("--ref", required=True)
    p_cap.add_argument("--clip-images")
    p_cap.add_argument("--clip-pred")
    p_cap.add_argument("--clip-orig")
    p_cap.add_argument("--out")
    p_cap.set_defaults(func=cmd_eval_captions)

    p_tags = eval_sub.add_parser("hashtags", help="coverage and diversity")
    p_tags.add_argument("--tags", required=True)
    p_tags.add_argument("--facets", required=True)
    p_tags.add_argument("--synonyms")
    p_tags.add_argument("--tau", type=float, default=0.5)
    p_tags.add_argument("--out")
    p_tags.set_defaults(func=cmd_eval_hashtags)

    p_det = eval_sub.add_parser("detections", help="mAP")
    p_det.add_argument("--pred", required=True)
    p_det.add_argument("--gt", required=True)
    p_det.add_argument("--out")
    p_det.set_defaults(func=cmd_eval_detections)

    p_split = sub.add_parser("split", help="category-aware catalog split")
    p_split.add_argument("--catalog", required=True)
    p_split.add_argument("--ratio", type=float, default=0.8)
    p_split.add_argument("--seed", type=int, default=42)
    p_split.add_argument("--out")
    p_split.set_defaults(func=cmd_split)

    p_serve = sub.add_parser("serve", help="HTTP service")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--index", required=True)
    p_serve.add_argument("--images", help="directory resolving image_id to a file")
    p_serve.add_argument("--queries")
    p_serve.add_argument("--config")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(json.dumps({"error": exc.code, "detail": exc.detail},
                         ensure_ascii=False, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
