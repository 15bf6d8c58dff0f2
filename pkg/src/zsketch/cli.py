"""Command-line surface: featurize | train | eval | retrieve | export-embeddings | serve.

Exit codes: 0 success, 2 usage error (bad flags, missing input files),
1 runtime error; one-line diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import ZsketchError
from .feature_store import FeatureStore, load_store, make_split, save_store
from .featurizer import FeaturizerConfig, featurize_tree
from .retrieval import (
    DIRECTIONS,
    embed_all,
    evaluate,
    export_embeddings,
    knn,
)
from .semantics import load_word_vectors
from .trainer import TrainConfig, load_model, save_model, train


class UsageError(Exception):
    pass


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zsketch",
        description="cross-modal zero-shot sketch/image retrieval pipeline",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("featurize", help="extract descriptors from image trees")
    p.add_argument("--sketches", help="directory of <class>/<file> sketch images")
    p.add_argument("--images", help="directory of <class>/<file> photo images")
    p.add_argument("--out", required=True, help="output store directory")
    p.add_argument("--cell-size", type=int, default=8)
    p.add_argument("--bins", type=int, default=9)
    p.add_argument("--grid", type=int, default=4)
    p.add_argument("--binarize", action="store_true")

    p = sub.add_parser("train", help="train the cross-modal encoders")
    p.add_argument("--store", required=True, help="store manifest csv")
    p.add_argument("--semantics", required=True, help="word-vector text file")
    p.add_argument("--unseen", required=True,
                   help="comma-separated unseen (test) class names")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--metrics-log", help="JSON-lines loss log path")
    p.add_argument("--normalize-semantics", action="store_true",
                   help="L2-normalize word vectors on load (default off)")

    p = sub.add_parser("eval", help="retrieval evaluation (mAP, P@K)")
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--direction", required=True, choices=sorted(DIRECTIONS))
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--split", choices=["unseen", "seen", "all"], default="unseen")
    p.add_argument("--out", help="report JSON path (default: stdout only)")

    p = sub.add_parser("retrieve", help="one-off kNN query")
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--direction", required=True, choices=sorted(DIRECTIONS))
    p.add_argument("--k", type=int, default=10)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--query-id", help="id of a store instance to query with")
    group.add_argument("--query-features",
                       help="csv file with one row of feature floats")
    p.add_argument("--out", help="results JSON path (default: stdout)")

    p = sub.add_parser("export-embeddings", help="dump id,modality,label,v1..vd csv")
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="run the HTTP retrieval service")
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--thumbs", help="thumbnail directory (serves /item/{id}/thumb)")
    p.add_argument("--ui", help="static frontend directory to mount at /")
    return parser


def _cmd_featurize(args) -> int:
    if not args.sketches and not args.images:
        raise UsageError("featurize needs --sketches and/or --images")
    cfg = FeaturizerConfig(
        cell_size=args.cell_size, n_bins=args.bins, grid=args.grid,
        binarize=args.binarize,
    )
    instances = []
    skipped = []
    for path, modality in ((args.sketches, "sketch"), (args.images, "image")):
        if path is None:
            continue
        _require_file(path, f"{modality} directory")
        got, skip = featurize_tree(path, cfg, modality)
        instances.extend(got)
        skipped.extend(skip)
    classes = sorted({inst.label for inst in instances})
    store = FeatureStore(
        instances, classes, cfg.output_dim,
        featurizer_meta={"config": cfg.to_dict(), "hash": cfg.hash()},
    )
    manifest = save_store(store, args.out)
    print(f"featurized {len(instances)} instances "
          f"({len(skipped)} skipped) -> {manifest}")
    return 0


def _cmd_train(args) -> int:
    manifest = _require_file(args.store, "store manifest")
    _require_file(args.semantics, "word-vector file")
    cfg = TrainConfig()
    if args.config is not None:
        cfg_path = _require_file(args.config, "config file")
        with open(cfg_path) as fh:
            try:
                cfg = TrainConfig.from_dict(json.load(fh))
            except (ValueError, json.JSONDecodeError) as exc:
                raise UsageError(f"bad config file: {exc}") from exc
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    store = load_store(manifest)
    semantics = load_word_vectors(args.semantics, store.class_set)
    if args.normalize_semantics:
        from .semantics import normalized

        semantics = normalized(semantics)
    unseen = [c.strip() for c in args.unseen.split(",") if c.strip()]
    split = make_split(store, unseen)
    model = train(store, split, semantics, cfg, metrics_path=args.metrics_log)
    fingerprint = save_model(model, args.out)
    print(f"trained {model.steps} steps, final total loss "
          f"{model.final_report.total:.6f}")
    print(f"checkpoint {args.out} fingerprint {fingerprint[:16]}")
    return 0


def _eval_indices(store: FeatureStore, model, which: str) -> list[int]:
    unseen = [c for c in store.class_set if c not in model.seen_classes]
    if which == "all":
        return list(range(len(store)))
    if which == "seen":
        return store.indices_where(labels=model.seen_classes)
    if not unseen:
        raise ZsketchError("store has no unseen classes relative to this model")
    return store.indices_where(labels=unseen)


def _cmd_eval(args) -> int:
    store = load_store(_require_file(args.store, "store manifest"))
    model = load_model(_require_file(args.model, "model checkpoint"))
    indices = _eval_indices(store, model, args.split)
    report = evaluate(model, store, indices, args.direction, args.k)
    blob = report.to_json()
    if args.out:
        Path(args.out).write_text(blob + "\n")
    print(blob)
    return 0


def _cmd_retrieve(args) -> int:
    store = load_store(_require_file(args.store, "store manifest"))
    model = load_model(_require_file(args.model, "model checkpoint"))
    query_mod, target_mod = DIRECTIONS[args.direction]
    index = embed_all(model, store)
    exclude = None
    if args.query_id is not None:
        try:
            qi = store.index_of(args.query_id)
        except KeyError:
            raise UsageError(f"query id {args.query_id!r} not in store") from None
        inst = store.instances[qi]
        if inst.modality != query_mod:
            raise ZsketchError(
                f"query {args.query_id!r} is a {inst.modality}, direction "
                f"{args.direction} needs a {query_mod}"
            )
        row = [e.id for e in index.entries].index(args.query_id)
        query_vec = index.embeddings[row]
        if query_mod == target_mod:
            exclude = args.query_id
    else:
        feat_path = _require_file(args.query_features, "query feature file")
        values = np.loadtxt(feat_path, delimiter=",", ndmin=1, dtype=np.float64)
        from .retrieval import embed_instances

        query_vec = embed_instances(model, values.reshape(1, -1), query_mod)[0]
    result = knn(index, query_vec, args.k, modality=target_mod,
                 exclude_id=exclude, query_id=args.query_id,
                 query_modality=query_mod)
    blob = json.dumps(
        {
            "query_id": result.query_id,
            "direction": args.direction,
            "results": [
                {"id": i, "label": l, "distance": d}
                for i, l, d in zip(result.ids, result.labels, result.distances)
            ],
        },
        indent=2,
    )
    if args.out:
        Path(args.out).write_text(blob + "\n")
    print(blob)
    return 0


def _cmd_export(args) -> int:
    store = load_store(_require_file(args.store, "store manifest"))
    model = load_model(_require_file(args.model, "model checkpoint"))
    index = embed_all(model, store)
    export_embeddings(index, args.out)
    print(f"wrote {len(index)} embeddings to {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceState, build_app

    store = load_store(_require_file(args.store, "store manifest"))
    model = load_model(_require_file(args.model, "model checkpoint"))
    state = ServiceState(model, store, thumbnail_dir=args.thumbs)
    app = build_app(state, ui_dir=args.ui)
    print(f"serving model {state.fingerprint[:16]} on "
          f"http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "featurize": _cmd_featurize,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "retrieve": _cmd_retrieve,
    "export-embeddings": _cmd_export,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.verb](args)
    except UsageError as exc:
        print(f"zsketch {args.verb}: {exc}", file=sys.stderr)
        return 2
    except ZsketchError as exc:
        print(f"zsketch {args.verb}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # keep one-line diagnostics for operators
        print(f"zsketch {args.verb}: unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
