"""Command-line interface: synth | featurize | train | predict | evaluate | inspect.

Every flag may also be set from a JSON config file (``--config``) using the
flag's long name with dashes or underscores; command-line values win.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys

import numpy as np

from . import __version__, evalkit
from .errors import PlanLatError, TrainingDataError, UsageError
from .planingest import (
    FeatureEncoder,
    Schema,
    SynthConfig,
    default_schema,
    dumps_corpus,
    fit_encoder,
    load_corpus,
    parse_explain_file,
    synth_generate,
)
from .plannet import Hyperparams, init_model, load_model, predict_prepared, prepare, save_model
from .trainer import StatsWriter, TrainConfig, holdout_split, train

log = logging.getLogger("planlat")

DEFAULTS = {
    # synth
    "n_plans": 2000, "templates": 40, "sigma": 0.1, "depth_min": 1, "depth_max": 4,
    # shared
    "seed": 0, "strict": False,
    # model / training
    "hidden_layers": 5, "hidden_width": 128, "d": 32,
    "lr": 0.001, "momentum": 0.9, "epochs": 200, "batch_size": 256,
    "holdout": "random", "holdout_fraction": 0.1, "holdout_templates": 10,
    "weighting": "operators",
    "per_node": False, "baseline": False,
}


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _resolve(args):
    """Merge defaults < config file < explicit command-line values."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        section = cfg.get(args.command, {})
        flat = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
        for k, v in {**flat, **section}.items():
            merged[k.replace("-", "_")] = v
    for k, v in vars(args).items():
        if v is not None:
            merged[k] = v
        else:
            merged.setdefault(k, None)
    return argparse.Namespace(**merged)


def _meta(a, **inputs):
    meta = {"tool": "planlat", "tool_version": __version__, "seed": a.seed}
    hashes = {}
    for name, path in inputs.items():
        if path is None:
            continue
        if isinstance(path, (list, tuple)):
            hashes[name] = [file_hash(p) for p in path]
        else:
            hashes[name] = file_hash(path)
    meta["inputs"] = hashes
    return meta


def _train_config(a):
    return TrainConfig(lr=float(a.lr), momentum=float(a.momentum), epochs=int(a.epochs),
                       batch_size=int(a.batch_size), seed=int(a.seed), holdout=a.holdout,
                       holdout_fraction=float(a.holdout_fraction),
                       holdout_templates=int(a.holdout_templates), weighting=a.weighting)


def _load_schema(path):
    if not path:
        return default_schema()
    with open(path, encoding="utf-8") as fh:
        return Schema.from_dict(json.load(fh))


# subcommands


def cmd_synth(a):
    cfg = SynthConfig(n_plans=int(a.n_plans), n_templates=int(a.templates), sigma=float(a.sigma),
                      depth_range=(int(a.depth_min), int(a.depth_max)), seed=int(a.seed))
    corpus = synth_generate(cfg)
    meta = {"tool": "planlat", "tool_version": __version__, "seed": cfg.seed,
            "source": "synthetic", "synth": cfg.to_dict()}
    _write(a.out, dumps_corpus(corpus, meta))
    log.info("wrote %d plans to %s", len(corpus), a.out)
    return 0


def cmd_featurize(a):
    schema = _load_schema(a.schema)
    trees, failures = [], []
    for path in a.inputs:
        try:
            trees.extend(parse_explain_file(path, schema, bool(a.strict)))
        except PlanLatError as exc:
            failures.append(f"{path}: {exc}")
            if a.strict:
                break
    for msg in failures:
        print(f"parse failure: {msg}", file=sys.stderr)
    if failures and a.strict:
        return 1
    if not trees:
        print("no plans parsed", file=sys.stderr)
        return 1
    meta = _meta(a, explain=list(a.inputs))
    meta["source"] = "explain"
    meta["parse_failures"] = len(failures)
    _write(a.out, dumps_corpus(trees, meta))
    encoder = fit_encoder(trees, schema)
    encoder.save(a.encoder_out)
    unlabeled = sum(not t.is_labeled() for t in trees)
    if unlabeled:
        print(f"warning: {unlabeled} plans lack ANALYZE timings; corpus marked unlabeled",
              file=sys.stderr)
    return 0


def _load_labeled(path):
    header, trees = load_corpus(path)
    if not header.get("labeled", False) or not all(t.is_labeled() for t in trees):
        raise TrainingDataError(f"{path}: corpus is unlabeled (missing latencies)")
    return trees


def cmd_train(a):
    config = _train_config(a)
    trees = _load_labeled(a.corpus)
    train_set, test_set = holdout_split(trees, config)
    if a.encoder:
        encoder = FeatureEncoder.load(a.encoder)
    else:
        if not a.encoder_out:
            raise UsageError("give --encoder or --encoder-out")
        encoder = fit_encoder(train_set, _load_schema(a.schema))
        encoder.save(a.encoder_out)
    hp = Hyperparams(int(a.hidden_layers), int(a.hidden_width), int(a.d), int(a.seed))
    model = init_model(encoder, hp)
    writer = StatsWriter(a.stats_out) if a.stats_out else None
    try:
        result = train(model, train_set, config, test_set, on_epoch=writer)
    finally:
        if writer is not None:
            writer.close()
    meta = _meta(a, corpus=a.corpus)
    meta["train"] = vars(config).copy()
    meta["n_train"] = len(train_set)
    meta["n_test"] = len(test_set)
    if result.stats:
        last = result.stats[-1]
        meta["final_train_rmse"] = last.train_rmse
    save_model(model, a.model_out, meta)
    return 0


def _load_model(a):
    encoder = FeatureEncoder.load(a.encoder)
    return load_model(a.model, encoder)


def _load_plans(a, schema):
    if a.explain:
        trees = []
        for path in a.plans:
            trees.extend(parse_explain_file(path, schema, bool(a.strict)))
        return trees
    trees = []
    for path in a.plans:
        trees.extend(load_corpus(path)[1])
    return trees


def predictions_csv(model, trees, per_node=False):
    plans = prepare(model, trees)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["plan_id", "node_path", "kind", "predicted_seconds"])
    if per_node:
        node_lat = predict_prepared(model, plans, per_node=True)
        for plan, lats in zip(plans, node_lat):
            rows = sorted(zip(plan.layout.paths, plan.layout.kinds, lats),
                          key=lambda r: [int(x) for x in r[0].split(".")])
            for path, kind, v in rows:
                w.writerow([plan.tree.id, path, kind, repr(float(v))])
    else:
        roots = predict_prepared(model, plans)
        for plan, v in zip(plans, roots):
            w.writerow([plan.tree.id, "0", plan.tree.root.kind, repr(float(v))])
    return buf.getvalue()


def cmd_predict(a):
    model = _load_model(a)
    trees = _load_plans(a, model.schema)
    _write(a.out, predictions_csv(model, trees, bool(a.per_node)))
    return 0


def cmd_evaluate(a):
    model = _load_model(a)
    config = _train_config(a)
    trees = _load_labeled(a.corpus)
    train_set, test_set = holdout_split(trees, config)
    if not test_set:
        train_set, test_set = trees, trees
    actual = np.array([t.latency for t in test_set])
    bad = int(np.sum(actual <= 0))
    if bad:
        print(f"rejected {bad} plans with actual latency <= 0", file=sys.stderr)
    keep = [t for t in test_set if t.latency > 0]
    actual = np.array([t.latency for t in keep])
    templates = [t.template for t in keep]
    reports = {"model": evalkit.evaluate_predictions(
        actual, predict_prepared(model, prepare(model, keep)), templates)}
    meta = _meta(a, model=a.model, encoder=a.encoder, corpus=a.corpus)
    meta["holdout"] = {"mode": config.holdout, "fraction": config.holdout_fraction,
                       "templates": config.holdout_templates}
    meta["rejected"] = bad
    if a.baseline:
        base = evalkit.fit_baseline(train_set)
        reports["baseline"] = evalkit.evaluate_predictions(actual, base.predict_many(keep), templates)
        meta["baseline"] = base.to_dict()
    _write(a.report_out, evalkit.report_to_json(reports, meta))
    if a.cdf_out:
        _write(a.cdf_out, evalkit.cdf_to_csv(reports))
    if a.template_out:
        _write(a.template_out, evalkit.template_mae_to_csv(reports))
    for name, rep in sorted(reports.items()):
        print(f"{name}: relative_error={rep.relative_error:.4f} "
              f"mae={rep.mean_absolute_error:.4f}s within1.5={rep.buckets[0]:.3f}")
    return 0


def cmd_inspect(a):
    with open(a.path, encoding="utf-8") as fh:
        first = fh.readline()
        rest = fh.read()
    try:
        doc = json.loads(first + rest)
    except json.JSONDecodeError:
        doc = json.loads(first)
    fmt = doc.get("format") if isinstance(doc, dict) else None
    if fmt == "planlat-corpus":
        header, trees = load_corpus(a.path)
        sizes = [t.root.size() for t in trees]
        info = {"format": fmt, "version": header["version"], "count": len(trees),
                "labeled": header["labeled"], "templates": len({t.template for t in trees}),
                "mean_nodes": float(np.mean(sizes)) if sizes else 0.0, "meta": header.get("meta", {})}
    elif fmt == "planlat-model":
        info = {"format": fmt, "version": doc["version"], "hyperparams": doc["hyperparams"],
                "units": {k: len(u["layers"]) for k, u in sorted(doc["units"].items())},
                "params": sum(len(l["W"]["data"]) + len(l["b"]["data"])
                              for u in doc["units"].values() for l in u["layers"]),
                "meta": doc.get("meta", {})}
    elif fmt == "planlat-encoder":
        enc = FeatureEncoder.from_dict(doc)
        info = {"format": fmt, "version": doc["version"], "widths": enc.widths,
                "hash": enc.content_hash()}
    elif fmt == "planlat-report":
        info = doc
    else:
        raise UsageError(f"{a.path}: not a planlat artifact")
    print(json.dumps(info, indent=1, sort_keys=True))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="planlat", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"planlat {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="JSON file with flag values")
        sp.add_argument("--seed", type=int)
        return sp

    def train_flags(sp):
        sp.add_argument("--lr", type=float)
        sp.add_argument("--momentum", type=float)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--holdout", choices=["random", "template", "none"])
        sp.add_argument("--holdout-fraction", type=float)
        sp.add_argument("--holdout-templates", type=int)
        sp.add_argument("--weighting", choices=["operators", "plans"])

    sp = add("synth", cmd_synth, "generate a synthetic labeled corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-plans", type=int)
    sp.add_argument("--templates", type=int)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--depth-min", type=int)
    sp.add_argument("--depth-max", type=int)

    sp = add("featurize", cmd_featurize, "parse EXPLAIN JSON into a corpus and fit an encoder")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out", required=True)
    sp.add_argument("--encoder-out", required=True)
    sp.add_argument("--schema")
    sp.add_argument("--strict", action="store_true", default=None)

    sp = add("train", cmd_train, "train a model on a labeled corpus")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--model-out", required=True)
    sp.add_argument("--stats-out")
    sp.add_argument("--encoder")
    sp.add_argument("--encoder-out")
    sp.add_argument("--schema")
    sp.add_argument("--hidden-layers", type=int)
    sp.add_argument("--hidden-width", type=int)
    sp.add_argument("--d", type=int)
    train_flags(sp)

    sp = add("predict", cmd_predict, "predict plan latencies")
    sp.add_argument("--model", required=True)
    sp.add_argument("--encoder", required=True)
    sp.add_argument("--plans", nargs="+", required=True)
    sp.add_argument("--explain", action="store_true", help="plans are EXPLAIN JSON files")
    sp.add_argument("--strict", action="store_true", default=None)
    sp.add_argument("--per-node", action="store_true", default=None)
    sp.add_argument("--out", required=True)

    sp = add("evaluate", cmd_evaluate, "score a model (and optionally the baseline)")
    sp.add_argument("--model", required=True)
    sp.add_argument("--encoder", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--baseline", action="store_true", default=None)
    sp.add_argument("--report-out", required=True)
    sp.add_argument("--cdf-out")
    sp.add_argument("--template-out")
    train_flags(sp)

    sp = add("inspect", cmd_inspect, "summarize an artifact file")
    sp.add_argument("path")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    a = _resolve(args)
    try:
        return a.func(a)
    except (PlanLatError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
