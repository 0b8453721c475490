"""Command-line pipeline: synthesis, training, encoding, retrieval, reports.

Every command writes its outputs under --out, plus a run_manifest.json
recording versions, seeds, the resolved-argument hash, and wall-clock time.
The manifest is the only output allowed to differ between identical runs;
everything else is byte-stable at --threads 1. Exit codes: 0 success,
1 runtime failure (one-line cause on stderr), 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, bow, compress, descriptors, featio, forest, imaging, retrieval
from .arch import PRESETS, feature_dim, fc_layer_indices, resolve_arch
from .config import ConfigError, config_defaults, load_config
from .dataset import (Manifest, load_manifest, load_split, save_manifest,
                      split_dataset)
from .network import (TrainConfig, classify, evaluate_accuracy, extract_features,
                      history_rows, init_network, load_network, predict_proba,
                      save_network, train, transfer_network)
from .seeding import parallel_map
from .svgplot import line_chart
from .synth import DEFAULT_CLASSES, RECIPES, SynthConfig, generate_synthetic


class CliError(RuntimeError):
    """Runtime failure; maps to exit code 1."""


class UsageError(RuntimeError):
    """Bad flag combination; maps to exit code 2."""


def _write_csv(path, rows):
    text = "\n".join(",".join(str(v) for v in row) for row in rows) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _read_csv(path):
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    return [line.split(",") for line in lines]


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise UsageError(f"--{name.replace('_', '-')} is required for this command")


def _out_dir(args) -> Path:
    _require(args, "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_manifest(out: Path, args, started: float):
    payload = {k: v for k, v in sorted(vars(args).items())
               if k not in ("func", "config") and not k.startswith("_")}
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True, default=str)
                            .encode("utf-8")).hexdigest()
    doc = {
        "command": args.command,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", None),
        "config_hash": digest,
        "arguments": payload,
        "started_utc": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "wall_seconds": round(time.time() - started, 3),
    }
    (out / "run_manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True,
                                                      default=str) + "\n", encoding="utf-8")


def _load_manifest_arg(args) -> Manifest:
    _require(args, "manifest")
    path = Path(args.manifest)
    if not path.exists():
        raise CliError(f"manifest {path} does not exist")
    return load_manifest(path)


def _label_names(args, fallback_n: int) -> list:
    if getattr(args, "manifest", None):
        return list(load_manifest(Path(args.manifest)).label_names)
    return [f"class_{i}" for i in range(fallback_n)]


# --- commands -------------------------------------------------------------

def cmd_synth(args):
    out = _out_dir(args)
    classes = [c for c in args.classes.split(",") if c]
    if len(classes) == 1 and classes[0].isdigit():
        count = int(classes[0])
        known = list(RECIPES)
        if count > len(known):
            raise CliError(f"only {len(known)} recipe classes exist")
        classes = known[:count]
    cfg = SynthConfig(classes=classes, per_class=args.per_class, height=args.size,
                      width=args.size, seed=args.seed, noise=args.noise)
    manifest = generate_synthetic(cfg, out, threads=args.threads)
    print(f"wrote {len(manifest.entries)} images over {len(classes)} classes to {out}")


def cmd_split(args):
    out = _out_dir(args)
    manifest = _load_manifest_arg(args)
    _require(args, "train", "val")
    fractional = any("." in str(v) for v in (args.train, args.val, args.test or ""))
    if fractional:
        if args.test is None:
            raise UsageError("ratio splits need --train, --val, and --test")
        result = split_dataset(manifest,
                               ratios=(float(args.train), float(args.val), float(args.test)),
                               seed=args.seed, stratified=args.stratified)
    else:
        result = split_dataset(manifest, counts=(int(args.train), int(args.val)),
                               seed=args.seed, stratified=args.stratified)
    save_manifest(result, out / "manifest.tsv")
    tally = {s: 0 for s in ("train", "val", "test", "unassigned")}
    for e in result.entries:
        tally[e.split] += 1
    print("split sizes: " + ", ".join(f"{k}={v}" for k, v in tally.items()))


def cmd_train_cnn(args):
    out = _out_dir(args)
    if args.features:
        train_fm = featio.load_features(Path(args.features))
        _require(args, "val_features")
        val_fm = featio.load_features(Path(args.val_features))
        x_train, y_train = train_fm.features, train_fm.labels.astype(np.int64)
        x_val, y_val = val_fm.features, val_fm.labels.astype(np.int64)
        n_classes = int(max(y_train.max(), y_val.max())) + 1
    else:
        manifest = _load_manifest_arg(args)
        n_classes = len(manifest.label_names)
        spec_probe = resolve_arch(args.arch, n_classes)
        size = spec_probe.input_h
        x_train, y_train, _ = load_split(manifest, "train", region=args.region, size=size)
        x_val, y_val, _ = load_split(manifest, "val", region=args.region, size=size)
        if not len(y_train):
            raise CliError("manifest has no train split; run `docstyle split` first")
    spec = resolve_arch(args.arch, n_classes)

    if args.init == "random":
        net = init_network(spec, seed=args.seed, scale=args.scale)
    else:
        donor_path = Path(args.init)
        if not donor_path.exists():
            raise CliError(f"donor model {donor_path} does not exist")
        donor = load_network(donor_path)
        net = transfer_network(spec, donor, seed=args.seed, scale=args.scale,
                               donor_id=str(donor_path))
    cfg = TrainConfig(lr=args.lr, momentum=args.momentum, weight_decay=args.weight_decay,
                      batch_size=args.batch_size, max_epochs=args.epochs,
                      patience=args.patience, seed=args.seed)
    best, history = train(net, (x_train, y_train), (x_val, y_val), cfg)
    save_network(best, out / "model.dsnet")
    _write_csv(out / "history.csv", history_rows(history))
    final = history.records[history.best_epoch] if history.records else None
    if final:
        print(f"best epoch {history.best_epoch}: val_acc {final.val_acc:.4f} "
              f"(stopped at epoch {history.stopped_epoch})")
    else:
        print("no epochs ran; wrote the initial parameters")


def cmd_extract_features(args):
    out = _out_dir(args)
    _require(args, "model")
    net = load_network(Path(args.model))
    manifest = _load_manifest_arg(args)
    size = net.spec.input_h
    splits = [args.split] if args.split != "all" else ["train", "val", "test"]
    for split in splits:
        x, y, ids = load_split(manifest, split, region=args.region, size=size)
        if not len(y):
            continue
        tap = args.tap if args.tap >= 0 else None
        feats = extract_features(net, x, tap=tap, batch_size=args.batch_size)
        fm = featio.FeatureMatrix(feats, ids, y.astype(np.int32))
        featio.save_features(fm, out / f"features_{split}_{args.region}.dsfea")
        print(f"{split}: {fm.n} rows x {fm.dim} dims")


def cmd_fit_pca(args):
    out = _out_dir(args)
    _require(args, "features")
    fm = featio.load_features(Path(args.features))
    normed, _ = compress.l2_normalize_rows(fm.features.astype(np.float64))
    model = compress.pca_fit(normed, args.dim)
    compress.save_pca(model, out / f"pca_{args.dim}.dspca")
    print(f"fit {model.in_dim} -> {model.out_dim} dims, captured variance "
          f"{compress.captured_variance(model):.6f}")


def cmd_compress(args):
    out = _out_dir(args)
    _require(args, "features", "pca")
    feat_paths = [Path(p) for p in args.features.split(",")]
    pca_paths = [Path(p) for p in args.pca.split(",")]
    if len(feat_paths) != len(pca_paths):
        raise UsageError("--features and --pca need the same number of entries")
    mats = [featio.load_features(p) for p in feat_paths]
    models = [compress.load_pca(p) for p in pca_paths]
    base = mats[0]
    widths = {m.out_dim for m in models}
    if len(widths) != 1:
        raise CliError(f"PCA models disagree on output width: {sorted(widths)}")
    parts = []
    for fm, model in zip(mats, models):
        if fm.ids != base.ids:
            raise CliError("feature files disagree on item ids or order")
        parts.append(compress.compress_rows(fm.features.astype(np.float64), model))
    stacked = np.concatenate(parts, axis=1).astype(np.float32)
    suffix = f"_pca{models[0].out_dim}" + ("_ensemble" if len(parts) > 1 else "")
    name = feat_paths[0].stem + suffix + ".dsfea"
    featio.save_features(featio.FeatureMatrix(stacked, base.ids, base.labels), out / name)
    print(f"wrote {name}: {stacked.shape[0]} rows x {stacked.shape[1]} dims")


def cmd_bow_vocab(args):
    out = _out_dir(args)
    manifest = _load_manifest_arg(args)
    entries = manifest.subset(args.split)
    if not entries:
        raise CliError(f"split {args.split!r} is empty")

    def _descs(entry):
        img = imaging.load_image(manifest.resolve(entry))
        if args.size:
            img = imaging.resize_bilinear(img, args.size, args.size)
        dset = descriptors.dense_descriptors(img, patch=args.patch, stride=args.stride)
        return dset.descriptors[~dset.uniform]

    chunks = parallel_map(_descs, entries, threads=args.threads)
    data = np.concatenate([c for c in chunks if len(c)], axis=0)
    if len(data) > args.max_descriptors:
        rng = np.random.Generator(np.random.PCG64(args.seed))
        keep = rng.choice(len(data), size=args.max_descriptors, replace=False)
        data = data[np.sort(keep)]
    vocab = bow.kmeans_fit(data.astype(np.float64), args.k, seed=args.seed)
    bow.save_vocabulary(vocab, out / f"vocab_k{args.k}.dsvoc")
    print(f"clustered {len(data)} descriptors into {args.k} words "
          f"({len(vocab.inertia_history)} iterations)")


def cmd_encode(args):
    out = _out_dir(args)
    manifest = _load_manifest_arg(args)
    entries = manifest.subset(args.split)
    if not entries:
        raise CliError(f"split {args.split!r} is empty")
    kind = args.kind
    vocab = scheme = None
    if kind == "bow":
        _require(args, "vocab")
        vocab = bow.load_vocabulary(Path(args.vocab))
        scheme = bow.PartitionScheme.parse(args.scheme)

    def _encode(entry):
        img = imaging.load_image(manifest.resolve(entry))
        if args.size:
            img = imaging.resize_bilinear(img, args.size, args.size)
        if kind == "bow":
            dset = descriptors.dense_descriptors(img, patch=args.patch, stride=args.stride)
            return bow.bow_encode(dset, vocab, scheme)
        if kind == "gist":
            return descriptors.gist_like(img)
        if kind == "brightness":
            return descriptors.brightness(img)
        if kind == "region-brightness":
            return descriptors.region_brightness(img)
        raise CliError(f"unknown feature kind {kind!r}")

    rows = parallel_map(_encode, entries, threads=args.threads)
    feats = np.stack(rows).astype(np.float32)
    ids = [e.path for e in entries]
    labels = np.asarray([e.label for e in entries], dtype=np.int32)
    tag = kind if kind != "bow" else f"bow_{args.scheme}"
    featio.save_features(featio.FeatureMatrix(feats, ids, labels),
                         out / f"features_{tag}_{args.split}.dsfea")
    print(f"encoded {len(ids)} images to {feats.shape[1]}-dim {kind} vectors")


def cmd_build_index(args):
    out = _out_dir(args)
    _require(args, "features")
    fm = featio.load_features(Path(args.features))
    retrieval.Index.from_features(fm)      # validates unique ids
    featio.save_features(fm, out / "index.dsfea")
    print(f"indexed {fm.n} items x {fm.dim} dims")


def cmd_retrieve(args):
    out = _out_dir(args)
    _require(args, "index", "queries")
    index = retrieval.Index.from_features(featio.load_features(Path(args.index)))
    queries = featio.load_features(Path(args.queries))
    rows = [["query_id", "rank", "item_id", "distance", "relevant"]]
    for ranking in retrieval.rank_queries(index, queries, args.k):
        for rank, item in enumerate(ranking.items, start=1):
            rows.append([ranking.query_id, rank, item.item_id,
                         f"{item.distance:.9e}", int(item.relevant)])
    _write_csv(out / "rankings.csv", rows)
    print(f"ranked {queries.n} queries against {index.n} items at k={args.k}")


def cmd_eval_classify(args):
    out = _out_dir(args)
    if args.model:
        net = load_network(Path(args.model))
        manifest = _load_manifest_arg(args)
        x, y, ids = load_split(manifest, args.split, region=args.region,
                               size=net.spec.input_h)
        if not len(y):
            raise CliError(f"split {args.split!r} is empty")
        probs = predict_proba(net, x)
        preds = np.argmax(probs, axis=1)
        names = list(manifest.label_names)
        extra = []
    else:
        _require(args, "train_features", "test_features")
        train_fm = featio.load_features(Path(args.train_features))
        test_fm = featio.load_features(Path(args.test_features))
        cfg = forest.ForestConfig(n_trees=args.trees, max_depth=args.max_depth,
                                  seed=args.seed)
        n_classes = int(max(train_fm.labels.max(), test_fm.labels.max())) + 1
        model = forest.forest_train(train_fm.features.astype(np.float64),
                                    train_fm.labels.astype(np.int64), cfg,
                                    n_classes=n_classes)
        forest.save_forest(model, out / "forest.dsrf")
        preds = forest.forest_predict(model, test_fm.features.astype(np.float64))
        y, ids = test_fm.labels.astype(np.int64), test_fm.ids
        names = _label_names(args, n_classes)
        extra = [["oob_accuracy", f"{model.oob_accuracy:.6f}"]] \
            if model.oob_accuracy is not None else []

    acc = float(np.mean(preds == y))
    n_classes = len(names)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y, preds):
        confusion[int(t), int(p)] += 1
    _write_csv(out / "metrics.csv", [["metric", "value"], ["accuracy", f"{acc:.6f}"],
                                     ["n_eval", len(y)]] + extra)
    _write_csv(out / "confusion.csv",
               [["true\\pred"] + names] +
               [[names[i]] + list(confusion[i]) for i in range(n_classes)])
    _write_csv(out / "predictions.csv",
               [["id", "true", "pred"]] +
               [[i, names[int(t)], names[int(p)]] for i, t, p in zip(ids, y, preds)])
    print(f"accuracy {acc:.4f} over {len(y)} items")


def cmd_eval_retrieve(args):
    out = _out_dir(args)
    _require(args, "index", "queries")
    index = retrieval.Index.from_features(featio.load_features(Path(args.index)))
    queries = featio.load_features(Path(args.queries))
    curve = retrieval.map_at_k(index, queries, args.k, mode=args.mode)
    _write_csv(out / "map.csv", [["k", "map"]] +
               [[j + 1, f"{curve[j]:.6f}"] for j in range(len(curve))])
    n_classes = int(max(index.labels.max(), queries.labels.max())) + 1
    names = _label_names(args, n_classes)
    confusion = retrieval.retrieval_confusion(index, queries, args.k, n_classes=n_classes)
    _write_csv(out / "retrieval_confusion.csv",
               [["true\\retrieved"] + names] +
               [[names[i]] + [f"{v:.6f}" for v in confusion[i]] for i in range(n_classes)])
    _write_csv(out / "metrics.csv",
               [["metric", "value"], [f"map_at_{len(curve)}", f"{curve[-1]:.6f}"],
                ["ap_mode", args.mode], ["n_queries", queries.n]])
    print(f"mAP@{len(curve)} = {curve[-1]:.4f} ({args.mode} denominator)")


def cmd_pca_sweep(args):
    out = _out_dir(args)
    _require(args, "features", "queries")
    train_fm = featio.load_features(Path(args.features))
    query_fm = featio.load_features(Path(args.queries))
    dims = sorted({int(d) for d in args.dims.split(",") if d})
    if not dims:
        raise UsageError("--dims must list at least one dimension")
    normed, _ = compress.l2_normalize_rows(train_fm.features.astype(np.float64))
    rows = [["dim", f"map_at_{args.k}"]]
    curve_pts = []
    for dim in dims:
        model = compress.pca_fit(normed, dim)
        idx = retrieval.Index(compress.compress_rows(train_fm.features.astype(np.float64), model),
                              list(train_fm.ids), train_fm.labels)
        q = featio.FeatureMatrix(
            compress.compress_rows(query_fm.features.astype(np.float64), model).astype(np.float32),
            list(query_fm.ids), query_fm.labels)
        score = float(retrieval.map_at_k(idx, q, args.k, mode=args.mode)[-1])
        rows.append([dim, f"{score:.6f}"])
        curve_pts.append((dim, score))
        print(f"dim {dim}: mAP@{args.k} = {score:.4f}")
    _write_csv(out / "pca_sweep.csv", rows)
    line_chart({"mAP": ([p[0] for p in curve_pts], [p[1] for p in curve_pts])},
               out / "pca_sweep.svg", title="Retrieval quality vs PCA dimension",
               x_label="PCA dimension", y_label=f"mAP@{args.k}")


def cmd_report(args):
    out = _out_dir(args)
    _require(args, "run")
    run_dirs = [Path(p) for p in args.run.split(",")]
    lines = ["# Run report", ""]
    for run in run_dirs:
        if not run.exists():
            raise CliError(f"run directory {run} does not exist")
        lines.append(f"## {run.name}")
        lines.append("")
        manifest_path = run / "run_manifest.json"
        if manifest_path.exists():
            doc = json.loads(manifest_path.read_text())
            lines.append(f"- command: `{doc.get('command')}`, seed {doc.get('seed')}, "
                         f"{doc.get('wall_seconds')} s")
        metrics = run / "metrics.csv"
        if metrics.exists():
            for row in _read_csv(metrics)[1:]:
                lines.append(f"- {row[0]}: {row[1]}")
        map_csv = run / "map.csv"
        if map_csv.exists():
            body = _read_csv(map_csv)[1:]
            ks = [int(r[0]) for r in body]
            vals = [float(r[1]) for r in body]
            svg = out / f"map_{run.name}.svg"
            line_chart({"mAP": (ks, vals)}, svg, title=f"mAP curve ({run.name})",
                       x_label="k", y_label="mAP")
            lines.append(f"- mAP curve: ![map]({svg.name})")
        sweep = run / "pca_sweep.csv"
        if sweep.exists():
            body = _read_csv(sweep)[1:]
            lines.append("- PCA sweep: " +
                         ", ".join(f"{r[0]}->{r[1]}" for r in body))
        history = run / "history.csv"
        if history.exists():
            body = _read_csv(history)[1:]
            if body:
                lines.append(f"- training: {len(body)} epochs, final val_acc {body[-1][3]}")
        lines.append("")
    (out / "report.md").write_text("\n".join(lines), encoding="utf-8")
    print(f"report over {len(run_dirs)} run(s) written to {out / 'report.md'}")


# --- parser ---------------------------------------------------------------

def _add_common(sp, out_required: bool = True):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1,
                    help="1 keeps every reduction order fixed (bit-reproducible)")
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("--config", default=None, help="TOML file with flag defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docstyle",
        description="Document-image style classification and retrieval pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="render a synthetic labeled corpus")
    sp.add_argument("--classes", default=",".join(DEFAULT_CLASSES),
                    help="comma list of recipe names, or a count")
    sp.add_argument("--per-class", type=int, default=100)
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--noise", type=float, default=0.5)
    _add_common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("split", help="assign train/val/test tags")
    sp.add_argument("--manifest")
    sp.add_argument("--train", help="count, or ratio when any value has a decimal point")
    sp.add_argument("--val")
    sp.add_argument("--test", default=None)
    sp.add_argument("--stratified", action="store_true")
    _add_common(sp)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("train-cnn", help="train a network on images or vectors")
    sp.add_argument("--manifest")
    sp.add_argument("--features", help="train on a feature file instead of images")
    sp.add_argument("--val-features")
    sp.add_argument("--arch", default="desk64",
                    help=f"preset ({', '.join(PRESETS)}) or an architecture string")
    sp.add_argument("--region", default="holistic", choices=list(imaging.REGION_ORDER))
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--momentum", type=float, default=0.9)
    sp.add_argument("--weight-decay", type=float, default=0.0005)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--epochs", type=int, default=50)
    sp.add_argument("--patience", type=int, default=8)
    sp.add_argument("--init", default="random",
                    help="'random' or a donor model path for transfer")
    sp.add_argument("--scale", type=float, default=0.05,
                    help="std-dev of the Gaussian weight init")
    _add_common(sp)
    sp.set_defaults(func=cmd_train_cnn)

    sp = sub.add_parser("extract-features", help="tap fully-connected activations")
    sp.add_argument("--model")
    sp.add_argument("--manifest")
    sp.add_argument("--split", default="all", choices=["train", "val", "test", "all"])
    sp.add_argument("--region", default="holistic", choices=list(imaging.REGION_ORDER))
    sp.add_argument("--tap", type=int, default=-1, help="layer index; -1 = first FC")
    sp.add_argument("--batch-size", type=int, default=128)
    _add_common(sp)
    sp.set_defaults(func=cmd_extract_features)

    sp = sub.add_parser("fit-pca", help="fit PCA on L2-normalized feature rows")
    sp.add_argument("--features")
    sp.add_argument("--dim", type=int, default=128)
    _add_common(sp)
    sp.set_defaults(func=cmd_fit_pca)

    sp = sub.add_parser("compress", help="L2 -> project -> L2; several region "
                                         "pairs concatenate into an ensemble")
    sp.add_argument("--features", help="comma list of feature files")
    sp.add_argument("--pca", help="comma list of PCA files, aligned with --features")
    _add_common(sp)
    sp.set_defaults(func=cmd_compress)

    sp = sub.add_parser("bow-vocab", help="cluster local descriptors into words")
    sp.add_argument("--manifest")
    sp.add_argument("--split", default="train")
    sp.add_argument("--k", type=int, default=300)
    sp.add_argument("--patch", type=int, default=8)
    sp.add_argument("--stride", type=int, default=4)
    sp.add_argument("--size", type=int, default=0,
                    help="resize before computing descriptors (0 = native)")
    sp.add_argument("--max-descriptors", type=int, default=100000)
    _add_common(sp)
    sp.set_defaults(func=cmd_bow_vocab)

    sp = sub.add_parser("encode", help="fixed-length image vectors (bow/gist/brightness)")
    sp.add_argument("--manifest")
    sp.add_argument("--split", default="train")
    sp.add_argument("--kind", default="bow",
                    choices=["bow", "gist", "brightness", "region-brightness"])
    sp.add_argument("--vocab")
    sp.add_argument("--scheme", default="holistic",
                    help="holistic, hAvB (e.g. h2v0), or pyramidL")
    sp.add_argument("--patch", type=int, default=8)
    sp.add_argument("--stride", type=int, default=4)
    sp.add_argument("--size", type=int, default=0)
    _add_common(sp)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("build-index", help="validate a feature file as an index")
    sp.add_argument("--features")
    _add_common(sp)
    sp.set_defaults(func=cmd_build_index)

    sp = sub.add_parser("retrieve", help="rank index items for each query")
    sp.add_argument("--index")
    sp.add_argument("--queries")
    sp.add_argument("--k", type=int, default=10)
    _add_common(sp)
    sp.set_defaults(func=cmd_retrieve)

    sp = sub.add_parser("eval-classify", help="accuracy of a network or a forest "
                                              "trained on feature files")
    sp.add_argument("--model", help="network model path (image route)")
    sp.add_argument("--manifest")
    sp.add_argument("--split", default="test", choices=["train", "val", "test"])
    sp.add_argument("--region", default="holistic", choices=list(imaging.REGION_ORDER))
    sp.add_argument("--train-features")
    sp.add_argument("--test-features")
    sp.add_argument("--trees", type=int, default=150)
    sp.add_argument("--max-depth", type=int, default=None)
    _add_common(sp)
    sp.set_defaults(func=cmd_eval_classify)

    sp = sub.add_parser("eval-retrieve", help="mAP curve and retrieval confusion")
    sp.add_argument("--index")
    sp.add_argument("--queries")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--mode", default="truncated", choices=list(retrieval.AP_MODES))
    sp.add_argument("--manifest", help="optional, provides label names")
    _add_common(sp)
    sp.set_defaults(func=cmd_eval_retrieve)

    sp = sub.add_parser("pca-sweep", help="mAP as a function of PCA dimension")
    sp.add_argument("--features", help="index-side feature file (PCA fits here)")
    sp.add_argument("--queries")
    sp.add_argument("--dims", default="2,4,8,16,32,64,128")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--mode", default="truncated", choices=list(retrieval.AP_MODES))
    _add_common(sp)
    sp.set_defaults(func=cmd_pca_sweep)

    sp = sub.add_parser("report", help="summarize run directories to markdown")
    sp.add_argument("--run", help="comma list of run directories")
    _add_common(sp)
    sp.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    config = None
    if known.config:
        try:
            config = load_config(known.config)
        except (ConfigError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    args = parser.parse_args(argv)
    if config is not None:
        defaults = config_defaults(config, args.command)
        for key, value in defaults.items():
            if not hasattr(args, key):
                raise SystemExit(f"error: config key {key!r} unknown for {args.command}")
            # flags given on the command line win over config values
            cli_given = any(tok == f"--{key.replace('_', '-')}" or
                            tok.startswith(f"--{key.replace('_', '-')}=") for tok in argv)
            if not cli_given:
                setattr(args, key, value)
    started = time.time()
    try:
        args.func(args)
        if getattr(args, "out", None):
            _run_manifest(Path(args.out), args, started)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (CliError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
