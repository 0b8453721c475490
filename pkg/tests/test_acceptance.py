"""Acceptance gate: nine end-to-end criteria.

1. gradient suite, 2. region geometry, 3. dimensional bookkeeping,
4. oracle equivalence, 5. desk-scale training, 6. baseline ordering,
7. transfer trend, 8. compression sweep, 9. bit-level determinism.

Each test prints one `[criterion N] PASS/FAIL` line (shown in the PASSES
summary section). Criteria 5-8 share one rendered corpus and reuse the
seed-0 network, but this module still trains several networks from
scratch and takes tens of minutes; individual criteria can be selected
with -k when iterating.
"""

import os
import subprocess
import sys
import time
from types import SimpleNamespace

import numpy as np
import pytest

from gradcheck import LAYER_KINDS, run_suite

from docstyle import imaging
from docstyle.arch import feature_dim, resolve_arch
from docstyle.bow import PartitionScheme, bow_encode, cell_count, kmeans_fit
from docstyle.cli import main as cli_main
from docstyle.compress import (PcaModel, build_ensemble_descriptor,
                               captured_variance, compress_rows,
                               l2_normalize_rows, pca_fit)
from docstyle.dataset import load_split, split_dataset
from docstyle.descriptors import brightness, dense_descriptors, region_brightness
from docstyle.featio import FeatureMatrix, save_features
from docstyle.forest import ForestConfig, forest_predict, forest_train
from docstyle.imaging import REGION_ORDER
from docstyle.network import (TrainConfig, evaluate_accuracy, extract_features,
                              init_network, train, transfer_network)
from docstyle.retrieval import Index, knn, map_at_k
from docstyle.seeding import derive_rng
from docstyle.synth import DEFAULT_CLASSES, SynthConfig, generate_synthetic

SCHEDULE = dict(lr=0.01, momentum=0.9, weight_decay=0.0005, batch_size=32,
                max_epochs=70, patience=12)


def report(num, ok, detail):
    line = f"[criterion {num}] {'PASS' if ok else 'FAIL'}: {detail}"
    print(line, flush=True)
    return line


# --- shared corpus and networks --------------------------------------------

@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    """1200-image six-class corpus, 800/200/200 stratified split."""
    t0 = time.time()
    root = tmp_path_factory.mktemp("bench")
    man = generate_synthetic(SynthConfig(classes=list(DEFAULT_CLASSES), per_class=200,
                                         height=64, width=64, noise=0.4, seed=11), root)
    man = split_dataset(man, counts=(800, 200), seed=11, stratified=True)
    x, y, _ = load_split(man, "train", size=64)
    xv, yv, _ = load_split(man, "val", size=64)
    xt, yt, _ = load_split(man, "test", size=64)
    return SimpleNamespace(x=x, y=y, xv=xv, yv=yv, xt=xt, yt=yt,
                           ids_tr=[f"tr{i}" for i in range(len(y))],
                           ids_te=[f"te{i}" for i in range(len(yt))],
                           build_seconds=time.time() - t0)


def train_cnn(bench, seed):
    spec = resolve_arch("desk64", 6)
    net = init_network(spec, seed=seed, scale=0.05)
    cfg = TrainConfig(seed=seed, **SCHEDULE)
    best, hist = train(net, (bench.x, bench.y), (bench.xv, bench.yv), cfg)
    return best, hist


@pytest.fixture(scope="module")
def cnn0(bench):
    t0 = time.time()
    best, hist = train_cnn(bench, 0)
    return SimpleNamespace(net=best, hist=hist, train_seconds=time.time() - t0)


def map10(bench, f_tr, f_te):
    idx = Index.from_features(FeatureMatrix(np.asarray(f_tr, np.float32),
                                            bench.ids_tr, bench.y.astype(np.int32)))
    q = FeatureMatrix(np.asarray(f_te, np.float32), bench.ids_te,
                      bench.yt.astype(np.int32))
    return float(map_at_k(idx, q, 10)[-1])


# --- criteria ---------------------------------------------------------------

def test_criterion_1_gradient_suite():
    t0 = time.time()
    worst = {kind: run_suite(kind, 20, seed=11) for kind in LAYER_KINDS}
    wall = time.time() - t0
    peak = max(worst.values())
    ok = peak < 1e-4 and wall < 60.0
    line = report(1, ok, f"worst relative gradient error {peak:.3e} over "
                         f"{len(LAYER_KINDS)} layer kinds x 20 shapes in {wall:.1f} s")
    assert ok, line


def test_criterion_2_region_geometry():
    bounds_ok = (
        imaging.FRAME_H == 780 and imaging.FRAME_W == 600
        and imaging.REGION_BOUNDS["holistic"] == (0, 780, 0, 600)
        and imaging.REGION_BOUNDS["header"] == (0, 256, 0, 600)
        and imaging.REGION_BOUNDS["footer"] == (524, 780, 0, 600)
        and imaging.REGION_BOUNDS["left_body"] == (190, 590, 0, 300)
        and imaging.REGION_BOUNDS["right_body"] == (190, 590, 300, 600)
        and 190 == (780 - 400) // 2
        and REGION_ORDER == ("holistic", "header", "left_body", "right_body", "footer")
    )
    frame = derive_rng("accept-geom", 0).random((780, 600))
    crops = imaging.region_crops(frame)
    crops_ok = (
        np.array_equal(crops["header"], frame[0:256, :])
        and np.array_equal(crops["footer"], frame[524:780, :])
        and np.array_equal(crops["left_body"], frame[190:590, 0:300])
        and np.array_equal(crops["right_body"], frame[190:590, 300:600])
        and crops["header"].shape == (256, 600)
        and crops["left_body"].shape == (400, 300)
    )
    regions = imaging.extract_regions(frame, 100)
    resize_ok = (tuple(regions) == REGION_ORDER
                 and all(r.shape == (100, 100) for r in regions.values()))
    ok = bounds_ok and crops_ok and resize_ok
    line = report(2, ok, "region constants, exact crop slices, and target resize "
                         f"(bounds {bounds_ok}, crops {crops_ok}, resize {resize_ok})")
    assert ok, line


def test_criterion_3_dimensional_bookkeeping():
    k = 300
    widths = {name: k * cell_count(PartitionScheme.parse(name))
              for name in ("holistic", "h2v0", "h0v3", "h2v3", "pyramid3")}
    expected = {"holistic": 300, "h2v0": 2100, "h0v3": 4500,
                "h2v3": 6300, "pyramid3": 6300}
    partition_ok = widths == expected

    # one real encode per scheme confirms the arithmetic end to end
    rng = derive_rng("accept-dims", 0)
    vocab = kmeans_fit(rng.random((2400, 32)), k, seed=0)
    from docstyle.synth import render_document
    img = render_document("letter", 64, 64, derive_rng("accept-dims", 1), noise=0.4)
    dset = dense_descriptors(img)
    encode_ok = all(
        bow_encode(dset, vocab, PartitionScheme.parse(name)).shape == (expected[name],)
        for name in expected)

    d_feat = feature_dim(resolve_arch("big227", 16))
    def identity_pca(d):
        basis = np.zeros((d_feat, d))
        basis[np.arange(d), np.arange(d)] = 1.0
        return PcaModel(np.zeros(d_feat), basis, np.ones(d))
    vecs = [(name, rng.normal(size=d_feat)) for name in REGION_ORDER]
    retrieval_width = build_ensemble_descriptor(
        vecs, {name: identity_pca(128) for name in REGION_ORDER}).vector.shape[0]
    classifier_width = build_ensemble_descriptor(
        vecs, {name: identity_pca(640) for name in REGION_ORDER}).vector.shape[0]
    ensemble_ok = d_feat == 4096 and retrieval_width == 640 and classifier_width == 3200

    ok = partition_ok and encode_ok and ensemble_ok
    line = report(3, ok, f"encoded widths {widths} at k=300; ensemble retrieval "
                         f"{retrieval_width}, classifier input {classifier_width}")
    assert ok, line


def test_criterion_4_oracle_equivalence():
    rng = derive_rng("accept-oracle", 0)
    feats = rng.normal(size=(500, 24)).astype(np.float32)
    labels = rng.integers(0, 5, size=500).astype(np.int32)
    ids = [f"item-{i:03d}" for i in range(500)]
    index = Index(feats, ids, labels)
    qf = rng.normal(size=(50, 24)).astype(np.float32)
    qlab = rng.integers(0, 5, size=50).astype(np.int32)
    queries = FeatureMatrix(qf, [f"q{i:02d}" for i in range(50)], qlab)

    k = 10
    worst_knn = 0.0
    curves = {mode: np.zeros(k) for mode in ("truncated", "strict")}
    base = feats.astype(np.float64)
    for i in range(50):
        dist = np.sqrt(((base - qf[i].astype(np.float64)) ** 2).sum(axis=1))
        order = sorted(range(500), key=lambda j: (dist[j], ids[j]))[:k]
        got = knn(index, qf[i], k, query_label=int(qlab[i]))
        assert [item.item_id for item in got.items] == [ids[j] for j in order]
        worst_knn = max(worst_knn, max(abs(item.distance - dist[j])
                                       for item, j in zip(got.items, order)))
        rel = [labels[j] == qlab[i] for j in order]
        n_rel = int((labels == qlab[i]).sum())
        hits = numer = 0.0
        for r in range(k):
            if rel[r]:
                hits += 1.0
                numer += hits / (r + 1)
            for mode in curves:
                denom = hits if mode == "truncated" else float(n_rel)
                curves[mode][r] += numer / denom if denom > 0 else 0.0
    worst_map = max(np.abs(curves[mode] / 50 - map_at_k(index, queries, k, mode=mode)).max()
                    for mode in curves)

    x = rng.normal(size=(200, 50))
    xc = x - x.mean(axis=0)
    oracle = np.sort(np.linalg.eigvalsh(xc.T @ xc / 199))[::-1]
    worst_pca = max(abs(captured_variance(pca_fit(x, d)) - oracle[:d].sum())
                    for d in (5, 20, 49))

    ok = worst_knn < 1e-12 and worst_map < 1e-12 and worst_pca < 1e-8
    line = report(4, ok, f"knn dist err {worst_knn:.2e}, mAP curve err {worst_map:.2e} "
                         f"(both denominators), captured-variance err {worst_pca:.2e}")
    assert ok, line


def test_criterion_5_desk_scale_training(bench, cnn0):
    t0 = time.time()
    acc = evaluate_accuracy(cnn0.net, bench.xt, bench.yt)
    total = bench.build_seconds + cnn0.train_seconds + (time.time() - t0)
    ok = acc >= 0.90 and total <= 900.0
    line = report(5, ok, f"test accuracy {acc:.4f} (floor 0.90), corpus+train+eval "
                         f"{total:.0f} s (budget 900 s, {len(cnn0.hist.records)} epochs)")
    assert ok, line


def test_criterion_6_baseline_ordering(bench, cnn0):
    d_tr = [dense_descriptors(bench.x[i, 0]) for i in range(len(bench.y))]
    d_te = [dense_descriptors(bench.xt[i, 0]) for i in range(len(bench.yt))]
    pool = np.concatenate([d.descriptors[~d.uniform] for d in d_tr if (~d.uniform).any()])
    rb_tr = np.stack([region_brightness(bench.x[i, 0]) for i in range(len(bench.y))])
    rb_te = np.stack([region_brightness(bench.xt[i, 0]) for i in range(len(bench.yt))])
    br_tr = np.stack([brightness(bench.x[i, 0]) for i in range(len(bench.y))])
    br_te = np.stack([brightness(bench.xt[i, 0]) for i in range(len(bench.yt))])
    pyr = PartitionScheme.parse("pyramid3")
    hol = PartitionScheme.parse("holistic")

    passes = 0
    details = []
    for seed in range(5):
        net = cnn0.net if seed == 0 else train_cnn(bench, seed)[0]
        acc_cnn = evaluate_accuracy(net, bench.xt, bench.yt)
        f_tr = extract_features(net, bench.x)
        f_te = extract_features(net, bench.xt)
        pca = pca_fit(l2_normalize_rows(f_tr.astype(np.float64))[0], 128)
        map_cnn = map10(bench, compress_rows(f_tr, pca), compress_rows(f_te, pca))

        rng = derive_rng("vocab-sample", seed)
        sample = pool[rng.choice(pool.shape[0], 40000, replace=False)]
        vocab = kmeans_fit(sample, 300, seed=seed)
        reps = {"pyramid": (np.stack([bow_encode(d, vocab, pyr) for d in d_tr]),
                            np.stack([bow_encode(d, vocab, pyr) for d in d_te])),
                "holistic": (np.stack([bow_encode(d, vocab, hol) for d in d_tr]),
                             np.stack([bow_encode(d, vocab, hol) for d in d_te])),
                "region": (rb_tr, rb_te),
                "bright": (br_tr, br_te)}
        accs, maps = [acc_cnn], [map_cnn]
        for f_train, f_test in reps.values():
            model = forest_train(f_train, bench.y, ForestConfig(n_trees=150, seed=seed))
            accs.append(float((forest_predict(model, f_test) == bench.yt).mean()))
            maps.append(map10(bench, f_train, f_test))
        acc_ok = all(accs[i] >= accs[i + 1] for i in range(4))
        map_ok = all(maps[i] >= maps[i + 1] for i in range(4))
        passes += acc_ok and map_ok
        details.append(f"seed {seed}: acc " + "/".join(f"{a:.3f}" for a in accs) +
                       " map " + "/".join(f"{m:.3f}" for m in maps) +
                       f" -> {'ok' if acc_ok and map_ok else 'violated'}")
        print(details[-1], flush=True)

    ok = passes >= 4
    line = report(6, ok, f"cnn >= pyramid bow >= holistic bow >= region-brightness "
                         f">= brightness held in {passes}/5 seeds (need 4)")
    assert ok, line


def test_criterion_7_transfer_trend(tmp_path_factory):
    src_dir = tmp_path_factory.mktemp("transfer_src")
    tgt_dir = tmp_path_factory.mktemp("transfer_tgt")
    man_s = generate_synthetic(SynthConfig(classes=["letter", "memo", "form", "news"],
                                           per_class=150, height=64, width=64,
                                           noise=0.4, seed=21), src_dir)
    man_s = split_dataset(man_s, counts=(480, 120), seed=21, stratified=True)
    xs, ys, _ = load_split(man_s, "train", size=64)
    xsv, ysv, _ = load_split(man_s, "val", size=64)
    man_t = generate_synthetic(SynthConfig(classes=["email", "ad", "invoice", "resume"],
                                           per_class=50, height=64, width=64,
                                           noise=0.4, seed=22), tgt_dir)
    man_t = split_dataset(man_t, counts=(140, 60), seed=22, stratified=True)
    xt, yt, _ = load_split(man_t, "train", size=64)
    xtv, ytv, _ = load_split(man_t, "val", size=64)

    spec = resolve_arch("desk64", 4)
    threshold, max_epochs = 0.90, 30

    def epochs_to_threshold(hist):
        for record in hist.records:
            if record.val_acc >= threshold:
                return record.epoch + 1
        return max_epochs + 1

    wins = 0
    for seed in range(5):
        donor = init_network(spec, seed=seed, scale=0.05)
        donor, _ = train(donor, (xs, ys), (xsv, ysv),
                         TrainConfig(lr=0.01, momentum=0.9, weight_decay=0.0005,
                                     batch_size=32, max_epochs=25, patience=8, seed=seed))
        race_cfg = TrainConfig(lr=0.01, momentum=0.9, weight_decay=0.0005,
                               batch_size=32, max_epochs=max_epochs,
                               patience=max_epochs + 1, seed=seed)
        tuned = transfer_network(spec, donor, seed=seed, scale=0.05)
        _, h_tuned = train(tuned, (xt, yt), (xtv, ytv), race_cfg)
        fresh = init_network(spec, seed=seed, scale=0.05)
        _, h_fresh = train(fresh, (xt, yt), (xtv, ytv), race_cfg)
        e_tuned = epochs_to_threshold(h_tuned)
        e_fresh = epochs_to_threshold(h_fresh)
        wins += e_tuned <= e_fresh
        print(f"seed {seed}: fine-tuned reaches val {threshold} in {e_tuned} epochs "
              f"vs {e_fresh} random (31 = never)", flush=True)

    ok = wins >= 4
    line = report(7, ok, f"fine-tuned init at least as fast as random in {wins}/5 "
                         f"seeds (need 4)")
    assert ok, line


def test_criterion_8_compression_sweep(bench, cnn0, tmp_path):
    f_tr = extract_features(cnn0.net, bench.x)
    f_te = extract_features(cnn0.net, bench.xt)
    train_path = tmp_path / "cnn_train.dsfea"
    test_path = tmp_path / "cnn_test.dsfea"
    save_features(FeatureMatrix(f_tr, bench.ids_tr, bench.y.astype(np.int32)), train_path)
    save_features(FeatureMatrix(f_te, bench.ids_te, bench.yt.astype(np.int32)), test_path)
    rc = cli_main(["pca-sweep", "--features", str(train_path), "--queries", str(test_path),
                   "--dims", "2,4,8,16,32,64,128", "--k", "10",
                   "--out", str(tmp_path / "sweep")])
    rows = (tmp_path / "sweep" / "pca_sweep.csv").read_text().strip().splitlines()
    table = {int(d): float(v) for d, v in (r.split(",") for r in rows[1:])}
    recorded_ok = sorted(table) == [2, 4, 8, 16, 32, 64, 128]
    loss64 = table[128] - table[64]
    loss32 = table[128] - table[32]
    ok = rc == 0 and recorded_ok and loss64 < 0.02 and loss32 < 0.02
    line = report(8, ok, f"mAP@10 {table[128]:.4f} at 128 dims; loss {loss64:+.4f} at 64, "
                         f"{loss32:+.4f} at 32 (< 0.02); full sweep recorded down to 2")
    assert ok, line


def test_criterion_9_determinism(tmp_path):
    env = dict(os.environ, OMP_NUM_THREADS="1")

    def pipeline(root):
        corpus = root / "corpus"
        steps = [
            ["synth", "--classes", "letter,form,email", "--per-class", "8",
             "--size", "48", "--noise", "0.4", "--seed", "13", "--out", str(corpus)],
            ["split", "--manifest", str(corpus / "manifest.tsv"), "--train", "15",
             "--val", "6", "--stratified", "--seed", "13", "--out", str(corpus)],
            ["bow-vocab", "--manifest", str(corpus / "manifest.tsv"), "--split", "train",
             "--k", "16", "--seed", "13", "--out", str(root / "bow")],
            ["encode", "--manifest", str(corpus / "manifest.tsv"), "--split", "train",
             "--kind", "bow", "--vocab", str(root / "bow" / "vocab_k16.dsvoc"),
             "--out", str(root / "bow")],
            ["encode", "--manifest", str(corpus / "manifest.tsv"), "--split", "test",
             "--kind", "bow", "--vocab", str(root / "bow" / "vocab_k16.dsvoc"),
             "--out", str(root / "bow")],
            ["train-cnn", "--manifest", str(corpus / "manifest.tsv"),
             "--arch", "48x48-5x5x8:2-r-p3:2-32-r-N", "--epochs", "4",
             "--batch-size", "8", "--seed", "13", "--out", str(root / "cnn")],
            ["extract-features", "--model", str(root / "cnn" / "model.dsnet"),
             "--manifest", str(corpus / "manifest.tsv"), "--split", "all",
             "--out", str(root / "feats")],
            ["fit-pca", "--features", str(root / "feats" / "features_train_holistic.dsfea"),
             "--dim", "8", "--out", str(root / "pca")],
            ["compress", "--features", str(root / "feats" / "features_test_holistic.dsfea"),
             "--pca", str(root / "pca" / "pca_8.dspca"), "--out", str(root / "comp")],
            ["eval-classify",
             "--train-features", str(root / "bow" / "features_bow_holistic_train.dsfea"),
             "--test-features", str(root / "bow" / "features_bow_holistic_test.dsfea"),
             "--trees", "20", "--seed", "13", "--out", str(root / "cls")],
            ["eval-retrieve",
             "--index", str(root / "bow" / "features_bow_holistic_train.dsfea"),
             "--queries", str(root / "bow" / "features_bow_holistic_test.dsfea"),
             "--k", "5", "--out", str(root / "ret")],
            ["pca-sweep",
             "--features", str(root / "feats" / "features_train_holistic.dsfea"),
             "--queries", str(root / "feats" / "features_test_holistic.dsfea"),
             "--dims", "2,4", "--k", "3", "--out", str(root / "sweep")],
        ]
        for argv in steps:
            proc = subprocess.run([sys.executable, "-m", "docstyle",
                                   *argv, "--threads", "1"],
                                  env=env, capture_output=True, text=True, timeout=600)
            assert proc.returncode == 0, f"{argv[0]} failed: {proc.stderr}"

    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        pipeline(tmp_path / name)

    a, b = tmp_path / "a", tmp_path / "b"
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    names_ok = files_a == files_b
    compared = diffs = 0
    for rel in files_a:
        if rel.name == "run_manifest.json":   # carries wall-clock timings
            continue
        compared += 1
        if (a / rel).read_bytes() != (b / rel).read_bytes():
            diffs += 1
            print(f"differs: {rel}", flush=True)
    ok = names_ok and diffs == 0
    line = report(9, ok, f"two pipeline runs byte-identical across {compared} files "
                         f"(images, features, models, vocab, pca, metric CSVs)")
    assert ok, line
