"""Random forest on dense feature vectors, with Gini-impurity splits.

Candidate thresholds are midpoints between consecutive distinct sorted
values. Equal-gain ties break to the lowest feature index, then the lowest
threshold, so a fitted forest depends only on (data, config, seed).
Because impurity depends only on sort order, the learned split structure
is invariant under any strictly monotone per-feature transform applied
consistently to train and test data; predictions are preserved exactly at
values that appear in each tree's training sample (a warped midpoint can
move relative to values strictly between two sample points).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import binio
from .seeding import derive_rng

RF_MAGIC = b"DSRF1\x00"


@dataclass
class ForestConfig:
    n_trees: int = 500
    features_per_split: int | None = None    # None -> round(sqrt(D))
    max_depth: int | None = None
    min_samples_leaf: int = 1
    bootstrap: bool = True
    seed: int = 0


@dataclass
class Tree:
    """Flat pre-order node arrays; feature -1 marks a leaf."""
    feature: np.ndarray       # (nodes,) int32
    threshold: np.ndarray     # (nodes,) float64
    left: np.ndarray          # (nodes,) int32, -1 at leaves
    right: np.ndarray         # (nodes,) int32
    hist: np.ndarray          # (nodes, C) float64; class counts at leaves


@dataclass
class Forest:
    config: ForestConfig
    n_classes: int
    n_features: int
    trees: list = field(default_factory=list)
    oob_accuracy: float | None = None


def _gini_counts(counts: np.ndarray) -> float:
    n = counts.sum()
    if n <= 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def _best_split(x: np.ndarray, y: np.ndarray, feat_ids: np.ndarray, n_classes: int,
                min_leaf: int):
    """Best (feature, threshold) over the candidate features, or None.

    Scans every midpoint between consecutive distinct sorted values in one
    vectorized pass: class counts left of each cut come from a cumulative
    one-hot sum, and the weighted child impurity is minimized exactly.
    """
    n, f = x.shape[0], len(feat_ids)
    vals = x[:, feat_ids]
    order = np.argsort(vals, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(vals, order, axis=0)
    sorted_labels = y[order]

    onehot = np.zeros((n, f, n_classes))
    onehot[np.arange(n)[:, None], np.arange(f)[None, :], sorted_labels] = 1.0
    left_counts = np.cumsum(onehot, axis=0)[:-1]          # cuts after position i
    total = left_counts[-1] + onehot[-1]

    nl = np.arange(1, n)[:, None]
    nr = n - nl
    valid = sorted_vals[1:] != sorted_vals[:-1]
    if min_leaf > 1:
        valid &= (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None

    sl = left_counts.sum(axis=2)
    gl = 1.0 - np.sum(left_counts ** 2, axis=2) / np.maximum(sl, 1) ** 2
    right_counts = total[None, :, :] - left_counts
    sr = right_counts.sum(axis=2)
    gr = 1.0 - np.sum(right_counts ** 2, axis=2) / np.maximum(sr, 1) ** 2
    score = (nl * gl + nr * gr) / n
    score = np.where(valid, score, np.inf)

    best = np.min(score)
    if not np.isfinite(best):
        return None
    cuts, cols = np.nonzero(score == best)
    # ties: lowest original feature index, then lowest threshold
    thresholds = (sorted_vals[cuts, cols] + sorted_vals[cuts + 1, cols]) / 2.0
    keys = sorted(range(len(cuts)), key=lambda i: (feat_ids[cols[i]], thresholds[i]))
    pick = keys[0]
    return int(feat_ids[cols[pick]]), float(thresholds[pick])


def _grow_tree(x: np.ndarray, y: np.ndarray, n_classes: int, config: ForestConfig,
               f_split: int, rng: np.random.Generator) -> Tree:
    feature, threshold, left, right, hist = [], [], [], [], []
    # stack entries: (sample index array, depth, parent slot, is_left_child)
    stack = [(np.arange(len(y)), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        slot = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = slot
        counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        pure = _gini_counts(counts) <= 0.0
        capped = config.max_depth is not None and depth >= config.max_depth
        tiny = len(idx) < 2 * config.min_samples_leaf
        split = None
        if not (pure or capped or tiny):
            feat_ids = np.sort(rng.choice(x.shape[1], size=f_split, replace=False))
            split = _best_split(x[idx], y[idx], feat_ids, n_classes, config.min_samples_leaf)
        if split is None:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            hist.append(counts)
            continue
        fid, thr = split
        feature.append(fid)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        hist.append(np.zeros(n_classes))
        goes_left = x[idx, fid] <= thr
        # push right first so the left child serializes immediately after
        # its parent (pre-order)
        stack.append((idx[~goes_left], depth + 1, slot, False))
        stack.append((idx[goes_left], depth + 1, slot, True))
    return Tree(np.asarray(feature, np.int32), np.asarray(threshold, np.float64),
                np.asarray(left, np.int32), np.asarray(right, np.int32),
                np.vstack(hist))


def _tree_leaf_nodes(tree: Tree, x: np.ndarray) -> np.ndarray:
    """Leaf slot for every row of x."""
    node = np.zeros(len(x), dtype=np.int64)
    while True:
        feats = tree.feature[node]
        active = feats >= 0
        if not active.any():
            return node
        rows = np.nonzero(active)[0]
        f = feats[rows]
        goes_left = x[rows, f] <= tree.threshold[node[rows]]
        node[rows] = np.where(goes_left, tree.left[node[rows]], tree.right[node[rows]])


def _tree_proba(tree: Tree, x: np.ndarray) -> np.ndarray:
    leaves = _tree_leaf_nodes(tree, x)
    h = tree.hist[leaves]
    return h / h.sum(axis=1, keepdims=True)


def forest_train(x: np.ndarray, y: np.ndarray, config: ForestConfig,
                 n_classes: int | None = None) -> Forest:
    """Fit a forest. Per-tree RNG streams derive from (seed, tree index),
    so a fitted forest is a pure function of (data, config, seed)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or len(y) != len(x):
        raise ValueError("expected aligned (n, d) features and (n,) labels")
    if len(y) == 0:
        raise ValueError("empty training set")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"label out of range for {n_classes} classes")
    d = x.shape[1]
    f_split = config.features_per_split or max(1, round(np.sqrt(d)))
    if not 1 <= f_split <= d:
        raise ValueError(f"features_per_split {f_split} out of range for {d} features")

    forest = Forest(config, n_classes, d)
    oob_votes = np.zeros((len(y), n_classes))
    oob_seen = np.zeros(len(y), dtype=bool)
    for t in range(config.n_trees):
        rng = derive_rng("forest", config.seed, t)
        if config.bootstrap:
            sample = rng.integers(0, len(y), size=len(y))
        else:
            sample = np.arange(len(y))
        tree = _grow_tree(x[sample], y[sample], n_classes, config, f_split, rng)
        forest.trees.append(tree)
        if config.bootstrap:
            mask = np.ones(len(y), dtype=bool)
            mask[sample] = False
            if mask.any():
                oob_votes[mask] += _tree_proba(tree, x[mask])
                oob_seen |= mask
    if config.bootstrap and oob_seen.any():
        pred = np.argmax(oob_votes[oob_seen], axis=1)
        forest.oob_accuracy = float(np.mean(pred == y[oob_seen]))
    return forest


def forest_proba(forest: Forest, x: np.ndarray) -> np.ndarray:
    """Mean of per-tree leaf distributions."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != forest.n_features:
        raise ValueError(f"expected {forest.n_features} features, got {x.shape[1]}")
    acc = np.zeros((len(x), forest.n_classes))
    for tree in forest.trees:
        acc += _tree_proba(tree, x)
    return acc / len(forest.trees)


def forest_predict(forest: Forest, x: np.ndarray) -> np.ndarray:
    """Predicted labels; probability ties resolve to the lowest class."""
    return np.argmax(forest_proba(forest, x), axis=1)


def save_forest(forest: Forest, path):
    """DSRF1: config header then each tree's pre-order node arrays."""
    cfg = forest.config
    with open(path, "wb") as fh:
        fh.write(RF_MAGIC)
        binio.write_u32(fh, cfg.n_trees)
        binio.write_u32(fh, cfg.features_per_split or 0)
        binio.write_u32(fh, 0 if cfg.max_depth is None else cfg.max_depth)
        binio.write_u32(fh, cfg.min_samples_leaf)
        binio.write_u8(fh, 1 if cfg.bootstrap else 0)
        binio.write_i32(fh, cfg.seed)
        binio.write_u32(fh, forest.n_classes)
        binio.write_u32(fh, forest.n_features)
        binio.write_f64(fh, -1.0 if forest.oob_accuracy is None else forest.oob_accuracy)
        binio.write_u32(fh, len(forest.trees))
        for tree in forest.trees:
            binio.write_u32(fh, len(tree.feature))
            binio.write_array(fh, tree.feature, "<i4")
            binio.write_array(fh, tree.threshold, "<f8")
            binio.write_array(fh, tree.left, "<i4")
            binio.write_array(fh, tree.right, "<i4")
            binio.write_array(fh, tree.hist, "<f8")


def load_forest(path) -> Forest:
    with open(path, "rb") as fh:
        binio.expect_magic(fh, RF_MAGIC)
        n_trees = binio.read_u32(fh)
        fps = binio.read_u32(fh)
        max_depth = binio.read_u32(fh)
        min_leaf = binio.read_u32(fh)
        bootstrap = binio.read_u8(fh) == 1
        seed = binio.read_i32(fh)
        n_classes = binio.read_u32(fh)
        n_features = binio.read_u32(fh)
        oob = binio.read_f64(fh)
        count = binio.read_u32(fh)
        cfg = ForestConfig(n_trees, fps or None, max_depth or None, min_leaf,
                           bootstrap, seed)
        forest = Forest(cfg, n_classes, n_features,
                        oob_accuracy=None if oob < 0 else oob)
        for _ in range(count):
            binio.read_u32(fh)  # node count, implied by the arrays
            forest.trees.append(Tree(
                binio.read_array(fh, "<i4"), binio.read_array(fh, "<f8"),
                binio.read_array(fh, "<i4"), binio.read_array(fh, "<i4"),
                binio.read_array(fh, "<f8")))
    return forest
