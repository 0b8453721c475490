"""Corpus manifests, split assignment, and deterministic batch iteration.

A manifest is a UTF-8 TSV whose first line carries the label vocabulary:

    #labels<TAB>letter<TAB>memo<TAB>...
    images/letter/letter_0000.pgm<TAB>letter<TAB>train
    ...

Paths are stored relative to the manifest file and resolved against its
directory at load time. Split tags are train/val/test/unassigned.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .imaging import extract_regions, load_image, resize_bilinear
from .seeding import derive_rng

SPLITS = ("train", "val", "test", "unassigned")


@dataclass
class Entry:
    path: str
    label: int
    split: str = "unassigned"


@dataclass
class Manifest:
    label_names: list
    entries: list = field(default_factory=list)
    root: Path = Path(".")

    def subset(self, split: str) -> list:
        if split == "all":
            return list(self.entries)
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]

    def resolve(self, entry: Entry) -> Path:
        return self.root / entry.path


def save_manifest(manifest: Manifest, path):
    path = Path(path)
    lines = ["#labels\t" + "\t".join(manifest.label_names)]
    for e in manifest.entries:
        lines.append(f"{e.path}\t{manifest.label_names[e.label]}\t{e.split}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path) -> Manifest:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#labels\t"):
        raise ValueError(f"{path.name}: first line must declare the label vocabulary")
    names = lines[0].split("\t")[1:]
    if len(set(names)) != len(names) or not names:
        raise ValueError(f"{path.name}: label names must be unique and non-empty")
    index = {name: i for i, name in enumerate(names)}
    entries, seen = [], set()
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path.name}:{ln}: expected path<TAB>label<TAB>split")
        rel, label_name, split = parts
        if rel in seen:
            raise ValueError(f"{path.name}:{ln}: duplicate path {rel!r}")
        seen.add(rel)
        if label_name not in index:
            raise ValueError(f"{path.name}:{ln}: unknown label {label_name!r}")
        if split not in SPLITS:
            raise ValueError(f"{path.name}:{ln}: unknown split {split!r}")
        entries.append(Entry(rel, index[label_name], split))
    return Manifest(list(names), entries, root=path.parent)


def split_dataset(manifest: Manifest, counts=None, ratios=None, seed: int = 0,
                  stratified: bool = False) -> Manifest:
    """Assign train/val/test tags over a shuffled copy of the entries.

    counts=(n_train, n_val) sends the remainder to test; ratios=(a, b, c)
    with a+b+c <= 1 allocates by largest remainder, leaving entries
    unassigned when the ratios sum below one. stratified applies the same
    protocol per label; apportionment keeps every label's share within one
    item of exact proportionality.
    """
    if (counts is None) == (ratios is None):
        raise ValueError("give exactly one of counts or ratios")
    if counts is not None:
        if len(counts) != 2 or any(c < 0 for c in counts):
            raise ValueError("counts must be two non-negative integers (train, val)")
        if sum(counts) > len(manifest.entries):
            raise ValueError(f"split counts {tuple(counts)} exceed {len(manifest.entries)} entries")
    if ratios is not None:
        if len(ratios) != 3 or any(r < 0 for r in ratios):
            raise ValueError("ratios must be three non-negative numbers")
        if sum(ratios) > 1.0 + 1e-9:
            raise ValueError(f"ratios sum to {sum(ratios)}, must not exceed 1")

    entries = [replace(e) for e in manifest.entries]
    if not stratified:
        order = list(derive_rng("split", seed).permutation(len(entries)))
        _tag(entries, order, _split_sizes(len(entries), counts, ratios))
    else:
        groups: dict = {}
        for i, e in enumerate(entries):
            groups.setdefault(e.label, []).append(i)
        labels = sorted(groups)
        if counts is not None:
            weights = [len(groups[lab]) for lab in labels]
            per_train = _apportion(counts[0], weights)
            per_val = _apportion(counts[1], weights)
            per_sizes = {}
            for lab, tr, va in zip(labels, per_train, per_val):
                n_l = len(groups[lab])
                if tr + va > n_l:
                    raise ValueError(f"label {lab}: counts {tr}+{va} exceed {n_l} items")
                per_sizes[lab] = [tr, va, n_l - tr - va]
        else:
            per_sizes = {lab: _split_sizes(len(groups[lab]), None, ratios) for lab in labels}
        for lab in labels:
            order = derive_rng("split", seed, lab).permutation(len(groups[lab]))
            idx = [groups[lab][j] for j in order]
            _tag(entries, idx, per_sizes[lab])
    return Manifest(list(manifest.label_names), entries, root=manifest.root)


def _tag(entries, idx, sizes):
    pos = 0
    for split, size in zip(("train", "val", "test"), sizes):
        for j in idx[pos:pos + size]:
            entries[j].split = split
        pos += size
    for j in idx[pos:]:
        entries[j].split = "unassigned"


def _split_sizes(n: int, counts, ratios) -> list:
    """[n_train, n_val, n_test]; counts send the remainder to test, ratios
    go through largest-remainder rounding (sum < 1 leaves a leftover)."""
    if counts is not None:
        n_train, n_val = counts
        if n_train + n_val > n:
            raise ValueError(f"split counts {tuple(counts)} exceed {n} entries")
        return [n_train, n_val, n - n_train - n_val]
    assigned = n if abs(sum(ratios) - 1.0) < 1e-9 else None
    exact = [r * n for r in ratios]
    base = [int(np.floor(v + 1e-9)) for v in exact]
    target = assigned if assigned is not None else int(np.floor(sum(exact) + 1e-9))
    order = sorted(range(3), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:max(0, target - sum(base))]:
        base[i] += 1
    return base


def _apportion(total: int, weights) -> list:
    """Split an integer total proportionally to weights, largest remainder,
    ties to the lower index. Every share lands within one of exact."""
    wsum = sum(weights)
    if wsum == 0:
        return [0] * len(weights)
    exact = [total * w / wsum for w in weights]
    base = [int(np.floor(v + 1e-9)) for v in exact]
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:total - sum(base)]:
        base[i] += 1
    return base


def split_counts(manifest: Manifest) -> dict:
    out = {s: 0 for s in SPLITS}
    for e in manifest.entries:
        out[e.split] += 1
    return out


def prepare_image(img: np.ndarray, region: str = "holistic", size: int | None = None) -> np.ndarray:
    """Apply the region/resize policy used everywhere an image feeds a model.

    holistic resizes the full image directly; any other region routes through
    the 780x600 working frame before the final resize.
    """
    if region == "holistic":
        return img if size is None else resize_bilinear(img, size, size)
    if size is None:
        raise ValueError("region cuts need a target size")
    return extract_regions(img, size)[region]


def load_split(manifest: Manifest, split: str, region: str = "holistic",
               size: int | None = None):
    """Materialize a split: returns (images (N, 1, H, W) float32, labels,
    ids). ids are the manifest-relative paths."""
    entries = manifest.subset(split)
    images, labels, ids = [], [], []
    for e in entries:
        img = prepare_image(load_image(manifest.resolve(e)), region, size)
        images.append(img.astype(np.float32))
        labels.append(e.label)
        ids.append(e.path)
    if not images:
        h = w = size or 0
        return np.zeros((0, 1, h, w), np.float32), np.zeros(0, np.int64), []
    x = np.stack(images)[:, None, :, :]
    return x, np.asarray(labels, dtype=np.int64), ids


def batch_indices(n: int, batch_size: int, seed: int, epoch: int = 0) -> list:
    """Deterministic epoch shuffle cut into batches; the last short batch
    is kept."""
    if batch_size < 1:
        raise ValueError("batch size must be positive")
    perm = derive_rng("shuffle", seed, epoch).permutation(n)
    return [perm[lo:lo + batch_size] for lo in range(0, n, batch_size)]


def iterate_batches(manifest: Manifest, split: str, batch_size: int, seed: int,
                    epoch: int = 0, region: str = "holistic", size: int | None = None):
    """Yield (images, labels) batches for a split, shuffled by (seed, epoch)."""
    entries = manifest.subset(split)
    for idx in batch_indices(len(entries), batch_size, seed, epoch):
        images, labels = [], []
        for j in idx:
            e = entries[j]
            img = prepare_image(load_image(manifest.resolve(e)), region, size)
            images.append(img.astype(np.float32))
            labels.append(e.label)
        yield np.stack(images)[:, None, :, :], np.asarray(labels, dtype=np.int64)
