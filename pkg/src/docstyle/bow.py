"""Visual vocabularies and spatially-partitioned bag-of-words encoding.

partition_cells describes three partition families over the unit square:
holistic (one cell), recursive horizontal/vertical strip splits (HxVy), and
the quadtree pyramid. A descriptor votes in every cell containing its
position, each cell keeps its own K-bin histogram, and the L1-normalized
per-cell histograms concatenate into the final vector.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import binio
from .descriptors import LocalDescriptorSet
from .seeding import derive_rng

VOC_MAGIC = b"DSVOC1"


@dataclass
class Vocabulary:
    centroids: np.ndarray               # (K, d) float32
    inertia_history: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class PartitionScheme:
    """kind is 'holistic', 'hv' (levels = (a, b)), or 'pyramid' (levels = L)."""
    kind: str
    levels: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "PartitionScheme":
        """Accepts 'holistic', 'h2v3' / 'H2V3', or 'pyramid3' / 'l3'."""
        t = text.strip().lower()
        if t == "holistic":
            return cls("holistic")
        m = re.match(r"^h(\d+)v(\d+)$", t)
        if m:
            return cls("hv", (int(m.group(1)), int(m.group(2))))
        m = re.match(r"^(?:pyramid|l)(\d+)$", t)
        if m:
            return cls("pyramid", (int(m.group(1)),))
        raise ValueError(f"unknown partition scheme {text!r}")


def cell_count(scheme: PartitionScheme) -> int:
    """Closed forms: holistic 1; HaVb 1 + sum 2^i + sum 2^j; pyramid sum 4^l."""
    if scheme.kind == "holistic":
        return 1
    if scheme.kind == "hv":
        a, b = scheme.levels
        return 1 + sum(2 ** i for i in range(1, a + 1)) + sum(2 ** j for j in range(1, b + 1))
    if scheme.kind == "pyramid":
        (depth,) = scheme.levels
        if depth < 1:
            raise ValueError("pyramid depth must be at least 1")
        return sum(4 ** level for level in range(depth))
    raise ValueError(f"unknown partition kind {scheme.kind!r}")


def partition_cells(scheme: PartitionScheme) -> list:
    """Cell rectangles (r0, r1, c0, c1) over the unit square.

    Order: the whole image first; HaVb then lists horizontal-split levels
    1..a (stacked strips, top to bottom), then vertical levels 1..b (side by
    side, left to right); the pyramid lists each level's grid row-major.
    """
    if scheme.kind == "holistic":
        return [(0.0, 1.0, 0.0, 1.0)]
    cells = []
    if scheme.kind == "hv":
        a, b = scheme.levels
        cells.append((0.0, 1.0, 0.0, 1.0))
        for i in range(1, a + 1):
            n = 2 ** i
            for s in range(n):
                cells.append((s / n, (s + 1) / n, 0.0, 1.0))
        for j in range(1, b + 1):
            n = 2 ** j
            for s in range(n):
                cells.append((0.0, 1.0, s / n, (s + 1) / n))
        return cells
    if scheme.kind == "pyramid":
        (depth,) = scheme.levels
        if depth < 1:
            raise ValueError("pyramid depth must be at least 1")
        for level in range(depth):
            n = 2 ** level
            for gi in range(n):
                for gj in range(n):
                    cells.append((gi / n, (gi + 1) / n, gj / n, (gj + 1) / n))
        return cells
    raise ValueError(f"unknown partition kind {scheme.kind!r}")


def kmeans_fit(data: np.ndarray, k: int, seed: int = 0, max_iters: int = 100) -> Vocabulary:
    """Lloyd's algorithm with distance-weighted greedy seeding.

    Deterministic given (data, k, seed). Assignment ties go to the lowest
    centroid index; a cluster that empties is re-seeded to the point
    farthest from its current centroid. Stops when assignments stop
    changing or at max_iters.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("k-means wants a (n, d) matrix")
    n = data.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} out of range for {n} points")
    if np.unique(data, axis=0).shape[0] < k:
        raise ValueError(f"need at least {k} distinct rows")

    rng = derive_rng("kmeans", seed)
    centroids = np.empty((k, data.shape[1]))
    centroids[0] = data[rng.integers(n)]
    d2 = _sq_dists(data, centroids[:1]).min(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = data[rng.integers(n)]
            continue
        pick = int(rng.choice(n, p=d2 / total))
        centroids[i] = data[pick]
        d2 = np.minimum(d2, _sq_dists(data, centroids[i:i + 1])[:, 0])

    assign = np.full(n, -1)
    history = []
    for _ in range(max_iters):
        dists = _sq_dists(data, centroids)
        new_assign = np.argmin(dists, axis=1)
        history.append(float(np.take_along_axis(dists, new_assign[:, None], 1).sum()))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        point_d2 = np.take_along_axis(dists, assign[:, None], 1)[:, 0]
        for c in range(k):
            members = assign == c
            if members.any():
                centroids[c] = data[members].mean(axis=0)
            else:
                far = int(np.argmax(point_d2))
                centroids[c] = data[far]
                point_d2[far] = 0.0
    return Vocabulary(centroids.astype(np.float32), history)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clamped at zero."""
    d2 = (np.sum(x * x, axis=1)[:, None] - 2.0 * (x @ c.T) + np.sum(c * c, axis=1)[None, :])
    return np.maximum(d2, 0.0)


def assign_words(desc: LocalDescriptorSet, vocab: Vocabulary):
    """Hard-assign non-uniform descriptors to their nearest centroid.

    Returns (word indices, positions) for the voting descriptors; flat
    patches never vote.
    """
    keep = ~desc.uniform
    if not keep.any():
        return np.zeros(0, dtype=np.int64), np.zeros((0, 2))
    feats = desc.descriptors[keep].astype(np.float64)
    words = np.argmin(_sq_dists(feats, vocab.centroids.astype(np.float64)), axis=1)
    return words, desc.positions[keep]


def bow_encode(desc: LocalDescriptorSet, vocab: Vocabulary,
               scheme: PartitionScheme) -> np.ndarray:
    """Spatial bag-of-words vector of length K * cell_count(scheme).

    Each cell's histogram is L1-normalized on its own; empty cells stay
    zero. An image with no voting descriptors encodes to the zero vector.
    """
    cells = partition_cells(scheme)
    k = vocab.k
    out = np.zeros((len(cells), k), dtype=np.float64)
    words, pos = assign_words(desc, vocab)
    if len(words):
        for ci, (r0, r1, c0, c1) in enumerate(cells):
            inside = (pos[:, 0] >= r0) & (pos[:, 0] < r1) & (pos[:, 1] >= c0) & (pos[:, 1] < c1)
            if inside.any():
                out[ci] = np.bincount(words[inside], minlength=k)
        sums = out.sum(axis=1, keepdims=True)
        nonzero = sums[:, 0] > 0
        out[nonzero] /= sums[nonzero]
    return out.reshape(-1).astype(np.float32)


def save_vocabulary(vocab: Vocabulary, path):
    """DSVOC1: magic, K, d (u32), centroid rows (float32)."""
    with open(path, "wb") as fh:
        fh.write(VOC_MAGIC)
        binio.write_u32(fh, vocab.centroids.shape[0])
        binio.write_u32(fh, vocab.centroids.shape[1])
        fh.write(np.ascontiguousarray(vocab.centroids, dtype="<f4").tobytes())


def load_vocabulary(path) -> Vocabulary:
    with open(path, "rb") as fh:
        binio.expect_magic(fh, VOC_MAGIC)
        k = binio.read_u32(fh)
        d = binio.read_u32(fh)
        raw = binio.read_exact(fh, 4 * k * d)
        cents = np.frombuffer(raw, dtype="<f4").reshape(k, d).copy()
    return Vocabulary(cents)
