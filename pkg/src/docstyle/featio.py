"""The DSFEA1 feature container: a float32 matrix with ids and labels.

Layout (little-endian): magic, N and D as u32, the row-major float32
payload, then N length-prefixed UTF-8 id strings and N int32 labels.
Unlabeled rows carry -1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import binio

FEA_MAGIC = b"DSFEA1"


@dataclass
class FeatureMatrix:
    features: np.ndarray      # (N, D) float32
    ids: list                 # N strings
    labels: np.ndarray        # (N,) int32, -1 = unlabeled

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        n = self.features.shape[0]
        if len(self.ids) != n or self.labels.shape != (n,):
            raise ValueError(
                f"ids ({len(self.ids)}) and labels ({self.labels.shape}) must both have {n} rows")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def save_features(fm: FeatureMatrix, path):
    with open(path, "wb") as fh:
        fh.write(FEA_MAGIC)
        binio.write_u32(fh, fm.n)
        binio.write_u32(fh, fm.dim)
        fh.write(np.ascontiguousarray(fm.features, dtype="<f4").tobytes())
        for item in fm.ids:
            binio.write_str(fh, item)
        fh.write(np.ascontiguousarray(fm.labels, dtype="<i4").tobytes())


def load_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        binio.expect_magic(fh, FEA_MAGIC)
        n = binio.read_u32(fh)
        d = binio.read_u32(fh)
        feats = np.frombuffer(binio.read_exact(fh, 4 * n * d), dtype="<f4").reshape(n, d)
        ids = [binio.read_str(fh) for _ in range(n)]
        labels = np.frombuffer(binio.read_exact(fh, 4 * n), dtype="<i4")
    return FeatureMatrix(feats.copy(), ids, labels.copy())
