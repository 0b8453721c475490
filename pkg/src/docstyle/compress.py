"""Feature normalization, PCA compression, and the region ensemble.

The PCA basis comes from a cyclic Jacobi eigensolver written here rather
than a library call, so library eigendecompositions stay available as an
independent cross-check. Fitting runs on the D x D covariance when the
sample count allows, and otherwise on the N x N Gram matrix (the two share
nonzero eigenvalues; Gram-side eigenvectors map back through the data).

The compression protocol for retrieval-ready vectors is always L2 ->
project -> L2; build_ensemble_descriptor applies it per region and
concatenates in canonical region order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import binio
from .imaging import REGION_ORDER

PCA_MAGIC = b"DSPCA1"
ZERO_EPS = 1e-12


@dataclass
class PcaModel:
    mean: np.ndarray          # (D,) float64
    basis: np.ndarray         # (D, d) float64, orthonormal columns
    eigenvalues: np.ndarray   # (d,) float64, descending, non-negative

    @property
    def in_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def out_dim(self) -> int:
        return self.basis.shape[1]


@dataclass
class EnsembleDescriptor:
    region_names: tuple
    parts: list               # per-region projected vectors/matrices
    vector: np.ndarray        # concatenation in region order


def l2_normalize(v: np.ndarray, eps: float = ZERO_EPS):
    """Scale to unit length; a zero vector comes back unchanged with the
    flag set instead of raising."""
    v = np.asarray(v)
    norm = float(np.linalg.norm(v))
    if norm <= eps:
        return v.copy(), True
    return v / norm, False


def l2_normalize_rows(x: np.ndarray, eps: float = ZERO_EPS):
    """Row-wise variant; returns (matrix, zero-row flags)."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    flags = norms <= eps
    out = x.copy()
    out[~flags] /= norms[~flags, None]
    return out, flags


def jacobi_eigh(matrix: np.ndarray, tol_factor: float = 1e-10, max_sweeps: int = 60):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps row-cyclically, rotating away each off-diagonal entry, until the
    off-diagonal Frobenius norm drops below tol_factor * trace (or machine
    floor for traceless inputs). Returns (eigenvalues, eigenvectors) in
    descending eigenvalue order, eigenvectors in columns.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    v = np.eye(n)
    trace = float(np.trace(a))
    tol = tol_factor * max(abs(trace), n * np.finfo(np.float64).eps)
    # entries at or below tol/n can never lift the off-diagonal norm above
    # tol on their own, so sweeps skip them instead of wasting rotations
    skip = tol / max(1, n)
    for _ in range(max_sweeps):
        off = np.sqrt(max(0.0, float(np.sum(a * a) - np.sum(np.diag(a) ** 2))))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                app, aqq = a[p, p], a[q, q]
                theta = 0.5 * (aqq - app) / apq
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) \
                    if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # two-sided rotation on rows/cols p and q
                ap = a[p].copy()
                aq = a[q].copy()
                a[p] = c * ap - s * aq
                a[q] = s * ap + c * aq
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    evals = np.diag(a).copy()
    order = np.argsort(-evals, kind="stable")
    return evals[order], v[:, order]


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive."""
    out = basis.copy()
    for j in range(out.shape[1]):
        anchor = int(np.argmax(np.abs(out[:, j])))
        if out[anchor, j] < 0:
            out[:, j] = -out[:, j]
    return out


def pca_fit(x: np.ndarray, d: int) -> PcaModel:
    """Fit a d-dimensional PCA. Requires d <= min(N - 1, D) and data with
    nonzero variance. No whitening: projections keep their scale."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("PCA wants a (n, d) matrix")
    n, dim = x.shape
    if n < 2:
        raise ValueError("PCA needs at least two samples")
    if not 1 <= d <= min(n - 1, dim):
        raise ValueError(f"d={d} out of range, must lie in [1, {min(n - 1, dim)}]")
    mean = x.mean(axis=0)
    xc = x - mean
    total_var = float(np.sum(xc * xc)) / (n - 1)
    if total_var <= ZERO_EPS:
        raise ValueError("data has zero variance; nothing to fit")

    if dim <= n:
        cov = (xc.T @ xc) / (n - 1)
        evals, evecs = jacobi_eigh(cov)
        basis = evecs[:, :d]
    else:
        gram = (xc @ xc.T) / (n - 1)
        evals, evecs = jacobi_eigh(gram)
        if evals[d - 1] <= 1e-12 * max(evals[0], 1.0):
            raise ValueError(f"data rank below requested d={d}")
        basis = xc.T @ evecs[:, :d]
        basis /= np.sqrt(evals[:d] * (n - 1))[None, :]
    eigenvalues = np.maximum(evals[:d], 0.0)
    return PcaModel(mean, _fix_signs(basis), eigenvalues)


def pca_transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project rows (or one vector) onto the basis after mean removal."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.in_dim:
        raise ValueError(f"expected {model.in_dim}-dim input, got {x.shape[1]}")
    z = (x - model.mean) @ model.basis
    return z[0] if single else z


def pca_reconstruct(model: PcaModel, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    x = z @ model.basis.T + model.mean
    return x[0] if single else x


def captured_variance(model: PcaModel) -> float:
    return float(np.sum(model.eigenvalues))


def compress_rows(x: np.ndarray, model: PcaModel) -> np.ndarray:
    """The retrieval protocol for a feature matrix: L2, project, L2.

    Zero-norm rows stay exactly zero all the way through rather than being
    shifted by the mean.
    """
    normed, flags = l2_normalize_rows(np.asarray(x, dtype=np.float64))
    out = np.zeros((x.shape[0], model.out_dim))
    live = ~flags
    if live.any():
        z = pca_transform(model, normed[live])
        z, _ = l2_normalize_rows(z)
        out[live] = z
    return out


def build_ensemble_descriptor(region_vectors, models, d_each: int | None = None) -> EnsembleDescriptor:
    """Compress one vector (or matrix) per region and concatenate.

    region_vectors is a mapping or list of (name, array) in canonical region
    order (holistic, header, left_body, right_body, footer); models maps the
    same names to fitted PcaModels. All projected widths must agree. A
    region whose vector has zero norm contributes an all-zero slot.
    """
    items = list(region_vectors.items()) if hasattr(region_vectors, "items") \
        else list(region_vectors)
    names = tuple(name for name, _ in items)
    if names != REGION_ORDER[:len(names)]:
        raise ValueError(f"regions must arrive in canonical order {REGION_ORDER}, got {names}")
    widths = {models[name].out_dim for name, _ in items}
    if len(widths) != 1:
        raise ValueError(f"region projections disagree on width: {sorted(widths)}")
    if d_each is not None and widths != {d_each}:
        raise ValueError(f"expected {d_each}-dim projections, got {widths}")
    parts = []
    for name, arr in items:
        arr = np.asarray(arr, dtype=np.float64)
        single = arr.ndim == 1
        z = compress_rows(arr[None, :] if single else arr, models[name])
        parts.append(z[0] if single else z)
    vector = np.concatenate(parts, axis=-1)
    return EnsembleDescriptor(names, parts, vector)


def save_pca(model: PcaModel, path):
    """DSPCA1: magic, D, d (u32), then mean, basis, eigenvalues as float64
    (full precision keeps the orthonormality contract through a round-trip)."""
    with open(path, "wb") as fh:
        fh.write(PCA_MAGIC)
        binio.write_u32(fh, model.in_dim)
        binio.write_u32(fh, model.out_dim)
        binio.write_array(fh, model.mean, "<f8")
        binio.write_array(fh, model.basis, "<f8")
        binio.write_array(fh, model.eigenvalues, "<f8")


def load_pca(path) -> PcaModel:
    with open(path, "rb") as fh:
        binio.expect_magic(fh, PCA_MAGIC)
        dim = binio.read_u32(fh)
        d = binio.read_u32(fh)
        mean = binio.read_array(fh, "<f8")
        basis = binio.read_array(fh, "<f8")
        evals = binio.read_array(fh, "<f8")
    if mean.shape != (dim,) or basis.shape != (dim, d) or evals.shape != (d,):
        raise binio.FormatError("PCA container shapes are inconsistent")
    return PcaModel(mean, basis, evals)
