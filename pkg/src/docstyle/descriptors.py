"""Hand-crafted image descriptors: dense local patches, a global oriented-
energy summary, and the brightness baselines.

The local descriptor is a dense grid of 32-dim gradient-orientation
histograms (2x2 spatial sub-cells x 8 orientation bins, magnitude weighted),
a lightweight stand-in for interest-point descriptors that keeps the whole
pipeline dependency-free.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .imaging import REGION_BOUNDS, REGION_ORDER, to_frame

SUBCELLS = 2          # per axis
ORIENT_BINS = 8
DESCRIPTOR_DIM = SUBCELLS * SUBCELLS * ORIENT_BINS
UNIFORM_EPS = 1e-12


@dataclass
class LocalDescriptorSet:
    """Dense descriptors plus their normalized (row, col) grid positions.

    positions lie in [0, 1) (patch centers over the image extent); uniform
    marks all-flat patches whose descriptor was left at zero.
    """
    descriptors: np.ndarray   # (M, 32) float32, L2-normalized rows
    positions: np.ndarray     # (M, 2) float64
    uniform: np.ndarray       # (M,) bool


def _patch_windows(arr: np.ndarray, patch: int, stride: int) -> np.ndarray:
    h, w = arr.shape
    gh = (h - patch) // stride + 1
    gw = (w - patch) // stride + 1
    sh, sw = arr.strides
    return as_strided(arr, (gh, gw, patch, patch), (sh * stride, sw * stride, sh, sw))


def dense_descriptors(img: np.ndarray, patch: int = 8, stride: int = 4) -> LocalDescriptorSet:
    """Gradient-orientation histograms over a regular patch grid.

    Patch count per axis is floor((extent - patch) / stride) + 1. Each patch
    splits into 2x2 sub-cells; every pixel votes its gradient magnitude into
    one of 8 orientation bins of its sub-cell. Descriptors are L2-normalized
    unless the patch has no gradient energy at all.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if h < patch or w < patch:
        raise ValueError(f"image {img.shape} smaller than patch {patch}")
    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)
    bins = np.minimum((ang / (2.0 * np.pi / ORIENT_BINS)).astype(np.int64), ORIENT_BINS - 1)

    win_mag = _patch_windows(mag, patch, stride)
    win_bin = _patch_windows(bins, patch, stride)
    gh, gw = win_mag.shape[:2]
    m = gh * gw
    half = patch // 2
    # sub-cell split: [0:half) and [half:patch) per axis (odd patches give
    # the second cell the extra row/column)
    feats = np.zeros((m, SUBCELLS, SUBCELLS, ORIENT_BINS))
    row_ids = np.arange(m)[:, None]
    for si, (r0, r1) in enumerate(((0, half), (half, patch))):
        for sj, (c0, c1) in enumerate(((0, half), (half, patch))):
            sub_mag = win_mag[:, :, r0:r1, c0:c1].reshape(m, -1)
            sub_bin = win_bin[:, :, r0:r1, c0:c1].reshape(m, -1)
            np.add.at(feats[:, si, sj, :], (row_ids, sub_bin), sub_mag)
    feats = feats.reshape(m, DESCRIPTOR_DIM)

    norms = np.linalg.norm(feats, axis=1)
    uniform = norms <= UNIFORM_EPS
    feats[~uniform] /= norms[~uniform, None]

    ri = np.repeat(np.arange(gh), gw) * stride
    ci = np.tile(np.arange(gw), gh) * stride
    positions = np.stack([(ri + patch / 2.0) / h, (ci + patch / 2.0) / w], axis=1)
    return LocalDescriptorSet(feats.astype(np.float32), positions, uniform)


def _downsample2(img: np.ndarray) -> np.ndarray:
    """2x2 mean pooling; trailing odd row/col is dropped."""
    h, w = img.shape
    h2, w2 = h // 2, w // 2
    if h2 < 1 or w2 < 1:
        return img
    return img[:h2 * 2, :w2 * 2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def gist_like(img: np.ndarray, orientations: int = 8, scales: int = 4,
              grid: int = 4) -> np.ndarray:
    """Global layout descriptor: oriented gradient energy pooled on a grid.

    At each of `scales` octaves the image is 2x2 mean-pooled; the response
    to orientation theta is |cos(theta)*Ix + sin(theta)*Iy|, averaged inside
    each cell of a grid x grid partition. Output length is
    orientations * scales * grid**2, ordered (scale, orientation, row, col).
    """
    if orientations < 1 or scales < 1 or grid < 1:
        raise ValueError("orientations, scales, and grid must be positive")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    out = np.zeros((scales, orientations, grid, grid))
    level = img
    for s in range(scales):
        if min(level.shape) < 2:
            break  # exhausted octaves; remaining cells stay zero
        gy, gx = np.gradient(level)
        h, w = level.shape
        r_edges = np.linspace(0, h, grid + 1).astype(int)
        c_edges = np.linspace(0, w, grid + 1).astype(int)
        for o in range(orientations):
            theta = o * np.pi / orientations
            energy = np.abs(np.cos(theta) * gx + np.sin(theta) * gy)
            for gi in range(grid):
                for gj in range(grid):
                    cell = energy[r_edges[gi]:r_edges[gi + 1], c_edges[gj]:c_edges[gj + 1]]
                    out[s, o, gi, gj] = cell.mean() if cell.size else 0.0
        level = _downsample2(level)
    return out.reshape(-1).astype(np.float32)


def brightness(img: np.ndarray) -> np.ndarray:
    """Single-element mean-intensity descriptor."""
    return np.array([float(np.mean(img))], dtype=np.float32)


def region_brightness(img: np.ndarray) -> np.ndarray:
    """Mean intensity of the five canonical regions, in canonical order
    (holistic, header, left_body, right_body, footer)."""
    frame = to_frame(img)
    vals = []
    for name in REGION_ORDER:
        r0, r1, c0, c1 = REGION_BOUNDS[name]
        vals.append(float(np.mean(frame[r0:r1, c0:c1])))
    return np.asarray(vals, dtype=np.float32)
