"""Layer forward/backward kernels and the SGD step.

Each forward pass is a pure function returning (output, cache); the matching
backward pass consumes the cache and the upstream gradient and returns exact
analytic gradients for the input and parameters. Convolution is plain
cross-correlation (no kernel flip) over NCHW activations, implemented by
patch-matrix expansion so the inner loop is a single GEMM.

Activations may be float32 or float64; all kernels preserve the input dtype.
Gradient checking should build float64 tensors, since finite differences at
single precision drown in rounding error.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .seeding import derive_rng


class ShapeMismatch(ValueError):
    """Raised when tensor extents do not satisfy a layer's preconditions."""


@dataclass(frozen=True)
class Conv:
    kernel_h: int
    kernel_w: int
    out_channels: int
    stride: int = 1
    pad: int = 0


@dataclass(frozen=True)
class Pool:
    """Max pooling. Ties inside a window route to the lowest flat index."""
    size: int
    stride: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Dropout:
    """Inverted dropout: surviving units are scaled by 1/(1-rate) at train
    time so inference is the identity."""
    rate: float


@dataclass(frozen=True)
class FullyConnected:
    units: int


@dataclass(frozen=True)
class Softmax:
    pass


LayerSpec = Union[Conv, Pool, ReLU, Dropout, FullyConnected, Softmax]


@dataclass
class LayerCache:
    """Whatever the backward pass needs: stored inputs, masks, argmax routes."""
    kind: str
    data: dict


def conv_output_extent(extent: int, kernel: int, stride: int, pad: int) -> int:
    """floor((extent + 2*pad - kernel) / stride) + 1, validated positive."""
    out = (extent + 2 * pad - kernel) // stride + 1
    if out < 1:
        raise ShapeMismatch(
            f"window {kernel} (stride {stride}, pad {pad}) does not fit extent {extent}")
    return out


def param_shapes(layer: LayerSpec, in_shape: tuple) -> list[tuple]:
    """Parameter array shapes for a layer given its (C, H, W) input shape."""
    if isinstance(layer, Conv):
        c = in_shape[0]
        return [(layer.out_channels, c, layer.kernel_h, layer.kernel_w),
                (layer.out_channels,)]
    if isinstance(layer, FullyConnected):
        fan_in = int(np.prod(in_shape))
        return [(fan_in, layer.units), (layer.units,)]
    return []


def _window_view(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(B, C, H, W) -> strided view (B, C, oh, ow, kh, kw). No copy."""
    b, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    sb, sc, sh, sw = x.strides
    return as_strided(x, (b, c, oh, ow, kh, kw), (sb, sc, sh * stride, sw * stride, sh, sw))


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    """Expand conv windows into a (B*oh*ow, C*kh*kw) patch matrix."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    b, c = x.shape[:2]
    win = _window_view(x, kh, kw, stride)
    _, _, oh, ow = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * kh * kw)
    return cols, oh, ow


def _col2im(dcols: np.ndarray, x_shape: tuple, kh: int, kw: int, stride: int, pad: int,
            oh: int, ow: int) -> np.ndarray:
    """Scatter patch-matrix gradients back onto the (padded) input plane."""
    b, c, h, w = x_shape
    dxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d6 = dcols.reshape(b, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    for ki in range(kh):
        row_stop = ki + (oh - 1) * stride + 1
        for kj in range(kw):
            col_stop = kj + (ow - 1) * stride + 1
            dxp[:, :, ki:row_stop:stride, kj:col_stop:stride] += d6[:, :, :, :, ki, kj]
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad].copy()
    return dxp


def _require_nchw(x: np.ndarray, kind: str) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeMismatch(f"{kind} expects a (batch, channels, h, w) tensor, got ndim {x.ndim}")
    return x


def apply_layer(layer: LayerSpec, params: list, x: np.ndarray,
                mode: str = "train", rng_seed: int = 0):
    """Run one layer forward. Returns (output, LayerCache).

    mode is "train" or "infer"; it only changes Dropout behavior. rng_seed
    feeds the dropout mask generator, so the same (seed, shape) pair always
    yields the same mask.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")

    if isinstance(layer, Conv):
        x = _require_nchw(x, "conv")
        weight, bias = params
        if weight.shape[1] != x.shape[1]:
            raise ShapeMismatch(
                f"conv weight expects {weight.shape[1]} input channels, got {x.shape[1]}")
        cols, oh, ow = _im2col(x, layer.kernel_h, layer.kernel_w, layer.stride, layer.pad)
        flat = cols @ weight.reshape(layer.out_channels, -1).T + bias
        out = flat.reshape(x.shape[0], oh, ow, layer.out_channels).transpose(0, 3, 1, 2)
        cache = LayerCache("conv", {"cols": cols, "x_shape": x.shape, "oh": oh, "ow": ow,
                                    "layer": layer, "weight": weight})
        return np.ascontiguousarray(out), cache

    if isinstance(layer, Pool):
        x = _require_nchw(x, "pool")
        if x.shape[2] < layer.size or x.shape[3] < layer.size:
            raise ShapeMismatch(f"pool window {layer.size} exceeds map {x.shape[2:]}")
        win = _window_view(x, layer.size, layer.size, layer.stride)
        b, c, oh, ow = win.shape[:4]
        flat = win.reshape(b, c, oh, ow, layer.size * layer.size)
        idx = np.argmax(flat, axis=-1)          # first max = lowest flat index on ties
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        cache = LayerCache("pool", {"idx": idx, "x_shape": x.shape, "layer": layer})
        return out, cache

    if isinstance(layer, ReLU):
        cache = LayerCache("relu", {"x": x})
        return np.maximum(x, 0), cache

    if isinstance(layer, Dropout):
        if not 0.0 <= layer.rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {layer.rate}")
        if mode == "infer":
            return x, LayerCache("dropout", {"mask": None, "layer": layer})
        rng = derive_rng("dropout", int(rng_seed))
        mask = rng.random(x.shape) >= layer.rate
        scale = 1.0 / (1.0 - layer.rate)
        out = x * (mask.astype(x.dtype) * np.asarray(scale, dtype=x.dtype))
        cache = LayerCache("dropout", {"mask": mask, "layer": layer})
        return out, cache

    if isinstance(layer, FullyConnected):
        weight, bias = params
        if x.ndim < 2:
            raise ShapeMismatch("fully-connected input needs a batch dimension")
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != weight.shape[0]:
            raise ShapeMismatch(
                f"fully-connected expects {weight.shape[0]} features, got {flat.shape[1]}")
        out = flat @ weight + bias
        cache = LayerCache("fc", {"flat": flat, "x_shape": x.shape, "weight": weight})
        return out, cache

    if isinstance(layer, Softmax):
        shifted = x - np.max(x, axis=-1, keepdims=True)
        ex = np.exp(shifted)
        out = ex / np.sum(ex, axis=-1, keepdims=True)
        return out, LayerCache("softmax", {"y": out})

    raise TypeError(f"unknown layer spec {layer!r}")


def backprop_layer(layer: LayerSpec, cache: LayerCache, grad_out: np.ndarray):
    """Run one layer backward. Returns (grad_input, [grad_params...])."""
    if isinstance(layer, Conv):
        cols = cache.data["cols"]
        weight = cache.data["weight"]
        b = cache.data["x_shape"][0]
        oh, ow = cache.data["oh"], cache.data["ow"]
        dyf = grad_out.transpose(0, 2, 3, 1).reshape(b * oh * ow, layer.out_channels)
        d_weight = (dyf.T @ cols).reshape(weight.shape)
        d_bias = dyf.sum(axis=0)
        dcols = dyf @ weight.reshape(layer.out_channels, -1)
        dx = _col2im(dcols, cache.data["x_shape"], layer.kernel_h, layer.kernel_w,
                     layer.stride, layer.pad, oh, ow)
        return dx, [d_weight, d_bias]

    if isinstance(layer, Pool):
        idx = cache.data["idx"]
        b, c, h, w = cache.data["x_shape"]
        oh, ow = idx.shape[2], idx.shape[3]
        rows = (np.arange(oh) * layer.stride)[None, None, :, None] + idx // layer.size
        cols = (np.arange(ow) * layer.stride)[None, None, None, :] + idx % layer.size
        dx = np.zeros(cache.data["x_shape"], dtype=grad_out.dtype)
        bi = np.arange(b)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(dx, (bi, ci, rows, cols), grad_out)
        return dx, []

    if isinstance(layer, ReLU):
        # derivative at exactly zero is zero
        return grad_out * (cache.data["x"] > 0), []

    if isinstance(layer, Dropout):
        mask = cache.data["mask"]
        if mask is None:
            return grad_out, []
        scale = 1.0 / (1.0 - layer.rate)
        return grad_out * (mask.astype(grad_out.dtype) * np.asarray(scale, dtype=grad_out.dtype)), []

    if isinstance(layer, FullyConnected):
        flat = cache.data["flat"]
        weight = cache.data["weight"]
        d_weight = flat.T @ grad_out
        d_bias = grad_out.sum(axis=0)
        dx = (grad_out @ weight.T).reshape(cache.data["x_shape"])
        return dx, [d_weight, d_bias]

    if isinstance(layer, Softmax):
        y = cache.data["y"]
        inner = np.sum(grad_out * y, axis=-1, keepdims=True)
        return y * (grad_out - inner), []

    raise TypeError(f"unknown layer spec {layer!r}")


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Fused softmax + cross-entropy. Returns (mean loss, grad wrt logits).

    The log-sum-exp is stabilized by the row max, so large-magnitude logits
    stay finite. The gradient is (softmax - onehot) / batch.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeMismatch(f"logits must be (batch, classes), got ndim {logits.ndim}")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatch(f"labels must be ({n},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range for {k} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    loss = float(-np.mean(logp[np.arange(n), labels]))
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    grad = grad / np.asarray(n, dtype=logits.dtype)
    return loss, grad.astype(logits.dtype, copy=False)


@dataclass
class SgdState:
    """Hyperparameters plus one velocity buffer per parameter array."""
    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    velocities: list = None

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float, momentum: float = 0.0,
                   weight_decay: float = 0.0) -> "SgdState":
        vel = [np.zeros_like(p) for p in params]
        return cls(lr=lr, momentum=momentum, weight_decay=weight_decay, velocities=vel)


def sgd_update(params: list[np.ndarray], grads: list[np.ndarray], state: SgdState):
    """One momentum-SGD step, in place:

        v <- momentum * v - lr * (grad + weight_decay * param)
        param <- param + v

    Weight decay applies to every parameter array handed in; callers that
    want bias arrays exempt simply pass them in a separate group.
    """
    if len(params) != len(grads) or len(params) != len(state.velocities):
        raise ShapeMismatch("params, grads, and velocities must align")
    for p, g, v in zip(params, grads, state.velocities):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} does not match param {p.shape}")
        v *= p.dtype.type(state.momentum)
        if state.weight_decay:
            v -= p.dtype.type(state.lr) * (g + p.dtype.type(state.weight_decay) * p)
        else:
            v -= p.dtype.type(state.lr) * g
        p += v
