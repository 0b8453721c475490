"""Compact text grammar for network architectures.

A string like ``227x227-11x11x96-5x5x256-3x3x384-3x3x384-3x3x256-4096-4096-N``
names an input size, a conv stack, and a fully-connected tail; ``N`` stands
for the class count supplied at parse time. Two dialects share the syntax:

* canonical: no structural annotations appear, and the parser inserts the
  standard scaffolding itself (ReLU after every conv and hidden FC layer,
  3x3/stride-2 max pooling after conv 1, conv 2, and the last conv, dropout
  0.5 on the first two hidden FC layers, and stride 4 for conv kernels of
  extent 11 or larger);
* explicit: any occurrence of ``r`` (ReLU), ``pK:S`` (max pool), or ``dP``
  (dropout) switches the parser to literal mode, where nothing is implied
  and conv stride defaults to 1.

A conv token may carry ``:stride`` and ``:stride:pad`` suffixes in either
dialect. A bare integer first token declares a flat vector input. Rendering
always emits the explicit dialect so parse(render(spec)) is the identity.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .layers import (Conv, Dropout, FullyConnected, LayerSpec, Pool, ReLU,
                     ShapeMismatch, Softmax, conv_output_extent, param_shapes)


class ArchSyntaxError(ValueError):
    """Raised for malformed architecture strings; names the bad token."""


@dataclass(frozen=True)
class ArchSpec:
    input_h: int
    input_w: int
    layers: tuple
    n_classes: int
    vector_input: bool = False

    @property
    def input_shape(self) -> tuple:
        return (1, self.input_h, self.input_w)


_CONV_RE = re.compile(r"^(\d+)x(\d+)x(\d+)(?::(\d+))?(?::(\d+))?$")
_IMG_RE = re.compile(r"^(\d+)x(\d+)$")
_INT_RE = re.compile(r"^\d+$")
_POOL_RE = re.compile(r"^p(\d+):(\d+)$")
_DROP_RE = re.compile(r"^d(\d+(?:\.\d+)?|\.\d+)$")

DEFAULT_POOL = (3, 2)
WIDE_KERNEL_STRIDE = 4   # conv kernels of extent >= 11 default to stride 4
WIDE_KERNEL_MIN = 11
DEFAULT_DROPOUT = 0.5

PRESETS = {
    # five-conv stack for 227x227 inputs; features tap at the first 4096 FC
    "big227": "227x227-11x11x96-5x5x256-3x3x384-3x3x384-3x3x256-4096-4096-N",
    # two-conv stack for 150x150 inputs; features tap at the first 1000 FC
    "small150": "150x150-36x36x20-8x8x50-1000-1000-N",
    # two-conv stack sized for 64x64 desk-scale corpora; 256-wide feature tap
    "desk64": "64x64-9x9x20:2-r-p3:2-4x4x50-r-p3:2-256-r-d0.25-128-r-N",
}


def _parse_token(token: str, idx: int, n_classes: int):
    """Classify one grammar token; returns ('conv'|'fc'|..., payload)."""
    m = _CONV_RE.match(token)
    if m:
        kh, kw, oc = int(m.group(1)), int(m.group(2)), int(m.group(3))
        stride = int(m.group(4)) if m.group(4) else None
        pad = int(m.group(5)) if m.group(5) else 0
        if min(kh, kw, oc) < 1:
            raise ArchSyntaxError(f"token {idx} ({token!r}): extents must be positive")
        if stride is not None and stride < 1:
            raise ArchSyntaxError(f"token {idx} ({token!r}): stride must be positive")
        return "conv", (kh, kw, oc, stride, pad)
    if token == "N":
        return "fc", n_classes
    if _INT_RE.match(token):
        units = int(token)
        if units < 1:
            raise ArchSyntaxError(f"token {idx} ({token!r}): layer width must be positive")
        return "fc", units
    if token == "r":
        return "relu", None
    m = _POOL_RE.match(token)
    if m:
        size, stride = int(m.group(1)), int(m.group(2))
        if size < 1 or stride < 1:
            raise ArchSyntaxError(f"token {idx} ({token!r}): pool extents must be positive")
        return "pool", (size, stride)
    m = _DROP_RE.match(token)
    if m:
        rate = float(m.group(1))
        if not 0.0 <= rate < 1.0:
            raise ArchSyntaxError(f"token {idx} ({token!r}): dropout rate must lie in [0, 1)")
        return "drop", rate
    raise ArchSyntaxError(f"token {idx} ({token!r}): not a recognized layer token")


def parse_arch(text: str, n_classes: int, explicit: bool | None = None) -> ArchSpec:
    """Parse an architecture string against a concrete class count.

    explicit=None detects the dialect from the string; True forces literal
    mode (useful for annotation-free strings that must not receive the
    canonical scaffolding).
    """
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    tokens = text.strip().split("-")
    if len(tokens) < 2:
        raise ArchSyntaxError("architecture needs an input token and at least one layer")

    head = tokens[0]
    m = _IMG_RE.match(head)
    if m:
        in_h, in_w = int(m.group(1)), int(m.group(2))
        vector = False
    elif _INT_RE.match(head):
        in_h, in_w = 1, int(head)
        vector = True
    else:
        raise ArchSyntaxError(f"token 0 ({head!r}): expected HxW or a vector width")
    if in_h < 1 or in_w < 1:
        raise ArchSyntaxError(f"token 0 ({head!r}): input extents must be positive")

    parsed = [_parse_token(tok, i + 1, n_classes) for i, tok in enumerate(tokens[1:])]
    if explicit is None:
        explicit = any(kind in ("relu", "pool", "drop") for kind, _ in parsed)

    kinds = [kind for kind, _ in parsed]
    if kinds[-1] != "fc":
        raise ArchSyntaxError("architecture must end with a classifier layer (N)")

    layers: list[LayerSpec] = []
    if explicit:
        for kind, payload in parsed:
            if kind == "conv":
                kh, kw, oc, stride, pad = payload
                layers.append(Conv(kh, kw, oc, stride if stride is not None else 1, pad))
            elif kind == "fc":
                layers.append(FullyConnected(payload))
            elif kind == "relu":
                layers.append(ReLU())
            elif kind == "pool":
                layers.append(Pool(*payload))
            elif kind == "drop":
                layers.append(Dropout(payload))
    else:
        conv_count = sum(1 for k in kinds if k == "conv")
        fc_count = sum(1 for k in kinds if k == "fc")
        pooled_convs = {0, 1, conv_count - 1} if conv_count else set()
        conv_i = fc_i = 0
        for kind, payload in parsed:
            if kind == "conv":
                kh, kw, oc, stride, pad = payload
                if stride is None:
                    stride = WIDE_KERNEL_STRIDE if max(kh, kw) >= WIDE_KERNEL_MIN else 1
                layers.append(Conv(kh, kw, oc, stride, pad))
                layers.append(ReLU())
                if conv_i in pooled_convs:
                    layers.append(Pool(*DEFAULT_POOL))
                conv_i += 1
            else:  # fc; hidden layers get ReLU, the first two also dropout
                layers.append(FullyConnected(payload))
                if fc_i < fc_count - 1:
                    layers.append(ReLU())
                    if fc_i < 2:
                        layers.append(Dropout(DEFAULT_DROPOUT))
                fc_i += 1
    layers.append(Softmax())

    spec = ArchSpec(in_h, in_w, tuple(layers), n_classes, vector_input=vector)
    validate_arch(spec)
    return spec


def validate_arch(spec: ArchSpec):
    """Check structural postconditions and walk the shape chain."""
    layers = spec.layers
    if len(layers) < 2 or not isinstance(layers[-1], Softmax):
        raise ArchSyntaxError("network must end with a softmax layer")
    if not isinstance(layers[-2], FullyConnected) or layers[-2].units != spec.n_classes:
        raise ArchSyntaxError(
            f"classifier layer must be fully-connected with {spec.n_classes} units")
    infer_shapes(spec)


def infer_shapes(spec: ArchSpec) -> list[tuple]:
    """Per-layer (C, H, W) output shapes; FC output is (units, 1, 1)."""
    shape = spec.input_shape
    out = []
    for i, layer in enumerate(spec.layers):
        c, h, w = shape
        if isinstance(layer, Conv):
            if h == 1 and w == 1 and c > 1:
                raise ShapeMismatch(f"layer {i}: conv after fully-connected is not supported")
            try:
                oh = conv_output_extent(h, layer.kernel_h, layer.stride, layer.pad)
                ow = conv_output_extent(w, layer.kernel_w, layer.stride, layer.pad)
            except ShapeMismatch as exc:
                raise ShapeMismatch(f"layer {i}: {exc}") from None
            shape = (layer.out_channels, oh, ow)
        elif isinstance(layer, Pool):
            try:
                oh = conv_output_extent(h, layer.size, layer.stride, 0)
                ow = conv_output_extent(w, layer.size, layer.stride, 0)
            except ShapeMismatch as exc:
                raise ShapeMismatch(f"layer {i}: {exc}") from None
            shape = (c, oh, ow)
        elif isinstance(layer, FullyConnected):
            shape = (layer.units, 1, 1)
        # relu, dropout, softmax preserve shape
        out.append(shape)
    return out


def layer_param_shapes(spec: ArchSpec) -> list[list[tuple]]:
    """Parameter shapes for every layer (empty list for parameterless ones)."""
    shapes = infer_shapes(spec)
    ins = [spec.input_shape] + shapes[:-1]
    return [param_shapes(layer, in_shape) for layer, in_shape in zip(spec.layers, ins)]


def fc_layer_indices(spec: ArchSpec) -> list[int]:
    return [i for i, layer in enumerate(spec.layers) if isinstance(layer, FullyConnected)]


def feature_dim(spec: ArchSpec, tap: int | None = None) -> int:
    """Output width of the feature tap (default: first fully-connected layer)."""
    fcs = fc_layer_indices(spec)
    tap = fcs[0] if tap is None else tap
    if tap not in fcs:
        raise ValueError(f"layer {tap} is not a fully-connected layer")
    return spec.layers[tap].units


def render_arch(spec: ArchSpec) -> str:
    """Emit the explicit-dialect string for a spec; inverse of parse_arch
    under explicit=True."""
    tokens = [f"{spec.input_w}" if spec.vector_input else f"{spec.input_h}x{spec.input_w}"]
    for layer in spec.layers[:-1]:
        if isinstance(layer, Conv):
            tok = f"{layer.kernel_h}x{layer.kernel_w}x{layer.out_channels}"
            if layer.pad:
                tok += f":{layer.stride}:{layer.pad}"
            elif layer.stride != 1:
                tok += f":{layer.stride}"
            tokens.append(tok)
        elif isinstance(layer, Pool):
            tokens.append(f"p{layer.size}:{layer.stride}")
        elif isinstance(layer, ReLU):
            tokens.append("r")
        elif isinstance(layer, Dropout):
            tokens.append(f"d{layer.rate:g}")
        elif isinstance(layer, FullyConnected):
            tokens.append(str(layer.units))
    return "-".join(tokens)


def resolve_arch(name_or_text: str, n_classes: int) -> ArchSpec:
    """Accept either a preset name or a literal architecture string."""
    text = PRESETS.get(name_or_text, name_or_text)
    return parse_arch(text, n_classes)
