"""Network assembly, training, and the DSNET1 model container.

A Network is an ArchSpec plus one parameter list per layer. Training runs
plain minibatch SGD with momentum and stops when validation accuracy
plateaus; the parameters returned are a snapshot from the best validation
epoch, not the last one.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import binio
from .arch import (ArchSpec, fc_layer_indices, infer_shapes, layer_param_shapes,
                   parse_arch, render_arch)
from .layers import (Dropout, FullyConnected, ReLU, ShapeMismatch, Softmax,
                     SgdState, apply_layer, backprop_layer, sgd_update, softmax_xent)
from .seeding import derive_child_seed, derive_rng

NET_MAGIC = b"DSNET1"


@dataclass
class Network:
    spec: ArchSpec
    params: list            # one list of ndarrays per layer (empty if none)
    init_record: dict = field(default_factory=dict)

    def copy(self) -> "Network":
        return Network(self.spec, [[p.copy() for p in group] for group in self.params],
                       dict(self.init_record))


@dataclass
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 8
    seed: int = 0


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: int = -1


def init_network(spec: ArchSpec, seed: int = 0, scale: float = 0.01,
                 dtype=np.float32) -> Network:
    """Gaussian init: weights ~ N(0, scale^2), biases zero."""
    rng = derive_rng("init", int(seed))
    params = []
    for shapes in layer_param_shapes(spec):
        group = []
        for j, shape in enumerate(shapes):
            if j == 0:
                group.append(rng.normal(0.0, scale, size=shape).astype(dtype))
            else:
                group.append(np.zeros(shape, dtype=dtype))
        params.append(group)
    record = {"mode": "random", "seed": int(seed), "scale": float(scale)}
    return Network(spec, params, record)


def transfer_network(spec: ArchSpec, donor: Network, seed: int = 0, scale: float = 0.01,
                     prefix_layers: int | None = None, donor_id: str = "",
                     dtype=np.float32) -> Network:
    """Copy donor parameters bitwise for every layer before the classifier
    head (or an explicit prefix length), then draw the rest fresh.

    Donor layers inside the prefix must match in kind and parameter shape.
    """
    net = init_network(spec, seed=seed, scale=scale, dtype=dtype)
    head = fc_layer_indices(spec)[-1]
    cut = head if prefix_layers is None else prefix_layers
    if cut > min(len(spec.layers), len(donor.spec.layers)):
        raise ShapeMismatch(f"prefix of {cut} layers exceeds the shorter network")
    copied = []
    for i in range(cut):
        mine, theirs = spec.layers[i], donor.spec.layers[i]
        if type(mine) is not type(theirs):
            raise ShapeMismatch(
                f"layer {i}: donor has {type(theirs).__name__}, target needs {type(mine).__name__}")
        if [p.shape for p in net.params[i]] != [p.shape for p in donor.params[i]]:
            raise ShapeMismatch(f"layer {i}: donor parameter shapes do not match")
        net.params[i] = [p.copy() for p in donor.params[i]]
        if net.params[i]:
            copied.append(i)
    net.init_record = {"mode": "transfer", "seed": int(seed), "scale": float(scale),
                       "donor": donor_id, "layers_copied": copied}
    return net


def _as_batch_input(spec: ArchSpec, x: np.ndarray) -> np.ndarray:
    """Coerce (N, H, W), (N, D), or (N, 1, H, W) input to NCHW."""
    x = np.asarray(x)
    if x.ndim == 2 and spec.vector_input:
        x = x.reshape(x.shape[0], 1, 1, x.shape[1])
    elif x.ndim == 3:
        x = x[:, None, :, :]
    if x.ndim != 4:
        raise ShapeMismatch(f"cannot interpret input of shape {x.shape}")
    if x.shape[1:] != (1, spec.input_h, spec.input_w):
        raise ShapeMismatch(
            f"input shape {x.shape[1:]} does not match network input "
            f"(1, {spec.input_h}, {spec.input_w})")
    return x


def forward_pass(net: Network, x: np.ndarray, mode: str = "infer", seed: int = 0,
                 stop_after: int | None = None, keep_caches: bool = False):
    """Run the stack; returns (activation, caches or None).

    stop_after truncates the walk at that layer index (inclusive). Dropout
    layers draw masks from seeds derived per layer index so two layers never
    share a mask stream.
    """
    caches = [] if keep_caches else None
    act = x
    for i, layer in enumerate(net.spec.layers):
        layer_seed = derive_child_seed(seed, i) if isinstance(layer, Dropout) else 0
        act, cache = apply_layer(layer, net.params[i], act, mode=mode, rng_seed=layer_seed)
        if keep_caches:
            caches.append(cache)
        if stop_after is not None and i >= stop_after:
            break
    return act, caches


def predict_proba(net: Network, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Class probabilities, batched, inference mode."""
    x = _as_batch_input(net.spec, x)
    outs = []
    for lo in range(0, x.shape[0], batch_size):
        act, _ = forward_pass(net, x[lo:lo + batch_size], mode="infer")
        outs.append(act)
    return np.concatenate(outs, axis=0)


def classify(net: Network, image: np.ndarray):
    """Predict one image; returns (label, probability vector). Argmax ties
    resolve to the lowest class index."""
    image = np.asarray(image)
    if image.ndim == 1 and net.spec.vector_input:
        image = image.reshape(1, -1)
    elif image.ndim == 2 and not net.spec.vector_input:
        image = image[None, :, :]
    elif image.ndim == 3:
        image = image[None, ...]
    probs = predict_proba(net, image)[0]
    return int(np.argmax(probs)), probs


def extract_features(net: Network, images: np.ndarray, tap: int | None = None,
                     batch_size: int = 256) -> np.ndarray:
    """Activations at a fully-connected tap (after its ReLU when one follows
    immediately), inference mode, so dropout never perturbs the output."""
    fcs = fc_layer_indices(net.spec)
    tap = fcs[0] if tap is None else tap
    if tap not in fcs:
        raise ValueError(f"layer {tap} is not a fully-connected layer")
    stop = tap
    if tap + 1 < len(net.spec.layers) and isinstance(net.spec.layers[tap + 1], ReLU):
        stop = tap + 1
    x = _as_batch_input(net.spec, images)
    outs = []
    for lo in range(0, x.shape[0], batch_size):
        act, _ = forward_pass(net, x[lo:lo + batch_size], mode="infer", stop_after=stop)
        outs.append(act.reshape(act.shape[0], -1))
    return np.concatenate(outs, axis=0)


def _accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels)) if len(labels) else 0.0


def evaluate_accuracy(net: Network, x: np.ndarray, y: np.ndarray,
                      batch_size: int = 256) -> float:
    probs = predict_proba(net, x, batch_size=batch_size)
    return _accuracy(probs, np.asarray(y))


def train(net: Network, train_set, val_set, config: TrainConfig):
    """Minibatch SGD with momentum and a validation plateau stop.

    train_set and val_set are (images, labels) pairs. Returns (best network,
    TrainHistory); the input network is left untouched. Stops once val
    accuracy has not improved for config.patience consecutive epochs, or at
    max_epochs. max_epochs = 0 returns the network unchanged with an empty
    history.
    """
    x_train, y_train = train_set
    x_val, y_val = val_set
    y_train = np.asarray(y_train)
    y_val = np.asarray(y_val)
    history = TrainHistory()
    work = net.copy()
    if config.max_epochs == 0:
        return work, history
    if len(y_train) == 0:
        raise ValueError("training set is empty")
    if y_train.min() < 0 or y_train.max() >= net.spec.n_classes:
        raise ValueError(f"label out of range for {net.spec.n_classes} classes")
    x_train = _as_batch_input(net.spec, x_train)

    head = fc_layer_indices(net.spec)[-1]     # train on logits; softmax is fused into the loss
    flat_params, flat_grads_idx = [], []
    for i, group in enumerate(work.params):
        for j, p in enumerate(group):
            flat_params.append(p)
            flat_grads_idx.append((i, j))
    state = SgdState.for_params(flat_params, config.lr, config.momentum, config.weight_decay)

    best_val, best_params, best_epoch = -1.0, None, -1
    stale = 0
    n = x_train.shape[0]
    for epoch in range(config.max_epochs):
        tic = time.perf_counter()
        perm = derive_rng("shuffle", config.seed, epoch).permutation(n)
        loss_sum, seen, correct = 0.0, 0, 0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            idx = perm[lo:lo + config.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            batch_seed = derive_child_seed(config.seed, epoch, b)
            logits, caches = forward_pass(work, xb, mode="train", seed=batch_seed,
                                          stop_after=head, keep_caches=True)
            loss, grad = softmax_xent(logits, yb)
            loss_sum += loss * len(yb)
            seen += len(yb)
            correct += int(np.sum(np.argmax(logits, axis=1) == yb))
            grads = [[] for _ in work.params]
            for i in range(head, -1, -1):
                grad, g_params = backprop_layer(work.spec.layers[i], caches[i], grad)
                grads[i] = g_params
            flat_grads = [grads[i][j] for i, j in flat_grads_idx]
            sgd_update(flat_params, flat_grads, state)
        val_acc = evaluate_accuracy(work, x_val, y_val) if len(y_val) else 0.0
        record = EpochRecord(epoch, loss_sum / seen, correct / seen, val_acc,
                             time.perf_counter() - tic)
        history.records.append(record)
        if val_acc > best_val:
            best_val, best_epoch, stale = val_acc, epoch, 0
            best_params = [[p.copy() for p in group] for group in work.params]
        else:
            stale += 1
            if stale >= config.patience:
                break
    history.best_epoch = best_epoch
    history.stopped_epoch = history.records[-1].epoch
    if best_params is not None:
        work.params = best_params
    return work, history


def history_rows(history: TrainHistory) -> list[list]:
    """CSV-ready rows (wall-clock excluded so reruns compare byte-identical)."""
    rows = [["epoch", "loss", "train_acc", "val_acc"]]
    for r in history.records:
        rows.append([r.epoch, f"{r.loss:.6f}", f"{r.train_acc:.6f}", f"{r.val_acc:.6f}"])
    return rows


def save_network(net: Network, path):
    """DSNET1: magic, explicit arch string, class count, then per-layer
    parameter blobs (float32) with shape headers, walking the spec order."""
    with open(path, "wb") as fh:
        fh.write(NET_MAGIC)
        binio.write_str(fh, render_arch(net.spec))
        binio.write_u32(fh, net.spec.n_classes)
        binio.write_u8(fh, 1 if net.spec.vector_input else 0)
        for group in net.params:
            binio.write_u32(fh, len(group))
            for p in group:
                binio.write_array(fh, p, "<f4")


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        binio.expect_magic(fh, NET_MAGIC)
        text = binio.read_str(fh)
        n_classes = binio.read_u32(fh)
        binio.read_u8(fh)                     # vector flag is implied by the string
        spec = parse_arch(text, n_classes, explicit=True)
        expected = layer_param_shapes(spec)
        params = []
        for shapes in expected:
            count = binio.read_u32(fh)
            if count != len(shapes):
                raise binio.FormatError(
                    f"model file declares {count} arrays where spec needs {len(shapes)}")
            group = []
            for shape in shapes:
                arr = binio.read_array(fh, "<f4")
                if arr.shape != shape:
                    raise binio.FormatError(
                        f"parameter shape {arr.shape} does not match spec {shape}")
                group.append(arr)
            params.append(group)
    return Network(spec, params, {"mode": "loaded", "path": str(path)})
