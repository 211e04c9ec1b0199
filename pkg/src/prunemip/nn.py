"""Feed-forward ReLU networks: forward pass, backprop, plain SGD training.

All hidden layers use ReLU; the final layer is affine (logits). Training is
deterministic for a fixed seed: single-threaded numpy, full shuffle each
epoch from one seeded generator.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .archs import format_arch

MODEL_FORMAT_VERSION = 1


@dataclass
class Mlp:
    """Layers as (W, b) pairs; W is (out, in), b is (out,)."""

    layers: list

    def __post_init__(self):
        for i, (W, b) in enumerate(self.layers):
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: inconsistent W/b shapes")
            if i > 0 and W.shape[1] != self.layers[i - 1][0].shape[0]:
                raise ValueError(f"layer {i}: input dim does not chain")
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameters")

    @property
    def input_dim(self):
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self):
        return self.layers[-1][0].shape[0]

    @property
    def hidden_widths(self):
        return [W.shape[0] for W, _ in self.layers[:-1]]

    @property
    def arch(self):
        return format_arch(self.hidden_widths)

    def copy(self):
        return Mlp([(W.copy(), b.copy()) for W, b in self.layers])


@dataclass
class Dataset:
    inputs: np.ndarray  # (N, d); image data scaled to [0, 1]
    labels: np.ndarray  # (N,) int class indices
    num_classes: int

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("inputs must be (N, d), labels (N,)")
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs/labels length mismatch")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 0.1
    seed: int = 0
    regularizer: object = None  # optional SprConfig

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1 and epochs >= 0 required")


def init_mlp(input_dim, hidden_widths, num_classes, seed):
    """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] init, seeded."""
    rng = np.random.default_rng(seed)
    sizes = [input_dim] + list(hidden_widths) + [num_classes]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append((W, b))
    return Mlp(layers)


def forward(mlp, x):
    """Returns (logits, per-layer pre-activations) for a single input."""
    x = np.asarray(x, dtype=float)
    if x.shape != (mlp.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({mlp.input_dim},)")
    preacts = []
    a = x
    last = len(mlp.layers) - 1
    for i, (W, b) in enumerate(mlp.layers):
        z = W @ a + b
        preacts.append(z)
        a = z if i == last else np.maximum(z, 0.0)
    return a, preacts


def forward_batch(mlp, X):
    """Batched logits plus all pre-activations (each (N, m))."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != mlp.input_dim:
        raise ValueError(f"batch has shape {X.shape}, expected (N, {mlp.input_dim})")
    preacts = []
    A = X
    last = len(mlp.layers) - 1
    for i, (W, b) in enumerate(mlp.layers):
        Z = A @ W.T + b
        preacts.append(Z)
        A = Z if i == last else np.maximum(Z, 0.0)
    return A, preacts


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def cross_entropy_loss(mlp, X, y):
    logits, _ = forward_batch(mlp, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def grad_cross_entropy(mlp, X, y):
    """Mean gradient of softmax cross-entropy over the batch.

    Returns a list of (dW, db) matching mlp.layers.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(X) == 0:
        raise ValueError("empty batch")
    acts = [X]
    preacts = []
    last = len(mlp.layers) - 1
    for i, (W, b) in enumerate(mlp.layers):
        Z = acts[-1] @ W.T + b
        preacts.append(Z)
        acts.append(Z if i == last else np.maximum(Z, 0.0))
    P = _softmax(acts[-1])
    delta = P.copy()
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)
    grads = [None] * len(mlp.layers)
    for i in range(last, -1, -1):
        W, _ = mlp.layers[i]
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W) * (preacts[i - 1] > 0)
    return grads


def accuracy(mlp, data):
    """Fraction of correct argmax predictions; argmax ties go to the smallest index."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    logits, _ = forward_batch(mlp, data.inputs)
    return float((logits.argmax(axis=1) == data.labels).mean())


def sgd_train(mlp, data, cfg, val_data=None):
    """Plain SGD on shuffled mini-batches; optional SPR regularizer.

    Returns (trained Mlp, history), history being one dict per epoch with
    the mean training loss and the accuracy on val_data (train data if None).
    """
    from .spr import spr_grad, spr_value  # late import: spr depends on nothing here

    if len(data) == 0:
        raise ValueError("empty dataset")
    reg = cfg.regularizer
    net = mlp.copy()
    rng = np.random.default_rng(cfg.seed)
    eval_data = val_data if val_data is not None else data
    history = []
    n = len(data)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            X, y = data.inputs[idx], data.labels[idx]
            grads = grad_cross_entropy(net, X, y)
            lr = cfg.learning_rate
            for (W, b), (dW, db) in zip(net.layers, grads):
                W -= lr * dW
                b -= lr * db
            if reg is not None and reg.lam > 0:
                _apply_spr_step(net, reg, lr)
            losses.append(cross_entropy_loss(net, X, y))
        entry = {"epoch": epoch, "loss": float(np.mean(losses)), "accuracy": accuracy(net, eval_data)}
        if reg is not None:
            entry["spr_penalty"] = reg.lam * sum(
                spr_value(np.concatenate([W[j], b[j : j + 1]]), reg.alpha, reg.m)
                for W, b in net.layers[:-1]
                for j in range(W.shape[0])
            )
        history.append(entry)
    return net, history


def _apply_spr_step(net, reg, lr):
    """One penalty step per hidden group after the cross-entropy step.

    In case A the penalty is a scaled group norm, so its exact step is a
    radial shrink that snaps the group to zero once the remaining norm is
    smaller than the step; a raw subgradient step would instead oscillate
    around zero at radius lr*lam and no group could ever be pruned. The
    smooth cases B and C take the ordinary spr_grad step.
    """
    import math

    from .spr import spr_grad

    slope_a = 2.0 * math.sqrt((1.0 - reg.alpha) * reg.alpha)
    for li in range(len(net.layers) - 1):  # output layer is never regularized
        W, b = net.layers[li]
        for j in range(W.shape[0]):
            grp = np.concatenate([W[j], b[j : j + 1]])
            l2 = float(np.linalg.norm(grp))
            if l2 == 0.0:
                continue
            linf = float(np.max(np.abs(grp)))
            r = math.sqrt(reg.alpha / (1.0 - reg.alpha)) * l2
            if linf / reg.m <= r <= 1.0:
                shrink = lr * reg.lam * slope_a
                grp = np.zeros_like(grp) if l2 <= shrink else grp * (1.0 - shrink / l2)
            else:
                grp = grp - lr * reg.lam * spr_grad(grp, reg.alpha, reg.m)
            W[j] = grp[:-1]
            b[j] = grp[-1]


def save_model(mlp, path, training_meta=None):
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "arch": mlp.arch,
        "input_dim": mlp.input_dim,
        "num_classes": mlp.output_dim,
        "layers": [
            {
                "rows": int(W.shape[0]),
                "cols": int(W.shape[1]),
                "weights": W.ravel().tolist(),
                "bias": b.tolist(),
            }
            for W, b in mlp.layers
        ],
        "training_meta": training_meta or {},
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_model(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
    layers = []
    for entry in doc["layers"]:
        W = np.array(entry["weights"], dtype=float).reshape(entry["rows"], entry["cols"])
        b = np.array(entry["bias"], dtype=float)
        layers.append((W, b))
    return Mlp(layers), doc.get("training_meta", {})
