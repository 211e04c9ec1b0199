"""Structured perspective penalty applied per neuron during training.

The penalty acts on one neuron's incoming weight row concatenated with its
bias entry and is minimized by (sub)gradient descent alongside the usual
cross-entropy loss; driving it to zero drives the whole group to zero, which
is what makes the neuron removable afterwards.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SprConfig:
    lam: float  # multiplier of the summed penalty
    alpha: float  # strictly inside (0, 1)
    m: float = 1.0  # scale constant, > 0

    def __post_init__(self):
        _check_params(self.alpha, self.m)
        if self.lam < 0:
            raise ValueError("lam must be >= 0")


def _check_params(alpha, m):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if m <= 0:
        raise ValueError(f"m must be > 0, got {m}")


def spr_value(w, alpha, m):
    """Piecewise penalty of one weight group.

    With r = sqrt(alpha/(1-alpha)) * ||w||2 and q = ||w||inf / m:
      case A (q <= r <= 1):  2 sqrt((1-alpha) alpha) ||w||2
      case B (r <= q <= 1):  alpha m ||w||2^2 / ||w||inf + (1-alpha) ||w||inf / m
      case C (otherwise):    alpha ||w||2^2 + (1-alpha)
    w = 0 routes to case A with value 0.
    """
    _check_params(alpha, m)
    w = np.asarray(w, dtype=float).ravel()
    l2 = float(np.linalg.norm(w))
    if l2 == 0.0:
        return 0.0
    linf = float(np.max(np.abs(w)))
    r = math.sqrt(alpha / (1.0 - alpha)) * l2
    q = linf / m
    if q <= r <= 1.0:
        return 2.0 * math.sqrt((1.0 - alpha) * alpha) * l2
    if r <= q <= 1.0:
        return alpha * m * l2 * l2 / linf + (1.0 - alpha) * q
    return alpha * l2 * l2 + (1.0 - alpha)


def spr_grad(w, alpha, m):
    """(Sub)gradient of spr_value w.r.t. w, same shape as w.

    The ||w||inf factor uses the subgradient concentrated on the first
    coordinate attaining the max absolute value, carrying its sign.
    Returns 0 at w = 0.
    """
    _check_params(alpha, m)
    w = np.asarray(w, dtype=float)
    flat = w.ravel()
    l2 = float(np.linalg.norm(flat))
    if l2 == 0.0:
        return np.zeros_like(w)
    linf = float(np.max(np.abs(flat)))
    imax = int(np.argmax(np.abs(flat)))
    e = np.zeros_like(flat)
    e[imax] = math.copysign(1.0, flat[imax])
    r = math.sqrt(alpha / (1.0 - alpha)) * l2
    q = linf / m
    if q <= r <= 1.0:
        g = 2.0 * math.sqrt((1.0 - alpha) * alpha) / l2 * flat
    elif r <= q <= 1.0:
        g = (
            2.0 * alpha * m / linf * flat
            - alpha * m * l2 * l2 / (linf * linf) * e
            + (1.0 - alpha) / m * e
        )
    else:
        g = 2.0 * alpha * flat
    return g.reshape(w.shape)


def regularized_loss(mlp, X, y, cfg):
    """Batch cross-entropy plus lam times the summed per-neuron penalty.

    The group for hidden neuron j of layer l is row j of W_l concatenated
    with b_l[j]; output-layer neurons are excluded.
    """
    from .nn import cross_entropy_loss

    total = cross_entropy_loss(mlp, X, y)
    penalty = 0.0
    for W, b in mlp.layers[:-1]:
        for j in range(W.shape[0]):
            penalty += spr_value(np.concatenate([W[j], b[j : j + 1]]), cfg.alpha, cfg.m)
    return total + cfg.lam * penalty
