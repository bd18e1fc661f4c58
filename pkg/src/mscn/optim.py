"""Training objective and parameter updates.

Loss is class-weighted cross-entropy over labeled pixels, normalized by the
labeled-pixel count so the learning rate stays meaningful across crop sizes,
plus an L2 weight penalty over conv/fcl weight matrices only. The returned
gradient is taken w.r.t. pre-softmax logits with the softmax folded in.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

IGNORE = 255

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def weight_penalty(weight_arrays) -> float:
    """Sum of squared entries over the given weight matrices."""
    return float(sum(float(np.sum(np.square(w))) for w in weight_arrays))


def weighted_cross_entropy(probs, labels, class_weights, weight_decay=0.0,
                           weight_arrays=(), ignore=IGNORE):
    """Weighted cross-entropy over labeled pixels plus the L2 weight penalty.

    probs: softmax output [..., K]; labels: integer map shaped like
    probs[..., 0] with `ignore` marking unlabeled pixels; class_weights:
    length-K vector. Returns (loss, grad w.r.t. logits); ignored pixels
    contribute nothing to either.
    """
    k = probs.shape[-1]
    flat_p = probs.reshape(-1, k)
    flat_y = labels.reshape(-1)
    valid = np.nonzero(flat_y != ignore)[0]
    penalty = weight_decay * weight_penalty(weight_arrays) if weight_decay else 0.0

    grad = np.zeros_like(flat_p)
    if valid.size == 0:
        warnings.warn("loss evaluated with zero labeled pixels; data term skipped")
        return penalty, grad.reshape(probs.shape)

    targets = flat_y[valid].astype(np.intp)
    w = np.asarray(class_weights, dtype=probs.dtype)[targets]
    tiny = np.finfo(probs.dtype).tiny
    p_true = flat_p[valid, targets]
    data_loss = -float(np.sum(w * np.log(np.maximum(p_true, tiny)))) / valid.size

    g = flat_p[valid] * w[:, None]
    g[np.arange(valid.size), targets] -= w
    grad[valid] = g / valid.size
    return data_loss + penalty, grad.reshape(probs.shape)


def median_frequency_weights(histograms) -> np.ndarray:
    """Class weights = median class frequency / class frequency.

    histograms: [n_images, K] labeled-pixel counts per image. A class's
    frequency is its total pixel count divided by the total labeled pixels
    of the images in which it appears; classes never present get weight 0.
    """
    hist = np.asarray(histograms, dtype=np.float64)
    if hist.ndim != 2:
        raise ValueError("expected per-image histograms [n_images, K]")
    totals = hist.sum(axis=0)
    labeled_per_image = hist.sum(axis=1)
    freq = np.zeros(hist.shape[1])
    for c in range(hist.shape[1]):
        present = hist[:, c] > 0
        denom = labeled_per_image[present].sum()
        if denom > 0:
            freq[c] = totals[c] / denom
    weights = np.zeros_like(freq)
    present = freq > 0
    if present.any():
        median = np.median(freq[present])
        weights[present] = median / freq[present]
    return weights


@dataclass
class AdamState:
    """First/second moment accumulators per trainable array, plus step count."""
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


TRAINABLE_KEYS = ("w", "b", "bn_scale", "bn_shift")


def init_adam(params) -> AdamState:
    state = AdamState()
    for name, entry in params.items():
        state.m[name] = {k: np.zeros_like(a) for k, a in entry.items()
                         if k in TRAINABLE_KEYS}
        state.v[name] = {k: np.zeros_like(a) for k, a in entry.items()
                         if k in TRAINABLE_KEYS}
    return state


def adam_step(params, grads, state: AdamState, lr, weight_decay=0.0) -> None:
    """Bias-corrected Adam update, in place.

    The weight-decay gradient 2*lambda*W is added to "w" entries only;
    biases and batch-norm parameters decay-free.
    """
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.t
    bc2 = 1.0 - ADAM_BETA2 ** state.t
    for name, entry in grads.items():
        for key, g in entry.items():
            if key not in TRAINABLE_KEYS:
                continue
            p = params[name][key]
            if key == "w" and weight_decay:
                g = g + (2.0 * weight_decay) * p
            m = state.m[name][key]
            v = state.v[name][key]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * np.square(g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
