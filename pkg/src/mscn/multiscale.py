"""Multi-scale feature extraction and the per-pixel classification head.

The input image is turned into a three-level pyramid (scale factors 1, 2, 4,
5-tap binomial blur before each 2x subsample). One shared trunk processes
every level with the same parameters; each pooled output is upsampled back
to the full-resolution grid and the three results are concatenated along
channels. The fully-connected head then classifies every pixel of that
concatenated feature map independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .errors import ShapeError

BLUR_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

N_SCALES = 3
SCALE_FACTORS = (1, 2, 4)


@dataclass
class Pyramid:
    levels: tuple            # (I0, I1, I2), channels-last
    scale_factors: tuple = SCALE_FACTORS


def _blur(x):
    """Separable binomial blur with edge-replicate padding."""
    kernel = BLUR_KERNEL.astype(x.dtype)
    batched = x.ndim == 4
    if not batched:
        x = x[None]
    h, w = x.shape[1], x.shape[2]
    xp = np.pad(x, ((0, 0), (2, 2), (0, 0), (0, 0)), mode="edge")
    y = sum(kernel[i] * xp[:, i:i + h] for i in range(5))
    yp = np.pad(y, ((0, 0), (0, 0), (2, 2), (0, 0)), mode="edge")
    out = sum(kernel[i] * yp[:, :, i:i + w] for i in range(5))
    return out if batched else out[0]


def gaussian_pyramid(image: np.ndarray) -> Pyramid:
    """Blur-and-subsample pyramid: levels at 1x, 1/2, 1/4 (ceil sizing)."""
    h, w = image.shape[-3], image.shape[-2]
    if h < 4 or w < 4:
        raise ShapeError(f"image too small for a 3-level pyramid: {h}x{w}")
    levels = [image]
    for _ in range(N_SCALES - 1):
        blurred = _blur(levels[-1])
        levels.append(blurred[..., ::2, ::2, :])
    return Pyramid(levels=tuple(levels))


@dataclass
class ForwardCaches:
    """Everything the backward pass needs from one multi-scale forward."""
    trunk_caches: list       # per scale
    pooled_shapes: list      # per scale, (h, w) of the trunk output
    trunk_channels: int
    head_caches: list
    target_hw: tuple


def extract_features(spec, params, pyramid: Pyramid, mode, rng,
                     caches: "ForwardCaches | None" = None) -> np.ndarray:
    """Shared-trunk features from all scales, upsampled and concatenated.

    Output channels are [0,C) from scale 1, [C,2C) from scale 2, [2C,3C)
    from scale 4, where C is the trunk's final channel count. Pass a
    ForwardCaches to capture per-scale state for the backward pass.
    """
    target_hw = (pyramid.levels[0].shape[-3], pyramid.levels[0].shape[-2])
    blocks = []
    for level in pyramid.levels:
        feat, trunk_cache = nn.run_network(spec, params, level, mode, rng)
        if caches is not None:
            caches.trunk_caches.append(trunk_cache)
            caches.pooled_shapes.append((feat.shape[-3], feat.shape[-2]))
        blocks.append(T.upsample_nearest(feat, target_hw))
    if caches is not None:
        caches.trunk_channels = blocks[0].shape[-1]
        caches.target_hw = target_hw
    return np.concatenate(blocks, axis=-1)


def classify_pixels(spec, params, features: np.ndarray, mode, rng,
                    caches: "ForwardCaches | None" = None):
    """Apply the fully-connected head at every pixel; returns (logits, softmax)."""
    expected = params[spec.head[0].name]["w"].shape[0]
    if features.shape[-1] != expected:
        raise ShapeError(f"head expects {expected} feature channels, "
                         f"got {features.shape[-1]}")
    logits, head_caches = nn.run_layers(spec.head, params, features, mode, rng)
    if caches is not None:
        caches.head_caches = head_caches
    return logits, nn.softmax_channels(logits)


def forward(spec, params, image, mode, rng):
    """Pyramid -> shared trunk at three scales -> per-pixel head.

    Returns (logits, softmax, caches); the input must already be normalized
    floats with spec.in_channels channels.
    """
    caches = ForwardCaches([], [], 0, [], (0, 0))
    pyramid = gaussian_pyramid(image)
    features = extract_features(spec, params, pyramid, mode, rng, caches)
    logits, probs = classify_pixels(spec, params, features, mode, rng, caches)
    return logits, probs, caches


def backward(spec, params, caches: ForwardCaches, grad_logits) -> dict:
    """Parameter gradients for one forward; trunk grads sum over the scales."""
    grad_features, grads = nn.run_layers_backward(
        spec.head, params, caches.head_caches, grad_logits)
    c = caches.trunk_channels
    for s in range(N_SCALES):
        block = grad_features[..., s * c:(s + 1) * c]
        grad_feat = T.upsample_nearest_backward(block, caches.pooled_shapes[s])
        _, trunk_grads = nn.run_layers_backward(
            spec.shared, params, caches.trunk_caches[s], grad_feat)
        nn.accumulate_grads(grads, trunk_grads)
    return grads
