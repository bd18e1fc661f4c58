"""Layer specs, layer math, and network execution.

A network is two ordered layer lists: a shared convolution/pooling trunk and
a per-pixel fully-connected head. ``run_network`` executes the trunk;
the multiscale module applies it at three pyramid scales and runs the head
on the concatenated features.

Per-layer execution order is fixed: conv/pool/fcl, then shortcut add, then
batch normalization, then activation, then dropout. Parameters live in a
plain dict keyed by layer name; batch-norm running statistics are stored
alongside the learned arrays and are updated in place during train-mode
forward passes (training is single-writer).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ShapeError, SpecError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9

INPUT_KEY = "__input__"


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a network: a conv, maxpool, or fcl plus its trimmings."""
    name: str
    kind: str                      # "conv" | "maxpool" | "fcl"
    filter_size: Optional[int] = None   # conv only (odd)
    width: Optional[int] = None         # conv output channels / fcl width
    pool_size: Optional[int] = None     # maxpool only
    activation: str = "none"            # "relu" | "none"
    batch_norm: bool = False
    dropout_keep: float = 1.0
    shortcut: Optional[str] = None      # name of an earlier layer


@dataclass(frozen=True)
class ArchitectureSpec:
    """A whole network: shared trunk + fully-connected head + hyperparameters."""
    shared: tuple
    head: tuple
    in_channels: int
    n_classes: int
    batch_size: int = 10
    weight_decay: float = 0.0

    @property
    def fcl0_keep(self) -> float:
        """Dropout keep probability at the first head layer."""
        return self.head[0].dropout_keep if self.head else 1.0


def conv_layer(name, filter_size, width, shortcut=None):
    return LayerSpec(name=name, kind="conv", filter_size=filter_size,
                     width=width, activation="relu", batch_norm=True,
                     shortcut=shortcut)


def maxpool_layer(name, pool_size=2):
    return LayerSpec(name=name, kind="maxpool", pool_size=pool_size)


def fcl_layer(name, width, activation="relu", batch_norm=False, dropout_keep=1.0):
    return LayerSpec(name=name, kind="fcl", width=width, activation=activation,
                     batch_norm=batch_norm, dropout_keep=dropout_keep)


def validate_spec(spec: ArchitectureSpec) -> None:
    """Reject malformed specs before any execution."""
    seen = set()
    for layer in tuple(spec.shared) + tuple(spec.head):
        if layer.name in seen:
            raise SpecError(f"duplicate layer name {layer.name!r}")
        seen.add(layer.name)
        if layer.kind not in ("conv", "maxpool", "fcl"):
            raise SpecError(f"{layer.name}: unknown kind {layer.kind!r}")
        if layer.activation not in ("relu", "none"):
            raise SpecError(f"{layer.name}: unknown activation {layer.activation!r}")
        if not 0.0 < layer.dropout_keep <= 1.0:
            raise SpecError(f"{layer.name}: dropout keep must be in (0,1]")
        if layer.kind == "conv":
            if layer.filter_size is None or layer.width is None or layer.pool_size is not None:
                raise SpecError(f"{layer.name}: conv needs filter_size and width only")
            if layer.filter_size % 2 != 1:
                raise SpecError(f"{layer.name}: filter size must be odd")
        elif layer.kind == "maxpool":
            if layer.pool_size is None or layer.filter_size is not None or layer.width is not None:
                raise SpecError(f"{layer.name}: maxpool needs pool_size only")
        else:
            if layer.width is None or layer.filter_size is not None or layer.pool_size is not None:
                raise SpecError(f"{layer.name}: fcl needs width only")
    for layer in spec.shared:
        if layer.kind == "fcl":
            raise SpecError(f"{layer.name}: shared trunk may not contain fcl layers")
    for layer in spec.head:
        if layer.kind != "fcl":
            raise SpecError(f"{layer.name}: head may only contain fcl layers")
        if layer.shortcut is not None:
            raise SpecError(f"{layer.name}: shortcuts are not supported in the head")
    earlier = set()
    for layer in spec.shared:
        if layer.shortcut is not None and layer.shortcut not in earlier:
            raise SpecError(f"{layer.name}: shortcut source {layer.shortcut!r} "
                            "does not name an earlier layer")
        earlier.add(layer.name)
    if spec.head and spec.head[-1].width != spec.n_classes:
        raise SpecError(f"last head width {spec.head[-1].width} != "
                        f"class count {spec.n_classes}")


def shared_out_channels(spec: ArchitectureSpec) -> int:
    """Channel count leaving the shared trunk."""
    c = spec.in_channels
    for layer in spec.shared:
        if layer.kind == "conv":
            c = layer.width
    return c


def head_in_width(spec: ArchitectureSpec) -> int:
    """Head input width: three pyramid scales concatenated."""
    return 3 * shared_out_channels(spec)


def param_shapes(spec: ArchitectureSpec) -> dict:
    """Array shapes for every learned/running parameter, derived from the spec.

    Returned as {layer name: {param name: shape}} in spec order; per layer
    the order is w, b, then bn_scale/bn_shift/bn_mean/bn_var when flagged.
    """
    shapes: dict = {}
    c = spec.in_channels
    for layer in spec.shared:
        entry = {}
        if layer.kind == "conv":
            k = layer.filter_size
            entry["w"] = (k, k, c, layer.width)
            entry["b"] = (layer.width,)
            c = layer.width
        if layer.batch_norm:
            for key in ("bn_scale", "bn_shift", "bn_mean", "bn_var"):
                entry[key] = (c,)
        shapes[layer.name] = entry
    width = head_in_width(spec)
    for layer in spec.head:
        entry = {"w": (width, layer.width), "b": (layer.width,)}
        if layer.batch_norm:
            for key in ("bn_scale", "bn_shift", "bn_mean", "bn_var"):
                entry[key] = (layer.width,)
        width = layer.width
        shapes[layer.name] = entry
    return shapes


def count_parameters(spec: ArchitectureSpec) -> int:
    """Number of weight entries: conv filter and fcl matrix elements only.

    Biases and batch-norm parameters are excluded; shared weights count once
    even though the trunk runs at three scales.
    """
    total = 0
    for name, entry in param_shapes(spec).items():
        if "w" in entry:
            total += int(np.prod(entry["w"]))
    return total


def init_parameters(spec: ArchitectureSpec, rng: np.random.Generator,
                    dtype=np.float32) -> dict:
    """He-normal weights, zero biases, identity batch-norm state."""
    params: dict = {}
    for name, entry in param_shapes(spec).items():
        arrays = {}
        if "w" in entry:
            shape = entry["w"]
            fan_in = int(np.prod(shape[:-1]))
            arrays["w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape).astype(dtype)
            arrays["b"] = np.zeros(entry["b"], dtype=dtype)
        if "bn_scale" in entry:
            arrays["bn_scale"] = np.ones(entry["bn_scale"], dtype=dtype)
            arrays["bn_shift"] = np.zeros(entry["bn_shift"], dtype=dtype)
            arrays["bn_mean"] = np.zeros(entry["bn_mean"], dtype=dtype)
            arrays["bn_var"] = np.ones(entry["bn_var"], dtype=dtype)
        params[name] = arrays
    return params


# ---------------------------------------------------------------------------
# layer math


def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, pre_activation):
    # subgradient 0 at exactly 0
    return grad_out * (pre_activation > 0)


def softmax_channels(logits: np.ndarray) -> np.ndarray:
    """Softmax over the trailing (channel) axis, max-subtracted for stability."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def batchnorm(x, scale, shift, mode, running_mean, running_var):
    """Per-channel normalization over all leading axes.

    Train mode uses batch statistics and returns updated running statistics;
    eval mode normalizes with the running statistics as-is. Returns
    (out, cache, new_running_mean, new_running_var); cache is None in eval.
    """
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean) * inv_std
        out = xhat * scale + shift
        new_mean = (BN_MOMENTUM * running_mean + (1 - BN_MOMENTUM) * mean).astype(x.dtype)
        new_var = (BN_MOMENTUM * running_var + (1 - BN_MOMENTUM) * var).astype(x.dtype)
        cache = (xhat, inv_std, scale)
        return out, cache, new_mean, new_var
    if mode != "eval":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    inv_std = 1.0 / np.sqrt(running_var + BN_EPS)
    out = (x - running_mean) * inv_std * scale + shift
    return out, None, running_mean, running_var


def batchnorm_backward(grad_out, cache):
    """Gradients of train-mode batchnorm w.r.t. input, scale, shift."""
    xhat, inv_std, scale = cache
    axes = tuple(range(grad_out.ndim - 1))
    m = np.prod([grad_out.shape[a] for a in axes])
    grad_shift = grad_out.sum(axis=axes)
    grad_scale = (grad_out * xhat).sum(axis=axes)
    gx_hat = grad_out * scale
    grad_x = (inv_std / m) * (m * gx_hat
                              - gx_hat.sum(axis=axes)
                              - xhat * (gx_hat * xhat).sum(axis=axes))
    return grad_x, grad_scale, grad_shift


def dropout(x, keep_prob, mode, rng):
    """Inverted dropout: survivors are scaled by 1/keep so eval is identity.

    Returns (out, mask); mask is None when dropout was a no-op.
    """
    if mode != "train" or keep_prob >= 1.0:
        return x, None
    mask = (rng.random(x.shape) < keep_prob).astype(x.dtype)
    return x * (mask / keep_prob), mask


def residual_add(current, source):
    """Shortcut sum; a narrower source is zero-padded on trailing channels."""
    if current.shape[:-1] != source.shape[:-1]:
        raise ShapeError(f"shortcut spatial mismatch: {current.shape} vs {source.shape}")
    c2, c1 = current.shape[-1], source.shape[-1]
    if c1 > c2:
        raise ShapeError(f"shortcut source has {c1} channels, consumer only {c2}")
    if c1 == c2:
        return current + source
    out = current.copy()
    out[..., :c1] += source
    return out


# ---------------------------------------------------------------------------
# network execution


def _fcl_forward(x, w, b):
    width_in = w.shape[0]
    if x.shape[-1] != width_in:
        raise ShapeError(f"fcl expects width {width_in}, got {x.shape[-1]}")
    flat = x.reshape(-1, width_in)
    out = T.matmul(flat, w) + b
    return out.reshape(x.shape[:-1] + (w.shape[1],))


def run_layers(layers, params, x, mode, rng):
    """Execute an ordered layer list; returns (output, caches).

    caches is a list of per-layer dicts holding exactly what the matching
    backward pass needs. Train mode updates batch-norm running statistics
    in place.
    """
    outs = {}
    caches = []
    for layer in layers:
        p = params[layer.name]
        cache = {}
        if layer.kind == "conv":
            cache["x"] = x
            z = T.conv2d(x, p["w"], p["b"])
        elif layer.kind == "maxpool":
            cache["in_shape"] = x.shape
            z, argmax = T.maxpool2d(x, layer.pool_size)
            cache["argmax"] = argmax
        else:
            cache["x"] = x
            z = _fcl_forward(x, p["w"], p["b"])
        if layer.shortcut is not None:
            source = outs[layer.shortcut]
            cache["shortcut_channels"] = source.shape[-1]
            z = residual_add(z, source)
        if layer.batch_norm:
            z, bn_cache, new_mean, new_var = batchnorm(
                z, p["bn_scale"], p["bn_shift"], mode, p["bn_mean"], p["bn_var"])
            cache["bn"] = bn_cache
            if mode == "train":
                p["bn_mean"][...] = new_mean
                p["bn_var"][...] = new_var
        if layer.activation == "relu":
            cache["pre_relu"] = z
            z = relu(z)
        if layer.dropout_keep < 1.0:
            z, mask = dropout(z, layer.dropout_keep, mode, rng)
            cache["dropout_mask"] = mask
            cache["dropout_keep"] = layer.dropout_keep
        outs[layer.name] = z
        x = z
    return x, caches


def run_layers_backward(layers, params, caches, grad_out):
    """Reverse pass over run_layers; returns (grad_input, param grads).

    Param grads come back as {layer name: {param name: array}} covering w, b,
    and bn scale/shift for every parameterized layer.
    """
    grads = {layer.name: {} for layer in layers}
    grad_buf = {layers[-1].name: grad_out}
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        p = params[layer.name]
        cache = caches[i]
        g = grad_buf.pop(layer.name)
        if layer.dropout_keep < 1.0 and cache.get("dropout_mask") is not None:
            g = g * (cache["dropout_mask"] / cache["dropout_keep"])
        if layer.activation == "relu":
            g = relu_backward(g, cache["pre_relu"])
        if layer.batch_norm:
            g, grad_scale, grad_shift = batchnorm_backward(g, cache["bn"])
            grads[layer.name]["bn_scale"] = grad_scale
            grads[layer.name]["bn_shift"] = grad_shift
        if layer.shortcut is not None:
            c1 = cache["shortcut_channels"]
            g_src = g[..., :c1]
            prev_key = layer.shortcut
            if prev_key in grad_buf:
                grad_buf[prev_key] = grad_buf[prev_key] + g_src
            else:
                grad_buf[prev_key] = g_src.copy()
        if layer.kind == "conv":
            gx, gw, gb = T.conv2d_backward(g, cache["x"], p["w"])
            grads[layer.name]["w"] = gw
            grads[layer.name]["b"] = gb
        elif layer.kind == "maxpool":
            gx = T.maxpool2d_backward(g, cache["argmax"], layer.pool_size,
                                      cache["in_shape"])
        else:
            x_in = cache["x"]
            flat = x_in.reshape(-1, p["w"].shape[0])
            g2 = g.reshape(-1, p["w"].shape[1])
            grads[layer.name]["w"] = flat.T @ g2
            grads[layer.name]["b"] = g2.sum(axis=0)
            gx = (g2 @ p["w"].T).reshape(x_in.shape)
        prev_key = layers[i - 1].name if i > 0 else INPUT_KEY
        if prev_key in grad_buf:
            grad_buf[prev_key] = grad_buf[prev_key] + gx
        else:
            grad_buf[prev_key] = gx
    return grad_buf[INPUT_KEY], grads


def run_network(spec: ArchitectureSpec, params, x, mode, rng):
    """Run the shared trunk on one input; returns (output, caches).

    The per-pixel head is applied separately on the concatenated multi-scale
    features (see the multiscale module).
    """
    validate_spec(spec)
    if x.shape[-1] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[-1]} channels, spec wants {spec.in_channels}")
    return run_layers(spec.shared, params, x, mode, rng)


def accumulate_grads(total: dict, part: dict) -> dict:
    """Sum per-layer grad dicts (weight sharing across pyramid scales)."""
    for name, entry in part.items():
        slot = total.setdefault(name, {})
        for key, arr in entry.items():
            if key in slot:
                slot[key] = slot[key] + arr
            else:
                slot[key] = arr
    return total
