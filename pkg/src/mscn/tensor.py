"""Dense array primitives with hand-written backward passes.

Arrays are plain numpy ndarrays in channels-last layout: spatial operations
accept [H, W, C] or batched [B, H, W, C]; float32 is the training precision
and float64 is used by the gradient-check harness. Every operation preserves
the input dtype so both precisions flow through unchanged.

Forward/backward pairs here are pure functions: backward passes take the
cotangent plus whatever the forward cached, and return exact partial
derivatives. Convolution is same-padded and stride 1 throughout; pooling is
non-overlapping with ceil sizing so odd extents survive pyramid downsampling.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

# When enabled, every primitive asserts its outputs are finite. Off by
# default; the test suite flips it on.
_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def _check_finite(name, *arrays):
    if _DEBUG_CHECKS:
        for a in arrays:
            if a is not None and not np.isfinite(a).all():
                raise FloatingPointError(f"{name} produced non-finite values")


def _as_batched(x):
    """Promote [H,W,C] to [1,H,W,C]; return (array, had_batch_axis)."""
    if x.ndim == 3:
        return x[None], False
    if x.ndim == 4:
        return x, True
    raise ShapeError(f"expected 3 or 4 axes, got shape {x.shape}")


def _im2col(xp, k, h, w):
    """Gather K*K shifted views of the padded input into [B,H,W,K,K,C]."""
    b, _, _, c = xp.shape
    col = np.empty((b, h, w, k, k, c), dtype=xp.dtype)
    for ky in range(k):
        for kx in range(k):
            col[:, :, :, ky, kx, :] = xp[:, ky:ky + h, kx:kx + w, :]
    return col


def conv2d(x: np.ndarray, filters: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 convolution.

    x: [H,W,Cin] or [B,H,W,Cin]; filters: [K,K,Cin,Cout] with K odd;
    bias: [Cout]. Output spatial extents equal the input's. No activation.
    """
    xb, batched = _as_batched(x)
    k = filters.shape[0]
    if filters.ndim != 4 or filters.shape[1] != k:
        raise ShapeError(f"filters must be [K,K,Cin,Cout], got {filters.shape}")
    if k % 2 != 1:
        raise ShapeError(f"filter size must be odd, got {k}")
    if filters.shape[2] != xb.shape[3]:
        raise ShapeError(
            f"input has {xb.shape[3]} channels but filters expect {filters.shape[2]}")
    if bias.shape != (filters.shape[3],):
        raise ShapeError(f"bias shape {bias.shape} != ({filters.shape[3]},)")

    b, h, w, cin = xb.shape
    cout = filters.shape[3]
    p = k // 2
    xp = np.pad(xb, ((0, 0), (p, p), (p, p), (0, 0)))
    col = _im2col(xp, k, h, w).reshape(b * h * w, k * k * cin)
    out = col @ filters.reshape(k * k * cin, cout)
    out += bias
    out = out.reshape(b, h, w, cout)
    _check_finite("conv2d", out)
    return out if batched else out[0]


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, filters: np.ndarray):
    """Gradients of conv2d w.r.t. input, filters, and bias."""
    xb, batched = _as_batched(x)
    gb4, _ = _as_batched(grad_out)
    k = filters.shape[0]
    b, h, w, cin = xb.shape
    cout = filters.shape[3]
    if gb4.shape != (b, h, w, cout):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward output")

    p = k // 2
    xp = np.pad(xb, ((0, 0), (p, p), (p, p), (0, 0)))
    col = _im2col(xp, k, h, w).reshape(b * h * w, k * k * cin)
    g2 = gb4.reshape(b * h * w, cout)

    grad_filters = (col.T @ g2).reshape(k, k, cin, cout)
    grad_bias = g2.sum(axis=0)
    gcol = (g2 @ filters.reshape(k * k * cin, cout).T).reshape(b, h, w, k, k, cin)
    gxp = np.zeros_like(xp)
    for ky in range(k):
        for kx in range(k):
            gxp[:, ky:ky + h, kx:kx + w, :] += gcol[:, :, :, ky, kx, :]
    grad_input = gxp[:, p:p + h, p:p + w, :]
    _check_finite("conv2d_backward", grad_input, grad_filters, grad_bias)
    return (grad_input if batched else grad_input[0]), grad_filters, grad_bias


def maxpool2d(x: np.ndarray, n: int):
    """Non-overlapping N*N max pooling with ceil sizing on partial borders.

    Returns (out, argmax) where argmax holds each window's flat row-major
    winner (first occurrence on ties) for use by maxpool2d_backward.
    """
    if n < 1:
        raise ShapeError(f"pool size must be >= 1, got {n}")
    xb, batched = _as_batched(x)
    b, h, w, c = xb.shape
    h2 = -(-h // n)
    w2 = -(-w // n)
    pad_h, pad_w = h2 * n - h, w2 * n - w
    if pad_h or pad_w:
        xb = np.pad(xb, ((0, 0), (0, pad_h), (0, pad_w), (0, 0)),
                    constant_values=-np.inf)
    win = xb.reshape(b, h2, n, w2, n, c).transpose(0, 1, 3, 5, 2, 4)
    win = win.reshape(b, h2, w2, c, n * n)
    argmax = win.argmax(axis=-1)
    out = np.take_along_axis(win, argmax[..., None], axis=-1)[..., 0]
    _check_finite("maxpool2d", out)
    return (out if batched else out[0]), argmax


def maxpool2d_backward(grad_out: np.ndarray, argmax: np.ndarray, n: int,
                       input_shape) -> np.ndarray:
    """Route each output gradient to its cached argmax position."""
    gb, batched = _as_batched(grad_out)
    h, w = input_shape[-3], input_shape[-2]
    b, h2, w2, c = gb.shape
    if argmax.shape != (b, h2, w2, c) and argmax.shape != (1, h2, w2, c):
        raise ShapeError("argmax cache does not match grad_out")

    bi, oi, oj, ci = np.indices((b, h2, w2, c), sparse=False)
    ii = oi * n + argmax // n
    jj = oj * n + argmax % n
    grad_input = np.zeros((b, h, w, c), dtype=gb.dtype)
    # windows are disjoint, so plain assignment is an exact scatter
    grad_input[bi, ii, jj, ci] = gb
    return grad_input if batched else grad_input[0]


def upsample_nearest(x: np.ndarray, target) -> np.ndarray:
    """Nearest-neighbor upsampling to exact target extents (H, W)."""
    xb, batched = _as_batched(x)
    b, h, w, c = xb.shape
    th, tw = target
    if th < h or tw < w:
        raise ShapeError(f"target {target} smaller than source ({h},{w})")
    rows = (np.arange(th) * h) // th
    cols = (np.arange(tw) * w) // tw
    out = xb[:, rows][:, :, cols]
    return out if batched else out[0]


def upsample_nearest_backward(grad_out: np.ndarray, source_hw) -> np.ndarray:
    """Accumulate gradients over the cells each source pixel was copied to."""
    gb, batched = _as_batched(grad_out)
    b, th, tw, c = gb.shape
    h, w = source_hw
    rows = (np.arange(th) * h) // th
    cols = (np.arange(tw) * w) // tw
    g1 = np.zeros((h, b, tw, c), dtype=gb.dtype)
    np.add.at(g1, rows, gb.transpose(1, 0, 2, 3))
    g2 = np.zeros((w, h, b, c), dtype=gb.dtype)
    np.add.at(g2, cols, g1.transpose(2, 0, 1, 3))
    grad_input = g2.transpose(2, 1, 0, 3)
    return grad_input if batched else grad_input[0]


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product [m,k] @ [k,n]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    _check_finite("matmul", out)
    return out


def matmul_backward(grad_out: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Gradients of matmul: (grad_out @ b.T, a.T @ grad_out)."""
    if grad_out.shape != (a.shape[0], b.shape[1]):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match product shape")
    return grad_out @ b.T, a.T @ grad_out
