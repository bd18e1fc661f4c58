"""Finite-difference verification of every backward pass.

Each check compares an analytic gradient against central finite differences
(step 1e-5) in double precision and reports a norm-relative error. The same
suite backs the test suite and the `grad-check` CLI command.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import multiscale, nn, optim
from . import tensor as T

FD_STEP = 1e-5
TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    ok: bool


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    na = float(np.linalg.norm(analytic))
    nb = float(np.linalg.norm(numeric))
    denom = max(na, nb, 1e-30)
    return float(np.linalg.norm(analytic - numeric)) / denom


def numeric_grad(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of scalar-valued f at x, elementwise."""
    x = x.astype(np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f(x)
        flat[i] = orig - step
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return grad


def _projection_loss(out, r):
    return float(np.sum(out * r))


def check_conv2d(rng):
    x = rng.standard_normal((5, 6, 3))
    w = rng.standard_normal((3, 3, 3, 4))
    b = rng.standard_normal(4)
    r = rng.standard_normal((5, 6, 4))
    gx, gw, gb = T.conv2d_backward(r, x, w)
    errs = [
        relative_error(gx, numeric_grad(lambda v: _projection_loss(T.conv2d(v, w, b), r), x)),
        relative_error(gw, numeric_grad(lambda v: _projection_loss(T.conv2d(x, v, b), r), w)),
        relative_error(gb, numeric_grad(lambda v: _projection_loss(T.conv2d(x, w, v), r), b)),
    ]
    return max(errs)


def check_maxpool(rng):
    # distinct values with comfortable gaps so the argmax never flips
    base = rng.permutation(6 * 7 * 3).astype(np.float64).reshape(6, 7, 3)
    x = base * 0.25 + rng.uniform(0, 0.01, base.shape)
    out, argmax = T.maxpool2d(x, 2)
    r = rng.standard_normal(out.shape)
    gx = T.maxpool2d_backward(r, argmax, 2, x.shape)
    num = numeric_grad(lambda v: _projection_loss(T.maxpool2d(v, 2)[0], r), x)
    return relative_error(gx, num)


def check_upsample(rng):
    x = rng.standard_normal((3, 4, 2))
    target = (7, 9)
    r = rng.standard_normal(target + (2,))
    gx = T.upsample_nearest_backward(r, (3, 4))
    num = numeric_grad(lambda v: _projection_loss(T.upsample_nearest(v, target), r), x)
    return relative_error(gx, num)


def check_matmul(rng):
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((3, 5))
    r = rng.standard_normal((4, 5))
    ga, gb = T.matmul_backward(r, a, b)
    errs = [
        relative_error(ga, numeric_grad(lambda v: _projection_loss(T.matmul(v, b), r), a)),
        relative_error(gb, numeric_grad(lambda v: _projection_loss(T.matmul(a, v), r), b)),
    ]
    return max(errs)


def check_relu(rng):
    # keep inputs away from the kink at 0
    x = rng.uniform(0.1, 1.0, (5, 4)) * rng.choice([-1.0, 1.0], (5, 4))
    r = rng.standard_normal(x.shape)
    ga = nn.relu_backward(r, x)
    num = numeric_grad(lambda v: _projection_loss(nn.relu(v), r), x)
    return relative_error(ga, num)


def check_batchnorm(rng):
    x = rng.standard_normal((2, 4, 4, 3))
    scale = rng.uniform(0.5, 1.5, 3)
    shift = rng.standard_normal(3)
    rm, rv = np.zeros(3), np.ones(3)
    r = rng.standard_normal(x.shape)

    out, cache, _, _ = nn.batchnorm(x, scale, shift, "train", rm, rv)
    gx, gscale, gshift = nn.batchnorm_backward(r, cache)

    def loss(xx=x, ss=scale, hh=shift):
        y, _, _, _ = nn.batchnorm(xx, ss, hh, "train", rm.copy(), rv.copy())
        return _projection_loss(y, r)

    errs = [
        relative_error(gx, numeric_grad(lambda v: loss(xx=v), x)),
        relative_error(gscale, numeric_grad(lambda v: loss(ss=v), scale)),
        relative_error(gshift, numeric_grad(lambda v: loss(hh=v), shift)),
    ]
    return max(errs)


def check_residual(rng):
    cur = rng.standard_normal((3, 3, 4))
    src = rng.standard_normal((3, 3, 2))
    r = rng.standard_normal((3, 3, 4))
    # forward is linear: grads are r (current) and the leading channels (source)
    g_src = r[..., :2]
    errs = [
        relative_error(r, numeric_grad(
            lambda v: _projection_loss(nn.residual_add(v, src), r), cur)),
        relative_error(g_src, numeric_grad(
            lambda v: _projection_loss(nn.residual_add(cur, v), r), src)),
    ]
    return max(errs)


def check_loss(rng):
    logits = rng.standard_normal((4, 4, 5))
    labels = rng.integers(0, 5, (4, 4)).astype(np.uint8)
    labels[0, 0] = optim.IGNORE
    labels[1, 2] = optim.IGNORE
    weights = rng.uniform(0.5, 2.0, 5)

    def loss(lg):
        p = nn.softmax_channels(lg)
        val, _ = optim.weighted_cross_entropy(p, labels, weights)
        return val

    probs = nn.softmax_channels(logits)
    _, grad = optim.weighted_cross_entropy(probs, labels, weights)
    return relative_error(grad, numeric_grad(loss, logits))


def _tiny_multiscale_spec():
    shared = (
        nn.conv_layer("Conv0", 3, 4),
        nn.maxpool_layer("Maxpool0"),
        nn.conv_layer("Conv1", 3, 6),
    )
    head = (
        nn.fcl_layer("FCL0", 8, activation="relu", batch_norm=True),
        nn.fcl_layer("FCL1", 3, activation="none"),
    )
    return nn.ArchitectureSpec(shared=shared, head=head, in_channels=3,
                               n_classes=3, batch_size=1, weight_decay=0.0)


def check_end_to_end(rng):
    """Pyramid -> shared trunk at 3 scales -> head -> softmax -> loss,
    checked w.r.t. every parameter of a small net on a 16x16 input."""
    spec = _tiny_multiscale_spec()
    params = nn.init_parameters(spec, rng, dtype=np.float64)
    x = rng.standard_normal((16, 16, 3))
    labels = rng.integers(0, 3, (16, 16)).astype(np.uint8)
    labels[labels == 0] = np.where(rng.random((labels == 0).sum()) < 0.1,
                                   optim.IGNORE, 0).astype(np.uint8)
    weights = np.ones(3)
    dummy = np.random.default_rng(0)

    def loss():
        _, probs, _ = multiscale.forward(spec, params, x, "train", dummy)
        val, _ = optim.weighted_cross_entropy(probs, labels, weights)
        return val

    _, probs, caches = multiscale.forward(spec, params, x, "train", dummy)
    _, grad_logits = optim.weighted_cross_entropy(probs, labels, weights)
    grads = multiscale.backward(spec, params, caches, grad_logits)

    worst = 0.0
    for name, entry in grads.items():
        for key, g in entry.items():
            p = params[name][key]
            num = np.zeros_like(p)
            flat, nflat = p.reshape(-1), num.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + FD_STEP
                up = loss()
                flat[i] = orig - FD_STEP
                down = loss()
                flat[i] = orig
                nflat[i] = (up - down) / (2 * FD_STEP)
            worst = max(worst, relative_error(g, num))
    return worst


PRIMITIVE_CHECKS = (
    ("conv2d", check_conv2d),
    ("maxpool2d", check_maxpool),
    ("upsample_nearest", check_upsample),
    ("matmul", check_matmul),
    ("relu", check_relu),
    ("batchnorm", check_batchnorm),
    ("residual_add", check_residual),
    ("softmax_cross_entropy", check_loss),
)


def run_suite(n_seeds: int = 20, end_to_end_seeds: int = 3, seed0: int = 0):
    """Run every check over n_seeds; returns (results, all_ok)."""
    results = []
    for name, fn in PRIMITIVE_CHECKS:
        worst = 0.0
        for s in range(n_seeds):
            worst = max(worst, fn(np.random.default_rng(seed0 + 1000 + s)))
        results.append(CheckResult(name, worst, worst < TOLERANCE))
    worst = 0.0
    for s in range(end_to_end_seeds):
        worst = max(worst, check_end_to_end(np.random.default_rng(seed0 + 2000 + s)))
    results.append(CheckResult("end_to_end_multiscale", worst, worst < TOLERANCE))
    return results, all(r.ok for r in results)
