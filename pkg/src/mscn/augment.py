"""Geometric and photometric training-time augmentation.

The transform order is fixed: random scale, rotation, horizontal flip,
pad-to-crop, random crop, additive jitter. RGB content is interpolated
bilinearly; label maps ride along with nearest-neighbor sampling through
exactly the same coordinate mapping, with rotation-exposed corners and
padding marked IGNORE so they drop out of the loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .labels import IGNORE


@dataclass(frozen=True)
class AugmentPolicy:
    resize_range: tuple = (0.75, 1.25)
    crop_size: int = 180
    rotation_deg: float = 15.0
    flip: bool = True
    jitter_sigma: float = 2.0
    random_crop: bool = True    # False centers the crop (for collapsed policies)

    @staticmethod
    def identity(crop_size: int) -> "AugmentPolicy":
        """All randomness collapsed: a deterministic center crop."""
        return AugmentPolicy(resize_range=(1.0, 1.0), crop_size=crop_size,
                             rotation_deg=0.0, flip=False, jitter_sigma=0.0,
                             random_crop=False)


def policy_for_category(category: str, crop_size: int = 180) -> AugmentPolicy:
    """Scale range 50-150% for bridge imagery, 75-125% otherwise."""
    rng_range = (0.50, 1.50) if category == "bridge" else (0.75, 1.25)
    return AugmentPolicy(resize_range=rng_range, crop_size=crop_size)


@dataclass(frozen=True)
class GeometryDraw:
    """One sampled set of augmentation parameters (crop offsets as fractions
    so the draw is independent of image extents)."""
    scale: float
    angle_deg: float
    flip: bool
    crop_top_frac: float
    crop_left_frac: float


def draw_geometry(policy: AugmentPolicy, rng: np.random.Generator) -> GeometryDraw:
    """Sample augmentation parameters in a fixed draw order."""
    lo, hi = policy.resize_range
    scale = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    angle = float(rng.uniform(-policy.rotation_deg, policy.rotation_deg)) \
        if policy.rotation_deg > 0 else 0.0
    flip = bool(rng.random() < 0.5) if policy.flip else False
    if policy.random_crop:
        top = float(rng.random())
        left = float(rng.random())
    else:
        top = left = 0.5
    return GeometryDraw(scale=scale, angle_deg=angle, flip=flip,
                        crop_top_frac=top, crop_left_frac=left)


def resize_bilinear(img: np.ndarray, out_hw) -> np.ndarray:
    """Bilinear resize of a float [H,W,C] image (pixel-center alignment)."""
    hi, wi = img.shape[:2]
    ho, wo = out_hw
    ys = np.clip((np.arange(ho) + 0.5) * (hi / ho) - 0.5, 0, hi - 1)
    xs = np.clip((np.arange(wo) + 0.5) * (wi / wo) - 0.5, 0, wi - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, hi - 1)
    x1 = np.minimum(x0 + 1, wi - 1)
    wy = (ys - y0).reshape(-1, 1, 1)
    wx = (xs - x0).reshape(1, -1, 1)
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bottom = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def resize_nearest(label_map: np.ndarray, out_hw) -> np.ndarray:
    """Nearest-neighbor resize for label maps (2D) or images."""
    hi, wi = label_map.shape[:2]
    ho, wo = out_hw
    ys = np.clip(np.floor((np.arange(ho) + 0.5) * hi / ho), 0, hi - 1).astype(np.intp)
    xs = np.clip(np.floor((np.arange(wo) + 0.5) * wi / wo), 0, wi - 1).astype(np.intp)
    return label_map[ys][:, xs]


def rotate(rgb: np.ndarray, label_maps, angle_deg: float):
    """Rotate about the center on the same canvas.

    RGB samples bilinearly (exposed corners filled 0); label maps sample
    nearest with exposed corners set to IGNORE. Returns (rgb, label_maps).
    """
    h, w = rgb.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    jj, ii = np.meshgrid(np.arange(w) - cx, np.arange(h) - cy)
    src_x = cos_t * jj + sin_t * ii + cx
    src_y = -sin_t * jj + cos_t * ii + cy
    inside = (src_x >= 0) & (src_x <= w - 1) & (src_y >= 0) & (src_y <= h - 1)

    sxc = np.clip(src_x, 0, w - 1)
    syc = np.clip(src_y, 0, h - 1)
    x0 = np.floor(sxc).astype(np.intp)
    y0 = np.floor(syc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sxc - x0)[..., None]
    fy = (syc - y0)[..., None]
    out_rgb = (rgb[y0, x0] * (1 - fx) * (1 - fy) + rgb[y0, x1] * fx * (1 - fy)
               + rgb[y1, x0] * (1 - fx) * fy + rgb[y1, x1] * fx * fy)
    out_rgb[~inside] = 0.0

    xn = np.clip(np.rint(src_x), 0, w - 1).astype(np.intp)
    yn = np.clip(np.rint(src_y), 0, h - 1).astype(np.intp)
    out_maps = []
    for m in label_maps:
        if m is None:
            out_maps.append(None)
            continue
        rotated = m[yn, xn].copy()
        rotated[~inside] = IGNORE
        out_maps.append(rotated)
    return out_rgb, out_maps


def _pad_to(rgb, label_maps, crop):
    h, w = rgb.shape[:2]
    pad_h, pad_w = max(0, crop - h), max(0, crop - w)
    if pad_h == 0 and pad_w == 0:
        return rgb, label_maps
    pt, pl = pad_h // 2, pad_w // 2
    pads = ((pt, pad_h - pt), (pl, pad_w - pl))
    rgb = np.pad(rgb, pads + ((0, 0),), mode="edge")
    label_maps = [None if m is None else
                  np.pad(m, pads, mode="constant", constant_values=IGNORE)
                  for m in label_maps]
    return rgb, label_maps


def apply_geometry(sample, policy: AugmentPolicy, draw: GeometryDraw,
                   rng: np.random.Generator):
    """Apply one sampled transform to a Sample; returns a crop-sized Sample."""
    rgb = sample.rgb.astype(np.float32)
    maps = [sample.scene, sample.component]

    if draw.scale != 1.0:
        h, w = rgb.shape[:2]
        out_hw = (max(1, round(h * draw.scale)), max(1, round(w * draw.scale)))
        rgb = resize_bilinear(rgb, out_hw)
        maps = [None if m is None else resize_nearest(m, out_hw) for m in maps]
    if draw.angle_deg != 0.0:
        rgb, maps = rotate(rgb, maps, draw.angle_deg)
    if draw.flip:
        rgb = rgb[:, ::-1]
        maps = [None if m is None else m[:, ::-1] for m in maps]

    crop = policy.crop_size
    rgb, maps = _pad_to(rgb, maps, crop)
    h, w = rgb.shape[:2]
    top = int(draw.crop_top_frac * (h - crop + 1))
    left = int(draw.crop_left_frac * (w - crop + 1))
    rgb = rgb[top:top + crop, left:left + crop]
    maps = [None if m is None else
            np.ascontiguousarray(m[top:top + crop, left:left + crop])
            for m in maps]

    if policy.jitter_sigma > 0:
        rgb = rgb + rng.normal(0.0, policy.jitter_sigma, rgb.shape)
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    return dc_replace(sample, rgb=rgb, scene=maps[0], component=maps[1])


def augment(sample, policy: AugmentPolicy, rng: np.random.Generator):
    """Draw parameters and apply them: the standard training-time transform."""
    draw = draw_geometry(policy, rng)
    return apply_geometry(sample, policy, draw, rng)
