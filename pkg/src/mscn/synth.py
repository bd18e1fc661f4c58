"""Procedural scene generator for desk-scale training and testing.

Scenes are flat-colored primitives plus noise: a sky band, a ground band,
and a category-dependent mix of buildings, greenery, water, vehicles, poles,
people, and clutter. Bridge scenes add piers, a deck, truss bracing, and a
railing, labeled as components and marked Bridges in the scene map.

Bridge parts deliberately share the grey tones of buildings, poles, and
pavement: pixel color alone is ambiguous, so classifiers must rely on
context, which is what the two-stage pipeline exploits.
"""

from __future__ import annotations

import numpy as np

from .data import Sample
from .labels import (BRIDGES, COMPONENT_CLASSES, NON_BRIDGE, SCENE_CLASSES)

_SCENE = {name: i for i, name in enumerate(SCENE_CLASSES)}
_CPNT = {name: i for i, name in enumerate(COMPONENT_CLASSES)}

_COLORS = {
    "sky": (150, 190, 235),
    "pavement": (95, 95, 100),
    "water": (45, 90, 150),
    "building": (125, 115, 105),
    "greenery": (55, 125, 60),
    "pole": (85, 85, 88),
    "person": (205, 160, 135),
    "others": (160, 90, 160),
    "column": (120, 118, 112),
    "deck": (88, 90, 96),
    "truss": (105, 100, 95),
    "railing": (180, 180, 185),
}

_VEHICLE_COLORS = ((170, 40, 40), (40, 60, 170), (200, 160, 40), (220, 220, 225))


class _Canvas:
    def __init__(self, h, w, rng):
        self.h, self.w = h, w
        self.rng = rng
        self.rgb = np.zeros((h, w, 3), dtype=np.float32)
        self.scene = np.zeros((h, w), dtype=np.uint8)
        self.cpnt = np.full((h, w), NON_BRIDGE, dtype=np.uint8)
        self.yy, self.xx = np.indices((h, w))

    def color(self, name):
        return np.clip(np.asarray(_COLORS[name], dtype=np.float32)
                       + self.rng.normal(0, 8, 3), 0, 255)

    def paint(self, mask, color, scene_cls, cpnt_cls=NON_BRIDGE):
        self.rgb[mask] = color
        self.scene[mask] = scene_cls
        self.cpnt[mask] = cpnt_cls

    def rect(self, top, bottom, left, right):
        top, bottom = max(0, top), min(self.h, bottom)
        left, right = max(0, left), min(self.w, right)
        mask = np.zeros((self.h, self.w), dtype=bool)
        if bottom > top and right > left:
            mask[top:bottom, left:right] = True
        return mask

    def ellipse(self, cy, cx, ry, rx):
        return (((self.yy - cy) / max(ry, 1)) ** 2
                + ((self.xx - cx) / max(rx, 1)) ** 2) <= 1.0


def _buildings(cv, rng, horizon, count):
    for _ in range(count):
        bw = int(cv.w * rng.uniform(0.10, 0.25))
        bh = int(cv.h * rng.uniform(0.15, 0.40))
        left = int(rng.integers(0, max(1, cv.w - bw)))
        cv.paint(cv.rect(horizon - bh, horizon, left, left + bw),
                 cv.color("building"), _SCENE["Building"])


def _greenery(cv, rng, horizon, count):
    for _ in range(count):
        cy = horizon + int(cv.h * rng.uniform(-0.05, 0.05))
        cx = int(rng.integers(0, cv.w))
        ry = int(cv.h * rng.uniform(0.04, 0.12))
        rx = int(cv.w * rng.uniform(0.05, 0.15))
        cv.paint(cv.ellipse(cy, cx, ry, rx), cv.color("greenery"),
                 _SCENE["Greenery"])


def _water(cv, rng, horizon):
    cy = int((horizon + cv.h) / 2 + cv.h * rng.uniform(-0.05, 0.05))
    cx = int(rng.integers(cv.w // 4, 3 * cv.w // 4))
    mask = cv.ellipse(cy, cx, int(cv.h * rng.uniform(0.05, 0.12)),
                      int(cv.w * rng.uniform(0.12, 0.30)))
    mask &= cv.yy >= horizon
    cv.paint(mask, cv.color("water"), _SCENE["Water"])


def _bridge(cv, rng, horizon):
    h, w = cv.h, cv.w
    deck_th = max(3, int(h * rng.uniform(0.04, 0.07)))
    deck_bottom = horizon - int(h * rng.uniform(0.00, 0.08))
    deck_top = deck_bottom - deck_th
    scene_cls = BRIDGES

    n_piers = int(rng.integers(2, 5))
    pier_w = max(2, int(w * rng.uniform(0.03, 0.06)))
    base = min(h, horizon + int(h * rng.uniform(0.15, 0.35)))
    for i in range(n_piers):
        cx = int((i + 0.5 + rng.uniform(-0.15, 0.15)) * w / n_piers)
        cv.paint(cv.rect(deck_bottom, base, cx - pier_w // 2, cx + pier_w // 2 + 1),
                 cv.color("column"), scene_cls, _CPNT["Columns"])

    cv.paint(cv.rect(deck_top, deck_bottom, 0, w), cv.color("deck"),
             scene_cls, _CPNT["Beams&Slabs"])

    truss_h = max(3, int(h * rng.uniform(0.03, 0.06)))
    period = int(rng.integers(6, 12))
    band = cv.rect(deck_top - truss_h, deck_top, 0, w)
    stripes = ((cv.xx + cv.yy) % period) < max(2, period // 3)
    cv.paint(band & stripes, cv.color("truss"), scene_cls,
             _CPNT["Other structural"])

    rail_top = deck_top - truss_h - 2
    cv.paint(cv.rect(rail_top, rail_top + 2, 0, w), cv.color("railing"),
             scene_cls, _CPNT["Other nonstructural"])


def _vehicles(cv, rng, horizon, count):
    for _ in range(count):
        bw = int(cv.w * rng.uniform(0.08, 0.16))
        bh = int(cv.h * rng.uniform(0.05, 0.09))
        top = int(rng.integers(horizon, max(horizon + 1, cv.h - bh - 3)))
        left = int(rng.integers(0, max(1, cv.w - bw)))
        color = np.clip(np.asarray(rng.choice(_VEHICLE_COLORS), dtype=np.float32)
                        + rng.normal(0, 8, 3), 0, 255)
        body = cv.rect(top, top + bh, left, left + bw)
        roof = cv.rect(top - bh // 2, top, left + bw // 4, left + 3 * bw // 4)
        wheels = cv.rect(top + bh, top + bh + 3, left + 1, left + 4) \
            | cv.rect(top + bh, top + bh + 3, left + bw - 4, left + bw - 1)
        cv.paint(body | roof | wheels, color, _SCENE["Vehicles"])


def _poles(cv, rng, horizon, count):
    for _ in range(count):
        x = int(rng.integers(2, cv.w - 2))
        height = int(cv.h * rng.uniform(0.15, 0.30))
        base = int(rng.integers(horizon, cv.h))
        pole = cv.rect(base - height, base, x, x + 2)
        sign = cv.rect(base - height, base - height + 5, x - 3, x + 5) \
            if rng.random() < 0.5 else np.zeros_like(pole)
        cv.paint(pole | sign, cv.color("pole"), _SCENE["Sign&Poles"])


def _persons(cv, rng, horizon, count):
    for _ in range(count):
        x = int(rng.integers(2, cv.w - 3))
        height = max(6, int(cv.h * rng.uniform(0.06, 0.12)))
        base = int(rng.integers(horizon + 1, cv.h))
        body = cv.rect(base - height, base, x, x + 2)
        head = cv.rect(base - height - 3, base - height, x - 1, x + 3)
        cv.paint(body | head, cv.color("person"), _SCENE["Person"])


def _clutter(cv, rng, count):
    for _ in range(count):
        top = int(rng.integers(0, cv.h - 4))
        left = int(rng.integers(0, cv.w - 4))
        size = int(rng.integers(2, 5))
        cv.paint(cv.rect(top, top + size, left, left + size),
                 cv.color("others"), _SCENE["Others"])


def generate_synthetic_scene(seed: int, size, bridge: bool = False,
                             category: str = "general") -> Sample:
    """Deterministic synthetic sample with scene and component label maps."""
    h, w = (size, size) if isinstance(size, int) else size
    rng = np.random.default_rng(seed)
    cv = _Canvas(h, w, rng)

    horizon = int(h * rng.uniform(0.42, 0.60))
    cv.paint(cv.rect(0, horizon, 0, w), cv.color("sky"), _SCENE["Sky"])
    cv.paint(cv.rect(horizon, h, 0, w), cv.color("pavement"), _SCENE["Pavement"])

    urbanish = category in ("urban", "bridge")
    if rng.random() < (0.2 if urbanish else 0.7):
        _water(cv, rng, horizon)
    _greenery(cv, rng, horizon, int(rng.integers(0, 3) if urbanish
                                    else rng.integers(2, 5)))
    _buildings(cv, rng, horizon, int(rng.integers(2, 5) if urbanish
                                     else rng.integers(0, 3)))
    if bridge:
        _bridge(cv, rng, horizon)
    _vehicles(cv, rng, horizon, int(rng.integers(1, 4) if urbanish
                                    else rng.integers(0, 2)))
    _poles(cv, rng, horizon, int(rng.integers(1, 4) if urbanish
                                 else rng.integers(0, 2)))
    _persons(cv, rng, horizon, int(rng.integers(0, 3)))
    _clutter(cv, rng, int(rng.integers(2, 7)))

    rgb = np.clip(cv.rgb + rng.normal(0, 5, cv.rgb.shape), 0, 255).astype(np.uint8)
    return Sample(id=f"synth-{category}-{seed:08d}", category=category,
                  rgb=rgb, scene=cv.scene, component=cv.cpnt)
