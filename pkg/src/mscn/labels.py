"""Class vocabularies, the IGNORE sentinel, and rendering palettes."""

from __future__ import annotations

import numpy as np

from .errors import DataError

IGNORE = 255

SCENE_CLASSES = ("Building", "Greenery", "Person", "Pavement", "Sign&Poles",
                 "Vehicles", "Bridges", "Water", "Sky", "Others")
COMPONENT_CLASSES = ("Non-bridge", "Columns", "Beams&Slabs",
                     "Other structural", "Other nonstructural")

BRIDGES = SCENE_CLASSES.index("Bridges")          # scene class 6
NON_BRIDGE = COMPONENT_CLASSES.index("Non-bridge")  # component class 0

# Component colors are fixed; the scene palette is this project's own choice
# (documented in the README). IGNORE always renders black.
COMPONENT_PALETTE = (
    (0, 0, 139),      # Non-bridge: dark blue
    (0, 128, 0),      # Columns: green
    (255, 0, 0),      # Beams&Slabs: red
    (135, 206, 235),  # Other structural: light blue
    (255, 255, 0),    # Other nonstructural: yellow
)

SCENE_PALETTE = (
    (128, 0, 0),      # Building
    (0, 128, 0),      # Greenery
    (192, 128, 128),  # Person
    (128, 64, 128),   # Pavement
    (192, 192, 128),  # Sign&Poles
    (64, 0, 128),     # Vehicles
    (0, 128, 192),    # Bridges
    (0, 0, 128),      # Water
    (128, 128, 128),  # Sky
    (64, 128, 192),   # Others
)


def render_labelmap(label_map: np.ndarray, palette) -> np.ndarray:
    """Per-pixel palette lookup; IGNORE pixels render black."""
    lut = np.zeros((256, 3), dtype=np.uint8)
    for idx, color in enumerate(palette):
        lut[idx] = color
    out_of_range = (label_map != IGNORE) & (label_map >= len(palette))
    if out_of_range.any():
        raise DataError("label map contains values outside the palette")
    return lut[label_map]


def parse_labelmap(rgb: np.ndarray, palette) -> np.ndarray:
    """Invert render_labelmap; colors not in the palette become IGNORE."""
    labels = np.full(rgb.shape[:2], IGNORE, dtype=np.uint8)
    for idx, color in enumerate(palette):
        match = (rgb == np.asarray(color, dtype=np.uint8)).all(axis=-1)
        labels[match] = idx
    return labels
