"""Dataset ingestion, label remapping, block construction, and batching.

Datasets arrive as a tab-separated manifest naming PNG files per sample.
Samples are grouped into stored blocks of at most 250 images; scene training
loads one block per category each cycle and draws 4 general / 4 urban /
2 bridge images per mini-batch, while component training pools its blocks
and draws straight batches of 10.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .augment import resize_bilinear, resize_nearest
from .errors import DataError
from .labels import COMPONENT_CLASSES, IGNORE, SCENE_CLASSES

BLOCK_CAPACITY = 250
CATEGORIES = ("general", "urban", "bridge")
SCENE_BATCH_COUNTS = {"general": 4, "urban": 4, "bridge": 2}
RESIZE_TARGET = 320


@dataclass
class Sample:
    id: str
    category: str
    rgb: np.ndarray                      # uint8 [H,W,3]
    scene: Optional[np.ndarray] = None   # uint8 [H,W], 255 = IGNORE
    component: Optional[np.ndarray] = None
    split: str = ""                      # "train" | "test" | ""


@dataclass
class DataBlock:
    samples: list
    category: str
    split: str

    def __post_init__(self):
        if len(self.samples) > BLOCK_CAPACITY:
            raise DataError(f"block holds {len(self.samples)} samples, "
                            f"capacity is {BLOCK_CAPACITY}")


def validate_sample(sample: Sample) -> None:
    h, w = sample.rgb.shape[:2]
    if sample.rgb.ndim != 3 or sample.rgb.shape[2] != 3:
        raise DataError(f"{sample.id}: rgb must be [H,W,3]")
    if sample.category not in CATEGORIES:
        raise DataError(f"{sample.id}: unknown category {sample.category!r}")
    for name, m, k in (("scene", sample.scene, len(SCENE_CLASSES)),
                       ("component", sample.component, len(COMPONENT_CLASSES))):
        if m is None:
            continue
        if m.shape != (h, w):
            raise DataError(f"{sample.id}: {name} map misaligned with rgb")
        bad = (m != IGNORE) & (m >= k)
        if bad.any():
            raise DataError(f"{sample.id}: {name} map has values >= {k}")


# ---------------------------------------------------------------------------
# PNG and manifest I/O


def load_png_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def load_png_label(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def save_png_rgb(path, rgb: np.ndarray) -> None:
    Image.fromarray(rgb.astype(np.uint8), mode="RGB").save(path)


def save_png_label(path, label_map: np.ndarray) -> None:
    Image.fromarray(label_map.astype(np.uint8), mode="L").save(path)


def write_manifest(path, records) -> None:
    """records: iterable of (id, category, split, rgb, scene, component)
    path tuples; missing label maps written as '-'. Paths should be relative
    to the manifest's directory."""
    lines = []
    for rec in records:
        fields = [str(f) if f else "-" for f in rec]
        if len(fields) != 6:
            raise DataError(f"manifest record needs 6 fields, got {len(fields)}")
        lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path) -> list:
    """Read a manifest and its referenced PNGs into Samples."""
    path = Path(path)
    samples = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise DataError(f"{path}:{lineno}: expected 6 tab-separated fields")
        sid, category, split, rgb_rel, scene_rel, cpnt_rel = fields
        if split not in ("train", "test", "-"):
            raise DataError(f"{path}:{lineno}: bad split {split!r}")
        sample = Sample(
            id=sid,
            category=category,
            split="" if split == "-" else split,
            rgb=load_png_rgb(path.parent / rgb_rel),
            scene=None if scene_rel == "-" else load_png_label(path.parent / scene_rel),
            component=None if cpnt_rel == "-" else load_png_label(path.parent / cpnt_rel),
        )
        validate_sample(sample)
        samples.append(sample)
    return samples


# ---------------------------------------------------------------------------
# resizing and remapping


def resize_longer_side(sample: Sample, target: int = RESIZE_TARGET) -> Sample:
    """Scale so the longer side equals target; aspect ratio preserved.

    RGB resizes bilinearly, label maps nearest."""
    h, w = sample.rgb.shape[:2]
    longer = max(h, w)
    if longer == target:
        return sample
    s = target / longer
    out_hw = (max(1, round(h * s)), max(1, round(w * s)))
    rgb = np.clip(np.rint(resize_bilinear(sample.rgb.astype(np.float32), out_hw)),
                  0, 255).astype(np.uint8)
    scene = None if sample.scene is None else resize_nearest(sample.scene, out_hw)
    component = None if sample.component is None else resize_nearest(sample.component, out_hw)
    return Sample(id=sample.id, category=sample.category, split=sample.split,
                  rgb=rgb, scene=scene, component=component)


def remap_labels(label_map: np.ndarray, mapping: dict) -> np.ndarray:
    """Apply a source-index -> target-index table; unmapped values IGNORE."""
    lut = np.full(256, IGNORE, dtype=np.uint8)
    for src, dst in mapping.items():
        lut[int(src)] = int(dst)
    return lut[label_map]


def load_remap_table(path) -> dict:
    """Parse 'source_tag<TAB>target_index' lines into {tag: index}."""
    table = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.rstrip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'tag<TAB>index'")
        table[parts[0]] = int(parts[1])
    return table


def resolve_remap(tag_table: dict, legend: Optional[dict] = None) -> dict:
    """Turn a {tag: target_index} table into {source_index: target_index}.

    legend maps the source dataset's own indices to tags; without one, the
    tags themselves must be integer literals."""
    mapping = {}
    if legend is None:
        for tag, dst in tag_table.items():
            try:
                mapping[int(tag)] = dst
            except ValueError:
                raise DataError(f"tag {tag!r} is not an index; provide a legend")
        return mapping
    for src, tag in legend.items():
        if tag in tag_table:
            mapping[int(src)] = tag_table[tag]
    return mapping


# ---------------------------------------------------------------------------
# blocks and mini-batches


def make_blocks(samples, category: str, rng: np.random.Generator):
    """Shuffle, chunk into blocks of <=250, and split train/test.

    General/urban blocks split 90/10 by position after the shuffle; bridge
    samples keep their manifest-declared split. Returns
    (train_blocks, test_blocks)."""
    group = [s for s in samples if s.category == category]
    train_blocks, test_blocks = [], []
    if category == "bridge":
        train = [s for s in group if s.split == "train"]
        test = [s for s in group if s.split == "test"]
        undeclared = len(group) - len(train) - len(test)
        if undeclared:
            raise DataError(f"{undeclared} bridge samples lack a declared split")
        order = rng.permutation(len(train))
        train = [train[i] for i in order]
        for i in range(0, len(train), BLOCK_CAPACITY):
            train_blocks.append(DataBlock(train[i:i + BLOCK_CAPACITY], category, "train"))
        for i in range(0, len(test), BLOCK_CAPACITY):
            test_blocks.append(DataBlock(test[i:i + BLOCK_CAPACITY], category, "test"))
        return train_blocks, test_blocks

    order = rng.permutation(len(group))
    group = [group[i] for i in order]
    for i in range(0, len(group), BLOCK_CAPACITY):
        chunk = group[i:i + BLOCK_CAPACITY]
        n_train = (len(chunk) * 9) // 10
        if n_train:
            train_blocks.append(DataBlock(chunk[:n_train], category, "train"))
        if len(chunk) > n_train:
            test_blocks.append(DataBlock(chunk[n_train:], category, "test"))
    return train_blocks, test_blocks


def scene_cycle_batches(general_blocks, urban_blocks, bridge_blocks,
                        rng: np.random.Generator):
    """Mini-batches for one scene-training cycle.

    One block is loaded per category; batches draw 4/4/2 samples without
    replacement until some loaded block cannot fill its quota."""
    pools = []
    for blocks, count in ((general_blocks, 4), (urban_blocks, 4), (bridge_blocks, 2)):
        if not blocks:
            raise DataError("scene training needs blocks in every category")
        block = blocks[int(rng.integers(len(blocks)))]
        order = rng.permutation(len(block.samples))
        pools.append(([block.samples[i] for i in order], count))
    batches = []
    cursor = [0, 0, 0]
    while all(cursor[i] + count <= len(pool) for i, (pool, count) in enumerate(pools)):
        batch = []
        for i, (pool, count) in enumerate(pools):
            batch.extend(pool[cursor[i]:cursor[i] + count])
            cursor[i] += count
        batches.append(batch)
    return batches


def component_cycle_batches(blocks, rng: np.random.Generator, batch_size: int = 10):
    """Mini-batches for one component-training cycle: straight draws of
    batch_size from the pooled block contents."""
    pool = [s for b in blocks for s in b.samples]
    if not pool:
        raise DataError("component training needs at least one non-empty block")
    order = rng.permutation(len(pool))
    pool = [pool[i] for i in order]
    return [pool[i:i + batch_size]
            for i in range(0, len(pool) - batch_size + 1, batch_size)]


def class_histograms(samples, which: str, n_classes: int) -> np.ndarray:
    """Per-image labeled-pixel counts, [n_images, K], for class weighting."""
    hists = np.zeros((len(samples), n_classes), dtype=np.int64)
    for i, s in enumerate(samples):
        m = s.scene if which == "scene" else s.component
        if m is None:
            continue
        labeled = m[m != IGNORE]
        hists[i] = np.bincount(labeled, minlength=n_classes)[:n_classes]
    return hists
