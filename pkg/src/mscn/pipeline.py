"""Training, inference, and the two component-classifier configurations.

The scene classifier is a 10-class multi-scale network. The component
classifier comes in two flavours: naive (3 input channels, straight from
RGB) and scene-aware (12 input channels: RGB plus the first nine scene
softmax probabilities scaled to [0,255], computed by a frozen scene
checkpoint on the already-augmented image so the probability channels stay
pixel-aligned). All input channels are mapped to [-1,1] before the first
convolution.

Every random decision derives from (seed, purpose tag, cycle, ...) so runs
are reproducible bit-for-bit and sample augmentation streams are
independent of batching order.
"""

from __future__ import annotations

import hashlib
import zlib
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import data as D
from . import multiscale, nn, optim, zoo
from .augment import AugmentPolicy, augment, policy_for_category
from .checkpoint import ModelCheckpoint, save_checkpoint
from .errors import ConfigError, DataError
from .labels import IGNORE

SCENE_SCHEDULE = ((50, 1e-4), (10, 1e-5), (5, 1e-6))
COMPONENT_SCHEDULE = ((500, 1e-4), (180, 1e-5), (20, 1e-6))

SCENE_CHANNELS_KEPT = 9     # the trailing class is implied by the others


@dataclass
class TrainConfig:
    arch: str = "resnet23"
    in_channels: int = 3
    n_classes: int = 10
    schedule: tuple = SCENE_SCHEDULE
    batch_size: int = 10
    weight_decay: Optional[float] = None   # None: architecture default
    dropout_keep: Optional[float] = None   # None: architecture default
    seed: int = 0
    balancing: bool = True
    augment: bool = True
    crop_size: int = 180
    snapshot_every: int = 10


def rng_for(seed: int, *tags) -> np.random.Generator:
    """Independent generator for (seed, tags); strings hash via crc32."""
    words = [seed & 0xFFFFFFFF]
    for t in tags:
        if isinstance(t, (int, np.integer)):
            words.append(int(t) & 0xFFFFFFFF)
        else:
            words.append(zlib.crc32(str(t).encode("utf-8")))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


def total_cycles(schedule) -> int:
    return sum(int(n) for n, _ in schedule)


def lr_for_cycle(schedule, cycle: int) -> float:
    """Piecewise-constant learning rate; cycle is 0-based."""
    c = cycle
    for count, lr in schedule:
        if c < count:
            return float(lr)
        c -= count
    raise ConfigError(f"cycle {cycle} outside the {total_cycles(schedule)}-cycle schedule")


def schedule_boundaries(schedule):
    bounds, acc = [], 0
    for count, _ in schedule:
        acc += int(count)
        bounds.append(acc)
    return bounds


def resolve_spec(config: TrainConfig) -> nn.ArchitectureSpec:
    spec = zoo.build(config.arch, config.in_channels, config.n_classes)
    if config.weight_decay is not None:
        spec = dc_replace(spec, weight_decay=float(config.weight_decay))
    if config.dropout_keep is not None:
        head = (dc_replace(spec.head[0], dropout_keep=float(config.dropout_keep)),) \
            + tuple(spec.head[1:])
        spec = dc_replace(spec, head=head)
    if config.batch_size != spec.batch_size:
        spec = dc_replace(spec, batch_size=int(config.batch_size))
    return spec


def normalize(x: np.ndarray) -> np.ndarray:
    """Map [0,255] channel values to [-1,1] float32."""
    return (x.astype(np.float32) - 127.5) / 127.5


def stack_scene_channels(rgb: np.ndarray, scene_probs: np.ndarray) -> np.ndarray:
    """12-channel input: RGB plus the first nine scene probabilities x255."""
    if scene_probs.shape[-1] < SCENE_CHANNELS_KEPT + 1:
        raise DataError(f"need 10 scene channels, got {scene_probs.shape[-1]}")
    rgbf = rgb.astype(np.float32)
    probs = 255.0 * scene_probs[..., :SCENE_CHANNELS_KEPT].astype(np.float32)
    return np.concatenate([rgbf, probs], axis=-1)


def config_hash(config: TrainConfig, kind: str) -> str:
    text = f"{kind}|{sorted(vars(config).items())!r}"
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def build_blocks(samples, seed: int) -> dict:
    """Deterministic block construction for every category.

    Returns {"train": {category: [blocks]}, "test": {category: [blocks]}};
    the general/urban 90/10 split depends only on (seed, category)."""
    out = {"train": {}, "test": {}}
    for category in D.CATEGORIES:
        train, test = D.make_blocks(samples, category, rng_for(seed, "blocks", category))
        out["train"][category] = train
        out["test"][category] = test
    return out


class _TrainLog:
    """Per-batch training log: cycle, batch, lr, loss (tab-separated)."""

    def __init__(self, out_dir: Optional[Path]):
        self.rows = []
        self._fh = None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            self._fh = open(out_dir / "train_log.tsv", "w", encoding="utf-8")

    def add(self, cycle, batch, lr, loss):
        self.rows.append((cycle, batch, lr, float(loss)))
        if self._fh:
            self._fh.write(f"{cycle}\t{batch}\t{lr:.3g}\t{loss:.6f}\n")
            self._fh.flush()

    def close(self):
        if self._fh:
            self._fh.close()


def _augment_batch(samples, config, cycle, use_component_labels):
    """Augment a batch and stack it into (rgb uint8 [B,H,W,3], labels [B,H,W])."""
    rgbs, labels = [], []
    for s in samples:
        if config.augment:
            policy = policy_for_category(s.category, config.crop_size)
            s = augment(s, policy, rng_for(config.seed, "augment", cycle,
                                           zlib.crc32(s.id.encode())))
        m = s.component if use_component_labels else s.scene
        if m is None or not (m != IGNORE).any():
            continue   # nothing labeled survives: skip the sample
        rgbs.append(s.rgb)
        labels.append(m)
    if not rgbs:
        return None, None
    shapes = {r.shape for r in rgbs}
    if len(shapes) > 1:
        raise DataError(f"cannot batch mixed image shapes {sorted(shapes)}; "
                        "enable augmentation or feed uniform sizes")
    return np.stack(rgbs), np.stack(labels)


def _class_weights(samples, which, n_classes, balancing):
    if not balancing:
        return np.ones(n_classes)
    hists = D.class_histograms(samples, which, n_classes)
    return optim.median_frequency_weights(hists)


def _snapshot(out_dir, ckpt, cycle):
    if out_dir is not None:
        save_checkpoint(ckpt, Path(out_dir) / "checkpoints" / f"cycle_{cycle:04d}.mscn")


def _train_loop(config, spec, kind, cycle_batches_fn, batch_builder,
                class_weights, out_dir, stop_check=None):
    nn.validate_spec(spec)
    out_dir = Path(out_dir) if out_dir is not None else None
    params = nn.init_parameters(spec, rng_for(config.seed, "init"))
    adam = optim.init_adam(params)
    weight_arrays = [e["w"] for e in params.values() if "w" in e]
    wd = spec.weight_decay
    log = _TrainLog(out_dir)
    boundaries = set(schedule_boundaries(config.schedule))
    n_cycles = total_cycles(config.schedule)
    cycles_done = 0

    def make_ckpt():
        return ModelCheckpoint(spec=spec, params=params, provenance={
            "kind": kind,
            "config_hash": config_hash(config, kind),
            "cycles_completed": cycles_done,
        })

    try:
        for cycle in range(n_cycles):
            lr = lr_for_cycle(config.schedule, cycle)
            for bi, samples in enumerate(cycle_batches_fn(cycle)):
                x, labels = batch_builder(samples, cycle)
                if x is None:
                    continue
                rng_drop = rng_for(config.seed, "dropout", cycle, bi)
                logits, probs, caches = multiscale.forward(
                    spec, params, x, "train", rng_drop)
                loss, grad_logits = optim.weighted_cross_entropy(
                    probs, labels, class_weights,
                    weight_decay=wd, weight_arrays=weight_arrays)
                grads = multiscale.backward(spec, params, caches, grad_logits)
                optim.adam_step(params, grads, adam, lr, weight_decay=wd)
                log.add(cycle, bi, lr, loss)
            cycles_done = cycle + 1
            if cycles_done % config.snapshot_every == 0 or cycles_done in boundaries:
                _snapshot(out_dir, make_ckpt(), cycles_done)
            if stop_check is not None and stop_check(cycles_done, params):
                break
    finally:
        log.close()
    ckpt = make_ckpt()
    if out_dir is not None:
        save_checkpoint(ckpt, out_dir / "checkpoints" / "final.mscn")
    return ckpt


def train_scene(config: TrainConfig, blocks: dict, out_dir=None, spec=None,
                stop_check=None) -> ModelCheckpoint:
    """Train the 10-class scene classifier on general/urban/bridge blocks.

    blocks: {"general": [...], "urban": [...], "bridge": [...]} of train
    DataBlocks. Each cycle loads one block per category and draws 4/4/2
    mini-batches until one loaded block is exhausted."""
    if not all(blocks.get(c) for c in D.CATEGORIES):
        raise ConfigError("train_scene needs non-empty general, urban, and bridge blocks")
    spec = resolve_spec(config) if spec is None else spec
    all_samples = [s for c in D.CATEGORIES for b in blocks[c] for s in b.samples]

    def cycle_batches(cycle):
        rng = rng_for(config.seed, "cycle", cycle)
        return D.scene_cycle_batches(blocks["general"], blocks["urban"],
                                     blocks["bridge"], rng)

    def batch_builder(samples, cycle):
        rgb, labels = _augment_batch(samples, config, cycle, False)
        if rgb is None:
            return None, None
        return normalize(rgb), labels

    class_weights = _class_weights(all_samples, "scene", spec.n_classes,
                                   config.balancing)
    return _train_loop(config, spec, "scene", cycle_batches, batch_builder,
                       class_weights, out_dir, stop_check)


def train_component(config: TrainConfig, blocks, mode: str,
                    scene_checkpoint: Optional[ModelCheckpoint] = None,
                    out_dir=None, spec=None, stop_check=None) -> ModelCheckpoint:
    """Train the 5-class component classifier.

    mode "naive" feeds RGB directly; mode "scene_aware" runs the frozen
    scene checkpoint in eval mode on each augmented image and stacks the
    probability channels (the scene parameters receive no gradient).
    blocks: list of component train DataBlocks."""
    if mode not in ("naive", "scene_aware"):
        raise ConfigError(f"mode must be 'naive' or 'scene_aware', got {mode!r}")
    if mode == "scene_aware" and scene_checkpoint is None:
        raise ConfigError("scene_aware training requires a scene checkpoint")
    expected_channels = 12 if mode == "scene_aware" else 3
    spec = resolve_spec(config) if spec is None else spec
    if spec.in_channels != expected_channels:
        raise ConfigError(f"{mode} component training needs in_channels="
                          f"{expected_channels}, got {spec.in_channels}")
    if not blocks:
        raise ConfigError("train_component needs at least one block")
    all_samples = [s for b in blocks for s in b.samples]

    def cycle_batches(cycle):
        rng = rng_for(config.seed, "cycle", cycle)
        return D.component_cycle_batches(blocks, rng, config.batch_size)

    def batch_builder(samples, cycle):
        rgb, labels = _augment_batch(samples, config, cycle, True)
        if rgb is None:
            return None, None
        if mode == "naive":
            return normalize(rgb), labels
        _, scene_probs, _ = multiscale.forward(
            scene_checkpoint.spec, scene_checkpoint.params,
            normalize(rgb), "eval", None)
        return normalize(stack_scene_channels(rgb, scene_probs)), labels

    class_weights = _class_weights(all_samples, "component", spec.n_classes,
                                   config.balancing)
    kind = "component_naive" if mode == "naive" else "component_scene_aware"
    return _train_loop(config, spec, kind, cycle_batches, batch_builder,
                       class_weights, out_dir, stop_check)


# ---------------------------------------------------------------------------
# inference


def infer_scene(ckpt: ModelCheckpoint, rgb: np.ndarray):
    """Scene labels and softmax for one RGB image (uint8, resized upstream)."""
    _, probs, _ = multiscale.forward(ckpt.spec, ckpt.params, normalize(rgb),
                                     "eval", None)
    return probs.argmax(axis=-1).astype(np.uint8), probs


def infer_component(ckpt: ModelCheckpoint, rgb: np.ndarray,
                    scene_checkpoint: Optional[ModelCheckpoint] = None):
    """Component labels and softmax; chains scene inference for 12ch models."""
    if ckpt.spec.in_channels == 12:
        if scene_checkpoint is None:
            raise ConfigError("this component checkpoint needs a scene checkpoint")
        _, scene_probs = infer_scene(scene_checkpoint, rgb)
        x = normalize(stack_scene_channels(rgb, scene_probs))
    else:
        x = normalize(rgb)
    _, probs, _ = multiscale.forward(ckpt.spec, ckpt.params, x, "eval", None)
    return probs.argmax(axis=-1).astype(np.uint8), probs
