"""Command-line front end.

Commands: synth, train-scene, train-component, infer, eval, fp-test,
params, grad-check. Every command reads a flat key=value config file
(--config) overlaid by --seed/--out/--mode/--arch and generic --set
key=value overrides, validates it fully before touching the filesystem,
and echoes the resolved config into the output directory so runs are
reproducible from that file alone.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as C
from . import data as D
from . import gradcheck, metrics, nn, pipeline, report, zoo
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (CheckpointError, ConfigError, DataError, MscnError,
                     ShapeError, SpecError)
from .labels import (BRIDGES, COMPONENT_CLASSES, COMPONENT_PALETTE,
                     SCENE_CLASSES, SCENE_PALETTE, render_labelmap)
from .synth import generate_synthetic_scene

EXIT_CODES = {ConfigError: 2, DataError: 3, CheckpointError: 4,
              ShapeError: 5, SpecError: 5}


def _flag_overrides(args, schema) -> dict:
    out = C.parse_overrides(args.set)
    for flag in ("seed", "out", "mode", "arch"):
        value = getattr(args, flag, None)
        if value is not None:
            if flag not in schema:
                raise ConfigError(f"--{flag} does not apply to this command")
            out[flag] = str(value)
    return out


def _resolve(args, schema) -> dict:
    return C.resolve(schema, args.config, _flag_overrides(args, schema))


def _prepare_out(cfg, schema) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(C.echo(schema, cfg), encoding="utf-8")
    return out


def _load_samples(cfg, resize_key="resize_longer"):
    manifest = C.require_file(cfg, "manifest")
    samples = D.load_manifest(manifest)
    target = cfg.get(resize_key, 0)
    if target:
        samples = [D.resize_longer_side(s, target) for s in samples]
    return samples


def _train_config(cfg, in_channels, n_classes) -> pipeline.TrainConfig:
    return pipeline.TrainConfig(
        arch=cfg["arch"], in_channels=in_channels, n_classes=n_classes,
        schedule=cfg["schedule"], batch_size=cfg["batch_size"],
        weight_decay=cfg["weight_decay"], dropout_keep=cfg["dropout_keep"],
        seed=cfg["seed"], balancing=cfg["balancing"], augment=cfg["augment"],
        crop_size=cfg["crop_size"], snapshot_every=cfg["snapshot_every"])


_TRAIN_KEYS = {
    "manifest": ("path", C.REQUIRED),
    "arch": ("str", "resnet23"),
    "seed": ("int", 0),
    "out": ("path", C.REQUIRED),
    "batch_size": ("int", 10),
    "weight_decay": ("float", None),
    "dropout_keep": ("float", None),
    "balancing": ("bool", True),
    "augment": ("bool", True),
    "crop_size": ("int", 180),
    "resize_longer": ("int", 320),
    "snapshot_every": ("int", 10),
}


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    schema = {
        "count": ("int", C.REQUIRED),
        "size": ("int", 96),
        "bridge_fraction": ("float", 0.3),
        "seed": ("int", 0),
        "out": ("path", C.REQUIRED),
    }
    cfg = _resolve(args, schema)
    if not 0.0 <= cfg["bridge_fraction"] <= 1.0 or cfg["count"] < 1:
        raise ConfigError("need count >= 1 and bridge_fraction in [0,1]")
    out = _prepare_out(cfg, schema)
    images = out / "images"
    images.mkdir(exist_ok=True)

    n_bridge = round(cfg["count"] * cfg["bridge_fraction"])
    records = []
    for i in range(cfg["count"]):
        bridged = i < n_bridge
        category = "bridge" if bridged else ("urban" if i % 2 else "general")
        sample = generate_synthetic_scene(cfg["seed"] * 1_000_003 + i,
                                          cfg["size"], bridge=bridged,
                                          category=category)
        D.save_png_rgb(images / f"img_{i:05d}.png", sample.rgb)
        D.save_png_label(images / f"scene_{i:05d}.png", sample.scene)
        D.save_png_label(images / f"cpnt_{i:05d}.png", sample.component)
        split = "-"
        if category == "bridge":
            split = "test" if i % 10 == 9 else "train"
        records.append((sample.id, category, split,
                        f"images/img_{i:05d}.png",
                        f"images/scene_{i:05d}.png",
                        f"images/cpnt_{i:05d}.png"))
    D.write_manifest(out / "manifest.tsv", records)
    print(out / "manifest.tsv")
    return 0


def cmd_train_scene(args) -> int:
    schema = dict(_TRAIN_KEYS)
    schema["schedule"] = ("schedule", pipeline.SCENE_SCHEDULE)
    cfg = _resolve(args, schema)
    samples = _load_samples(cfg)
    out = _prepare_out(cfg, schema)
    blocks = pipeline.build_blocks(samples, cfg["seed"])
    config = _train_config(cfg, in_channels=3, n_classes=len(SCENE_CLASSES))
    pipeline.train_scene(config, blocks["train"], out_dir=out)
    print(out / "checkpoints" / "final.mscn")
    return 0


def _component_train_blocks(blocks_train: dict):
    """Pool every train sample that carries a component map into blocks."""
    samples = [s for cat in D.CATEGORIES for b in blocks_train[cat]
               for s in b.samples if s.component is not None]
    if not samples:
        raise DataError("no training samples carry component label maps")
    return [D.DataBlock(samples[i:i + D.BLOCK_CAPACITY], "component", "train")
            for i in range(0, len(samples), D.BLOCK_CAPACITY)]


def cmd_train_component(args) -> int:
    schema = dict(_TRAIN_KEYS)
    schema["schedule"] = ("schedule", pipeline.COMPONENT_SCHEDULE)
    schema["mode"] = ("str", "naive")
    schema["scene_checkpoint"] = ("path", None)
    cfg = _resolve(args, schema)
    mode = {"naive": "naive", "scene": "scene_aware",
            "scene_aware": "scene_aware"}.get(cfg["mode"])
    if mode is None:
        raise ConfigError(f"mode must be naive or scene, got {cfg['mode']!r}")
    scene_ckpt = None
    if mode == "scene_aware":
        if not cfg["scene_checkpoint"]:
            raise ConfigError("scene mode requires scene_checkpoint")
        scene_ckpt = load_checkpoint(C.require_file(cfg, "scene_checkpoint"))
        if scene_ckpt.spec.n_classes != len(SCENE_CLASSES):
            raise ConfigError("scene_checkpoint is not a 10-class scene model")
    samples = _load_samples(cfg)
    out = _prepare_out(cfg, schema)
    blocks = pipeline.build_blocks(samples, cfg["seed"])
    config = _train_config(cfg, in_channels=12 if mode == "scene_aware" else 3,
                           n_classes=len(COMPONENT_CLASSES))
    pipeline.train_component(config, _component_train_blocks(blocks["train"]),
                             mode, scene_checkpoint=scene_ckpt, out_dir=out)
    print(out / "checkpoints" / "final.mscn")
    return 0


def _infer_one(cfg, rgb):
    ckpt = load_checkpoint(C.require_file(cfg, "checkpoint"))
    if cfg["mode"] == "scene":
        labels, probs = pipeline.infer_scene(ckpt, rgb)
        palette = SCENE_PALETTE
    else:
        scene_ckpt = None
        if ckpt.spec.in_channels == 12:
            if not cfg.get("scene_checkpoint"):
                raise ConfigError("this checkpoint needs scene_checkpoint")
            scene_ckpt = load_checkpoint(C.require_file(cfg, "scene_checkpoint"))
        labels, probs = pipeline.infer_component(ckpt, rgb, scene_ckpt)
        palette = COMPONENT_PALETTE
    return labels, probs, palette


def cmd_infer(args) -> int:
    schema = {
        "checkpoint": ("path", C.REQUIRED),
        "image": ("path", C.REQUIRED),
        "out": ("path", C.REQUIRED),
        "mode": ("str", "scene"),
        "scene_checkpoint": ("path", None),
        "resize_longer": ("int", 320),
    }
    cfg = _resolve(args, schema)
    if cfg["mode"] not in ("scene", "naive", "scene_aware"):
        raise ConfigError(f"bad mode {cfg['mode']!r}")
    rgb = D.load_png_rgb(C.require_file(cfg, "image"))
    if cfg["resize_longer"]:
        sample = D.Sample(id="input", category="general", rgb=rgb)
        rgb = D.resize_longer_side(sample, cfg["resize_longer"]).rgb
    out = _prepare_out(cfg, schema)
    renders = out / "renders"
    renders.mkdir(exist_ok=True)
    labels, _, palette = _infer_one(cfg, rgb)
    D.save_png_label(renders / "labels.png", labels)
    D.save_png_rgb(renders / "labels_rgb.png", render_labelmap(labels, palette))
    print(renders / "labels_rgb.png")
    return 0


def _test_samples(cfg, samples):
    blocks = pipeline.build_blocks(samples, cfg["seed"])
    side = blocks["test" if cfg.get("split", "test") == "test" else "train"]
    return [s for cat in D.CATEGORIES for b in side[cat] for s in b.samples]


def cmd_eval(args) -> int:
    schema = {
        "checkpoint": ("path", C.REQUIRED),
        "manifest": ("path", C.REQUIRED),
        "out": ("path", C.REQUIRED),
        "mode": ("str", "scene"),
        "scene_checkpoint": ("path", None),
        "seed": ("int", 0),
        "split": ("str", "test"),
        "resize_longer": ("int", 320),
    }
    cfg = _resolve(args, schema)
    if cfg["mode"] not in ("scene", "naive", "scene_aware"):
        raise ConfigError(f"bad mode {cfg['mode']!r}")
    samples = _load_samples(cfg)
    out = _prepare_out(cfg, schema)
    scene_mode = cfg["mode"] == "scene"
    names = SCENE_CLASSES if scene_mode else COMPONENT_CLASSES
    cm = metrics.ConfusionMatrix(len(names))
    for s in _test_samples(cfg, samples):
        truth = s.scene if scene_mode else s.component
        if truth is None:
            continue
        pred, _, _ = _infer_one(cfg, s.rgb)
        cm.accumulate(truth, pred)
    paths = report.write_confusion_report(cm, names, out / "reports")
    acc = cm.accuracy
    print(f"pixel accuracy: {100 * acc:.2f}%" if np.isfinite(acc)
          else "pixel accuracy: undefined (no labeled pixels)")
    print(paths["text"])
    return 0


def cmd_fp_test(args) -> int:
    schema = {
        "naive_checkpoint": ("path", C.REQUIRED),
        "component_checkpoint": ("path", C.REQUIRED),
        "scene_checkpoint": ("path", C.REQUIRED),
        "manifest": ("path", C.REQUIRED),
        "out": ("path", C.REQUIRED),
        "seed": ("int", 0),
        "resize_longer": ("int", 320),
    }
    cfg = _resolve(args, schema)
    naive = load_checkpoint(C.require_file(cfg, "naive_checkpoint"))
    aware = load_checkpoint(C.require_file(cfg, "component_checkpoint"))
    scene = load_checkpoint(C.require_file(cfg, "scene_checkpoint"))
    samples = _load_samples(cfg)
    out = _prepare_out(cfg, schema)
    eval_set = [s for s in _test_samples(cfg, samples)
                if s.scene is not None and not (s.scene == BRIDGES).any()]
    if not eval_set:
        raise DataError("no bridge-free test images with scene truth")
    preds_naive, preds_aware, truths = [], [], []
    for s in eval_set:
        preds_naive.append(pipeline.infer_component(naive, s.rgb)[0])
        preds_aware.append(pipeline.infer_component(aware, s.rgb, scene)[0])
        truths.append(s.scene)
    rates_aware, totals = metrics.false_positive_report(preds_aware, truths)
    rates_naive, _ = metrics.false_positive_report(preds_naive, truths)
    paths = report.write_fp_report(
        {"with_scene": rates_aware, "without_scene": rates_naive},
        totals, out / "reports")
    print(f"mean FP with scene:    {100 * np.nanmean(rates_aware):.2f}%")
    print(f"mean FP without scene: {100 * np.nanmean(rates_naive):.2f}%")
    print(paths["text"])
    return 0


def cmd_params(args) -> int:
    schema = {
        "arch": ("str", C.REQUIRED),
        "in_channels": ("int", 3),
        "classes": ("int", 10),
    }
    cfg = _resolve(args, schema)
    spec = zoo.build(cfg["arch"], cfg["in_channels"], cfg["classes"])
    print(nn.count_parameters(spec))
    if cfg["arch"] == "resnet45":
        print(f"note: the published count for this architecture is "
              f"{zoo.RESNET45_SINGLE_SCALE_COUNT}, which matches a "
              f"single-scale FCL0 input of 64 channels; with the uniform "
              f"three-scale concatenation used here the count is "
              f"{nn.count_parameters(spec)}.")
    return 0


def cmd_grad_check(args) -> int:
    schema = {
        "seed": ("int", 0),
        "n_seeds": ("int", 20),
        "end_to_end_seeds": ("int", 3),
    }
    cfg = _resolve(args, schema)
    results, ok = gradcheck.run_suite(n_seeds=cfg["n_seeds"],
                                      end_to_end_seeds=cfg["end_to_end_seeds"],
                                      seed0=cfg["seed"])
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<24} "
              f"max_rel_err={r.max_rel_err:.3e}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mscn",
        description="Multi-scale CNN engine for pixel-wise scene and "
                    "bridge-component labeling.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "synth": (cmd_synth, "generate a synthetic labeled dataset"),
        "train-scene": (cmd_train_scene, "train the 10-class scene classifier"),
        "train-component": (cmd_train_component,
                            "train the 5-class component classifier"),
        "infer": (cmd_infer, "label one image with a trained checkpoint"),
        "eval": (cmd_eval, "confusion-matrix evaluation over a manifest"),
        "fp-test": (cmd_fp_test, "false-positive comparison on bridge-free images"),
        "params": (cmd_params, "print the weight-parameter count of an architecture"),
        "grad-check": (cmd_grad_check, "run the finite-difference gradient suite"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="override the seed key")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--mode", help="override the mode key")
        p.add_argument("--arch", help="override the architecture key")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MscnError as e:
        print(f"error[{type(e).__name__}]: {e}", file=sys.stderr)
        for klass, code in EXIT_CODES.items():
            if isinstance(e, klass):
                return code
        return 1


if __name__ == "__main__":
    sys.exit(main())
