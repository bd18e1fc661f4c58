"""Builders for the four named network architectures.

Layer wiring follows the published architecture table for each name:
shortcut connections link every second 3x3 conv back two layers (or to the
preceding pool at a channel-width change, where the narrower source is
zero-padded). All architectures use batch norm after each conv and after
FCL0, ReLU activations, and dropout keep 0.8 at FCL0.
"""

from __future__ import annotations

from .errors import SpecError
from .nn import ArchitectureSpec, conv_layer, fcl_layer, maxpool_layer, validate_spec

ARCH_NAMES = ("farabet", "vgg19_part", "resnet45", "resnet23")

FCL0_WIDTH = 1024
FCL0_KEEP = 0.8

# The published resnet45 weight count; it is only consistent with a
# single-scale FCL0 input (64 channels). Building it with the same
# three-scale concatenation as every other architecture gives 863536.
RESNET45_SINGLE_SCALE_COUNT = 732464


def _head(n_classes):
    return (
        fcl_layer("FCL0", FCL0_WIDTH, activation="relu", batch_norm=True,
                  dropout_keep=FCL0_KEEP),
        fcl_layer("FCL1", n_classes, activation="none"),
    )


def _residual_stage(start, count, width, first_source):
    """`count` 3x3 convs named Conv{start}..; even offsets take a shortcut
    reaching back two layers, the first one from `first_source`."""
    layers = []
    source = first_source
    for i in range(count):
        name = f"Conv{start + i}"
        if i % 2 == 1:
            layers.append(conv_layer(name, 3, width, shortcut=source))
            source = name
        else:
            layers.append(conv_layer(name, 3, width))
    return layers


def _farabet(in_channels, n_classes):
    shared = (
        conv_layer("Conv0", 7, 16),
        maxpool_layer("Maxpool0"),
        conv_layer("Conv1", 7, 64),
        maxpool_layer("Maxpool1"),
        conv_layer("Conv2", 7, 256),
    )
    return ArchitectureSpec(shared=shared, head=_head(n_classes),
                            in_channels=in_channels, n_classes=n_classes,
                            batch_size=10, weight_decay=0.0)


def _vgg19_part(in_channels, n_classes):
    shared = (
        conv_layer("Conv0", 3, 64),
        conv_layer("Conv1", 3, 64),
        maxpool_layer("Maxpool0"),
        conv_layer("Conv2", 3, 128),
        conv_layer("Conv3", 3, 128),
        maxpool_layer("Maxpool1"),
        conv_layer("Conv4", 3, 256),
        conv_layer("Conv5", 3, 256),
        conv_layer("Conv6", 3, 256),
        conv_layer("Conv7", 3, 256),
    )
    return ArchitectureSpec(shared=shared, head=_head(n_classes),
                            in_channels=in_channels, n_classes=n_classes,
                            batch_size=10, weight_decay=1e-4)


def _resnet45(in_channels, n_classes):
    shared = [conv_layer("Conv0", 7, 16)]
    shared += _residual_stage(1, 14, 16, "Conv0")
    shared.append(maxpool_layer("Maxpool0"))
    shared += _residual_stage(15, 14, 32, "Maxpool0")
    shared.append(maxpool_layer("Maxpool1"))
    shared += _residual_stage(29, 14, 64, "Maxpool1")
    return ArchitectureSpec(shared=tuple(shared), head=_head(n_classes),
                            in_channels=in_channels, n_classes=n_classes,
                            batch_size=10, weight_decay=1e-4)


def _resnet23(in_channels, n_classes):
    shared = [conv_layer("Conv0", 7, 64), maxpool_layer("Maxpool0")]
    shared += _residual_stage(1, 8, 64, "Maxpool0")
    shared.append(maxpool_layer("Maxpool1"))
    shared += _residual_stage(9, 12, 128, "Maxpool1")
    return ArchitectureSpec(shared=tuple(shared), head=_head(n_classes),
                            in_channels=in_channels, n_classes=n_classes,
                            batch_size=10, weight_decay=1e-4)


_BUILDERS = {
    "farabet": _farabet,
    "vgg19_part": _vgg19_part,
    "resnet45": _resnet45,
    "resnet23": _resnet23,
}


def build(name: str, in_channels: int, n_classes: int) -> ArchitectureSpec:
    """Build a named architecture for the given input channels and classes."""
    if name not in _BUILDERS:
        raise SpecError(f"unknown architecture {name!r}; expected one of {ARCH_NAMES}")
    spec = _BUILDERS[name](in_channels, n_classes)
    validate_spec(spec)
    return spec


def reduced(in_channels, n_classes, widths=(8, 16), fcl_width=32,
            filter_size=5, weight_decay=1e-4):
    """A shallow trunk (one conv + pool per width) for desk-scale experiments.

    Not part of the published architecture set; used by tests and demos where
    the full networks would be needlessly slow.
    """
    shared = []
    for i, w in enumerate(widths):
        shared.append(conv_layer(f"Conv{i}", filter_size if i == 0 else 3, w))
        shared.append(maxpool_layer(f"Maxpool{i}"))
    head = (
        fcl_layer("FCL0", fcl_width, activation="relu", batch_norm=True,
                  dropout_keep=FCL0_KEEP),
        fcl_layer("FCL1", n_classes, activation="none"),
    )
    spec = ArchitectureSpec(shared=tuple(shared), head=head,
                            in_channels=in_channels, n_classes=n_classes,
                            batch_size=10, weight_decay=weight_decay)
    validate_spec(spec)
    return spec
