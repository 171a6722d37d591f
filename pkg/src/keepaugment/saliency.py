"""Vanilla-gradient saliency maps and their cheap approximations.

The saliency of pixel ``(i, j)`` is the largest absolute gradient of one
class logit with respect to the three (or one) channels of that pixel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import predict_labels
from .tensor import (
    ContractError,
    check_image,
    check_saliency,
    resize_bicubic,
    upscale_nearest,
)

logger = logging.getLogger(__name__)

VARIANTS = ("full", "low-resolution", "early-head", "max-logit", "external")
_ALIASES = {"low-res": "low-resolution", "lowres": "low-resolution", "early": "early-head"}


@dataclass(frozen=True)
class SaliencyStrategy:
    """How saliency maps are obtained.

    ``factor`` is the downscaling factor of the low-resolution variant and
    ``path`` the directory of precomputed maps for the external one.
    """

    variant: str = "full"
    factor: int = 2
    path: str | None = None

    def __post_init__(self):
        variant = _ALIASES.get(self.variant, self.variant)
        object.__setattr__(self, "variant", variant)
        if variant not in VARIANTS:
            raise ContractError(f"unknown saliency variant {self.variant!r}; expected one of {VARIANTS}")
        if self.factor < 1:
            raise ContractError(f"factor must be >= 1, got {self.factor}")

    @property
    def needs_net(self):
        return self.variant != "external"

    def to_dict(self):
        out = {"variant": self.variant}
        if self.variant == "low-resolution":
            out["factor"] = self.factor
        if self.variant == "external":
            out["path"] = self.path
        return out

    @classmethod
    def from_value(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            return cls(value)
        if isinstance(value, dict):
            unknown = set(value) - {"variant", "factor", "path"}
            if unknown:
                raise ContractError(f"unknown saliency keys: {sorted(unknown)}")
            return cls(**value)
        raise ContractError(f"cannot interpret saliency strategy {value!r}")


def _channel_max_abs(grad):
    return np.abs(grad).max(axis=-1)


def vanilla_saliency(net, image, label):
    """``max_c |d logit_label / d x[i, j, c]|`` for one image."""
    image = check_image(image)
    return _channel_max_abs(net.input_gradient(image, label)[0])


def batch_saliency(net, images, labels, head="main"):
    """Vectorised :func:`vanilla_saliency` (or early-head) over ``(N, H, W, C)``."""
    return _channel_max_abs(net.input_gradient(images, labels, head=head))


def maxlogit_saliency(net, image):
    """Saliency of the predicted class, for images without labels."""
    image = check_image(image)
    label = int(predict_labels(net.forward(image))[0])
    return vanilla_saliency(net, image, label)


def lowres_shape(height, width, factor=2):
    return math.ceil(height / factor), math.ceil(width / factor)


def lowres_saliency(net_lr, image, label, factor=2):
    """Saliency computed on a bicubic downscaled copy, mapped back by nearest."""
    image = check_image(image)
    h, w = image.shape[:2]
    lh, lw = lowres_shape(h, w, factor)
    small = resize_bicubic(image, lh, lw)
    logger.debug("low-resolution saliency computed at %dx%d", lh, lw)
    return upscale_nearest(vanilla_saliency(net_lr, small, label), h, w)


def earlyhead_saliency(net, image, label):
    """Saliency from the auxiliary head after the first block."""
    if not net.has_early_head:
        raise ContractError("early-head saliency requires a network with an early head")
    image = check_image(image)
    return _channel_max_abs(net.input_gradient(image, label, head="early")[0])


def load_external_saliency(directory, index, shape=None):
    """Read map ``<directory>/<index:06d>.kat`` (one channel, non-negative)."""
    from .io import read_raw

    path = Path(directory) / f"{index:06d}.kat"
    if not path.exists():
        raise ContractError(f"missing external saliency map for image {index}: {path}")
    data = read_raw(path)
    if data.shape[2] != 1:
        raise ContractError(f"{path}: saliency maps must have 1 channel, got {data.shape[2]}")
    return check_saliency(data[:, :, 0], shape)


def compute_saliency(strategy, image, label=None, net=None, net_lr=None, index=None):
    """Dispatch on ``strategy`` for a single image."""
    strategy = SaliencyStrategy.from_value(strategy)
    variant = strategy.variant
    if variant == "external":
        if index is None:
            raise ContractError("external saliency needs the image index")
        return load_external_saliency(strategy.path, index, np.shape(image))
    if variant == "max-logit":
        return maxlogit_saliency(net, image)
    if label is None:
        raise ContractError(f"saliency variant {variant!r} needs a label")
    if variant == "full":
        return vanilla_saliency(net, image, label)
    if variant == "early-head":
        return earlyhead_saliency(net, image, label)
    return lowres_saliency(net_lr if net_lr is not None else net, image, label, strategy.factor)
