"""Saliency-aware cutting and pasting, Keep-CutMix, and the baseline transforms.

Single-image functions accept ``return_info=True`` to also get a record of
the random choices (chosen rect, policy operations, mixing weight), which
is enough to reproduce the output from the input alone.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import MAX_MAGNITUDE, AugmentConfig
from .nn import predict_labels
from .regions import (
    candidate_scores,
    default_stride,
    quantile_threshold,
    sample_high_region,
    sample_low_region,
)
from .saliency import batch_saliency, load_external_saliency, lowres_shape
from .tensor import (
    ContractError,
    Rect,
    RngStream,
    as_generator,
    check_image,
    check_saliency,
    cut_random,
    cut_zero,
    paste_region,
    resize_bicubic,
    upscale_nearest,
)


@dataclass(frozen=True)
class MixedLabel:
    """Soft label as ``((class, weight), ...)`` with at most two entries."""

    entries: tuple

    def __post_init__(self):
        entries = tuple((int(c), float(w)) for c, w in self.entries)
        if not 1 <= len(entries) <= 2:
            raise ContractError(f"a mixed label has one or two entries, got {len(entries)}")
        if any(w <= 0 for _, w in entries):
            raise ContractError(f"label weights must be positive: {entries}")
        if abs(sum(w for _, w in entries) - 1.0) > 1e-6:
            raise ContractError(f"label weights must sum to 1: {entries}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def single(cls, label):
        return cls(((label, 1.0),))

    @classmethod
    def mix(cls, label_a, label_b, cut_fraction):
        """``(1 - cut_fraction)`` on ``label_a`` and ``cut_fraction`` on ``label_b``."""
        if label_a == label_b or cut_fraction == 0.0:
            return cls.single(label_a)
        if cut_fraction == 1.0:
            return cls.single(label_b)
        return cls(((label_a, 1.0 - cut_fraction), (label_b, cut_fraction)))

    def to_list(self):
        return [[c, w] for c, w in self.entries]

    def to_vector(self, n_classes):
        vec = np.zeros(n_classes)
        for c, w in self.entries:
            vec[c] += w
        return vec


# -- image-level policy -----------------------------------------------------


def _op_param(name, magnitude, gen, shape):
    m = magnitude
    sign = 1 if gen.random() < 0.5 else -1
    if name == "rotate":
        return float(sign * m)
    if name == "translate":
        axis = int(gen.integers(2))
        d = sign * ((m * shape[1 - axis]) // (3 * MAX_MAGNITUDE))
        return [d, 0] if axis == 0 else [0, d]
    if name == "solarize":
        return 1.0 - m / MAX_MAGNITUDE
    if name == "posterize":
        return 8 - (m * 6) // MAX_MAGNITUDE
    if name in ("brightness", "contrast"):
        return 1.0 + sign * m / MAX_MAGNITUDE
    return None


def sample_policy_ops(policy, rng, shape):
    """Draw ``policy.n_ops`` operations with their concrete parameters."""
    gen = as_generator(rng)
    ops = []
    for _ in range(policy.n_ops):
        name = policy.ops[int(gen.integers(len(policy.ops)))]
        ops.append([name, _op_param(name, policy.magnitude, gen, shape)])
    return ops


def _translate(image, dy, dx):
    out = np.zeros_like(image)
    h, w = image.shape[:2]
    src_r = slice(max(0, -dy), min(h, h - dy))
    dst_r = slice(max(0, dy), min(h, h + dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_c = slice(max(0, dx), min(w, w + dx))
    out[dst_r, dst_c] = image[src_r, src_c]
    return out


def apply_op(image, name, param):
    """Apply one named operation; values are clamped to [0, 1]."""
    if name == "identity":
        return image.copy()
    if name == "horizontal-flip":
        return image[:, ::-1].copy()
    if name == "rotate":
        if param == 0:
            return image.copy()
        out = ndimage.rotate(image, param, axes=(1, 0), reshape=False, order=1, mode="constant")
    elif name == "translate":
        out = _translate(image, int(param[0]), int(param[1]))
    elif name == "solarize":
        out = np.where(image >= param, 1.0 - image, image)
    elif name == "posterize":
        levels = np.floor(image * 255.0 + 0.5).astype(np.uint8)
        shift = 8 - int(param)
        out = ((levels >> shift) << shift).astype(np.float64) / 255.0
    elif name == "invert":
        out = 1.0 - image
    elif name == "brightness":
        out = image * param
    elif name == "contrast":
        mean = image.mean()
        out = (image - mean) * param + mean
    else:
        raise ContractError(f"unknown policy operation {name!r}")
    return np.clip(out, 0.0, 1.0)


def apply_ops(image, ops):
    image = check_image(image)
    for name, param in ops:
        image = apply_op(image, name, param)
    return image


def apply_policy(image, policy, rng, return_info=False):
    """Apply ``policy.n_ops`` randomly drawn operations in sequence."""
    image = check_image(image)
    ops = sample_policy_ops(policy, rng, image.shape)
    out = apply_ops(image, ops)
    return (out, {"ops": ops}) if return_info else out


# -- region-level baselines ---------------------------------------------------


def random_rect(shape, height, width, rng):
    """Uniformly placed contained rect."""
    H, W = shape[:2]
    if height > H or width > W:
        raise ContractError(f"region {height}x{width} larger than image {H}x{W}")
    gen = as_generator(rng)
    return Rect(int(gen.integers(H - height + 1)), int(gen.integers(W - width + 1)), height, width)


def plain_cutout(image, length, rng, return_info=False):
    """Cutout with a uniformly placed, fully contained ``length x length`` square."""
    image = check_image(image)
    gen = as_generator(rng)
    rect = random_rect(image.shape, length, length, gen)
    out = cut_zero(image, rect)
    return (out, {"rect": rect.to_list()}) if return_info else out


def plain_erase(image, length, rng, return_info=False):
    """Random erasing: like :func:`plain_cutout` but filled with uniform noise."""
    image = check_image(image)
    gen = as_generator(rng)
    rect = random_rect(image.shape, length, length, gen)
    out = cut_random(image, rect, gen)
    return (out, {"rect": rect.to_list()}) if return_info else out


# -- saliency-guided operations -------------------------------------------------


def _scores(saliency, image_shape, cfg):
    saliency = check_saliency(saliency, image_shape)
    h, w = cfg.region
    stride = cfg.stride or default_stride(*image_shape[:2])
    scores = candidate_scores(saliency, h, w, stride)
    quantile_threshold(scores, cfg.tau)
    return scores


def keep_cutout(image, saliency, cfg, rng, return_info=False, erase=None):
    """Cut a region whose importance is at most the tau-quantile.

    Zeros the region, or fills it with noise when ``erase`` is true
    (default: ``cfg.mode == "keep-erase"``).
    """
    image = check_image(image)
    gen = as_generator(rng)
    rect = sample_low_region(_scores(saliency, image.shape, cfg), gen)
    if erase is None:
        erase = cfg.mode == "keep-erase"
    out = cut_random(image, rect, gen) if erase else cut_zero(image, rect)
    return (out, {"rect": rect.to_list()}) if return_info else out


def keep_paste(image, saliency, cfg, rng, return_info=False):
    """Transform the whole image, then paste back an important region of the original."""
    image = check_image(image)
    gen = as_generator(rng)
    transformed, info = apply_policy(image, cfg.policy, gen, return_info=True)
    rect = sample_high_region(_scores(saliency, image.shape, cfg), gen)
    out = paste_region(image, transformed, rect)
    return (out, {"rect": rect.to_list(), "ops": info["ops"]}) if return_info else out


def keep_cutmix(image_a, label_a, image_b, label_b, saliency_a, cfg, rng, return_info=False):
    """Replace an unimportant region of ``image_a`` by the same region of ``image_b``.

    Returns ``(image, MixedLabel)``; the weight of ``label_a`` is the
    fraction of ``image_a`` left intact.
    """
    image_a = check_image(image_a, name="image_a")
    image_b = check_image(image_b, name="image_b")
    if image_a.shape != image_b.shape:
        raise ContractError(f"shape mismatch: {image_a.shape} vs {image_b.shape}")
    gen = as_generator(rng)
    rect = sample_low_region(_scores(saliency_a, image_a.shape, cfg), gen)
    out = paste_region(image_b, image_a, rect)
    cut_fraction = rect.area / (image_a.shape[0] * image_a.shape[1])
    label = MixedLabel.mix(label_a, label_b, cut_fraction)
    if return_info:
        return out, label, {"rect": rect.to_list(), "lambda": 1.0 - cut_fraction}
    return out, label


# -- batch driver -------------------------------------------------------------


@dataclass
class AugmentResult:
    image: np.ndarray
    label: MixedLabel | None
    info: dict


def _batched(fn, n, chunk):
    return np.concatenate([fn(slice(s, s + chunk)) for s in range(0, n, chunk)])


def batch_saliency_maps(images, labels, cfg, net=None, net_lr=None, chunk=64, indices=None):
    """Saliency maps for every image under ``cfg.saliency``.

    Work is split into fixed-size chunks so results never depend on the
    caller's parallelism.
    """
    strategy = cfg.saliency
    n, H, W = images.shape[:3]
    if strategy.variant == "external":
        ids = range(n) if indices is None else indices
        return np.stack([load_external_saliency(strategy.path, int(i), (H, W)) for i in ids])
    if net is None and not (strategy.variant == "low-resolution" and net_lr is not None):
        raise ContractError(f"saliency variant {strategy.variant!r} needs a network")
    if strategy.variant == "max-logit":
        labels = _batched(lambda s: predict_labels(net.forward(images[s])), n, chunk)
    elif labels is None:
        raise ContractError(f"saliency variant {strategy.variant!r} needs labels")
    labels = np.asarray(labels)
    if strategy.variant in ("full", "max-logit"):
        return _batched(lambda s: batch_saliency(net, images[s], labels[s]), n, chunk)
    if strategy.variant == "early-head":
        if not net.has_early_head:
            raise ContractError("early-head saliency requires a network with an early head")
        return _batched(lambda s: batch_saliency(net, images[s], labels[s], head="early"), n, chunk)
    lr_net = net_lr if net_lr is not None else net
    lh, lw = lowres_shape(H, W, strategy.factor)
    small = np.stack([resize_bicubic(img, lh, lw) for img in images])
    maps = _batched(lambda s: batch_saliency(lr_net, small[s], labels[s]), n, chunk)
    return np.stack([upscale_nearest(m, H, W) for m in maps])


def augment_one(images, labels, position, cfg, saliency=None, indices=None):
    """Augment ``images[position]`` under ``cfg``.

    The random stream is keyed by the example's dataset index
    (``indices[position]``, default ``position``), so an example gets the
    same result wherever it sits in the batch.  Keep-CutMix partners are
    chosen among the same indices.
    """
    index = position if indices is None else int(indices[position])
    gen = RngStream.for_index(cfg.seed, index).generator()
    image = images[position]
    label = None if labels is None else int(labels[position])
    mode = cfg.mode
    length = cfg.region[0]
    if mode == "keep-cutmix":
        n = len(images)
        ids = np.arange(n) if indices is None else np.asarray(indices)
        ranked = np.sort(ids)
        k = int(np.searchsorted(ranked, index))
        partner = index if n == 1 else int(ranked[(k + 1 + gen.integers(n - 1)) % n])
        other = int(np.flatnonzero(ids == partner)[0])
        out, mixed, info = keep_cutmix(
            image, label, images[other], int(labels[other]), saliency, cfg, gen, return_info=True
        )
        info["partner"] = partner
        return AugmentResult(out, mixed, info)
    if mode in ("keep-cutout", "keep-erase"):
        out, info = keep_cutout(image, saliency, cfg, gen, return_info=True)
    elif mode == "keep-paste":
        out, info = keep_paste(image, saliency, cfg, gen, return_info=True)
    elif mode == "plain-cutout":
        out, info = plain_cutout(image, length, gen, return_info=True)
    elif mode == "plain-erase":
        out, info = plain_erase(image, length, gen, return_info=True)
    else:
        out, info = apply_policy(image, cfg.policy, gen, return_info=True)
    return AugmentResult(out, None if label is None else MixedLabel.single(label), info)


def augment_batch(images, labels, cfg, net=None, net_lr=None, saliency_maps=None, parallelism=None, indices=None):
    """Augment every image; output order matches input order.

    ``indices`` gives each example's dataset index (default: its position)
    and keys its random stream.

    Saliency comes from ``saliency_maps`` when given, otherwise from the
    strategy in ``cfg.saliency`` using ``net`` (or ``net_lr`` for the
    low-resolution variant).  Results are identical for any
    ``parallelism`` because each image draws from its own stream.
    """
    if not isinstance(cfg, AugmentConfig):
        cfg = AugmentConfig.from_dict(cfg)
    images = np.stack([check_image(img) for img in images])
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) != len(images):
            raise ContractError(f"{len(images)} images but {len(labels)} labels")
    if cfg.mode == "keep-cutmix" and labels is None:
        raise ContractError("keep-cutmix needs labels")
    if indices is not None:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.shape != (len(images),) or len(np.unique(indices)) != len(images):
            raise ContractError(f"indices must be {len(images)} distinct integers")
    h, w = cfg.region
    if h > images.shape[1] or w > images.shape[2]:
        raise ContractError(f"region {h}x{w} larger than images {images.shape[1]}x{images.shape[2]}")

    maps = [None] * len(images)
    if cfg.uses_saliency:
        if saliency_maps is not None:
            if len(saliency_maps) != len(images):
                raise ContractError(f"{len(saliency_maps)} saliency maps for {len(images)} images")
            maps = saliency_maps
        else:
            maps = batch_saliency_maps(images, labels, cfg, net=net, net_lr=net_lr, indices=indices)

    workers = parallelism or cfg.parallelism
    work = lambda i: augment_one(images, labels, i, cfg, maps[i], indices)  # noqa: E731
    if workers <= 1:
        return [work(i) for i in range(len(images))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, range(len(images))))
