"""Label fidelity of augmentations under an oracle, and saliency timing."""

from __future__ import annotations

import hashlib
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import apply_policy, keep_cutout, keep_paste, plain_cutout, plain_erase
from .config import AugmentConfig, TransformPolicy
from .nn import ToyNet, predict_labels
from .saliency import (
    SaliencyStrategy,
    batch_saliency,
    earlyhead_saliency,
    lowres_saliency,
    lowres_shape,
    maxlogit_saliency,
    vanilla_saliency,
)
from .tensor import ContractError, RngStream, check_image

FIDELITY_MODES = ("plain-cutout", "keep-cutout", "plain-erase", "keep-erase", "plain-policy", "keep-paste")


def content_stream(image, trial, seed):
    """Random stream keyed by image content and trial, not by position."""
    digest = hashlib.blake2b(np.ascontiguousarray(image).tobytes(), digest_size=8)
    digest.update(int(trial).to_bytes(8, "little"))
    return RngStream(seed, int.from_bytes(digest.digest(), "little"))


def _trial_ids(trials):
    ids = list(range(trials)) if isinstance(trials, int) else list(trials)
    if not ids:
        raise ContractError("at least one trial is required")
    return ids


def fidelity_counts(oracle, images, augment, trials=1, seed=0, labels=None):
    """``(agreements, total)`` of oracle predictions on clean vs augmented images.

    ``augment(image, label, generator) -> image``.  ``trials`` is a count or
    an explicit iterable of trial ids; each (image, trial) pair draws from
    a stream derived from the image bytes, so counts do not depend on
    dataset order and trial sets can be split and summed.
    """
    images = np.asarray(images, dtype=np.float64)
    if len(images) == 0:
        raise ContractError("fidelity needs a non-empty dataset")
    if labels is None:
        labels = np.zeros(len(images), dtype=np.int64)
    clean = predict_labels(oracle.forward(images))
    agree = total = 0
    for trial in _trial_ids(trials):
        augmented = np.stack(
            [
                augment(img, int(lbl), content_stream(img, trial, seed).generator())
                for img, lbl in zip(images, labels)
            ]
        )
        agree += int(np.sum(predict_labels(oracle.forward(augmented)) == clean))
        total += len(images)
    return agree, total


def fidelity(oracle, images, augment, trials=1, seed=0, labels=None):
    """Fraction of augmented images the oracle labels like their originals."""
    agree, total = fidelity_counts(oracle, images, augment, trials, seed, labels)
    return agree / total


def make_augmentation(mode, magnitude, images=None, labels=None, saliency_net=None, tau=0.6, policy=None):
    """Closure ``(image, label, generator) -> image`` for a fidelity sweep.

    ``magnitude`` is the square side length for cutting modes and the
    policy magnitude for policy modes.  Saliency for ``keep-*`` modes is
    precomputed for ``images`` with ``saliency_net`` and looked up by
    content.
    """
    if mode not in FIDELITY_MODES:
        raise ContractError(f"unknown fidelity mode {mode!r}; expected one of {FIDELITY_MODES}")
    policy = policy or TransformPolicy()
    if mode in ("plain-policy", "keep-paste"):
        policy = TransformPolicy(policy.ops, policy.n_ops, int(magnitude))
        region = 16 if images is None else min(16, *np.shape(images)[1:3])
    else:
        region = int(magnitude)
    cfg = AugmentConfig(mode=mode, tau=tau, region=region, policy=policy)

    if mode == "plain-cutout":
        return lambda img, lbl, gen: plain_cutout(img, region, gen)
    if mode == "plain-erase":
        return lambda img, lbl, gen: plain_erase(img, region, gen)
    if mode == "plain-policy":
        return lambda img, lbl, gen: apply_policy(img, policy, gen)

    if saliency_net is None or images is None or labels is None:
        raise ContractError(f"{mode} needs images, labels and a saliency network")
    images = np.asarray(images, dtype=np.float64)
    maps = np.concatenate(
        [batch_saliency(saliency_net, images[s : s + 64], np.asarray(labels)[s : s + 64]) for s in range(0, len(images), 64)]
    )
    lookup = {img.tobytes(): m for img, m in zip(images, maps)}

    def augment(img, lbl, gen):
        key = np.ascontiguousarray(img, dtype=np.float64).tobytes()
        sal = lookup.get(key)
        if sal is None:
            sal = vanilla_saliency(saliency_net, img, lbl)
        if mode == "keep-paste":
            return keep_paste(img, sal, cfg, gen)
        return keep_cutout(img, sal, cfg, gen, erase=(mode == "keep-erase"))

    return augment


@dataclass
class FidelityReport:
    mode: str
    magnitudes: list
    fidelity: list
    trials: int
    n_images: int
    oracle_accuracy: float | None = None

    def to_dict(self):
        return asdict(self)

    def to_table(self):
        lines = [f"fidelity  mode={self.mode}  images={self.n_images}  trials={self.trials}"]
        if self.oracle_accuracy is not None:
            lines[0] += f"  oracle_acc={self.oracle_accuracy:.4f}"
        lines.append(f"{'magnitude':>10}  {'fidelity':>9}")
        for m, f in zip(self.magnitudes, self.fidelity):
            lines.append(f"{m:>10}  {f:>9.4f}")
        return "\n".join(lines)


def fidelity_sweep(oracle, images, labels, mode, magnitudes, trials=3, seed=0, saliency_net=None, tau=0.6):
    """Fidelity of ``mode`` at each magnitude (cut length or policy strength)."""
    magnitudes = [int(m) for m in magnitudes]
    if not magnitudes:
        raise ContractError("magnitudes must be non-empty")
    if any(b < a for a, b in zip(magnitudes, magnitudes[1:])):
        raise ContractError(f"magnitudes must be ascending, got {magnitudes}")
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    net = saliency_net if saliency_net is not None else oracle
    values = []
    for m in magnitudes:
        aug = make_augmentation(mode, m, images, labels, saliency_net=net, tau=tau)
        values.append(fidelity(oracle, images, aug, trials, seed, labels))
    accuracy = float(np.mean(predict_labels(oracle.forward(images)) == labels))
    return FidelityReport(mode, magnitudes, values, len(_trial_ids(trials)), len(images), accuracy)


# -- timing -------------------------------------------------------------------------


@dataclass
class BenchReport:
    strategies: list
    seconds_per_image: dict
    speedup: dict
    n_images: int
    repetitions: int
    internal_resolution: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_table(self):
        lines = [f"saliency timing  images={self.n_images}  reps={self.repetitions}"]
        lines.append(f"{'strategy':>16}  {'ms/image':>10}  {'speedup':>8}")
        for s in self.strategies:
            lines.append(f"{s:>16}  {1e3 * self.seconds_per_image[s]:>10.3f}  {self.speedup[s]:>8.2f}")
        return "\n".join(lines)


def bench_saliency(strategies, images, labels, net, net_lr=None, repetitions=3, factor=2):
    """Median-over-repetitions wall time per image for each saliency strategy.

    Speedups are relative to full-resolution vanilla saliency, which is
    always timed.  Without ``net_lr`` a randomly initialised network of the
    same architecture at the reduced resolution is used; timing does not
    depend on the weights.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) < 10:
        raise ContractError("benchmark needs at least 10 images")
    if repetitions < 3:
        raise ContractError("benchmark needs at least 3 repetitions")
    names = [SaliencyStrategy(s).variant for s in strategies]
    for name in names:
        if name == "external":
            raise ContractError("external maps cannot be benchmarked")
        if name == "early-head" and not net.has_early_head:
            raise ContractError("early-head strategy requires a network with an early head")
    H, W = images.shape[1:3]
    lh, lw = lowres_shape(H, W, factor)
    if net_lr is None and "low-resolution" in names:
        cfg = net.config()
        net_lr = ToyNet((lh, lw, cfg["input_shape"][2]), cfg["n_classes"], cfg["channels"], activation=cfg["activation"], rng=0)
    runners = {
        "full": lambda x, y: vanilla_saliency(net, x, y),
        "low-resolution": lambda x, y: lowres_saliency(net_lr, x, y, factor),
        "early-head": lambda x, y: earlyhead_saliency(net, x, y),
        "max-logit": lambda x, y: maxlogit_saliency(net, x),
    }
    images = [check_image(img) for img in images]
    timed = ["full"] + [n for n in names if n != "full"]
    per_image = {}
    for name in timed:
        run = runners[name]
        samples = []
        for _ in range(repetitions):
            start = time.perf_counter()
            for x, y in zip(images, labels):
                run(x, int(y))
            samples.append((time.perf_counter() - start) / len(images))
        per_image[name] = statistics.median(samples)
    speedup = {n: per_image["full"] / per_image[n] for n in timed}
    resolution = {n: [H, W] for n in timed}
    if "low-resolution" in resolution:
        resolution["low-resolution"] = [lh, lw]
    keep = names if "full" in names else timed
    return BenchReport(
        keep,
        {n: per_image[n] for n in keep},
        {n: speedup[n] for n in keep},
        len(images),
        repetitions,
        {n: resolution[n] for n in keep},
    )
