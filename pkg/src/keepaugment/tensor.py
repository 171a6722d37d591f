"""Dense image arrays, rectangular regions and the pixel-level primitives.

Images are ``numpy`` arrays of shape ``(H, W, C)`` holding floats in
``[0, 1]``.  Saliency maps are ``(H, W)`` arrays of non-negative floats.
Every function here is pure: inputs are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ContractError(ValueError):
    """Raised when an argument violates an operation's precondition."""


def check_image(image, *, name="image"):
    """Validate an image and return it as a float64 ``(H, W, C)`` array.

    2-D input is promoted to a single channel.  Integer arrays are taken
    to be 8-bit and divided by 255.
    """
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ContractError(f"{name} must have shape (H, W, C), got {arr.shape}")
    if min(arr.shape) < 1:
        raise ContractError(f"{name} has an empty dimension: {arr.shape}")
    if np.issubdtype(arr.dtype, np.integer):
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")
    return arr


def check_saliency(saliency, shape=None, *, name="saliency"):
    """Validate a saliency map: 2-D, finite, non-negative."""
    arr = np.asarray(saliency, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ContractError(f"{name} must have shape (H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise ContractError(f"{name} contains negative values")
    if shape is not None and arr.shape != tuple(shape[:2]):
        raise ContractError(
            f"{name} shape {arr.shape} does not match image shape {tuple(shape[:2])}"
        )
    return arr


@dataclass(frozen=True)
class Rect:
    """Axis-aligned region ``rows [top, top+height) x cols [left, left+width)``."""

    top: int
    left: int
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ContractError(f"Rect must have positive size, got {self}")

    @property
    def bottom(self):
        return self.top + self.height

    @property
    def right(self):
        return self.left + self.width

    @property
    def area(self):
        return self.height * self.width

    @property
    def slices(self):
        return slice(self.top, self.bottom), slice(self.left, self.right)

    def fits(self, height, width):
        return (
            0 <= self.top
            and self.bottom <= height
            and 0 <= self.left
            and self.right <= width
        )

    def check_fits(self, shape):
        if not self.fits(shape[0], shape[1]):
            raise ContractError(f"{self} is not contained in a {shape[0]}x{shape[1]} image")

    def mask(self, shape):
        """Materialize the binary mask of this region for an ``(H, W)`` grid."""
        self.check_fits(shape)
        m = np.zeros(shape[:2], dtype=bool)
        m[self.slices] = True
        return m

    def overlaps(self, other):
        return (
            self.top < other.bottom
            and other.top < self.bottom
            and self.left < other.right
            and other.left < self.right
        )

    def contains(self, other):
        return (
            self.top <= other.top
            and other.bottom <= self.bottom
            and self.left <= other.left
            and other.right <= self.right
        )

    def to_list(self):
        return [self.top, self.left, self.height, self.width]

    @classmethod
    def from_list(cls, values):
        top, left, height, width = (int(v) for v in values)
        return cls(top, left, height, width)


@dataclass(frozen=True)
class RngStream:
    """Immutable handle to a reproducible random stream.

    Each call to :meth:`generator` returns a fresh generator positioned at
    the start of the stream, so functions taking an ``RngStream`` stay pure.
    """

    seed: int
    stream: int = 0

    @classmethod
    def for_index(cls, seed, index):
        return cls(seed, (seed ^ index) & 0xFFFFFFFFFFFFFFFF)

    def generator(self):
        return np.random.default_rng([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream])


def as_generator(rng):
    """Accept an ``RngStream``, a ``Generator``, an int seed or None."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def cut_zero(image, rect):
    """Zero every channel of ``image`` inside ``rect``."""
    image = check_image(image)
    rect.check_fits(image.shape)
    out = image.copy()
    out[rect.slices] = 0.0
    return out


def cut_random(image, rect, rng):
    """Fill ``rect`` with i.i.d. uniform [0, 1) draws (random erasing)."""
    image = check_image(image)
    rect.check_fits(image.shape)
    gen = as_generator(rng)
    out = image.copy()
    out[rect.slices] = gen.random((rect.height, rect.width, image.shape[2]))
    return out


def paste_region(source, target, rect):
    """Return ``target`` with the pixels of ``rect`` copied from ``source``."""
    source = check_image(source, name="source")
    target = check_image(target, name="target")
    if source.shape != target.shape:
        raise ContractError(f"shape mismatch: source {source.shape} vs target {target.shape}")
    rect.check_fits(source.shape)
    out = target.copy()
    out[rect.slices] = source[rect.slices]
    return out


def cubic_kernel(t, a=-0.5):
    """Keys cubic convolution kernel; ``a=-0.5`` gives Catmull-Rom."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _bicubic_matrix(n_in, n_out):
    # Row i holds the weights mapping the n_in source samples to output i.
    centers = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(centers).astype(np.int64)
    weights = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for k in range(-1, 3):
        idx = base + k
        w = cubic_kernel(centers - idx)
        np.add.at(weights, (rows, np.clip(idx, 0, n_in - 1)), w)
    return weights


def resize_bicubic(image, out_h, out_w):
    """Resample with a Catmull-Rom kernel, clamped edges, output in [0, 1]."""
    image = check_image(image)
    if out_h < 1 or out_w < 1:
        raise ContractError(f"output size must be positive, got {(out_h, out_w)}")
    wy = _bicubic_matrix(image.shape[0], out_h)
    wx = _bicubic_matrix(image.shape[1], out_w)
    out = np.einsum("ih,hwc,jw->ijc", wy, image, wx, optimize=True)
    return np.clip(out, 0.0, 1.0)


def nearest_indices(n_in, n_out):
    """Source index of each output cell: ``floor((i + 0.5) * n_in / n_out)``."""
    return ((2 * np.arange(n_out) + 1) * n_in) // (2 * n_out)


def upscale_nearest(saliency, out_h, out_w):
    """Nearest-neighbour resampling of a 2-D map."""
    saliency = np.asarray(saliency, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise ContractError(f"output size must be positive, got {(out_h, out_w)}")
    rows = nearest_indices(saliency.shape[0], out_h)
    cols = nearest_indices(saliency.shape[1], out_w)
    return saliency[np.ix_(rows, cols)]
