"""Importance scores of rectangular regions and threshold-based region sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError, Rect, as_generator, check_saliency


def build_sat(saliency):
    """Summed-area table with a zero first row and column.

    ``sat[i, j]`` is the sum of ``saliency[:i, :j]``.
    """
    saliency = check_saliency(saliency)
    h, w = saliency.shape
    sat = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(saliency, axis=0), axis=1, out=sat[1:, 1:])
    return sat


def region_score(sat, rect):
    """Sum of the saliency map over ``rect`` from its summed-area table."""
    rect.check_fits((sat.shape[0] - 1, sat.shape[1] - 1))
    t, l, b, r = rect.top, rect.left, rect.bottom, rect.right
    # same operation order and clamp as candidate_scores, so the two agree bit for bit
    return float(max(sat[b, r] - sat[t, r] - sat[b, l] + sat[t, l], 0.0))


def default_stride(height, width):
    return 1 if max(height, width) <= 64 else 2


@dataclass
class CandidateScores:
    """Scores of every fully contained ``height x width`` placement.

    ``scores[r, c]`` belongs to the rect with top-left ``(r*stride, c*stride)``.
    """

    height: int
    width: int
    stride: int
    scores: np.ndarray
    threshold: float | None = field(default=None)

    @property
    def n_candidates(self):
        return self.scores.size

    def rect_at(self, flat_index):
        r, c = divmod(int(flat_index), self.scores.shape[1])
        return Rect(r * self.stride, c * self.stride, self.height, self.width)

    def rects(self):
        return [self.rect_at(i) for i in range(self.n_candidates)]

    def low_mask(self):
        self._require_threshold()
        return self.scores <= self.threshold

    def high_mask(self):
        self._require_threshold()
        return self.scores >= self.threshold

    def _require_threshold(self):
        if self.threshold is None:
            raise ContractError("threshold not set; call quantile_threshold first")


def candidate_scores(saliency, height, width=None, stride=1):
    """Score all contained placements of a ``height x width`` window."""
    saliency = check_saliency(saliency)
    width = height if width is None else width
    H, W = saliency.shape
    if height < 1 or width < 1:
        raise ContractError(f"region size must be positive, got {(height, width)}")
    if height > H or width > W:
        raise ContractError(f"region {height}x{width} larger than map {H}x{W}")
    if stride < 1:
        raise ContractError(f"stride must be positive, got {stride}")
    sat = build_sat(saliency)
    tops = np.arange(0, H - height + 1, stride)
    lefts = np.arange(0, W - width + 1, stride)
    b, r = tops + height, lefts + width
    scores = (
        sat[np.ix_(b, r)] - sat[np.ix_(tops, r)] - sat[np.ix_(b, lefts)] + sat[np.ix_(tops, lefts)]
    )
    # Cancellation can leave -1e-17 where the true sum is zero.
    np.maximum(scores, 0.0, out=scores)
    return CandidateScores(height, width, stride, scores)


def nearest_rank_index(tau, n):
    """0-based index ``ceil(tau * n) - 1`` of the nearest-rank quantile."""
    if not 0.0 < tau < 1.0:
        raise ContractError(f"tau must lie in (0, 1), got {tau}")
    if n < 1:
        raise ContractError("quantile of an empty set")
    # Round first so that e.g. 0.7 * 10 gives rank 7, not 8.
    k = math.ceil(round(tau * n, 9))
    return min(max(k, 1), n) - 1


def quantile_threshold(scores, tau):
    """Nearest-rank ``tau``-quantile of the candidate scores; also stored on ``scores``."""
    flat = np.sort(scores.scores, axis=None)
    scores.threshold = float(flat[nearest_rank_index(tau, flat.size)])
    return scores.threshold


def _sample(scores, mask, rng):
    eligible = np.flatnonzero(mask)
    gen = as_generator(rng)
    return scores.rect_at(eligible[gen.integers(len(eligible))])


def sample_low_region(scores, rng):
    """Uniform draw among candidates scoring at most the threshold."""
    return _sample(scores, scores.low_mask(), rng)


def sample_high_region(scores, rng):
    """Uniform draw among candidates scoring at least the threshold."""
    return _sample(scores, scores.high_mask(), rng)
