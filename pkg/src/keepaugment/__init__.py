"""Saliency-guided, information-preserving data augmentation."""

__version__ = "0.1.0"

from .augment import (
    MixedLabel,
    apply_policy,
    augment_batch,
    keep_cutmix,
    keep_cutout,
    keep_paste,
    plain_cutout,
    plain_erase,
)
from .config import AugmentConfig, TransformPolicy
from .estimators import KeepAugment, ToyNetClassifier
from .nn import ToyNet, train_toy
from .regions import (
    CandidateScores,
    build_sat,
    candidate_scores,
    quantile_threshold,
    region_score,
    sample_high_region,
    sample_low_region,
)
from .saliency import (
    SaliencyStrategy,
    earlyhead_saliency,
    lowres_saliency,
    maxlogit_saliency,
    vanilla_saliency,
)
from .tensor import (
    ContractError,
    Rect,
    RngStream,
    cut_random,
    cut_zero,
    paste_region,
    resize_bicubic,
    upscale_nearest,
)

__all__ = [
    "AugmentConfig",
    "CandidateScores",
    "ContractError",
    "KeepAugment",
    "MixedLabel",
    "Rect",
    "RngStream",
    "SaliencyStrategy",
    "ToyNet",
    "ToyNetClassifier",
    "TransformPolicy",
    "apply_policy",
    "augment_batch",
    "build_sat",
    "candidate_scores",
    "cut_random",
    "cut_zero",
    "earlyhead_saliency",
    "keep_cutmix",
    "keep_cutout",
    "keep_paste",
    "lowres_saliency",
    "maxlogit_saliency",
    "paste_region",
    "plain_cutout",
    "plain_erase",
    "quantile_threshold",
    "region_score",
    "resize_bicubic",
    "sample_high_region",
    "sample_low_region",
    "train_toy",
    "upscale_nearest",
    "vanilla_saliency",
]
