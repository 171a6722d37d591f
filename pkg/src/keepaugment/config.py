"""Augmentation settings and their JSON form."""

from __future__ import annotations

from dataclasses import dataclass, field

from .saliency import SaliencyStrategy
from .tensor import ContractError

MODES = (
    "keep-cutout",
    "keep-erase",
    "keep-paste",
    "keep-cutmix",
    "plain-cutout",
    "plain-erase",
    "plain-policy",
)
POLICY_OPS = (
    "identity",
    "horizontal-flip",
    "rotate",
    "translate",
    "solarize",
    "posterize",
    "invert",
    "brightness",
    "contrast",
)
MAX_MAGNITUDE = 30

CONFIG_KEYS = ("mode", "tau", "region", "policy", "saliency", "seed", "stride", "parallelism")


class ConfigError(ContractError):
    """Schema violation in a run configuration; ``key`` names the culprit."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class TransformPolicy:
    """``n_ops`` operations drawn with replacement from ``ops`` at ``magnitude``."""

    ops: tuple = POLICY_OPS
    n_ops: int = 3
    magnitude: int = 15

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        if not self.ops:
            raise ConfigError("policy.ops", "must list at least one operation")
        unknown = [op for op in self.ops if op not in POLICY_OPS]
        if unknown:
            raise ConfigError("policy.ops", f"unknown operations {unknown}")
        if not isinstance(self.n_ops, int) or self.n_ops < 0:
            raise ConfigError("policy.n_ops", f"must be a non-negative integer, got {self.n_ops!r}")
        if not isinstance(self.magnitude, int) or not 0 <= self.magnitude <= MAX_MAGNITUDE:
            raise ConfigError("policy.magnitude", f"must be an integer in [0, 30], got {self.magnitude!r}")

    def to_dict(self):
        return {"ops": list(self.ops), "n_ops": self.n_ops, "magnitude": self.magnitude}

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("policy", "must be an object")
        unknown = set(data) - {"ops", "n_ops", "magnitude"}
        if unknown:
            raise ConfigError(f"policy.{sorted(unknown)[0]}", "unknown key")
        return cls(**data)


def _region(value):
    if isinstance(value, bool):
        raise ConfigError("region", f"expected int or [h, w], got {value!r}")
    if isinstance(value, int):
        value = [value, value]
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in value)
    ):
        raise ConfigError("region", f"expected a positive int or [h, w], got {value!r}")
    return tuple(value)


@dataclass(frozen=True)
class AugmentConfig:
    """Everything that determines an augmentation run besides the data.

    ``region`` is the cut length for cutting modes and the paste-back
    length for ``keep-paste``.  ``stride=None`` picks 1 for images up to
    64 pixels and 2 above.
    """

    mode: str = "keep-cutout"
    tau: float = 0.6
    region: tuple = (16, 16)
    policy: TransformPolicy = field(default_factory=TransformPolicy)
    saliency: SaliencyStrategy = field(default_factory=SaliencyStrategy)
    seed: int = 0
    stride: int | None = None
    parallelism: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("mode", f"unknown mode {self.mode!r}; expected one of {MODES}")
        if isinstance(self.tau, bool) or not isinstance(self.tau, (int, float)) or not 0.0 < self.tau < 1.0:
            raise ConfigError("tau", f"must lie in (0, 1), got {self.tau!r}")
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "region", _region(self.region))
        if isinstance(self.policy, dict):
            object.__setattr__(self, "policy", TransformPolicy.from_dict(self.policy))
        try:
            object.__setattr__(self, "saliency", SaliencyStrategy.from_value(self.saliency))
        except ContractError as exc:
            raise ConfigError("saliency", str(exc)) from None
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", f"must be a non-negative integer, got {self.seed!r}")
        if self.stride is not None and (
            isinstance(self.stride, bool) or not isinstance(self.stride, int) or self.stride < 1
        ):
            raise ConfigError("stride", f"must be a positive integer or 'auto', got {self.stride!r}")
        if isinstance(self.parallelism, bool) or not isinstance(self.parallelism, int) or self.parallelism < 1:
            raise ConfigError("parallelism", f"must be a positive integer, got {self.parallelism!r}")

    @property
    def uses_saliency(self):
        return self.mode.startswith("keep-")

    def to_dict(self):
        return {
            "mode": self.mode,
            "tau": self.tau,
            "region": list(self.region),
            "policy": self.policy.to_dict(),
            "saliency": self.saliency.to_dict(),
            "seed": self.seed,
            "stride": "auto" if self.stride is None else self.stride,
            "parallelism": self.parallelism,
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        unknown = sorted(set(data) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        kwargs = dict(data)
        if kwargs.get("stride") == "auto":
            kwargs["stride"] = None
        if "policy" in kwargs:
            kwargs["policy"] = TransformPolicy.from_dict(kwargs["policy"])
        return cls(**kwargs)

    def replace(self, **changes):
        data = {k: getattr(self, k) for k in CONFIG_KEYS}
        data.update(changes)
        return AugmentConfig(**data)
