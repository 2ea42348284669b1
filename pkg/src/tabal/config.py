"""Run configuration.

Every knob the pipeline exposes lives here, grouped by the module that owns
it. Defaults follow the reference experimental setup where one exists:
uncertainty threshold 95 %, confidence-bin edges 40..95 %, and the BBA IoU
threshold of 0.006 (Word-like pages) or 0.004 (LaTeX-like pages).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

STRATEGIES = ("random", "uncertainty", "bba", "ma", "tc", "entropy")
PROFILES = ("latex-like", "word-like")
MODES = ("static", "rescore")

DEFAULT_EDGES = (40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 95.0)
DEFAULT_UNCERTAINTY_THRESHOLD = 95.0
T_IOU_BY_PROFILE = {"word-like": 0.006, "latex-like": 0.004}
COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


@dataclass(frozen=True)
class ScoringConfig:
    t_iou: float = T_IOU_BY_PROFILE["word-like"]
    conf_floor: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.t_iou <= 1.0:
            raise ConfigError(f"t_iou must lie in [0, 1], got {self.t_iou}")
        if not 0.0 <= self.conf_floor <= 1.0:
            raise ConfigError(f"conf_floor must lie in [0, 1], got {self.conf_floor}")


@dataclass(frozen=True)
class SamplerConfig:
    edges: tuple = DEFAULT_EDGES
    # None means "use the first edge"
    r_min: Optional[float] = None
    uncertainty_threshold: float = DEFAULT_UNCERTAINTY_THRESHOLD

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        if len(self.edges) < 2:
            raise ConfigError("at least two bin edges are required")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ConfigError(f"bin edges must be strictly increasing: {self.edges}")
        if self.r_min is not None and self.r_min > self.edges[0]:
            raise ConfigError(f"r_min={self.r_min} lies above the first bin edge {self.edges[0]}")
        if not self.edges[0] < self.uncertainty_threshold <= self.edges[-1]:
            raise ConfigError(
                f"uncertainty_threshold={self.uncertainty_threshold} must lie in "
                f"({self.edges[0]}, {self.edges[-1]}]"
            )

    @property
    def effective_r_min(self) -> float:
        return self.edges[0] if self.r_min is None else float(self.r_min)


@dataclass(frozen=True)
class BudgetConfig:
    """Selection budget knobs, all counted in images.

    ``total`` is B (it includes the ``initial`` seed set K), ``step`` is k and
    ``start`` is the loop-entry counter epsilon. ``start=None`` means epsilon = k.
    """

    initial: int = 50
    total: int = 250
    step: int = 50
    start: Optional[int] = None

    def __post_init__(self):
        if self.initial < 0 or self.step <= 0:
            raise ConfigError("initial must be >= 0 and step must be > 0")
        if self.initial > self.total:
            raise ConfigError(f"initial size K={self.initial} exceeds total budget B={self.total}")
        if self.start is not None and self.start < 0:
            raise ConfigError("start (epsilon) must be >= 0")

    @property
    def epsilon(self) -> int:
        return self.step if self.start is None else self.start


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple = COCO_THRESHOLDS
    # metric reported as "mAP" in logs and summaries
    primary: str = "map_50"

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if 0.5 not in self.thresholds:
            raise ConfigError("evaluation thresholds must include 0.5")
        if self.primary not in ("map_50", "map_coco"):
            raise ConfigError(f"primary metric must be map_50 or map_coco, got {self.primary!r}")


@dataclass(frozen=True)
class SimConfig:
    """Synthetic corpus and detector-simulator knobs.

    Fields left as None resolve from the profile (see ``PROFILE_DEFAULTS``).
    """

    profile: str = "latex-like"
    n_clusters: Optional[int] = None
    multi_table_rate: Optional[float] = None
    max_tables: int = 4
    overlap_prone_rate: Optional[float] = None
    aspect_jitter: Optional[float] = None
    cluster_skew: float = 1.0
    page_width: int = 160
    page_height: int = 224
    m0: float = 8.0
    layout_m0: float = 50.0
    jitter_scale: float = 0.35
    conf_noise: float = 0.3
    emit_masks: bool = True

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}; choose from {PROFILES}")
        if self.m0 < 0 or self.layout_m0 < 0:
            raise ConfigError("m0 and layout_m0 must be >= 0")
        if self.max_tables < 1:
            raise ConfigError("max_tables must be >= 1")

    def resolved(self, name: str):
        value = getattr(self, name)
        return PROFILE_DEFAULTS[self.profile][name] if value is None else value


PROFILE_DEFAULTS = {
    "latex-like": {
        "n_clusters": 5,
        "multi_table_rate": 0.45,
        "overlap_prone_rate": 0.25,
        "aspect_jitter": 0.15,
    },
    "word-like": {
        "n_clusters": 12,
        "multi_table_rate": 0.2,
        "overlap_prone_rate": 0.2,
        "aspect_jitter": 0.45,
    },
}


@dataclass(frozen=True)
class RunConfig:
    strategy: str = "tc"
    mode: str = "static"
    seed: int = 0
    # retrain from scratch on the loop's picks only, dropping the seed set
    cold_retrain: bool = False
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        nested = {
            "scoring": ScoringConfig,
            "sampler": SamplerConfig,
            "budget": BudgetConfig,
            "eval": EvalConfig,
            "sim": SimConfig,
        }
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key in nested:
                sub = nested[key]
                sub_known = {f.name for f in fields(sub)}
                bad = set(value) - sub_known
                if bad:
                    raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
                kwargs[key] = sub(**value)
            else:
                kwargs[key] = value
        return cls(**kwargs)


def scoring_for_profile(profile: str, conf_floor: float = 0.5) -> ScoringConfig:
    if profile not in T_IOU_BY_PROFILE:
        raise ConfigError(f"unknown profile {profile!r}; choose from {PROFILES}")
    return ScoringConfig(t_iou=T_IOU_BY_PROFILE[profile], conf_floor=conf_floor)
