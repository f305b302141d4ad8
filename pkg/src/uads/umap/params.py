"""Projection parameter and result containers."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class UmapParams:
    k_neighbors: int = 15
    min_dist: float = 0.1
    spread: float = 1.0
    epochs: int = 300
    negative_sample_rate: int = 5
    initial_learning_rate: float = 1.0
    init: str = "spectral"
    seed: int = 0
    knn_mode: str = "auto"  # exact | approximate | auto (exact up to 50k rows)

    def validate(self) -> None:
        if self.k_neighbors < 2:
            raise ConfigError("k_neighbors must be >= 2")
        if self.min_dist < 0:
            raise ConfigError("min_dist must be >= 0")
        if not self.min_dist < self.spread:
            raise ConfigError("min_dist must be smaller than spread")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.negative_sample_rate < 1:
            raise ConfigError("negative_sample_rate must be >= 1")
        if self.init not in ("spectral", "random"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.knn_mode not in ("exact", "approximate", "auto"):
            raise ConfigError(f"unknown knn_mode {self.knn_mode!r}")

    def to_dict(self) -> dict:
        return {
            "k_neighbors": self.k_neighbors,
            "min_dist": self.min_dist,
            "spread": self.spread,
            "epochs": self.epochs,
            "negative_sample_rate": self.negative_sample_rate,
            "initial_learning_rate": self.initial_learning_rate,
            "init": self.init,
            "seed": self.seed,
            "knn_mode": self.knn_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UmapParams":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class Projection:
    """2D coordinates aligned row-for-row with the corpus they came from."""

    coords: np.ndarray  # (n, 2) float32
    params: UmapParams
    corpus_ref: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValueError(f"projection coords must be (n, 2), got {self.coords.shape}")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("projection contains non-finite coordinates")

    def __len__(self) -> int:
        return self.coords.shape[0]
