"""Stratified subsampling of frame sets into corpora, and corpus persistence.

Caps mirror the projection workflow: test ("validation") splits get one cap,
training splits another, and external datasets their own per-dataset caps.
Sampling is uniform without replacement and seeded per group key, so one
group's selection never depends on which other groups are present.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import cache
from .dataset import ClipKey
from .errors import DataError
from .features import FrameSet
from .seeding import rng_for

log = logging.getLogger(__name__)

META_COLUMNS = [
    "dataset_id",
    "device",
    "section",
    "domain",
    "split",
    "label",
    "file_id",
    "time",
    "energy",
]


@dataclass(frozen=True)
class SamplingPolicy:
    per_validation_split_cap: int
    per_other_split_cap: int
    external_caps: dict[str, int] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.per_validation_split_cap < 0 or self.per_other_split_cap < 0:
            raise DataError("sampling caps must be >= 0")
        if any(v < 0 for v in self.external_caps.values()):
            raise DataError("sampling caps must be >= 0")

    def cap_for(self, dataset_id: str, domain: str, split: str) -> int:
        if domain == "external":
            if dataset_id not in self.external_caps:
                raise DataError(f"no external cap configured for dataset {dataset_id!r}")
            return self.external_caps[dataset_id]
        if split == "test":
            return self.per_validation_split_cap
        return self.per_other_split_cap


@dataclass
class Corpus:
    """Feature matrix plus aligned per-row provenance."""

    matrix: np.ndarray  # (rows, D) float32
    meta: pd.DataFrame  # META_COLUMNS, aligned with matrix rows
    scope: str  # "global" | "device"
    device: str | None
    representation: str
    stack_size: int

    def __post_init__(self):
        if len(self.meta) != self.matrix.shape[0]:
            raise DataError("corpus meta rows must equal matrix rows")

    @property
    def scope_id(self) -> str:
        return "global" if self.scope == "global" else f"device-{self.device}"

    def __len__(self) -> int:
        return self.matrix.shape[0]


def _frame_meta(fs: FrameSet) -> pd.DataFrame:
    c: ClipKey = fs.clip
    n = fs.matrix.shape[0]
    return pd.DataFrame(
        {
            "dataset_id": [c.dataset_id] * n,
            "device": [c.device] * n,
            "section": [c.section] * n,
            "domain": [c.domain] * n,
            "split": [c.split] * n,
            "label": [c.label] * n,
            "file_id": [c.file_id] * n,
            "time": np.asarray(fs.times, dtype=np.float64),
            "energy": np.asarray(fs.energies, dtype=np.float64),
        }
    )


def subsample(
    groups: dict[tuple, list[FrameSet]],
    policy: SamplingPolicy,
    scope: str,
    device: str | None = None,
    representation: str = "log_mel",
    stack_size: int = 1,
) -> Corpus:
    """Build a corpus from frame sets grouped by (device, section, domain, split).

    Each group is capped via the policy and sampled uniformly without
    replacement with a seed derived from (policy.seed, group key), keeping
    selections stable when unrelated groups change.  Stack-size-10 global
    corpora drop external data entirely.
    """
    if scope not in ("global", "device"):
        raise DataError(f"bad corpus scope {scope!r}")
    mats: list[np.ndarray] = []
    metas: list[pd.DataFrame] = []
    for key in sorted(groups):
        frame_sets = [fs for fs in groups[key] if fs.matrix.shape[0] > 0]
        if not frame_sets:
            continue
        dataset_id = frame_sets[0].clip.dataset_id
        _, _, domain, split = key
        if scope == "global" and stack_size == 10 and domain == "external":
            continue
        mat = np.vstack([fs.matrix for fs in frame_sets])
        meta = pd.concat([_frame_meta(fs) for fs in frame_sets], ignore_index=True)
        cap = policy.cap_for(dataset_id, domain, split)
        if 0 < cap < mat.shape[0]:
            rng = rng_for(policy.seed, "subsample", *key)
            picked = np.sort(rng.choice(mat.shape[0], size=cap, replace=False))
            mat = mat[picked]
            meta = meta.iloc[picked].reset_index(drop=True)
        mats.append(mat.astype(np.float32, copy=False))
        metas.append(meta)
    if not mats:
        raise DataError("no frames left after subsampling")
    return Corpus(
        matrix=np.vstack(mats),
        meta=pd.concat(metas, ignore_index=True)[META_COLUMNS],
        scope=scope,
        device=device,
        representation=representation,
        stack_size=stack_size,
    )


def write_corpus(path, corpus: Corpus) -> None:
    meta = {
        "kind": "corpus",
        "scope": corpus.scope,
        "device": corpus.device,
        "representation": corpus.representation,
        "stack_size": corpus.stack_size,
        "rows": {col: corpus.meta[col].tolist() for col in META_COLUMNS},
    }
    cache.write_cache(path, corpus.matrix, meta)


def read_corpus(path) -> Corpus:
    matrix, meta = cache.read_cache(path)
    if meta.get("kind") != "corpus":
        raise DataError(f"{path}: not a corpus cache file")
    rows = meta["rows"]
    df = pd.DataFrame({col: rows[col] for col in META_COLUMNS})
    return Corpus(
        matrix=matrix,
        meta=df,
        scope=meta["scope"],
        device=meta.get("device"),
        representation=meta["representation"],
        stack_size=int(meta["stack_size"]),
    )
