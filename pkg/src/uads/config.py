"""Pipeline configuration: flat key-value file with section headers.

Example:

    [dataset]
    root = data/synth
    layout = data/synth/layout.txt

    [features]
    window = 1024
    hop = 512
    n_mels = 128

    [stacks]
    sizes = 1,5,10

    [sampling.device]
    validation_cap = 20000
    other_cap = 10000

    [sampling.global]
    validation_cap = 2000
    other_cap = 1000
    external.extpool = 50000

    [umap]
    k_neighbors = 15
    epochs = 300

    [metrics]
    c_sweep = 0.01,0.1,1,10,100

    [output]
    cache_dir = cache
    output_dir = out

    [runtime]
    seed = 0

Environment overrides are deliberately narrow: UADS_CACHE_DIR and
UADS_OUTPUT_DIR replace the two directories; everything else stays in the
file so runs are reproducible from it alone.
"""

import configparser
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import SamplingPolicy
from .errors import ConfigError
from .features import FeatureParams
from .metrics import MetricParams
from .umap import UmapParams

ENV_CACHE_DIR = "UADS_CACHE_DIR"
ENV_OUTPUT_DIR = "UADS_OUTPUT_DIR"


@dataclass
class PlotConfig:
    width: int = 900
    height: int = 420
    point_size_train: float = 3.0
    point_size_test: float = 1.6
    landmark: bool = False
    landmark_skip: int = 500
    landmark_take: int = 100
    thinning: bool = False


@dataclass
class PipelineConfig:
    root: Path
    layout: Path
    cache_dir: Path
    output_dir: Path
    sidecar_dir: Path | None = None
    features: FeatureParams = field(default_factory=FeatureParams)
    stack_sizes: tuple[int, ...] = (1, 5, 10)
    stack_stride: int | None = None  # None = stride equals stack size
    sampling_device: SamplingPolicy = field(default_factory=lambda: SamplingPolicy(20000, 10000))
    sampling_global: SamplingPolicy = field(default_factory=lambda: SamplingPolicy(2000, 1000))
    umap: UmapParams = field(default_factory=UmapParams)
    metrics: MetricParams = field(default_factory=MetricParams)
    plots: PlotConfig = field(default_factory=PlotConfig)
    seed: int = 0
    threads: int = 1
    deterministic: bool = True

    def validate(self) -> None:
        if not self.root.is_dir():
            raise ConfigError(f"dataset root not found: {self.root}")
        if not self.layout.is_file():
            raise ConfigError(f"layout descriptor not found: {self.layout}")
        if self.sidecar_dir is not None and not self.sidecar_dir.is_dir():
            raise ConfigError(f"sidecar directory not found: {self.sidecar_dir}")
        if self.features.hop > self.features.window:
            raise ConfigError(
                f"hop {self.features.hop} must not exceed window {self.features.window}"
            )
        if self.features.window < 2 or self.features.hop < 1:
            raise ConfigError("window/hop must be positive")
        if not self.stack_sizes or any(s < 1 for s in self.stack_sizes):
            raise ConfigError("stack sizes must be positive integers")
        if len(set(self.stack_sizes)) != len(self.stack_sizes):
            raise ConfigError("duplicate stack sizes")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        self.umap.validate()

    def fingerprint(self, *sections: str) -> str:
        """Stable hash input for a subset of the configuration."""
        snap = {
            "dataset": [str(self.root), str(self.layout), str(self.sidecar_dir)],
            "features": vars(self.features),
            "stacks": [list(self.stack_sizes), self.stack_stride],
            "sampling": [vars(self.sampling_device) | {}, vars(self.sampling_global) | {}],
            "umap": self.umap.to_dict(),
            "metrics": {
                "c_sweep": list(self.metrics.c_sweep),
                "knn_k": self.metrics.knn_k,
                "lof_k": self.metrics.lof_k,
                "quantile": self.metrics.quantile,
                "pauc_p": self.metrics.pauc_p,
            },
            "plots": vars(self.plots),
            "seed": self.seed,
        }
        picked = {k: snap[k] for k in sections} if sections else snap
        return json.dumps(picked, sort_keys=True, default=str)


def _get(parser, section, key, conv, default):
    if parser.has_option(section, key):
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    return default


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def load_config(path: str | Path, seed: int | None = None, threads: int | None = None,
                deterministic: bool | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    base = path.parent

    def _path(section, key, default=None):
        raw = _get(parser, section, key, str, None)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing required [{section}] {key}")
            return default
        p = Path(raw)
        return p if p.is_absolute() else base / p

    run_seed = seed if seed is not None else _get(parser, "runtime", "seed", int, 0)

    def _sampling(section, default_val, default_other):
        caps = {}
        if parser.has_section(section):
            for key, val in parser.items(section):
                if key.startswith("external."):
                    caps[key.split(".", 1)[1]] = int(val)
        return SamplingPolicy(
            per_validation_split_cap=_get(parser, section, "validation_cap", int, default_val),
            per_other_split_cap=_get(parser, section, "other_cap", int, default_other),
            external_caps=caps,
            seed=run_seed,
        )

    features = FeatureParams(
        window=_get(parser, "features", "window", int, 1024),
        hop=_get(parser, "features", "hop", int, 512),
        n_mels=_get(parser, "features", "n_mels", int, 128),
        db_floor_power=_get(parser, "features", "db_floor_power", float, 1e-10),
        embedding_dim=_get(parser, "features", "embedding_dim", int, 512),
        embedding_hop_seconds=_get(parser, "features", "embedding_hop_seconds", float, 0.1),
    )
    umap_params = UmapParams(
        k_neighbors=_get(parser, "umap", "k_neighbors", int, 15),
        min_dist=_get(parser, "umap", "min_dist", float, 0.1),
        spread=_get(parser, "umap", "spread", float, 1.0),
        epochs=_get(parser, "umap", "epochs", int, 300),
        negative_sample_rate=_get(parser, "umap", "negative_sample_rate", int, 5),
        initial_learning_rate=_get(parser, "umap", "learning_rate", float, 1.0),
        init=_get(parser, "umap", "init", str, "spectral"),
        seed=run_seed,
        knn_mode=_get(parser, "umap", "knn_mode", str, "auto"),
    )
    metrics = MetricParams(
        c_sweep=_get(parser, "metrics", "c_sweep", _float_list, (0.01, 0.1, 1.0, 10.0, 100.0)),
        knn_k=_get(parser, "metrics", "knn_k", int, 5),
        lof_k=_get(parser, "metrics", "lof_k", int, 20),
        quantile=_get(parser, "metrics", "quantile", float, 0.95),
        pauc_p=_get(parser, "metrics", "pauc_p", float, 0.1),
    )
    plots = PlotConfig(
        width=_get(parser, "plots", "width", int, 900),
        height=_get(parser, "plots", "height", int, 420),
        point_size_train=_get(parser, "plots", "point_size_train", float, 3.0),
        point_size_test=_get(parser, "plots", "point_size_test", float, 1.6),
        landmark=_get(parser, "plots", "landmark", _bool, False),
        landmark_skip=_get(parser, "plots", "landmark_skip", int, 500),
        landmark_take=_get(parser, "plots", "landmark_take", int, 100),
        thinning=_get(parser, "plots", "thinning", _bool, False),
    )

    cache_dir = Path(os.environ[ENV_CACHE_DIR]) if os.environ.get(ENV_CACHE_DIR) else _path("output", "cache_dir", base / "cache")
    output_dir = Path(os.environ[ENV_OUTPUT_DIR]) if os.environ.get(ENV_OUTPUT_DIR) else _path("output", "output_dir", base / "out")

    cfg = PipelineConfig(
        root=_path("dataset", "root"),
        layout=_path("dataset", "layout"),
        sidecar_dir=_path("dataset", "sidecar_dir", default=False) or None,
        cache_dir=cache_dir,
        output_dir=output_dir,
        features=features,
        stack_sizes=_get(parser, "stacks", "sizes", _int_list, (1, 5, 10)),
        stack_stride=_get(parser, "stacks", "stride", int, None),
        sampling_device=_sampling("sampling.device", 20000, 10000),
        sampling_global=_sampling("sampling.global", 2000, 1000),
        umap=umap_params,
        metrics=metrics,
        plots=plots,
        seed=run_seed,
        threads=threads if threads is not None else _get(parser, "runtime", "threads", int, 1),
        deterministic=(
            deterministic
            if deterministic is not None
            else _get(parser, "runtime", "deterministic", _bool, True)
        ),
    )
    return cfg
