"""Corpus catalog: scanning audio trees, generating synthetic corpora,
and grouping clips into (device, section, domain, split) splits.

A *layout descriptor* is a small INI file mapping filename patterns to clip
fields, so real datasets and synthetic ones load through the same code path:

    [dataset synth]
    pattern = {device}/section_{section}_{domain}_{split}_{label}_{file_id}.wav

    [dataset extpool]
    device = extpool
    section = 0
    domain = external
    split = train
    label = unknown
    pattern = extpool/{file_id}.wav

``pattern`` may hold several templates (one per line).  Placeholders match a
single path component ({section} digits only); any field missing from the
pattern must be given as a constant key in the same section.
"""

import configparser
import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError, DataError
from .seeding import rng_for

log = logging.getLogger(__name__)

DOMAINS = ("source", "target", "external")
SPLITS = ("train", "test")
LABELS = ("normal", "anomalous", "unknown")

_FIELDS = ("device", "section", "domain", "split", "label", "file_id")


@dataclass(frozen=True)
class ClipKey:
    """Identity of one audio clip within the corpus."""

    dataset_id: str
    device: str
    section: int
    domain: str
    split: str
    label: str
    file_id: str
    path: str

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise DataError(f"{self.path}: bad domain {self.domain!r}")
        if self.split not in SPLITS:
            raise DataError(f"{self.path}: bad split {self.split!r}")
        if self.label not in LABELS:
            raise DataError(f"{self.path}: bad label {self.label!r}")
        if self.split == "train" and self.label == "anomalous":
            raise DataError(f"{self.path}: training clips can never be labeled anomalous")
        if self.domain == "external" and self.label != "unknown":
            raise DataError(f"{self.path}: external clips must carry label=unknown")

    @property
    def group(self) -> tuple[str, int, str, str]:
        return (self.device, self.section, self.domain, self.split)


@dataclass
class DatasetIndex:
    """Immutable catalog of clips plus per-group counts."""

    clips: list[ClipKey]
    stats: dict[tuple[str, int, str, str], int]
    unmatched: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.clips)

    def validate(self) -> None:
        paths = [c.path for c in self.clips]
        if len(set(paths)) != len(paths):
            raise DataError("index contains duplicate paths")
        for p in paths:
            if not Path(p).exists():
                raise DataError(f"indexed path does not exist: {p}")
        if sum(self.stats.values()) != len(self.clips):
            raise DataError("index stats do not sum to clip count")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset_id", *_FIELDS, "path"])
            for c in self.clips:
                writer.writerow(
                    [c.dataset_id, c.device, c.section, c.domain, c.split, c.label, c.file_id, c.path]
                )


@dataclass(frozen=True)
class SplitGroup:
    device: str
    section: int
    domain: str
    split: str
    clips: tuple[ClipKey, ...]

    @property
    def key(self) -> tuple[str, int, str, str]:
        return (self.device, self.section, self.domain, self.split)


@dataclass(frozen=True)
class SynthSpec:
    """Desk-scale synthetic corpus with known anomaly structure."""

    devices: int = 2
    sections: int = 2
    clips_per_split: int = 10
    clip_seconds: float = 2.0
    sample_rate: int = 16000
    anomaly_kind: str = "click_train"
    domain_shift: str = "pitch_shift"
    seed: int = 0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if self.clip_seconds <= 0:
            raise ConfigError("clip_seconds must be positive")
        if self.anomaly_kind not in ("click_train", "noise_burst", "detune"):
            raise ConfigError(f"unknown anomaly_kind {self.anomaly_kind!r}")
        if self.domain_shift not in ("pitch_shift", "noise_floor"):
            raise ConfigError(f"unknown domain_shift {self.domain_shift!r}")


class _Pattern:
    def __init__(self, dataset_id: str, template: str, constants: dict):
        self.dataset_id = dataset_id
        self.template = template
        self.constants = constants
        self.regex = self._compile(template)

    @staticmethod
    def _compile(template: str) -> re.Pattern:
        out = []
        pos = 0
        for m in re.finditer(r"\{(\w+)\}", template):
            if m.group(1) not in _FIELDS:
                raise ConfigError(f"unknown placeholder {{{m.group(1)}}} in pattern {template!r}")
            out.append(re.escape(template[pos : m.start()]))
            expr = r"(?P<section>\d+)" if m.group(1) == "section" else rf"(?P<{m.group(1)}>[^/]+)"
            out.append(expr)
            pos = m.end()
        out.append(re.escape(template[pos:]))
        return re.compile("^" + "".join(out) + "$")

    def match(self, relpath: str) -> dict | None:
        m = self.regex.match(relpath)
        if m is None:
            return None
        fields = dict(self.constants)
        fields.update(m.groupdict())
        missing = [f for f in _FIELDS if f not in fields]
        if missing:
            raise ConfigError(
                f"pattern {self.template!r} leaves fields {missing} undefined "
                f"(add them as constants in the layout descriptor)"
            )
        return fields


def load_layout(path: str | Path) -> list[_Pattern]:
    """Parse a layout descriptor file into matchable patterns."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"layout descriptor not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    patterns: list[_Pattern] = []
    for section in parser.sections():
        if not section.startswith("dataset "):
            raise ConfigError(f"{path}: unexpected section [{section}]")
        dataset_id = section.split(" ", 1)[1].strip()
        opts = dict(parser.items(section))
        templates = [t.strip() for t in opts.pop("pattern", "").splitlines() if t.strip()]
        if not templates:
            raise ConfigError(f"{path}: dataset {dataset_id!r} has no pattern")
        bad = set(opts) - set(_FIELDS)
        if bad:
            raise ConfigError(f"{path}: dataset {dataset_id!r} has unknown keys {sorted(bad)}")
        for t in templates:
            patterns.append(_Pattern(dataset_id, t, dict(opts)))
    if not patterns:
        raise ConfigError(f"{path}: no [dataset ...] sections found")
    return patterns


def scan_dataset(root: str | Path, layout: str | Path) -> DatasetIndex:
    """Build an index of every WAV under ``root`` using the layout descriptor.

    Files matching no pattern are reported in ``index.unmatched``; a file
    matching more than one (dataset, pattern) pair is an error.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root not found: {root}")
    patterns = load_layout(layout)

    clips: list[ClipKey] = []
    unmatched: list[str] = []
    for wav in sorted(root.rglob("*.wav")):
        rel = wav.relative_to(root).as_posix()
        hits = [p for p in patterns if p.match(rel) is not None]
        if not hits:
            unmatched.append(rel)
            continue
        if len(hits) > 1:
            names = ", ".join(f"{p.dataset_id}:{p.template}" for p in hits)
            raise DataError(f"ambiguous pattern match for {rel!r}: matches {names}")
        fields = hits[0].match(rel)
        clips.append(
            ClipKey(
                dataset_id=hits[0].dataset_id,
                device=fields["device"],
                section=int(fields["section"]),
                domain=fields["domain"],
                split=fields["split"],
                label=fields["label"],
                file_id=fields["file_id"],
                path=str(wav),
            )
        )
    if unmatched:
        log.warning("%d files matched no layout pattern (first: %s)", len(unmatched), unmatched[0])
    if not clips:
        raise DataError(f"no clips matched under {root}")

    stats: dict[tuple[str, int, str, str], int] = {}
    for c in clips:
        stats[c.group] = stats.get(c.group, 0) + 1
    index = DatasetIndex(clips=clips, stats=stats, unmatched=unmatched)
    index.validate()
    return index


def enumerate_splits(index: DatasetIndex) -> list[SplitGroup]:
    """Partition the index into (device, section, domain, split) groups,
    ordered lexicographically."""
    if not index.clips:
        raise DataError("cannot enumerate splits of an empty index")
    byg: dict[tuple, list[ClipKey]] = {}
    for c in index.clips:
        byg.setdefault(c.group, []).append(c)
    return [
        SplitGroup(device=k[0], section=k[1], domain=k[2], split=k[3], clips=tuple(v))
        for k, v in sorted(byg.items())
    ]


# --- synthetic corpus generation ---------------------------------------------

LAYOUT_BASENAME = "layout.txt"
_SYNTH_LAYOUT = """\
[dataset synth]
pattern = {device}/section_{section}_{domain}_{split}_{label}_{file_id}.wav
"""

_CLICK_LEN = 96
_CLICK_AMP = 0.95


def _base_tone(dev: int, sec: int) -> tuple[float, float]:
    # device/section-keyed fundamental; second partial deliberately inharmonic
    f0 = 180.0 + 97.0 * dev + 31.0 * sec
    return f0, 2.7 * f0


def _synth_clip(spec: SynthSpec, dev: int, sec: int, domain: str, split: str, label: str, idx: int) -> np.ndarray:
    rng = rng_for(spec.seed, "clip", dev, sec, domain, split, label, idx)
    sr = spec.sample_rate
    n = int(round(spec.clip_seconds * sr))
    t = np.arange(n) / sr
    f0, f1 = _base_tone(dev, sec)
    noise_amp = 0.008
    if domain == "target":
        if spec.domain_shift == "pitch_shift":
            shift = 2.0 ** (3.0 / 12.0)
            f0, f1 = f0 * shift, f1 * shift
        else:
            noise_amp *= 8.0

    am = 1.0 + 0.05 * np.sin(2 * np.pi * 0.7 * t + rng.uniform(0, 2 * np.pi))
    x = am * (
        0.05 * np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
        + 0.025 * np.sin(2 * np.pi * f1 * t + rng.uniform(0, 2 * np.pi))
    )
    x += noise_amp * rng.standard_normal(n)

    if label == "anomalous":
        if spec.anomaly_kind == "click_train":
            # short windowed bursts, far enough apart to land in distinct
            # analysis frames, peaks well above the clip RMS level
            margin = 2 * _CLICK_LEN
            slots = np.arange(margin, n - margin - _CLICK_LEN, 2048)
            if len(slots) < 3:
                raise DataError("clip too short for click_train anomalies (need >= 3 slots)")
            starts = rng.choice(slots, size=min(4, len(slots)), replace=False)
            click = _CLICK_AMP * np.hanning(_CLICK_LEN)
            for s in np.sort(starts):
                x[s : s + _CLICK_LEN] += click * rng.choice([-1.0, 1.0])
        elif spec.anomaly_kind == "noise_burst":
            burst_len = min(n // 3, int(0.4 * sr))
            s = int(rng.integers(0, n - burst_len))
            x[s : s + burst_len] += 0.3 * rng.standard_normal(burst_len)
        else:  # detune
            half = n // 2
            f_det = f0 * 2.0 ** (1.5 / 12.0)
            x[half:] += 0.05 * np.sin(2 * np.pi * f_det * t[half:])

    return np.clip(x, -0.999, 0.999)


def synth_dataset(spec: SynthSpec, out: str | Path) -> DatasetIndex:
    """Write a synthetic WAV corpus under ``out`` and index it.

    Train splits hold only normal clips; test splits hold half normal, half
    anomalous.  Target-domain clips apply ``spec.domain_shift``.  Output is
    byte-deterministic for a fixed seed.
    """
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    if not out.is_dir():
        raise DataError(f"output path is not a directory: {out}")

    (out / LAYOUT_BASENAME).write_text(_SYNTH_LAYOUT)
    cps = spec.clips_per_split
    for dev in range(spec.devices):
        device = f"dev{dev:02d}"
        for sec in range(spec.sections):
            for domain in ("source", "target"):
                plans = [("train", "normal", i) for i in range(cps)]
                n_anom = cps // 2
                plans += [("test", "normal", i) for i in range(cps - n_anom)]
                plans += [("test", "anomalous", i) for i in range(n_anom)]
                for split, label, i in plans:
                    x = _synth_clip(spec, dev, sec, domain, split, label, i)
                    name = f"section_{sec:02d}_{domain}_{split}_{label}_{i:04d}.wav"
                    path = out / device / name
                    path.parent.mkdir(parents=True, exist_ok=True)
                    pcm = np.round(x * 32767.0).astype(np.int16)
                    try:
                        wavfile.write(path, spec.sample_rate, pcm)
                    except OSError as exc:
                        raise DataError(f"cannot write {path}: {exc}") from exc
    return scan_dataset(out, out / LAYOUT_BASENAME)
