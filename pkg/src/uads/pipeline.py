"""Pipeline stages: index -> features -> corpora -> umap -> metrics -> plots,
plus the viewer-bundle export.

Every stage writes its artifacts under the cache/output directories along
with a manifest recording a fingerprint of (relevant config sections +
upstream artifact hashes).  Re-running a stage whose fingerprint and outputs
are unchanged is a no-op.
"""

import hashlib
import json
import logging
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import cache
from .config import PipelineConfig
from .corpus import Corpus, read_corpus, subsample, write_corpus
from .dataset import DatasetIndex, enumerate_splits, scan_dataset
from .errors import ConfigError, DataError
from .features import FrameSet, Spectrogram, clip_base_frames, ingest_embeddings, stack_frames
from .metrics import energy_landmark, metrics_sweep, sweep_to_csv
from .plots import overlay_landmark, render_kind
from .seeding import rng_for
from .umap import Projection, umap

log = logging.getLogger(__name__)

STAGES = ("index", "features", "corpora", "umap", "metrics", "plots")
EXPORT_POINT_CAP = 50_000


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Pipeline:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.cache_dir = Path(cfg.cache_dir)
        self.output_dir = Path(cfg.output_dir)
        self.runs_dir = self.cache_dir / "runs"
        self._index: DatasetIndex | None = None
        self._base_frames: dict[str, dict] = {}

    # --- manifest helpers -----------------------------------------------

    def _manifest_path(self, stage: str) -> Path:
        return self.runs_dir / f"{stage}.json"

    def _load_manifest(self, stage: str) -> dict | None:
        p = self._manifest_path(stage)
        if not p.is_file():
            return None
        try:
            return json.loads(p.read_text())
        except json.JSONDecodeError:
            return None

    def _write_manifest(self, stage: str, fingerprint: str, outputs: dict[str, str], cached: bool) -> None:
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "stage": stage,
            "fingerprint": fingerprint,
            "outputs": outputs,
            "cached": cached,
            "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        self._manifest_path(stage).write_text(json.dumps(payload, indent=1, sort_keys=True))

    def _outputs_intact(self, manifest: dict) -> bool:
        for rel, digest in manifest["outputs"].items():
            p = self.cache_dir / rel
            if not p.is_file() and (self.output_dir / rel).is_file():
                p = self.output_dir / rel
            if not p.is_file() or sha256_file(p) != digest:
                return False
        return True

    def _stage_done(self, stage: str, fingerprint: str) -> bool:
        manifest = self._load_manifest(stage)
        if manifest is None or manifest["fingerprint"] != fingerprint:
            return False
        if not self._outputs_intact(manifest):
            return False
        self._write_manifest(stage, fingerprint, manifest["outputs"], cached=True)
        log.info("stage %s: all outputs cached, skipping", stage)
        return True

    def _upstream_fingerprint(self, stage: str) -> str:
        manifest = self._load_manifest(stage)
        if manifest is None:
            raise DataError(f"missing upstream artifacts: run stage '{stage}' first")
        if not self._outputs_intact(manifest):
            raise DataError(f"stale upstream artifacts: rerun stage '{stage}'")
        return sha256_text(json.dumps(manifest["outputs"], sort_keys=True))

    def _record_outputs(self, stage: str, fingerprint: str, paths: list[Path]) -> None:
        outputs = {}
        for p in paths:
            base = self.cache_dir if p.is_relative_to(self.cache_dir) else self.output_dir
            outputs[str(p.relative_to(base))] = sha256_file(p)
        self._write_manifest(stage, fingerprint, outputs, cached=False)

    # --- shared state ------------------------------------------------------

    def index(self) -> DatasetIndex:
        if self._index is None:
            self._index = scan_dataset(self.cfg.root, self.cfg.layout)
        return self._index

    def representations(self) -> list[str]:
        reps = ["log_stft", "log_mel"]
        if self.cfg.sidecar_dir is not None:
            reps.append("embedding")
        return reps

    def scopes(self) -> list[tuple[str, str | None]]:
        devices = sorted({c.device for c in self.index().clips if c.domain != "external"})
        return [("device", d) for d in devices] + [("global", None)]

    def _clip_cache_path(self, rep: str, clip_path: str) -> Path:
        digest = hashlib.sha1(clip_path.encode()).hexdigest()[:16]
        return self.cache_dir / "features" / rep / f"{digest}.uadf"

    def _sidecar_path(self, clip) -> Path:
        rel = Path(clip.path).resolve().relative_to(Path(self.cfg.root).resolve())
        return Path(self.cfg.sidecar_dir) / rel.with_suffix(".uadf")

    # --- stages -------------------------------------------------------------

    def run(self, stage: str) -> None:
        self.cfg.validate()
        if stage == "all":
            for s in STAGES:
                self.run(s)
            return
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; valid: {', '.join(STAGES)}, all")
        getattr(self, f"_stage_{stage}")()

    def _stage_index(self) -> None:
        wavs = sorted(Path(self.cfg.root).rglob("*.wav"))
        h = hashlib.sha256()
        for w in wavs:
            h.update(str(w).encode())
            h.update(sha256_file(w).encode())
        fp = sha256_text(self.cfg.fingerprint("dataset") + h.hexdigest() + sha256_file(self.cfg.layout))
        if self._stage_done("index", fp):
            return
        t0 = time.time()
        index = scan_dataset(self.cfg.root, self.cfg.layout)
        self._index = index
        out = self.cache_dir / "index.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        index.to_csv(out)
        unmatched = self.cache_dir / "unmatched.txt"
        unmatched.write_text("\n".join(index.unmatched) + ("\n" if index.unmatched else ""))
        self._record_outputs("index", fp, [out, unmatched])
        log.info("stage index: %d clips, %d groups (%.1fs)", len(index), len(index.stats), time.time() - t0)

    def _stage_features(self) -> None:
        fp = sha256_text(self.cfg.fingerprint("dataset", "features") + self._upstream_fingerprint("index"))
        if self._stage_done("features", fp):
            return
        t0 = time.time()
        index = self.index()
        outputs: list[Path] = []

        def one(clip):
            src_sha = sha256_file(Path(clip.path))
            paths = {rep: self._clip_cache_path(rep, clip.path) for rep in ("log_stft", "log_mel")}
            fresh = {}
            for rep, p in paths.items():
                if p.is_file():
                    try:
                        _, meta = cache.read_cache(p)
                        if meta.get("source_sha") == src_sha:
                            continue
                    except DataError:
                        pass
                fresh[rep] = p
            if not fresh:
                return list(paths.values())
            base = clip_base_frames(clip.path, self.cfg.features)
            energy = base["energy"]
            for rep, p in fresh.items():
                spec: Spectrogram = base[rep]
                cache.write_cache(
                    p,
                    spec.values.astype(np.float32),
                    {
                        "kind": "clip-frames",
                        "representation": rep,
                        "hop_seconds": spec.frame_hop_seconds,
                        "source_sha": src_sha,
                        "energy": [float(e) for e in energy],
                    },
                )
            return list(paths.values())

        if self.cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.threads) as pool:
                for paths in pool.map(one, index.clips):
                    outputs.extend(paths)
        else:
            for clip in index.clips:
                outputs.extend(one(clip))
        self._record_outputs("features", fp, sorted(set(outputs)))
        log.info("stage features: %d clips (%.1fs)", len(index), time.time() - t0)

    def _load_base(self, clip, rep: str):
        """Clip base frames for a representation: (matrix, hop_seconds, energy)."""
        key = f"{rep}|{clip.path}"
        if key not in self._base_frames:
            if rep == "embedding":
                fs = ingest_embeddings(
                    self._sidecar_path(clip),
                    clip,
                    expected_dim=self.cfg.features.embedding_dim,
                    expected_hop_seconds=self.cfg.features.embedding_hop_seconds,
                )
                self._base_frames[key] = (fs.matrix, self.cfg.features.embedding_hop_seconds, fs.energies)
            else:
                matrix, meta = cache.read_cache(self._clip_cache_path(rep, clip.path))
                energy = np.asarray(meta["energy"], dtype=np.float64)
                self._base_frames[key] = (matrix, float(meta["hop_seconds"]), energy)
        return self._base_frames[key]

    def _build_groups(self, clips, rep: str, stack: int) -> dict[tuple, list[FrameSet]]:
        groups: dict[tuple, list[FrameSet]] = {}
        for clip in clips:
            if rep == "embedding" and clip.domain == "external" and self.cfg.sidecar_dir is None:
                continue
            matrix, hop, energy = self._load_base(clip, rep)
            spec = Spectrogram(values=matrix, frame_hop_seconds=hop, bin_kind=rep, is_db=True)
            fs = stack_frames(
                spec, clip, stack, stride=self.cfg.stack_stride, energies=energy, representation=rep
            )
            if fs.matrix.shape[0] == 0:
                continue
            groups.setdefault(clip.group, []).append(fs)
        return groups

    def corpus_path(self, rep: str, stack: int, scope_id: str) -> Path:
        return self.cache_dir / "corpora" / f"{rep}_s{stack}_{scope_id}.uadf"

    def projection_path(self, rep: str, stack: int, scope_id: str) -> Path:
        return self.cache_dir / "umap" / f"{rep}_s{stack}_{scope_id}.uadf"

    def combos(self) -> list[tuple[str, int, str, str | None]]:
        out = []
        for rep in self.representations():
            for stack in self.cfg.stack_sizes:
                for scope, device in self.scopes():
                    scope_id = "global" if scope == "global" else f"device-{device}"
                    out.append((rep, stack, scope_id, device))
        return out

    def _stage_corpora(self) -> None:
        fp = sha256_text(
            self.cfg.fingerprint("dataset", "features", "stacks", "sampling")
            + self._upstream_fingerprint("features")
        )
        if self._stage_done("corpora", fp):
            return
        t0 = time.time()
        index = self.index()
        outputs = []
        for rep, stack, scope_id, device in self.combos():
            if scope_id == "global":
                clips, policy, scope = index.clips, self.cfg.sampling_global, "global"
            else:
                clips = [c for c in index.clips if c.device == device]
                policy, scope = self.cfg.sampling_device, "device"
            groups = self._build_groups(clips, rep, stack)
            if not groups:
                log.warning("no frames for %s s%d %s; skipping corpus", rep, stack, scope_id)
                continue
            corpus = subsample(groups, policy, scope, device=device, representation=rep, stack_size=stack)
            path = self.corpus_path(rep, stack, scope_id)
            write_corpus(path, corpus)
            outputs.append(path)
        self._base_frames.clear()
        self._record_outputs("corpora", fp, outputs)
        log.info("stage corpora: %d corpora (%.1fs)", len(outputs), time.time() - t0)

    def _stage_umap(self) -> None:
        fp = sha256_text(self.cfg.fingerprint("umap") + self._upstream_fingerprint("corpora"))
        if self._stage_done("umap", fp):
            return
        t0 = time.time()
        outputs = []
        corpora = sorted((self.cache_dir / "corpora").glob("*.uadf"))
        for cpath in corpora:
            corpus = read_corpus(cpath)
            proj = umap(
                corpus.matrix,
                self.cfg.umap,
                deterministic=self.cfg.deterministic,
                corpus_ref=cpath.name,
            )
            ppath = self.cache_dir / "umap" / cpath.name
            cache.write_cache(
                ppath,
                proj.coords,
                {
                    "kind": "projection",
                    "corpus": cpath.name,
                    "corpus_sha": sha256_file(cpath),
                    "params": self.cfg.umap.to_dict(),
                },
            )
            outputs.append(ppath)
            log.info("umap %s: %d rows (%.1fs elapsed)", cpath.stem, len(corpus), time.time() - t0)
        self._record_outputs("umap", fp, outputs)

    def load_projection(self, rep: str, stack: int, scope_id: str) -> tuple[Corpus, np.ndarray]:
        cpath = self.corpus_path(rep, stack, scope_id)
        ppath = self.projection_path(rep, stack, scope_id)
        if not cpath.is_file() or not ppath.is_file():
            raise DataError(f"missing corpus/projection for {rep} s{stack} {scope_id}")
        corpus = read_corpus(cpath)
        coords, meta = cache.read_cache(ppath)
        if meta.get("corpus_sha") != sha256_file(cpath):
            raise DataError(f"projection {ppath.name} is stale; rerun stage 'umap'")
        return corpus, coords

    def _stage_metrics(self) -> None:
        fp = sha256_text(
            self.cfg.fingerprint("metrics")
            + self._upstream_fingerprint("corpora")
            + self._upstream_fingerprint("umap")
        )
        if self._stage_done("metrics", fp):
            return
        t0 = time.time()
        items = []
        for rep, stack, scope_id, device in self.combos():
            if scope_id == "global" or not self.corpus_path(rep, stack, scope_id).is_file():
                continue
            items.append(self.load_projection(rep, stack, scope_id))
        rows = metrics_sweep(items, self.cfg.metrics)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        out = self.output_dir / "metrics.csv"
        sweep_to_csv(rows, self.cfg.metrics, out)
        self._record_outputs("metrics", fp, [out])
        log.info("stage metrics: %d rows (%.1fs)", len(rows), time.time() - t0)
        self._sep_hypothesis_note(rows)

    def _sep_hypothesis_note(self, rows: list[dict]) -> None:
        """Soft check: longer log-mel stacks should not separate worse."""
        by_stack: dict[int, list[float]] = {}
        cname = f"sep_error_c{self.cfg.metrics.c_sweep[-1]:g}"
        for row in rows:
            if row["representation"] == "log_mel" and row["space"] == "original" and row.get(cname) is not None:
                by_stack.setdefault(row["stack_size"], []).append(row[cname])
        if 1 in by_stack and 5 in by_stack:
            e1 = float(np.mean(by_stack[1]))
            e5 = float(np.mean(by_stack[5]))
            if e5 <= e1 + 1e-12:
                log.info("SEP tendency holds: log-mel stack-5 error %.4f <= stack-1 error %.4f", e5, e1)
            else:
                log.warning(
                    "SEP tendency check: log-mel stack-5 error %.4f > stack-1 error %.4f "
                    "(reported as a warning, not a failure)", e5, e1,
                )

    def _stage_plots(self) -> None:
        fp = sha256_text(
            self.cfg.fingerprint("plots")
            + self._upstream_fingerprint("corpora")
            + self._upstream_fingerprint("umap")
        )
        if self._stage_done("plots", fp):
            return
        t0 = time.time()
        pc = self.cfg.plots
        plot_dir = self.output_dir / "plots"
        plot_dir.mkdir(parents=True, exist_ok=True)
        outputs = []
        entries = []
        style = dict(
            width=pc.width,
            height=pc.height,
            point_size_train=pc.point_size_train,
            point_size_test=pc.point_size_test,
            palette_seed=self.cfg.seed,
            thinning=pc.thinning,
        )
        for rep, stack, scope_id, device in self.combos():
            if not self.corpus_path(rep, stack, scope_id).is_file():
                continue
            corpus, coords = self.load_projection(rep, stack, scope_id)
            if scope_id == "global":
                jobs = [("global", None, None)]
            else:
                jobs = [("device", device, None)]
                jobs += [
                    ("section", device, int(s))
                    for s in sorted(corpus.meta["section"].unique())
                ]
            for kind, dev, section in jobs:
                plot = render_kind(corpus, coords, kind, device=dev, section=section, **style)
                if pc.landmark and len(corpus) >= pc.landmark_skip + pc.landmark_take:
                    lm = energy_landmark(corpus, coords, skip=pc.landmark_skip, take=pc.landmark_take)
                    plot = overlay_landmark(plot, lm)
                path = plot_dir / f"{plot.spec.name}.svg"
                path.write_text(plot.svg)
                outputs.append(path)
                entries.append(
                    {
                        "file": f"plots/{path.name}",
                        "kind": kind,
                        "representation": rep,
                        "stack_size": stack,
                        "device": dev,
                        "section": section,
                        "points": plot.layer_counts,
                    }
                )
        manifest_path = self.output_dir / "plots_manifest.json"
        manifest_path.write_text(json.dumps({"plots": entries}, indent=1, sort_keys=True))
        outputs.append(manifest_path)
        self._record_outputs("plots", fp, outputs)
        log.info("stage plots: %d files (%.1fs)", len(outputs) - 1, time.time() - t0)

    # --- viewer bundle -------------------------------------------------------

    def export_viewer_bundle(self, out_dir: Path, ui_dir: Path | None = None) -> dict:
        out_dir = Path(out_dir)
        projections = []
        combos = [c for c in self.combos() if self.corpus_path(*c[:3]).is_file()]
        if not combos:
            raise DataError("nothing to export: no corpora/projections found")
        (out_dir / "points").mkdir(parents=True, exist_ok=True)
        (out_dir / "caches").mkdir(parents=True, exist_ok=True)
        for rep, stack, scope_id, device in combos:
            proj_id = f"{rep}_s{stack}_{scope_id}"
            corpus, coords = self.load_projection(rep, stack, scope_id)
            n = len(corpus)
            rows = np.arange(n)
            if n > EXPORT_POINT_CAP:
                rng = rng_for(self.cfg.seed, "export", proj_id)
                rows = np.sort(rng.choice(n, size=EXPORT_POINT_CAP, replace=False))
            meta = corpus.meta.iloc[rows]
            pts = {
                "id": [int(r) for r in rows],
                "x": [float(v) for v in coords[rows, 0]],
                "y": [float(v) for v in coords[rows, 1]],
                "device": meta["device"].tolist(),
                "section": [int(s) for s in meta["section"]],
                "domain": meta["domain"].tolist(),
                "split": meta["split"].tolist(),
                "label": meta["label"].tolist(),
                "file_id": meta["file_id"].tolist(),
                "time": [float(t) for t in meta["time"]],
                "energy": [None if np.isnan(e) else float(e) for e in meta["energy"]],
            }
            points_file = f"points/{proj_id}.json"
            (out_dir / points_file).write_text(json.dumps({"id": proj_id, "points": pts}))
            shutil.copy2(self.corpus_path(rep, stack, scope_id), out_dir / "caches" / f"corpus_{proj_id}.uadf")
            shutil.copy2(self.projection_path(rep, stack, scope_id), out_dir / "caches" / f"proj_{proj_id}.uadf")
            projections.append(
                {
                    "id": proj_id,
                    "representation": rep,
                    "stack_size": stack,
                    "scope": scope_id,
                    "device": device,
                    "n_rows": n,
                    "n_points": len(rows),
                    "points_file": points_file,
                    "corpus_cache": f"caches/corpus_{proj_id}.uadf",
                    "projection_cache": f"caches/proj_{proj_id}.uadf",
                    "params": self.cfg.umap.to_dict(),
                }
            )
        metrics_csv = self.output_dir / "metrics.csv"
        has_metrics = metrics_csv.is_file()
        if has_metrics:
            shutil.copy2(metrics_csv, out_dir / "metrics.csv")
        manifest = {
            "projections": projections,
            "metrics_csv": "metrics.csv" if has_metrics else None,
            "metric_params": {
                "c_sweep": list(self.cfg.metrics.c_sweep),
                "knn_k": self.cfg.metrics.knn_k,
                "lof_k": self.cfg.metrics.lof_k,
                "quantile": self.cfg.metrics.quantile,
                "pauc_p": self.cfg.metrics.pauc_p,
            },
            "seed": self.cfg.seed,
        }
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
        if ui_dir is not None and Path(ui_dir).is_dir():
            shutil.copytree(ui_dir, out_dir / "ui", dirs_exist_ok=True)
        return manifest
