"""Read-only HTTP service over an exported viewer bundle.

Endpoints:
    GET  /api/manifest
    GET  /api/projection/{proj_id}/points
    POST /api/selection/metrics   {projection_id, row_ids[], space}

Selection metrics reuse the exact batch code path (`metrics.group_metrics`)
so a selection covering a full group reproduces the sweep row bit-for-bit.
Static viewer files are served from the bundle's ui/ directory when present.
"""

import json
import logging
from functools import lru_cache
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from . import cache
from .corpus import read_corpus
from .errors import DataError
from .metrics import MetricParams, group_metrics

log = logging.getLogger(__name__)


class SelectionRequest(BaseModel):
    projection_id: str
    row_ids: list[int] = Field(min_length=1)
    space: str  # "projected" | "original"


def _sep_to_dict(rep) -> dict:
    return {
        "C": rep.C,
        "margin": rep.margin,
        "error_rate": rep.error_rate,
        "n": rep.n,
        "objective": rep.objective,
        "gap": rep.gap,
        "degenerate": rep.degenerate,
        "space": rep.space,
    }


def _dsup_to_dict(d) -> dict | None:
    if d is None:
        return None
    return {
        "k": d.k,
        "tau": d.tau,
        "q": d.q,
        "coverage": d.coverage,
        "distance_auc": d.distance_auc,
        "distance_pauc": d.distance_pauc,
        "space": d.space,
        "n_train": d.n_train,
        "n_test_normal": d.n_test_normal,
        "n_test_anom": d.n_test_anom,
    }


def create_app(bundle_dir: str | Path) -> FastAPI:
    bundle = Path(bundle_dir)
    manifest_path = bundle / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"not a viewer bundle (missing manifest.json): {bundle}")
    manifest = json.loads(manifest_path.read_text())
    projections = {p["id"]: p for p in manifest["projections"]}
    params = MetricParams(
        c_sweep=tuple(manifest["metric_params"]["c_sweep"]),
        knn_k=manifest["metric_params"]["knn_k"],
        lof_k=manifest["metric_params"]["lof_k"],
        quantile=manifest["metric_params"]["quantile"],
        pauc_p=manifest["metric_params"]["pauc_p"],
    )

    app = FastAPI(title="uads viewer service")

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed request body"})

    @lru_cache(maxsize=8)
    def load_corpus(proj_id: str):
        return read_corpus(bundle / projections[proj_id]["corpus_cache"])

    @lru_cache(maxsize=8)
    def load_coords(proj_id: str):
        coords, _meta = cache.read_cache(bundle / projections[proj_id]["projection_cache"])
        return coords

    @app.get("/api/manifest")
    def get_manifest():
        return manifest

    @app.get("/api/projection/{proj_id}/points")
    def get_points(proj_id: str):
        if proj_id not in projections:
            return JSONResponse(status_code=404, content={"detail": f"unknown projection {proj_id}"})
        return FileResponse(bundle / projections[proj_id]["points_file"], media_type="application/json")

    @app.post("/api/selection/metrics")
    def selection_metrics(req: SelectionRequest):
        if req.projection_id not in projections:
            return JSONResponse(status_code=404, content={"detail": f"unknown projection {req.projection_id}"})
        if req.space not in ("projected", "original"):
            return JSONResponse(status_code=400, content={"detail": f"bad space {req.space!r}"})
        corpus = load_corpus(req.projection_id)
        rows = np.unique(np.asarray(req.row_ids, dtype=np.int64))
        if rows.size == 0 or rows[0] < 0 or rows[-1] >= len(corpus):
            return JSONResponse(status_code=400, content={"detail": "row_ids out of range"})
        space = "projected_2d" if req.space == "projected" else "original"
        matrix = load_coords(req.projection_id) if req.space == "projected" else corpus.matrix
        g = group_metrics(matrix[rows], corpus.meta.iloc[rows], space, params)
        if g["sep_status"].startswith("skipped") and g["dsup"] is None:
            return JSONResponse(status_code=422, content={"detail": f"SEP undefined ({g['sep_status']})"})
        return {
            "projection_id": req.projection_id,
            "space": req.space,
            "n_rows": int(rows.size),
            "n_train": g["n_train"],
            "n_test_normal": g["n_test_normal"],
            "n_test_anom": g["n_test_anom"],
            "sep_status": g["sep_status"],
            "sep": [_sep_to_dict(r) for r in g["sep"]],
            "dsup_status": g["dsup_status"],
            "dsup": _dsup_to_dict(g["dsup"]),
        }

    ui_dir = bundle / "ui"

    @app.get("/")
    def root_page():
        index = ui_dir / "index.html"
        if index.is_file():
            return FileResponse(index)
        return JSONResponse({"detail": "no UI in bundle; API at /api/manifest"})

    @app.get("/ui/{path:path}")
    def ui_file(path: str):
        target = (ui_dir / path).resolve()
        if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
            return JSONResponse(status_code=404, content={"detail": "not found"})
        return FileResponse(target)

    @app.get("/points/{path:path}")
    def points_file(path: str):
        target = (bundle / "points" / path).resolve()
        if not str(target).startswith(str((bundle / "points").resolve())) or not target.is_file():
            return JSONResponse(status_code=404, content={"detail": "not found"})
        return FileResponse(target, media_type="application/json")

    return app
