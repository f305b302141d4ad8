"""Dual scatter-plot rendering to SVG.

Each plot shows anomalous test data on the right panel, normal test data on
the left, and the training data as larger desaturated shadows on both sides.
Panels share identical axis limits.  Every point element carries a
``data-row`` attribute with its corpus row index, which the interactive
viewer and the golden-file tests rely on.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .corpus import Corpus
from .errors import DataError
from .palette import PALETTE20, adjust, marker_for, shuffled_palette
from .seeding import rng_for

log = logging.getLogger(__name__)

KINDS = ("global", "device", "section")
PAD_FRACTION = 0.05


@dataclass
class PlotSpec:
    kind: str
    representation: str = ""
    stack_size: int = 1
    device: str | None = None
    section: int | None = None
    width: int = 900
    height: int = 420
    point_size_train: float = 3.0
    point_size_test: float = 1.6
    palette_seed: int = 0
    thinning: bool = False
    thin_grid: int = 96
    thin_cap: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown plot kind {self.kind!r}")
        if self.point_size_train <= self.point_size_test:
            raise DataError("training shadows must be larger than test dots")

    @property
    def color_key(self) -> str:
        return {"global": "device", "device": "section+domain", "section": "file_id"}[self.kind]

    @property
    def name(self) -> str:
        parts = [self.representation or "rep", f"s{self.stack_size}", self.kind]
        if self.device is not None:
            parts.append(str(self.device))
        if self.section is not None:
            parts.append(f"sec{self.section}")
        return "_".join(parts)


@dataclass
class _Panel:
    x0: float
    y0: float
    w: float
    h: float
    xlim: tuple[float, float]
    ylim: tuple[float, float]

    def to_px(self, x: float, y: float) -> tuple[float, float]:
        fx = (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0])
        fy = (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0])
        return (self.x0 + fx * self.w, self.y0 + (1.0 - fy) * self.h)


@dataclass
class RenderedPlot:
    spec: PlotSpec
    legend: list[tuple[str, str]]
    layer_counts: dict[str, int]
    panels: dict[str, _Panel]
    _parts: dict[str, list[str]] = field(default_factory=dict)
    _landmarks: list[np.ndarray] = field(default_factory=list)

    @property
    def svg(self) -> str:
        return _assemble(self)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _marker_svg(shape: str, x: float, y: float, r: float, fill: str, opacity: float, row: int) -> str:
    common = f'fill="{fill}" fill-opacity="{opacity:.2f}" data-row="{row}"'
    if shape == "circle":
        return f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" {common}/>'
    if shape == "square":
        return (
            f'<rect x="{_fmt(x - r)}" y="{_fmt(y - r)}" width="{_fmt(2 * r)}" '
            f'height="{_fmt(2 * r)}" {common}/>'
        )
    if shape == "diamond":
        pts = f"{_fmt(x)},{_fmt(y - r)} {_fmt(x + r)},{_fmt(y)} {_fmt(x)},{_fmt(y + r)} {_fmt(x - r)},{_fmt(y)}"
        return f'<polygon points="{pts}" {common}/>'
    pts = f"{_fmt(x)},{_fmt(y - r)} {_fmt(x + r)},{_fmt(y + r)} {_fmt(x - r)},{_fmt(y + r)}"
    return f'<polygon points="{pts}" {common}/>'


def _categories(meta: pd.DataFrame, spec: PlotSpec) -> tuple[pd.Series, list, dict, dict]:
    """Per-row category labels plus category -> (color, marker) maps."""
    if spec.kind == "global":
        labels = meta["device"].astype(str)
        cats = sorted(labels.unique())
        colors = {c: PALETTE20[i % len(PALETTE20)] for i, c in enumerate(cats)}
        markers = {c: marker_for(i) for i, c in enumerate(cats)}
    elif spec.kind == "device":
        labels = meta["section"].astype(str) + "/" + meta["domain"].astype(str)
        sections = sorted(meta["section"].unique())
        hue = {str(s): PALETTE20[i % len(PALETTE20)] for i, s in enumerate(sections)}
        cats = sorted(labels.unique())
        colors = {}
        for c in cats:
            sec, domain = c.split("/")
            # saturation separates source from target within a section hue
            colors[c] = hue[sec] if domain == "source" else adjust(hue[sec], saturation=0.35, lightness=1.6)
        markers = {c: "circle" for c in cats}
    else:
        labels = meta["file_id"].astype(str)
        cats = sorted(labels.unique())
        pal = shuffled_palette(spec.palette_seed, spec.name)
        colors = {c: pal[i % len(pal)] for i, c in enumerate(cats)}
        markers = {c: marker_for(i) for i, c in enumerate(cats)}
    return labels, cats, colors, markers


def _thin(rows: np.ndarray, coords: np.ndarray, energy: np.ndarray, panel: _Panel, spec: PlotSpec) -> np.ndarray:
    """Grid-based density thinning keeping the energy extremes per cell."""
    if not spec.thinning or rows.size <= spec.thin_cap:
        return rows
    gx = np.clip(((coords[rows, 0] - panel.xlim[0]) / (panel.xlim[1] - panel.xlim[0]) * spec.thin_grid).astype(int), 0, spec.thin_grid - 1)
    gy = np.clip(((coords[rows, 1] - panel.ylim[0]) / (panel.ylim[1] - panel.ylim[0]) * spec.thin_grid).astype(int), 0, spec.thin_grid - 1)
    cell = gx * spec.thin_grid + gy
    keep: list[int] = []
    order = np.argsort(cell, kind="stable")
    start = 0
    e = np.nan_to_num(energy[rows], nan=0.0)
    while start < len(order):
        stop = start
        while stop < len(order) and cell[order[stop]] == cell[order[start]]:
            stop += 1
        members = order[start:stop]
        if len(members) <= spec.thin_cap:
            keep.extend(members.tolist())
        else:
            by_e = members[np.argsort(e[members], kind="stable")]
            half = spec.thin_cap // 2
            keep.extend(by_e[:half].tolist())
            keep.extend(by_e[-(spec.thin_cap - half):].tolist())
        start = stop
    return rows[np.sort(np.array(keep, dtype=int))]


def render_dual(coords: np.ndarray, meta: pd.DataFrame, spec: PlotSpec) -> RenderedPlot:
    """Render the dual panel scatter for aligned (projection, meta) rows."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[0] != len(meta):
        raise DataError("projection and corpus meta rows are misaligned")
    if coords.shape[0] == 0:
        raise DataError("nothing to render")
    meta = meta.reset_index(drop=True)

    split = meta["split"].to_numpy()
    label = meta["label"].to_numpy()
    train_rows = np.flatnonzero(split == "train")
    left_rows = np.flatnonzero((split == "test") & (label == "normal"))
    right_rows = np.flatnonzero((split == "test") & (label == "anomalous"))
    skipped = np.flatnonzero((split == "test") & ~np.isin(label, ["normal", "anomalous"]))
    if skipped.size:
        log.warning("%d unlabeled test rows left out of the plot", skipped.size)

    pad_x = PAD_FRACTION * max(float(np.ptp(coords[:, 0])), 1e-9)
    pad_y = PAD_FRACTION * max(float(np.ptp(coords[:, 1])), 1e-9)
    xlim = (coords[:, 0].min() - pad_x, coords[:, 0].max() + pad_x)
    ylim = (coords[:, 1].min() - pad_y, coords[:, 1].max() + pad_y)

    margin, title_h, legend_w = 10.0, 26.0, 170.0
    panel_w = (spec.width - legend_w - 3 * margin) / 2.0
    panel_h = spec.height - title_h - 2 * margin
    panels = {
        "left": _Panel(margin, title_h + margin, panel_w, panel_h, xlim, ylim),
        "right": _Panel(2 * margin + panel_w, title_h + margin, panel_w, panel_h, xlim, ylim),
    }

    labels, cats, colors, markers = _categories(meta, spec)
    energy = meta["energy"].to_numpy()

    parts: dict[str, list[str]] = {"left": [], "right": []}
    counts = {"train": 0, "left_test": 0, "right_test": 0}
    for side, test_rows in (("left", left_rows), ("right", right_rows)):
        panel = panels[side]
        shadow_rows = _thin(train_rows, coords, energy, panel, spec)
        for r in shadow_rows:
            cat = labels.iat[r]
            x, y = panel.to_px(coords[r, 0], coords[r, 1])
            color = adjust(colors[cat], saturation=0.45, lightness=1.7)
            parts[side].append(
                _marker_svg(markers[cat], x, y, spec.point_size_train, color, 0.55, int(r))
            )
        counts["train"] += len(shadow_rows)
        rows = _thin(test_rows, coords, energy, panel, spec)
        for r in rows:
            cat = labels.iat[r]
            x, y = panel.to_px(coords[r, 0], coords[r, 1])
            parts[side].append(
                _marker_svg(markers[cat], x, y, spec.point_size_test, colors[cat], 0.9, int(r))
            )
        counts["left_test" if side == "left" else "right_test"] += len(rows)

    legend = [(str(c), colors[c]) for c in cats]
    return RenderedPlot(spec=spec, legend=legend, layer_counts=counts, panels=panels, _parts=parts)


def overlay_landmark(plot: RenderedPlot, landmark: np.ndarray) -> RenderedPlot:
    """Draw a cross at the landmark position, topmost, on both panels."""
    landmark = np.asarray(landmark, dtype=np.float64)
    if landmark.shape != (2,) or not np.all(np.isfinite(landmark)):
        raise DataError("landmark must be a finite 2D point")
    plot._landmarks.append(landmark)
    return plot


def _assemble(plot: RenderedPlot) -> str:
    spec = plot.spec
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" height="{spec.height}" '
        f'viewBox="0 0 {spec.width} {spec.height}">',
        f'<rect width="{spec.width}" height="{spec.height}" fill="white"/>',
        f'<text x="10" y="18" font-family="sans-serif" font-size="13">{spec.name} '
        f'(left: normal test, right: anomalous test, shadows: training)</text>',
    ]
    for side in ("left", "right"):
        p = plot.panels[side]
        out.append(
            f'<g id="panel-{side}" data-xmin="{p.xlim[0]!r}" data-xmax="{p.xlim[1]!r}" '
            f'data-ymin="{p.ylim[0]!r}" data-ymax="{p.ylim[1]!r}">'
        )
        out.append(
            f'<rect x="{_fmt(p.x0)}" y="{_fmt(p.y0)}" width="{_fmt(p.w)}" height="{_fmt(p.h)}" '
            f'fill="none" stroke="#888" stroke-width="1"/>'
        )
        out.extend(plot._parts[side])
        for lm in plot._landmarks:
            x, y = p.to_px(lm[0], lm[1])
            out.append(
                f'<path d="M {_fmt(x - 6)} {_fmt(y)} L {_fmt(x + 6)} {_fmt(y)} '
                f'M {_fmt(x)} {_fmt(y - 6)} L {_fmt(x)} {_fmt(y + 6)}" '
                f'stroke="black" stroke-width="1.8" class="landmark"/>'
            )
        out.append("</g>")
    out.append('<g id="legend" font-family="sans-serif" font-size="10">')
    lx = spec.width - 160
    for i, (cat, color) in enumerate(plot.legend[:28]):
        ly = 36 + i * 13
        out.append(f'<rect x="{lx}" y="{ly - 8}" width="9" height="9" fill="{color}"/>')
        out.append(f'<text x="{lx + 13}" y="{ly}">{_escape(cat)}</text>')
    if len(plot.legend) > 28:
        out.append(f'<text x="{lx}" y="{36 + 28 * 13}">... {len(plot.legend) - 28} more</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out)


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_kind(
    corpus: Corpus,
    coords: np.ndarray,
    kind: str,
    device: str | None = None,
    section: int | None = None,
    **spec_kwargs,
) -> RenderedPlot:
    """Render one of the three plot kinds from a corpus and its projection."""
    if kind not in KINDS:
        raise DataError(f"unknown plot kind {kind!r}")
    meta = corpus.meta
    mask = np.ones(len(meta), dtype=bool)
    if kind == "global":
        if corpus.scope != "global":
            raise DataError("global plots need the global corpus")
    else:
        if corpus.scope != "device":
            raise DataError(f"{kind} plots need a per-device corpus")
        available = sorted(meta["device"].unique())
        if device is None or device not in available:
            raise DataError(f"unknown device {device!r}; available: {available}")
        mask &= (meta["device"] == device).to_numpy()
        if kind == "section":
            sections = sorted(meta.loc[mask, "section"].unique())
            if section is None or section not in sections:
                raise DataError(f"unknown section {section!r}; available: {sections}")
            mask &= (meta["section"] == section).to_numpy()
    spec = PlotSpec(
        kind=kind,
        representation=corpus.representation,
        stack_size=corpus.stack_size,
        device=device if kind != "global" else None,
        section=section if kind == "section" else None,
        **spec_kwargs,
    )
    return render_dual(np.asarray(coords)[mask], meta.loc[mask], spec)
