"""Categorical colors for the scatter plots."""

import colorsys

import numpy as np

from .seeding import rng_for

# fixed 20-color categorical palette
PALETTE20 = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#b5620b", "#637939", "#843c39", "#7b4173",
    "#5254a3", "#bd9e39", "#8ca252", "#ad494a", "#a55194",
]

MARKERS = ("circle", "square", "diamond", "triangle")


def hex_to_rgb(h: str) -> tuple[float, float, float]:
    h = h.lstrip("#")
    return tuple(int(h[i : i + 2], 16) / 255.0 for i in (0, 2, 4))


def rgb_to_hex(rgb) -> str:
    return "#%02x%02x%02x" % tuple(int(round(max(0.0, min(1.0, c)) * 255)) for c in rgb)


def adjust(color: str, saturation: float = 1.0, lightness: float = 1.0) -> str:
    """Scale HLS saturation / push lightness toward white (factor > 1)."""
    h, l, s = colorsys.rgb_to_hls(*hex_to_rgb(color))
    s = max(0.0, min(1.0, s * saturation))
    l = max(0.0, min(1.0, 1.0 - (1.0 - l) / lightness))
    return rgb_to_hex(colorsys.hls_to_rgb(h, l, s))


def shuffled_palette(seed: int, name: str) -> list[str]:
    order = rng_for(seed, "palette", name).permutation(len(PALETTE20))
    return [PALETTE20[i] for i in order]


def marker_for(index: int) -> str:
    return MARKERS[(index // len(PALETTE20)) % len(MARKERS)]
