"""Feature-map storage, pyramids, and dense sliding-window cosine matching.

A feature map is an ``(height, width, channels)`` grid of real activations;
matching slides a fixed-shape query window over every placement of every
pyramid level and scores it with cosine similarity.

FMAP binary format (bit-exact):
    magic bytes ``FMAP`` | version byte ``0x01`` | three little-endian u32
    (height, width, channels) | ``height*width*channels`` little-endian
    IEEE-754 float32 values in (y, x, c) row-major order.

A pyramid on disk is a directory of FMAP files plus a ``pyramid.json``
sidecar listing ``cell_stride`` and the per-level ``(scale, file)`` pairs.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    ConfigInvalidError,
    OutOfBoundsError,
    WindowTooLargeError,
    ZeroVectorError,
)
from .geometry import BBox

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1

# Scale ratio between consecutive levels of a full 7-level pyramid.
LEVEL_RATIO = 2.0 ** -0.5


@dataclass(frozen=True)
class FeatureMap:
    """Dense (height, width, channels) activation grid, immutable after load."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ConfigInvalidError(f"feature map must be 3-D, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ConfigInvalidError(f"feature map has empty dimension {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ConfigInvalidError("feature map contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class FeaturePyramid:
    """Ordered (scale, map) levels, scales strictly decreasing.

    ``cell_stride`` is pixels per cell at scale 1.0.  ``base_max_dim`` is
    informational sidecar metadata (the pixel size the scale-1 frame was
    resized to); no computation reads it.
    """

    levels: tuple[tuple[float, FeatureMap], ...]
    cell_stride: float
    base_max_dim: Optional[int] = None

    def __post_init__(self):
        if not 1 <= len(self.levels) <= 7:
            raise ConfigInvalidError(f"pyramid must have 1-7 levels, got {len(self.levels)}")
        if self.cell_stride <= 0:
            raise ConfigInvalidError(f"cell_stride must be positive, got {self.cell_stride}")
        scales = [s for s, _ in self.levels]
        if any(s <= 0 for s in scales):
            raise ConfigInvalidError("pyramid scales must be positive")
        if any(b >= a for a, b in zip(scales, scales[1:])):
            raise ConfigInvalidError(f"pyramid scales must strictly decrease, got {scales}")
        if len(scales) == 7:
            for a, b in zip(scales, scales[1:]):
                if abs(b / a / LEVEL_RATIO - 1.0) > 0.01:
                    raise ConfigInvalidError(
                        f"7-level pyramid needs consecutive scale ratio 2^-1/2, got {b / a:.4f}"
                    )


@dataclass(frozen=True)
class QueryWindow:
    """A flattened w_cells x h_cells x channels feature window.

    ``data`` is 1-D in the same (y, x, c) order the maps use.  ``source``
    optionally records (image_id, pixel box) provenance.
    """

    w_cells: int
    h_cells: int
    channels: int
    data: np.ndarray
    source: Optional[tuple[str, BBox]] = None

    def __post_init__(self):
        if self.w_cells < 1 or self.h_cells < 1:
            raise ConfigInvalidError("query window must be at least 1x1 cells")
        if self.data.size != self.w_cells * self.h_cells * self.channels:
            raise ConfigInvalidError(
                f"window data length {self.data.size} != "
                f"{self.w_cells}*{self.h_cells}*{self.channels}"
            )


@dataclass(frozen=True)
class MatchHit:
    """One scored window placement; ``pixel_box`` is its image-space extent."""

    level_idx: int
    cell_x: int
    cell_y: int
    pixel_box: BBox
    score: float
    video_id: str = ""
    frame_idx: int = -1


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two equal-length vectors.

    Raises :class:`ZeroVectorError` when either norm is below 1e-12; callers
    that scan noisy windows treat that as similarity 0.
    """
    uf = np.asarray(u, dtype=np.float64).reshape(-1)
    vf = np.asarray(v, dtype=np.float64).reshape(-1)
    if uf.shape != vf.shape:
        raise ValueError(f"length mismatch {uf.shape} vs {vf.shape}")
    nu = float(np.linalg.norm(uf))
    nv = float(np.linalg.norm(vf))
    if nu < 1e-12 or nv < 1e-12:
        raise ZeroVectorError("degenerate feature vector with near-zero norm")
    return float(np.dot(uf, vf) / (nu * nv))


def window_shape_for_box(box: BBox, target_cells: int = 48) -> tuple[int, int]:
    """Integer (w_cells, h_cells) window shape for matching a pixel box.

    Enumerates shapes whose cell area lies in [5/6, 7/6] of ``target_cells``
    and picks the aspect ratio closest to the box's (log-scale), breaking
    ties by smaller |area - target| and then smaller width.  Each dimension
    is finally clamped to at least 2 cells, which for extreme aspect ratios
    is the only case that can push the area outside the enumerated band.
    """
    if target_cells < 1:
        raise ValueError(f"target_cells must be >= 1, got {target_cells}")
    aspect = box.width / box.height
    log_aspect = math.log(aspect)
    lo = max(1, math.floor(target_cells * 5.0 / 6.0))
    hi = math.ceil(target_cells * 7.0 / 6.0)
    best: Optional[tuple[float, int, int, int, int]] = None
    for w in range(1, hi + 1):
        for h in range(max(1, -(-lo // w)), hi // w + 1):
            area = w * h
            if not lo <= area <= hi:
                continue
            key = (abs(math.log(w / h) - log_aspect), abs(area - target_cells), w, h)
            if best is None or key < best:
                best = key
    assert best is not None
    w, h = best[2], best[3]
    return (max(2, w), max(2, h))


def extract_window(
    fmap: FeatureMap,
    cell_rect: tuple[int, int, int, int],
    source: Optional[tuple[str, BBox]] = None,
) -> QueryWindow:
    """Slice the (x, y, w, h) cell rectangle into a flattened query window."""
    x, y, w, h = cell_rect
    if w < 1 or h < 1:
        raise OutOfBoundsError(f"empty cell rect {cell_rect}")
    if x < 0 or y < 0 or x + w > fmap.width or y + h > fmap.height:
        raise OutOfBoundsError(
            f"cell rect {cell_rect} outside {fmap.height}x{fmap.width} map"
        )
    data = np.ascontiguousarray(fmap.data[y : y + h, x : x + w, :]).reshape(-1)
    return QueryWindow(w_cells=w, h_cells=h, channels=fmap.channels, data=data, source=source)


def resample_window(
    fmap: FeatureMap,
    cell_rect: tuple[int, int, int, int],
    out_shape: tuple[int, int],
    source: Optional[tuple[str, BBox]] = None,
) -> QueryWindow:
    """Extract a cell rect and bilinearly resample it to (w_cells, h_cells).

    When the requested shape equals the rect shape this is an exact slice,
    so identity-planting matches score 1.0 bit-for-bit.
    """
    x, y, w, h = cell_rect
    out_w, out_h = out_shape
    if (out_w, out_h) == (w, h):
        return extract_window(fmap, cell_rect, source=source)
    if x < 0 or y < 0 or w < 1 or h < 1 or x + w > fmap.width or y + h > fmap.height:
        raise OutOfBoundsError(
            f"cell rect {cell_rect} outside {fmap.height}x{fmap.width} map"
        )
    patch = fmap.data[y : y + h, x : x + w, :].astype(np.float64)
    # Pixel-center sampling of the patch grid, clamped at the borders.
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = patch[y0][:, x0, :] * (1 - wx) + patch[y0][:, x1, :] * wx
    bot = patch[y1][:, x0, :] * (1 - wx) + patch[y1][:, x1, :] * wx
    out = top * (1 - wy) + bot * wy
    return QueryWindow(
        w_cells=out_w,
        h_cells=out_h,
        channels=fmap.channels,
        data=np.ascontiguousarray(out).reshape(-1),
        source=source,
    )


def build_query_window(
    fmap: FeatureMap,
    box: BBox,
    cell_stride: float = 1.0,
    target_cells: int = 48,
    source_image: str = "",
) -> QueryWindow:
    """Build the canonical matching window for a pixel box on its own map.

    The box is snapped to the covering cell rectangle, then resampled to the
    shape the sizing heuristic assigns for its aspect ratio.
    """
    x0 = int(math.floor(box.x_min / cell_stride))
    y0 = int(math.floor(box.y_min / cell_stride))
    x1 = int(math.ceil(box.x_max / cell_stride))
    y1 = int(math.ceil(box.y_max / cell_stride))
    x0 = max(0, min(x0, fmap.width - 1))
    y0 = max(0, min(y0, fmap.height - 1))
    x1 = max(x0 + 1, min(x1, fmap.width))
    y1 = max(y0 + 1, min(y1, fmap.height))
    shape = window_shape_for_box(box, target_cells=target_cells)
    return resample_window(
        fmap,
        (x0, y0, x1 - x0, y1 - y0),
        shape,
        source=(source_image, box),
    )


def map_window_to_pixels(
    scale: float,
    cell_x: int,
    cell_y: int,
    w_cells: int,
    h_cells: int,
    cell_stride: float,
) -> BBox:
    """Pixel-space box of a window placed at (cell_x, cell_y) on a level."""
    factor = cell_stride / scale
    return BBox(
        cell_x * factor,
        cell_y * factor,
        (cell_x + w_cells) * factor,
        (cell_y + h_cells) * factor,
    )


def slide_match(query: QueryWindow, pyramid: FeaturePyramid, top_n: int) -> list[MatchHit]:
    """Score every valid placement of the query on every level, keep the best.

    Returns up to ``top_n`` hits sorted by score descending with the
    deterministic tie-break (level, cell_y, cell_x ascending), so the result
    is independent of scan order and worker count.  Zero-norm windows (query
    or placement) score 0 instead of erroring, which keeps padded or blank
    frames from poisoning a scan.

    Raises :class:`WindowTooLargeError` when the query fits no level.
    """
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    qf = np.asarray(query.data, dtype=np.float64).reshape(-1)
    nq = float(np.linalg.norm(qf))
    w, h = query.w_cells, query.h_cells
    scored: list[tuple[float, int, int, int]] = []
    fits_any = False
    for level_idx, (scale, fmap) in enumerate(pyramid.levels):
        if fmap.channels != query.channels:
            raise ValueError(
                f"channel mismatch: query {query.channels} vs level {fmap.channels}"
            )
        if w > fmap.width or h > fmap.height:
            continue
        fits_any = True
        data = fmap.data
        for cy in range(fmap.height - h + 1):
            for cx in range(fmap.width - w + 1):
                wf = data[cy : cy + h, cx : cx + w, :].astype(np.float64).reshape(-1)
                nw = float(np.linalg.norm(wf))
                if nq < 1e-12 or nw < 1e-12:
                    score = 0.0
                else:
                    # clamp the last-ulp overshoot of near-parallel vectors
                    score = min(1.0, max(-1.0, float(np.dot(qf, wf) / (nq * nw))))
                scored.append((score, level_idx, cy, cx))
    if not fits_any:
        raise WindowTooLargeError(
            f"query of {h}x{w} cells fits no level of the pyramid"
        )
    scored.sort(key=lambda s: (-s[0], s[1], s[2], s[3]))
    hits = []
    for score, level_idx, cy, cx in scored[:top_n]:
        scale = pyramid.levels[level_idx][0]
        hits.append(
            MatchHit(
                level_idx=level_idx,
                cell_x=cx,
                cell_y=cy,
                pixel_box=map_window_to_pixels(scale, cx, cy, w, h, pyramid.cell_stride),
                score=score,
            )
        )
    return hits


POOL_SURROUND_MARGIN = 2


def _cell_rect(fmap: FeatureMap, box: BBox, cell_stride: float) -> tuple[int, int, int, int]:
    x0 = max(0, min(int(math.floor(box.x_min / cell_stride)), fmap.width - 1))
    y0 = max(0, min(int(math.floor(box.y_min / cell_stride)), fmap.height - 1))
    x1 = max(x0 + 1, min(int(math.ceil(box.x_max / cell_stride)), fmap.width))
    y1 = max(y0 + 1, min(int(math.ceil(box.y_max / cell_stride)), fmap.height))
    return x0, y0, x1, y1


def pool_box_feature(fmap: FeatureMap, box: BBox, cell_stride: float = 1.0) -> np.ndarray:
    """Center-surround pooled region descriptor: interior mean || ring mean.

    The first ``channels`` entries are the mean activation over the cells
    the box covers; the second are the mean over a 2-cell ring around it
    (zeros when the ring is empty).  Including the surround makes the
    descriptor sensitive to whether a box is tight: a sub-box of an object
    sees the object in its surround, a tight box sees background.  This is
    the convention shared by the synthetic generator and the detector
    stages, so pseudo-GT boxes can be featurized the same way proposals
    were.
    """
    x0, y0, x1, y1 = _cell_rect(fmap, box, cell_stride)
    data = fmap.data.astype(np.float64)
    inner = data[y0:y1, x0:x1, :].mean(axis=(0, 1))
    m = POOL_SURROUND_MARGIN
    ox0, oy0 = max(0, x0 - m), max(0, y0 - m)
    ox1, oy1 = min(fmap.width, x1 + m), min(fmap.height, y1 + m)
    outer_sum = data[oy0:oy1, ox0:ox1, :].sum(axis=(0, 1))
    inner_sum = data[y0:y1, x0:x1, :].sum(axis=(0, 1))
    ring_cells = (oy1 - oy0) * (ox1 - ox0) - (y1 - y0) * (x1 - x0)
    if ring_cells > 0:
        ring = (outer_sum - inner_sum) / ring_cells
    else:
        ring = np.zeros(fmap.channels)
    return np.concatenate([inner, ring])


def write_fmap(path: str | Path, fmap: FeatureMap) -> None:
    """Serialize to the FMAP binary format (see module docstring)."""
    payload = fmap.data.astype("<f4").tobytes()
    header = FMAP_MAGIC + bytes([FMAP_VERSION]) + struct.pack(
        "<III", fmap.height, fmap.width, fmap.channels
    )
    Path(path).write_bytes(header + payload)


def read_fmap(path: str | Path) -> FeatureMap:
    """Parse an FMAP file, validating magic, version, and payload length."""
    raw = Path(path).read_bytes()
    if len(raw) < 17 or raw[:4] != FMAP_MAGIC:
        raise ConfigInvalidError(f"{path}: not an FMAP file")
    if raw[4] != FMAP_VERSION:
        raise ConfigInvalidError(f"{path}: unsupported FMAP version {raw[4]}")
    h, w, c = struct.unpack("<III", raw[5:17])
    expected = 17 + 4 * h * w * c
    if len(raw) != expected:
        raise ConfigInvalidError(
            f"{path}: payload length {len(raw)} != expected {expected}"
        )
    data = np.frombuffer(raw[17:], dtype="<f4").reshape(h, w, c).astype(np.float32)
    return FeatureMap(data=data)


def save_pyramid(dirpath: str | Path, pyramid: FeaturePyramid) -> None:
    """Write per-level FMAP files plus the pyramid.json sidecar."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    levels = []
    for i, (scale, fmap) in enumerate(pyramid.levels):
        fname = f"level_{i:02d}.fmap"
        write_fmap(d / fname, fmap)
        levels.append({"scale": scale, "file": fname})
    sidecar = {"cell_stride": pyramid.cell_stride, "levels": levels}
    if pyramid.base_max_dim is not None:
        sidecar["base_max_dim"] = pyramid.base_max_dim
    (d / "pyramid.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_pyramid(dirpath: str | Path) -> FeaturePyramid:
    d = Path(dirpath)
    sidecar = json.loads((d / "pyramid.json").read_text())
    levels = tuple(
        (float(entry["scale"]), read_fmap(d / entry["file"]))
        for entry in sidecar["levels"]
    )
    return FeaturePyramid(
        levels=levels,
        cell_stride=float(sidecar["cell_stride"]),
        base_max_dim=sidecar.get("base_max_dim"),
    )


def single_level_pyramid(fmap: FeatureMap, cell_stride: float = 1.0) -> FeaturePyramid:
    """Wrap one map as a scale-1.0 pyramid (the synthetic-data layout)."""
    return FeaturePyramid(levels=((1.0, fmap),), cell_stride=cell_stride)
