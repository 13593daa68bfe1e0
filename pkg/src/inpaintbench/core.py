"""Deterministic relevance-map and mask math shared by every metric.

Everything in this module is a pure function on immutable inputs: bilinear
downsampling of relevance maps to patch grids, top-p patch selection with a
fixed tie-break, pixel expansion of patch masks, and the causal weighting
applied after a successful class flip.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

PIXEL = "pixel"
PATCH = "patch"

DEFAULT_PATCH_SIZE = 16
DEFAULT_STEPS = (0.10, 0.20, 0.30, 0.40, 0.50)


def round_half_up(x: float) -> int:
    """Round to nearest integer, .5 rounds away from zero (for x >= 0)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class RelevanceMap:
    """Non-negative relevance scores for one image and one class.

    ``values`` is a 2-D float grid; ``resolution`` says whether entries are
    per pixel or per patch.  Construction rejects non-finite values.
    """

    values: np.ndarray
    resolution: str
    target_class: object = None
    source: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError(f"relevance map must be a non-empty 2-D grid, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("relevance map contains non-finite values")
        if self.resolution not in (PIXEL, PATCH):
            raise ValueError(f"unknown resolution {self.resolution!r}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class PatchMask:
    """The ordered set of patch indices selected for one perturbation step."""

    grid_shape: tuple[int, int]
    selected: tuple[int, ...]
    p: float
    patch_size: int = DEFAULT_PATCH_SIZE

    def __post_init__(self):
        rows, cols = self.grid_shape
        n = rows * cols
        if rows < 1 or cols < 1:
            raise ValueError(f"bad grid shape {self.grid_shape}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"perturbation fraction {self.p} outside (0, 1]")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        sel = tuple(int(i) for i in self.selected)
        if len(set(sel)) != len(sel):
            raise ValueError("selected patch indices must be unique")
        if sel and (min(sel) < 0 or max(sel) >= n):
            raise ValueError("selected patch index out of range")
        expected = round_half_up(self.p * n)
        if len(sel) != expected:
            raise ValueError(
                f"mask holds {len(sel)} patches but p={self.p} over {n} patches requires {expected}"
            )
        object.__setattr__(self, "selected", sel)

    @property
    def n_patches(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]


@dataclass(frozen=True)
class WeightInputs:
    """Patch-index sets feeding the causal weighting.

    ``modified`` is the inpainted patch set M, ``top_orig`` / ``top_inp`` are
    the top-p sets of the target-class relevance on the original and the
    inpainted image.
    """

    modified: frozenset
    top_orig: frozenset
    top_inp: frozenset
    n_patches: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "modified", frozenset(int(i) for i in self.modified))
        object.__setattr__(self, "top_orig", frozenset(int(i) for i in self.top_orig))
        object.__setattr__(self, "top_inp", frozenset(int(i) for i in self.top_inp))
        if self.n_patches is not None:
            union = self.modified | self.top_orig | self.top_inp
            if union and (min(union) < 0 or max(union) >= self.n_patches):
                raise ValueError("patch index out of range for declared grid")


def bilinear_resize(values: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Resize a 2-D grid with centers-aligned bilinear sampling.

    Sample coordinates follow the half-pixel-centers convention of the common
    image resizers (align_corners=False); edges clamp.
    """
    a = np.asarray(values, dtype=np.float64)
    h, w = a.shape
    oh, ow = out_shape
    sy, sx = h / oh, w / ow
    ys = np.clip((np.arange(oh) + 0.5) * sy - 0.5, 0, h - 1)
    xs = np.clip((np.arange(ow) + 0.5) * sx - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = a[np.ix_(y0, x0)] * (1 - wx) + a[np.ix_(y0, x1)] * wx
    bot = a[np.ix_(y1, x0)] * (1 - wx) + a[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def downsample_to_patches(relevance: RelevanceMap, patch_size: int) -> RelevanceMap:
    """Bilinear-downsample a pixel map to a patch grid (scale 1/patch_size)."""
    if relevance.resolution != PIXEL:
        raise ValueError("downsample_to_patches expects a pixel-resolution map")
    h, w = relevance.shape
    if patch_size < 1:
        raise ValueError("patch_size must be >= 1")
    if patch_size > h or patch_size > w:
        raise ValueError(f"patch_size {patch_size} exceeds map dimensions {h}x{w}")
    out_shape = (math.ceil(h / patch_size), math.ceil(w / patch_size))
    vals = bilinear_resize(relevance.values, out_shape)
    return RelevanceMap(vals, PATCH, target_class=relevance.target_class, source=relevance.source)


def top_p_select(relevance: RelevanceMap, p: float, patch_size: int = DEFAULT_PATCH_SIZE) -> PatchMask:
    """Select the round_half_up(p * n) highest-relevance patches.

    Ties break by ascending row-major patch index, so selection is a pure
    function of (map, p).
    """
    if relevance.resolution != PATCH:
        raise ValueError("top_p_select expects a patch-resolution map")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"perturbation fraction {p} outside (0, 1]")
    flat = relevance.values.ravel()
    n = flat.size
    k = round_half_up(p * n)
    if k == 0:
        raise ValueError(f"p={p} selects zero patches on a {relevance.shape} grid")
    order = np.lexsort((np.arange(n), -flat))
    return PatchMask(relevance.shape, tuple(int(i) for i in order[:k]), p, patch_size)


def expand_mask(mask: PatchMask, image_shape: tuple[int, int]) -> np.ndarray:
    """Expand a patch mask to a boolean pixel grid; edge patches clip."""
    h, w = image_shape
    rows, cols = mask.grid_shape
    ps = mask.patch_size
    if math.ceil(h / ps) != rows or math.ceil(w / ps) != cols:
        raise ValueError(
            f"grid {mask.grid_shape} with patch_size {ps} does not tile image {image_shape}"
        )
    out = np.zeros((h, w), dtype=bool)
    for idx in mask.selected:
        r, c = divmod(idx, cols)
        out[r * ps : min((r + 1) * ps, h), c * ps : min((c + 1) * ps, w)] = True
    return out


def causal_weight(inputs: WeightInputs) -> float:
    """Fraction of the inpainted image's top patches explained by the edit.

    Returns |top_inp ∩ (top_orig ∪ modified)| / |top_inp|.
    """
    if not inputs.top_inp:
        raise ValueError("causal weight undefined for empty inpainted top set")
    hit = len(inputs.top_inp & (inputs.top_orig | inputs.modified))
    return hit / len(inputs.top_inp)


def rank_class(scores: Sequence[float], rank: int) -> int:
    """Index of the class with the rank-th highest score (1 = top).

    Ties break by ascending class index.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if rank < 1 or rank > scores.size:
        raise ValueError(f"rank {rank} out of range for {scores.size} classes")
    order = np.lexsort((np.arange(scores.size), -scores))
    return int(order[rank - 1])


def to_patch_grid(relevance: RelevanceMap, patch_size: int, granularity: str) -> tuple[RelevanceMap, int]:
    """Map a pixel relevance map to the grid the selector runs on.

    Returns (grid map, effective patch size): bilinear downsampling for patch
    granularity, the raw pixel grid (patch size 1) for pixel granularity.
    """
    if granularity == PATCH:
        if patch_size == 1:
            grid = RelevanceMap(relevance.values, PATCH, relevance.target_class, relevance.source)
        else:
            grid = downsample_to_patches(relevance, patch_size)
        return grid, patch_size
    if granularity == PIXEL:
        return RelevanceMap(relevance.values, PATCH, relevance.target_class, relevance.source), 1
    raise ValueError(f"unknown granularity {granularity!r}")


# --- mask serialization (debug artifacts; round-trips bit-exactly) ---

def pixel_mask_to_png(mask: np.ndarray) -> bytes:
    img = Image.fromarray(np.asarray(mask, dtype=bool)).convert("1")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def pixel_mask_from_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data)).convert("1")
    return np.array(img, dtype=bool)


def mask_to_json(mask: PatchMask) -> str:
    return json.dumps(
        {
            "grid_shape": list(mask.grid_shape),
            "selected": list(mask.selected),
            "p": mask.p,
            "patch_size": mask.patch_size,
        }
    )


def mask_from_json(payload: str) -> PatchMask:
    d = json.loads(payload)
    return PatchMask(tuple(d["grid_shape"]), tuple(d["selected"]), d["p"], d["patch_size"])
