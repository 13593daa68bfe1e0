"""Comparison metrics: delete / blur / per-channel-mean perturbation curves,
faithfulness violation, and the saliency-rectangle check.

All curves perturb the same patch-expanded masks as the stratified metric so
that metric differences are never mask differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .core import DEFAULT_PATCH_SIZE, DEFAULT_STEPS, PATCH, expand_mask, rank_class, to_patch_grid, top_p_select
from .stratified import ImageScore, _explain

log = logging.getLogger(__name__)

DELETE = "delete"
BLUR = "blur"
CHANNEL_MEAN = "channel_mean"


@dataclass(frozen=True)
class PerturbationKind:
    kind: str = DELETE
    blur_kernel_size: int = 11
    blur_sigma: float = 5.0
    mean_scope: str = "per_image"

    def __post_init__(self):
        if self.kind not in (DELETE, BLUR, CHANNEL_MEAN):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.blur_kernel_size < 3 or self.blur_kernel_size % 2 == 0:
            raise ValueError("blur_kernel_size must be odd and >= 3")
        if self.blur_sigma <= 0:
            raise ValueError("blur_sigma must be positive")
        if self.mean_scope not in ("per_image", "dataset"):
            raise ValueError(f"unknown mean_scope {self.mean_scope!r}")


def perturb(image: np.ndarray, mask: np.ndarray, kind: PerturbationKind,
            dataset_mean: np.ndarray | None = None) -> np.ndarray:
    """Apply the perturbation under a pixel mask; unmasked pixels stay bit-identical."""
    img = np.asarray(image)
    m = np.asarray(mask, dtype=bool)
    if m.shape != img.shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match image {img.shape[:2]}")
    out = img.copy()
    if kind.kind == DELETE:
        out[m] = 0
    elif kind.kind == BLUR:
        # blur the full ORIGINAL image, then composite under the mask;
        # radius of a k x k kernel maps to truncate = ((k-1)/2) / sigma
        radius = (kind.blur_kernel_size - 1) // 2
        blurred = np.empty_like(img, dtype=np.float64)
        for ch in range(img.shape[2]):
            blurred[..., ch] = gaussian_filter(img[..., ch].astype(np.float64),
                                               sigma=kind.blur_sigma,
                                               truncate=radius / kind.blur_sigma)
        out[m] = np.round(blurred[m]).astype(img.dtype)
    else:  # channel mean
        if kind.mean_scope == "dataset":
            if dataset_mean is None:
                raise ValueError("dataset mean_scope requires dataset_mean")
            mean = np.asarray(dataset_mean, dtype=np.float64)
        else:
            mean = img.reshape(-1, img.shape[2]).mean(axis=0)
        out[m] = np.round(mean).astype(img.dtype)
    return out


def _step_masks(image, classifier, attributor, steps, patch_size, granularity):
    scores = classifier.classify(image)
    top1 = rank_class(scores, 1)
    rmap = _explain(attributor, classifier, image, top1)
    grid, eff_ps = to_patch_grid(rmap, patch_size, granularity)
    masks = []
    for step in steps:
        pm = top_p_select(grid, step, eff_ps)
        masks.append(expand_mask(pm, image.shape[:2]))
    return top1, scores, masks


def _record(image_id, attributor, metric_id, steps, scores, detail):
    return ImageScore(image_id, attributor.id, metric_id, tuple(steps), scores, detail,
                      class_agnostic=not getattr(attributor, "class_specific", False))


def baseline_curve(image: np.ndarray, image_id: str, classifier, attributor,
                   kind: PerturbationKind, steps=DEFAULT_STEPS,
                   patch_size: int = DEFAULT_PATCH_SIZE, granularity: str = PATCH,
                   dataset_mean: np.ndarray | None = None) -> ImageScore:
    """Score 1 per step iff the top-1 prediction changed to ANY other class."""
    top1, _, masks = _step_masks(image, classifier, attributor, steps, patch_size, granularity)
    scores, detail = [], []
    for step, mask in zip(steps, masks):
        pred = rank_class(classifier.classify(perturb(image, mask, kind, dataset_mean)), 1)
        scores.append(1.0 if pred != top1 else 0.0)
        detail.append({"predicted_class_after": int(pred)})
    return _record(image_id, attributor, kind.kind, steps, scores, detail)


def violation_curve(image: np.ndarray, image_id: str, classifier, attributor,
                    steps=DEFAULT_STEPS, patch_size: int = DEFAULT_PATCH_SIZE,
                    granularity: str = PATCH) -> ImageScore:
    """Score 1 per step iff deleting the top pixels strictly lowered the
    confidence of the original top-1 class."""
    kind = PerturbationKind(DELETE)
    top1, orig_scores, masks = _step_masks(image, classifier, attributor, steps,
                                           patch_size, granularity)
    scores, detail = [], []
    for step, mask in zip(steps, masks):
        after = classifier.classify(perturb(image, mask, kind))
        dropped = after[top1] < orig_scores[top1]
        scores.append(1.0 if dropped else 0.0)
        detail.append({"confidence_before": float(orig_scores[top1]),
                       "confidence_after": float(after[top1])})
    return _record(image_id, attributor, "violation", steps, scores, detail)


def bounding_rect(mask: np.ndarray) -> tuple[int, int, int, int]:
    """(row0, row1, col0, col1) inclusive bounds of the true pixels."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("bounding rectangle of an empty mask")
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])


def saliency_curve(image: np.ndarray, image_id: str, classifier, attributor,
                   steps=DEFAULT_STEPS, patch_size: int = DEFAULT_PATCH_SIZE,
                   granularity: str = PATCH) -> ImageScore:
    """Score 1 per step iff the classifier keeps its prediction on the crop
    bounded by the top pixels, resized back to the input size."""
    top1, _, masks = _step_masks(image, classifier, attributor, steps, patch_size, granularity)
    size = classifier.input_size
    scores, detail = [], []
    for step, mask in zip(steps, masks):
        r0, r1, c0, c1 = bounding_rect(mask)
        crop = image[r0 : r1 + 1, c0 : c1 + 1]
        resized = np.array(Image.fromarray(crop).resize((size, size), Image.BILINEAR))
        pred = rank_class(classifier.classify(resized), 1)
        scores.append(1.0 if pred == top1 else 0.0)
        detail.append({"rect": [r0, r1, c0, c1], "predicted_class_on_crop": int(pred)})
    return _record(image_id, attributor, "saliency", steps, scores, detail)


def random_rank_map(seed: int, grid_shape: tuple[int, int]) -> np.ndarray:
    """Seeded uniform-random permutation of patch ranks."""
    n = grid_shape[0] * grid_shape[1]
    return np.random.default_rng(seed).permutation(n).astype(np.float64).reshape(grid_shape)
