"""Per-image stratified-inpainting scores.

For each perturbation step the top-relevance patches are inpainted toward
the image's original second-ranked class; the step scores the causal weight
when the prediction flips to exactly that class, and 0 otherwise.  The three
ablations (deeper target rank, no weighting, pixel-wise masks) are plain
configuration toggles.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .backends.base import BackendError
from .backends.oracle import stable_seed
from .core import (
    DEFAULT_PATCH_SIZE,
    DEFAULT_STEPS,
    PATCH,
    WeightInputs,
    causal_weight,
    expand_mask,
    rank_class,
    to_patch_grid,
    top_p_select,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StratifiedConfig:
    target_rank: int = 2
    apply_weighting: bool = True
    granularity: str = PATCH
    steps: tuple[float, ...] = DEFAULT_STEPS
    patch_size: int = DEFAULT_PATCH_SIZE
    inpaint_seed: int = 0
    inpaint_samples: int = 1

    def __post_init__(self):
        if self.target_rank < 2:
            raise ValueError("target_rank must be >= 2")
        steps = tuple(float(s) for s in self.steps)
        if not steps or any(not 0.0 < s <= 0.5 for s in steps):
            raise ValueError("steps must lie in (0, 0.5]")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("steps must be strictly increasing")
        if self.inpaint_samples < 1:
            raise ValueError("inpaint_samples must be >= 1")
        object.__setattr__(self, "steps", steps)


@dataclass
class ImageScore:
    """Scores and step details for one (image, attribution method) pair."""

    image_id: str
    method_id: str
    metric_id: str
    steps: tuple[float, ...]
    scores: list  # float per step; None where the backend errored
    detail: list  # dict per step
    class_agnostic: bool = False
    error: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d["steps"] = list(self.steps)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, payload: str) -> "ImageScore":
        d = json.loads(payload)
        d["steps"] = tuple(d["steps"])
        return cls(**d)


def target_class(image: np.ndarray, classifier, target_rank: int) -> int:
    """Class at the target_rank-th position of the classifier's ranking."""
    scores = classifier.classify(image)
    return rank_class(scores, target_rank)


def _explain(attributor, classifier, image, target: int):
    if getattr(attributor, "class_specific", False):
        return attributor.explain(classifier, image, target_class=target)
    return attributor.explain(classifier, image)


def _top_set(attributor, classifier, image, target, p, patch_size, granularity):
    rmap = _explain(attributor, classifier, image, target)
    grid, eff_ps = to_patch_grid(rmap, patch_size, granularity)
    return frozenset(top_p_select(grid, p, eff_ps).selected)


def _inpaint_key(inpainter, image, keep_mask, prompt, seed):
    if hasattr(inpainter, "key"):
        return inpainter.key(image, keep_mask, prompt, seed)
    from .backends.cache import inpaint_key

    return inpaint_key(image, keep_mask, prompt, seed,
                       getattr(inpainter, "id", "?"), getattr(inpainter, "version", "?"))


def evaluate_image(image: np.ndarray, image_id: str, classifier, attributor, inpainter,
                   config: StratifiedConfig) -> ImageScore:
    """Run the stratified-inpainting sweep for one image.

    The inpainting target is fixed from the ORIGINAL image's ranking and is
    never re-derived mid-sweep.  Inpainter failures mark the step as errored
    (excluded from aggregation); an attributor failure skips the image.
    """
    orig_scores = classifier.classify(image)
    top1 = rank_class(orig_scores, 1)
    target = rank_class(orig_scores, config.target_rank)
    prompt = classifier.class_names[target]
    class_agnostic = not getattr(attributor, "class_specific", False)

    try:
        rmap = _explain(attributor, classifier, image, top1)
        grid, eff_ps = to_patch_grid(rmap, config.patch_size, config.granularity)
    except Exception as exc:
        log.warning("attributor %s failed on %s: %s", attributor.id, image_id, exc)
        return ImageScore(image_id, attributor.id, "stratified", config.steps,
                          [None] * len(config.steps), [{} for _ in config.steps],
                          class_agnostic=class_agnostic, error=f"attributor: {exc}")

    scores: list = []
    detail: list = []
    for step in config.steps:
        mask = top_p_select(grid, step, eff_ps)
        pixel_mask = expand_mask(mask, image.shape[:2])
        keep_mask = ~pixel_mask

        sample_scores = []
        step_detail = {"target_class": int(target), "predicted_class_after": None,
                       "weight": None, "inpaint_cache_key": None}
        step_error = None
        for sample in range(config.inpaint_samples):
            seed = stable_seed(image_id, step, config.inpaint_seed, sample)
            try:
                inpainted = inpainter.inpaint(image, keep_mask, prompt, seed)
            except BackendError as exc:
                step_error = str(exc)
                log.warning("inpainter failed on %s step %s: %s", image_id, step, exc)
                break
            pred_after = rank_class(classifier.classify(inpainted), 1)
            step_detail["predicted_class_after"] = int(pred_after)
            step_detail["inpaint_cache_key"] = _inpaint_key(inpainter, image, keep_mask,
                                                            prompt, seed)
            if pred_after != target:
                sample_scores.append(0.0)
                continue
            if not config.apply_weighting:
                sample_scores.append(1.0)
                continue
            top_orig = _top_set(attributor, classifier, image, target,
                                step, config.patch_size, config.granularity)
            top_inp = _top_set(attributor, classifier, inpainted, target,
                               step, config.patch_size, config.granularity)
            w = causal_weight(WeightInputs(frozenset(mask.selected), top_orig, top_inp,
                                           n_patches=mask.n_patches))
            step_detail["weight"] = w
            sample_scores.append(w)

        if step_error is not None:
            scores.append(None)
            detail.append({"target_class": int(target), "error": step_error})
        else:
            scores.append(float(np.mean(sample_scores)))
            detail.append(step_detail)

    return ImageScore(image_id, attributor.id, "stratified", config.steps, scores, detail,
                      class_agnostic=class_agnostic)
