"""Deterministic synthetic backends with analytically known behavior.

The synthetic world places one object region (a fixed set of patches) on a
neutral background; class identity is the color painted into that region.
The classifier scores each class by its best template match anywhere in the
image, the inpainter blends target-class color into the masked patches, and
the template attributor returns the per-pixel match for a class.  Together
they form a closed system where the correct outcome of every metric is known
in advance: the prediction flips to the inpainting target exactly when the
whole object region was rewritten.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..core import PIXEL, RelevanceMap
from .base import BackendError, check_image

MATCH_SCALE = 200.0  # color distance at which a template match hits zero
BLEND = 0.7          # inpainting strength toward the target template


def stable_seed(*parts) -> int:
    """64-bit seed derived from the parts; stable across processes."""
    h = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "big")


@dataclass(frozen=True)
class OracleWorld:
    """Shared geometry for one family of synthetic backends."""

    grid_shape: tuple[int, int] = (14, 14)
    patch_size: int = 16
    n_classes: int = 10
    region_size: int = 20
    seed: int = 0
    region: tuple[int, ...] = field(init=False)
    templates: np.ndarray = field(init=False)

    def __post_init__(self):
        rows, cols = self.grid_shape
        n = rows * cols
        if self.region_size < 1 or self.region_size > n:
            raise ValueError("object region does not fit the grid")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        rng = np.random.default_rng(self.seed)
        region = tuple(sorted(int(i) for i in rng.choice(n, self.region_size, replace=False)))
        angles = 2 * np.pi * np.arange(self.n_classes) / self.n_classes
        templates = np.stack(
            [128 + 100 * np.cos(angles), 128 + 100 * np.sin(angles), np.full(self.n_classes, 128.0)],
            axis=1,
        )
        templates.setflags(write=False)
        object.__setattr__(self, "region", region)
        object.__setattr__(self, "templates", templates)

    @property
    def image_shape(self) -> tuple[int, int]:
        return (self.grid_shape[0] * self.patch_size, self.grid_shape[1] * self.patch_size)

    @property
    def class_names(self) -> list[str]:
        return [f"class_{i}" for i in range(self.n_classes)]

    def class_index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise BackendError(f"unknown class prompt {name!r}") from None

    def image_for_class(self, class_idx: int, image_seed: int = 0) -> np.ndarray:
        """Object region painted with the class color over a jittered gray."""
        rng = np.random.default_rng(image_seed)
        bg = 128 + rng.integers(-4, 5)
        h, w = self.image_shape
        img = np.full((h, w, 3), bg, dtype=np.uint8)
        color = np.round(self.templates[class_idx]).astype(np.uint8)
        rows, cols = self.grid_shape
        ps = self.patch_size
        for idx in self.region:
            r, c = divmod(idx, cols)
            img[r * ps : (r + 1) * ps, c * ps : (c + 1) * ps] = color
        return img

    def patch_means(self, image: np.ndarray) -> np.ndarray:
        """(rows*cols, 3) mean color per patch."""
        img = check_image(image).astype(np.float64)
        rows, cols = self.grid_shape
        ps = self.patch_size
        blocks = img.reshape(rows, ps, cols, ps, 3)
        return blocks.mean(axis=(1, 3)).reshape(rows * cols, 3)

    def match_grid(self, image: np.ndarray, class_idx: int) -> np.ndarray:
        """Per-patch template match in [0, 1] for one class."""
        means = self.patch_means(image)
        dist = np.linalg.norm(means - self.templates[class_idx], axis=1)
        return np.clip(1.0 - dist / MATCH_SCALE, 0.0, 1.0).reshape(self.grid_shape)


class OracleClassifier:
    """Scores each class by its best template match over all patches.

    With ood_sensitive=True the classifier mimics the brittleness of real
    models under deletion: once more than 5% of pixels are exactly zero it
    abandons the evidence and emits a fallback prediction.
    """

    def __init__(self, world: OracleWorld, ood_sensitive: bool = False,
                 zero_fraction_limit: float = 0.05):
        self.world = world
        self.ood_sensitive = ood_sensitive
        self.zero_fraction_limit = zero_fraction_limit
        self.id = "oracle-classifier" + ("-ood" if ood_sensitive else "")
        self.input_size = world.image_shape[0]
        self.class_names = world.class_names

    def _template_scores(self, image: np.ndarray) -> np.ndarray:
        means = self.world.patch_means(image)
        dist = np.linalg.norm(means[:, None, :] - self.world.templates[None, :, :], axis=2)
        return np.clip(1.0 - dist / MATCH_SCALE, 0.0, 1.0).max(axis=0)

    def classify(self, image: np.ndarray) -> np.ndarray:
        img = check_image(image)
        scores = self._template_scores(img)
        if self.ood_sensitive:
            zero_frac = np.mean(np.all(img == 0, axis=2))
            if zero_frac > self.zero_fraction_limit:
                fallback = (int(np.argmax(scores)) + 1) % len(scores)
                out = np.full(len(scores), 0.01)
                out -= np.arange(len(scores)) * 1e-6  # keep the vector sortable
                out[fallback] = 0.9
                return out
        return scores


class OracleInpainter:
    """Blends the target-class color into every masked patch; no resizing."""

    id = "oracle-inpainter"
    version = "1"

    def __init__(self, world: OracleWorld):
        self.world = world

    def inpaint(self, image: np.ndarray, keep_mask: np.ndarray, prompt: str, seed: int) -> np.ndarray:
        img = check_image(image)
        keep = np.asarray(keep_mask, dtype=bool)
        if keep.shape != img.shape[:2]:
            raise BackendError(f"mask shape {keep.shape} does not match image {img.shape[:2]}")
        target = self.world.class_index(prompt)
        color = self.world.templates[target]
        out = img.astype(np.float64).copy()
        paint = ~keep
        out[paint] = BLEND * color + (1 - BLEND) * out[paint]
        return np.round(out).astype(np.uint8)


class TemplateAttributor:
    """Ground-truth attribution: per-pixel match against a class template.

    On an unperturbed image this is exactly the indicator of the object
    region (match 1.0) over the half-match background.
    """

    class_specific = True

    def __init__(self, world: OracleWorld, id: str = "ground_truth"):
        self.world = world
        self.id = id

    def explain(self, classifier, image, target_class=None) -> RelevanceMap:
        if target_class is None:
            target_class = int(np.argmax(classifier.classify(image)))
        grid = self.world.match_grid(image, int(target_class))
        ps = self.world.patch_size
        pixels = np.kron(grid, np.ones((ps, ps)))
        return RelevanceMap(pixels, PIXEL, target_class=int(target_class), source=self.id)


class RandomAttributor:
    """Seeded uniform-random permutation of patch ranks, expanded to pixels.

    Maps depend on the image content, so the original and inpainted images
    get independent draws, as a real noisy attributor would.
    """

    class_specific = False

    def __init__(self, seed: int, grid_shape: tuple[int, int] = (14, 14),
                 patch_size: int = 16, id: str | None = None):
        self.seed = seed
        self.grid_shape = grid_shape
        self.patch_size = patch_size
        self.id = id if id is not None else f"random[{seed}]"

    def explain(self, classifier, image, target_class=None) -> RelevanceMap:
        img = check_image(image)
        content = hashlib.sha256(img.tobytes()).hexdigest()
        rng = np.random.default_rng(stable_seed("random-attr", self.seed, content))
        n = self.grid_shape[0] * self.grid_shape[1]
        ranks = rng.permutation(n).astype(np.float64).reshape(self.grid_shape)
        pixels = np.kron(ranks, np.ones((self.patch_size, self.patch_size)))
        pixels = pixels[: img.shape[0], : img.shape[1]]
        return RelevanceMap(pixels, PIXEL, target_class=target_class, source=self.id)


class OracleGenerator:
    """Emits the canonical image for the prompted class.

    ``fidelity`` maps a class name to the probability that a draw renders the
    class correctly; failed draws render a neighboring class instead, which
    the curation step then counts as a miss.
    """

    def __init__(self, world: OracleWorld, fidelity: dict[str, float] | float = 1.0,
                 id: str = "oracle-generator"):
        self.world = world
        self.fidelity = fidelity
        self.id = id

    def _rate(self, name: str) -> float:
        if isinstance(self.fidelity, dict):
            return float(self.fidelity.get(name, 1.0))
        return float(self.fidelity)

    def generate(self, prompt: str, seed: int) -> np.ndarray:
        t = self.world.class_index(prompt)
        rng = np.random.default_rng(stable_seed("oracle-gen", seed))
        if rng.random() >= self._rate(prompt):
            t = (t + 1) % self.world.n_classes
        return self.world.image_for_class(t, image_seed=seed)


class ScriptedGenerator:
    """Generator whose hit/miss pattern is scripted per (class, call index).

    Used to pin exact acceptance counts in curation tests.
    """

    id = "scripted-generator"

    def __init__(self, world: OracleWorld, correct) -> None:
        self.world = world
        self.correct = correct  # callable (class_index, call_index) -> bool
        self._calls: dict[int, int] = {}

    def generate(self, prompt: str, seed: int) -> np.ndarray:
        t = self.world.class_index(prompt)
        j = self._calls.get(t, 0)
        self._calls[t] = j + 1
        if self.correct(t, j):
            return self.world.image_for_class(t, image_seed=seed)
        return self.world.image_for_class((t + 1) % self.world.n_classes, image_seed=seed)
