"""Backend contracts: classifier, attributor, inpainter, generator.

The pipeline exchanges images as 8-bit RGB numpy arrays at the classifier's
input size; each adapter handles its own normalization internally.
"""

from __future__ import annotations

from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..core import RelevanceMap


class BackendError(RuntimeError):
    """A backend failed after exhausting its own retry policy."""


@runtime_checkable
class ClassifierBackend(Protocol):
    id: str
    input_size: int
    class_names: Sequence[str]

    def classify(self, image: np.ndarray) -> np.ndarray:
        """Full score vector over class_names; deterministic for a fixed model."""
        ...


@runtime_checkable
class AttributorBackend(Protocol):
    id: str
    class_specific: bool

    def explain(self, classifier: ClassifierBackend, image: np.ndarray,
                target_class: int | None = None) -> RelevanceMap:
        """Pixel-resolution relevance map, same spatial shape as the image."""
        ...


@runtime_checkable
class InpainterBackend(Protocol):
    id: str
    version: str

    def inpaint(self, image: np.ndarray, keep_mask: np.ndarray, prompt: str,
                seed: int) -> np.ndarray:
        """Rewrite pixels where keep_mask is False toward the prompt.

        keep_mask convention: True = keep, False = region to inpaint.
        """
        ...


@runtime_checkable
class GeneratorBackend(Protocol):
    id: str

    def generate(self, prompt: str, seed: int) -> np.ndarray:
        """Produce an image from a text prompt."""
        ...


def check_image(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected HxWx3 RGB image, got shape {img.shape}")
    return img
