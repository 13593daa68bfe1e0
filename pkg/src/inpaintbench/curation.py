"""Class-set curation: keep only the classes the image generator can render
well enough for the classifier to recognize, then filter evaluation images
to those whose second-ranked class is in the curated set.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends.base import BackendError
from .backends.oracle import stable_seed
from .core import rank_class

log = logging.getLogger(__name__)


@dataclass
class ClassSet:
    classes: list  # accepted class names, in class-index order
    per_class: dict  # name -> {n_generated, n_correct, accepted, error?}
    generator_id: str = ""
    classifier_id: str = ""
    seed: int = 0

    def accepted(self, name: str) -> bool:
        return name in set(self.classes)

    def to_json(self) -> str:
        return json.dumps(
            {"classes": self.classes, "per_class": self.per_class,
             "generator_id": self.generator_id, "classifier_id": self.classifier_id,
             "seed": self.seed},
            sort_keys=True, indent=2,
        )

    @classmethod
    def from_json(cls, payload: str) -> "ClassSet":
        return cls(**json.loads(payload))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ClassSet":
        return cls.from_json(Path(path).read_text())


def curate_classes(classifier, generator, class_names=None, n_per_class: int = 20,
                   threshold: float = 0.5, seed: int = 0) -> ClassSet:
    """Generate n images per class from its name and accept the class iff at
    least `threshold` of them classify back to it."""
    if class_names is None:
        class_names = list(classifier.class_names)
    name_to_idx = {name: i for i, name in enumerate(classifier.class_names)}
    per_class: dict = {}
    accepted: list = []
    for name in class_names:
        t = name_to_idx[name]
        n_correct = 0
        try:
            for j in range(n_per_class):
                img = generator.generate(name, seed=stable_seed("curate", seed, t, j))
                if rank_class(classifier.classify(img), 1) == t:
                    n_correct += 1
        except BackendError as exc:
            log.warning("generator failed for class %s: %s", name, exc)
            per_class[name] = {"n_generated": 0, "n_correct": 0, "accepted": False,
                               "error": str(exc)}
            continue
        ok = n_correct / n_per_class >= threshold
        per_class[name] = {"n_generated": n_per_class, "n_correct": n_correct, "accepted": ok}
        if ok:
            accepted.append(name)
    return ClassSet(accepted, per_class, generator_id=generator.id,
                    classifier_id=classifier.id, seed=seed)


def filter_eval_images(images, classifier, class_set: ClassSet, target_rank: int = 2,
                       sample_per_class: bool = True, seed: int = 0):
    """Keep images whose rank-`target_rank` class is in the curated set.

    `images` is an iterable of (image_id, image).  With sample_per_class the
    standard evaluation set keeps one image per curated class, picked first
    in dataset order under a seeded shuffle.
    """
    ok = set(class_set.classes)
    kept = []
    reasons: dict = {}
    for image_id, image in images:
        t = rank_class(classifier.classify(image), target_rank)
        name = classifier.class_names[t]
        if name in ok:
            kept.append((image_id, image, name))
        else:
            reasons[image_id] = f"rank-{target_rank} class {name!r} not in curated set"
    if not kept:
        raise RuntimeError(
            "no evaluation images survived class-set filtering; rejections: "
            + json.dumps(reasons, sort_keys=True)
        )
    if not sample_per_class:
        return [(i, img) for i, img, _ in kept]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(kept))
    chosen: dict = {}
    for idx in order:
        image_id, image, name = kept[idx]
        if name not in chosen:
            chosen[name] = (image_id, image)
    return [chosen[name] for name in sorted(chosen)]
