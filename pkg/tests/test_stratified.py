import numpy as np
import pytest

from inpaintbench.backends import (
    OracleClassifier,
    OracleInpainter,
    OracleWorld,
    RandomAttributor,
    TemplateAttributor,
)
from inpaintbench.backends.base import BackendError
from inpaintbench.core import rank_class
from inpaintbench.stratified import ImageScore, StratifiedConfig, evaluate_image, target_class


class FlipAtStepInpainter:
    """Covers the whole object region only from a chosen step on."""

    id = "flip-at-step"
    version = "1"

    def __init__(self, world, flip_from_step):
        self.world = world
        self.flip_from = flip_from_step
        self._call = 0

    def inpaint(self, image, keep_mask, prompt, seed):
        step_idx = self._call
        self._call += 1
        inner = OracleInpainter(self.world)
        if step_idx + 1 >= self.flip_from:
            full = np.zeros(image.shape[:2], dtype=bool)  # keep nothing
            return inner.inpaint(image, full, prompt, seed)
        return image.copy()


class FailingInpainter:
    id = "failing"
    version = "1"

    def inpaint(self, image, keep_mask, prompt, seed):
        raise BackendError("engine outage")


class FailingAttributor:
    id = "broken"
    class_specific = True

    def explain(self, classifier, image, target_class=None):
        raise RuntimeError("no map for you")


def test_target_class_binary():
    class Binary:
        class_names = ["a", "b"]
        input_size = 4

        def classify(self, image):
            return np.array([0.7, 0.3])

    img = np.zeros((4, 4, 3), np.uint8)
    assert target_class(img, Binary(), 2) == 1


def test_target_class_rank_and_ties():
    assert rank_class([0.5, 0.3, 0.2], 2) == 1
    assert rank_class([0.5, 0.25, 0.25], 2) == 1


def test_target_rank_exceeding_classes_errors(world, classifier):
    img = world.image_for_class(0, 1)
    with pytest.raises(ValueError):
        target_class(img, classifier, world.n_classes + 1)


def test_ground_truth_scores_one_from_first_covering_step(world, classifier, inpainter, ground_truth):
    # the object region holds region_size patches, so the p=0.10 mask (20
    # patches on 14x14) already covers it: every step flips with weight 1
    img = world.image_for_class(2, image_seed=11)
    score = evaluate_image(img, "i", classifier, ground_truth, inpainter, StratifiedConfig())
    assert score.scores == [1.0] * 5
    for d in score.detail:
        assert d["predicted_class_after"] == d["target_class"]
        assert d["weight"] == 1.0


def test_random_attribution_scores_zero(world, classifier, inpainter):
    # chance of a random 20-patch mask covering all 20 object patches is
    # hypergeometric-negligible at every step
    cfg = StratifiedConfig()
    for seed in range(5):
        img = world.image_for_class(seed % world.n_classes, image_seed=seed)
        attr = RandomAttributor(seed, world.grid_shape, world.patch_size)
        score = evaluate_image(img, f"i{seed}", classifier, attr, inpainter, cfg)
        assert score.scores == [0.0] * 5
        assert score.class_agnostic


def test_no_weighting_indicator_pattern(world, classifier, ground_truth):
    img = world.image_for_class(1, image_seed=3)
    inp = FlipAtStepInpainter(world, flip_from_step=3)
    cfg = StratifiedConfig(apply_weighting=False)
    score = evaluate_image(img, "i", classifier, ground_truth, inp, cfg)
    assert score.scores[:3] == [0.0, 0.0, 1.0]
    assert all(s in (0.0, 1.0) for s in score.scores)
    # weight detail must stay absent wherever the prediction did not flip
    for s, d in zip(score.scores, score.detail):
        if s == 0.0:
            assert d["weight"] is None


def test_determinism(world, classifier, inpainter, ground_truth):
    img = world.image_for_class(4, image_seed=9)
    cfg = StratifiedConfig(inpaint_seed=42)
    a = evaluate_image(img, "i", classifier, ground_truth, inpainter, cfg)
    b = evaluate_image(img, "i", classifier, ground_truth, inpainter, cfg)
    assert a.to_json() == b.to_json()


def test_weighting_bounded_by_unweighted(world, classifier, inpainter):
    cfg_w = StratifiedConfig(apply_weighting=True)
    cfg_u = StratifiedConfig(apply_weighting=False)
    for seed in range(4):
        img = world.image_for_class(seed, image_seed=seed + 20)
        attr = TemplateAttributor(world)
        a = evaluate_image(img, "i", classifier, attr, inpainter, cfg_w)
        b = evaluate_image(img, "i", classifier, attr, inpainter, cfg_u)
        assert all(x <= y for x, y in zip(a.scores, b.scores))


def test_inpainter_failure_marks_steps_errored(world, classifier, ground_truth):
    img = world.image_for_class(0, image_seed=1)
    score = evaluate_image(img, "i", classifier, ground_truth, FailingInpainter(),
                           StratifiedConfig())
    assert score.scores == [None] * 5
    assert all("error" in d for d in score.detail)
    assert score.error is None  # image itself is not skipped


def test_attributor_failure_skips_image(world, classifier, inpainter):
    img = world.image_for_class(0, image_seed=1)
    score = evaluate_image(img, "i", classifier, FailingAttributor(), inpainter,
                           StratifiedConfig())
    assert score.error is not None and "attributor" in score.error
    assert score.scores == [None] * 5


def test_pixel_granularity_equals_patch_size_one(small_world):
    clf = OracleClassifier(small_world)
    inp = OracleInpainter(small_world)
    attr = TemplateAttributor(small_world)
    img = small_world.image_for_class(1, image_seed=5)
    a = evaluate_image(img, "i", clf, attr, inp,
                       StratifiedConfig(granularity="patch", patch_size=1))
    b = evaluate_image(img, "i", clf, attr, inp,
                       StratifiedConfig(granularity="pixel", patch_size=1))
    assert a.scores == b.scores


def test_config_validation():
    with pytest.raises(ValueError):
        StratifiedConfig(target_rank=1)
    with pytest.raises(ValueError):
        StratifiedConfig(steps=(0.1, 0.1))
    with pytest.raises(ValueError):
        StratifiedConfig(steps=(0.2, 0.6))


def test_image_score_json_round_trip(world, classifier, inpainter, ground_truth):
    img = world.image_for_class(2, image_seed=2)
    score = evaluate_image(img, "i", classifier, ground_truth, inpainter, StratifiedConfig())
    again = ImageScore.from_json(score.to_json())
    assert again == score
