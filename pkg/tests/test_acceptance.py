"""Acceptance suite: one test per release criterion.

Each test registers a single pass/fail line (echoed after the run via the
conftest terminal-summary hook) and enforces its runtime budget directly.
"""

import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from inpaintbench import aggregate, baselines, cli, curation, stratified
from inpaintbench.backends import (
    OracleClassifier,
    OracleInpainter,
    OracleWorld,
    RandomAttributor,
    ScriptedGenerator,
    TemplateAttributor,
)
from inpaintbench.core import (
    RelevanceMap,
    WeightInputs,
    causal_weight,
    rank_class,
    round_half_up,
    top_p_select,
)


@contextmanager
def criterion(log, number, label, budget_s):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        log.append(f"criterion {number} ({label}): FAIL")
        raise
    elapsed = time.perf_counter() - start
    if elapsed > budget_s:
        log.append(f"criterion {number} ({label}): FAIL (took {elapsed:.1f}s > {budget_s}s)")
        pytest.fail(f"runtime budget exceeded: {elapsed:.1f}s > {budget_s}s")
    log.append(f"criterion {number} ({label}): PASS ({elapsed:.1f}s)")


def random_subset(rng, n, allow_empty=True):
    k_min = 0 if allow_empty else 1
    k = int(rng.integers(k_min, n + 1))
    return frozenset(int(i) for i in rng.choice(n, size=k, replace=False))


def test_criterion_1_weighting_matches_set_arithmetic_oracle(acceptance_log):
    with criterion(acceptance_log, 1, "causal weight = set-arithmetic oracle", 5.0):
        rng = np.random.default_rng(11)
        for _ in range(1200):
            side = int(rng.integers(1, 15))
            n = side * side
            modified = random_subset(rng, n)
            top_orig = random_subset(rng, n)
            top_inp = random_subset(rng, n, allow_empty=False)
            w = causal_weight(WeightInputs(modified, top_orig, top_inp, n_patches=n))
            oracle = Fraction(len(top_inp & (top_orig | modified)), len(top_inp))
            assert w == float(oracle)
        with pytest.raises(ValueError):
            causal_weight(WeightInputs(frozenset({1}), frozenset(), frozenset()))


def sort_oracle(values: np.ndarray, p: float) -> set:
    flat = values.ravel()
    k = round_half_up(p * flat.size)
    order = sorted(range(flat.size), key=lambda i: (-flat[i], i))
    return set(order[:k])


def test_criterion_2_top_p_matches_full_sort_oracle(acceptance_log):
    with criterion(acceptance_log, 2, "top-p selection = full-sort oracle", 10.0):
        rng = np.random.default_rng(13)
        for trial in range(1100):
            rows = int(rng.integers(1, 15))
            cols = int(rng.integers(1, 15))
            if trial % 3 == 0:
                # heavy ties: few distinct values
                vals = rng.integers(0, 4, size=(rows, cols)).astype(np.float64)
            else:
                vals = rng.random((rows, cols))
            p = float(rng.uniform(0.01, 1.0))
            if round_half_up(p * rows * cols) == 0:
                continue
            mask = top_p_select(RelevanceMap(vals, "patch"), p, patch_size=1)
            assert set(mask.selected) == sort_oracle(vals, p)
            assert len(mask.selected) == round_half_up(p * rows * cols)
        # the canonical grid: 10% of a 14x14 grid is 20 patches
        mask = top_p_select(RelevanceMap(rng.random((14, 14)), "patch"), 0.10, patch_size=16)
        assert len(mask.selected) == 20


def _stratified_records(world, classifier, images, n_random_seeds=5, **cfg_kwargs):
    inpainter = OracleInpainter(world)
    gt = TemplateAttributor(world)
    cfg = stratified.StratifiedConfig(patch_size=world.patch_size, **cfg_kwargs)
    records = []
    for image_id, image in images:
        records.append(stratified.evaluate_image(image, image_id, classifier, gt, inpainter, cfg))
        members = [
            stratified.evaluate_image(
                image, image_id, classifier,
                RandomAttributor(s, world.grid_shape, world.patch_size),
                inpainter, cfg)
            for s in range(n_random_seeds)
        ]
        records.append(cli._average_records(members, "random"))
    return records


def make_images(world, n, seed=0):
    return [(f"img_{i:03d}",
             world.image_for_class(i % world.n_classes, image_seed=seed * 1000 + i))
            for i in range(n)]


def test_criterion_3_ground_truth_separates_from_random(acceptance_log):
    with criterion(acceptance_log, 3, "ground truth beats 5-seed random by >= 0.5", 60.0):
        world = OracleWorld()  # 14x14 grid, known ground-truth patch set
        classifier = OracleClassifier(world)
        images = make_images(world, 50)
        records = _stratified_records(world, classifier, images)
        report = aggregate.build_report(records)
        strat = report.per_metric["stratified"]
        gap = strat["normalized_auc"]["ground_truth"] - strat["normalized_auc"]["random"]
        assert gap >= 0.5
        assert strat["rand_dist"] >= 0.5


def test_criterion_4_delete_pathology_vs_stratified(acceptance_log):
    with criterion(acceptance_log, 4, "OOD classifier: delete saturates, stratified does not", 60.0):
        world = OracleWorld()
        ood = OracleClassifier(world, ood_sensitive=True)
        images = make_images(world, 20, seed=4)
        kind = baselines.PerturbationKind("delete")

        delete_records = []
        for image_id, image in images:
            members = [
                baselines.baseline_curve(image, image_id, ood,
                                         RandomAttributor(s, world.grid_shape, world.patch_size),
                                         kind)
                for s in range(5)
            ]
            delete_records.append(cli._average_records(members, "random"))
        for rec in delete_records:
            assert rec.scores == [1.0] * len(rec.steps)
        (curve,) = aggregate.curves_from_records(delete_records)
        assert aggregate.auc(curve) == 1.0

        strat_records = [r for r in _stratified_records(world, ood, images)
                         if r.method_id == "random"]
        (curve,) = aggregate.curves_from_records(strat_records)
        assert aggregate.auc(curve) <= 0.1


def test_criterion_5_aggregation_arithmetic(acceptance_log):
    with criterion(acceptance_log, 5, "normalization / rand-dist arithmetic", 30.0):
        norm = aggregate.normalize_aucs({"a": 0.2, "b": 0.4, "c": 0.8})
        assert norm["a"] == 0.0
        assert norm["c"] == 1.0
        assert norm["b"] == (0.4 - 0.2) / (0.8 - 0.2)
        assert norm["b"] == pytest.approx(1 / 3, abs=1e-12)

        d = aggregate.rand_dist({"a": 1.0, "b": 0.8, "c": 0.6, "random": 0.0})
        assert d == pytest.approx(0.8, abs=1e-12)

        # ordering invariance: min-max normalization never reorders methods
        rng = np.random.default_rng(5)
        for _ in range(1000):
            k = int(rng.integers(2, 9))
            aucs = {f"m{i}": float(v) for i, v in enumerate(rng.random(k))}
            norm = aggregate.normalize_aucs(aucs)
            by_raw = sorted(aucs, key=lambda m: (-aucs[m], m))
            by_norm = sorted(norm, key=lambda m: (-norm[m], m))
            assert by_raw == by_norm


def test_criterion_6_perturbation_exactness(acceptance_log):
    with criterion(acceptance_log, 6, "perturbations exact outside/inside masks", 30.0):
        rng = np.random.default_rng(6)
        kinds = [baselines.PerturbationKind("delete"),
                 baselines.PerturbationKind("blur"),
                 baselines.PerturbationKind("channel_mean")]
        for _ in range(200):
            h = int(rng.integers(12, 48))
            w = int(rng.integers(12, 48))
            image = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
            mask = rng.random((h, w)) < rng.uniform(0.05, 0.95)
            for kind in kinds:
                out = baselines.perturb(image, mask, kind)
                assert np.array_equal(out[~mask], image[~mask])
                if kind.kind == "delete":
                    assert np.all(out[mask] == 0)

        fixture = np.array([[[10, 20, 30], [20, 40, 60]],
                            [[30, 60, 90], [40, 80, 120]]], dtype=np.uint8)
        mask = np.array([[True, False], [False, False]])
        out = baselines.perturb(fixture, mask, baselines.PerturbationKind("channel_mean"))
        assert out[0, 0].tolist() == [25, 50, 75]  # hand-computed per-channel means
        assert np.array_equal(out[~mask], fixture[~mask])


def test_criterion_7_curation_threshold_and_filter(acceptance_log):
    with criterion(acceptance_log, 7, "50% curation boundary and class-set filter", 30.0):
        world = OracleWorld(grid_shape=(6, 6), patch_size=4, n_classes=4,
                            region_size=6, seed=7)
        classifier = OracleClassifier(world)
        correct_counts = {0: 10, 1: 9, 2: 20, 3: 0}
        gen = ScriptedGenerator(world, lambda t, j: j < correct_counts[t])
        class_set = curation.curate_classes(classifier, gen, n_per_class=20, threshold=0.5)
        names = world.class_names
        assert class_set.per_class[names[0]]["n_correct"] == 10
        assert class_set.per_class[names[1]]["n_correct"] == 9
        assert names[0] in class_set.classes       # 10/20 -> accepted
        assert names[1] not in class_set.classes   # 9/20 -> rejected
        assert class_set.classes == [names[0], names[2]]

        images = make_images(world, 12, seed=7)
        kept = curation.filter_eval_images(images, classifier, class_set,
                                           target_rank=2, sample_per_class=False)
        assert kept
        ok = set(class_set.classes)
        for _, image in kept:
            t = rank_class(classifier.classify(image), 2)
            assert names[t] in ok


class KillSwitchInpainter:
    """Oracle inpainter that simulates a process kill after n_before calls."""

    id = "oracle-inpainter"
    version = "1"

    def __init__(self, world, n_before=None):
        self.inner = OracleInpainter(world)
        self.id = self.inner.id
        self.version = getattr(self.inner, "version", "1")
        self.n_before = n_before
        self.calls = 0

    def inpaint(self, image, keep_mask, prompt, seed):
        if self.n_before is not None and self.calls >= self.n_before:
            raise KeyboardInterrupt("simulated kill")
        self.calls += 1
        return self.inner.inpaint(image, keep_mask, prompt, seed)


def test_criterion_8_determinism_and_resume(acceptance_log, tmp_path):
    from inpaintbench.backends import CachedInpainter, InpaintCache
    from inpaintbench.backends.registry import build_world

    with criterion(acceptance_log, 8, "identical report hashes; resume via cache replay", 60.0):
        cfg = {
            "seed": 8,
            "world": {"grid_shape": [6, 6], "patch_size": 4, "n_classes": 4,
                      "region_size": 6, "seed": 3},
            "classifier": {"kind": "oracle"},
            "inpainter": {"kind": "oracle"},
            "attributors": [{"kind": "ground_truth", "id": "ground_truth"},
                            {"kind": "random", "id": "random"}],
            "metrics": ["stratified"],
            "stratified": {"patch_size": 4},
            "dataset": {"kind": "oracle", "n_images": 4},
        }
        world = build_world(cfg["world"])

        r1 = cli.run_evaluation(cfg, tmp_path / "a")
        r2 = cli.run_evaluation(cfg, tmp_path / "b")
        assert r1.determinism_hash() == r2.determinism_hash()

        # killed mid-run, then resumed against the same cache
        cache = InpaintCache(tmp_path / "cache")
        killed = KillSwitchInpainter(world, n_before=12)
        with pytest.raises(KeyboardInterrupt):
            cli.run_evaluation(cfg, tmp_path / "killed",
                               inpainter=CachedInpainter(killed, cache))
        assert killed.calls == 12

        resumed = KillSwitchInpainter(world)
        r3 = cli.run_evaluation(cfg, tmp_path / "resumed",
                                inpainter=CachedInpainter(resumed, cache))
        assert resumed.calls < killed.calls + resumed.calls  # some cells replayed
        assert r3.determinism_hash() == r1.determinism_hash()


def test_criterion_9_ablation_toggles(acceptance_log):
    with criterion(acceptance_log, 9, "pixel/patch equivalence; unweighted >= weighted", 60.0):
        world = OracleWorld(grid_shape=(8, 8), patch_size=1, n_classes=4,
                            region_size=6, seed=9)
        classifier = OracleClassifier(world)
        inpainter = OracleInpainter(world)
        attributors = [TemplateAttributor(world)] + [
            RandomAttributor(s, world.grid_shape, world.patch_size) for s in range(5)
        ]
        images = make_images(world, 12, seed=9)

        cfg_patch = stratified.StratifiedConfig(granularity="patch", patch_size=1)
        cfg_pixel = stratified.StratifiedConfig(granularity="pixel", patch_size=1)
        cfg_unweighted = stratified.StratifiedConfig(granularity="patch", patch_size=1,
                                                     apply_weighting=False)
        for attributor in attributors:
            for image_id, image in images:
                a = stratified.evaluate_image(image, image_id, classifier, attributor,
                                              inpainter, cfg_patch)
                b = stratified.evaluate_image(image, image_id, classifier, attributor,
                                              inpainter, cfg_pixel)
                assert a.scores == b.scores
                u = stratified.evaluate_image(image, image_id, classifier, attributor,
                                              inpainter, cfg_unweighted)
                for s_w, s_u in zip(a.scores, u.scores):
                    assert s_u >= s_w
