"""Command-line entry points: curate, evaluate, report.

The run config is a JSON file; see README for the schema.  Evaluation fans
out over (image x attributor x metric) cells, streams one JSON-lines record
per cell, and then writes the aggregated report, CSV curves and plots.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from . import aggregate, baselines, curation, stratified
from .backends import InpaintCache, RandomAttributor, stable_seed
from .backends.base import BackendError
from .backends.registry import (
    build_attributor,
    build_classifier,
    build_generator,
    build_inpainter,
    build_world,
)

log = logging.getLogger(__name__)

BASELINE_KINDS = {"delete", "blur", "channel_mean"}
ALL_METRICS = ("stratified", "delete", "blur", "channel_mean", "violation", "saliency")
RANDOM_LOWER_BOUND_SEEDS = 5


def load_config(path) -> dict:
    cfg = json.loads(Path(path).read_text())
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    """Fail fast: every referenced backend spec must be resolvable."""
    world = build_world(cfg.get("world"))
    build_classifier(cfg.get("classifier", {}), world)
    for spec in cfg.get("attributors", []):
        build_attributor(spec, world)
    metrics = cfg.get("metrics", list(ALL_METRICS))
    unknown = set(metrics) - set(ALL_METRICS)
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    if "stratified" in metrics:
        build_inpainter(cfg.get("inpainter", {}), world)
    if "generator" in cfg:
        build_generator(cfg["generator"], world)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _stratified_config(cfg: dict) -> stratified.StratifiedConfig:
    s = cfg.get("stratified", {})
    return stratified.StratifiedConfig(
        target_rank=int(s.get("target_rank", 2)),
        apply_weighting=bool(s.get("apply_weighting", True)),
        granularity=s.get("granularity", "patch"),
        steps=tuple(s.get("steps", list(stratified.DEFAULT_STEPS))),
        patch_size=int(s.get("patch_size", 16)),
        inpaint_seed=int(s.get("inpaint_seed", cfg.get("seed", 0))),
        inpaint_samples=int(s.get("inpaint_samples", 1)),
    )


def _perturbation_kind(cfg: dict, kind: str) -> baselines.PerturbationKind:
    p = cfg.get("perturbation", {})
    return baselines.PerturbationKind(
        kind=kind,
        blur_kernel_size=int(p.get("blur_kernel_size", 11)),
        blur_sigma=float(p.get("blur_sigma", 5.0)),
        mean_scope=p.get("mean_scope", "per_image"),
    )


def load_dataset(cfg: dict, classifier, world) -> list:
    """Return a list of (image_id, image)."""
    spec = cfg.get("dataset", {"kind": "oracle"})
    kind = spec.get("kind")
    if kind == "oracle":
        n = int(spec.get("n_images", 8))
        seed = int(spec.get("seed", cfg.get("seed", 0)))
        images = []
        for i in range(n):
            cls = i % world.n_classes
            img = world.image_for_class(cls, image_seed=stable_seed("dataset", seed, i))
            images.append((f"img_{i:04d}_{world.class_names[cls]}", img))
        return images
    if kind == "directory":
        root = Path(spec["path"])
        size = classifier.input_size
        images = []
        for path in sorted(root.iterdir()):
            if path.suffix.lower() not in (".png", ".jpg", ".jpeg"):
                continue
            img = Image.open(path).convert("RGB").resize((size, size), Image.BILINEAR)
            images.append((path.name, np.array(img)))
        return images
    raise ValueError(f"unknown dataset kind {kind!r}")


def run_curate(cfg: dict, out_dir: Path) -> Path:
    world = build_world(cfg.get("world"))
    classifier = build_classifier(cfg["classifier"], world)
    generator = build_generator(cfg["generator"], world)
    cur = cfg.get("curation", {})
    class_set = curation.curate_classes(
        classifier, generator,
        class_names=cur.get("class_names"),
        n_per_class=int(cur.get("n_per_class", 20)),
        threshold=float(cur.get("threshold", 0.5)),
        seed=int(cfg.get("seed", 0)),
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "class_set.json"
    class_set.save(path)
    log.info("curated %d/%d classes -> %s", len(class_set.classes),
             len(class_set.per_class), path)
    return path


def _evaluate_cell(image_id, image, metric, attributor, classifier, inpainter,
                   strat_cfg, cfg):
    if metric == "stratified":
        return stratified.evaluate_image(image, image_id, classifier, attributor,
                                         inpainter, strat_cfg)
    common = dict(steps=strat_cfg.steps, patch_size=strat_cfg.patch_size,
                  granularity=strat_cfg.granularity)
    if metric in BASELINE_KINDS:
        return baselines.baseline_curve(image, image_id, classifier, attributor,
                                        _perturbation_kind(cfg, metric), **common)
    if metric == "violation":
        return baselines.violation_curve(image, image_id, classifier, attributor, **common)
    if metric == "saliency":
        return baselines.saliency_curve(image, image_id, classifier, attributor, **common)
    raise ValueError(f"unknown metric {metric!r}")


def _average_records(records, method_id):
    """Mean per-step scores across random seeds; errored steps stay excluded."""
    base = records[0]
    scores = []
    for i in range(len(base.steps)):
        vals = [r.scores[i] for r in records if r.scores[i] is not None]
        scores.append(float(np.mean(vals)) if vals else None)
    return stratified.ImageScore(base.image_id, method_id, base.metric_id, base.steps,
                                 scores, [{"averaged_over": len(records)}],
                                 class_agnostic=True)


def run_evaluation(cfg: dict, out_dir: Path, cache_dir: Path | None = None,
                   class_set_path: Path | None = None, parallelism: int = 1,
                   inpainter=None) -> aggregate.EvaluationReport:
    """Full evaluation run; `inpainter` may be injected (tests, resume checks)."""
    validate_config(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    world = build_world(cfg.get("world"))
    classifier = build_classifier(cfg["classifier"], world)
    metrics = cfg.get("metrics", list(ALL_METRICS))
    strat_cfg = _stratified_config(cfg)
    seed = int(cfg.get("seed", 0))

    cache = InpaintCache(cache_dir) if cache_dir else None
    if inpainter is None and "stratified" in metrics:
        inpainter = build_inpainter(cfg.get("inpainter", {}), world, cache=cache)

    # attributors; the "random" method is the 5-seed-averaged lower bound
    attributors = []
    for spec in cfg.get("attributors", []):
        if spec.get("kind") == "random":
            n_seeds = int(spec.get("n_seeds", RANDOM_LOWER_BOUND_SEEDS))
            base_seed = int(spec.get("seed", seed))
            members = [RandomAttributor(base_seed + i, world.grid_shape, world.patch_size)
                       for i in range(n_seeds)]
            attributors.append(("random", members))
        else:
            a = build_attributor(spec, world)
            attributors.append((a.id, [a]))

    images = load_dataset(cfg, classifier, world)
    if class_set_path is not None:
        class_set = curation.ClassSet.load(class_set_path)
        target_rank = strat_cfg.target_rank
        sample = bool(cfg.get("dataset", {}).get("sample_per_class", False))
        images = curation.filter_eval_images(images, classifier, class_set,
                                             target_rank=target_rank,
                                             sample_per_class=sample, seed=seed)

    records_path = out_dir / "records.jsonl"
    write_lock = threading.Lock()
    records: list = []

    def run_cell(cell):
        image_id, image, metric, method_id, members = cell
        outs = []
        for member in members:
            try:
                outs.append(_evaluate_cell(image_id, image, metric, member, classifier,
                                           inpainter, strat_cfg, cfg))
            except Exception as exc:
                log.warning("cell failed (%s, %s, %s): %s", image_id, metric, method_id, exc)
                outs.append(stratified.ImageScore(
                    image_id, method_id, metric, strat_cfg.steps,
                    [None] * len(strat_cfg.steps), [{} for _ in strat_cfg.steps],
                    error=str(exc)))
        rec = outs[0] if len(outs) == 1 else _average_records(outs, method_id)
        rec.method_id = method_id
        with write_lock:
            records.append(rec)
            with open(records_path, "a") as f:
                f.write(rec.to_json() + "\n")
        return rec

    records_path.write_text("")
    cells = [(image_id, image, metric, method_id, members)
             for image_id, image in images
             for metric in metrics
             for method_id, members in attributors]
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(run_cell, cells))
    else:
        for cell in cells:
            run_cell(cell)

    n_ok = sum(1 for r in records if r.error is None)
    if n_ok == 0:
        raise RuntimeError("no evaluation cell succeeded")

    provenance = {
        "config_hash": config_hash(cfg),
        "classifier_id": classifier.id,
        "inpainter_id": getattr(inpainter, "id", None),
        "inpainter_version": getattr(inpainter, "version", None),
        "n_images": len(images),
        "n_cells": len(cells),
    }
    report = aggregate.build_report(
        records, config=cfg, provenance=provenance,
        auc_rule=cfg.get("auc_rule", "mean"),
        include_random_in_norm=bool(cfg.get("include_random_in_norm", True)),
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    _write_outputs(report, out_dir)
    return report


def _write_outputs(report: aggregate.EvaluationReport, out_dir: Path) -> None:
    (out_dir / "report.json").write_text(report.to_json())
    aggregate.write_curve_csv(report, out_dir / "curves.csv")
    aggregate.plot_curves(report, out_dir / "plots")
    log.info("report hash %s", report.determinism_hash())


def run_report(records_path: Path, out_dir: Path, cfg: dict | None = None) -> aggregate.EvaluationReport:
    records, skipped = aggregate.read_records(records_path)
    if not records:
        raise RuntimeError(f"no valid records in {records_path}")
    cfg = cfg or {}
    report = aggregate.build_report(
        records, config=cfg, skipped=skipped,
        auc_rule=cfg.get("auc_rule", "mean"),
        include_random_in_norm=bool(cfg.get("include_random_in_norm", True)),
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_outputs(report, out_dir)
    return report


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "metrics", None):
        cfg["metrics"] = args.metrics.split(",")
    if getattr(args, "attributors", None):
        wanted = set(args.attributors.split(","))
        cfg["attributors"] = [a for a in cfg.get("attributors", [])
                              if a.get("id", a.get("kind")) in wanted]
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="inpaintbench",
                                     description="Faithfulness benchmark for attribution maps")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_cur = sub.add_parser("curate", help="build the generator-recognizable class set")
    p_cur.add_argument("--config", required=True)
    p_cur.add_argument("--out-dir", required=True)
    p_cur.add_argument("--seed", type=int, default=None)

    p_eval = sub.add_parser("evaluate", help="run metrics over the dataset")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--out-dir", required=True)
    p_eval.add_argument("--cache-dir", default=None)
    p_eval.add_argument("--class-set", default=None)
    p_eval.add_argument("--metrics", default=None, help="comma-separated subset")
    p_eval.add_argument("--attributors", default=None, help="comma-separated subset of ids")
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--parallelism", type=int, default=1)

    p_rep = sub.add_parser("report", help="re-aggregate an existing records file")
    p_rep.add_argument("--records", required=True)
    p_rep.add_argument("--out-dir", required=True)
    p_rep.add_argument("--config", default=None)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "curate":
            cfg = _apply_overrides(load_config(args.config), args)
            run_curate(cfg, Path(args.out_dir))
        elif args.command == "evaluate":
            cfg = _apply_overrides(load_config(args.config), args)
            run_evaluation(cfg, Path(args.out_dir),
                           cache_dir=Path(args.cache_dir) if args.cache_dir else None,
                           class_set_path=Path(args.class_set) if args.class_set else None,
                           parallelism=args.parallelism)
        elif args.command == "report":
            cfg = json.loads(Path(args.config).read_text()) if args.config else None
            run_report(Path(args.records), Path(args.out_dir), cfg)
    except (BackendError, RuntimeError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
