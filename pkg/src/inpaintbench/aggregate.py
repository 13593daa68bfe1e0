"""Aggregation: per-image records -> mean curves -> AUC -> normalized AUC and
distance from the random lower bound, plus report/CSV/plot emission.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .stratified import ImageScore

log = logging.getLogger(__name__)

RANDOM_METHOD_ID = "random"


class DegenerateMetricError(ValueError):
    """All methods scored identically; the metric cannot discriminate."""


@dataclass
class PerturbationCurve:
    method_id: str
    metric_id: str
    steps: tuple
    mean_scores: list
    n_images: list

    def __post_init__(self):
        if len(self.mean_scores) != len(self.steps) or len(self.n_images) != len(self.steps):
            raise ValueError("curve entries must align with steps")


def read_records(path) -> tuple[list[ImageScore], int]:
    """Parse a JSON-lines records file; malformed lines are skipped and counted."""
    records, skipped = [], 0
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(ImageScore.from_json(line))
            except Exception as exc:
                skipped += 1
                log.warning("skipping malformed record: %s", exc)
    return records, skipped


def curves_from_records(records: list[ImageScore]) -> list[PerturbationCurve]:
    """Average per-step scores over images for each (metric, method).

    Errored steps (score None) are excluded from the average, not scored 0.
    Records sort by image id first so float accumulation is deterministic.
    """
    groups: dict = {}
    for rec in records:
        if rec.error is not None:
            continue
        groups.setdefault((rec.metric_id, rec.method_id), []).append(rec)
    curves = []
    for (metric_id, method_id) in sorted(groups):
        recs = sorted(groups[(metric_id, method_id)], key=lambda r: r.image_id)
        steps = recs[0].steps
        means, counts = [], []
        for i in range(len(steps)):
            vals = [r.scores[i] for r in recs if r.scores[i] is not None]
            counts.append(len(vals))
            means.append(float(np.mean(vals)) if vals else float("nan"))
        curves.append(PerturbationCurve(method_id, metric_id, steps, means, counts))
    return curves


def auc(curve: PerturbationCurve, rule: str = "mean") -> float:
    """Area under the step curve, normalized to [0, 1].

    "mean" is the rectangle rule on equally spaced steps; "trapezoid" is
    available for comparison.
    """
    y = [v for v in curve.mean_scores if not np.isnan(v)]
    if not y:
        raise ValueError(f"empty curve for {curve.metric_id}/{curve.method_id}")
    if rule == "mean":
        return float(np.mean(y))
    if rule == "trapezoid":
        x = [s for s, v in zip(curve.steps, curve.mean_scores) if not np.isnan(v)]
        if len(x) == 1:
            return float(y[0])
        return float(np.trapezoid(y, x) / (x[-1] - x[0]))
    raise ValueError(f"unknown AUC rule {rule!r}")


def normalize_aucs(aucs: dict) -> dict:
    """Min-max normalization across methods; order preserved."""
    if len(aucs) < 2:
        raise ValueError("normalization needs at least two methods")
    vals = list(aucs.values())
    lo, hi = min(vals), max(vals)
    if hi == lo:
        raise DegenerateMetricError("all methods have identical AUC")
    return {m: (v - lo) / (hi - lo) for m, v in aucs.items()}


def rand_dist(normalized: dict, random_key: str = RANDOM_METHOD_ID) -> float:
    """|mean normalized AUC over non-random methods - random's normalized AUC|."""
    if random_key not in normalized:
        raise ValueError(f"random key {random_key!r} missing from normalized AUCs")
    others = [v for m, v in normalized.items() if m != random_key]
    if not others:
        raise ValueError("need at least one non-random method")
    return abs(float(np.mean(others)) - normalized[random_key])


@dataclass
class EvaluationReport:
    per_metric: dict  # metric_id -> {"auc": {...}, "normalized_auc": {...} | None,
    #                  "rand_dist": float | None, "non_discriminative": bool, "ranking": [...]}
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    skipped_records: int = 0
    failure_counts: dict = field(default_factory=dict)
    created_at: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, payload: str) -> "EvaluationReport":
        return cls(**json.loads(payload))

    def determinism_hash(self) -> str:
        """Hash of report content with volatile fields excluded."""
        d = asdict(self)
        d.pop("created_at", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def build_report(records: list[ImageScore], config: dict | None = None,
                 provenance: dict | None = None, skipped: int = 0,
                 auc_rule: str = "mean", random_key: str = RANDOM_METHOD_ID,
                 include_random_in_norm: bool = True, created_at: str = "") -> EvaluationReport:
    curves = curves_from_records(records)
    failure_counts: dict = {}
    for rec in records:
        n_err = (1 if rec.error is not None
                 else sum(1 for s in rec.scores if s is None))
        if n_err:
            key = f"{rec.metric_id}/{rec.method_id}"
            failure_counts[key] = failure_counts.get(key, 0) + n_err

    per_metric: dict = {}
    by_metric: dict = {}
    for c in curves:
        by_metric.setdefault(c.metric_id, {})[c.method_id] = c
    for metric_id in sorted(by_metric):
        method_curves = by_metric[metric_id]
        aucs = {m: auc(c, auc_rule) for m, c in sorted(method_curves.items())}
        entry: dict = {"auc": aucs, "normalized_auc": None, "rand_dist": None,
                       "non_discriminative": False}
        norm_input = aucs if include_random_in_norm else {
            m: v for m, v in aucs.items() if m != random_key}
        try:
            normalized = normalize_aucs(norm_input)
            if not include_random_in_norm and random_key in aucs:
                lo = min(norm_input.values())
                hi = max(norm_input.values())
                normalized[random_key] = (aucs[random_key] - lo) / (hi - lo)
            entry["normalized_auc"] = normalized
        except DegenerateMetricError:
            entry["non_discriminative"] = True
            normalized = None
        except ValueError:
            normalized = None
        ranking_src = normalized if normalized else aucs
        entry["ranking"] = sorted(ranking_src, key=lambda m: (-ranking_src[m], m))
        if normalized and random_key in normalized and len(normalized) >= 2:
            entry["rand_dist"] = rand_dist(normalized, random_key)
        entry["curves"] = {
            m: {"steps": list(c.steps), "mean_scores": c.mean_scores, "n_images": c.n_images}
            for m, c in sorted(method_curves.items())
        }
        per_metric[metric_id] = entry

    return EvaluationReport(per_metric, config=config or {}, provenance=provenance or {},
                            skipped_records=skipped, failure_counts=failure_counts,
                            created_at=created_at)


def write_curve_csv(report: EvaluationReport, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric_id", "method_id", "step", "mean_score", "n_images"])
        for metric_id in sorted(report.per_metric):
            for method_id, c in sorted(report.per_metric[metric_id]["curves"].items()):
                for s, v, n in zip(c["steps"], c["mean_scores"], c["n_images"]):
                    writer.writerow([metric_id, method_id, s, v, n])


def plot_curves(report: EvaluationReport, out_dir) -> list[Path]:
    """One panel per metric, one line per method (random included)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric_id in sorted(report.per_metric):
        fig, ax = plt.subplots(figsize=(5, 4))
        for method_id, c in sorted(report.per_metric[metric_id]["curves"].items()):
            ax.plot(c["steps"], c["mean_scores"], marker="o", label=method_id)
        ax.set_xlabel("fraction of pixels perturbed")
        ax.set_ylabel("mean score")
        ax.set_title(metric_id)
        ax.set_ylim(-0.05, 1.05)
        ax.legend(fontsize=7)
        path = out_dir / f"curve_{metric_id}.png"
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
