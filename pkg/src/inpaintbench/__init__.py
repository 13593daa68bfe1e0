"""Perturbation-based faithfulness benchmark for image attribution maps.

Evaluates relevance maps by inpainting their top patches toward the image's
second-ranked class and checking for exactly that class flip, alongside the
classical delete/blur/mean perturbation baselines and the aggregation
statistics (AUC, min-max normalization, distance from the random bound).
"""

from .core import (
    PatchMask,
    RelevanceMap,
    WeightInputs,
    causal_weight,
    downsample_to_patches,
    expand_mask,
    top_p_select,
)
from .stratified import ImageScore, StratifiedConfig, evaluate_image, target_class
from .baselines import PerturbationKind, baseline_curve, perturb, saliency_curve, violation_curve
from .curation import ClassSet, curate_classes, filter_eval_images
from .aggregate import EvaluationReport, PerturbationCurve, auc, build_report, normalize_aucs, rand_dist

__version__ = "0.1.0"
