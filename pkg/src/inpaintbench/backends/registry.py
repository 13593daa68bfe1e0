"""Build backends from config dicts.

Each spec is a dict with a ``kind`` plus kind-specific parameters; synthetic
backends sharing a ``world`` section resolve to the same OracleWorld so the
classifier, inpainter, attributors, and generator agree on geometry.
"""

from __future__ import annotations

from .base import BackendError
from .cache import CachedInpainter, InpaintCache
from .oracle import (
    OracleClassifier,
    OracleGenerator,
    OracleInpainter,
    OracleWorld,
    RandomAttributor,
    TemplateAttributor,
)


def build_world(spec: dict | None) -> OracleWorld:
    spec = spec or {}
    return OracleWorld(
        grid_shape=tuple(spec.get("grid_shape", (14, 14))),
        patch_size=int(spec.get("patch_size", 16)),
        n_classes=int(spec.get("n_classes", 10)),
        region_size=int(spec.get("region_size", 20)),
        seed=int(spec.get("seed", 0)),
    )


def build_classifier(spec: dict, world: OracleWorld | None = None):
    kind = spec.get("kind")
    if kind == "oracle":
        return OracleClassifier(world or build_world(spec.get("world")),
                                ood_sensitive=bool(spec.get("ood_sensitive", False)))
    if kind == "torch":
        from . import torch_adapters

        raise BackendError("torch classifier specs must be constructed in code "
                           "(a live nn.Module is required); see backends.torch_adapters")
    raise BackendError(f"unknown classifier kind {kind!r}")


def build_attributor(spec: dict, world: OracleWorld | None = None):
    kind = spec.get("kind")
    if kind == "ground_truth":
        return TemplateAttributor(world or build_world(spec.get("world")),
                                  id=spec.get("id", "ground_truth"))
    if kind == "random":
        w = world or build_world(spec.get("world"))
        return RandomAttributor(seed=int(spec.get("seed", 0)), grid_shape=w.grid_shape,
                                patch_size=w.patch_size, id=spec.get("id", "random"))
    raise BackendError(f"unknown attributor kind {kind!r}")


def build_inpainter(spec: dict, world: OracleWorld | None = None,
                    cache: InpaintCache | None = None):
    kind = spec.get("kind")
    if kind == "oracle":
        inpainter = OracleInpainter(world or build_world(spec.get("world")))
    elif kind == "remote":
        from .remote import RemoteInpainter

        inpainter = RemoteInpainter(
            engine_id=spec.get("engine_id", "remote-sd-inpaint"),
            engine_version=spec.get("engine_version", "unknown"),
            endpoint=spec.get("endpoint"),
            guidance_scale=float(spec.get("guidance_scale", 7.5)),
            working_size=int(spec.get("working_size", 512)),
            num_inference_steps=spec.get("num_inference_steps"),
            output_size=int(spec.get("output_size", 224)),
            cache=cache,
        )
        return inpainter  # remote handles its own caching
    else:
        raise BackendError(f"unknown inpainter kind {kind!r}")
    if cache is not None:
        return CachedInpainter(inpainter, cache)
    return inpainter


def build_generator(spec: dict, world: OracleWorld | None = None):
    kind = spec.get("kind")
    if kind == "oracle":
        return OracleGenerator(world or build_world(spec.get("world")),
                               fidelity=spec.get("fidelity", 1.0))
    raise BackendError(f"unknown generator kind {kind!r}")
