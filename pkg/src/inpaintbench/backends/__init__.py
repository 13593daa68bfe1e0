from .base import (
    AttributorBackend,
    BackendError,
    ClassifierBackend,
    GeneratorBackend,
    InpainterBackend,
)
from .cache import CachedInpainter, InpaintCache, inpaint_key
from .oracle import (
    OracleClassifier,
    OracleGenerator,
    OracleInpainter,
    OracleWorld,
    RandomAttributor,
    ScriptedGenerator,
    TemplateAttributor,
    stable_seed,
)

__all__ = [
    "AttributorBackend",
    "BackendError",
    "CachedInpainter",
    "ClassifierBackend",
    "GeneratorBackend",
    "InpaintCache",
    "InpainterBackend",
    "OracleClassifier",
    "OracleGenerator",
    "OracleInpainter",
    "OracleWorld",
    "RandomAttributor",
    "ScriptedGenerator",
    "TemplateAttributor",
    "inpaint_key",
    "stable_seed",
]
