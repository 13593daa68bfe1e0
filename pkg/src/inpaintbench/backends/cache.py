"""Content-addressed on-disk cache for inpainting results.

Inpainting dominates run cost, so results are keyed by the full request
content (image bytes, mask bytes, prompt, seed, engine id and version) and
persisted as a hash-named PNG plus a JSON sidecar.  Writes go through a
temp-file rename, so concurrent writers of the same key are idempotent.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image


def image_to_png(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def image_from_png(data: bytes) -> np.ndarray:
    return np.array(Image.open(io.BytesIO(data)).convert("RGB"), dtype=np.uint8)


def inpaint_key(image: np.ndarray, keep_mask: np.ndarray, prompt: str, seed: int,
                engine_id: str, engine_version: str) -> str:
    """Pure function of the request content."""
    h = hashlib.sha256()
    img = np.ascontiguousarray(np.asarray(image, dtype=np.uint8))
    mask = np.ascontiguousarray(np.asarray(keep_mask, dtype=bool))
    h.update(str(img.shape).encode())
    h.update(img.tobytes())
    h.update(str(mask.shape).encode())
    h.update(mask.tobytes())
    h.update(prompt.encode())
    h.update(str(int(seed)).encode())
    h.update(engine_id.encode())
    h.update(engine_version.encode())
    return h.hexdigest()


class InpaintCache:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _png_path(self, key: str) -> Path:
        return self.root / f"{key}.png"

    def get(self, key: str) -> np.ndarray | None:
        path = self._png_path(key)
        if not path.exists():
            return None
        return image_from_png(path.read_bytes())

    def put(self, key: str, image: np.ndarray, metadata: dict | None = None) -> None:
        self._atomic_write(self._png_path(key), image_to_png(image))
        if metadata is not None:
            payload = json.dumps(metadata, sort_keys=True).encode()
            self._atomic_write(self.root / f"{key}.json", payload)

    def _atomic_write(self, path: Path, data: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def __contains__(self, key: str) -> bool:
        return self._png_path(key).exists()


class CachedInpainter:
    """Wraps any inpainter with the content-addressed cache."""

    def __init__(self, inner, cache: InpaintCache):
        self.inner = inner
        self.cache = cache
        self.id = inner.id
        self.version = inner.version

    def key(self, image, keep_mask, prompt, seed) -> str:
        return inpaint_key(image, keep_mask, prompt, seed, self.id, self.version)

    def inpaint(self, image, keep_mask, prompt, seed):
        key = self.key(image, keep_mask, prompt, seed)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        result = self.inner.inpaint(image, keep_mask, prompt, seed)
        self.cache.put(key, result, metadata={
            "engine_id": self.id,
            "engine_version": self.version,
            "prompt": prompt,
            "seed": int(seed),
        })
        return result
