"""HTTP client for a remote diffusion-inpainting service.

The request scales the image and keep-mask up to the engine's working size,
posts them with the prompt, seed and guidance scale, and scales the result
back to the pipeline's image size.  Results are persisted to the
content-addressed cache before they are returned, so repeated runs never
repeat a network call.
"""

from __future__ import annotations

import base64
import os
import time

import numpy as np
from PIL import Image

from .base import BackendError, check_image
from .cache import InpaintCache, image_from_png, image_to_png, inpaint_key

ENDPOINT_ENV = "INPAINTBENCH_ENDPOINT"
API_KEY_ENV = "INPAINTBENCH_API_KEY"


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    return np.array(
        Image.fromarray(np.asarray(image, dtype=np.uint8)).resize((size, size), Image.BILINEAR)
    )


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    img = Image.fromarray(np.asarray(mask, dtype=np.uint8) * 255)
    return np.array(img.resize((size, size), Image.NEAREST)) > 127


class RemoteInpainter:
    """Client for an HTTP inpainting endpoint.

    ``post`` is injectable for testing; it defaults to requests.post.  The
    endpoint URL and credentials come from the environment unless given.
    """

    def __init__(self, engine_id: str = "remote-sd-inpaint", engine_version: str = "unknown",
                 endpoint: str | None = None, api_key: str | None = None,
                 guidance_scale: float = 7.5, working_size: int = 512,
                 num_inference_steps: int | None = None, output_size: int = 224,
                 max_retries: int = 3, backoff: float = 1.0, timeout: float = 120.0,
                 cache: InpaintCache | None = None, post=None):
        self.id = engine_id
        self.version = engine_version
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.guidance_scale = guidance_scale
        self.working_size = working_size
        self.num_inference_steps = num_inference_steps
        self.output_size = output_size
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self.cache = cache
        if post is None:
            import requests

            post = requests.post
        self._post = post
        if not self.endpoint:
            raise BackendError(
                f"no inpainting endpoint configured (set {ENDPOINT_ENV} or pass endpoint=)"
            )

    def key(self, image, keep_mask, prompt, seed) -> str:
        return inpaint_key(image, keep_mask, prompt, seed, self.id, self.version)

    def inpaint(self, image: np.ndarray, keep_mask: np.ndarray, prompt: str, seed: int) -> np.ndarray:
        img = check_image(image)
        keep = np.asarray(keep_mask, dtype=bool)
        if keep.shape != img.shape[:2]:
            raise BackendError(f"mask shape {keep.shape} does not match image {img.shape[:2]}")

        key = self.key(img, keep, prompt, seed)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit

        up_img = resize_image(img, self.working_size)
        up_keep = resize_mask(keep, self.working_size)
        # engines expect the mask to flag the region to REWRITE
        inpaint_region = ~up_keep
        payload = {
            "image": base64.b64encode(image_to_png(up_img)).decode(),
            "mask": base64.b64encode(image_to_png(
                (inpaint_region.astype(np.uint8) * 255)[..., None].repeat(3, axis=2)
            )).decode(),
            "prompt": prompt,
            "seed": int(seed),
            "guidance_scale": self.guidance_scale,
        }
        if self.num_inference_steps is not None:
            payload["num_inference_steps"] = self.num_inference_steps
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        result512 = self._submit(payload, headers)
        if result512.shape[:2] != (self.working_size, self.working_size):
            raise BackendError(
                f"engine returned size {result512.shape[:2]}, expected {self.working_size}"
            )
        result = resize_image(result512, self.output_size)
        if self.cache is not None:
            self.cache.put(key, result, metadata={
                "engine_id": self.id,
                "engine_version": self.version,
                "prompt": prompt,
                "seed": int(seed),
                "guidance_scale": self.guidance_scale,
            })
        return result

    def _submit(self, payload: dict, headers: dict) -> np.ndarray:
        last_exc = None
        for attempt in range(self.max_retries):
            try:
                resp = self._post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
                if getattr(resp, "status_code", 200) >= 500:
                    raise ConnectionError(f"server error {resp.status_code}")
                if getattr(resp, "status_code", 200) >= 400:
                    raise BackendError(f"engine rejected request: {resp.status_code} {resp.text}")
                data = resp.json()
                return image_from_png(base64.b64decode(data["image"]))
            except BackendError:
                raise
            except Exception as exc:  # transport failures retry with backoff
                last_exc = exc
                if attempt < self.max_retries - 1:
                    time.sleep(self.backoff * (2 ** attempt))
        raise BackendError(f"inpainting request failed after {self.max_retries} attempts: {last_exc}")
