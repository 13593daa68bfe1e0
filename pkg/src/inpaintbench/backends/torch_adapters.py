"""Adapters for torch classifiers and gradient-based attribution methods.

These are the "real run" backends; the rest of the pipeline treats them the
same as the synthetic doubles.  Import is optional: the module raises on use,
not on package import, when torch is absent.
"""

from __future__ import annotations

import numpy as np

from ..core import PIXEL, RelevanceMap

try:
    import torch
    import torch.nn.functional as F

    HAS_TORCH = True
except ImportError:  # pragma: no cover
    HAS_TORCH = False

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def _require_torch():
    if not HAS_TORCH:
        raise RuntimeError("torch is not installed; install inpaintbench[torch]")


class TorchClassifier:
    def __init__(self, model, class_names, id: str, input_size: int = 224,
                 mean=IMAGENET_MEAN, std=IMAGENET_STD, device: str = "cpu"):
        _require_torch()
        self.model = model.to(device).eval()
        self.class_names = list(class_names)
        self.id = id
        self.input_size = input_size
        self.device = device
        self._mean = torch.tensor(mean, device=device).view(1, 3, 1, 1)
        self._std = torch.tensor(std, device=device).view(1, 3, 1, 1)

    def to_tensor(self, image: np.ndarray, requires_grad: bool = False):
        x = torch.from_numpy(np.asarray(image, dtype=np.float32) / 255.0)
        x = x.permute(2, 0, 1).unsqueeze(0).to(self.device)
        x = (x - self._mean) / self._std
        if requires_grad:
            x.requires_grad_(True)
        return x

    def logits(self, x):
        return self.model(x)

    def classify(self, image: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            probs = torch.softmax(self.logits(self.to_tensor(image)), dim=1)
        return probs[0].cpu().numpy().astype(np.float64)


def _pixel_map(grad: "torch.Tensor", target: int, source: str) -> RelevanceMap:
    vals = grad.abs().sum(dim=1)[0].detach().cpu().numpy()
    return RelevanceMap(vals, PIXEL, target_class=int(target), source=source)


class GradientSaliency:
    class_specific = True

    def __init__(self, id: str = "saliency"):
        _require_torch()
        self.id = id

    def explain(self, classifier: TorchClassifier, image, target_class=None) -> RelevanceMap:
        x = classifier.to_tensor(image, requires_grad=True)
        logits = classifier.logits(x)
        t = int(target_class) if target_class is not None else int(logits.argmax())
        logits[0, t].backward()
        return _pixel_map(x.grad, t, self.id)


class InputXGradient:
    class_specific = True

    def __init__(self, id: str = "input_x_grad"):
        _require_torch()
        self.id = id

    def explain(self, classifier: TorchClassifier, image, target_class=None) -> RelevanceMap:
        x = classifier.to_tensor(image, requires_grad=True)
        logits = classifier.logits(x)
        t = int(target_class) if target_class is not None else int(logits.argmax())
        logits[0, t].backward()
        return _pixel_map(x.grad * x, t, self.id)


class IntegratedGradients:
    class_specific = True

    def __init__(self, n_steps: int = 32, id: str = "integrated_gradients"):
        _require_torch()
        self.n_steps = n_steps
        self.id = id

    def explain(self, classifier: TorchClassifier, image, target_class=None) -> RelevanceMap:
        x = classifier.to_tensor(image)
        with torch.no_grad():
            t = int(target_class) if target_class is not None else int(classifier.logits(x).argmax())
        total = torch.zeros_like(x)
        for i in range(self.n_steps):
            alpha = (i + 0.5) / self.n_steps
            xi = (alpha * x).clone().requires_grad_(True)
            classifier.logits(xi)[0, t].backward()
            total += xi.grad
        return _pixel_map(total * x / self.n_steps, t, self.id)


class SmoothGrad:
    class_specific = True

    def __init__(self, n_samples: int = 16, noise_std: float = 0.15,
                 seed: int = 0, id: str = "smoothgrad"):
        _require_torch()
        self.n_samples = n_samples
        self.noise_std = noise_std
        self.seed = seed
        self.id = id

    def explain(self, classifier: TorchClassifier, image, target_class=None) -> RelevanceMap:
        x = classifier.to_tensor(image)
        with torch.no_grad():
            t = int(target_class) if target_class is not None else int(classifier.logits(x).argmax())
        gen = torch.Generator(device="cpu").manual_seed(self.seed)
        total = torch.zeros_like(x)
        for _ in range(self.n_samples):
            noise = torch.randn(x.shape, generator=gen) * self.noise_std
            xi = (x + noise.to(x.device)).clone().requires_grad_(True)
            classifier.logits(xi)[0, t].backward()
            total += xi.grad
        return _pixel_map(total / self.n_samples, t, self.id)
