"""Deterministic model-free backends.

These stand in for the pretrained models so the service can run anywhere: the
semantic "prior" is a procedural image derived from the prompt text, the
feature encoder is a small fixed-weight convolutional stack, and the prompt
engine is a lookup with a deterministic fallback. Every response is a pure
function of (request, seed).
"""

from __future__ import annotations

import hashlib
import json
import re

import numpy as np
import torch
import torch.nn.functional as F

from .config import ServiceConfig

FONT_ATTRIBUTES = (
    "angular", "artistic", "attention-grabbing", "attractive", "bad", "boring",
    "calm", "capitals", "charming", "clumsy", "complex", "cursive", "delicate",
    "disorderly", "display", "dramatic", "formal", "fresh", "friendly", "gentle",
    "graceful", "happy", "italic", "legible", "modern", "monospace", "playful",
    "pretentious", "serif", "sharp", "sloppy", "soft", "strong", "technical",
    "thin", "warm", "wide",
)

_CONCEPT_TABLE = {
    "freedom": (("wings", "open book", "flying birds"), ("playful", "fresh", "modern")),
    "knowledge": (("open book", "lightbulb", "owl"), ("legible", "technical", "formal")),
    "egypt": (("Pyramids", "Ankh", "Sphinx"), ("formal", "strong", "warm")),
    "elegance": (("swan", "silk ribbon", "chandelier"), ("graceful", "delicate", "formal")),
}

_FALLBACK_NOUNS = (
    "sun", "leaf", "mountain", "river", "star", "key", "tower", "bridge",
    "flame", "cloud", "anchor", "arrow",
)


def _prompt_seed(prompt: str) -> int:
    return int.from_bytes(hashlib.sha256(prompt.encode("utf-8")).digest()[:4], "little")


def procedural_target(prompt: str, height: int, width: int) -> np.ndarray:
    """Smooth prompt-dependent image in [0, 1], (H, W, 3): the synthetic prior."""
    rng = np.random.default_rng(_prompt_seed(prompt))
    yy, xx = np.mgrid[0:height, 0:width]
    yy = yy / max(height - 1, 1)
    xx = xx / max(width - 1, 1)
    field = np.zeros((height, width))
    for _ in range(4):
        fx, fy = rng.uniform(1.0, 4.0, 2)
        phase = rng.uniform(0, 2 * np.pi)
        field += rng.uniform(0.5, 1.0) * np.cos(2 * np.pi * (fx * xx + fy * yy) + phase)
    img = 1.0 / (1.0 + np.exp(-2.5 * field))
    return np.repeat(img[:, :, None], 3, axis=2)


class _Encoder(torch.nn.Module):
    """Fixed-weight convolutional feature stack (encoder stand-in)."""

    def __init__(self):
        super().__init__()
        gen = torch.Generator().manual_seed(0xFEA7)
        self.conv1 = torch.nn.Conv2d(3, 8, 5, stride=2, padding=2, bias=False)
        self.conv2 = torch.nn.Conv2d(8, 8, 5, stride=2, padding=2, bias=False)
        with torch.no_grad():
            for conv in (self.conv1, self.conv2):
                w = torch.empty_like(conv.weight)
                w.normal_(0.0, 0.2, generator=gen)
                conv.weight.copy_(w)
        self.eval()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, size=(128, 128), mode="area")
        x = torch.tanh(self.conv1(x))
        x = torch.tanh(self.conv2(x))
        x = F.adaptive_avg_pool2d(x, (8, 8))
        return x.flatten(1)


class SyntheticBackends:
    """Every request kind, no model weights required."""

    name = "synthetic"

    def __init__(self, config: ServiceConfig):
        self.config = config
        self._encoder = _Encoder()

    # -- semantic gradient --------------------------------------------------

    def sds_grad(self, image: np.ndarray, prompt: str, seed: int) -> np.ndarray:
        p = self.config.sds
        rng = np.random.default_rng([seed & 0xFFFFFFFF, _prompt_seed(prompt)])
        t = int(rng.integers(p.t_min, p.t_max + 1))
        w = p.weight(t)
        h, wd, _ = image.shape
        target = procedural_target(prompt, h, wd)
        eps = rng.standard_normal(image.shape)
        residual = (image - target) + p.noise_level * eps
        return (w * residual / (h * wd)).astype(np.float32)

    # -- features -----------------------------------------------------------

    def _to_tensor(self, image: np.ndarray) -> torch.Tensor:
        return torch.from_numpy(
            np.ascontiguousarray(image, dtype=np.float32)
        ).permute(2, 0, 1).unsqueeze(0)

    def features(self, image: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            out = self._encoder(self._to_tensor(image))
        return out.squeeze(0).numpy().astype(np.float64)

    def features_gradient(self, image: np.ndarray, reference: np.ndarray):
        """Features of `image` plus d MSE(features(image), features(reference)) / d image."""
        x = self._to_tensor(image).requires_grad_(True)
        with torch.no_grad():
            f_ref = self._encoder(self._to_tensor(reference))
        f = self._encoder(x)
        loss = torch.mean((f - f_ref) ** 2)
        loss.backward()
        grad = x.grad.squeeze(0).permute(1, 2, 0).numpy().astype(np.float32)
        return f.detach().squeeze(0).numpy().astype(np.float64), grad

    # -- similarity ---------------------------------------------------------

    def clip_score(self, image: np.ndarray, prompt: str) -> float:
        target = procedural_target(prompt, image.shape[0], image.shape[1])
        nmse = float(np.mean((image - target) ** 2))
        return max(-1.0, min(1.0, 1.0 - nmse))

    # -- font embeddings ----------------------------------------------------

    def font_embed_image(self, image: np.ndarray) -> np.ndarray:
        feats = self.features(image)
        v = feats[:256]
        n = np.linalg.norm(v)
        return v / (n if n > 0 else 1.0)

    def font_embed_text(self, prompt: str) -> np.ndarray:
        rng = np.random.default_rng(_prompt_seed(prompt))
        v = rng.standard_normal(256)
        return v / np.linalg.norm(v)

    # -- prompt engine ------------------------------------------------------

    @staticmethod
    def _concept_from(prompt: str) -> str:
        hits = re.findall(r"Concept word: '([^']*)'", prompt or "")
        if hits:
            return hits[-1]
        hits = re.findall(r"Concept:\s*(.+)", prompt or "")
        if hits:
            return hits[-1].strip()
        return (prompt or "thing").strip().split()[-1] if (prompt or "").strip() else "thing"

    def concepts(self, prompt: str, seed: int) -> list[str]:
        concept = self._concept_from(prompt)
        hit = _CONCEPT_TABLE.get(concept.lower())
        if hit:
            objs = hit[0]
        else:
            rng = np.random.default_rng(_prompt_seed(concept))
            objs = tuple(rng.choice(_FALLBACK_NOUNS, size=3, replace=False))
        return [f"{objs[0]} or {objs[1]} or {objs[2]}."]

    def font_attrs(self, prompt: str, seed: int) -> list[str]:
        concept = self._concept_from(prompt)
        hit = _CONCEPT_TABLE.get(concept.lower())
        if hit:
            attrs = hit[1]
        else:
            rng = np.random.default_rng(_prompt_seed(concept) ^ 0xA77)
            attrs = tuple(rng.choice(FONT_ATTRIBUTES, size=3, replace=False))
        return [json.dumps(list(attrs))]
