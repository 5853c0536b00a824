"""Composition of the three loss terms into one gradient on region control points.

The semantic branch chains the scorer's pixel gradient through augmentation and
rasterization; the readability branch chains feature-space MSE through
rasterization; the deformation branch acts on control points directly. Letters
outside the morph region receive exactly zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bezier import WordLayout, gather_points
from .features import ocr_loss
from .raster import AugmentationSpec, RasterImage, augment, augment_backward, render_gradient, _RenderCache
from .scorer import ScorerRequest
from .triangulate import TriangulationAngles, acap_loss


@dataclass
class LossWeights:
    """Multipliers for the semantic / readability / deformation terms."""

    sds_weight: float = 1.0
    ocr_weight: float = 0.5
    acap_weight: float = 0.5

    def __post_init__(self):
        if min(self.sds_weight, self.ocr_weight, self.acap_weight) < 0:
            raise ValueError("loss weights must be non-negative")

    @classmethod
    def defaults_for(cls, region_letters: int) -> "LossWeights":
        """Readability weight scales with the number of morphed letters."""
        return cls(sds_weight=1.0, ocr_weight=0.5 * region_letters, acap_weight=0.5)


def region_glyph_indices(word: WordLayout, start: int, end: int) -> list[int]:
    """Glyph list indices covered by the 1-based inclusive letter range."""
    n = len(word.glyphs)
    if not (1 <= start <= end <= n):
        raise ValueError(f"region {start}..{end} invalid for {n} letters")
    return list(range(start - 1, end))


def total_gradient(
    word: WordLayout,
    region: tuple[int, int],
    weights: LossWeights,
    scorer,
    reference: TriangulationAngles,
    original_render: RasterImage,
    augmentation: AugmentationSpec,
    prompt: str,
    extractor,
    render_cache: _RenderCache | None = None,
    original_features: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Gradient of the weighted loss w.r.t. the region's control points.

    Returns the (N, 2) gradient over the flattened region points plus scalar
    diagnostics per term. Scorer failures propagate as ScorerError.
    `render_cache` / `original_features` are optimization hooks for callers that
    already rendered the current word or extracted the pre-morph features.
    """
    start, end = region
    idxs = region_glyph_indices(word, start, end)
    size = original_render.width
    cache = render_cache if render_cache is not None else _RenderCache(word, size)
    img = cache.image()
    if (img.height, img.width) != (original_render.height, original_render.width):
        raise ValueError("original render size differs from current render")

    diagnostics: dict = {}
    pixel_upstream = np.zeros((size, size), dtype=np.float64)

    if weights.sds_weight > 0.0:
        aug = augment(img, augmentation)
        guidance = aug.to_guidance().astype(np.float32)
        resp = scorer.score(
            ScorerRequest(
                kind="sds-grad", image=guidance, prompt=prompt, seed=augmentation.seed
            )
        )
        g3 = np.asarray(resp.gradient, dtype=np.float64)
        if g3.shape != guidance.shape:
            raise ValueError(f"scorer gradient shape {g3.shape} != image {guidance.shape}")
        d_aug_coverage = -g3.sum(axis=2)  # guidance = 1 - coverage
        d_render = augment_backward(augmentation, d_aug_coverage, size)
        pixel_upstream += weights.sds_weight * d_render
        diagnostics["sds_pixel_grad_norm"] = float(np.linalg.norm(d_render))

    # Readability value is always recorded (the trace needs it even at weight 0,
    # e.g. for ablation comparisons); the gradient only flows when weighted.
    if weights.ocr_weight > 0.0 and original_features is None:
        l_ocr, d_ocr = ocr_loss(original_render, img, extractor)
        pixel_upstream += weights.ocr_weight * d_ocr
    else:
        f_o = (
            original_features
            if original_features is not None
            else extractor.features(original_render)
        )
        f_c = extractor.features(img)
        dim = f_o.shape[0]
        l_ocr = float(np.sum((f_o - f_c) ** 2) / dim)
        if weights.ocr_weight > 0.0:
            residual = (2.0 / dim) * (f_c - f_o)
            d_ocr = extractor.backproject(residual, img.height, img.width)
            pixel_upstream += weights.ocr_weight * d_ocr
    diagnostics["l_ocr"] = l_ocr

    if np.any(pixel_upstream):
        grads_per_glyph = cache.gradient(pixel_upstream)
        region_grad = (
            np.concatenate([grads_per_glyph[i] for i in idxs])
            if idxs
            else np.zeros((0, 2))
        )
    else:
        region_grad = np.zeros((gather_points(word, idxs).shape[0], 2))

    pts = gather_points(word, idxs)
    acap_diag: dict = {}
    l_acap, g_acap = acap_loss(reference, pts, diagnostics=acap_diag)
    if weights.acap_weight > 0.0:
        region_grad = region_grad + weights.acap_weight * g_acap
    diagnostics["l_acap"] = l_acap
    diagnostics["degenerate_angles"] = acap_diag.get("degenerate_angles", 0)

    diagnostics["grad_norm"] = float(np.linalg.norm(region_grad))
    return region_grad, diagnostics


def render_region_gradient(
    word: WordLayout, size: int, upstream: np.ndarray, glyph_indices: list[int]
) -> np.ndarray:
    """Pixel-upstream gradient restricted to the region's flattened points."""
    grads = render_gradient(word, size, upstream)
    if not glyph_indices:
        return np.zeros((0, 2))
    return np.concatenate([grads[i] for i in glyph_indices])
