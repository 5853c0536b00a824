"""Readability feature extraction.

The builtin extractor is a fixed bank of 12 oriented difference-of-Gaussian
filters (4 orientations x 3 scales) with stride-4 average pooling — a
deterministic, differentiable stand-in for a text-recognition encoder. The
remote extractor delegates to a scorer service.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sp_fft

from .raster import RasterImage

ORIENTATIONS = (0.0, 45.0, 90.0, 135.0)
SCALES = (1.0, 2.0, 4.0)
POOL = 4

_KERNEL_CACHE: list[np.ndarray] | None = None


def _dog_kernels() -> list[np.ndarray]:
    global _KERNEL_CACHE
    if _KERNEL_CACHE is not None:
        return _KERNEL_CACHE
    kernels = []
    for sigma in SCALES:
        r = int(np.ceil(3.0 * sigma + sigma))
        y, x = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
        for theta in ORIENTATIONS:
            th = np.deg2rad(theta)
            ox, oy = sigma * np.cos(th), sigma * np.sin(th)

            def gauss(cx, cy):
                g = np.exp(-(((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma**2)))
                return g / g.sum()

            kernels.append(gauss(ox, oy) - gauss(-ox, -oy))
    _KERNEL_CACHE = kernels
    return kernels


def lipschitz_bound() -> float:
    """L2 operator-norm bound of the feature map (Young + pooling contraction)."""
    ks = _dog_kernels()
    return float(np.sqrt(sum((np.abs(k).sum() / POOL) ** 2 for k in ks)))


class _FftBank:
    """Kernel FFTs precomputed for one image size (frequency-domain conv bank).

    All kernels are embedded centered in a common frame, so one image transform
    serves every filter and the 'same' crop offset is shared.
    """

    def __init__(self, height: int, width: int):
        ks = _dog_kernels()
        frame = max(k.shape[0] for k in ks)
        self.off = frame // 2
        self.h, self.w = height, width
        self.ph = sp_fft.next_fast_len(height + frame - 1)
        self.pw = sp_fft.next_fast_len(width + frame - 1)
        stack = np.zeros((len(ks), frame, frame))
        for i, k in enumerate(ks):
            r = k.shape[0] // 2
            c = frame // 2
            stack[i, c - r : c + r + 1, c - r : c + r + 1] = k
        self.khat = sp_fft.rfft2(stack, s=(self.ph, self.pw))

    def responses(self, px: np.ndarray) -> np.ndarray:
        """(n_filters, H, W) 'same'-mode correlations with the bank."""
        f = sp_fft.rfft2(px, s=(self.ph, self.pw))
        full = sp_fft.irfft2(f[None, :, :] * self.khat, s=(self.ph, self.pw))
        o = self.off
        return full[:, o : o + self.h, o : o + self.w]

    def adjoint(self, stack: np.ndarray) -> np.ndarray:
        """Adjoint of `responses` for a (n_filters, H, W) upstream: place at the
        crop offset, multiply by the conjugate spectra, sum, undo the pad."""
        padded = np.zeros((stack.shape[0], self.ph, self.pw))
        o = self.off
        padded[:, o : o + self.h, o : o + self.w] = stack
        g = sp_fft.rfft2(padded, s=(self.ph, self.pw))
        acc = np.einsum("khw,khw->hw", g, np.conj(self.khat))
        out = sp_fft.irfft2(acc, s=(self.ph, self.pw))
        return out[: self.h, : self.w]


_BANKS: dict[tuple[int, int], _FftBank] = {}


def _bank(height: int, width: int) -> _FftBank:
    key = (height, width)
    if key not in _BANKS:
        _BANKS[key] = _FftBank(height, width)
    return _BANKS[key]


class BuiltinFilterBankExtractor:
    """Deterministic oriented-DoG + pooled feature map over coverage images."""

    kind = "builtin-filterbank"

    def feature_dim(self, height: int, width: int) -> int:
        return len(_dog_kernels()) * (height // POOL) * (width // POOL)

    def features(self, image: RasterImage) -> np.ndarray:
        px = image.pixels
        h, w = px.shape
        h4, w4 = h // POOL, w // POOL
        resp = _bank(h, w).responses(px)
        pooled = resp[:, : h4 * POOL, : w4 * POOL].reshape(-1, h4, POOL, w4, POOL)
        return pooled.mean(axis=(2, 4)).ravel()

    def backproject(self, residual: np.ndarray, height: int, width: int) -> np.ndarray:
        """Adjoint of `features`: map a feature-space vector to pixel space."""
        nk = len(_dog_kernels())
        h4, w4 = height // POOL, width // POOL
        up = residual.reshape(nk, h4, w4)
        unpooled = np.zeros((nk, height, width), dtype=np.float64)
        unpooled[:, : h4 * POOL, : w4 * POOL] = (
            np.repeat(np.repeat(up, POOL, axis=1), POOL, axis=2) / (POOL * POOL)
        )
        return _bank(height, width).adjoint(unpooled)


class RemoteOcrExtractor:
    """Feature extraction through a scorer handle (kind=features requests).

    `feature_dim` is whatever the service declares; it is learned from the
    first response."""

    kind = "remote-ocr-encoder"

    def __init__(self, scorer):
        self.scorer = scorer
        self.feature_dim: int | None = None

    def features(self, image: RasterImage) -> np.ndarray:
        from .scorer import ScorerRequest

        resp = self.scorer.score(ScorerRequest(kind="features", image=image.to_guidance()))
        out = np.asarray(resp.features, dtype=np.float64)
        self.feature_dim = out.shape[0]
        return out

    def loss_and_gradient(self, original: RasterImage, current: RasterImage):
        from .scorer import ScorerRequest

        resp = self.scorer.score(
            ScorerRequest(
                kind="features",
                image=current.to_guidance(),
                reference=original.to_guidance(),
            )
        )
        f_cur = np.asarray(resp.features, dtype=np.float64)
        grad3 = np.asarray(resp.gradient, dtype=np.float64)
        # service gradient is w.r.t. the guidance image (1 - coverage, 3ch)
        grad = -grad3.sum(axis=2)
        f_orig = self.features(original)
        dim = f_cur.shape[0]
        loss = float(np.sum((f_orig - f_cur) ** 2) / dim)
        return loss, grad


def ocr_loss(original: RasterImage, current: RasterImage, extractor) -> tuple[float, np.ndarray]:
    """Mean squared feature distance and its gradient w.r.t. current pixels."""
    if (original.height, original.width) != (current.height, current.width):
        raise ValueError("image dimensions differ")
    if isinstance(extractor, RemoteOcrExtractor):
        return extractor.loss_and_gradient(original, current)
    f_o = extractor.features(original)
    f_c = extractor.features(current)
    dim = f_o.shape[0]
    loss = float(np.sum((f_o - f_c) ** 2) / dim)
    residual = (2.0 / dim) * (f_c - f_o)
    grad = extractor.backproject(residual, current.height, current.width)
    return loss, grad
