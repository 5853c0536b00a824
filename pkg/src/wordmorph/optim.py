"""The morphing loop: render, score, backpropagate, update region control points.

Adam with (beta1, beta2) = (0.9, 0.9), linear learning-rate warmup and cosine
decay. Only the region's control points move. Runs are deterministic given the
seed and a deterministic scorer; per-iteration augmentation seeds are derived
statelessly from (seed, iteration) so checkpoint resume replays exactly. Live
state is quantized to float32 at every checkpoint instant — the checkpoint file
stores float32, and quantizing both paths is what makes resumed and
uninterrupted runs bit-identical.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bezier import (
    WordLayout,
    contour_edges,
    default_point_budget,
    gather_points,
    scatter_points,
    subdivide_to_budget,
)
from .losses import LossWeights, region_glyph_indices, total_gradient
from .raster import AugmentationSpec, RasterImage, _RenderCache, render
from .scorer import ScorerError, ScorerProtocolError, ScorerRequest
from .triangulate import triangulate

CKPT_MAGIC = b"CKPT1\n"


@dataclass
class RunConfig:
    iterations: int = 500
    light: bool = False
    base_lr: float = 1.0  # canvas units per step at peak
    warmup_steps: int = 50
    lr_floor: float = 0.1  # cosine decays to lr_floor * base_lr
    seed: int = 0
    weights: LossWeights | None = None  # None: defaults for the region size
    canvas: int = 600  # render size in pixels
    output_dir: str | None = None
    checkpoint_interval: int = 50
    augment_jitter: float = 0.05
    augment_crop: float = 0.85
    augment_enabled: bool = True
    subdivide: bool = True
    point_budget: int | None = None  # None: per-glyph default policy
    trace_semantic_proxy: bool = True
    betas: tuple[float, float] = (0.9, 0.9)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")

    def lr_at(self, t: int) -> float:
        if self.warmup_steps > 0 and t < self.warmup_steps:
            return self.base_lr * (t + 1) / self.warmup_steps
        floor = self.lr_floor * self.base_lr
        span = max(self.iterations - self.warmup_steps, 1)
        progress = min((t - self.warmup_steps) / span, 1.0)
        return floor + 0.5 * (self.base_lr - floor) * (1.0 + math.cos(math.pi * progress))


@dataclass
class TraceRow:
    iteration: int
    l_sds_proxy: float
    l_ocr: float
    l_acap: float
    total: float
    grad_norm: float


@dataclass
class RunTrace:
    header: dict
    rows: list[TraceRow] = field(default_factory=list)

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.rows])

    def save_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key, value in self.header.items():
                fh.write(f"# {key}\t{value}\n")
            fh.write("iteration\tl_sds_proxy\tl_ocr\tl_acap\ttotal\tgrad_norm\n")
            for r in self.rows:
                fh.write(
                    f"{r.iteration}\t{r.l_sds_proxy:.10g}\t{r.l_ocr:.10g}"
                    f"\t{r.l_acap:.10g}\t{r.total:.10g}\t{r.grad_norm:.10g}\n"
                )

    @classmethod
    def load_tsv(cls, path: str | Path) -> "RunTrace":
        header: dict = {}
        rows: list[TraceRow] = []
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        body_started = False
        for line in lines:
            if line.startswith("# "):
                key, _, value = line[2:].partition("\t")
                header[key] = value
                continue
            if not body_started:
                body_started = True  # column header line
                continue
            parts = line.split("\t")
            rows.append(
                TraceRow(
                    int(parts[0]), float(parts[1]), float(parts[2]),
                    float(parts[3]), float(parts[4]), float(parts[5]),
                )
            )
        return cls(header, rows)


class OptimizationAborted(RuntimeError):
    """Raised when a run cannot continue; carries the partial trace."""

    def __init__(self, message: str, trace: RunTrace, checkpoint: str | None = None):
        super().__init__(message)
        self.trace = trace
        self.checkpoint = checkpoint


def derive_seed(seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, iteration]).generate_state(1)[0])


def save_checkpoint(path: str | Path, iteration: int, pts, m, v) -> None:
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", iteration, pts.shape[0]))
        for arr in (pts, m, v):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path):
    with open(path, "rb") as fh:
        if fh.read(len(CKPT_MAGIC)) != CKPT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic")
        iteration, n = struct.unpack("<II", fh.read(8))
        arrs = []
        for _ in range(3):
            arrs.append(
                np.frombuffer(fh.read(n * 2 * 4), dtype="<f4").astype(np.float64).reshape(n, 2)
            )
    return iteration, arrs[0], arrs[1], arrs[2]


def prepare_word(word: WordLayout, region: tuple[int, int], config: RunConfig):
    """Subdivide the region glyphs to the control-point budget (iteration-0 state)."""
    start, end = region
    idxs = region_glyph_indices(word, start, end)
    for gi in idxs:
        if not word.glyphs[gi].morphable:
            raise ValueError(
                f"letter {gi + 1} ({word.glyphs[gi].char!r}) is not morphable"
            )
    if not config.subdivide:
        return word.copy(), idxs
    replaced = {}
    for gi in idxs:
        g = word.glyphs[gi]
        target = config.point_budget or default_point_budget(g)
        target = max(target, g.point_count)
        replaced[gi] = subdivide_to_budget(g, target)
    return word.replace_glyphs(replaced), idxs


def run(
    word: WordLayout,
    region: tuple[int, int],
    prompt: str,
    config: RunConfig,
    scorer,
    extractor=None,
    resume_from: str | None = None,
) -> tuple[WordLayout, RunTrace]:
    """Morph the region toward the prompt under the configured weights."""
    from .features import BuiltinFilterBankExtractor

    if extractor is None:
        extractor = BuiltinFilterBankExtractor()
    start, end = region
    weights = config.weights or LossWeights.defaults_for(end - start + 1)

    current, idxs = prepare_word(word, region, config)
    pts0 = gather_points(current, idxs)
    reference = triangulate(pts0, contour_edges(current, idxs))
    # the reference may have jittered duplicate points; adopt its positions
    pts = reference.points.copy()
    current = scatter_points(current, idxs, pts)
    original_render = render(current, config.canvas)

    trace = RunTrace(
        header={
            "word": word.text,
            "region": f"{start}..{end}",
            "prompt": prompt,
            "iterations": config.iterations,
            "seed": config.seed,
            "canvas": config.canvas,
            "sds_weight": weights.sds_weight,
            "ocr_weight": weights.ocr_weight,
            "acap_weight": weights.acap_weight,
            "base_lr": config.base_lr,
        }
    )

    m = np.zeros_like(pts)
    v = np.zeros_like(pts)
    t0 = 0
    if resume_from is not None:
        t0, pts, m, v = load_checkpoint(resume_from)
        if pts.shape != pts0.shape:
            raise ValueError(
                f"checkpoint has {pts.shape[0]} points, run expects {pts0.shape[0]}"
            )
        current = scatter_points(current, idxs, pts)

    out_dir = Path(config.output_dir) if config.output_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = str(out_dir / "checkpoint.ckpt") if out_dir else None

    def checkpoint(iteration: int):
        nonlocal pts, m, v, current
        # quantize live state so resume replays bit-identically
        pts = pts.astype(np.float32).astype(np.float64)
        m = m.astype(np.float32).astype(np.float64)
        v = v.astype(np.float32).astype(np.float64)
        current = scatter_points(current, idxs, pts)
        if ckpt_path:
            save_checkpoint(ckpt_path, iteration, pts, m, v)

    # pre-morph features never change; cache them for the builtin extractor
    f_orig = (
        extractor.features(original_render) if hasattr(extractor, "backproject") else None
    )

    b1, b2 = config.betas
    for t in range(t0, config.iterations):
        aug = AugmentationSpec(
            seed=derive_seed(config.seed, t),
            perspective_jitter=config.augment_jitter if config.augment_enabled else 0.0,
            crop_fraction=config.augment_crop if config.augment_enabled else 1.0,
        )
        try:
            cache = _RenderCache(current, config.canvas)
            grad, diag = total_gradient(
                current, region, weights, scorer, reference, original_render,
                aug, prompt, extractor,
                render_cache=cache, original_features=f_orig,
            )
            proxy = _semantic_proxy(cache.image(), prompt, config, scorer) if (
                config.trace_semantic_proxy and weights.sds_weight > 0.0
            ) else 0.0
        except ScorerError as exc:
            if ckpt_path:
                save_checkpoint(ckpt_path, t, pts, m, v)
            if out_dir:
                trace.save_tsv(out_dir / "trace.partial.tsv")
            raise OptimizationAborted(
                f"scorer failure at iteration {t}: {exc}", trace, ckpt_path
            ) from exc
        if not np.all(np.isfinite(grad)):
            if ckpt_path:
                save_checkpoint(ckpt_path, t, pts, m, v)
            if out_dir:
                trace.save_tsv(out_dir / "trace.partial.tsv")
            raise OptimizationAborted(
                f"non-finite gradient at iteration {t} "
                f"(|l_ocr|={diag.get('l_ocr')}, |l_acap|={diag.get('l_acap')})",
                trace, ckpt_path,
            )

        total = (
            weights.sds_weight * proxy
            + weights.ocr_weight * diag["l_ocr"]
            + weights.acap_weight * diag["l_acap"]
        )
        trace.rows.append(
            TraceRow(t, proxy, diag["l_ocr"], diag["l_acap"], total, diag["grad_norm"])
        )

        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        mhat = m / (1.0 - b1 ** (t + 1))
        vhat = v / (1.0 - b2 ** (t + 1))
        pts = pts - config.lr_at(t) * mhat / (np.sqrt(vhat) + config.adam_eps)
        current = scatter_points(current, idxs, pts)

        done = t + 1
        if config.checkpoint_interval > 0 and done % config.checkpoint_interval == 0:
            checkpoint(done)
    if config.checkpoint_interval > 0 and config.iterations % config.checkpoint_interval != 0:
        checkpoint(config.iterations)

    if out_dir:
        trace.save_tsv(out_dir / "trace.tsv")
    return current, trace


def _semantic_proxy(img: RasterImage, prompt: str, config: RunConfig, scorer) -> float:
    """1 - clip_score of the canonical render; 0 when the scorer lacks clip-score."""
    try:
        resp = scorer.score(
            ScorerRequest(
                kind="clip-score",
                image=img.to_guidance().astype(np.float32),
                prompt=prompt,
                seed=config.seed,
            )
        )
    except ScorerProtocolError:
        return 0.0
    return 1.0 - float(resp.score)
