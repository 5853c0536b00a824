"""Contiguous-substring candidate enumeration, budgeted scoring, and selection.

Every candidate runs a light version of the morphing loop; its readability is
the negated feature-space loss against the pre-morph render and its semantic
score comes from the scorer's clip-score of the final render. Because those two
live on incommensurate scales, both are z-scored across the word's candidates
before the weighted combination (disable with standardize=False).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .bezier import WordLayout
from .optim import RunConfig, run
from .raster import render
from .scorer import ScorerRequest

DEFAULT_LAMBDA = 0.5
LIGHT_ITERATIONS = 100


@dataclass(frozen=True)
class RegionCandidate:
    """Letter range [start, end] (1-based, inclusive) with its scores.

    `readability_score` and `clip_score` hold the values actually combined into
    `composite` (z-scored unless standardization is off); `raw_*` keep the
    unstandardized measurements.
    """

    start: int
    end: int
    readability_score: float = math.nan
    clip_score: float = math.nan
    composite: float = math.nan
    raw_readability: float = math.nan
    raw_clip: float = math.nan

    def __post_init__(self):
        if not (1 <= self.start <= self.end):
            raise ValueError(f"invalid region {self.start}..{self.end}")

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def label(self) -> str:
        return f"{self.start}..{self.end}"


def enumerate_regions(n: int, max_len: int | None = None) -> list[RegionCandidate]:
    """All contiguous (i, j) candidates in lexicographic order."""
    if n < 1:
        raise ValueError("word must have at least one letter")
    out = []
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            if max_len is None or j - i + 1 <= max_len:
                out.append(RegionCandidate(i, j))
    return out


def score_region(
    word: WordLayout,
    candidate: RegionCandidate,
    prompt: str,
    scorer,
    light_iterations: int = LIGHT_ITERATIONS,
    config: RunConfig | None = None,
    extractor=None,
) -> RegionCandidate:
    """Run the budgeted morph for one candidate and measure it.

    Non-morphable regions come back with composite -inf and are skipped later.
    """
    from .features import BuiltinFilterBankExtractor, ocr_loss

    idxs = range(candidate.start - 1, candidate.end)
    if any(not word.glyphs[i].morphable for i in idxs):
        return dc_replace(
            candidate,
            readability_score=-math.inf,
            clip_score=-math.inf,
            composite=-math.inf,
            raw_readability=-math.inf,
            raw_clip=-math.inf,
        )
    if extractor is None:
        extractor = BuiltinFilterBankExtractor()
    if config is None:
        config = RunConfig()
    cfg = dc_replace(
        config,
        iterations=light_iterations,
        light=True,
        output_dir=None,
        trace_semantic_proxy=False,
        weights=None,  # default weights for this candidate's size
    )
    original = render(word, cfg.canvas)
    final_word, _ = run(
        word, (candidate.start, candidate.end), prompt, cfg, scorer, extractor=extractor
    )
    final = render(final_word, cfg.canvas)
    l_ocr, _ = ocr_loss(original, final, extractor)
    resp = scorer.score(
        ScorerRequest(
            kind="clip-score",
            image=final.to_guidance().astype(np.float32),
            prompt=prompt,
            seed=cfg.seed,
        )
    )
    return dc_replace(
        candidate,
        raw_readability=-l_ocr,
        raw_clip=float(resp.score),
        readability_score=-l_ocr,
        clip_score=float(resp.score),
        composite=math.nan,
    )


def finalize_scores(
    candidates: list[RegionCandidate],
    lam: float = DEFAULT_LAMBDA,
    standardize: bool = True,
) -> list[RegionCandidate]:
    """Fill composites: composite = lam * readability + (1 - lam) * clip.

    With standardization the stored scores are replaced by their z-scores
    across the word's finite candidates first, keeping the composite identity
    recomputable from the stored parts.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    finite = [c for c in candidates if math.isfinite(c.raw_readability)]
    if standardize and len(finite) >= 2:
        r = np.array([c.raw_readability for c in finite])
        s = np.array([c.raw_clip for c in finite])
        r_mu, r_sd = float(r.mean()), float(r.std())
        s_mu, s_sd = float(s.mean()), float(s.std())
        r_sd = r_sd if r_sd > 1e-12 else 1.0
        s_sd = s_sd if s_sd > 1e-12 else 1.0
    else:
        r_mu = s_mu = 0.0
        r_sd = s_sd = 1.0
    out = []
    for c in candidates:
        if not math.isfinite(c.raw_readability):
            out.append(dc_replace(c, composite=-math.inf))
            continue
        rs = (c.raw_readability - r_mu) / r_sd
        cs = (c.raw_clip - s_mu) / s_sd
        out.append(
            dc_replace(
                c,
                readability_score=rs,
                clip_score=cs,
                composite=lam * rs + (1.0 - lam) * cs,
            )
        )
    return out


def select_region(scored: list[RegionCandidate]) -> RegionCandidate:
    """Argmax composite; ties prefer shorter regions, then smaller start."""
    finite = [c for c in scored if math.isfinite(c.composite)]
    if not finite:
        raise ValueError("no finite-composite candidate (all non-morphable?)")
    return max(finite, key=lambda c: (c.composite, -c.length, -c.start))


def score_all_regions(
    word: WordLayout,
    prompt: str,
    scorer,
    lam: float = DEFAULT_LAMBDA,
    max_len: int | None = None,
    light_iterations: int = LIGHT_ITERATIONS,
    config: RunConfig | None = None,
    standardize: bool = True,
    extractor=None,
) -> list[RegionCandidate]:
    candidates = enumerate_regions(len(word.glyphs), max_len)
    scored = [
        score_region(word, c, prompt, scorer, light_iterations, config, extractor)
        for c in candidates
    ]
    return finalize_scores(scored, lam, standardize)


def report_tsv(candidates: list[RegionCandidate]) -> str:
    """Tab-separated per-word report."""
    lines = ["region\treadability\tclip\tcomposite\traw_readability\traw_clip"]
    for c in candidates:
        lines.append(
            f"{c.label()}\t{c.readability_score:.10g}\t{c.clip_score:.10g}"
            f"\t{c.composite:.10g}\t{c.raw_readability:.10g}\t{c.raw_clip:.10g}"
        )
    return "\n".join(lines) + "\n"
