"""Vector-glyph word morphing with readability and shape-regularity constraints."""

from .bezier import (
    BezierSegment,
    GlyphPath,
    Script,
    WordLayout,
    default_point_budget,
    subdivide_to_budget,
)
from .features import BuiltinFilterBankExtractor, RemoteOcrExtractor, ocr_loss
from .fonts import FontError, ShapingMode, load_glyph_outlines
from .losses import LossWeights, total_gradient
from .optim import OptimizationAborted, RunConfig, RunTrace, run
from .prompts import ConceptExpansion, build_prompts, expand_concept
from .raster import AugmentationSpec, RasterImage, augment, render, render_gradient
from .regions import (
    RegionCandidate,
    enumerate_regions,
    score_region,
    select_region,
)
from .scorer import (
    BuiltinScorer,
    HttpScorer,
    MockSdsScorer,
    ScorerError,
    ScorerMalformedError,
    ScorerProtocolError,
    ScorerRequest,
    ScorerResponse,
    ScorerTransportError,
)
from .svgio import export_svg, load_svg
from .triangulate import TriangulationAngles, TriangulationError, acap_loss, triangulate

__version__ = "0.1.0"

__all__ = [
    "AugmentationSpec",
    "BezierSegment",
    "BuiltinFilterBankExtractor",
    "BuiltinScorer",
    "ConceptExpansion",
    "FontError",
    "GlyphPath",
    "HttpScorer",
    "LossWeights",
    "MockSdsScorer",
    "OptimizationAborted",
    "RasterImage",
    "RegionCandidate",
    "RemoteOcrExtractor",
    "RunConfig",
    "RunTrace",
    "ScorerError",
    "ScorerMalformedError",
    "ScorerProtocolError",
    "ScorerRequest",
    "ScorerResponse",
    "ScorerTransportError",
    "ShapingMode",
    "Script",
    "TriangulationAngles",
    "TriangulationError",
    "WordLayout",
    "acap_loss",
    "augment",
    "build_prompts",
    "default_point_budget",
    "enumerate_regions",
    "expand_concept",
    "export_svg",
    "load_glyph_outlines",
    "load_svg",
    "ocr_loss",
    "render",
    "render_gradient",
    "run",
    "score_region",
    "select_region",
    "subdivide_to_budget",
    "total_gradient",
    "triangulate",
]
