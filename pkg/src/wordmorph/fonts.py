"""Font loading: TrueType/OpenType outlines to placed cubic-Bezier word layouts.

Quadratic (glyf) outlines are degree-elevated to cubics exactly, so TrueType
fonts are supported losslessly. Shaping is deliberately minimal: `simple` mode
places isolated per-codepoint forms; `preshaped-ids` mode takes glyph names or
numeric glyph ids produced by an external shaping engine.
"""

from __future__ import annotations

import enum

import numpy as np
from fontTools.pens.basePen import BasePen
from fontTools.ttLib import TTFont, TTLibError

from .bezier import (
    CANVAS_UNITS,
    GlyphPath,
    Script,
    WordLayout,
    elevate_quadratic,
    line_as_cubic,
)

# Fraction of the canvas the placed word may span.
FIT_FRACTION = 0.9

_RTL_RANGES = ((0x0590, 0x08FF), (0xFB1D, 0xFDFF), (0xFE70, 0xFEFF))


class ShapingMode(enum.Enum):
    SIMPLE = "simple"
    PRESHAPED_IDS = "preshaped-ids"


class FontError(Exception):
    """Unreadable font file or missing glyph."""


class _CubicPen(BasePen):
    """Collects glyph outlines as packed cubic contours (font units, y-up).

    BasePen decomposes multi-off-curve qCurveTo commands into single-control
    quadratics before calling _qCurveToOne, so TrueType splines arrive one
    quadratic at a time.
    """

    def __init__(self, glyph_set):
        super().__init__(glyph_set)
        self.contours: list[np.ndarray] = []
        self._pts: list[np.ndarray] | None = None
        self._start: np.ndarray | None = None

    def _moveTo(self, pt):
        self._start = np.asarray(pt, dtype=np.float64)
        self._pts = [self._start]

    def _lineTo(self, pt):
        cubic = line_as_cubic(self._pts[-1], pt)
        self._pts.extend(cubic[1:])

    def _curveToOne(self, p1, p2, p3):
        self._pts.extend(
            np.asarray(p, dtype=np.float64) for p in (p1, p2, p3)
        )

    def _qCurveToOne(self, p1, p2):
        cubic = elevate_quadratic(self._pts[-1], p1, p2)
        self._pts.extend(cubic[1:])

    def _closePath(self):
        pts = self._pts
        self._pts = None
        if pts is None or len(pts) == 1:
            return  # degenerate contour (lone moveTo)
        if not np.allclose(pts[-1], self._start, atol=1e-9):
            pts.extend(line_as_cubic(pts[-1], self._start)[1:])
        # drop the trailing copy of the start anchor: closure is structural
        packed = np.asarray(pts[:-1], dtype=np.float64)
        if packed.shape[0] >= 3:
            self.contours.append(packed)

    def _endPath(self):
        self._closePath()


def _glyph_names(font: TTFont, text: str, mode: ShapingMode) -> list[tuple[str, str]]:
    """Resolve text to [(glyph_name, display_char)] per the shaping mode."""
    if mode is ShapingMode.SIMPLE:
        cmap = font.getBestCmap()
        out = []
        for ch in text:
            name = cmap.get(ord(ch))
            if name is None:
                raise FontError(f"glyph missing for codepoint U+{ord(ch):04X} ({ch!r})")
            out.append((name, ch))
        return out
    # preshaped-ids: whitespace/comma separated glyph names or numeric gids
    order = font.getGlyphOrder()
    tokens = [t for t in text.replace(",", " ").split() if t]
    if not tokens:
        raise FontError("empty preshaped glyph id list")
    out = []
    for tok in tokens:
        if tok.isdigit():
            gid = int(tok)
            if gid >= len(order):
                raise FontError(f"glyph id {gid} out of range (font has {len(order)})")
            out.append((order[gid], tok))
        else:
            if tok not in set(order):
                raise FontError(f"glyph name {tok!r} not in font")
            out.append((tok, tok))
    return out


def _detect_script(text: str) -> Script:
    for ch in text:
        cp = ord(ch)
        if any(lo <= cp <= hi for lo, hi in _RTL_RANGES):
            return Script.RIGHT_TO_LEFT
    return Script.LEFT_TO_RIGHT


def load_glyph_outlines(
    font_file: str,
    text: str,
    shaping_mode: ShapingMode | str = ShapingMode.SIMPLE,
) -> WordLayout:
    """Load, scale, and place the outlines of `text` on the canvas.

    The word is scaled so it spans at most ``FIT_FRACTION`` of the canvas
    width (and fits vertically), centered, baseline mid-canvas. Zero-area
    glyphs (spaces) come back with no contours and ``morphable == False``.
    """
    if isinstance(shaping_mode, str):
        shaping_mode = ShapingMode(shaping_mode)
    if not text:
        raise ValueError("empty text")
    try:
        font = TTFont(font_file)
    except (TTLibError, OSError, ValueError) as exc:
        raise FontError(f"unreadable font file {font_file}: {exc}") from exc

    glyph_set = font.getGlyphSet()
    upm = font["head"].unitsPerEm
    names = _glyph_names(font, text, shaping_mode)
    script = _detect_script(text) if shaping_mode is ShapingMode.SIMPLE else (
        Script.RIGHT_TO_LEFT if any(_detect_script(c) is Script.RIGHT_TO_LEFT for _, c in names)
        else Script.LEFT_TO_RIGHT
    )

    raw: list[tuple[list[np.ndarray], float, str]] = []
    for name, ch in names:
        pen = _CubicPen(glyph_set)
        glyph_set[name].draw(pen)
        raw.append((pen.contours, float(glyph_set[name].width), ch))

    total_adv = sum(adv for _, adv, _ in raw)
    if total_adv <= 0:
        total_adv = float(upm)

    # Vertical extent from the actual outlines (fall back to em box for spaces).
    ys = [c[:, 1] for contours, _, _ in raw for c in contours]
    if ys:
        y_lo = min(float(y.min()) for y in ys)
        y_hi = max(float(y.max()) for y in ys)
    else:
        y_lo, y_hi = 0.0, float(upm)
    height = max(y_hi - y_lo, 1.0)

    scale = min(
        FIT_FRACTION * CANVAS_UNITS / total_adv,
        FIT_FRACTION * CANVAS_UNITS / height,
    )

    x0 = (CANVAS_UNITS - scale * total_adv) / 2.0
    # y-down canvas: baseline such that the outline band is vertically centered
    baseline = CANVAS_UNITS / 2.0 + scale * (y_hi + y_lo) / 2.0

    # Glyph list stays in logical letter order; only visual placement differs.
    glyphs: list[GlyphPath] = []
    advances: list[float] = []
    if script is Script.RIGHT_TO_LEFT:
        right = x0 + scale * total_adv
        for li, (contours, adv, ch) in enumerate(raw):
            right -= scale * adv
            glyphs.append(_place(contours, scale, right, baseline, li, ch))
            advances.append(scale * adv)
    else:
        pen_x = x0
        for li, (contours, adv, ch) in enumerate(raw):
            glyphs.append(_place(contours, scale, pen_x, baseline, li, ch))
            advances.append(scale * adv)
            pen_x += scale * adv

    layout = WordLayout(glyphs, advances, script)
    overflow = _canvas_overflow(layout)
    if overflow is not None:
        # negative side bearings or overshoot pushed ink outside the canvas:
        # shrink about the canvas center and recenter on the measured bbox
        xmin, ymin, xmax, ymax = overflow
        k = min(
            0.98 * CANVAS_UNITS / max(xmax - xmin, 1e-9),
            0.98 * CANVAS_UNITS / max(ymax - ymin, 1e-9),
            1.0,
        )
        cx = (xmin + xmax) / 2.0
        cy = (ymin + ymax) / 2.0
        fixed = []
        for g in layout.glyphs:
            moved = [
                (c - np.array([cx, cy])) * k + CANVAS_UNITS / 2.0 for c in g.contours
            ]
            fixed.append(GlyphPath(moved, g.letter_index, g.char))
        layout = WordLayout(fixed, [a * k for a in layout.advances], script)
    _check_canvas_fit(layout)
    return layout


def _place(
    contours: list[np.ndarray],
    scale: float,
    x_off: float,
    baseline: float,
    letter_index: int,
    char: str,
) -> GlyphPath:
    placed = []
    for c in contours:
        out = np.empty_like(c)
        out[:, 0] = x_off + scale * c[:, 0]
        out[:, 1] = baseline - scale * c[:, 1]  # flip y-up font to y-down canvas
        placed.append(out)
    return GlyphPath(placed, letter_index, char)


def _canvas_overflow(layout: WordLayout) -> tuple[float, float, float, float] | None:
    """Union outline bbox if any glyph escapes the canvas, else None."""
    boxes = [g.bounds() for g in layout.glyphs if g.contours]
    if not boxes:
        return None
    xmin = min(b[0] for b in boxes)
    ymin = min(b[1] for b in boxes)
    xmax = max(b[2] for b in boxes)
    ymax = max(b[3] for b in boxes)
    eps = 1e-6
    if xmin < -eps or ymin < -eps or xmax > CANVAS_UNITS + eps or ymax > CANVAS_UNITS + eps:
        return xmin, ymin, xmax, ymax
    return None


def _check_canvas_fit(layout: WordLayout) -> None:
    if _canvas_overflow(layout) is not None:
        boxes = [g.bounds() for g in layout.glyphs if g.contours]
        raise FontError(f"word escapes the canvas after placement: {boxes}")
