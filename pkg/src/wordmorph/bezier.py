"""Cubic Bezier glyph geometry: segments, closed contours, words, subdivision.

Coordinates live on a 600x600 abstract canvas, y pointing down. A contour is
stored packed: ``[a0, h0, h0', a1, h1, h1', ...]`` where segment ``k`` of an
``m``-segment contour is ``(pts[3k], pts[3k+1], pts[3k+2], pts[3(k+1) % 3m])``.
Closure is structural — shared anchors are stored once — which is also why
``point_count == 3 * segments`` holds by construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

CANVAS_UNITS = 600.0

# Chord-sampling resolution used for arc-length estimates ("longest curve").
ARC_SAMPLES = 16


class Script(enum.Enum):
    LEFT_TO_RIGHT = "ltr"
    RIGHT_TO_LEFT = "rtl"


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=np.float64).reshape(2)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite coordinate: {p!r}")
    return a


@dataclass(frozen=True)
class BezierSegment:
    """One cubic segment with control points p0..p3."""

    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray

    def __post_init__(self):
        for name in ("p0", "p1", "p2", "p3"):
            object.__setattr__(self, name, _as_point(getattr(self, name)))

    @property
    def points(self) -> np.ndarray:
        return np.stack([self.p0, self.p1, self.p2, self.p3])

    def point_at(self, t: float) -> np.ndarray:
        w = bernstein_weights(t)
        return w @ self.points

    def split(self, t: float = 0.5) -> tuple["BezierSegment", "BezierSegment"]:
        left, right = de_casteljau_split(self.points, t)
        return BezierSegment(*left), BezierSegment(*right)

    def arc_length(self, samples: int = ARC_SAMPLES) -> float:
        return chord_length(self.points, samples)


def bernstein_weights(t: float) -> np.ndarray:
    """Cubic Bernstein basis evaluated at t."""
    s = 1.0 - t
    return np.array([s * s * s, 3.0 * t * s * s, 3.0 * t * t * s, t * t * t])


def de_casteljau_split(pts: np.ndarray, t: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Split a cubic (4x2 array) at parameter t into two exact halves."""
    p0, p1, p2, p3 = np.asarray(pts, dtype=np.float64)
    q0 = p0 + t * (p1 - p0)
    q1 = p1 + t * (p2 - p1)
    q2 = p2 + t * (p3 - p2)
    r0 = q0 + t * (q1 - q0)
    r1 = q1 + t * (q2 - q1)
    s = r0 + t * (r1 - r0)
    left = np.stack([p0, q0, r0, s])
    right = np.stack([s, r1, q2, p3])
    return left, right


def chord_length(pts: np.ndarray, samples: int = ARC_SAMPLES) -> float:
    """Arc length estimated by summing chords at `samples` parameter steps."""
    t = np.linspace(0.0, 1.0, samples + 1)
    s = 1.0 - t
    w = np.stack([s**3, 3 * t * s**2, 3 * t**2 * s, t**3], axis=1)
    curve = w @ np.asarray(pts, dtype=np.float64)
    return float(np.sum(np.hypot(*np.diff(curve, axis=0).T)))


def elevate_quadratic(q0, q1, q2) -> np.ndarray:
    """Exact degree elevation of a quadratic Bezier to a cubic."""
    q0 = _as_point(q0)
    q1 = _as_point(q1)
    q2 = _as_point(q2)
    c1 = q0 + (2.0 / 3.0) * (q1 - q0)
    c2 = q2 + (2.0 / 3.0) * (q1 - q2)
    return np.stack([q0, c1, c2, q2])


def line_as_cubic(a, b) -> np.ndarray:
    """A straight segment as an exact cubic (handles at the thirds)."""
    a = _as_point(a)
    b = _as_point(b)
    return np.stack([a, a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b])


class GlyphPath:
    """Closed cubic-Bezier contours of one letter, plus its position in the word.

    `contours` is a list of packed (3m, 2) float64 arrays (see module docstring).
    """

    __slots__ = ("contours", "letter_index", "char")

    def __init__(self, contours: list[np.ndarray], letter_index: int = 0, char: str = ""):
        packed = []
        for c in contours:
            a = np.asarray(c, dtype=np.float64)
            if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] % 3 != 0 or a.shape[0] < 3:
                raise ValueError(f"contour must be a (3m, 2) array, got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite contour coordinates")
            packed.append(a)
        self.contours = packed
        self.letter_index = int(letter_index)
        self.char = char

    @property
    def point_count(self) -> int:
        return sum(c.shape[0] for c in self.contours)

    @property
    def morphable(self) -> bool:
        """False for zero-area glyphs (e.g. space)."""
        return bool(self.contours) and self.area() > 1e-9

    def segments(self) -> list[tuple[int, int, BezierSegment]]:
        """All segments as (contour_index, segment_index, segment)."""
        out = []
        for ci, c in enumerate(self.contours):
            m = c.shape[0] // 3
            for k in range(m):
                out.append((ci, k, BezierSegment(*segment_points(c, k))))
        return out

    def area(self) -> float:
        """Coarse unsigned area from chord-sampled contours (morphability test)."""
        total = 0.0
        for c in self.contours:
            poly = sample_contour(c, ARC_SAMPLES)
            x, y = poly[:, 0], poly[:, 1]
            total += 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        return float(total)

    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the control points."""
        pts = np.concatenate(self.contours) if self.contours else np.zeros((1, 2))
        return (
            float(pts[:, 0].min()),
            float(pts[:, 1].min()),
            float(pts[:, 0].max()),
            float(pts[:, 1].max()),
        )

    def translated(self, dx: float, dy: float) -> "GlyphPath":
        return GlyphPath(
            [c + np.array([dx, dy]) for c in self.contours], self.letter_index, self.char
        )

    def copy(self) -> "GlyphPath":
        return GlyphPath([c.copy() for c in self.contours], self.letter_index, self.char)


def segment_points(contour: np.ndarray, k: int) -> np.ndarray:
    """Control points (4, 2) of segment k of a packed contour."""
    n = contour.shape[0]
    i = 3 * k
    return np.stack([contour[i], contour[i + 1], contour[i + 2], contour[(i + 3) % n]])


def sample_contour(contour: np.ndarray, per_segment: int) -> np.ndarray:
    """Polyline sampling of a packed contour, `per_segment` steps per segment."""
    m = contour.shape[0] // 3
    t = np.linspace(0.0, 1.0, per_segment, endpoint=False)
    s = 1.0 - t
    w = np.stack([s**3, 3 * t * s**2, 3 * t**2 * s, t**3], axis=1)
    pieces = [w @ segment_points(contour, k) for k in range(m)]
    return np.concatenate(pieces)


@dataclass
class WordLayout:
    """Placed glyphs of a word. Glyph coordinates are already in canvas units;
    `advances` records the per-glyph horizontal pen offsets used at placement."""

    glyphs: list[GlyphPath]
    advances: list[float] = field(default_factory=list)
    script: Script = Script.LEFT_TO_RIGHT

    def __post_init__(self):
        if not self.advances:
            self.advances = [0.0] * len(self.glyphs)
        if len(self.advances) != len(self.glyphs):
            raise ValueError("advances must match glyphs")

    @property
    def text(self) -> str:
        return "".join(g.char or "?" for g in self.glyphs)

    def copy(self) -> "WordLayout":
        return WordLayout([g.copy() for g in self.glyphs], list(self.advances), self.script)

    def replace_glyphs(self, by_index: dict[int, GlyphPath]) -> "WordLayout":
        glyphs = [by_index.get(i, g) for i, g in enumerate(self.glyphs)]
        return WordLayout(glyphs, list(self.advances), self.script)


def split_segment_in_contour(contour: np.ndarray, k: int, t: float = 0.5) -> np.ndarray:
    """Return the contour with segment k split at t (adds 3 packed points)."""
    left, right = de_casteljau_split(segment_points(contour, k), t)
    i = 3 * k
    inserted = np.stack([left[1], left[2], left[3], right[1], right[2]])
    return np.concatenate([contour[: i + 1], inserted, contour[i + 3 :]])


def gather_points(word: WordLayout, glyph_indices: list[int]) -> np.ndarray:
    """Flattened (N, 2) control points of the given glyphs, contour order."""
    arrs = []
    for gi in glyph_indices:
        arrs.extend(word.glyphs[gi].contours)
    if not arrs:
        return np.zeros((0, 2))
    return np.concatenate(arrs)


def scatter_points(
    word: WordLayout, glyph_indices: list[int], points: np.ndarray
) -> WordLayout:
    """Inverse of gather_points: rebuild the word with replaced glyph points."""
    pts = np.asarray(points, dtype=np.float64)
    replaced: dict[int, GlyphPath] = {}
    off = 0
    for gi in glyph_indices:
        g = word.glyphs[gi]
        contours = []
        for c in g.contours:
            n = c.shape[0]
            contours.append(pts[off : off + n].copy())
            off += n
        replaced[gi] = GlyphPath(contours, g.letter_index, g.char)
    if off != pts.shape[0]:
        raise ValueError(f"point count mismatch: {pts.shape[0]} given, {off} used")
    return word.replace_glyphs(replaced)


def contour_edges(word: WordLayout, glyph_indices: list[int]) -> np.ndarray:
    """Consecutive control-point index pairs along each contour (cyclic), in the
    flattened indexing of gather_points. These are the triangulation constraints."""
    edges = []
    off = 0
    for gi in glyph_indices:
        for c in word.glyphs[gi].contours:
            n = c.shape[0]
            for i in range(n):
                edges.append((off + i, off + (i + 1) % n))
            off += n
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def default_point_budget(glyph: GlyphPath) -> int:
    """Default control-point target: enough freedom to morph, capped for stability."""
    if not glyph.contours:
        return 0
    perimeter = sum(
        chord_length(segment_points(c, k))
        for c in glyph.contours
        for k in range(c.shape[0] // 3)
    )
    want = 15 * len(glyph.contours) + int(perimeter / 20.0)
    return max(glyph.point_count, min(want, 120))


def subdivide_to_budget(glyph: GlyphPath, target_points: int) -> GlyphPath:
    """Split the longest segment (chord-sampled length) at t=0.5 until the glyph
    has at least `target_points` control points. Ties break on lowest contour
    index, then lowest segment index. The rendered shape is unchanged."""
    if target_points < glyph.point_count:
        raise ValueError(
            f"target_points {target_points} below existing count {glyph.point_count}"
        )
    contours = [c.copy() for c in glyph.contours]
    count = glyph.point_count
    lengths: list[list[float]] = [
        [chord_length(segment_points(c, k)) for k in range(c.shape[0] // 3)]
        for c in contours
    ]
    while count < target_points:
        best, best_len = (0, 0), -math.inf
        for ci, ls in enumerate(lengths):
            for k, l in enumerate(ls):
                if l > best_len:
                    best, best_len = (ci, k), l
        ci, k = best
        contours[ci] = split_segment_in_contour(contours[ci], k)
        ls = lengths[ci]
        ls[k : k + 1] = [
            chord_length(segment_points(contours[ci], k)),
            chord_length(segment_points(contours[ci], k + 1)),
        ]
        count += 3
    return GlyphPath(contours, glyph.letter_index, glyph.char)
