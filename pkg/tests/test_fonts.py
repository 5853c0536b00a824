import numpy as np
import pytest
from fontTools.pens.recordingPen import RecordingPen
from fontTools.ttLib import TTFont

from wordmorph.bezier import CANVAS_UNITS, Script
from wordmorph.fonts import FontError, ShapingMode, load_glyph_outlines


def test_single_letter_one_contour(dejavu):
    w = load_glyph_outlines(dejavu, "I")
    assert len(w.glyphs) == 1
    g = w.glyphs[0]
    assert len(g.contours) == 1
    assert g.morphable
    assert g.point_count == g.contours[0].shape[0]


def test_bird_contour_counts_against_font_dump(dejavu):
    # independent oracle: count moveTo records straight off the font tables
    font = TTFont(dejavu)
    cmap = font.getBestCmap()
    glyph_set = font.getGlyphSet()
    expected = {}
    for ch in "BIRD":
        pen = RecordingPen()
        glyph_set[cmap[ord(ch)]].draw(pen)
        expected[ch] = sum(1 for op, _ in pen.value if op == "moveTo")
    assert expected["B"] == 3  # outer + two holes

    w = load_glyph_outlines(dejavu, "BIRD")
    assert len(w.glyphs) == 4
    for g, ch in zip(w.glyphs, "BIRD"):
        assert g.char == ch
        assert len(g.contours) == expected[ch]


def test_empty_text_rejected(dejavu):
    with pytest.raises(ValueError):
        load_glyph_outlines(dejavu, "")


def test_missing_codepoint_reported(dejavu):
    missing = "\U000f0000"  # private use plane, not in DejaVu
    with pytest.raises(FontError) as ei:
        load_glyph_outlines(dejavu, "A" + missing)
    assert "U+F0000" in str(ei.value)


def test_unreadable_font(tmp_path):
    bad = tmp_path / "junk.ttf"
    bad.write_bytes(b"this is not a font at all")
    with pytest.raises(FontError):
        load_glyph_outlines(str(bad), "A")


def test_space_flagged_non_morphable(dejavu):
    w = load_glyph_outlines(dejavu, "A B")
    assert [g.morphable for g in w.glyphs] == [True, False, True]
    assert w.glyphs[1].contours == []


def test_word_fits_canvas_and_span(dejavu):
    w = load_glyph_outlines(dejavu, "HAMBURGEFONTSIV")
    xs = []
    for g in w.glyphs:
        if not g.contours:
            continue
        xmin, ymin, xmax, ymax = g.bounds()
        assert xmin >= -1e-6 and ymin >= -1e-6
        assert xmax <= CANVAS_UNITS + 1e-6 and ymax <= CANVAS_UNITS + 1e-6
        xs += [xmin, xmax]
    assert sum(w.advances) <= 0.9 * CANVAS_UNITS + 1e-6


def _reference_outline_polylines(font_path: str, char: str, samples: int = 64):
    """Independent reconstruction of a glyph outline in font units: raw pen
    records, TrueType implied on-curve midpoints handled here, quadratics
    sampled directly (no degree elevation)."""
    font = TTFont(font_path)
    glyph_set = font.getGlyphSet()
    pen = RecordingPen()
    glyph_set[font.getBestCmap()[ord(char)]].draw(pen)

    polylines = []
    current = None
    start = None
    pts = []
    t = np.linspace(0.0, 1.0, samples)

    def quad(p0, p1, p2):
        p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
        s = 1 - t
        return (s * s)[:, None] * p0 + (2 * s * t)[:, None] * p1 + (t * t)[:, None] * p2

    for op, args in pen.value:
        if op == "moveTo":
            current = np.asarray(args[0], dtype=float)
            start = current
            pts = [current]
        elif op == "lineTo":
            nxt = np.asarray(args[0], dtype=float)
            pts.extend(np.linspace(current, nxt, samples)[1:])
            current = nxt
        elif op == "qCurveTo":
            points = [np.asarray(p, dtype=float) for p in args]
            if points[-1] is None:  # closed all-off-curve contour (rare)
                points[-1] = start
            off = points[:-1]
            prev = current
            for i, ctrl in enumerate(off):
                if i < len(off) - 1:
                    end = (ctrl + off[i + 1]) / 2.0  # implied on-curve midpoint
                else:
                    end = points[-1]
                pts.extend(quad(prev, ctrl, end)[1:])
                prev = end
            current = prev
        elif op == "curveTo":
            p0 = current
            p1, p2, p3 = (np.asarray(p, dtype=float) for p in args)
            s = 1 - t
            cubic = (
                (s**3)[:, None] * p0 + (3 * t * s**2)[:, None] * p1
                + (3 * t**2 * s)[:, None] * p2 + (t**3)[:, None] * p3
            )
            pts.extend(cubic[1:])
            current = p3
        elif op in ("closePath", "endPath"):
            if pts:
                if np.linalg.norm(current - start) > 1e-9:
                    pts.extend(np.linspace(current, start, samples)[1:])
                polylines.append(np.asarray(pts))
            pts = []
    return polylines


def _point_to_polyline_dist(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-18)
    best = np.full(points.shape[0], np.inf)
    for k in range(a.shape[0]):
        u = np.clip((points - a[k]) @ ab[k] / denom[k], 0.0, 1.0)
        foot = a[k] + u[:, None] * ab[k]
        best = np.minimum(best, np.hypot(*(points - foot).T))
    return best


@pytest.mark.parametrize("char", ["O", "B", "g"])
def test_loaded_outline_matches_independent_reconstruction(dejavu, char):
    # every densely sampled point of the loaded cubic outline must lie on the
    # independently reconstructed quadratic outline (degree elevation and the
    # implied-midpoint decomposition are exact, so the loci coincide)
    from wordmorph.bezier import sample_contour

    word = load_glyph_outlines(dejavu, char)
    g = word.glyphs[0]
    refs = _reference_outline_polylines(dejavu, char)
    assert len(g.contours) == len(refs)

    # fit the placement transform from extremes: x' = sx * x + tx, y' = ty - sx * y
    mine = np.concatenate([sample_contour(c, 32) for c in g.contours])
    ref_all = np.concatenate(refs)
    sx = (mine[:, 0].max() - mine[:, 0].min()) / (ref_all[:, 0].max() - ref_all[:, 0].min())
    tx = mine[:, 0].min() - sx * ref_all[:, 0].min()
    ty = mine[:, 1].max() + sx * ref_all[:, 1].min()
    mapped = [np.stack([sx * r[:, 0] + tx, ty - sx * r[:, 1]], axis=1) for r in refs]

    tol = 1.2 * 600 / 64  # polyline sampling slack, canvas units
    ref_cat = np.concatenate(mapped)
    d = _point_to_polyline_dist(mine, ref_cat)
    assert d.max() < tol, f"{char}: loaded outline departs from the font outline by {d.max():.3f}"


def test_preshaped_ids_mode(dejavu):
    font = TTFont(dejavu)
    cmap = font.getBestCmap()
    names = [cmap[ord(c)] for c in "AB"]
    w = load_glyph_outlines(dejavu, " ".join(names), ShapingMode.PRESHAPED_IDS)
    assert len(w.glyphs) == 2
    assert all(g.morphable for g in w.glyphs)
    # numeric glyph ids work too
    order = font.getGlyphOrder()
    gid = order.index(names[0])
    w2 = load_glyph_outlines(dejavu, str(gid), "preshaped-ids")
    assert len(w2.glyphs) == 1


def test_preshaped_unknown_name(dejavu):
    with pytest.raises(FontError):
        load_glyph_outlines(dejavu, "no-such-glyph-name", ShapingMode.PRESHAPED_IDS)


def test_rtl_script_detection_and_order(dejavu):
    # Arabic isolated forms exist in DejaVuSans; logical order is preserved,
    # placement runs right-to-left
    text = "اب"  # alef, beh
    w = load_glyph_outlines(dejavu, text)
    assert w.script is Script.RIGHT_TO_LEFT
    assert [g.char for g in w.glyphs] == list(text)
    first = w.glyphs[0].bounds()
    second = w.glyphs[1].bounds()
    assert first[0] > second[0]  # letter 1 sits to the right of letter 2
