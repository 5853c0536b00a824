"""SVG export and re-import of word layouts.

One path element per glyph, one M...Z subpath per contour, fill-rule evenodd —
that is what keeps counters (holes) intact under standard SVG semantics.
Coordinates are written with shortest-round-trip precision so an exported file
re-imports to bit-identical control points.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .bezier import CANVAS_UNITS, GlyphPath, Script, WordLayout, segment_points


def _fmt(x: float) -> str:
    return repr(float(x))


def svg_string(word: WordLayout) -> str:
    if not any(g.contours for g in word.glyphs):
        raise ValueError("cannot export an empty word (no contours)")
    c = int(CANVAS_UNITS)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {c} {c}" '
        f'width="{c}" height="{c}" data-script="{word.script.value}">',
        f'<rect x="0" y="0" width="{c}" height="{c}" fill="#ffffff"/>',
    ]
    for g, adv in zip(word.glyphs, word.advances):
        if not g.contours:
            lines.append(
                f'<g data-letter-index="{g.letter_index}" data-char="{_esc(g.char)}" '
                f'data-advance="{_fmt(adv)}"/>'
            )
            continue
        parts = []
        for contour in g.contours:
            m = contour.shape[0] // 3
            p0 = contour[0]
            parts.append(f"M {_fmt(p0[0])} {_fmt(p0[1])}")
            for k in range(m):
                seg = segment_points(contour, k)
                parts.append(
                    "C "
                    + " ".join(_fmt(v) for p in seg[1:] for v in p)
                )
            parts.append("Z")
        d = " ".join(parts)
        lines.append(
            f'<path d="{d}" fill="#000000" fill-rule="evenodd" '
            f'data-letter-index="{g.letter_index}" data-char="{_esc(g.char)}" '
            f'data-advance="{_fmt(adv)}"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace('"', "&quot;").replace("<", "&lt;")


def export_svg(word: WordLayout, path: str | Path) -> None:
    Path(path).write_text(svg_string(word), encoding="utf-8")


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_TOKEN = re.compile(rf"([MCLZmclz])|({_NUM})")


def _parse_path_d(d: str) -> list[np.ndarray]:
    """Parse the absolute M/C/L/Z subset this module emits."""
    tokens: list[str] = [a or b for a, b in _TOKEN.findall(d)]
    contours: list[np.ndarray] = []
    pts: list[np.ndarray] | None = None
    i = 0

    def take(n: int) -> list[float]:
        nonlocal i
        vals = [float(t) for t in tokens[i : i + n]]
        if len(vals) != n:
            raise ValueError("truncated path data")
        i += n
        return vals

    while i < len(tokens):
        tok = tokens[i]
        i += 1
        if tok in ("M", "m"):
            x, y = take(2)
            pts = [np.array([x, y])]
        elif tok in ("C", "c"):
            if pts is None:
                raise ValueError("C before M")
            vals = take(6)
            pts.extend(np.array(vals[j : j + 2]) for j in (0, 2, 4))
        elif tok in ("L", "l"):
            if pts is None:
                raise ValueError("L before M")
            x, y = take(2)
            a, b = pts[-1], np.array([x, y])
            pts.extend([a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b])
        elif tok in ("Z", "z"):
            if pts is None:
                continue
            if len(pts) >= 4 and np.allclose(pts[-1], pts[0], atol=1e-12):
                pts = pts[:-1]  # structural closure
            elif len(pts) > 1:
                a, b = pts[-1], pts[0]
                pts.extend([a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0])
            arr = np.asarray(pts)
            if arr.shape[0] >= 3 and arr.shape[0] % 3 == 0:
                contours.append(arr)
            pts = None
        else:
            raise ValueError(f"unsupported path token {tok!r}")
    return contours


def load_svg(path: str | Path) -> WordLayout:
    """Re-import an SVG produced by export_svg."""
    root = ET.parse(path).getroot()
    script = Script(root.get("data-script", "ltr"))
    glyphs: list[GlyphPath] = []
    advances: list[float] = []
    ns = "{http://www.w3.org/2000/svg}"
    for el in root:
        tag = el.tag.removeprefix(ns)
        if tag == "path":
            contours = _parse_path_d(el.get("d", ""))
        elif tag == "g" and el.get("data-letter-index") is not None:
            contours = []
        else:
            continue
        letter_index = int(el.get("data-letter-index", len(glyphs)))
        glyphs.append(GlyphPath(contours, letter_index, el.get("data-char", "")))
        advances.append(float(el.get("data-advance", 0.0)))
    if not glyphs:
        raise ValueError(f"{path}: no glyph paths found")
    return WordLayout(glyphs, advances, script)
