import numpy as np
import pytest

from wordmorph.bezier import GlyphPath, WordLayout, line_as_cubic
from wordmorph.raster import RasterImage, render


def dejavu_path() -> str:
    import matplotlib
    from pathlib import Path

    p = Path(matplotlib.__file__).parent / "mpl-data" / "fonts" / "ttf" / "DejaVuSans.ttf"
    if not p.exists():
        pytest.skip("DejaVuSans.ttf not available")
    return str(p)


@pytest.fixture(scope="session")
def dejavu() -> str:
    return dejavu_path()


def square_contour(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    """Packed contour of an axis-aligned square made of straight cubics."""
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    pts = []
    for i in range(4):
        a = np.asarray(corners[i], dtype=float)
        b = np.asarray(corners[(i + 1) % 4], dtype=float)
        cub = line_as_cubic(a, b)
        pts.extend([cub[0], cub[1], cub[2]])
    return np.asarray(pts)


def polygon_contour(vertices) -> np.ndarray:
    """Packed contour through arbitrary straight-line vertices."""
    pts = []
    n = len(vertices)
    for i in range(n):
        a = np.asarray(vertices[i], dtype=float)
        b = np.asarray(vertices[(i + 1) % n], dtype=float)
        cub = line_as_cubic(a, b)
        pts.extend([cub[0], cub[1], cub[2]])
    return np.asarray(pts)


def random_blob_glyph(rng: np.random.Generator, n_anchors: int = 5) -> GlyphPath:
    """A random smooth closed contour whose control polygon stays simple
    (anchors on a star-convex ring, handles jittered radially only)."""
    gaps = rng.uniform(1.0, 2.0, n_anchors)
    ang = 2 * np.pi * np.cumsum(gaps) / gaps.sum()
    rad = rng.uniform(110, 200, n_anchors)

    def at(a, r):
        return np.array([300 + r * np.cos(a), 300 + r * np.sin(a)])

    pts = []
    for i in range(n_anchors):
        a0, a1 = ang[i], ang[(i + 1) % n_anchors]
        if a1 <= a0:
            a1 += 2 * np.pi
        r0, r1 = rad[i], rad[(i + 1) % n_anchors]
        pts.append(at(a0, r0))
        for frac in (1 / 3, 2 / 3):
            am = a0 + frac * (a1 - a0)
            rm = r0 + frac * (r1 - r0) + rng.uniform(-12, 12)
            pts.append(at(am, rm))
    return GlyphPath([np.asarray(pts)])


def random_square_word(rng: np.random.Generator) -> WordLayout:
    """A randomly placed, slightly rotated quadrilateral as a one-glyph word."""
    cx, cy = rng.uniform(200, 400, 2)
    half = rng.uniform(60, 140)
    th = rng.uniform(0, np.pi / 2)
    c, s = np.cos(th), np.sin(th)
    corners = []
    for dx, dy in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        x, y = dx * half, dy * half
        corners.append((cx + c * x - s * y, cy + s * x + c * y))
    return WordLayout([GlyphPath([polygon_contour(corners)])])


def circle_raster(size: int, cx: float, cy: float, r: float) -> RasterImage:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cov = ((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r).astype(float)
    return RasterImage(size, size, cov)


def annulus_for(word: WordLayout, size: int, scale=1.12, off=(0.04, 0.03)) -> RasterImage:
    """A circle-raster (ring) derived from the word's own rendered footprint."""
    img = render(word, size)
    ys, xs = np.nonzero(img.pixels > 0.5)
    cx, cy = xs.mean(), ys.mean()
    rr = np.hypot(xs - cx, ys - cy)
    r_out = np.quantile(rr, 0.95) * scale
    r_in = np.quantile(rr, 0.05) * scale
    cx += off[0] * size
    cy += off[1] * size
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2
    return RasterImage(size, size, ((d2 <= r_out**2) & (d2 >= r_in**2)).astype(float))


def fd_check(f, x0: np.ndarray, grad: np.ndarray, h: float, rtol: float, floor: float = 1e-9):
    """Central finite differences against an analytic gradient, coordinatewise."""
    x0 = np.asarray(x0, dtype=float)
    worst = 0.0
    it = np.nditer(x0, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x0.copy()
        xp[idx] += h
        xm = x0.copy()
        xm[idx] -= h
        fd = (f(xp) - f(xm)) / (2 * h)
        an = grad[idx]
        rel = abs(fd - an) / max(abs(fd), abs(an), floor)
        worst = max(worst, rel)
        assert rel <= rtol, f"coordinate {idx}: fd={fd:.8g} analytic={an:.8g} rel={rel:.3g}"
        it.iternext()
    return worst
