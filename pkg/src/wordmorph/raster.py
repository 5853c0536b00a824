"""Differentiable soft rasterization of Bezier word layouts.

Coverage model: per glyph, even-odd parity (scanline crossing counts over the
flattened contours) gives inside/outside; anti-aliasing comes from a smoothstep
of the signed distance to the contour with half-width one pixel, so coverage
saturates exactly to 0/1 outside the smoothing band. Glyph coverages composite
by soft-OR. Everything is a pure function of the control points; gradients are
assembled analytically through the flattening map (Bernstein weights), the
nearest-edge projection, and the smoothstep.

Flattening is recursive midpoint subdivision. Because ``subdivide_to_budget``
also splits at t=0.5 with the same de Casteljau arithmetic, flattening a parent
segment and flattening its two budget-split halves produce bit-identical
polylines — that is what makes pre/post-subdivision renders agree to 1e-6.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bezier import CANVAS_UNITS, GlyphPath, WordLayout, de_casteljau_split

# Smoothing half-width in pixels; coverage saturates exactly beyond it.
SMOOTH_HALF_WIDTH = 1.0
# Flatness tolerance in canvas units for midpoint flattening.
FLATTEN_TOL = 0.05
# Chords keep splitting below this length (canvas units) even when flat.
# Dense vertices are what give control-point gradients their correct Bernstein
# sensitivity profile: a straight segment rendered as one chord would assign
# its handles zero gradient and its anchors twice the true curve derivative.
FLATTEN_MAX_CHORD = 8.0
_FLATTEN_MAX_DEPTH = 20


@dataclass(frozen=True)
class RasterImage:
    """Grayscale coverage buffer, row-major, origin top-left, ink = 1."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (self.height, self.width):
            raise ValueError(f"pixel buffer {px.shape} != ({self.height}, {self.width})")
        object.__setattr__(self, "pixels", px)

    def to_guidance(self) -> np.ndarray:
        """Black-ink-on-white, replicated to 3 channels (H, W, 3) for scorers."""
        return np.repeat((1.0 - self.pixels)[:, :, None], 3, axis=2)

    def save_png(self, path: str) -> None:
        from PIL import Image

        arr = np.clip(np.rint((1.0 - self.pixels) * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(path)

    def to_float32_bytes(self) -> bytes:
        return np.ascontiguousarray(self.pixels, dtype="<f4").tobytes()


@dataclass(frozen=True)
class AugmentationSpec:
    """Random view parameters for guidance scoring. `crop_fraction` is the lower
    bound of the uniformly drawn crop scale; 1.0 plus zero jitter is identity."""

    seed: int = 0
    perspective_jitter: float = 0.05
    crop_fraction: float = 0.85

    def __post_init__(self):
        if not 0.0 <= self.perspective_jitter <= 0.1:
            raise ValueError("perspective_jitter must be in [0, 0.1]")
        if not 0.7 <= self.crop_fraction <= 1.0:
            raise ValueError("crop_fraction must be in [0.7, 1.0]")

    @property
    def is_identity(self) -> bool:
        return self.perspective_jitter == 0.0 and self.crop_fraction == 1.0


# ---------------------------------------------------------------------------
# Flattening


def _flatness(pts: np.ndarray) -> float:
    """Max distance of the handles from the chord (hull extent if degenerate)."""
    p0, p1, p2, p3 = pts
    d = p3 - p0
    n = np.hypot(d[0], d[1])
    if n < 1e-12:
        return float(max(np.hypot(*(p1 - p0)), np.hypot(*(p2 - p0))))
    nx, ny = -d[1] / n, d[0] / n
    return float(max(abs((p1 - p0) @ (nx, ny)), abs((p2 - p0) @ (nx, ny))))


def _chord(pts: np.ndarray) -> float:
    return float(np.hypot(*(pts[3] - pts[0])))


def _flatten_rec(pts: np.ndarray, t0: float, t1: float, depth: int, out: list):
    # The stop rule is a pure function of the sub-curve's control points, and
    # splits happen at t=0.5 with the same arithmetic subdivide_to_budget uses,
    # so flattening is refinement-consistent (see module docstring).
    if depth >= _FLATTEN_MAX_DEPTH or (
        _flatness(pts) <= FLATTEN_TOL and _chord(pts) <= FLATTEN_MAX_CHORD
    ):
        out.append(t1)
        return
    left, right = de_casteljau_split(pts, 0.5)
    tm = 0.5 * (t0 + t1)
    _flatten_rec(left, t0, tm, depth + 1, out)
    _flatten_rec(right, tm, t1, depth + 1, out)


def flatten_ts(seg_pts: np.ndarray) -> np.ndarray:
    """Interior+end parameter values of the midpoint flattening of one cubic.

    Returns the sorted t's in (0, 1]; t=0 is supplied by the previous vertex.
    """
    out: list[float] = []
    _flatten_rec(np.asarray(seg_pts, dtype=np.float64), 0.0, 1.0, 0, out)
    return np.asarray(out)


# ---------------------------------------------------------------------------
# Per-glyph geometry tables


class _GlyphTable:
    """Flattened polylines of one glyph in pixel space, with the bookkeeping
    needed to push pixel gradients back to packed control points."""

    __slots__ = ("verts", "vert_pt_idx", "vert_weights", "edge_a", "edge_b", "n_points")

    def __init__(self, glyph: GlyphPath, scale: float):
        verts = []
        vert_pt_idx = []
        vert_weights = []
        edge_a: list[int] = []
        edge_b: list[int] = []
        offsets = []
        off = 0
        for c in glyph.contours:
            offsets.append(off)
            off += c.shape[0]
        self.n_points = off

        for ci, contour in enumerate(glyph.contours):
            n = contour.shape[0]
            m = n // 3
            start_v = len(verts)
            for k in range(m):
                i = 3 * k
                idx = np.array([i, i + 1, i + 2, (i + 3) % n]) + offsets[ci]
                seg = np.stack(
                    [
                        contour[i],
                        contour[i + 1],
                        contour[i + 2],
                        contour[(i + 3) % n],
                    ]
                )
                if k == 0:
                    # contour start vertex (t=0 of first segment)
                    verts.append(seg[0] * scale)
                    vert_pt_idx.append(idx)
                    vert_weights.append(np.array([1.0, 0.0, 0.0, 0.0]))
                ts = flatten_ts(seg)
                s = 1.0 - ts
                w = np.stack([s**3, 3 * ts * s**2, 3 * ts**2 * s, ts**3], axis=1)
                pts = (w @ seg) * scale
                for j in range(len(ts) - 1):
                    verts.append(pts[j])
                    vert_pt_idx.append(idx)
                    vert_weights.append(w[j])
                # last t == 1.0 is the next segment's start vertex; only keep it
                # if this is the final segment (it wraps to the contour start).
                if k < m - 1:
                    verts.append(pts[-1])
                    vert_pt_idx.append(idx)
                    vert_weights.append(w[-1])
            end_v = len(verts)
            # edges, wrapping the contour
            for v in range(start_v, end_v):
                edge_a.append(v)
                edge_b.append(v + 1 if v + 1 < end_v else start_v)

        self.verts = np.asarray(verts, dtype=np.float64).reshape(-1, 2)
        self.vert_pt_idx = np.asarray(vert_pt_idx, dtype=np.int64).reshape(-1, 4)
        self.vert_weights = np.asarray(vert_weights, dtype=np.float64).reshape(-1, 4)
        self.edge_a = np.asarray(edge_a, dtype=np.int64)
        self.edge_b = np.asarray(edge_b, dtype=np.int64)


def _scan_parity(table: _GlyphTable, size: int) -> np.ndarray:
    """Even-odd inside mask at pixel centers via half-open scanline crossings."""
    inside = np.zeros((size, size), dtype=bool)
    if len(table.edge_a) == 0:
        return inside
    a = table.verts[table.edge_a]
    b = table.verts[table.edge_b]
    ya, yb = a[:, 1], b[:, 1]
    lo = np.minimum(ya, yb)
    hi = np.maximum(ya, yb)
    # rows with lo <= r + 0.5 < hi, exactly matching the half-open crossing rule
    row_lo = np.maximum(np.ceil(lo - 0.5).astype(int), 0)
    row_hi = np.minimum((np.ceil(hi - 0.5) - 1).astype(int), size - 1)
    xs_cols = np.arange(size) + 0.5
    # bucket edges by the rows they can cross
    rows_buckets: list[list[int]] = [[] for _ in range(size)]
    for e in range(len(ya)):
        r0, r1 = row_lo[e], row_hi[e]
        if r1 < r0:
            continue
        for r in range(r0, r1 + 1):
            rows_buckets[r].append(e)
    for r in range(size):
        es = rows_buckets[r]
        if not es:
            continue
        yc = r + 0.5
        es = np.asarray(es)
        y0, y1 = ya[es], yb[es]
        x0, x1 = a[es, 0], b[es, 0]
        # half-open [min, max) crossing rule
        mask = ((y0 <= yc) & (yc < y1)) | ((y1 <= yc) & (yc < y0))
        if not np.any(mask):
            continue
        y0, y1, x0, x1 = y0[mask], y1[mask], x0[mask], x1[mask]
        xc = x0 + (yc - y0) * (x1 - x0) / (y1 - y0)
        xc.sort()
        counts = np.searchsorted(xc, xs_cols, side="left")
        inside[r] = (counts % 2) == 1
    return inside


def _band_pairs(table: _GlyphTable, size: int, band: float):
    """(pixel_flat, edge) candidate pairs for every pixel within `band` of an
    edge's inflated bbox. Deterministic order: edges in index order."""
    a = table.verts[table.edge_a]
    b = table.verts[table.edge_b]
    px_list = []
    edge_list = []
    for e in range(a.shape[0]):
        x_lo = max(int(np.floor(min(a[e, 0], b[e, 0]) - band - 0.5)), 0)
        x_hi = min(int(np.ceil(max(a[e, 0], b[e, 0]) + band - 0.5)), size - 1)
        y_lo = max(int(np.floor(min(a[e, 1], b[e, 1]) - band - 0.5)), 0)
        y_hi = min(int(np.ceil(max(a[e, 1], b[e, 1]) + band - 0.5)), size - 1)
        if x_hi < x_lo or y_hi < y_lo:
            continue
        xs = np.arange(x_lo, x_hi + 1)
        ys = np.arange(y_lo, y_hi + 1)
        gx, gy = np.meshgrid(xs, ys)
        flat = (gy * size + gx).ravel()
        px_list.append(flat)
        edge_list.append(np.full(flat.shape, e, dtype=np.int64))
    if not px_list:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(px_list), np.concatenate(edge_list)


class _GlyphRender:
    """Forward render state of one glyph, kept for the backward pass."""

    __slots__ = (
        "table",
        "coverage",
        "band_px",
        "band_edge",
        "band_u",
        "band_dist",
        "band_sign",
    )

    def __init__(self, glyph: GlyphPath, size: int, scale: float):
        table = _GlyphTable(glyph, scale)
        self.table = table
        inside = _scan_parity(table, size)
        coverage = inside.astype(np.float64)

        w = SMOOTH_HALF_WIDTH
        px, ed = _band_pairs(table, size, w + 0.51)
        if len(px):
            a = table.verts[table.edge_a[ed]]
            b = table.verts[table.edge_b[ed]]
            cx = (px % size) + 0.5
            cy = (px // size) + 0.5
            p = np.stack([cx, cy], axis=1)
            ab = b - a
            denom = np.einsum("ij,ij->i", ab, ab)
            denom = np.where(denom < 1e-18, 1.0, denom)
            u = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
            foot = a + u[:, None] * ab
            d2 = np.einsum("ij,ij->i", p - foot, p - foot)

            # min distance per pixel, first edge wins ties (deterministic)
            order = np.lexsort((ed, d2, px))
            px_o, d2_o, ed_o, u_o = px[order], d2[order], ed[order], u[order]
            uniq, first = np.unique(px_o, return_index=True)
            dmin = np.sqrt(d2_o[first])
            in_band = dmin < w
            bpx = uniq[in_band]
            self.band_px = bpx
            self.band_edge = ed_o[first][in_band]
            self.band_u = u_o[first][in_band]
            self.band_dist = dmin[in_band]
            sign = np.where(inside.ravel()[bpx], 1.0, -1.0)
            self.band_sign = sign
            ds = sign * self.band_dist
            x = (ds + w) / (2.0 * w)
            coverage.ravel()[bpx] = x * x * (3.0 - 2.0 * x)
        else:
            self.band_px = np.empty(0, dtype=np.int64)
            self.band_edge = np.empty(0, dtype=np.int64)
            self.band_u = np.empty(0)
            self.band_dist = np.empty(0)
            self.band_sign = np.empty(0)
        self.coverage = coverage

    def backward(self, upstream_flat: np.ndarray, size: int, scale: float) -> np.ndarray:
        """Accumulate d(sum upstream*coverage)/d(control points), canvas units."""
        grad = np.zeros((self.table.n_points, 2), dtype=np.float64)
        if len(self.band_px) == 0:
            return grad
        w = SMOOTH_HALF_WIDTH
        up = upstream_flat[self.band_px]
        live = up != 0.0
        if not np.any(live):
            return grad
        bpx = self.band_px[live]
        ed = self.band_edge[live]
        u = self.band_u[live]
        dist = self.band_dist[live]
        sign = self.band_sign[live]
        up = up[live]

        x = (sign * dist + w) / (2.0 * w)
        dcov_dds = 6.0 * x * (1.0 - x) / (2.0 * w)

        t = self.table
        ia = t.edge_a[ed]
        ib = t.edge_b[ed]
        a = t.verts[ia]
        b = t.verts[ib]
        cx = (bpx % size) + 0.5
        cy = (bpx // size) + 0.5
        p = np.stack([cx, cy], axis=1)
        foot = a + u[:, None] * (b - a)
        diff = p - foot
        safe = np.maximum(dist, 1e-12)
        # d dist/d foot = -(p - foot)/dist ; d ds/d foot = sign * that
        dds_dfoot = -sign[:, None] * diff / safe[:, None]
        coeff = (up * dcov_dds)[:, None] * dds_dfoot  # d loss / d foot (pixel units)

        # foot = (1-u) a + u b with u fixed (envelope: u is argmin or clamped)
        for endpoint, weight in ((ia, 1.0 - u), (ib, u)):
            contrib = coeff * weight[:, None]  # d loss / d vertex
            pts_idx = t.vert_pt_idx[endpoint]  # (n, 4)
            wts = t.vert_weights[endpoint]  # (n, 4) Bernstein weights
            for c in range(4):
                np.add.at(grad, pts_idx[:, c], contrib * wts[:, c][:, None])
        return grad * scale  # chain through canvas->pixel scaling


class _RenderCache:
    """Shared forward pass for render() and gradient assembly."""

    def __init__(self, word: WordLayout, size: int):
        if size < 32:
            raise ValueError("render size must be >= 32")
        self.size = size
        self.scale = size / CANVAS_UNITS
        self.glyph_renders = [
            _GlyphRender(g, size, self.scale) if g.contours else None
            for g in word.glyphs
        ]
        one_minus = np.ones((size, size), dtype=np.float64)
        for gr in self.glyph_renders:
            if gr is not None:
                one_minus *= 1.0 - gr.coverage
        self.coverage = 1.0 - one_minus
        self.one_minus_total = one_minus

    def image(self) -> RasterImage:
        return RasterImage(self.size, self.size, np.clip(self.coverage, 0.0, 1.0))

    def gradient(self, upstream: np.ndarray) -> list[np.ndarray]:
        up = np.asarray(upstream, dtype=np.float64)
        if up.shape != (self.size, self.size):
            raise ValueError(f"upstream shape {up.shape} != render shape")
        grads = []
        for gr in self.glyph_renders:
            if gr is None:
                grads.append(np.zeros((0, 2)))
                continue
            # soft-OR composite: d total / d cov_g = prod_{h != g} (1 - cov_h)
            cg = 1.0 - gr.coverage
            others = np.where(cg > 1e-12, self.one_minus_total / np.where(cg > 1e-12, cg, 1.0), 0.0)
            if np.any(cg <= 1e-12):
                # recompute exactly where the division was degenerate
                prod = np.ones_like(cg)
                for other in self.glyph_renders:
                    if other is not None and other is not gr:
                        prod *= 1.0 - other.coverage
                others = prod
            grads.append(gr.backward((up * others).ravel(), self.size, self.scale))
        return grads


def render(word: WordLayout, size: int) -> RasterImage:
    """Rasterize a word layout to `size` x `size` coverage, even-odd fill."""
    return _RenderCache(word, size).image()


def render_gradient(word: WordLayout, size: int, upstream: np.ndarray) -> list[np.ndarray]:
    """d(sum_p upstream[p] * pixel[p]) / d(control points), one (n_i, 2) canvas-
    unit array per glyph. Zero away from the smoothing band by construction."""
    return _RenderCache(word, size).gradient(upstream)


# ---------------------------------------------------------------------------
# Augmentation


def _augment_params(spec: AugmentationSpec, size: int):
    """Draw the warp parameters for `spec` (fixed draw order for determinism)."""
    rng = np.random.default_rng(np.random.SeedSequence([0x41554731, spec.seed & 0xFFFFFFFF]))
    corner_jitter = rng.uniform(-1.0, 1.0, size=(4, 2)) * spec.perspective_jitter * size
    crop_scale = float(rng.uniform(spec.crop_fraction, 1.0))
    max_off = size * (1.0 - crop_scale)
    offset = rng.uniform(0.0, 1.0, size=2) * max_off
    return corner_jitter, crop_scale, offset


def _homography_from_corners(src_pts: np.ndarray, dst_pts: np.ndarray) -> np.ndarray:
    """3x3 homography H with H @ dst ~ src (output-to-source mapping)."""
    A = []
    rhs = []
    for (dx, dy), (sx, sy) in zip(dst_pts, src_pts):
        A.append([dx, dy, 1, 0, 0, 0, -dx * sx, -dy * sx])
        rhs.append(sx)
        A.append([0, 0, 0, dx, dy, 1, -dx * sy, -dy * sy])
        rhs.append(sy)
    h = np.linalg.solve(np.asarray(A, dtype=np.float64), np.asarray(rhs, dtype=np.float64))
    return np.append(h, 1.0).reshape(3, 3)


def _bilinear_gather(src: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample src at float coords; out-of-range reads as 0 coverage."""
    h, w = src.shape
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros(sx.shape, dtype=np.float64)
    for dy, dx, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = np.where(ok, src[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)], 0.0)
        out += wgt * vals
    return out


def _bilinear_scatter(shape, sx, sy, upstream) -> np.ndarray:
    """Adjoint of _bilinear_gather."""
    h, w = shape
    out = np.zeros(shape, dtype=np.float64)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    fx = sx - x0
    fy = sy - y0
    for dy, dx, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        np.add.at(
            out,
            (np.clip(yi, 0, h - 1)[ok], np.clip(xi, 0, w - 1)[ok]),
            (wgt * upstream)[ok],
        )
    return out


def _augment_coords(spec: AugmentationSpec, size: int):
    """Output-pixel -> source-pixel float coordinates for the composed warp."""
    corner_jitter, crop_scale, offset = _augment_params(spec, size)
    ys, xs = np.meshgrid(np.arange(size) + 0.5, np.arange(size) + 0.5, indexing="ij")
    # crop-and-resize: output center -> crop window coords
    if crop_scale != 1.0 or offset[0] != 0.0 or offset[1] != 0.0:
        cx = (xs) * crop_scale + offset[0]
        cy = (ys) * crop_scale + offset[1]
    else:
        cx, cy = xs, ys
    if spec.perspective_jitter > 0.0:
        corners = np.array(
            [[0.0, 0.0], [size, 0.0], [size, size], [0.0, size]], dtype=np.float64
        )
        H = _homography_from_corners(corners + corner_jitter, corners)
        denom = H[2, 0] * cx + H[2, 1] * cy + H[2, 2]
        sx = (H[0, 0] * cx + H[0, 1] * cy + H[0, 2]) / denom
        sy = (H[1, 0] * cx + H[1, 1] * cy + H[1, 2]) / denom
    else:
        sx, sy = cx, cy
    return sx - 0.5, sy - 0.5


def augment(image: RasterImage, spec: AugmentationSpec) -> RasterImage:
    """Seeded perspective jitter then crop-and-resize, bilinear, differentiable."""
    if spec.is_identity:
        return image
    sx, sy = _augment_coords(spec, image.width)
    out = _bilinear_gather(image.pixels, sx, sy)
    return RasterImage(image.width, image.height, np.clip(out, 0.0, 1.0))


def augment_backward(spec: AugmentationSpec, upstream: np.ndarray, size: int) -> np.ndarray:
    """Push a gradient on the augmented image back to the source image."""
    up = np.asarray(upstream, dtype=np.float64)
    if spec.is_identity:
        return up.copy()
    sx, sy = _augment_coords(spec, size)
    return _bilinear_scatter((size, size), sx, sy, up)
