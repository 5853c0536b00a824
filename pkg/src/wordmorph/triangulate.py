"""Constrained Delaunay triangulation and the angle-based deformation loss.

The unconstrained triangulation comes from qhull (scipy); constrained contour
edges are then recovered by removing the triangles a missing edge crosses and
retriangulating the two resulting pseudo-polygons with the classic recursive
Delaunay criterion. The deformation loss compares per-vertex triangle angles
against the reference configuration; it is exactly zero under any similarity
transform of the reference points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError

DUPLICATE_EPS = 1e-9
JITTER = 1e-6
DEGENERATE_ANGLE = 1e-7


class TriangulationError(Exception):
    pass


@dataclass
class TriangulationAngles:
    """Reference angles {alpha_j^i} per control point plus fixed connectivity."""

    points: np.ndarray  # (N, 2) reference positions
    triangle_indices: np.ndarray  # (T, 3) CCW vertex indices
    reference_angles: list[np.ndarray]  # per point j: angles at j, one per incident tri
    constrained_edges: np.ndarray  # (E, 2) vertex index pairs

    @property
    def point_count(self) -> int:
        return self.points.shape[0]

    def angles_per_triangle(self) -> np.ndarray:
        return triangle_angles(self.points, self.triangle_indices)


def _orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    return float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _segments_cross(p: np.ndarray, q: np.ndarray, a: np.ndarray, b: np.ndarray) -> bool:
    """Proper crossing of open segments pq and ab."""
    d1 = _orient(p, q, a)
    d2 = _orient(p, q, b)
    d3 = _orient(a, b, p)
    d4 = _orient(a, b, q)
    return (d1 * d2 < 0.0) and (d3 * d4 < 0.0)


def _in_circumcircle(a, b, c, d) -> bool:
    """d strictly inside the circumcircle of CCW triangle abc."""
    m = np.array(
        [
            [a[0] - d[0], a[1] - d[1], (a[0] - d[0]) ** 2 + (a[1] - d[1]) ** 2],
            [b[0] - d[0], b[1] - d[1], (b[0] - d[0]) ** 2 + (b[1] - d[1]) ** 2],
            [c[0] - d[0], c[1] - d[1], (c[0] - d[0]) ** 2 + (c[1] - d[1]) ** 2],
        ]
    )
    return float(np.linalg.det(m)) > 1e-12


def dedupe_points(points: np.ndarray) -> np.ndarray:
    """Perturb points that coincide within DUPLICATE_EPS by a deterministic
    JITTER-sized offset, warning once per call. Collision lookup checks the
    3x3 neighborhood of the quantized cell so near-duplicates straddling a
    cell boundary are caught too."""
    pts = np.array(points, dtype=np.float64)
    cell = 2.0 * DUPLICATE_EPS
    seen: dict[tuple, list[int]] = {}
    bumped = 0

    def collides(i: int) -> bool:
        cx, cy = int(np.floor(pts[i, 0] / cell)), int(np.floor(pts[i, 1] / cell))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for j in seen.get((cx + dx, cy + dy), ()):
                    if np.hypot(*(pts[i] - pts[j])) < DUPLICATE_EPS:
                        return True
        return False

    for i in range(pts.shape[0]):
        k = 0
        while collides(i):
            k += 1
            ang = 2.399963229728653 * k  # golden-angle spiral, deterministic
            pts[i, 0] += JITTER * np.cos(ang)
            pts[i, 1] += JITTER * np.sin(ang)
            bumped += 1
        key = (int(np.floor(pts[i, 0] / cell)), int(np.floor(pts[i, 1] / cell)))
        seen.setdefault(key, []).append(i)
    if bumped:
        warnings.warn(
            f"{bumped} duplicate point(s) perturbed by {JITTER}", stacklevel=3
        )
    return pts


class _Mesh:
    """Mutable triangle soup with edge adjacency for constraint recovery."""

    def __init__(self, points: np.ndarray, triangles: np.ndarray):
        self.points = points
        self.tris: list[tuple[int, int, int] | None] = []
        self.edge_map: dict[frozenset, set[int]] = {}
        self.constrained: set[frozenset] = set()
        for t in triangles:
            self.add(tuple(int(v) for v in t))

    def add(self, tri: tuple[int, int, int]) -> int:
        a, b, c = tri
        if _orient(self.points[a], self.points[b], self.points[c]) < 0:
            tri = (a, c, b)
        tid = len(self.tris)
        self.tris.append(tri)
        for e in _tri_edges(tri):
            self.edge_map.setdefault(e, set()).add(tid)
        return tid

    def remove(self, tid: int) -> None:
        tri = self.tris[tid]
        for e in _tri_edges(tri):
            self.edge_map[e].discard(tid)
        self.tris[tid] = None

    def live_triangles(self) -> np.ndarray:
        return np.array([t for t in self.tris if t is not None], dtype=np.int64)

    def has_edge(self, a: int, b: int) -> bool:
        return bool(self.edge_map.get(frozenset((a, b))))


def _tri_edges(tri):
    a, b, c = tri
    return (frozenset((a, b)), frozenset((b, c)), frozenset((c, a)))


def _find_entry_triangle(mesh: _Mesh, a: int, b: int) -> tuple[int, tuple[int, int]]:
    """Triangle incident to `a` whose opposite edge properly crosses segment ab."""
    pa, pb = mesh.points[a], mesh.points[b]
    for tid, tri in enumerate(mesh.tris):
        if tri is None or a not in tri:
            continue
        others = [v for v in tri if v != a]
        u, v = others
        if _segments_cross(pa, pb, mesh.points[u], mesh.points[v]):
            return tid, (u, v)
    raise TriangulationError(
        f"cannot recover constrained edge ({a}, {b}): no crossing path "
        "(crossing constraints or a point exactly on the segment?)"
    )


def _retriangulate_pseudo(mesh: _Mesh, chain: list[int]) -> None:
    """Recursive Delaunay triangulation of a pseudo-polygon chain whose first
    and last vertices bound the freshly inserted constrained edge."""
    if len(chain) < 3:
        return
    a, b = chain[0], chain[-1]
    interior = chain[1:-1]
    if len(interior) == 1:
        mesh.add((a, interior[0], b))
        return
    pa, pb = mesh.points[a], mesh.points[b]
    best = 0
    for ci, c in enumerate(interior):
        pc = mesh.points[c]
        ccw = _orient(pa, pc, pb) > 0
        ok = True
        for d in interior:
            if d == c:
                continue
            if ccw:
                inside = _in_circumcircle(pa, pc, pb, mesh.points[d])
            else:
                inside = _in_circumcircle(pa, pb, pc, mesh.points[d])
            if inside:
                ok = False
                break
        if ok:
            best = ci
            break
    c = interior[best]
    mesh.add((a, c, b))
    _retriangulate_pseudo(mesh, chain[: best + 2])
    _retriangulate_pseudo(mesh, chain[best + 1 :])


def _insert_constraint(mesh: _Mesh, a: int, b: int) -> None:
    if a == b:
        raise TriangulationError(f"degenerate constrained edge ({a}, {a})")
    if mesh.has_edge(a, b):
        mesh.constrained.add(frozenset((a, b)))
        return
    pa, pb = mesh.points[a], mesh.points[b]
    tid, (u, v) = _find_entry_triangle(mesh, a, b)

    def side(vi: int) -> float:
        return _orient(pa, pb, mesh.points[vi])

    upper = [vi for vi in (u, v) if side(vi) > 0]
    lower = [vi for vi in (u, v) if side(vi) < 0]
    crossed = [tid]
    edge = (u, v)
    while True:
        if frozenset(edge) in mesh.constrained:
            raise TriangulationError(
                f"constrained edge ({a}, {b}) crosses constrained edge {tuple(edge)}"
            )
        nxt = mesh.edge_map[frozenset(edge)] - set(crossed)
        if not nxt:
            raise TriangulationError(
                f"walk failed recovering ({a}, {b}); crossing constraints?"
            )
        tid = nxt.pop()
        crossed.append(tid)
        tri = mesh.tris[tid]
        w = next(vi for vi in tri if vi not in edge)
        if w == b:
            break
        s = side(w)
        if s > 0:
            upper.append(w)
            edge = (w, edge[0] if side(edge[0]) < 0 else edge[1])
        elif s < 0:
            lower.append(w)
            edge = (edge[0] if side(edge[0]) > 0 else edge[1], w)
        else:
            raise TriangulationError(
                f"point {w} lies exactly on constrained edge ({a}, {b})"
            )
    for tid in crossed:
        mesh.remove(tid)
    _retriangulate_pseudo(mesh, [a] + upper + [b])
    _retriangulate_pseudo(mesh, [a] + lower + [b])
    mesh.constrained.add(frozenset((a, b)))


def triangulate(
    points: np.ndarray, constrained_edges: list[tuple[int, int]] | np.ndarray = ()
) -> TriangulationAngles:
    """Constrained Delaunay triangulation with reference angles.

    Duplicate points (within 1e-9) are jittered by 1e-6 with a warning; fully
    collinear input raises TriangulationError.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must be (N, 2), got {pts.shape}")
    if pts.shape[0] < 3:
        raise TriangulationError("need at least 3 points")
    if not np.all(np.isfinite(pts)):
        raise TriangulationError("non-finite points")
    pts = dedupe_points(pts)
    try:
        dt = Delaunay(pts)
    except QhullError as exc:
        raise TriangulationError(f"degenerate point set (all collinear?): {exc}") from exc
    if dt.simplices.size == 0:
        raise TriangulationError("degenerate point set (all collinear?)")

    mesh = _Mesh(pts, dt.simplices)
    edges = [(int(a), int(b)) for a, b in np.asarray(constrained_edges, dtype=np.int64).reshape(-1, 2)]
    for a, b in edges:
        _insert_constraint(mesh, a, b)
    for a, b in edges:
        if not mesh.has_edge(a, b):
            raise TriangulationError(f"constrained edge ({a}, {b}) not recovered")

    tris = mesh.live_triangles()
    angles = triangle_angles(pts, tris)
    per_point: list[list[float]] = [[] for _ in range(pts.shape[0])]
    for t in range(tris.shape[0]):
        for c in range(3):
            per_point[tris[t, c]].append(angles[t, c])
    return TriangulationAngles(
        points=pts,
        triangle_indices=tris,
        reference_angles=[np.asarray(a) for a in per_point],
        constrained_edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
    )


def triangle_angles(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Interior angles (T, 3); entry [t, c] is the angle at vertex tris[t, c]."""
    p = points[tris]  # (T, 3, 2)
    out = np.empty((tris.shape[0], 3), dtype=np.float64)
    for c in range(3):
        a = p[:, c]
        b = p[:, (c + 1) % 3]
        d = p[:, (c + 2) % 3]
        u = b - a
        v = d - a
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        dot = np.einsum("ij,ij->i", u, v)
        out[:, c] = np.arctan2(cross, dot)
    return out


def acap_loss(
    reference: TriangulationAngles,
    current_points: np.ndarray,
    diagnostics: dict | None = None,
) -> tuple[float, np.ndarray]:
    """Mean squared angle deviation from the reference triangulation and its
    exact gradient with respect to the current point positions.

    Degenerate triangles in the current configuration (an angle collapsing
    below DEGENERATE_ANGLE) have the cross term clamped; the count is reported
    through `diagnostics` when given.
    """
    pts = np.asarray(current_points, dtype=np.float64)
    if pts.shape != reference.points.shape:
        raise ValueError(
            f"current points {pts.shape} must match reference {reference.points.shape}"
        )
    tris = reference.triangle_indices
    ref = reference.angles_per_triangle()
    k = reference.point_count

    p = pts[tris]  # (T, 3, 2)
    grad = np.zeros_like(pts)
    loss = 0.0
    degenerate = 0
    for c in range(3):
        ia = tris[:, c]
        ib = tris[:, (c + 1) % 3]
        ic = tris[:, (c + 2) % 3]
        a = p[:, c]
        u = p[:, (c + 1) % 3] - a
        v = p[:, (c + 2) % 3] - a
        z = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        az = np.abs(z)
        dot = np.einsum("ij,ij->i", u, v)
        norm2 = az * az + dot * dot
        small = az < DEGENERATE_ANGLE
        degenerate += int(np.count_nonzero(small))
        az_c = np.where(small, DEGENERATE_ANGLE, az)
        alpha = np.arctan2(az_c, dot)
        diff = alpha - ref[:, c]
        loss += float(np.sum(diff * diff))

        s = np.where(z >= 0.0, 1.0, -1.0)
        norm2 = np.maximum(az_c * az_c + dot * dot, 1e-300)
        # d alpha = (dot * d|z| - |z| * d dot) / (z^2 + dot^2)
        dz_du = np.stack([v[:, 1], -v[:, 0]], axis=1) * s[:, None]
        dz_dv = np.stack([-u[:, 1], u[:, 0]], axis=1) * s[:, None]
        coeff = (2.0 / k) * diff / norm2
        da_du = coeff[:, None] * (dot[:, None] * dz_du - az_c[:, None] * v)
        da_dv = coeff[:, None] * (dot[:, None] * dz_dv - az_c[:, None] * u)
        np.add.at(grad, ib, da_du)
        np.add.at(grad, ic, da_dv)
        np.add.at(grad, ia, -(da_du + da_dv))
    if diagnostics is not None:
        diagnostics["degenerate_angles"] = degenerate
    return loss / k, grad
