import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wordmorph.bezier import GlyphPath, WordLayout, contour_edges, gather_points
from wordmorph.fonts import load_glyph_outlines
from wordmorph.triangulate import (
    TriangulationError,
    acap_loss,
    triangle_angles,
    triangulate,
)

from conftest import fd_check, square_contour


def _edge_set(tris):
    edges = set()
    for t in tris:
        for i in range(3):
            edges.add(frozenset((int(t[i]), int(t[(i + 1) % 3]))))
    return edges


def test_equilateral_single_triangle():
    pts = np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
    T = triangulate(pts)
    assert len(T.triangle_indices) == 1
    np.testing.assert_allclose(T.angles_per_triangle(), np.pi / 3, atol=1e-12)
    assert all(len(a) == 1 for a in T.reference_angles)


def test_unit_square_two_triangles_angle_multiset():
    T = triangulate(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float))
    assert len(T.triangle_indices) == 2
    angles = np.sort(T.angles_per_triangle().ravel())
    expect = np.sort([np.pi / 2, np.pi / 4, np.pi / 4] * 2)
    np.testing.assert_allclose(angles, expect, atol=1e-9)


def test_collinear_rejected():
    with pytest.raises(TriangulationError):
        triangulate(np.array([[0, 0], [1, 1], [2, 2]], dtype=float))


def test_too_few_points():
    with pytest.raises(TriangulationError):
        triangulate(np.array([[0, 0], [1, 0]], dtype=float))


def test_duplicate_points_jittered_with_warning():
    pts = np.array([[0, 0], [0, 0], [1, 0], [0, 1]], dtype=float)
    with pytest.warns(UserWarning, match="duplicate"):
        T = triangulate(pts)
    assert T.points.shape == (4, 2)
    d = np.linalg.norm(T.points[0] - T.points[1])
    assert 1e-9 < d <= 2.1e-6


def test_constrained_edge_recovered():
    # square + center point nudged so the natural diagonal is (1, 3); force (0, 2)
    pts = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=float)
    T = triangulate(pts, [(0, 2)])
    assert frozenset((0, 2)) in _edge_set(T.triangle_indices)
    T2 = triangulate(pts, [(1, 3)])
    assert frozenset((1, 3)) in _edge_set(T2.triangle_indices)


def test_crossing_constraint_reported():
    pts = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=float)
    with pytest.raises(TriangulationError):
        triangulate(pts, [(0, 2), (1, 3)])  # both diagonals cross


def test_angle_sums_are_pi():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 100, (40, 2))
    T = triangulate(pts)
    sums = T.angles_per_triangle().sum(axis=1)
    np.testing.assert_allclose(sums, np.pi, atol=1e-9)
    for a in T.angles_per_triangle().ravel():
        assert 0.0 < a < np.pi


def test_glyph_contour_edges_all_constrained(dejavu):
    word = load_glyph_outlines(dejavu, "B")
    pts = gather_points(word, [0])
    edges = contour_edges(word, [0])
    T = triangulate(pts, edges)
    present = _edge_set(T.triangle_indices)
    for a, b in edges:
        assert frozenset((int(a), int(b))) in present


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_empty_circumcircle_property(seed):
    # brute force: no point strictly inside any triangle's circumcircle
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 100, (14, 2))
    T = triangulate(pts)
    P = T.points
    for tri in T.triangle_indices:
        a, b, c = P[tri[0]], P[tri[1]], P[tri[2]]
        # circumcenter via perpendicular bisectors
        d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        ux = (
            (a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1]) + (c @ c) * (a[1] - b[1])
        ) / d
        uy = (
            (a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0]) + (c @ c) * (b[0] - a[0])
        ) / d
        center = np.array([ux, uy])
        r = np.linalg.norm(a - center)
        dists = np.linalg.norm(P - center, axis=1)
        inside = dists < r - 1e-7 * max(r, 1.0)
        inside[tri] = False
        assert not inside.any()


class TestAcap:
    def test_identity_zero(self):
        pts = np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
        T = triangulate(pts)
        loss, grad = acap_loss(T, pts)
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_similarity_invariance_exact(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(0, 50, (10, 2))
        T = triangulate(pts)
        th = 0.5
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        moved = (T.points @ R.T) * 2.0 + np.array([5.0, 7.0])
        loss, _ = acap_loss(T, moved)
        assert loss <= 1e-10

    @settings(max_examples=20, deadline=None)
    @given(
        st.floats(-np.pi, np.pi),
        st.floats(0.1, 10.0),
        st.floats(-1000, 1000),
        st.floats(-1000, 1000),
    )
    def test_similarity_invariance_property(self, theta, scale, tx, ty):
        rng = np.random.default_rng(7)
        pts = rng.uniform(0, 100, (8, 2))
        T = triangulate(pts)
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        moved = (T.points @ R.T) * scale + np.array([tx, ty])
        loss, _ = acap_loss(T, moved)
        assert loss <= 1e-10

    def test_hand_computed_equilateral_to_right_isoceles(self):
        # independent scalar computation: reference angles all pi/3; current
        # angles (pi/2, pi/4, pi/4); mean over k=3 points of squared deviation
        ref = np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
        T = triangulate(ref)
        cur = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
        expected = ((np.pi / 2 - np.pi / 3) ** 2 + 2 * (np.pi / 4 - np.pi / 3) ** 2) / 3
        loss, _ = acap_loss(T, cur)
        assert loss == pytest.approx(expected, rel=1e-12)
        assert loss == pytest.approx(np.pi**2 / 72, rel=1e-12)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            pts = rng.uniform(0, 100, (9, 2))
            T = triangulate(pts)
            cur = T.points + rng.normal(0, 4, pts.shape)
            _, grad = acap_loss(T, cur)

            def f(x):
                return acap_loss(T, x)[0]

            fd_check(f, cur, grad, h=1e-5, rtol=1e-4)

    def test_positive_under_nonconformal(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 100, (10, 2))
        T = triangulate(pts)
        direction = rng.normal(size=pts.shape)
        direction /= np.linalg.norm(direction)
        loss, _ = acap_loss(T, T.points + 0.5 * direction)
        assert loss > 0.0

    def test_degenerate_flagged(self):
        ref = np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
        T = triangulate(ref)
        flat = np.array([[0, 0], [1, 0], [0.5, 1e-12]])  # collapsed triangle
        diag = {}
        loss, grad = acap_loss(T, flat, diagnostics=diag)
        assert diag["degenerate_angles"] > 0
        assert np.all(np.isfinite(grad))

    def test_cardinality_mismatch(self):
        ref = np.array([[0, 0], [1, 0], [0.5, 0.9]])
        T = triangulate(ref)
        with pytest.raises(ValueError):
            acap_loss(T, np.zeros((4, 2)))


def test_triangle_angles_orientation_free():
    pts = np.array([[0, 0], [4, 0], [0, 3]], dtype=float)
    cw = np.array([[0, 2, 1]])
    ccw = np.array([[0, 1, 2]])
    np.testing.assert_allclose(
        np.sort(triangle_angles(pts, cw)), np.sort(triangle_angles(pts, ccw)), atol=1e-12
    )
