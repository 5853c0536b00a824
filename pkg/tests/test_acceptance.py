"""Acceptance gate: one test per release criterion, each at its stated
tolerance, printing one PASS line on success (run with `pytest -s` to see
them inline). Everything here runs against the primary package only — no
external service is required."""

import json
import math
import time

import numpy as np
import pytest

import wordmorph
from wordmorph.bezier import (
    GlyphPath,
    WordLayout,
    contour_edges,
    gather_points,
    scatter_points,
    subdivide_to_budget,
)
from wordmorph.features import BuiltinFilterBankExtractor, ocr_loss
from wordmorph.fonts import load_glyph_outlines
from wordmorph.losses import LossWeights, total_gradient
from wordmorph.optim import RunConfig, RunTrace, run
from wordmorph.raster import (
    AugmentationSpec,
    RasterImage,
    augment,
    render,
    render_gradient,
)
from wordmorph.regions import RegionCandidate, enumerate_regions, finalize_scores, select_region
from wordmorph.scorer import (
    MockSdsScorer,
    ScorerProtocolError,
    ScorerRequest,
    ScorerTransportError,
    request,
)
from wordmorph.svgio import export_svg, load_svg
from wordmorph.triangulate import acap_loss, triangulate

from conftest import annulus_for, circle_raster, random_blob_glyph, square_contour
from test_raster import oracle_coverage
from test_scorer import _FakeHttp, _FakeSession, _connerr, random_request, random_response
from test_scorer import assert_request_equal


def _ok(name: str):
    print(f"\nACCEPTANCE PASS: {name}")


# ---------------------------------------------------------------------------
# Criterion 1: gradient correctness, four paths, >= 20 random instances each


def test_gradient_correctness_fd():
    t_start = time.time()
    rng = np.random.default_rng(2024)

    # render_gradient vs FD, 20 random smooth instances, 5e-2 relative
    h = 1e-3
    for _ in range(20):
        g = random_blob_glyph(rng)
        word = WordLayout([g])
        grads = render_gradient(word, 64, np.ones((64, 64)))
        contour = g.contours[0]
        for _ in range(3):
            pi = int(rng.integers(contour.shape[0]))
            ci = int(rng.integers(2))
            p = contour.copy()
            p[pi, ci] += h
            fp = render(WordLayout([GlyphPath([p])]), 64).pixels.sum()
            p = contour.copy()
            p[pi, ci] -= h
            fm = render(WordLayout([GlyphPath([p])]), 64).pixels.sum()
            fd = (fp - fm) / (2 * h)
            an = grads[0][pi, ci]
            assert abs(fd - an) <= 5e-2 * max(abs(fd), abs(an), 1e-4)

    # acap gradient vs FD, 1e-4 relative
    for _ in range(20):
        pts = rng.uniform(0, 100, (8, 2))
        T = triangulate(pts)
        cur = T.points + rng.normal(0, 3, pts.shape)
        _, grad = acap_loss(T, cur)
        for _ in range(3):
            pi = int(rng.integers(8))
            ci = int(rng.integers(2))
            xp = cur.copy()
            xp[pi, ci] += 1e-5
            xm = cur.copy()
            xm[pi, ci] -= 1e-5
            fd = (acap_loss(T, xp)[0] - acap_loss(T, xm)[0]) / 2e-5
            an = grad[pi, ci]
            assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-9)

    # builtin ocr gradient vs FD, 5e-2 relative (module tests assert 1e-3)
    ext = BuiltinFilterBankExtractor()
    for _ in range(20):
        orig = RasterImage(32, 32, rng.uniform(0, 1, (32, 32)))
        cur = rng.uniform(0, 1, (32, 32))
        _, grad = ocr_loss(orig, RasterImage(32, 32, cur), ext)
        for _ in range(3):
            i, j = int(rng.integers(32)), int(rng.integers(32))
            xp = cur.copy()
            xp[i, j] += 1e-5
            xm = cur.copy()
            xm[i, j] -= 1e-5
            fd = (
                ocr_loss(orig, RasterImage(32, 32, xp), ext)[0]
                - ocr_loss(orig, RasterImage(32, 32, xm), ext)[0]
            ) / 2e-5
            assert abs(fd - grad[i, j]) <= 5e-2 * max(abs(fd), abs(grad[i, j]), 1e-8)

    # full chained total_gradient with the mock scorer vs FD, 5e-2 relative
    size = 48
    for _ in range(20):
        g = random_blob_glyph(rng)
        word = WordLayout([g])
        idxs = [0]
        pts0 = gather_points(word, idxs)
        reference = triangulate(pts0, contour_edges(word, idxs))
        original = render(word, size)
        target = circle_raster(size, rng.uniform(18, 30), rng.uniform(18, 30), rng.uniform(8, 16))
        scorer = MockSdsScorer(target)
        aug = AugmentationSpec(
            seed=int(rng.integers(1 << 30)), perspective_jitter=0.05, crop_fraction=0.9
        )
        weights = LossWeights(1.0, 0.5, 0.5)
        tgt_guidance = target.to_guidance()

        def scalar_loss(points):
            w = scatter_points(word, idxs, points)
            img = render(w, size)
            sds = float(
                np.sum((augment(img, aug).to_guidance() - tgt_guidance) ** 2) / (size * size)
            )
            return (
                weights.sds_weight * sds
                + weights.ocr_weight * ocr_loss(original, img, ext)[0]
                + weights.acap_weight * acap_loss(reference, points)[0]
            )

        grad, _ = total_gradient(
            word, (1, 1), weights, scorer, reference, original, aug, "p", ext
        )
        for _ in range(2):
            pi = int(rng.integers(pts0.shape[0]))
            ci = int(rng.integers(2))
            xp = pts0.copy()
            xp[pi, ci] += h
            xm = pts0.copy()
            xm[pi, ci] -= h
            fd = (scalar_loss(xp) - scalar_loss(xm)) / (2 * h)
            an = grad[pi, ci]
            assert abs(fd - an) <= 5e-2 * max(abs(fd), abs(an), 1e-4)

    elapsed = time.time() - t_start
    assert elapsed < 120.0, f"gradient correctness took {elapsed:.0f}s (budget 2 min)"
    _ok(f"gradient correctness (4 paths x >=20 instances, {elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# Criterion 2: ACAP invariances


def test_acap_invariances():
    rng = np.random.default_rng(7)
    pts = rng.uniform(0, 100, (12, 2))
    T = triangulate(pts)
    for theta, scale, t in [(0.3, 1.0, (0, 0)), (0.0, 3.7, (5, -2)), (2.1, 0.25, (100, 40))]:
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        moved = (T.points @ R.T) * scale + np.asarray(t, dtype=float)
        loss, _ = acap_loss(T, moved)
        assert loss <= 1e-10
    for _ in range(10):
        d = rng.normal(size=pts.shape)
        d = d / np.linalg.norm(d) * rng.uniform(0.1, 2.0)
        loss, _ = acap_loss(T, T.points + d)
        assert loss > 0.0
    _ok("deformation loss: similarity-invariant (<=1e-10), positive off-manifold")


# ---------------------------------------------------------------------------
# Criterion 3: subdivision and SVG round-trip render identity


def test_subdivision_and_svg_roundtrip(dejavu, tmp_path):
    word = load_glyph_outlines(dejavu, "BIRD")
    size = 96
    base = render(word, size).pixels

    sub = word.replace_glyphs(
        {i: subdivide_to_budget(g, 2 * g.point_count) for i, g in enumerate(word.glyphs)}
    )
    after = render(sub, size).pixels
    assert np.abs(base - after).max() <= 1e-6

    p = tmp_path / "w.svg"
    export_svg(sub, p)
    back = load_svg(p)
    again = render(back, size).pixels
    assert np.abs(after - again).max() <= 1e-6

    rng = np.random.default_rng(3)
    for _ in range(5):
        g = random_blob_glyph(rng)
        w = WordLayout([g])
        a = render(w, 64).pixels
        b = render(WordLayout([subdivide_to_budget(g, 2 * g.point_count)]), 64).pixels
        assert np.abs(a - b).max() <= 1e-6
    _ok("subdivision & SVG round-trip renders agree within 1e-6/pixel")


# ---------------------------------------------------------------------------
# Criterion 4: even-odd correctness vs supersampled oracle


def test_even_odd_vs_oracle():
    size = 128
    # nested contours (hole)
    g = GlyphPath([square_contour(100, 100, 500, 500), square_contour(200, 200, 400, 400)])
    w = WordLayout([g])
    img = render(w, size)
    assert img.pixels[size // 2, size // 2] == 0.0
    oracle = oracle_coverage(w, size)
    assert abs(img.pixels.sum() - oracle.sum()) <= 0.02 * oracle.sum()

    # self-intersecting star: central pentagon is parity-empty
    ang = -np.pi / 2 + np.arange(5) * (4 * np.pi / 5)
    verts = [(300 + 230 * np.cos(a), 300 + 230 * np.sin(a)) for a in ang]
    from conftest import polygon_contour

    star = WordLayout([GlyphPath([polygon_contour(verts)])])
    simg = render(star, size)
    assert simg.pixels[size // 2, size // 2] == 0.0
    soracle = oracle_coverage(star, size)
    assert abs(simg.pixels.sum() - soracle.sum()) <= 0.02 * soracle.sum()
    _ok("even-odd coverage matches 16x-supersampled oracle within 2% area")


# ---------------------------------------------------------------------------
# Criterion 5: region selection counts, endpoints, determinism


def test_region_selection_contracts():
    for n in range(1, 7):
        assert len(enumerate_regions(n)) == n * (n + 1) // 2

    rng = np.random.default_rng(1)
    cands = [
        RegionCandidate(i, j, raw_readability=float(rng.uniform()), raw_clip=float(rng.uniform()))
        for i in range(1, 5)
        for j in range(i, 5)
    ]
    by_read = select_region(finalize_scores(cands, lam=1.0))
    assert by_read.raw_readability == max(c.raw_readability for c in cands)
    by_clip = select_region(finalize_scores(cands, lam=0.0))
    assert by_clip.raw_clip == max(c.raw_clip for c in cands)

    scored = finalize_scores(cands, lam=0.5)
    expect = select_region(scored)
    for _ in range(20):
        perm = list(scored)
        rng.shuffle(perm)
        got = select_region(perm)
        assert (got.start, got.end) == (expect.start, expect.end)
    _ok("region selection: n(n+1)/2 candidates, lambda endpoints, permutation-invariant")


# ---------------------------------------------------------------------------
# Criterion 6: end-to-end convergence, 500 iterations at 256x256


@pytest.fixture(scope="module")
def convergence_runs(dejavu):
    size = 256
    word = load_glyph_outlines(dejavu, "O")
    target = annulus_for(word, size)
    scorer = MockSdsScorer(target)

    def cfg(weights):
        return RunConfig(
            iterations=500, seed=11, canvas=size, base_lr=0.7,
            augment_enabled=False, checkpoint_interval=0,
            weights=weights,
        )

    t0 = time.time()
    final_a, trace_a = run(word, (1, 1), "a circle", cfg(LossWeights(1.0, 0.5, 0.5)), scorer)
    main_seconds = time.time() - t0
    final_b, trace_b = run(word, (1, 1), "a circle", cfg(LossWeights(1.0, 0.5, 0.5)), scorer)
    final_abl, trace_abl = run(word, (1, 1), "a circle", cfg(LossWeights(1.0, 0.0, 0.5)), scorer)
    return dict(
        word=word, size=size,
        final_a=final_a, trace_a=trace_a,
        final_b=final_b, trace_b=trace_b,
        final_abl=final_abl, trace_abl=trace_abl,
        main_seconds=main_seconds,
    )


def test_convergence_halves_total_loss(convergence_runs):
    tot = convergence_runs["trace_a"].totals()
    assert len(tot) == 500
    assert tot[-1] < 0.5 * tot[0], f"final {tot[-1]:.4f} vs initial {tot[0]:.4f}"
    ma = np.convolve(tot, np.ones(20) / 20, "valid")
    assert np.all(np.diff(ma) <= 1e-6), "smoothed trace must be non-increasing"
    _ok(
        f"end-to-end convergence: total {tot[0]:.4f} -> {tot[-1]:.4f} "
        f"(ratio {tot[-1] / tot[0]:.3f}), smoothed trace monotone"
    )


def test_ocr_term_protects_readability(convergence_runs):
    l_with = convergence_runs["trace_a"].rows[-1].l_ocr
    l_without = convergence_runs["trace_abl"].rows[-1].l_ocr
    # readability (-L_OCR) degrades strictly less when the OCR term is active
    assert l_with < l_without, f"with-OCR {l_with:.5f} !< ablation {l_without:.5f}"
    _ok(f"readability protection: L_OCR {l_with:.5f} (with) < {l_without:.5f} (ablation)")


def test_convergence_reproducible_byte_identical(convergence_runs):
    a, b = convergence_runs["final_a"], convergence_runs["final_b"]
    for ga, gb in zip(a.glyphs, b.glyphs):
        for ca, cb in zip(ga.contours, gb.contours):
            assert np.array_equal(ca, cb)
    assert convergence_runs["trace_a"].totals().tolist() == convergence_runs[
        "trace_b"
    ].totals().tolist()
    _ok("two seeded 500-iteration runs are byte-identical")


def test_convergence_runtime_budget(convergence_runs):
    seconds = convergence_runs["main_seconds"]
    assert seconds < 600.0, f"500 iterations took {seconds:.0f}s (budget 10 min)"
    _ok(f"500 iterations at 256x256 in {seconds:.0f}s (< 10 min)")


# ---------------------------------------------------------------------------
# Criterion 7: weight scheme read back from the trace header


def test_weight_scheme_in_trace_header(dejavu, tmp_path):
    word = load_glyph_outlines(dejavu, "BIRD")
    size = 64
    target = annulus_for(word, size)
    cfg = RunConfig(
        iterations=2, seed=0, canvas=size, augment_enabled=False,
        checkpoint_interval=0, output_dir=str(tmp_path),
    )
    # three-letter region, default weights
    run(word, (1, 3), "a circle", cfg, MockSdsScorer(target))
    trace = RunTrace.load_tsv(tmp_path / "trace.tsv")
    assert float(trace.header["ocr_weight"]) == pytest.approx(1.5)  # 0.5 * 3
    assert float(trace.header["acap_weight"]) == pytest.approx(0.5)
    _ok("applied weights for a 3-letter region: ocr 1.5, conformal 0.5 (trace header)")


# ---------------------------------------------------------------------------
# Criterion 8: protocol round-trip and retry/timeout behavior


def test_protocol_roundtrip_and_retries():
    rng = np.random.default_rng(99)
    from wordmorph.scorer import (
        decode_request,
        decode_response,
        encode_request,
        encode_response,
    )

    for _ in range(500):
        req = random_request(rng)
        assert_request_equal(decode_request(json.loads(json.dumps(encode_request(req)))), req)
    for _ in range(500):
        resp = random_response(rng)
        back = decode_response(json.loads(json.dumps(encode_response(resp))))
        assert back.id == resp.id

    req = ScorerRequest(kind="concepts", prompt="x")
    sess = _FakeSession([_connerr()] * 10)
    sleeps = []
    with pytest.raises(ScorerTransportError):
        request("http://h/v1/score", req, timeout=9.5, retries=2, session=sess,
                _sleep=sleeps.append)
    assert sess.calls == 3
    assert sleeps == [0.5, 1.0]

    sess2 = _FakeSession([_FakeHttp(200, {"id": req.id, "error": "nope"})])
    with pytest.raises(ScorerProtocolError):
        request("http://h/v1/score", req, retries=5, session=sess2, _sleep=lambda s: None)
    assert sess2.calls == 1
    _ok("protocol: 1000-message round-trip identity, retry/backoff/no-retry rules")
