"""Semantic direction-of-improvement smoke test.

Morphing the word "bird" toward its prompt for 500 iterations must raise the
service's own clip-score of the render by at least 0.02. This runs against the
synthetic backend end-to-end over HTTP; the same test against real model
weights runs whenever they are loadable and is skipped otherwise.
"""

import threading
import time
from pathlib import Path

import numpy as np
import pytest
import uvicorn

from wordmorph.fonts import load_glyph_outlines
from wordmorph.optim import RunConfig, run
from wordmorph.prompts import DEFAULT_SUFFIX
from wordmorph.raster import render
from wordmorph.scorer import HttpScorer, ScorerRequest

from scorer_service.app import create_app
from scorer_service.config import ServiceConfig


def _font_path() -> str:
    import matplotlib

    p = Path(matplotlib.__file__).parent / "mpl-data" / "fonts" / "ttf" / "DejaVuSans.ttf"
    if not p.exists():
        pytest.skip("no test font available")
    return str(p)


def _serve(config: ServiceConfig):
    server = uvicorn.Server(
        uvicorn.Config(create_app(config), host="127.0.0.1", port=0, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.05)
    port = server.servers[0].sockets[0].getsockname()[1]
    return server, thread, f"http://127.0.0.1:{port}/v1/score"


def _clip(scorer, image, prompt) -> float:
    return float(
        scorer.score(
            ScorerRequest(
                kind="clip-score",
                image=image.to_guidance().astype(np.float32),
                prompt=prompt,
            )
        ).score
    )


def _improvement(url: str, iterations: int = 500, size: int = 128) -> float:
    scorer = HttpScorer(url, timeout=60, retries=1)
    word = load_glyph_outlines(_font_path(), "bird")
    prompt = f"a bird. {DEFAULT_SUFFIX}"
    before = _clip(scorer, render(word, size), prompt)
    cfg = RunConfig(
        iterations=iterations, seed=3, canvas=size, augment_enabled=False,
        checkpoint_interval=0, trace_semantic_proxy=False,
    )
    final, _ = run(word, (1, len(word.glyphs)), prompt, cfg, scorer)
    after = _clip(scorer, render(final, size), prompt)
    return after - before


def test_semantic_smoke_synthetic_backend():
    server, thread, url = _serve(ServiceConfig())
    try:
        delta = _improvement(url)
        assert delta >= 0.02, f"clip-score improved by only {delta:.4f}"
        print(f"\nsynthetic smoke: clip-score improvement {delta:.4f}")
    finally:
        server.should_exit = True
        thread.join(timeout=5)


def test_semantic_smoke_real_models():
    config = ServiceConfig()
    config.backend = "real"
    try:
        from scorer_service.real import ModelLoadError, RealBackends

        backends = RealBackends(config)
        backends._load_clip("clip")  # probe weight availability up front
        backends._load_diffusion()
    except Exception as exc:  # noqa: BLE001 - offline environments
        pytest.skip(f"real model weights unavailable: {exc}")
    server, thread, url = _serve(config)
    try:
        delta = _improvement(url)
        assert delta >= 0.02, f"clip-score improved by only {delta:.4f}"
    finally:
        server.should_exit = True
        thread.join(timeout=5)
