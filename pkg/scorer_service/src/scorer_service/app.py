"""FastAPI application: one POST endpoint, request kinds dispatched to a backend."""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from .config import ServiceConfig
from .wire import (
    ScoreRequest,
    WireError,
    error_response,
    features_response,
    gradient_response,
    score_response,
    strings_response,
)


def make_backends(config: ServiceConfig):
    if config.backend == "synthetic":
        from .synthetic import SyntheticBackends

        return SyntheticBackends(config)
    if config.backend == "real":
        from .real import RealBackends

        return RealBackends(config)
    raise ValueError(f"unknown backend {config.backend!r}")


def create_app(config: ServiceConfig | None = None, backends=None) -> FastAPI:
    config = config or ServiceConfig()
    backends = backends or make_backends(config)
    app = FastAPI(title="scorer-service", version="0.1.0")
    app.state.config = config
    app.state.backends = backends

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "backend": backends.name}

    @app.post("/v1/score")
    async def score(request: Request):
        try:
            doc = await request.json()
        except Exception:
            return JSONResponse(error_response("", "request body is not JSON"))
        req_id = doc.get("id", "") if isinstance(doc, dict) else ""
        try:
            req = ScoreRequest.model_validate(doc)
        except (ValidationError, WireError) as exc:
            return JSONResponse(error_response(req_id, f"invalid request: {exc}"))
        try:
            return JSONResponse(_dispatch(backends, req))
        except WireError as exc:
            return JSONResponse(error_response(req.id, str(exc)))
        except Exception as exc:  # noqa: BLE001 - protocol boundary
            return JSONResponse(error_response(req.id, f"{type(exc).__name__}: {exc}"))

    return app


def _dispatch(backends, req: ScoreRequest) -> dict:
    if req.kind == "sds-grad":
        image = req.image.to_array()
        grad = backends.sds_grad(image, req.prompt, req.seed)
        _check_finite(grad)
        return gradient_response(req.id, grad)
    if req.kind == "features":
        image = req.image.to_array()
        if req.reference is not None:
            feats, grad = backends.features_gradient(image, req.reference.to_array())
            _check_finite(feats)
            _check_finite(grad)
            return gradient_response(req.id, grad, features=feats)
        feats = backends.features(image)
        _check_finite(feats)
        return features_response(req.id, feats)
    if req.kind == "clip-score":
        s = float(backends.clip_score(req.image.to_array(), req.prompt))
        if not np.isfinite(s):
            raise WireError("non-finite score")
        return score_response(req.id, s)
    if req.kind == "font-embed":
        if req.image is not None:
            vec = backends.font_embed_image(req.image.to_array())
        else:
            vec = backends.font_embed_text(req.prompt)
        _check_finite(vec)
        return features_response(req.id, vec)
    if req.kind == "concepts":
        return strings_response(req.id, backends.concepts(req.prompt, req.seed))
    if req.kind == "font-attrs":
        return strings_response(req.id, backends.font_attrs(req.prompt, req.seed))
    raise WireError(f"unhandled kind {req.kind!r}")


def _check_finite(arr) -> None:
    if not np.all(np.isfinite(arr)):
        raise WireError("backend produced non-finite floats")
