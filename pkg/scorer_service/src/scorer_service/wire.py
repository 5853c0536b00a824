"""Wire schema for /v1/score: pydantic request model and the float32 image codec.

This mirrors the client-side protocol exactly: one JSON document per request,
image payloads as base64 raw little-endian float32 with explicit shape, and a
response carrying exactly the field the request kind implies (or an error).
"""

from __future__ import annotations

import base64

import numpy as np
from pydantic import BaseModel, Field, model_validator

KINDS = ("sds-grad", "features", "clip-score", "font-embed", "concepts", "font-attrs")
_IMAGE_KINDS = {"sds-grad", "features", "clip-score", "font-embed"}
_PROMPT_KINDS = {"sds-grad", "clip-score", "concepts", "font-attrs", "font-embed"}


class WireError(ValueError):
    """Request-level protocol violation; reported as an error payload."""


class ImagePayload(BaseModel):
    w: int = Field(ge=1)
    h: int = Field(ge=1)
    c: int = Field(ge=1, le=4)
    data_b64: str

    def to_array(self) -> np.ndarray:
        raw = base64.b64decode(self.data_b64)
        expect = self.w * self.h * self.c * 4
        if len(raw) != expect:
            raise WireError(
                f"image payload is {len(raw)} bytes, expected {expect} "
                f"for {self.h}x{self.w}x{self.c}"
            )
        arr = np.frombuffer(raw, dtype="<f4").reshape(self.h, self.w, self.c)
        if not np.all(np.isfinite(arr)):
            raise WireError("non-finite floats in image payload")
        return arr.astype(np.float64)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImagePayload":
        a = np.ascontiguousarray(arr, dtype="<f4")
        if a.ndim == 2:
            a = a[:, :, None]
        h, w, c = a.shape
        return cls(w=w, h=h, c=c, data_b64=base64.b64encode(a.tobytes()).decode("ascii"))


class ScoreRequest(BaseModel):
    kind: str
    id: str = ""
    prompt: str | None = None
    image: ImagePayload | None = None
    reference: ImagePayload | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _check_kind_fields(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown request kind {self.kind!r}")
        has_image = self.image is not None
        has_prompt = self.prompt is not None
        if self.kind == "font-embed":
            if has_image == has_prompt:
                raise ValueError("font-embed takes exactly one of image or prompt")
        else:
            if has_image != (self.kind in _IMAGE_KINDS):
                raise ValueError(f"kind {self.kind}: image presence mismatch")
            if has_prompt != (self.kind in _PROMPT_KINDS and self.kind != "font-embed"):
                raise ValueError(f"kind {self.kind}: prompt presence mismatch")
        if self.reference is not None and self.kind != "features":
            raise ValueError("reference image only valid for kind=features")
        return self


def gradient_response(req_id: str, gradient: np.ndarray, features=None) -> dict:
    doc = {"id": req_id, "gradient": ImagePayload.from_array(gradient).model_dump()}
    if features is not None:
        doc["features"] = [float(x) for x in np.asarray(features).ravel()]
    return doc


def features_response(req_id: str, features: np.ndarray) -> dict:
    return {"id": req_id, "features": [float(x) for x in np.asarray(features).ravel()]}


def score_response(req_id: str, score: float) -> dict:
    return {"id": req_id, "score": float(score)}


def strings_response(req_id: str, strings: list[str]) -> dict:
    return {"id": req_id, "strings": [str(s) for s in strings]}


def error_response(req_id: str, message: str) -> dict:
    return {"id": req_id, "error": str(message)}
