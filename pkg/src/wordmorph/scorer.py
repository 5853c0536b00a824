"""Wire protocol for external guidance services, plus in-process test scorers.

One JSON document per request against POST /v1/score. Image payloads are raw
little-endian float32, base64-embedded, with explicit shape:

    {"kind": "sds-grad", "id": "...", "prompt": "...", "seed": 0,
     "image": {"w": 512, "h": 512, "c": 3, "data_b64": "..."}}

Responses carry exactly the field the request kind implies (``gradient``,
``features``, ``score`` or ``strings``), or ``{"error": "message"}``.
``kind=features`` requests may carry an optional ``reference`` image, in which
case the response also holds the gradient of the feature-space MSE between
image and reference, taken w.r.t. the image.
"""

from __future__ import annotations

import base64
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
import requests as _requests

KINDS = ("sds-grad", "features", "clip-score", "font-embed", "concepts", "font-attrs")
_IMAGE_KINDS = ("sds-grad", "features", "clip-score", "font-embed")
_PROMPT_KINDS = ("sds-grad", "clip-score", "concepts", "font-attrs", "font-embed")

BACKOFF_BASE = 0.5


class ScorerError(Exception):
    """Base class for scorer-client failures."""


class ScorerTransportError(ScorerError):
    """Network-level failure; retriable."""


class ScorerProtocolError(ScorerError):
    """Server-reported error payload; never retried."""


class ScorerMalformedError(ScorerError):
    """Structurally invalid or non-finite response; never retried."""


@dataclass
class ScorerRequest:
    kind: str
    image: np.ndarray | None = None
    prompt: str | None = None
    seed: int = 0
    reference: np.ndarray | None = None
    id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown request kind {self.kind!r}")
        if self.image is not None:
            self.image = _as_image(self.image)
        if self.reference is not None:
            if self.kind != "features":
                raise ValueError("reference image only valid for kind=features")
            self.reference = _as_image(self.reference)
        has_image = self.image is not None
        has_prompt = self.prompt is not None
        if self.kind == "font-embed":
            if has_image == has_prompt:
                raise ValueError("font-embed takes exactly one of image or prompt")
        else:
            if has_image != (self.kind in _IMAGE_KINDS):
                raise ValueError(f"kind {self.kind} image presence mismatch")
            if has_prompt != (self.kind in _PROMPT_KINDS and self.kind != "font-embed"):
                raise ValueError(f"kind {self.kind} prompt presence mismatch")


@dataclass
class ScorerResponse:
    id: str = ""
    gradient: np.ndarray | None = None
    features: np.ndarray | None = None
    score: float | None = None
    strings: list[str] | None = None


def _as_image(arr) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float32)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"image must be HxWxC, got shape {a.shape}")
    return np.ascontiguousarray(a)


def encode_image(arr: np.ndarray) -> dict:
    a = _as_image(arr)
    h, w, c = a.shape
    return {
        "w": w,
        "h": h,
        "c": c,
        "data_b64": base64.b64encode(a.astype("<f4").tobytes()).decode("ascii"),
    }


def decode_image(obj: dict) -> np.ndarray:
    try:
        w, h, c = int(obj["w"]), int(obj["h"]), int(obj["c"])
        raw = base64.b64decode(obj["data_b64"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScorerMalformedError(f"bad image payload: {exc}") from exc
    expect = w * h * c * 4
    if len(raw) != expect:
        raise ScorerMalformedError(
            f"image payload is {len(raw)} bytes, expected {expect} for {h}x{w}x{c}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(h, w, c).copy()


def encode_request(req: ScorerRequest) -> dict:
    doc: dict = {"kind": req.kind, "id": req.id, "seed": int(req.seed)}
    if req.prompt is not None:
        doc["prompt"] = req.prompt
    if req.image is not None:
        doc["image"] = encode_image(req.image)
    if req.reference is not None:
        doc["reference"] = encode_image(req.reference)
    return doc


def decode_request(doc: dict) -> ScorerRequest:
    try:
        return ScorerRequest(
            kind=doc["kind"],
            image=decode_image(doc["image"]) if "image" in doc else None,
            prompt=doc.get("prompt"),
            seed=int(doc.get("seed", 0)),
            reference=decode_image(doc["reference"]) if "reference" in doc else None,
            id=doc.get("id", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScorerMalformedError(f"bad request document: {exc}") from exc


def encode_response(resp: ScorerResponse) -> dict:
    doc: dict = {"id": resp.id}
    if resp.gradient is not None:
        doc["gradient"] = encode_image(resp.gradient)
    if resp.features is not None:
        doc["features"] = [float(x) for x in np.asarray(resp.features).ravel()]
    if resp.score is not None:
        doc["score"] = float(resp.score)
    if resp.strings is not None:
        doc["strings"] = list(resp.strings)
    return doc


def decode_response(doc: dict) -> ScorerResponse:
    if not isinstance(doc, dict):
        raise ScorerMalformedError(f"response is not an object: {type(doc)}")
    if "error" in doc:
        raise ScorerProtocolError(str(doc["error"]))
    resp = ScorerResponse(
        id=doc.get("id", ""),
        gradient=decode_image(doc["gradient"]) if "gradient" in doc else None,
        features=(
            np.asarray(doc["features"], dtype=np.float64) if "features" in doc else None
        ),
        score=float(doc["score"]) if "score" in doc else None,
        strings=[str(s) for s in doc["strings"]] if "strings" in doc else None,
    )
    for name, val in (("gradient", resp.gradient), ("features", resp.features)):
        if val is not None and not np.all(np.isfinite(val)):
            raise ScorerMalformedError(f"non-finite floats in response {name}")
    if resp.score is not None and not np.isfinite(resp.score):
        raise ScorerMalformedError("non-finite response score")
    return resp


def request(
    endpoint: str,
    req: ScorerRequest,
    timeout: float = 60.0,
    retries: int = 2,
    session: _requests.Session | None = None,
    _sleep=time.sleep,
) -> ScorerResponse:
    """POST the request; exponential backoff on transport errors only."""
    doc = encode_request(req)
    sess = session or _requests
    last: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            _sleep(BACKOFF_BASE * (2.0 ** (attempt - 1)))
        try:
            http = sess.post(endpoint, json=doc, timeout=timeout)
        except _requests.RequestException as exc:
            last = ScorerTransportError(f"transport failure: {exc}")
            continue
        if http.status_code >= 500:
            last = ScorerTransportError(f"server status {http.status_code}")
            continue
        if http.status_code != 200:
            raise ScorerProtocolError(
                f"unexpected status {http.status_code}: {http.text[:200]}"
            )
        try:
            body = http.json()
        except ValueError as exc:
            raise ScorerMalformedError(f"response is not JSON: {exc}") from exc
        resp = decode_response(body)
        if resp.id and req.id and resp.id != req.id:
            raise ScorerMalformedError(f"response id {resp.id!r} != request id {req.id!r}")
        return resp
    raise last if last is not None else ScorerTransportError("no attempts made")


class HttpScorer:
    """Shareable handle for a remote scorer endpoint."""

    def __init__(self, endpoint: str, timeout: float = 60.0, retries: int = 2):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self._session = _requests.Session()

    def score(self, req: ScorerRequest) -> ScorerResponse:
        return request(
            self.endpoint, req, timeout=self.timeout, retries=self.retries,
            session=self._session,
        )


class MockSdsScorer:
    """Test double: the semantic gradient is an MSE pull toward a target image.

    sds-grad returns 2*(image - target)/(H*W) in guidance space; clip-score is
    1 - mean squared difference, so a perfect match scores 1.0.
    """

    def __init__(self, target):
        from .raster import RasterImage

        if isinstance(target, RasterImage):
            self.target = target.to_guidance().astype(np.float32)
        else:
            self.target = _as_image(target)

    def score(self, req: ScorerRequest) -> ScorerResponse:
        if req.kind == "sds-grad":
            img = self._check(req)
            grad = 2.0 * (img - self.target) / float(img.shape[0] * img.shape[1])
            return ScorerResponse(id=req.id, gradient=grad.astype(np.float32))
        if req.kind == "clip-score":
            img = self._check(req)
            nmse = float(np.mean((img - self.target) ** 2))
            return ScorerResponse(id=req.id, score=1.0 - nmse)
        raise ScorerProtocolError(f"mock sds scorer does not serve kind {req.kind!r}")

    def _check(self, req: ScorerRequest) -> np.ndarray:
        img = np.asarray(req.image, dtype=np.float64)
        if img.shape != self.target.shape:
            raise ScorerProtocolError(
                f"image shape {img.shape} != target shape {self.target.shape}"
            )
        return img


class BuiltinScorer:
    """Fully offline handle: no semantic pull (zero sds-grad), clip-score against
    a reference image when one is set, filter-bank features and font embeddings,
    offline concept/attribute tables. Lets the plumbing run with no service."""

    def __init__(self, reference: np.ndarray | None = None):
        self.reference = None if reference is None else _as_image(reference)

    def set_reference(self, image) -> None:
        self.reference = _as_image(image)

    def score(self, req: ScorerRequest) -> ScorerResponse:
        from .features import BuiltinFilterBankExtractor
        from .raster import RasterImage

        if req.kind == "sds-grad":
            return ScorerResponse(
                id=req.id, gradient=np.zeros_like(req.image, dtype=np.float32)
            )
        if req.kind == "clip-score":
            if self.reference is None or self.reference.shape != req.image.shape:
                return ScorerResponse(id=req.id, score=0.0)
            nmse = float(np.mean((np.asarray(req.image) - self.reference) ** 2))
            return ScorerResponse(id=req.id, score=1.0 - nmse)
        if req.kind in ("features", "font-embed") and req.image is not None:
            img = np.asarray(req.image, dtype=np.float64)
            coverage = 1.0 - img.mean(axis=2)
            raster = RasterImage(coverage.shape[1], coverage.shape[0], coverage)
            feats = BuiltinFilterBankExtractor().features(raster)
            if req.kind == "features":
                if req.reference is not None:
                    return self._features_with_gradient(req, raster, feats)
                return ScorerResponse(id=req.id, features=feats)
            pooled = feats[:256] if feats.shape[0] >= 256 else feats
            norm = float(np.linalg.norm(pooled))
            return ScorerResponse(id=req.id, features=pooled / (norm if norm > 0 else 1.0))
        if req.kind == "font-embed" and req.prompt is not None:
            rng = np.random.default_rng(
                np.frombuffer(req.prompt.encode()[:32].ljust(32, b"\0"), dtype=np.uint32)
            )
            v = rng.normal(size=256)
            return ScorerResponse(id=req.id, features=v / np.linalg.norm(v))
        if req.kind in ("concepts", "font-attrs"):
            from .prompts import offline_reply

            return ScorerResponse(id=req.id, strings=[offline_reply(req.kind, req.prompt)])
        raise ScorerProtocolError(f"builtin scorer cannot serve kind {req.kind!r}")

    def _features_with_gradient(self, req, raster, feats):
        from .features import BuiltinFilterBankExtractor
        from .raster import RasterImage

        ext = BuiltinFilterBankExtractor()
        ref_cov = 1.0 - np.asarray(req.reference, dtype=np.float64).mean(axis=2)
        ref = RasterImage(ref_cov.shape[1], ref_cov.shape[0], ref_cov)
        f_ref = ext.features(ref)
        dim = feats.shape[0]
        residual = (2.0 / dim) * (feats - f_ref)
        grad_cov = ext.backproject(residual, raster.height, raster.width)
        # w.r.t. the guidance image: coverage = 1 - mean(channels)
        grad3 = np.repeat((-grad_cov / 3.0)[:, :, None], 3, axis=2)
        return ScorerResponse(
            id=req.id, features=feats, gradient=grad3.astype(np.float32)
        )
