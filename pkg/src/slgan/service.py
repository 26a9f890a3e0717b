"""HTTP inference service for the interactive studio.

One frozen bundle, many sessions. A session owns an uploaded source image
plus any number of reference images; style codes are computed once per
upload and cached so a slider drag costs a single generator pass. All
render operations are pure over the immutable bundle, which makes identical
request payloads produce byte-identical responses.
"""

from __future__ import annotations

import base64
import io
import os
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
import torch
from fastapi import FastAPI, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from .config import LATENT_DIM
from .data import (
    MAKEUP,
    NON_MAKEUP,
    default_dilation_px,
    derive_region_masks,
    preprocess_image,
)
from .errors import BundleNotLoaded, DecodeError, WeightSumViolation
from .inference import (
    InferenceBundle,
    generate,
    interpolate_styles,
    load_inference_bundle,
    to_uint8,
)

DEFAULT_SESSION_TTL = 1800.0
DEFAULT_MAX_UPLOAD = 16 * 1024 * 1024
RENDER_MODES = ("style_guided", "latent_guided", "source_blend")


class _Oversize(Exception):
    """Upload body exceeded the configured size limit (maps to 413)."""


@dataclass
class _Reference:
    codes: dict  # domain index -> style code tensor
    unmasked: bool


@dataclass
class _Session:
    source: torch.Tensor
    full_face: torch.Tensor | None
    unmasked: bool
    own_codes: dict
    heatmap: torch.Tensor | None = None
    references: dict = field(default_factory=dict)  # insertion-ordered
    order: list = field(default_factory=list)
    touched: float = field(default_factory=time.monotonic)


class RenderRequest(BaseModel):
    mode: str
    weights: list[float] | None = None
    alpha: float | None = None
    seeds: list[int] | None = None
    domain: str | None = None


class _Store:
    """Session table with lazy TTL eviction; writes serialized by one lock."""

    def __init__(self, ttl: float):
        self.ttl = ttl
        self.sessions: dict[str, _Session] = {}
        self.lock = threading.Lock()

    def put(self, session: _Session) -> str:
        sid = uuid.uuid4().hex
        with self.lock:
            self._purge()
            self.sessions[sid] = session
        return sid

    def get(self, sid: str) -> _Session | None:
        with self.lock:
            self._purge()
            session = self.sessions.get(sid)
            if session is not None:
                session.touched = time.monotonic()
            return session

    def _purge(self) -> None:
        cutoff = time.monotonic() - self.ttl
        for sid in [s for s, v in self.sessions.items() if v.touched < cutoff]:
            del self.sessions[sid]


def _decode_rgb(data: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise DecodeError(f"cannot decode upload: {exc}") from exc
    return img.convert("RGB")


def _decode_parsing(data: bytes, resolution: int) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise DecodeError(f"cannot decode parsing map: {exc}") from exc
    if img.mode not in ("L", "P", "I"):
        img = img.convert("L")
    img = img.resize((resolution, resolution), Image.NEAREST)
    return np.asarray(img, dtype=np.int64)


def _encode_png(image: torch.Tensor) -> str:
    arr = to_uint8(image)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _domain_index(name: str | None, fallback: int) -> int:
    if name is None:
        return fallback
    if name in ("makeup", str(MAKEUP)):
        return MAKEUP
    if name in ("non-makeup", "nonmakeup", str(NON_MAKEUP)):
        return NON_MAKEUP
    raise WeightSumViolation(f"unknown domain {name!r}")


def _normalized_weights(weights, count: int) -> np.ndarray:
    """Renormalize to the unit simplex; reject inputs with no valid scaling."""
    if weights is None:
        w = np.full(count, 1.0 / count, dtype=np.float64)
    else:
        w = np.asarray(list(weights), dtype=np.float64)
    if w.shape[0] != count:
        raise WeightSumViolation(f"{w.shape[0]} weights for {count} references")
    if not np.isfinite(w).all():
        raise WeightSumViolation("weights must be finite")
    if (w < 0).any():
        raise WeightSumViolation("weights must be nonnegative")
    total = float(w.sum())
    if total <= 0:
        raise WeightSumViolation("weights sum to zero")
    return w / total


def create_app(bundle: InferenceBundle | None = None, *,
               session_ttl: float = DEFAULT_SESSION_TTL,
               max_upload_bytes: int = DEFAULT_MAX_UPLOAD) -> FastAPI:
    """Build the service around one frozen bundle (None = not loaded, 503s)."""
    app = FastAPI(title="slgan studio service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = _Store(session_ttl)
    state = {"bundle": bundle}

    def current_bundle() -> InferenceBundle:
        if state["bundle"] is None:
            raise BundleNotLoaded("no checkpoint loaded; set SLGAN_BUNDLE")
        return state["bundle"]

    @app.exception_handler(DecodeError)
    async def _decode_handler(request: Request, exc: DecodeError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(WeightSumViolation)
    async def _weight_handler(request: Request, exc: WeightSumViolation):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(BundleNotLoaded)
    async def _bundle_handler(request: Request, exc: BundleNotLoaded):
        return JSONResponse(status_code=503, content={"detail": str(exc)})

    def _not_found(what: str) -> JSONResponse:
        return JSONResponse(status_code=404, content={"detail": f"unknown {what}"})

    async def _read_upload(upload: UploadFile | None) -> bytes | None:
        if upload is None:
            return None
        data = await upload.read()
        if len(data) > max_upload_bytes:
            raise _Oversize()
        return data

    @app.exception_handler(_Oversize)
    async def _oversize_handler(request: Request, exc: _Oversize):
        return JSONResponse(status_code=413,
                            content={"detail": "upload exceeds size limit"})

    def _prepare(data: bytes, parsing: bytes | None):
        """Preprocess an upload; all-ones full-face fallback when unmasked."""
        b = current_bundle()
        res = b.config.resolution
        image = preprocess_image(_decode_rgb(data), res)
        if parsing is None:
            return image, torch.ones(res, res), True
        seg = _decode_parsing(parsing, res)
        masks = derive_region_masks(seg, default_dilation_px(res))
        full = torch.from_numpy(masks.full_face.astype(np.float32))
        return image, full, False

    def _encode_both_domains(image: torch.Tensor, full: torch.Tensor) -> dict:
        b = current_bundle()
        with torch.no_grad():
            masked = image[None] * full[None, None]
            return {d: b.style_encoder(masked, d, None)[0]
                    for d in (NON_MAKEUP, MAKEUP)}

    @app.post("/session", status_code=201)
    async def create_session(source: UploadFile, parsing: UploadFile | None = None):
        data = await _read_upload(source)
        seg = await _read_upload(parsing)
        image, full, unmasked = _prepare(data, seg)
        session = _Session(source=image, full_face=full, unmasked=unmasked,
                           own_codes=_encode_both_domains(image, full))
        return {"session_id": store.put(session), "unmasked": unmasked}

    @app.post("/session/{sid}/reference")
    async def add_reference(sid: str, reference: UploadFile,
                            parsing: UploadFile | None = None):
        session = store.get(sid)
        if session is None:
            return _not_found("session")
        data = await _read_upload(reference)
        seg = await _read_upload(parsing)
        image, full, unmasked = _prepare(data, seg)
        codes = _encode_both_domains(image, full)
        rid = uuid.uuid4().hex
        with store.lock:
            session.references[rid] = _Reference(codes=codes, unmasked=unmasked)
            session.order.append(rid)
        norm = float(torch.linalg.vector_norm(codes[MAKEUP]))
        return {"reference_id": rid, "style_code_norm": norm,
                "unmasked": unmasked}

    def _reference_style(session: _Session, req: RenderRequest, domain: int):
        codes = [session.references[rid].codes[domain] for rid in session.order]
        if not codes:
            raise WeightSumViolation("no references uploaded")
        w = _normalized_weights(req.weights, len(codes))
        return interpolate_styles(codes, w)

    def _render_style(session: _Session, req: RenderRequest) -> torch.Tensor:
        b = current_bundle()
        if req.mode == "style_guided":
            domain = _domain_index(req.domain, MAKEUP)
            return _reference_style(session, req, domain)
        if req.mode == "source_blend":
            alpha = 0.0 if req.alpha is None else float(req.alpha)
            if not 0.0 <= alpha <= 1.0:
                raise WeightSumViolation(f"alpha {alpha} outside [0, 1]")
            domain = _domain_index(req.domain, MAKEUP)
            own = session.own_codes[NON_MAKEUP]
            ref = _reference_style(session, req, domain)
            return (1.0 - alpha) * own + alpha * ref
        if req.mode == "latent_guided":
            domain = _domain_index(req.domain, NON_MAKEUP)
            seeds = req.seeds or [0]
            styles = []
            with torch.no_grad():
                for seed in seeds[:2]:
                    z = torch.from_numpy(np.random.default_rng(seed)
                                         .standard_normal(LATENT_DIM)).float()
                    styles.append(b.mapping(z, domain))
            if len(styles) == 1 or req.alpha is None:
                return styles[0]
            t = float(req.alpha)
            return (1.0 - t) * styles[0] + t * styles[1]
        raise WeightSumViolation(f"unknown mode {req.mode!r}; "
                                 f"expected one of {RENDER_MODES}")

    @app.post("/session/{sid}/render")
    async def render(sid: str, req: RenderRequest):
        b = current_bundle()
        session = store.get(sid)
        if session is None:
            return _not_found("session")
        start = time.perf_counter()
        style = _render_style(session, req)
        image = generate(b, session.source, style, session.heatmap)
        return {"image": _encode_png(image),
                "latency_ms": (time.perf_counter() - start) * 1000.0}

    @app.get("/health")
    async def health():
        if state["bundle"] is None:
            return JSONResponse(status_code=503, content={"status": "no_bundle"})
        b = state["bundle"]
        return {"status": "ok", "bundle_hash": b.bundle_hash, "step": b.step}

    return app


def main() -> None:
    """Entry point: serve the checkpoint named by SLGAN_BUNDLE."""
    import uvicorn

    path = os.environ.get("SLGAN_BUNDLE")
    bundle = load_inference_bundle(path) if path else None
    port = int(os.environ.get("SLGAN_PORT", "8000"))
    uvicorn.run(create_app(bundle), host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
