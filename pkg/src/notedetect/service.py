"""HTTP front end: one detection request per posted frame.

The service adds no semantics over the library. A POST body is decoded,
run through infer() on a pooled backend, and serialized with the same
helpers tests use to serialize direct library results, so the two routes
stay comparable field for field. Announcement debouncing belongs to the
client; nothing here keeps state between requests.
"""

from __future__ import annotations

import time
from typing import Sequence

from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .detector import (
    DEFAULT_NMS_IOU,
    DEFAULT_SCORE_THRESHOLD,
    BackendInfo,
    BackendPool,
    DetectionResult,
    InferenceError,
    infer,
)
from .ioutil import decode_image_bytes
from .metrics import Detection
from .voc import CLASS_NAMES

MAX_BODY_BYTES = 8 * 1024 * 1024


def detection_to_dict(det: Detection) -> dict:
    return {
        "label": det.label.name,
        "score": det.score,
        "box": {
            "xmin": det.box.xmin,
            "ymin": det.box.ymin,
            "xmax": det.box.xmax,
            "ymax": det.box.ymax,
        },
    }


def detect_response_dict(
    result: DetectionResult, width: int, height: int, model: BackendInfo | None
) -> dict:
    """Serialize a DetectionResult; `message` appears only for empty results."""
    payload = {
        "detections": [detection_to_dict(det) for det in result.detections],
        "image": {"width": width, "height": height},
        "model": None if model is None else {"name": model.name, "version": model.version},
        "timing": {
            "preprocess_s": result.timing.preprocess_s,
            "inference_s": result.timing.inference_s,
            "postprocess_s": result.timing.postprocess_s,
        },
    }
    if result.empty_message is not None:
        payload["message"] = result.empty_message
    return payload


def _error(status_code: int, error: str, reason: str) -> JSONResponse:
    return JSONResponse(status_code=status_code, content={"error": error, "reason": reason})


def create_app(
    pool: BackendPool | None,
    *,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU,
    allowed_origins: Sequence[str] = ("*",),
    max_body_bytes: int = MAX_BODY_BYTES,
) -> FastAPI:
    """Build the app around an optional backend pool.

    With pool=None the service reports "loading" and refuses detection,
    which lets a fronting process start listening before the model is ready.
    """
    app = FastAPI(title="notedetect")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(allowed_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    started = time.monotonic()
    descriptor: BackendInfo | None = None
    if pool is not None:
        with pool.acquire() as backend:
            descriptor = backend.info

    @app.get("/healthz")
    def healthz() -> dict:
        return {
            "status": "ok" if pool is not None else "loading",
            "model": None if descriptor is None else {"name": descriptor.name, "version": descriptor.version},
            "uptime_s": time.monotonic() - started,
        }

    @app.get("/v1/labels")
    def labels() -> list[str]:
        return list(CLASS_NAMES)

    @app.post("/v1/detect")
    async def detect(
        request: Request,
        score_threshold: float = score_threshold,
        nms_iou: float = nms_iou,
        image_id: str = "",
    ):
        if pool is None:
            return _error(503, "loading", "model is not loaded yet")
        for name, value in (("score_threshold", score_threshold), ("nms_iou", nms_iou)):
            if not 0.0 <= value <= 1.0:
                return _error(400, "bad request", f"{name} must be in [0, 1], got {value}")
        body = await request.body()
        if len(body) > max_body_bytes:
            return _error(413, "payload too large", f"body exceeds {max_body_bytes} bytes")
        try:
            image = decode_image_bytes(body)
        except Exception as exc:  # image decoders raise a zoo of error types
            return _error(400, "bad image", str(exc) or exc.__class__.__name__)

        def run() -> DetectionResult:
            with pool.acquire() as backend:
                return infer(backend, image, score_threshold, nms_iou, image_id=image_id)

        try:
            result = await run_in_threadpool(run)
        except InferenceError as exc:
            return _error(500, "inference failed", str(exc))
        return detect_response_dict(
            result, width=image.shape[1], height=image.shape[0], model=descriptor
        )

    return app
