"""HTTP surface: health probe plus a single per-image inference route.

The index is loaded once and shared read-only across requests; the
endpoints are sync functions so the framework isolates them on worker
threads, and generation concurrency stays capped by the shared client.
"""

from __future__ import annotations

import base64
from pathlib import Path

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .color import Palette
from .config import PipelineConfig
from .detect import Box, Detection, ImageDetections, load_image
from .errors import DataError, EngineError, InvalidEmbeddingError, MissingImageError
from .genkit import ChatClient, PromptTemplate
from .pipeline import record_to_dict, run_pipeline
from .retrieval import Index

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".webp")

_ERROR_STATUS = {
    "missing_image": 404,
    "missing_embedding": 404,
    "corrupt_index": 500,
    "config_error": 500,
}


class DetectionIn(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    class_name: str = Field(alias="class")
    box: list[float]
    conf: float


class PostRequest(BaseModel):
    image_id: str
    detections: list[DetectionIn]
    # inline vector: either a JSON float list or base64 little-endian float32
    query_embedding: list[float] | str | None = None
    image_path: str | None = None


def decode_query_embedding(value: list[float] | str | None) -> np.ndarray | None:
    if value is None:
        return None
    if isinstance(value, str):
        try:
            raw = base64.b64decode(value, validate=True)
        except Exception as exc:
            raise InvalidEmbeddingError(f"bad base64 embedding: {exc}") from exc
        if len(raw) == 0 or len(raw) % 4:
            raise InvalidEmbeddingError(
                f"base64 embedding has {len(raw)} bytes, not a float32 array"
            )
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return np.asarray(value, dtype=np.float64)


def _resolve_image(request: PostRequest, images_dir: str | None) -> np.ndarray:
    if request.image_path:
        return load_image(request.image_path)
    if images_dir:
        for suffix in _IMAGE_SUFFIXES:
            candidate = Path(images_dir) / f"{request.image_id}{suffix}"
            if candidate.is_file():
                return load_image(candidate)
    raise MissingImageError(f"no image found for id {request.image_id!r}")


def create_app(index: Index, cfg: PipelineConfig,
               images_dir: str | None = None,
               query_lookup: dict[str, np.ndarray] | None = None,
               palette: Palette | None = None,
               templates: PromptTemplate | None = None) -> FastAPI:
    app = FastAPI(title="fashionpost engine")

    client = None
    if cfg.gen.endpoint and cfg.gen.api_key:
        client = ChatClient(cfg.gen)  # malformed URL fails startup, not requests

    @app.exception_handler(EngineError)
    async def handle_engine_error(_, exc: EngineError):
        status = _ERROR_STATUS.get(exc.code, 400)
        return JSONResponse(status_code=status,
                            content={"error": exc.code, "detail": exc.detail})

    @app.get("/health")
    def health():
        return {"status": "ok", "index_size": len(index)}

    @app.post("/v1/post")
    def post(request: PostRequest):
        detections = []
        for d in request.detections:
            if len(d.box) != 4:
                raise DataError(f"box needs 4 coordinates, got {len(d.box)}")
            detections.append(Detection(class_name=d.class_name,
                                        box=Box(*d.box), confidence=d.conf))
        entry = ImageDetections(image_id=request.image_id,
                                image_path=request.image_path or "",
                                detections=tuple(detections))
        image = _resolve_image(request, images_dir)
        inline = decode_query_embedding(request.query_embedding)
        record = run_pipeline(image, entry, index, cfg,
                              query_embedding=inline, query_lookup=query_lookup,
                              palette=palette, templates=templates, client=client)
        return record_to_dict(record)

    return app
