"""Read-only HTTP retrieval service backing the sketch-pad UI.

The service snapshot (model + gallery index + featurizer config) is
immutable; request handling never mutates it, so concurrent identical
requests return identical bodies.  Retraining happens offline; restart
on a new checkpoint.
"""

from __future__ import annotations

import base64
import binascii
import logging
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field, model_validator

from .errors import ServiceError
from .feature_store import FeatureStore, MODALITIES
from .featurizer import FeaturizerConfig, PixelImage, extract
from .retrieval import EmbeddingIndex, embed_all, embed_instances, knn
from .trainer import TrainedModel, model_fingerprint

log = logging.getLogger(__name__)

MAX_K = 1000


class PixelPayload(BaseModel):
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    data_b64: str


class RetrieveRequest(BaseModel):
    features: list[float] | None = None
    pixels: PixelPayload | None = None
    query_modality: str = "sketch"
    target_modality: str = "image"
    k: int = Field(default=10, ge=1, le=MAX_K)

    @model_validator(mode="after")
    def exactly_one_payload(self):
        if (self.features is None) == (self.pixels is None):
            raise ValueError("request must carry exactly one of features/pixels")
        if self.query_modality not in MODALITIES:
            raise ValueError(f"unknown query modality {self.query_modality!r}")
        if self.target_modality not in MODALITIES:
            raise ValueError(f"unknown target modality {self.target_modality!r}")
        return self


class ServiceState:
    """Immutable snapshot served by the app."""

    def __init__(
        self,
        model: TrainedModel,
        store: FeatureStore,
        index: EmbeddingIndex | None = None,
        thumbnail_dir: str | Path | None = None,
    ):
        self.model = model
        self.store = store
        self.fingerprint = model_fingerprint(model)
        self.index = index if index is not None else embed_all(model, store)
        if self.index.model_fingerprint != self.fingerprint:
            raise ServiceError(
                "refusing to serve: index fingerprint "
                f"{self.index.model_fingerprint[:12]} != model "
                f"{self.fingerprint[:12]}"
            )
        self.thumbnail_dir = Path(thumbnail_dir) if thumbnail_dir else None
        meta = model.featurizer_meta or {}
        self.featurizer_cfg = (
            FeaturizerConfig(**meta["config"]) if "config" in meta else None
        )
        self.featurizer_hash = meta.get("hash")
        store_meta = store.featurizer_meta or {}
        if (
            self.featurizer_hash is not None
            and store_meta.get("hash") is not None
            and store_meta["hash"] != self.featurizer_hash
        ):
            raise ServiceError(
                "refusing to serve: gallery store was featurized with a "
                "different config than the model"
            )
        self.seen = set(model.seen_classes)

    def classes(self) -> list[dict]:
        return [
            {"name": c, "seen": c in self.seen} for c in self.store.class_set
        ]


def _thumb_path(state: ServiceState, item_id: str) -> Path | None:
    if state.thumbnail_dir is None:
        return None
    # ids are "<modality>:<class>/<filename>"; look for the source file
    # under a per-modality subdirectory first, then directly
    modality, _, rel = item_id.partition(":")
    if not rel:
        modality, rel = "", item_id
    root = state.thumbnail_dir.resolve()
    for candidate in ((state.thumbnail_dir / modality / rel),
                      (state.thumbnail_dir / rel)):
        path = candidate.resolve()
        if not str(path).startswith(str(root)):
            continue  # no path escapes
        if path.exists():
            return path
    return None


def build_app(state: ServiceState | None, ui_dir: str | Path | None = None) -> FastAPI:
    """Assemble the app around one snapshot; ``state=None`` serves 503s."""
    from fastapi.encoders import jsonable_encoder
    from fastapi.exceptions import RequestValidationError

    app = FastAPI(title="zsketch retrieval service")

    @app.exception_handler(RequestValidationError)
    async def malformed_payload(request, exc):  # 400, not FastAPI's 422
        return JSONResponse({"detail": jsonable_encoder(exc.errors())},
                            status_code=400)

    @app.get("/health")
    def health():
        if state is None:
            return JSONResponse({"status": "no model"}, status_code=503)
        return {"status": "ok", "model_fingerprint": state.fingerprint}

    @app.get("/classes")
    def classes():
        if state is None:
            raise HTTPException(503, "model not loaded")
        return {"classes": state.classes()}

    @app.post("/retrieve")
    def retrieve(request: RetrieveRequest):
        if state is None:
            raise HTTPException(503, "model not loaded")
        if request.pixels is not None:
            if state.featurizer_cfg is None:
                raise HTTPException(
                    409, "model was not trained on built-in featurizer output; "
                         "pixel queries unavailable",
                )
            try:
                raw = base64.b64decode(request.pixels.data_b64, validate=True)
            except binascii.Error as exc:
                raise HTTPException(400, f"bad base64 pixel data: {exc}") from exc
            try:
                image = PixelImage.from_bytes(
                    request.pixels.width, request.pixels.height, raw
                )
            except Exception as exc:
                raise HTTPException(400, str(exc)) from exc
            query_vec = extract(image, state.featurizer_cfg)
        else:
            query_vec = np.asarray(request.features, dtype=np.float64)
            if query_vec.shape[0] != state.model.d_in:
                raise HTTPException(
                    400,
                    f"feature vector has dim {query_vec.shape[0]}, "
                    f"model expects {state.model.d_in}",
                )
            if not np.all(np.isfinite(query_vec)):
                raise HTTPException(400, "feature vector has non-finite values")
        embedding = embed_instances(
            state.model, query_vec.reshape(1, -1), request.query_modality
        )[0]
        result = knn(
            state.index,
            embedding,
            request.k,
            modality=request.target_modality,
            query_modality=request.query_modality,
        )
        results = []
        for item_id, label, dist in zip(result.ids, result.labels, result.distances):
            row = {"id": item_id, "label": label, "distance": dist}
            if _thumb_path(state, item_id) is not None:
                row["thumbnail_url"] = f"/item/{item_id}/thumb"
            results.append(row)
        return {
            "query_modality": request.query_modality,
            "target_modality": request.target_modality,
            "k": request.k,
            "results": results,
        }

    @app.get("/item/{item_id:path}/thumb")
    def thumb(item_id: str):
        if state is None:
            raise HTTPException(503, "model not loaded")
        path = _thumb_path(state, item_id)
        if path is None:
            raise HTTPException(404, f"no thumbnail for {item_id!r}")
        media = "image/png" if path.suffix.lower() == ".png" else "image/x-portable-graymap"
        return FileResponse(path, media_type=media)

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


def check_featurizer_match(state: ServiceState, cfg: FeaturizerConfig) -> bool:
    """True when pixel queries through ``cfg`` match the model's features."""
    return state.featurizer_hash is not None and state.featurizer_hash == cfg.hash()
