"""HTTP inference service.

``POST /analyze`` takes a multipart payload with a PNG ``screenshot`` and a
JSON ``hierarchy``, runs the same element selection a labeling pass would,
and returns per-element probabilities plus mismatch flags against the
declared clickable state. The decision threshold defaults to the one stored
in the checkpoint and can be overridden per request, which is how the UI's
sensitivity slider works without reloading the model.

The checkpoint is loaded once and never mutated; requests only read it, so
concurrent identical requests return identical bodies.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import asdict, dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from .features import EmbeddingTable, EncodingError, encode_element, resize_screen
from .hierarchy import HierarchyParseError, parse_hierarchy, select_elements
from .model import ModelCheckpoint, dataset_from_bundles, predict_probabilities
from .rng import RngStream

log = logging.getLogger("tapkit.server")

MAX_BODY_BYTES = 20 * 1024 * 1024
SELECTION_SEED = 0


@dataclass(frozen=True)
class ElementAnalysis:
    """One analyzed element; ``perceived_tappable`` is always
    ``probability >= threshold`` and ``mismatch`` compares it to the
    declared clickable state."""

    element_id: str
    bounds: dict  # pixel-space {x, y, w, h}
    clickable: bool
    probability: float
    perceived_tappable: bool
    mismatch: bool


@dataclass(frozen=True)
class AnalysisResponse:
    elements: list
    model_version: str
    threshold_used: float

    def to_json(self) -> dict:
        return asdict(self)


def _error(status: int, reason: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": reason})


def create_app(
    checkpoint: ModelCheckpoint | None = None,
    table: EmbeddingTable | None = None,
    checkpoint_path=None,
    table_path=None,
    max_body_bytes: int = MAX_BODY_BYTES,
    selection_seed: int = SELECTION_SEED,
) -> FastAPI:
    """Build the service; pass a loaded checkpoint/table or file paths.

    With neither given the app starts unloaded and /health reports 503.
    """
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def _lifespan(app: FastAPI):
        from .features import load_embedding_table
        from .model import load_checkpoint

        if app.state.table is None and table_path is not None:
            app.state.table = load_embedding_table(table_path)
        if app.state.checkpoint is None and checkpoint_path is not None:
            app.state.checkpoint = load_checkpoint(checkpoint_path, app.state.table)
            log.info("loaded checkpoint %s", app.state.checkpoint.model_version)
        yield

    app = FastAPI(title="tappability analysis service", lifespan=_lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.checkpoint = checkpoint
    app.state.table = table

    @app.get("/health")
    def health():
        ckpt: ModelCheckpoint | None = app.state.checkpoint
        if ckpt is None:
            return _error(503, "model not loaded")
        return {
            "status": "ok",
            "model_version": ckpt.model_version,
            "threshold": ckpt.threshold,
        }

    @app.post("/analyze")
    async def analyze(request: Request):
        ckpt: ModelCheckpoint | None = app.state.checkpoint
        if ckpt is None or app.state.table is None:
            return _error(503, "model not loaded")

        declared = request.headers.get("content-length")
        if declared is not None and declared.isdigit() and int(declared) > max_body_bytes:
            return _error(413, f"payload exceeds {max_body_bytes} bytes")
        try:
            form = await request.form()
        except Exception:
            return _error(400, "body is not parseable multipart form data")

        screenshot = form.get("screenshot")
        hierarchy = form.get("hierarchy")
        if screenshot is None or hierarchy is None:
            missing = [
                name
                for name, part in (("screenshot", screenshot), ("hierarchy", hierarchy))
                if part is None
            ]
            return _error(400, f"missing multipart field(s): {', '.join(missing)}")

        threshold = ckpt.threshold
        raw_threshold = request.query_params.get("threshold")
        if raw_threshold is not None:
            try:
                threshold = float(raw_threshold)
            except ValueError:
                return _error(400, f"threshold {raw_threshold!r} is not a number")
            if not 0 < threshold < 1:
                return _error(400, "threshold must be strictly between 0 and 1")

        image_bytes = await screenshot.read() if hasattr(screenshot, "read") else bytes(screenshot, "utf-8")
        doc_bytes = await hierarchy.read() if hasattr(hierarchy, "read") else bytes(hierarchy, "utf-8")
        if len(image_bytes) + len(doc_bytes) > max_body_bytes:
            return _error(413, f"payload exceeds {max_body_bytes} bytes")

        try:
            image = Image.open(io.BytesIO(image_bytes)).convert("RGB")
        except UnidentifiedImageError:
            return _error(400, "screenshot is not a decodable image")
        pixels = np.asarray(image)
        if pixels.shape[1] > pixels.shape[0]:
            return _error(422, "landscape screenshots are not supported")

        try:
            document = json.loads(doc_bytes.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            return _error(400, f"hierarchy is not valid JSON: {exc}")
        try:
            screen = parse_hierarchy(document, pixels, screen_id="upload")
        except HierarchyParseError as exc:
            return _error(400, f"hierarchy rejected: {exc}")

        elements = select_elements(screen, RngStream(selection_seed))
        try:
            screen_image = resize_screen(screen.pixels)
            bundles = [
                encode_element(screen, el, app.state.table, ckpt.model.type_vocab,
                               screen_image=screen_image)
                for el in elements
            ]
        except EncodingError as exc:
            return _error(400, f"element could not be encoded: {exc}")

        if bundles:
            probs = predict_probabilities(ckpt.model, dataset_from_bundles(bundles))
        else:
            probs = np.array([])
        body = AnalysisResponse(
            elements=[
                ElementAnalysis(
                    element_id=el.id,
                    bounds={"x": el.bounds.x, "y": el.bounds.y,
                            "w": el.bounds.w, "h": el.bounds.h},
                    clickable=bool(el.clickable),
                    probability=float(p),
                    perceived_tappable=bool(p >= threshold),
                    mismatch=bool((p >= threshold) != el.clickable),
                )
                for el, p in zip(elements, probs)
            ],
            model_version=ckpt.model_version,
            threshold_used=threshold,
        )
        return JSONResponse(content=body.to_json())

    return app


def serve(checkpoint_path, table_path, host: str = "127.0.0.1", port: int = 8422) -> None:
    import uvicorn

    app = create_app(checkpoint_path=checkpoint_path, table_path=table_path)
    uvicorn.run(app, host=host, port=port, log_level="info")
