"""HTTP inference service wrapping the pipeline.

JSON request/response bodies carry images as base64 PNG strings. The
model is loaded once and immutable thereafter; inference runs on a
bounded worker pool (FIFO queue depth 32, overload answers 429).
"""

import base64
import io
import threading
import time
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import pipeline
from .errors import (GenTextError, MissingInputError, RangeError, ShapeError,
                     DecodeError)
from .imaging import load_image, save_image
from .nets import load_bundle

QUEUE_DEPTH = 32


def _decode_field(b64: str, field: str):
    try:
        raw = base64.b64decode(b64, validate=True)
    except Exception as e:
        raise DecodeError(field) from e
    try:
        return load_image(io.BytesIO(raw))
    except ShapeError:
        raise
    except Exception as e:
        raise DecodeError(field) from e


def _encode(img) -> str:
    buf = io.BytesIO()
    # save_image writes PNG to any file-like target
    save_image(img, buf)
    return base64.b64encode(buf.getvalue()).decode()


class StylizeBody(BaseModel):
    font_img: str
    texture_ref: str
    request_id: str | None = None


class DestylizeBody(BaseModel):
    font_ref: str
    request_id: str | None = None


class FontTransferBody(BaseModel):
    content: str
    font_img: str
    request_id: str | None = None


class GenerateBody(BaseModel):
    content: str
    font_ref: str
    texture_ref: str
    request_id: str | None = None


class InterpolateBody(BaseModel):
    font_img: str
    tex_a: str
    tex_b: str
    alphas: list[float]
    request_id: str | None = None


class BlendBody(BaseModel):
    instance: str
    tex_left: str
    tex_right: str
    request_id: str | None = None


class _WorkerPool:
    """N concurrent executors plus a bounded waiting queue."""

    def __init__(self, workers=1, depth=QUEUE_DEPTH):
        self._sem = threading.Semaphore(workers)
        self._lock = threading.Lock()
        self._waiting = 0
        self._depth = depth

    def run(self, fn):
        with self._lock:
            if self._waiting >= self._depth:
                return None
            self._waiting += 1
        try:
            self._sem.acquire()
            try:
                return fn()
            finally:
                self._sem.release()
        finally:
            with self._lock:
                self._waiting -= 1


def create_app(checkpoint, gallery_dir=None, workers=1) -> FastAPI:
    app = FastAPI(title="gentext")
    state = {"bundle": None, "hash": None}
    pool = _WorkerPool(workers=workers)

    def load():
        bundle = load_bundle(checkpoint)
        state["hash"] = bundle.param_hash()
        state["bundle"] = bundle

    load()

    @app.exception_handler(RequestValidationError)
    async def _validation(_req: Request, exc: RequestValidationError):
        fields = [".".join(str(p) for p in e["loc"] if p != "body")
                  for e in exc.errors()]
        return JSONResponse(status_code=400,
                            content={"error": "malformed body",
                                     "fields": fields})

    def _respond(fn, request_id):
        rid = request_id or str(uuid.uuid4())
        if state["bundle"] is None:
            return JSONResponse(status_code=503,
                                content={"error": "model loading",
                                         "request_id": rid})
        t0 = time.monotonic()
        try:
            result = pool.run(fn)
        except DecodeError as e:
            return JSONResponse(status_code=400,
                                content={"error": "image decode failed",
                                         "field": str(e), "request_id": rid})
        except (ShapeError, RangeError, MissingInputError) as e:
            return JSONResponse(status_code=422,
                                content={"error": f"{type(e).__name__}: {e}",
                                         "request_id": rid})
        except GenTextError as e:
            return JSONResponse(status_code=500,
                                content={"error": str(e), "request_id": rid})
        if result is None:
            return JSONResponse(status_code=429,
                                content={"error": "overloaded",
                                         "request_id": rid})
        result.update(request_id=rid,
                      timing_ms=(time.monotonic() - t0) * 1000.0)
        return JSONResponse(content=result)

    @app.get("/health")
    def health():
        if state["bundle"] is None:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return {"status": "ok", "checkpoint_hash": state["hash"]}

    @app.get("/styles")
    def styles():
        out = []
        if gallery_dir:
            for p in sorted(Path(gallery_dir).glob("*.png"))[:16]:
                out.append({"id": p.stem,
                            "image": base64.b64encode(p.read_bytes()).decode()})
        return {"styles": out}

    @app.post("/stylize")
    def stylize(body: StylizeBody):
        def run():
            img = pipeline.stylize(state["bundle"],
                                   _decode_field(body.font_img, "font_img"),
                                   _decode_field(body.texture_ref, "texture_ref"))
            return {"images": [_encode(img)]}
        return _respond(run, body.request_id)

    @app.post("/destylize")
    def destylize(body: DestylizeBody):
        def run():
            img = pipeline.destylize(state["bundle"],
                                     _decode_field(body.font_ref, "font_ref"))
            return {"images": [_encode(img)]}
        return _respond(run, body.request_id)

    @app.post("/font-transfer")
    def font_transfer(body: FontTransferBody):
        def run():
            img = pipeline.font_transfer(state["bundle"],
                                         _decode_field(body.content, "content"),
                                         _decode_field(body.font_img, "font_img"))
            return {"images": [_encode(img)]}
        return _respond(run, body.request_id)

    @app.post("/generate")
    def generate(body: GenerateBody):
        def run():
            out = pipeline.end_to_end(state["bundle"], pipeline.GenerationRequest(
                mode="end_to_end",
                content=_decode_field(body.content, "content"),
                font_ref=_decode_field(body.font_ref, "font_ref"),
                texture_ref=_decode_field(body.texture_ref, "texture_ref")))
            return {"images": [_encode(out["o_des"]), _encode(out["o_font"]),
                               _encode(out["o_sty"])],
                    "names": ["o_des", "o_font", "o_sty"]}
        return _respond(run, body.request_id)

    @app.post("/interpolate")
    def interpolate(body: InterpolateBody):
        def run():
            imgs = pipeline.interpolate_texture(
                state["bundle"], _decode_field(body.font_img, "font_img"),
                _decode_field(body.tex_a, "tex_a"),
                _decode_field(body.tex_b, "tex_b"), body.alphas)
            return {"images": [_encode(i) for i in imgs],
                    "alphas": body.alphas}
        return _respond(run, body.request_id)

    @app.post("/blend")
    def blend(body: BlendBody):
        def run():
            img = pipeline.blend_spatial(
                state["bundle"], _decode_field(body.instance, "instance"),
                _decode_field(body.tex_left, "tex_left"),
                _decode_field(body.tex_right, "tex_right"))
            return {"images": [_encode(img)]}
        return _respond(run, body.request_id)

    return app


def serve(checkpoint, port=8000, host="127.0.0.1", gallery_dir=None,
          workers=1):
    import uvicorn
    app = create_app(checkpoint, gallery_dir=gallery_dir, workers=workers)
    uvicorn.run(app, host=host, port=port)
