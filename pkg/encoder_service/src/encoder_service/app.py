"""The HTTP surface: GET /health and POST /embed.

The embedding model loads once, inside the lifespan hook; until it
finishes both routes answer 503 so callers can poll /health for
readiness.  /embed validates by hand rather than through a request
model so every rejection carries the same {"error": ...} envelope.
"""

from __future__ import annotations

from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .backends import resolve_backend
from .config import ServiceConfig


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    cfg = config or ServiceConfig.from_env()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.backend = resolve_backend(cfg.model)
        yield

    app = FastAPI(title="encoder-service", lifespan=lifespan)
    app.state.backend = None
    app.state.config = cfg

    @app.get("/health")
    async def health(request: Request) -> JSONResponse:
        backend = request.app.state.backend
        if backend is None:
            return _error(503, "model is loading")
        return JSONResponse(
            {
                "status": "ok",
                "model": backend.name,
                "dim": backend.dim,
                "max_batch": cfg.max_batch,
            }
        )

    @app.post("/embed")
    async def embed(request: Request) -> JSONResponse:
        backend = request.app.state.backend
        if backend is None:
            return _error(503, "model is loading")
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "request body must be JSON")
        texts = payload.get("texts") if isinstance(payload, dict) else None
        if not isinstance(texts, list) or not texts:
            return _error(400, "texts must be a non-empty list of strings")
        if any(not isinstance(t, str) or not t for t in texts):
            return _error(400, "every text must be a non-empty string")
        if len(texts) > cfg.max_batch:
            return _error(
                413, f"batch of {len(texts)} exceeds the limit of {cfg.max_batch}"
            )
        matrix = backend.encode(texts)
        return JSONResponse(
            {
                "embeddings": [[float(x) for x in row] for row in matrix],
                "dim": backend.dim,
                "model": backend.name,
            }
        )

    return app
