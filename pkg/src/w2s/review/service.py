"""HTTP JSON API over the review store.

Routes:
  GET  /categories                         category queue summary
  GET  /items?category=&cursor=&page_size= paged candidates, pending first
  POST /items/{id}/verdict                 record accept/reject
  GET  /export?cap=                        accepted pairs, dataset format
  GET  /items/{id}/image                   image bytes for the pair
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .store import ReviewStore, StoreError


class VerdictBody(BaseModel):
    verdict: str
    reviewer: str = ""
    reason: str = ""


def create_app(store: ReviewStore, image_root: str | Path = "") -> FastAPI:
    app = FastAPI(title="review-service")
    app.state.store = store
    image_root = Path(image_root) if image_root else None
    # the browser frontend is served statically from another origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.exception_handler(StoreError)
    async def on_store_error(_req: Request, exc: StoreError):
        status = 404 if "unknown" in str(exc) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/categories")
    def categories():
        return {"categories": store.categories()}

    @app.get("/items")
    def items(category: str, cursor: str = "", page_size: int = 20):
        return store.list_candidates(category, cursor or None, page_size)

    @app.post("/items/{pair_id:path}/verdict")
    def verdict(pair_id: str, body: VerdictBody):
        reviewer = body.reviewer or "anonymous"
        item = store.record_verdict(pair_id, body.verdict, reviewer, body.reason)
        return item.to_dict()

    @app.get("/export")
    def export(cap: int = 100):
        return {"samples": store.export_test_set(per_category_cap=cap)}

    @app.get("/items/{pair_id:path}/image")
    def image(pair_id: str):
        item = store.items.get(pair_id)
        if item is None:
            raise HTTPException(status_code=404, detail=f"unknown pair {pair_id!r}")
        path = Path(item.image_path)
        if image_root is not None and not path.is_absolute():
            path = image_root / path
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"image not found: {path}")
        return FileResponse(path)

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    return app
