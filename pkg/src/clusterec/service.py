"""HTTP facade over the recommender: users, interactions, recommendations
and cluster transparency, consumed by the companion web UI.

The cluster model is read-only at serve time (ingest and clustering are
offline CLI steps), so reads never observe a half-updated model. User
mutations are serialized behind one lock. Every error returns the same
structured body: ``{"error": {"code": ..., "message": ...}}``.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .clustering import OnlineClusterer
from .embedding import Catalog
from .errors import StateError, ValidationError
from .metrics import intra_list_similarity
from .recommender import Recommender
from .users import UserProfile, save_users


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def create_app(catalog: Catalog, model: OnlineClusterer,
               recommender: Recommender | None = None,
               users: dict[str, UserProfile] | None = None,
               users_path=None, default_k: int = 10,
               cors_origins=("*",)) -> FastAPI:
    """Build the service around a catalog, a fitted model and a user store.

    ``users_path``, when given, is flushed with the full user store on
    shutdown.
    """
    recommender = recommender or Recommender(model, catalog)
    users = users if users is not None else {}
    lock = threading.Lock()
    counter = {"next": 1}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        if users_path is not None:
            with lock:
                save_users(users, users_path)

    app = FastAPI(title="clusterec", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=list(cors_origins),
        allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return _error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(ValidationError)
    async def _validation_error(request: Request, exc: ValidationError):
        return _error_response(400, "invalid_input", str(exc))

    @app.exception_handler(StateError)
    async def _state_error(request: Request, exc: StateError):
        return _error_response(409, "invalid_state", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _request_error(request: Request, exc: RequestValidationError):
        return _error_response(400, "invalid_input", str(exc.errors()))

    def _get_user(user_id: str) -> UserProfile:
        try:
            return users[user_id]
        except KeyError:
            raise ApiError(404, "not_found",
                           f"unknown user {user_id!r}") from None

    def _resolve_item(raw) -> object:
        if raw in catalog:
            return raw
        if isinstance(raw, str):
            if raw.lstrip("-").isdigit() and int(raw) in catalog:
                return int(raw)
        raise ApiError(404, "not_found", f"unknown item {raw!r}")

    def _mode_of(user: UserProfile) -> str:
        return ("personalized"
                if user.history_length >= recommender.history_threshold
                else "cold_start")

    @app.get("/v1/health")
    def health():
        return {"status": "ready", "items": len(catalog),
                "clusters": model.n_clusters_}

    @app.post("/v1/users", status_code=201)
    def create_user(body: dict):
        prefs = body.get("prefs")
        if (not isinstance(prefs, list) or not prefs
                or not all(isinstance(p, str) and p.strip() for p in prefs)):
            raise ApiError(400, "invalid_input",
                           "prefs must be a non-empty list of keywords")
        with lock:
            while f"u{counter['next']}" in users:
                counter["next"] += 1
            user_id = f"u{counter['next']}"
            counter["next"] += 1
            users[user_id] = UserProfile(user_id=user_id,
                                         prefs=[p.strip() for p in prefs])
        return {"user_id": user_id, "prefs": users[user_id].prefs}

    @app.get("/v1/users/{user_id}")
    def get_user(user_id: str):
        user = _get_user(user_id)
        return {
            "user_id": user.user_id,
            "prefs": user.prefs,
            "history": [{"cluster_id": c, "item_id": i}
                        for c, i in user.history],
            "viewed": sorted(user.viewed, key=str),
            "history_length": user.history_length,
            "mode": _mode_of(user),
        }

    @app.get("/v1/users/{user_id}/recommendations")
    def get_recommendations(user_id: str, k: int = Query(default=None),
                            explore: bool = False,
                            seed: int | None = None):
        user = _get_user(user_id)
        k = default_k if k is None else k
        if k < 1:
            raise ApiError(400, "invalid_input", f"k must be >= 1, got {k}")
        rec = recommender.recommend(user, k, explore=explore, seed=seed)
        explore_ids = set(rec.explore_item_ids)
        items = []
        for item_id in rec.items:
            item = catalog.get(item_id)
            items.append({
                "id": item.id,
                "title": item.title,
                "genres": item.genres,
                "tags": item.tags,
                "cluster_id": model.cluster_of(item.id),
                "explore": item_id in explore_ids,
            })
        ils = None
        if len(rec.items) >= 2:
            ils = intra_list_similarity(
                [catalog.embedding_of(i) for i in rec.items])
        return {
            "user_id": user.user_id,
            "mode": rec.mode,
            "explore": rec.explore,
            "k": k,
            "items": items,
            "explore_item_ids": list(rec.explore_item_ids),
            "ils": ils,
            "truncated": rec.truncated,
            "explore_shortfall": rec.explore_shortfall,
        }

    @app.post("/v1/users/{user_id}/interactions")
    def post_interaction(user_id: str, body: dict):
        user = _get_user(user_id)
        if "item_id" not in body:
            raise ApiError(400, "invalid_input", "body needs an item_id")
        item_id = _resolve_item(body["item_id"])
        with lock:
            recommender.record_interaction(user, item_id)
        return {
            "user_id": user.user_id,
            "item_id": item_id,
            "cluster_id": model.cluster_of(item_id),
            "history_length": user.history_length,
            "mode": _mode_of(user),
        }

    @app.get("/v1/items/{item_id}")
    def get_item(item_id: str):
        resolved = _resolve_item(item_id)
        item = catalog.get(resolved)
        return {
            "id": item.id,
            "title": item.title,
            "tags": item.tags,
            "keywords": item.keywords,
            "description": item.description,
            "genres": item.genres,
            "cluster_id": model.cluster_of(item.id),
        }

    @app.get("/v1/clusters")
    def get_clusters():
        listing = []
        for cluster in model.clusters_:
            tag_freq: dict[str, int] = {}
            for item_id in cluster.member_ids:
                if item_id in catalog:
                    for tag in catalog.get(item_id).tags:
                        tag_freq[tag] = tag_freq.get(tag, 0) + 1
            top = sorted(tag_freq, key=lambda t: (-tag_freq[t], t))[:5]
            listing.append({
                "cluster_id": cluster.cluster_id,
                "size": cluster.member_count,
                "top_terms": top,
            })
        return {"clusters": listing,
                "total_items": sum(c["size"] for c in listing)}

    return app
