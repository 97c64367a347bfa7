"""Item representation, similarity math, and catalog ingestion.

Items carry a dense embedding of a single model-wide dimension (default 384).
All embeddings are L2-normalized once at ingestion so cosine similarity
against them reduces to a dot product.

An embedder is any object exposing ``name``, ``dimension`` and
``transform(texts) -> ndarray`` and producing identical vectors for identical
input text. Two implementations ship here: :class:`HashingEmbedder` (a
deterministic feature-hashing stand-in, no external model needed) and
:class:`ServiceEmbedder` (generic HTTP client for a real embedding service).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import CatalogParseError, ValidationError
from .validation import as_vector, check_nonzero, check_positive_int, l2_normalize

DEFAULT_DIMENSION = 384

ItemId = str | int


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, in [-1, 1].

    Raises:
        ValidationError: on dimension mismatch or zero vectors.
    """
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    if va.shape[0] != vb.shape[0]:
        raise ValidationError(
            f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}"
        )
    na = check_nonzero(va, "a")
    nb = check_nonzero(vb, "b")
    sim = float(np.dot(va, vb) / (na * nb))
    return max(-1.0, min(1.0, sim))


def _join_text_fields(title: str, tags: Sequence[str], keywords: Sequence[str],
                      description: str) -> str:
    segments = [title, " ".join(tags), " ".join(keywords), description]
    return " ".join(s for s in segments if s)


@dataclass
class Item:
    """One catalog entry. Immutable after ingestion; embedding is unit-norm."""

    id: ItemId
    title: str
    tags: list[str] = field(default_factory=list)
    keywords: list[str] = field(default_factory=list)
    description: str = ""
    genres: list[str] = field(default_factory=list)
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if not isinstance(self.title, str) or not self.title:
            raise ValidationError(f"item {self.id!r}: title must be non-empty")
        if self.embedding is not None:
            self.embedding = as_vector(self.embedding, f"item {self.id!r} embedding")
            self.embedding.flags.writeable = False

    @property
    def text(self) -> str:
        return _join_text_fields(self.title, self.tags, self.keywords,
                                 self.description)


def build_item_text(item: Item) -> str:
    """Concatenate title, tags, keywords and description with single spaces.

    Empty segments are skipped so no doubled separators appear.
    """
    return item.text


def _token_hash(token: str, seed: int, person: bytes) -> int:
    key = seed.to_bytes(8, "little", signed=True)
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8,
                             key=key, person=person).digest()
    return int.from_bytes(digest, "little")


def hash_embed(text: str, dimension: int = DEFAULT_DIMENSION, seed: int = 0) -> np.ndarray:
    """Feature-hash ``text`` into a unit-norm vector of ``dimension`` buckets.

    Tokens (lowercased, whitespace-split) are hashed to a bucket, with a +/-1
    sign drawn from a second hash. Deterministic for (text, dimension, seed)
    across processes; texts sharing more tokens land closer in cosine space.
    """
    check_positive_int(dimension, "dimension", minimum=2)
    tokens = text.lower().split()
    if not tokens:
        raise ValidationError("cannot embed empty text")
    vec = np.zeros(dimension, dtype=np.float64)
    for token in tokens:
        bucket = _token_hash(token, seed, b"bucket") % dimension
        sign = 1.0 if _token_hash(token, seed, b"sign") & 1 else -1.0
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        # Sign collisions cancelled every bucket; fall back to a single
        # deterministic coordinate so the result is still usable.
        vec[_token_hash(tokens[0], seed, b"bucket") % dimension] = 1.0
        norm = 1.0
    return vec / norm


class HashingEmbedder(BaseEstimator, TransformerMixin):
    """Deterministic feature-hashing embedder (no model download needed).

    Parameters
    ----------
    dimension : int
        Output vector length.
    seed : int
        Hash seed; fixed seed gives identical vectors across processes.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 0):
        self.dimension = dimension
        self.seed = seed

    @property
    def name(self) -> str:
        return f"hash-d{self.dimension}-s{self.seed}"

    def fit(self, X=None, y=None):
        return self

    def transform(self, texts: Iterable[str]) -> np.ndarray:
        rows = [hash_embed(t, self.dimension, self.seed) for t in texts]
        return np.vstack(rows) if rows else np.empty((0, self.dimension))


class ServiceEmbedder(BaseEstimator, TransformerMixin):
    """Client for an external embedding HTTP service.

    POSTs ``{"texts": [...], "model": <name>}`` to ``endpoint`` and expects
    ``{"embeddings": [[...], ...]}`` back, one vector per input in order.
    Requests are issued in sequential batches so output order always matches
    catalog order.
    """

    def __init__(self, endpoint: str, token: str | None = None,
                 model: str | None = None, dimension: int = DEFAULT_DIMENSION,
                 batch_size: int = 64, timeout: float = 30.0, transport=None):
        self.endpoint = endpoint
        self.token = token
        self.model = model
        self.dimension = dimension
        self.batch_size = batch_size
        self.timeout = timeout
        self.transport = transport

    @classmethod
    def from_env(cls, dimension: int = DEFAULT_DIMENSION) -> "ServiceEmbedder":
        """Build from CLUSTEREC_EMBED_URL / _TOKEN / _MODEL / _BATCH env vars."""
        endpoint = os.environ.get("CLUSTEREC_EMBED_URL")
        if not endpoint:
            raise ValidationError(
                "embedding service not configured: set CLUSTEREC_EMBED_URL"
            )
        return cls(
            endpoint,
            token=os.environ.get("CLUSTEREC_EMBED_TOKEN"),
            model=os.environ.get("CLUSTEREC_EMBED_MODEL"),
            dimension=dimension,
            batch_size=int(os.environ.get("CLUSTEREC_EMBED_BATCH", "64")),
        )

    @property
    def name(self) -> str:
        return f"service-{self.model or 'default'}"

    def fit(self, X=None, y=None):
        return self

    def transform(self, texts: Iterable[str]) -> np.ndarray:
        import httpx

        texts = list(texts)
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        rows: list[list[float]] = []
        with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
            for start in range(0, len(texts), self.batch_size):
                batch = texts[start:start + self.batch_size]
                payload: dict = {"texts": batch}
                if self.model:
                    payload["model"] = self.model
                resp = client.post(self.endpoint, json=payload, headers=headers)
                resp.raise_for_status()
                vectors = resp.json()["embeddings"]
                if len(vectors) != len(batch):
                    raise ValidationError(
                        f"embedding service returned {len(vectors)} vectors "
                        f"for {len(batch)} texts"
                    )
                rows.extend(vectors)
        out = np.asarray(rows, dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.dimension:
            raise ValidationError(
                f"embedding service returned shape {out.shape}, "
                f"expected (*, {self.dimension})"
            )
        return out


class Catalog:
    """Ordered, id-unique collection of items with uniform embedding dimension.

    Arrival order is preserved: it drives online clustering downstream.
    """

    def __init__(self, items: Sequence[Item], dimension: int | None = None):
        self._items: list[Item] = list(items)
        seen: dict[ItemId, int] = {}
        for pos, item in enumerate(self._items):
            if item.embedding is None:
                raise ValidationError(f"item {item.id!r} has no embedding")
            if item.id in seen:
                raise ValidationError(f"duplicate item id {item.id!r}")
            seen[item.id] = pos
        self._index = seen
        if dimension is None:
            if not self._items:
                raise ValidationError("cannot infer dimension of empty catalog")
            dimension = self._items[0].embedding.shape[0]
        self.dimension = int(dimension)
        for item in self._items:
            if item.embedding.shape[0] != self.dimension:
                raise ValidationError(
                    f"item {item.id!r} embedding has dimension "
                    f"{item.embedding.shape[0]}, expected {self.dimension}"
                )
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Item]:
        return iter(self._items)

    def __getitem__(self, pos: int) -> Item:
        return self._items[pos]

    def __contains__(self, item_id: ItemId) -> bool:
        return item_id in self._index

    @property
    def ids(self) -> list[ItemId]:
        return [item.id for item in self._items]

    def get(self, item_id: ItemId) -> Item:
        try:
            return self._items[self._index[item_id]]
        except KeyError:
            raise ValidationError(f"unknown item id {item_id!r}") from None

    def embedding_of(self, item_id: ItemId) -> np.ndarray:
        return self.get(item_id).embedding

    def matrix(self) -> np.ndarray:
        """All embeddings stacked as (n_items, dimension), cached."""
        if self._matrix is None:
            self._matrix = np.vstack([it.embedding for it in self._items])
            self._matrix.flags.writeable = False
        return self._matrix


def _parse_record(raw: str, line_no: int) -> dict:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CatalogParseError(f"invalid JSON ({exc.msg})", line_no) from exc
    if not isinstance(record, dict):
        raise CatalogParseError("record is not a JSON object", line_no)
    if "id" not in record:
        raise CatalogParseError("missing required field 'id'", line_no)
    if not isinstance(record["id"], (str, int)) or isinstance(record["id"], bool):
        raise CatalogParseError("'id' must be a string or integer", line_no)
    title = record.get("title")
    if not isinstance(title, str) or not title:
        raise CatalogParseError("'title' must be a non-empty string", line_no)
    for key in ("tags", "keywords", "genres"):
        value = record.get(key, [])
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise CatalogParseError(f"'{key}' must be an array of strings", line_no)
        record[key] = value
    desc = record.get("description", "")
    if not isinstance(desc, str):
        raise CatalogParseError("'description' must be a string", line_no)
    record["description"] = desc
    return record


def load_catalog(path, embedding_source: str = "precomputed",
                 dimension: int = DEFAULT_DIMENSION, seed: int = 0,
                 embedder=None) -> Catalog:
    """Load a JSONL catalog, attaching a unit-norm embedding to every item.

    ``embedding_source`` selects where vectors come from:

    - ``"precomputed"``: each record must carry an ``embedding`` array of the
      configured dimension;
    - ``"hash"``: vectors from :func:`hash_embed` over the item text;
    - ``"service"``: vectors from :class:`ServiceEmbedder` (env-configured).

    Passing ``embedder`` overrides the source lookup with any object honoring
    the embedder contract.
    """
    check_positive_int(dimension, "dimension", minimum=2)
    records: list[dict] = []
    lines: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            records.append(_parse_record(raw, line_no))
            lines.append(line_no)

    seen: dict = {}
    for record, line_no in zip(records, lines):
        if record["id"] in seen:
            raise CatalogParseError(
                f"duplicate item id {record['id']!r} "
                f"(first seen on line {seen[record['id']]})", line_no)
        seen[record["id"]] = line_no

    if embedder is None:
        if embedding_source == "precomputed":
            embedder = None
        elif embedding_source == "hash":
            embedder = HashingEmbedder(dimension=dimension, seed=seed)
        elif embedding_source == "service":
            embedder = ServiceEmbedder.from_env(dimension=dimension)
        else:
            raise ValidationError(
                f"unknown embedding source {embedding_source!r}; "
                "expected 'precomputed', 'hash' or 'service'"
            )

    if embedder is None:
        vectors = []
        for record, line_no in zip(records, lines):
            emb = record.get("embedding")
            if emb is None:
                raise CatalogParseError(
                    f"item {record['id']!r} has no 'embedding' field "
                    "(required for precomputed source)", line_no)
            vec = as_vector(emb, f"item {record['id']!r} embedding")
            if vec.shape[0] != dimension:
                raise ValidationError(
                    f"item {record['id']!r} embedding has dimension "
                    f"{vec.shape[0]}, expected {dimension}")
            vectors.append(l2_normalize(vec, f"item {record['id']!r} embedding"))
    else:
        texts = [
            _join_text_fields(r["title"], r["tags"], r["keywords"],
                              r["description"])
            for r in records
        ]
        raw_vectors = embedder.transform(texts)
        vectors = [l2_normalize(raw_vectors[i], f"item {records[i]['id']!r} embedding")
                   for i in range(len(records))]

    items = [
        Item(id=r["id"], title=r["title"], tags=r["tags"], keywords=r["keywords"],
             description=r["description"], genres=r["genres"], embedding=vec)
        for r, vec in zip(records, vectors)
    ]
    return Catalog(items, dimension=dimension)


def save_catalog(catalog: Catalog, path) -> None:
    """Write a catalog back to JSONL with embeddings included.

    Floats serialize via repr, so a save/load round-trip is exact.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for item in catalog:
            record = {
                "id": item.id,
                "title": item.title,
                "tags": item.tags,
                "keywords": item.keywords,
                "description": item.description,
                "genres": item.genres,
                "embedding": [float(x) for x in item.embedding],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
