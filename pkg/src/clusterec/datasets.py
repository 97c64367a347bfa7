"""Synthetic fixture data: a topical movie catalog and matching ratings.

Items are grouped into disjoint-vocabulary topics so hash embeddings of
same-topic items land close in cosine space while cross-topic items stay
near orthogonal. Synthetic raters concentrate on a few topics each, which
gives the clustering, recommendation and evaluation pipelines realistic
structure to work against without shipping any real dataset.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .baselines import RatingsMatrix
from .embedding import Catalog, HashingEmbedder, Item, _join_text_fields

THEMES = [
    "heist", "noir", "space", "western", "samurai", "kaiju", "vampire",
    "pirate", "robot", "wizard", "detective", "zombie", "gladiator",
    "spy", "alien", "dragon", "ghost", "ninja", "racer", "climber",
    "diver", "gangster", "knight", "cowboy", "astronaut", "hacker",
    "chef", "boxer", "dancer", "magician", "hunter", "sailor",
    "nomad", "monk", "jester", "falconer", "smuggler", "cartographer",
    "alchemist", "beekeeper", "lighthouse", "submariner", "puppeteer",
    "archivist", "glassblower", "stargazer", "trapper", "orchardist",
]

GENRES = [
    "Action", "Adventure", "Animation", "Comedy", "Crime", "Documentary",
    "Drama", "Fantasy", "Horror", "Mystery", "Romance", "Sci-Fi",
    "Thriller", "War", "Western", "Musical", "Film-Noir", "IMAX",
]

_TOPIC_VOCAB_SIZE = 8
_TAGS_PER_ITEM = 6
_DESC_TOPIC_WORDS = 4


def _topic_stem(topic: int) -> str:
    theme = THEMES[topic % len(THEMES)]
    suffix = topic // len(THEMES)
    return theme if suffix == 0 else f"{theme}{suffix}"


def _topic_vocab(topic: int) -> list[str]:
    stem = _topic_stem(topic)
    return [f"{stem}{chr(ord('a') + j)}" for j in range(_TOPIC_VOCAB_SIZE)]


def make_catalog_records(n_items: int = 2000, n_topics: int = 40,
                         seed: int = 0) -> tuple[list[dict], list[int]]:
    """Raw catalog records (no embeddings) plus each item's topic index.

    Ids are integers 1..n_items; arrival order interleaves topics so online
    clustering sees a mixed stream.
    """
    rng = np.random.default_rng(seed)
    records = []
    topics = []
    for i in range(n_items):
        topic = int(rng.integers(0, n_topics))
        vocab = _topic_vocab(topic)
        stem = _topic_stem(topic)
        tags = [vocab[j] for j in rng.choice(_TOPIC_VOCAB_SIZE,
                                             size=_TAGS_PER_ITEM,
                                             replace=False)]
        kw = rng.choice(_TOPIC_VOCAB_SIZE, size=2, replace=False)
        keywords = [f"{vocab[kw[0]]} {vocab[kw[1]]}"]
        desc_words = [vocab[j] for j in rng.choice(_TOPIC_VOCAB_SIZE,
                                                   size=_DESC_TOPIC_WORDS,
                                                   replace=False)]
        desc_words.append(f"plot{i}x")
        genres = [GENRES[topic % len(GENRES)]]
        if rng.random() < 0.3:
            genres.append(GENRES[(topic + 7) % len(GENRES)])
        records.append({
            "id": i + 1,
            "title": f"{stem.capitalize()} {i + 1:04d}",
            "tags": tags,
            "keywords": keywords,
            "description": " ".join(desc_words),
            "genres": genres,
        })
        topics.append(topic)
    return records, topics


def make_catalog(n_items: int = 2000, n_topics: int = 40,
                 dimension: int = 384, seed: int = 0,
                 embedder=None) -> tuple[Catalog, list[int]]:
    """Embedded synthetic catalog plus per-item topic indices."""
    records, topics = make_catalog_records(n_items, n_topics, seed)
    if embedder is None:
        embedder = HashingEmbedder(dimension=dimension, seed=seed)
    texts = [_join_text_fields(r["title"], r["tags"], r["keywords"],
                               r["description"]) for r in records]
    vectors = embedder.transform(texts)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    vectors = vectors / norms
    items = [Item(embedding=vectors[i], **records[i])
             for i in range(len(records))]
    return Catalog(items, dimension=dimension), topics


def make_ratings(topics: list[int], n_users: int = 150,
                 events_per_user: int = 80, topics_per_user: int = 3,
                 in_topic_prob: float = 0.85, like_prob: float = 0.85,
                 seed: int = 0) -> RatingsMatrix:
    """Synthetic raters concentrated on a few topics each.

    In-topic events rate high (>= 3.5 with probability ``like_prob``);
    out-of-topic events rate low. Timestamps increase within each user, so
    contiguous slices of a user's history are temporally coherent.
    """
    rng = np.random.default_rng(seed)
    n_items = len(topics)
    topic_arr = np.asarray(topics)
    n_topics = int(topic_arr.max()) + 1
    by_topic = [np.flatnonzero(topic_arr == t) for t in range(n_topics)]

    users, items, values, stamps = [], [], [], []
    high = [3.5, 4.0, 4.5, 5.0]
    low = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    for u in range(1, n_users + 1):
        prefs = rng.choice(n_topics, size=min(topics_per_user, n_topics),
                           replace=False)
        pool = np.concatenate([by_topic[t] for t in prefs])
        chosen: list[int] = []
        seen: set[int] = set()
        attempts = 0
        while len(chosen) < events_per_user and attempts < events_per_user * 20:
            attempts += 1
            if pool.size and rng.random() < in_topic_prob:
                idx = int(pool[rng.integers(0, pool.size)])
                in_topic = True
            else:
                idx = int(rng.integers(0, n_items))
                in_topic = topic_arr[idx] in prefs
            if idx in seen:
                continue
            seen.add(idx)
            chosen.append(idx)
            liked = rng.random() < (like_prob if in_topic else 1 - like_prob)
            values.append(float(rng.choice(high if liked else low)))
            users.append(u)
            items.append(idx + 1)  # catalog ids are 1-based
            stamps.append(1_000_000_000 + u * 100_000 + len(chosen))
    return RatingsMatrix(users, items, values, stamps)


def write_catalog_jsonl(records: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_ratings_csv(ratings: RatingsMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["userId", "movieId", "rating", "timestamp"])
        for r, c, v, t in zip(ratings.rows, ratings.cols, ratings.values,
                              ratings.timestamps):
            writer.writerow([ratings.user_ids[r], ratings.item_ids[c],
                             v, t])
