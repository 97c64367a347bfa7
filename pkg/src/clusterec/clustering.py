"""Online adaptive clustering of item embeddings.

Items stream in one at a time and either join the nearest cluster (cosine
similarity strictly above the current threshold) or start a new one.
Centroids are arithmetic means of member embeddings and are never
re-normalized; cosine similarity against them is scale-invariant so this
does not change behavior. Every ``update_frequency`` insertions the
threshold adapts from a sampled silhouette score and highly similar
clusters are merged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import PersistenceError, StateError, ValidationError
from .validation import as_vector, check_positive_int

MODEL_FORMAT = "clusterec-model"
MODEL_VERSION = 1

THRESHOLD_FLOOR = 0.3
THRESHOLD_CEIL = 0.8


@dataclass
class Cluster:
    """Read-only view of one cluster."""

    cluster_id: int
    centroid: np.ndarray
    member_ids: list

    @property
    def member_count(self) -> int:
        return len(self.member_ids)


@dataclass
class SilhouetteReport:
    """Sampled silhouette score plus the context it was computed in.

    ``degenerate`` is set when fewer than 2 distinct clusters appeared in
    the sample; such reports must not drive threshold changes.
    """

    score: float
    sampled_count: int
    cluster_count_at_eval: int
    degenerate: bool = False


class OnlineClusterer(BaseEstimator):
    """Streaming nearest-centroid clusterer with an adaptive join threshold.

    Parameters
    ----------
    threshold : float
        Initial similarity threshold for joining an existing cluster
        (strict inequality; a tie creates a new cluster).
    dynamic : bool
        Enable periodic threshold adjustment and cluster merging.
    update_frequency : int
        Insertions between adjustment rounds.
    silhouette_sample_size : int
        Points sampled per silhouette evaluation.
    merge_threshold : float
        Centroid similarity above which clusters merge.
    random_state : int
        Seed for silhouette sampling; fixed seed plus fixed ingestion
        order gives an identical final model.

    Attributes
    ----------
    threshold_ : float
        Current (possibly adapted) threshold.
    clusters_ : list[Cluster]
        Snapshot of clusters, ordered by cluster id.
    n_items_ : int
        Items ingested so far.
    last_silhouette_ : SilhouetteReport or None
        Most recent cadence evaluation.
    """

    def __init__(self, threshold: float = 0.45, dynamic: bool = True,
                 update_frequency: int = 100, silhouette_sample_size: int = 1000,
                 merge_threshold: float = 0.9, random_state: int = 0):
        self.threshold = threshold
        self.dynamic = dynamic
        self.update_frequency = update_frequency
        self.silhouette_sample_size = silhouette_sample_size
        self.merge_threshold = merge_threshold
        self.random_state = random_state

    # -- internal state ------------------------------------------------------

    def _reset(self, dimension: int):
        if not (-1.0 <= self.threshold <= 1.0):
            raise ValidationError(
                f"threshold must be in [-1, 1], got {self.threshold}")
        check_positive_int(self.update_frequency, "update_frequency")
        check_positive_int(self.silhouette_sample_size, "silhouette_sample_size")
        self.dimension_ = int(dimension)
        self.threshold_ = float(self.threshold)
        self.items_since_adjust_ = 0
        self.n_items_ = 0
        self.last_silhouette_: SilhouetteReport | None = None
        self._next_cluster_id = 0
        # Capacity-doubled row storage; active rows stay sorted by cluster
        # id because merges keep the lower id and new ids only grow.
        self._cap = 16
        self._n_rows = 0
        self._cent_store = np.zeros((self._cap, dimension), dtype=np.float64)
        self._norm_store = np.zeros(self._cap, dtype=np.float64)
        self._count_store = np.zeros(self._cap, dtype=np.int64)
        self._row_ids: list[int] = []
        self._members: dict[int, list] = {}
        self._assignments: dict = {}
        # Ingested points retained for silhouette sampling (not persisted).
        self._point_cap = 1024
        self._point_store = np.zeros((self._point_cap, dimension), dtype=np.float64)
        self._point_ids: list = []

    def _check_fitted(self):
        if not hasattr(self, "dimension_"):
            raise StateError("model has no clusters yet; ingest items first")

    @property
    def _centroids(self) -> np.ndarray:
        return self._cent_store[:self._n_rows]

    @property
    def _norms(self) -> np.ndarray:
        return self._norm_store[:self._n_rows]

    @property
    def _counts(self) -> np.ndarray:
        return self._count_store[:self._n_rows]

    @property
    def clusters_(self) -> list[Cluster]:
        self._check_fitted()
        return [
            Cluster(cid, self._cent_store[row].copy(), list(self._members[cid]))
            for row, cid in enumerate(self._row_ids)
        ]

    @property
    def n_clusters_(self) -> int:
        self._check_fitted()
        return self._n_rows

    @property
    def labels_(self) -> np.ndarray:
        """Current cluster id of every ingested item, in ingestion order."""
        self._check_fitted()
        return np.array([self._assignments[i] for i in self._point_ids])

    def cluster_of(self, item_id) -> int:
        """Current cluster id of an ingested item."""
        self._check_fitted()
        try:
            return self._assignments[item_id]
        except KeyError:
            raise ValidationError(f"item {item_id!r} is not clustered") from None

    def has_item(self, item_id) -> bool:
        return hasattr(self, "dimension_") and item_id in self._assignments

    def members_of(self, cluster_id: int) -> list:
        self._check_fitted()
        try:
            return list(self._members[cluster_id])
        except KeyError:
            raise ValidationError(f"unknown cluster id {cluster_id}") from None

    def centroid_of(self, cluster_id: int) -> np.ndarray:
        self._check_fitted()
        if cluster_id not in self._members:
            raise ValidationError(f"unknown cluster id {cluster_id}")
        return self._cent_store[self._row_ids.index(cluster_id)].copy()

    def item_ids(self) -> list:
        """All ingested item ids in ingestion order."""
        self._check_fitted()
        return list(self._point_ids)

    # -- fitting ---------------------------------------------------------------

    def fit(self, X, item_ids=None):
        """Stream all rows of X through :meth:`assign` in order.

        ``item_ids`` defaults to 0..n-1. A single online pass, identical
        to calling :meth:`partial_fit` once on a fresh model.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValidationError(f"X must be 2-D, got shape {X.shape}")
        self._reset(X.shape[1])
        return self.partial_fit(X, item_ids)

    def partial_fit(self, X, item_ids=None):
        """Ingest more rows, continuing from the current state."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValidationError(f"X must be 2-D, got shape {X.shape}")
        if not hasattr(self, "dimension_"):
            self._reset(X.shape[1])
        if item_ids is None:
            item_ids = range(self.n_items_, self.n_items_ + X.shape[0])
        item_ids = list(item_ids)
        if len(item_ids) != X.shape[0]:
            raise ValidationError(
                f"got {len(item_ids)} ids for {X.shape[0]} rows")
        for row, item_id in zip(X, item_ids):
            self.assign(row, item_id)
        return self

    def _grow_rows(self):
        self._cap *= 2
        for name in ("_cent_store", "_norm_store", "_count_store"):
            old = getattr(self, name)
            shape = (self._cap,) + old.shape[1:]
            new = np.zeros(shape, dtype=old.dtype)
            new[:self._n_rows] = old[:self._n_rows]
            setattr(self, name, new)

    def _new_cluster(self, embedding: np.ndarray, item_id) -> int:
        if self._n_rows == self._cap:
            self._grow_rows()
        cid = self._next_cluster_id
        self._next_cluster_id += 1
        row = self._n_rows
        self._cent_store[row] = embedding
        self._norm_store[row] = np.linalg.norm(embedding)
        self._count_store[row] = 1
        self._n_rows += 1
        self._row_ids.append(cid)
        self._members[cid] = [item_id]
        return cid

    def _store_point(self, vec: np.ndarray, item_id):
        n = len(self._point_ids)
        if n == self._point_cap:
            self._point_cap *= 2
            new = np.zeros((self._point_cap, self.dimension_), dtype=np.float64)
            new[:n] = self._point_store[:n]
            self._point_store = new
        self._point_store[n] = vec
        self._point_ids.append(item_id)

    def assign(self, embedding, item_id) -> int:
        """Assign one item, returning the cluster id it landed in.

        Creates a new singleton cluster when no centroid is strictly more
        similar than the current threshold. On the dynamic cadence this
        also triggers threshold adjustment and merging.
        """
        vec = as_vector(embedding)
        if not hasattr(self, "dimension_"):
            self._reset(vec.shape[0])
        if vec.shape[0] != self.dimension_:
            raise ValidationError(
                f"embedding has dimension {vec.shape[0]}, "
                f"expected {self.dimension_}")
        if item_id in self._assignments:
            raise ValidationError(f"item {item_id!r} already assigned")
        vec_norm = float(np.linalg.norm(vec))
        if vec_norm < 1e-12:
            raise ValidationError("cannot assign a zero vector")

        if self._n_rows == 0:
            cid = self._new_cluster(vec, item_id)
        else:
            sims = (self._centroids @ vec) / (self._norms * vec_norm)
            best = int(np.argmax(sims))  # first max = lowest cluster id
            if sims[best] > self.threshold_:
                cid = self._row_ids[best]
                new_count = int(self._count_store[best]) + 1
                self._cent_store[best] += (vec - self._cent_store[best]) / new_count
                self._norm_store[best] = np.linalg.norm(self._cent_store[best])
                self._count_store[best] = new_count
                self._members[cid].append(item_id)
            else:
                cid = self._new_cluster(vec, item_id)

        self._assignments[item_id] = cid
        self._store_point(vec, item_id)
        self.n_items_ += 1
        self.items_since_adjust_ += 1

        if self.dynamic and self.items_since_adjust_ % self.update_frequency == 0:
            self._adjustment_round()
            self.items_since_adjust_ = 0
        return cid

    def predict(self, X) -> np.ndarray:
        """Nearest-centroid cluster ids for rows of X; does not mutate."""
        self._check_fitted()
        if self._n_rows == 0:
            raise StateError("model has no clusters")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dimension_:
            raise ValidationError(
                f"X has dimension {X.shape[1]}, expected {self.dimension_}")
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms < 1e-12):
            raise ValidationError("cannot predict for zero vectors")
        sims = (X @ self._centroids.T) / np.outer(norms, self._norms)
        rows = np.argmax(sims, axis=1)
        ids = np.array(self._row_ids)
        return ids[rows]

    # -- threshold adaptation ----------------------------------------------

    def _adjustment_round(self):
        if self.n_items_ >= 2:
            report = self.silhouette()
            self.last_silhouette_ = report
            if not report.degenerate:
                self.adjust_threshold(report.score)
        self.merge_similar_clusters()

    def adjust_threshold(self, score: float) -> float:
        """Adapt the join threshold from a silhouette score.

        Poor quality loosens the threshold, good quality tightens it;
        the result is always clamped into [0.3, 0.8].
        """
        if not self.dynamic:
            raise StateError("threshold adjustment requires dynamic=True")
        self._check_fitted()
        if not (-1.0 <= score <= 1.0):
            raise ValidationError(f"silhouette score {score} outside [-1, 1]")
        t = self.threshold_
        if score < 0.1:
            t = max(THRESHOLD_FLOOR, t * 0.95)
        elif score < 0.2:
            t = max(THRESHOLD_FLOOR, t * 0.98)
        elif score > 0.4:
            t = min(THRESHOLD_CEIL, t * 1.02)
        self.threshold_ = t
        return t

    def silhouette(self, sample_size: int | None = None,
                   rng_seed=None) -> SilhouetteReport:
        """Silhouette score over a uniform sample of ingested items.

        Distance is 1 - cosine similarity. Points whose cluster has no
        other sampled member score 0. With fewer than 2 distinct clusters
        in the sample the report is degenerate (score 0, no threshold
        change downstream).
        """
        self._check_fitted()
        if self.n_items_ < 2:
            raise StateError("silhouette needs at least 2 items")
        if sample_size is None:
            sample_size = self.silhouette_sample_size
        check_positive_int(sample_size, "sample_size")
        if rng_seed is None:
            # Deterministic per (seed, ingestion count): independent of
            # call history, so save/load/replay cannot drift.
            rng_seed = (self.random_state, self.n_items_)
        rng = np.random.default_rng(rng_seed)

        n = len(self._point_ids)
        m = min(sample_size, n)
        idx = np.sort(rng.choice(n, size=m, replace=False)) if m < n else np.arange(n)
        X = self._point_store[idx]
        labels = np.array([self._assignments[self._point_ids[i]] for i in idx])

        distinct = np.unique(labels)
        if distinct.shape[0] < 2:
            return SilhouetteReport(0.0, m, self._n_rows, degenerate=True)

        norms = np.linalg.norm(X, axis=1)
        dist = 1.0 - (X @ X.T) / np.outer(norms, norms)
        np.fill_diagonal(dist, 0.0)

        onehot = (labels[:, None] == distinct[None, :]).astype(np.float64)
        sums = dist @ onehot                      # (m, n_labels) distance sums
        counts = onehot.sum(axis=0)               # points per label in sample
        own = np.argmax(onehot, axis=1)           # column of each point's label

        own_counts = counts[own]
        with np.errstate(invalid="ignore", divide="ignore"):
            a = sums[np.arange(m), own] / np.maximum(own_counts - 1, 1)
            mean_to = sums / counts[None, :]
            mean_to[np.arange(m), own] = np.inf
            b = mean_to.min(axis=1)
            denom = np.maximum(a, b)
            s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        s[own_counts < 2] = 0.0  # singleton-in-sample convention

        return SilhouetteReport(float(np.mean(s)), m, self._n_rows)

    # -- merging ---------------------------------------------------------------

    def merge_similar_clusters(self) -> int:
        """Greedily merge the most similar centroid pair while above the
        merge threshold. Returns the number of merges performed.
        """
        self._check_fitted()
        merges = 0
        while self._n_rows > 1:
            cents = self._centroids
            sims = (cents @ cents.T) / np.outer(self._norms, self._norms)
            iu = np.triu_indices(self._n_rows, k=1)
            upper = sims[iu]
            best = int(np.argmax(upper))  # first max = lowest-id pair on ties
            if upper[best] <= self.merge_threshold:
                break
            self._merge_rows(int(iu[0][best]), int(iu[1][best]))
            merges += 1
        return merges

    def _merge_rows(self, keep_row: int, drop_row: int):
        keep_id = self._row_ids[keep_row]
        drop_id = self._row_ids[drop_row]
        n1 = int(self._count_store[keep_row])
        n2 = int(self._count_store[drop_row])
        merged = (n1 * self._cent_store[keep_row] +
                  n2 * self._cent_store[drop_row]) / (n1 + n2)
        self._cent_store[keep_row] = merged
        self._norm_store[keep_row] = np.linalg.norm(merged)
        self._count_store[keep_row] = n1 + n2
        for item_id in self._members[drop_id]:
            self._assignments[item_id] = keep_id
        self._members[keep_id].extend(self._members[drop_id])
        del self._members[drop_id]
        n = self._n_rows
        for store in (self._cent_store, self._norm_store, self._count_store):
            store[drop_row:n - 1] = store[drop_row + 1:n]
        self._row_ids.pop(drop_row)
        self._n_rows -= 1

    # -- persistence -------------------------------------------------------------

    def save(self, path) -> None:
        """Write a versioned JSON container (centroids, members, threshold
        state). Retained point embeddings are not persisted; a loaded model
        serves assignments and recommendations but resumes silhouette
        sampling only over newly ingested points.
        """
        self._check_fitted()
        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "dimension": self.dimension_,
            "params": {
                "threshold": self.threshold,
                "dynamic": self.dynamic,
                "update_frequency": self.update_frequency,
                "silhouette_sample_size": self.silhouette_sample_size,
                "merge_threshold": self.merge_threshold,
                "random_state": self.random_state,
            },
            "state": {
                "threshold": self.threshold_,
                "items_since_adjust": self.items_since_adjust_,
                "n_items": self.n_items_,
                "next_cluster_id": self._next_cluster_id,
            },
            "clusters": [
                {
                    "id": cid,
                    "centroid": [float(x) for x in self._cent_store[row]],
                    "members": self._members[cid],
                }
                for row, cid in enumerate(self._row_ids)
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "OnlineClusterer":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise PersistenceError(f"cannot read model file {path}: {exc}") from exc
        try:
            if payload.get("format") != MODEL_FORMAT:
                raise PersistenceError(
                    f"not a model file (format={payload.get('format')!r})")
            if payload.get("version") != MODEL_VERSION:
                raise PersistenceError(
                    f"unsupported model version {payload.get('version')!r}")
            model = cls(**payload["params"])
            dimension = int(payload["dimension"])
            model._reset(dimension)
            state = payload["state"]
            model.threshold_ = float(state["threshold"])
            model.items_since_adjust_ = int(state["items_since_adjust"])
            model.n_items_ = int(state["n_items"])
            model._next_cluster_id = int(state["next_cluster_id"])
            for spec in payload["clusters"]:
                cid = int(spec["id"])
                centroid = np.asarray(spec["centroid"], dtype=np.float64)
                if centroid.shape != (dimension,):
                    raise PersistenceError(
                        f"centroid of cluster {cid} has shape {centroid.shape}")
                if model._n_rows == model._cap:
                    model._grow_rows()
                row = model._n_rows
                model._cent_store[row] = centroid
                model._norm_store[row] = np.linalg.norm(centroid)
                model._count_store[row] = len(spec["members"])
                model._n_rows += 1
                model._row_ids.append(cid)
                model._members[cid] = list(spec["members"])
                for item_id in spec["members"]:
                    model._assignments[item_id] = cid
        except PersistenceError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise PersistenceError(f"corrupt model file {path}: {exc}") from exc
        return model


def save_model(model: OnlineClusterer, path) -> None:
    model.save(path)


def load_model(path) -> OnlineClusterer:
    return OnlineClusterer.load(path)
