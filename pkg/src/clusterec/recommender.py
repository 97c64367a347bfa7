"""Recommendation generation with a user-controlled exploration split.

Two modes share one engine. Cold start embeds the user's interest keywords,
averages them into a query vector, ranks clusters against it and samples
from the best three. Personalized mode counts recent interactions per
cluster; exploitation samples from the user's top 3 clusters, and with
exploration on, floor(2k/3) of the list is drawn from every other cluster
instead, widening coverage while the remaining third stays familiar.

Sampling is uniform without replacement via seeded permutations. The
exploit stage consumes its own child seed, so for a fixed seed the exploit
slots of an exploration list are a prefix of the corresponding
exploitation-only list; paired A/B comparisons isolate the exploration
effect instead of resampling everything.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import OnlineClusterer
from .embedding import Catalog, HashingEmbedder
from .errors import StateError, ValidationError
from .users import UserProfile
from .validation import check_positive_int

DEFAULT_HISTORY_THRESHOLD = 10
DEFAULT_WINDOW_SIZE = 50
TOP_CLUSTER_COUNT = 3

EXPLOIT_STREAM = 1
EXPLORE_STREAM = 2


@dataclass
class RecommendationList:
    """Ordered recommendation ids plus provenance flags.

    ``explore_item_ids`` marks which items were drawn from outside the
    user's top clusters (empty when exploration is off). ``truncated`` is
    set when eligible pools could not fill k slots; ``explore_shortfall``
    when the exploration pool alone ran dry and exploit items filled in.
    """

    items: list
    mode: str
    explore: bool
    explore_item_ids: list = field(default_factory=list)
    truncated: bool = False
    explore_shortfall: bool = False

    def __len__(self) -> int:
        return len(self.items)


def _child_rng(seed, stream: int) -> np.random.Generator:
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng((seed, stream))


def _sample_prefix(pool: list, n: int, rng: np.random.Generator) -> list:
    """First n entries of a seeded permutation: uniform without replacement,
    and draws for smaller n are a prefix of draws for larger n."""
    if n <= 0:
        return []
    order = rng.permutation(len(pool))
    return [pool[i] for i in order[:n]]


class Recommender:
    """Recommendation engine over a cluster model and its catalog.

    Parameters
    ----------
    model : OnlineClusterer
        Fitted cluster model; read-only here.
    catalog : Catalog
        Items the model was built from.
    embedder : object, optional
        Used to embed cold-start keywords; must match the space the catalog
        embeddings live in. Defaults to a hashing embedder of the catalog
        dimension, which is only correct for hash-embedded catalogs.
    history_threshold : int
        Interactions at which cold start hands over to personalized mode.
    window_size : int
        Recent-history window for cluster preference counting.
    """

    def __init__(self, model: OnlineClusterer, catalog: Catalog, embedder=None,
                 history_threshold: int = DEFAULT_HISTORY_THRESHOLD,
                 window_size: int = DEFAULT_WINDOW_SIZE):
        self.model = model
        self.catalog = catalog
        self.embedder = embedder or HashingEmbedder(dimension=catalog.dimension)
        self.history_threshold = check_positive_int(
            history_threshold, "history_threshold")
        self.window_size = check_positive_int(window_size, "window_size")

    # -- routing ------------------------------------------------------------

    def recommend(self, user: UserProfile, k: int, explore: bool = False,
                  seed=None) -> RecommendationList:
        """Route to cold start or personalized mode by history length."""
        if user.history_length >= self.history_threshold:
            return self.recommend_personalized(user, k, explore=explore,
                                               seed=seed)
        return self.recommend_cold_start(user, k, seed=seed)

    # -- cold start -----------------------------------------------------------

    def recommend_cold_start(self, user: UserProfile, k: int, seed=None,
                             history_threshold: int | None = None
                             ) -> RecommendationList:
        """Keyword-driven recommendations for users with little history.

        Users at or past the history threshold are delegated to
        :meth:`recommend_personalized` (exploration off).
        """
        check_positive_int(k, "k")
        threshold = (self.history_threshold if history_threshold is None
                     else check_positive_int(history_threshold,
                                             "history_threshold"))
        if user.history_length >= threshold:
            return self.recommend_personalized(user, k, explore=False,
                                               seed=seed)
        if not user.prefs:
            raise ValidationError(
                f"user {user.user_id!r} has no keyword preferences and "
                f"history below threshold {threshold}")
        if not hasattr(self.model, "dimension_") or self.model.n_clusters_ == 0:
            raise StateError("cluster model is empty; ingest a catalog first")

        keyword_vectors = self.embedder.transform(user.prefs)
        query = np.asarray(keyword_vectors, dtype=np.float64).mean(axis=0)
        if float(np.linalg.norm(query)) < 1e-12:
            raise ValidationError("keyword embeddings average to a zero vector")

        top = self._rank_clusters_by_query(query)[:TOP_CLUSTER_COUNT]
        pool = self._unseen_members(top, user.viewed)
        chosen = _sample_prefix(pool, k, _child_rng(seed, EXPLOIT_STREAM))
        return RecommendationList(
            items=chosen,
            mode="cold_start",
            explore=False,
            truncated=len(chosen) < k,
        )

    def _rank_clusters_by_query(self, query: np.ndarray) -> list[int]:
        sims = (self.model._centroids @ query) / (
            self.model._norms * np.linalg.norm(query))
        order = np.argsort(-sims, kind="stable")  # ties: lowest cluster id
        return [self.model._row_ids[i] for i in order]

    def _unseen_members(self, cluster_ids, viewed) -> list:
        pool = []
        for cid in cluster_ids:
            pool.extend(i for i in self.model.members_of(cid)
                        if i not in viewed)
        return pool

    # -- personalized ------------------------------------------------------

    def recommend_personalized(self, user: UserProfile, k: int,
                               explore: bool = False, seed=None,
                               window_size: int | None = None
                               ) -> RecommendationList:
        """History-driven recommendations with optional exploration.

        With exploration on, floor(2k/3) slots are sampled from clusters
        outside the user's top 3; the rest (and everything, when off) comes
        from the top clusters.
        """
        check_positive_int(k, "k")
        window = (self.window_size if window_size is None
                  else check_positive_int(window_size, "window_size"))
        if user.history_length == 0:
            raise StateError(
                f"user {user.user_id!r} has no history; use cold start")
        if not hasattr(self.model, "dimension_") or self.model.n_clusters_ == 0:
            raise StateError("cluster model is empty; ingest a catalog first")

        top = self._top_clusters(user, window)
        exploit_pool = self._unseen_members(top, user.viewed)
        exploit_rng = _child_rng(seed, EXPLOIT_STREAM)

        explore_chosen: list = []
        explore_shortfall = False
        if explore:
            explore_count = (2 * k) // 3
            top_set = set(top)
            other = [cid for cid in self.model._row_ids if cid not in top_set]
            explore_pool = self._unseen_members(other, user.viewed)
            explore_chosen = _sample_prefix(
                explore_pool, explore_count, _child_rng(seed, EXPLORE_STREAM))
            explore_shortfall = len(explore_chosen) < explore_count

        exploit_count = k - len(explore_chosen)
        exploit_chosen = _sample_prefix(exploit_pool, exploit_count, exploit_rng)

        items = (explore_chosen + exploit_chosen)[:k]
        return RecommendationList(
            items=items,
            mode="personalized",
            explore=explore,
            explore_item_ids=list(explore_chosen),
            truncated=len(items) < k,
            explore_shortfall=explore_shortfall,
        )

    def _top_clusters(self, user: UserProfile, window: int) -> list[int]:
        """Top clusters by interaction count over the recent window.

        Ties break by most recent interaction, then lower cluster id.
        Cluster ids recorded in history are remapped to each item's current
        cluster so merges cannot leave preferences pointing at retired ids.
        """
        recent = user.history[-window:]
        counts: dict[int, int] = {}
        last_seen: dict[int, int] = {}
        for pos, (recorded_cid, item_id) in enumerate(recent):
            try:
                cid = self.model.cluster_of(item_id)
            except ValidationError:
                cid = recorded_cid
                if cid not in self.model._members:
                    continue  # neither item nor recorded cluster known
            counts[cid] = counts.get(cid, 0) + 1
            last_seen[cid] = pos
        if not counts:
            raise StateError(
                f"user {user.user_id!r}: no history items map to the model")
        ranked = sorted(counts, key=lambda c: (-counts[c], -last_seen[c], c))
        return ranked[:TOP_CLUSTER_COUNT]

    # -- interactions --------------------------------------------------------

    def record_interaction(self, user: UserProfile, item_id) -> UserProfile:
        """Append one interaction: history grows always, viewed is a set.

        The cluster id stored is the item's cluster at interaction time.
        """
        if item_id not in self.catalog:
            raise ValidationError(f"unknown item id {item_id!r}")
        cluster_id = self.model.cluster_of(item_id)
        user.history.append((cluster_id, item_id))
        user.viewed.add(item_id)
        return user
