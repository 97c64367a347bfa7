"""Cluster-based content recommendations with user-controlled exploration."""

from .baselines import (AlsRecommender, PopularityRecommender, RatingsMatrix,
                        load_ratings)
from .clustering import (Cluster, OnlineClusterer, SilhouetteReport,
                         load_model, save_model)
from .embedding import (Catalog, HashingEmbedder, Item, ServiceEmbedder,
                        build_item_text, cosine_similarity, hash_embed,
                        load_catalog, save_catalog)
from .errors import (CatalogParseError, ClusterecError, JudgeError,
                     PersistenceError, StateError, ValidationError)
from .metrics import intra_list_similarity, unexpectedness
from .recommender import RecommendationList, Recommender
from .simulation import (AbOutcome, ChatCompletionJudge, ExperimentConfig,
                         JudgeSettings, SimulatedUser, StubJudge,
                         build_simulated_users, run_ab_pair, run_experiment,
                         stub_judge)
from .users import UserProfile, load_users, save_users

__version__ = "0.1.0"

__all__ = [
    "AbOutcome", "AlsRecommender", "Catalog", "CatalogParseError",
    "ChatCompletionJudge", "Cluster", "ClusterecError", "ExperimentConfig",
    "HashingEmbedder", "Item", "JudgeError", "JudgeSettings",
    "OnlineClusterer", "PersistenceError", "PopularityRecommender",
    "RatingsMatrix", "RecommendationList", "Recommender",
    "ServiceEmbedder", "SilhouetteReport", "SimulatedUser", "StateError",
    "StubJudge", "UserProfile", "ValidationError", "build_item_text",
    "build_simulated_users", "cosine_similarity", "hash_embed",
    "intra_list_similarity", "load_catalog", "load_model", "load_ratings",
    "load_users", "run_ab_pair", "run_experiment", "save_catalog",
    "save_model", "save_users", "stub_judge", "unexpectedness",
    "__version__",
]
