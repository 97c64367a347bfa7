import numpy as np
import pytest

from clusterec.clustering import OnlineClusterer
from clusterec.datasets import make_catalog, make_ratings
from clusterec.recommender import Recommender


@pytest.fixture(scope="session")
def small_world():
    """Catalog, topics, fitted model, ratings and recommender shared by
    read-only tests. 400 items over 12 topics keeps everything fast."""
    catalog, topics = make_catalog(n_items=400, n_topics=12, dimension=128,
                                   seed=3)
    model = OnlineClusterer(random_state=0).fit(catalog.matrix(), catalog.ids)
    ratings = make_ratings(topics, n_users=40, seed=3)
    recommender = Recommender(model, catalog)
    return {
        "catalog": catalog,
        "topics": topics,
        "model": model,
        "ratings": ratings,
        "recommender": recommender,
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)
