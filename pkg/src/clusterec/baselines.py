"""Comparison recommenders: ALS matrix factorization and popularity+genre.

Both exist to benchmark the cluster-based engine against conventional
collaborative and popularity strategies over the same ratings data.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .embedding import Catalog
from .errors import CatalogParseError, ValidationError
from .users import UserProfile
from .validation import check_positive_int

RATING_MIN = 0.5
RATING_MAX = 5.0
REG_FLOOR = 1e-8


class RatingsMatrix:
    """Sparse (user, item, rating, timestamp) store with dense index maps.

    User and item ids map to row/column indices in first-seen order; at most
    one rating per (user, item) pair.
    """

    def __init__(self, users, items, ratings, timestamps):
        self.user_ids = []
        self.item_ids = []
        self._user_index: dict = {}
        self._item_index: dict = {}
        rows, cols = [], []
        seen = set()
        for u, i in zip(users, items):
            if u not in self._user_index:
                self._user_index[u] = len(self.user_ids)
                self.user_ids.append(u)
            if i not in self._item_index:
                self._item_index[i] = len(self.item_ids)
                self.item_ids.append(i)
            pair = (self._user_index[u], self._item_index[i])
            if pair in seen:
                raise ValidationError(
                    f"duplicate rating for user {u!r}, item {i!r}")
            seen.add(pair)
            rows.append(pair[0])
            cols.append(pair[1])
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.values = np.asarray(ratings, dtype=np.float64)
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        if not (len(self.rows) == len(self.cols) == len(self.values)
                == len(self.timestamps)):
            raise ValidationError("ratings columns have mismatched lengths")
        bad = (self.values < RATING_MIN) | (self.values > RATING_MAX)
        if np.any(bad):
            raise ValidationError(
                f"ratings outside [{RATING_MIN}, {RATING_MAX}]: "
                f"{self.values[bad][:5]}")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def user_index(self, user_id) -> int:
        try:
            return self._user_index[user_id]
        except KeyError:
            raise ValidationError(f"unknown user {user_id!r}") from None

    def has_user(self, user_id) -> bool:
        return user_id in self._user_index

    def by_user(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-user (item indices, rating values), in user index order."""
        return self._grouped(self.rows, self.cols, self.n_users)

    def by_item(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-item (user indices, rating values), in item index order."""
        return self._grouped(self.cols, self.rows, self.n_items)

    def _grouped(self, group_keys, other, n_groups):
        order = np.argsort(group_keys, kind="stable")
        keys = group_keys[order]
        bounds = np.searchsorted(keys, np.arange(n_groups + 1))
        out = []
        for g in range(n_groups):
            sl = order[bounds[g]:bounds[g + 1]]
            out.append((other[sl], self.values[sl]))
        return out

    def events_of_user(self, user_id):
        """(item_id, rating, timestamp) triples ordered by timestamp then id."""
        idx = np.flatnonzero(self.rows == self.user_index(user_id))
        events = [(self.item_ids[self.cols[i]], float(self.values[i]),
                   int(self.timestamps[i])) for i in idx]
        events.sort(key=lambda e: (e[2], str(e[0])))
        return events


def load_ratings(path) -> RatingsMatrix:
    """Parse a ratings CSV with header ``userId,movieId,rating,timestamp``."""
    users, items, values, stamps = [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CatalogParseError("empty ratings file", 1) from None
        if [h.strip() for h in header] != ["userId", "movieId", "rating",
                                           "timestamp"]:
            raise CatalogParseError(
                f"expected header 'userId,movieId,rating,timestamp', "
                f"got {','.join(header)!r}", 1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise CatalogParseError(
                    f"expected 4 fields, got {len(row)}", line_no)
            try:
                users.append(int(row[0]))
                items.append(int(row[1]))
                values.append(float(row[2]))
                stamps.append(int(row[3]))
            except ValueError as exc:
                raise CatalogParseError(str(exc), line_no) from exc
    try:
        return RatingsMatrix(users, items, values, stamps)
    except ValidationError as exc:
        raise CatalogParseError(str(exc)) from exc


@dataclass
class FactorModel:
    """Learned latent factors; immutable once training finishes."""

    user_factors: np.ndarray
    item_factors: np.ndarray
    n_factors: int
    global_mean: float


class AlsRecommender(BaseEstimator):
    """Explicit-feedback matrix factorization trained by alternating exact
    least-squares solves.

    Minimizes sum((r_ui - p_u.q_i)^2) + reg * (sum ||p_u||^2 + sum ||q_i||^2),
    alternating closed-form solves for user rows (items fixed) and item rows
    (users fixed). Each half-step cannot increase the objective.

    Attributes after fit: ``user_factors_``, ``item_factors_``,
    ``global_mean_``, ``rmse_path_`` (training RMSE after each full
    iteration) and ``objective_path_`` (after each half-step).
    """

    def __init__(self, n_factors: int = 50, n_iterations: int = 15,
                 reg: float = 0.1, random_state: int = 0):
        self.n_factors = n_factors
        self.n_iterations = n_iterations
        self.reg = reg
        self.random_state = random_state

    def fit(self, ratings: RatingsMatrix):
        check_positive_int(self.n_factors, "n_factors")
        check_positive_int(self.n_iterations, "n_iterations")
        if self.reg < 0:
            raise ValidationError(f"reg must be >= 0, got {self.reg}")
        f = self.n_factors
        rng = np.random.default_rng(self.random_state)
        self._ratings = ratings
        self.global_mean_ = float(np.mean(ratings.values))
        self.user_factors_ = np.zeros((ratings.n_users, f))
        self.item_factors_ = rng.standard_normal((ratings.n_items, f)) * 0.1

        by_user = ratings.by_user()
        by_item = ratings.by_item()
        self.rmse_path_: list[float] = []
        self.objective_path_: list[float] = []
        for _ in range(self.n_iterations):
            self._solve_side(self.user_factors_, self.item_factors_, by_user)
            self.objective_path_.append(self._objective())
            self._solve_side(self.item_factors_, self.user_factors_, by_item)
            self.objective_path_.append(self._objective())
            self.rmse_path_.append(self._rmse())
        return self

    def _solve_side(self, target: np.ndarray, fixed: np.ndarray, groups):
        f = self.n_factors
        eye = np.eye(f)
        for row, (other_idx, values) in enumerate(groups):
            F = fixed[other_idx]
            A = F.T @ F + self.reg * eye
            b = F.T @ values
            try:
                target[row] = np.linalg.solve(A, b)
            except np.linalg.LinAlgError:
                warnings.warn(
                    f"singular normal equations (row {row}); applying "
                    f"regularization floor {REG_FLOOR}", RuntimeWarning)
                target[row] = np.linalg.solve(A + REG_FLOOR * eye, b)

    def _predictions(self) -> np.ndarray:
        r = self._ratings
        return np.einsum("ij,ij->i", self.user_factors_[r.rows],
                         self.item_factors_[r.cols])

    def _rmse(self) -> float:
        err = self._ratings.values - self._predictions()
        return float(np.sqrt(np.mean(err ** 2)))

    def _objective(self) -> float:
        err = self._ratings.values - self._predictions()
        return float(err @ err + self.reg * (np.sum(self.user_factors_ ** 2)
                                             + np.sum(self.item_factors_ ** 2)))

    def _check_fitted(self):
        if not hasattr(self, "user_factors_"):
            raise ValidationError("model is not fitted")

    def predict(self, user_id, item_ids=None) -> np.ndarray:
        """Predicted scores for one user over given item ids (default all)."""
        self._check_fitted()
        p = self.user_factors_[self._ratings.user_index(user_id)]
        if item_ids is None:
            return self.item_factors_ @ p
        idx = [self._ratings._item_index[i] for i in item_ids]
        return self.item_factors_[idx] @ p

    def recommend(self, user_id, k: int, viewed=()) -> list:
        """Top-k unseen item ids by predicted score, ties by lower id."""
        self._check_fitted()
        check_positive_int(k, "k")
        viewed = set(viewed)
        scores = self.predict(user_id)
        candidates = [(iid, scores[idx])
                      for iid, idx in zip(self._ratings.item_ids,
                                          range(len(self._ratings.item_ids)))
                      if iid not in viewed]
        candidates.sort(key=lambda t: str(t[0]))
        candidates.sort(key=lambda t: -t[1])  # stable: id order kept on ties
        return [iid for iid, _ in candidates[:k]]


class PopularityRecommender(BaseEstimator):
    """Global popularity ranking filtered through the user's top genres.

    Items rank by rating count, then mean rating, then lower id. A user's
    top 3 genres (by frequency over history items) gate the candidate set;
    without usable genre history the ranking is pure popularity.
    """

    def fit(self, catalog: Catalog, ratings: RatingsMatrix):
        counts: dict = {}
        sums: dict = {}
        for col, value in zip(ratings.cols, ratings.values):
            iid = ratings.item_ids[col]
            counts[iid] = counts.get(iid, 0) + 1
            sums[iid] = sums.get(iid, 0.0) + float(value)
        self.catalog_ = catalog
        ranked = []
        for item in catalog:
            c = counts.get(item.id, 0)
            mean = sums.get(item.id, 0.0) / c if c else 0.0
            ranked.append((item.id, c, mean, set(item.genres)))
        ranked.sort(key=lambda t: str(t[0]))
        ranked.sort(key=lambda t: (-t[1], -t[2]))  # stable: id breaks ties
        self.ranked_ = ranked
        return self

    def _check_fitted(self):
        if not hasattr(self, "ranked_"):
            raise ValidationError("model is not fitted")

    def top_genres(self, user: UserProfile, limit: int = 3) -> list[str]:
        """Most frequent genres across the user's history items."""
        self._check_fitted()
        freq: dict[str, int] = {}
        for _, item_id in user.history:
            if item_id in self.catalog_:
                for genre in self.catalog_.get(item_id).genres:
                    freq[genre] = freq.get(genre, 0) + 1
        ranked = sorted(freq, key=lambda g: (-freq[g], g))
        return ranked[:limit]

    def recommend(self, user: UserProfile, k: int) -> list:
        """Top-k unseen items, genre-filtered when the user has genre
        history; deterministic, no randomness involved."""
        self._check_fitted()
        check_positive_int(k, "k")
        genres = set(self.top_genres(user))
        unseen = [entry for entry in self.ranked_
                  if entry[0] not in user.viewed]
        if genres:
            matching = [entry for entry in unseen if entry[3] & genres]
            if matching:
                unseen = matching
        return [iid for iid, _, _, _ in unseen[:k]]
