"""Diversity and novelty metrics over recommendation lists.

Both metrics take embeddings, not item ids, so they apply identically to
every recommender under comparison; id-to-embedding resolution is the
caller's job. Both are invariant to positive rescaling of any input vector.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .validation import as_vector


def _normalized_rows(embeddings, name: str) -> np.ndarray:
    rows = [as_vector(e, f"{name}[{i}]") for i, e in enumerate(embeddings)]
    if not rows:
        raise ValidationError(f"{name} is empty")
    dim = rows[0].shape[0]
    for i, r in enumerate(rows):
        if r.shape[0] != dim:
            raise ValidationError(
                f"{name}[{i}] has dimension {r.shape[0]}, expected {dim}")
    X = np.vstack(rows)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms < 1e-12):
        raise ValidationError(f"{name} contains a zero vector")
    return X / norms[:, None]


def intra_list_similarity(rec_embeddings) -> float:
    """Mean pairwise cosine similarity within one list; lower = more diverse.

    Averages over all ordered pairs i != j (identical to the unordered-pair
    mean by symmetry). Requires at least 2 items.
    """
    X = _normalized_rows(rec_embeddings, "rec_embeddings")
    n = X.shape[0]
    if n < 2:
        raise ValidationError(
            f"intra-list similarity needs at least 2 items, got {n}")
    gram = X @ X.T
    return float((gram.sum() - np.trace(gram)) / (n * (n - 1)))


def unexpectedness(rec_embeddings, history_embeddings) -> float:
    """Mean over recommended items of one minus the highest similarity to
    any history item; higher = more novel relative to what was consumed.
    """
    R = _normalized_rows(rec_embeddings, "rec_embeddings")
    H = _normalized_rows(history_embeddings, "history_embeddings")
    if R.shape[1] != H.shape[1]:
        raise ValidationError(
            f"dimension mismatch: recommendations {R.shape[1]}, "
            f"history {H.shape[1]}")
    nearest = (R @ H.T).max(axis=1)
    return float(np.mean(1.0 - nearest))
