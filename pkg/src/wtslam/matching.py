"""Descriptor similarity and brute-force KNN matching with Lowe ratio test.

Replaces projection-window and BoW matching with an exhaustive K nearest
neighbor search over Euclidean descriptor distance; for unit-norm
descriptors this is equivalent to ranking by inner-product score
(||a-b||^2 = 2 - 2*a.b).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset_io import DESCRIPTOR_DIM, DimensionMismatch

DEFAULT_RATIO = 0.8


class MatchingError(Exception):
    pass


class TooFewCandidates(MatchingError):
    pass


@dataclass
class Match:
    index_a: int
    index_b: int
    distance: float
    ratio: float


def _check_dims(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"descriptor shapes {A.shape} vs {B.shape}")
    return A, B


def score_matrix(A, B):
    """Inner-product score matrix S[i][j] = a_i . b_j."""
    A, B = _check_dims(A, B)
    return A @ B.T


def pairwise_distances(A, B):
    """Euclidean distance matrix; rows/cols of zero descriptors get +inf."""
    A, B = _check_dims(A, B)
    na = np.sum(A * A, axis=1)
    nb = np.sum(B * B, axis=1)
    d2 = na[:, None] + nb[None, :] - 2.0 * (A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    # degenerate zero descriptors never match anything
    d[na == 0.0, :] = np.inf
    d[:, nb == 0.0] = np.inf
    return d


def knn_match(A, B, k=2, ratio=DEFAULT_RATIO):
    """Exhaustive KNN match of query descriptors A against candidates B.

    Emits a Match per query only when best_dist < ratio * second_best_dist
    (ratio=None disables the test). Ties on equal distance resolve to the
    lower candidate index.
    """
    A, B = _check_dims(A, B)
    if ratio is not None and k < 2:
        raise ValueError("ratio test needs k >= 2")
    if len(B) < k:
        raise TooFewCandidates(f"{len(B)} candidates < k={k}")
    if len(A) == 0:
        return []
    d = pairwise_distances(A, B)
    # stable argsort: equal distances keep ascending index_b order
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    # recompute the selected distances directly; the dot-product expansion
    # above loses ~1e-8 to cancellation near zero
    for i in range(len(A)):
        for j in order[i]:
            if np.isfinite(d[i, j]):
                d[i, j] = np.linalg.norm(A[i] - B[j])
    matches = []
    for i in range(len(A)):
        j = int(order[i, 0])
        best = float(d[i, j])
        if not np.isfinite(best):
            continue
        second = float(d[i, int(order[i, 1])]) if k >= 2 else np.inf
        r = best / second if second > 0 else (0.0 if best == 0.0 else 1.0)
        if ratio is not None and not best < ratio * second:
            continue
        matches.append(Match(i, j, best, r))
    return matches


def mutual_filter(ab, ba):
    """Keep matches (i, j) from ab whose reverse (j, i) is present in ba."""
    reverse = {(m.index_a, m.index_b) for m in ba}
    return [m for m in ab if (m.index_b, m.index_a) in reverse]
