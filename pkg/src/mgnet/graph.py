"""Population graph: Gaussian-kernel KNN adjacency over node descriptors and its normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .tensor import as_matrix


@dataclass(frozen=True)
class PopulationGraph:
    adjacency: np.ndarray
    normalized: np.ndarray
    k_neighbors: int
    kernel_width: float


def pairwise_distances(u) -> np.ndarray:
    u = as_matrix(u, "node descriptors")
    sq = np.sum((u[:, None, :] - u[None, :, :]) ** 2, axis=-1)
    return np.sqrt(sq)


def median_distance(u) -> float:
    d = pairwise_distances(u)
    iu = np.triu_indices(d.shape[0], k=1)
    return float(np.median(d[iu]))


def knn_adjacency(u, k: int, width: float | None = None) -> tuple[np.ndarray, float]:
    """Symmetric KNN-union adjacency with Gaussian weights.

    Node j is linked to i when j is among the ``k`` nearest of i or vice versa;
    distance ties go to the lower node index. ``width`` defaults to the median
    pairwise distance. Returns ``(A, width_used)``.
    """
    u = as_matrix(u, "node descriptors")
    n = u.shape[0]
    if n < 2:
        raise ShapeError("need at least two nodes to build a graph")
    if not 1 <= k <= n - 1:
        raise ConfigError(f"K must lie in [1, {n - 1}], got {k}")
    d = pairwise_distances(u)
    if width is None:
        width = float(np.median(d[np.triu_indices(n, k=1)]))
        if width <= 0:
            raise NumericalError("all node descriptors coincide; median kernel width is zero")
    elif not width > 0:
        raise ConfigError(f"kernel width must be positive, got {width}")

    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        cand = np.delete(np.arange(n), i)
        order = np.argsort(d[i, cand], kind="stable")
        mask[i, cand[order[:k]]] = True
    mask |= mask.T
    w = np.exp(-(d ** 2) / (2.0 * width ** 2))
    a = np.where(mask, w, 0.0)
    a = np.triu(a, 1)
    return a + a.T, float(width)


def normalize(a) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with degrees taken from ``A + I``."""
    a = as_matrix(a, "adjacency")
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    if not np.array_equal(a, a.T):
        raise ShapeError("adjacency must be exactly symmetric")
    if np.any(a < 0):
        raise ShapeError("adjacency must be nonnegative")
    at = a + np.eye(a.shape[0])
    dinv = 1.0 / np.sqrt(at.sum(axis=1))
    out = at * dinv[:, None] * dinv[None, :]
    # keep exact symmetry despite rounding in the two scalings
    return np.triu(out) + np.triu(out, 1).T


def build_graph(u, k: int, width: float | None = None) -> PopulationGraph:
    a, sigma = knn_adjacency(u, k, width)
    return PopulationGraph(adjacency=a, normalized=normalize(a), k_neighbors=k, kernel_width=sigma)
