"""Symmetric weighted kNN graphs over feature batches and their Laplacians.

Edges carry similarity weights in [0, 1]: clamped cosine, or a Gaussian
kernel on squared distances. Directed kNN selection (ties to the lower
index) is symmetrized by averaging, so the adjacency stays in [0, 1] and
the normalized Laplacians are well defined.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import GraphConstructionError
from .numeric import _as_float_matrix, pairwise_sq_dists

DEGREE_FLOOR = 1e-12

LAPLACIAN_KINDS = ("rwk", "sym")


@dataclass(frozen=True)
class SimilarityMetric:
    """Edge-weight function: 'cosine' or 'gaussian'.

    For 'gaussian', ``bandwidth`` is the kernel scale in units of squared
    feature distance; None defers to the median heuristic at graph build.
    """

    kind: str
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in ("cosine", "gaussian"):
            raise ValueError(f"unknown similarity metric {self.kind!r}")
        if self.bandwidth is not None:
            if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
                raise ValueError("gaussian bandwidth must be finite and positive")


@dataclass(frozen=True)
class Graph:
    """Symmetric weighted kNN graph: zero diagonal, entries in [0, 1].

    ``neighbor_lists[i]`` holds the k directed selections of vertex i;
    adjacency (i, j) is nonzero only if one selected the other. ``metric``
    carries the resolved bandwidth actually used for the weights.
    """

    n: int
    adjacency: np.ndarray
    neighbor_lists: np.ndarray
    metric: SimilarityMetric
    k: int


def check_laplacian_kind(kind: str) -> str:
    if kind not in LAPLACIAN_KINDS:
        raise ValueError(f"laplacian kind must be one of {LAPLACIAN_KINDS}, got {kind!r}")
    return kind


def median_bandwidth(x, k: int) -> float:
    """Median of all kNN squared distances, floored at 1e-12.

    Scale-free default for the Gaussian kernel; scaling X by c scales the
    result by c^2.
    """
    a = _as_float_matrix(x, "X")
    n = a.shape[0]
    if n < 2:
        raise GraphConstructionError("median_bandwidth needs at least 2 points")
    kk = min(k, n - 1)
    d2 = pairwise_sq_dists(a)
    np.fill_diagonal(d2, np.inf)
    knn = np.sort(d2, axis=1)[:, :kk]
    med = float(np.median(knn))
    return med if med > 0.0 else 1e-12


def cosine_similarity_matrix(x) -> np.ndarray:
    """Raw cosine similarities between rows; zero rows get similarity 0."""
    a = _as_float_matrix(x, "X")
    norms = np.sqrt(np.sum(a * a, axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    u = a / safe[:, None]
    sim = u @ u.T
    sim[norms == 0.0, :] = 0.0
    sim[:, norms == 0.0] = 0.0
    return sim


def _similarity_and_weights(x, metric: SimilarityMetric):
    """Return (selection scores, full weight matrix), both with zero diagonal.

    Scores rank candidate neighbors; weights are the edge values actually
    stored (cosine clamped to [0, 1], Gaussian already in (0, 1]).
    """
    if metric.kind == "gaussian":
        bw = metric.bandwidth
        if bw is None:
            raise ValueError("gaussian metric bandwidth unresolved")
        d2 = pairwise_sq_dists(x)
        w = np.exp(-d2 / (2.0 * bw))
        np.fill_diagonal(w, 0.0)
        return w.copy(), w
    sim = cosine_similarity_matrix(x)
    np.fill_diagonal(sim, 0.0)
    w = np.maximum(sim, 0.0)
    return sim.copy(), w


def resolve_metric(x, k: int, metric: SimilarityMetric) -> SimilarityMetric:
    """Fill in a concrete Gaussian bandwidth (median heuristic) if unset."""
    if metric.kind == "gaussian" and metric.bandwidth is None:
        return replace(metric, bandwidth=median_bandwidth(x, k))
    return metric


def build_knn_graph(x, k: int, metric: SimilarityMetric) -> Graph:
    """Directed kNN by similarity (ties to lower index), then averaged
    symmetrization A = (A_dir + A_dir^T) / 2."""
    a = _as_float_matrix(x, "X")
    n = a.shape[0]
    if n < 2:
        raise GraphConstructionError(f"need at least 2 vertices, got {n}")
    if not 1 <= k <= n - 1:
        raise GraphConstructionError(f"k must satisfy 1 <= k <= {n - 1}, got {k}")
    metric = resolve_metric(a, k, metric)
    scores, weights = _similarity_and_weights(a, metric)
    np.fill_diagonal(scores, -np.inf)
    neighbors = _kernels.topk_desc(scores, k)
    a_dir = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k)
    a_dir[rows, neighbors.ravel()] = weights[rows, neighbors.ravel()]
    adj = 0.5 * (a_dir + a_dir.T)
    np.fill_diagonal(adj, 0.0)
    return Graph(n=n, adjacency=adj, neighbor_lists=neighbors, metric=metric, k=k)


def directed_mask(g: Graph) -> np.ndarray:
    """0/1 matrix of the directed kNN selections recorded in the graph."""
    m = np.zeros((g.n, g.n))
    rows = np.repeat(np.arange(g.n), g.k)
    m[rows, g.neighbor_lists.ravel()] = 1.0
    return m


def laplacian_matrix(g: Graph, kind: str) -> np.ndarray:
    """Normalized Laplacian-family matrix of the graph.

    'sym' returns I - D^{-1/2} A D^{-1/2}. 'rwk' returns the symmetric
    matrix D^{-1/2} A D^{-1/2}, which shares its eigenvalues with D^{-1} A.
    Degrees are floored at 1e-12 so the normalization never divides by zero.
    """
    check_laplacian_kind(kind)
    adj = g.adjacency
    deg = np.maximum(adj.sum(axis=1), DEGREE_FLOOR)
    inv_sqrt = 1.0 / np.sqrt(deg)
    s = inv_sqrt[:, None] * adj * inv_sqrt[None, :]
    if kind == "rwk":
        return s
    return np.eye(g.n) - s


def connected_components(adjacency: np.ndarray) -> int:
    """Number of connected components of the positive-weight graph."""
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    count = 0
    for start in range(n):
        if seen[start]:
            continue
        count += 1
        stack = [start]
        seen[start] = True
        while stack:
            v = stack.pop()
            for w in np.nonzero(adjacency[v] > 0.0)[0]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
    return count
