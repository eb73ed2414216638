"""Spectral distance between domain graphs and its gradient to the features.

The alignment loss is the p-norm distance between descending-sorted
Laplacian eigenvalue vectors of two equal-size kNN graphs. The gradient
chain runs eigenvalues -> normalized adjacency -> symmetrized directed
weights -> similarity weights -> features, with the kNN selection (and a
median-heuristic bandwidth, when used) frozen for the step.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .graph import (
    DEGREE_FLOOR,
    Graph,
    SimilarityMetric,
    build_knn_graph,
    check_laplacian_kind,
    cosine_similarity_matrix,
    directed_mask,
    laplacian_matrix,
)
from .numeric import _as_float_matrix, pairwise_sq_dists, sym_eig


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Eigenvalues sorted descending with matching eigenvector columns."""

    kind: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class GsaConfig:
    """Graph construction and norm parameters for the alignment loss."""

    k: int = 5
    metric: SimilarityMetric = field(default_factory=lambda: SimilarityMetric("gaussian"))
    laplacian: str = "rwk"
    p: float = 2.0
    zero_eps: float = 1e-9

    def __post_init__(self):
        check_laplacian_kind(self.laplacian)
        if self.p < 1.0:
            raise ValueError(f"norm order p must be >= 1, got {self.p}")
        if self.zero_eps <= 0.0:
            raise ValueError("zero_eps must be positive")


def spectrum(x, cfg: GsaConfig) -> LaplacianSpectrum:
    """Laplacian spectrum of the kNN graph built on the rows of x."""
    g = build_knn_graph(x, cfg.k, cfg.metric)
    decomp = sym_eig(laplacian_matrix(g, cfg.laplacian))
    return LaplacianSpectrum(cfg.laplacian, decomp.eigenvalues, decomp.eigenvectors)


def spectral_distance(lam_s, lam_t, p: float) -> float:
    """p-norm of the difference of two equal-length sorted spectra."""
    a = np.asarray(lam_s, dtype=np.float64)
    b = np.asarray(lam_t, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(
            f"spectra must be equal-length vectors, got {a.shape} and {b.shape}"
        )
    if p < 1.0:
        raise ValueError(f"norm order p must be >= 1, got {p}")
    diff = np.abs(a - b)
    if p == np.inf:
        return float(diff.max()) if diff.size else 0.0
    return float(np.sum(diff**p) ** (1.0 / p))


def _graph_side(x, cfg: GsaConfig):
    """Build one side's graph and eigendecomposed matrix."""
    g = build_knn_graph(x, cfg.k, cfg.metric)
    m = laplacian_matrix(g, cfg.laplacian)
    decomp = sym_eig(m)
    return g, decomp


def _normalized_adjacency_backward(g: Graph, d_s: np.ndarray) -> np.ndarray:
    """Pull a gradient on S = D^{-1/2} A D^{-1/2} back to the adjacency.

    Degrees are row sums of A; the floored entries contribute no degree
    derivative. Returns dLoss/dA treating every entry of A independently.
    """
    adj = g.adjacency
    raw_deg = adj.sum(axis=1)
    deg = np.maximum(raw_deg, DEGREE_FLOOR)
    inv_sqrt = 1.0 / np.sqrt(deg)
    s = inv_sqrt[:, None] * adj * inv_sqrt[None, :]
    direct = d_s * (inv_sqrt[:, None] * inv_sqrt[None, :])
    gs = d_s * s
    row_plus_col = gs.sum(axis=1) + gs.sum(axis=0)
    live = raw_deg > DEGREE_FLOOR
    degree_term = np.where(live, 0.5 * row_plus_col / deg, 0.0)
    return direct - degree_term[:, None]


def _weights_to_features_backward(
    x: np.ndarray, metric: SimilarityMetric, coef: np.ndarray
) -> np.ndarray:
    """Pull symmetric per-pair weight gradients back to the feature rows.

    ``coef[i, j]`` multiplies d(similarity(x_i, x_j)); the kNN selection
    mask is already folded into it.
    """
    if metric.kind == "gaussian":
        bw = metric.bandwidth
        d2 = pairwise_sq_dists(x)
        w = np.exp(-d2 / (2.0 * bw))
        np.fill_diagonal(w, 0.0)
        p = coef * w
        return -(p.sum(axis=1)[:, None] * x - p @ x) / bw
    norms = np.sqrt(np.sum(x * x, axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    u = x / safe[:, None]
    cos = cosine_similarity_matrix(x)
    q = coef * (cos > 0.0)
    np.fill_diagonal(q, 0.0)
    scale = (q * cos).sum(axis=1)
    grad = (q @ u - scale[:, None] * u) / safe[:, None]
    grad[norms == 0.0] = 0.0
    return grad


def _side_gradient(x: np.ndarray, g: Graph, decomp, lam_grad: np.ndarray, kind: str):
    """Gradient of the loss wrt one side's features given dLoss/d(eigenvalues)."""
    vecs = decomp.eigenvectors
    d_m = (vecs * lam_grad[None, :]) @ vecs.T
    d_s = -d_m if kind == "sym" else d_m
    d_a = _normalized_adjacency_backward(g, d_s)
    b = 0.5 * (d_a + d_a.T)
    mask = directed_mask(g)
    coef = b * (mask + mask.T)
    return _weights_to_features_backward(x, g.metric, coef)


def gsa_loss_and_grad(xs, xt, cfg: GsaConfig):
    """Spectral alignment loss between two feature batches and its gradients.

    Both batches must share the same shape (Def.-level requirement of equal
    vertex counts). Returns (loss, dLoss/dXs, dLoss/dXt); when the loss is
    below ``cfg.zero_eps`` the graphs are already aligned and both
    gradients are zero.
    """
    a = _as_float_matrix(xs, "Xs")
    b = _as_float_matrix(xt, "Xt")
    if a.shape != b.shape:
        raise DimensionError(
            f"source/target batches must match in shape, got {a.shape} vs {b.shape}"
        )
    gs, dec_s = _graph_side(a, cfg)
    gt, dec_t = _graph_side(b, cfg)
    loss = spectral_distance(dec_s.eigenvalues, dec_t.eigenvalues, cfg.p)
    if loss < cfg.zero_eps:
        return loss, np.zeros_like(a), np.zeros_like(b)
    d = dec_s.eigenvalues - dec_t.eigenvalues
    g = np.sign(d) * np.abs(d) ** (cfg.p - 1.0) * loss ** (1.0 - cfg.p)
    grad_s = _side_gradient(a, gs, dec_s, g, cfg.laplacian)
    grad_t = _side_gradient(b, gt, dec_t, -g, cfg.laplacian)
    return loss, grad_s, grad_t
