"""Domain adaptation via adversarial alignment, graph spectral alignment,
and neighbor-aware pseudo-labeling, with explicit analytic gradients."""

from .graph import Graph, SimilarityMetric, build_knn_graph, laplacian_matrix, median_bandwidth
from .model import Network, NetworkSpec
from .nap import MemoryBank, PseudoLabelBatch, knn_vote, memory_update, sharpen
from .numeric import EigenDecomposition, finite_diff_grad, l2_normalize_rows, sym_eig
from .spectral import GsaConfig, LaplacianSpectrum, gsa_loss_and_grad, spectral_distance, spectrum
from .trainer import MetricsRecord, TrainConfig, a_distance, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "EigenDecomposition",
    "Graph",
    "GsaConfig",
    "LaplacianSpectrum",
    "MemoryBank",
    "MetricsRecord",
    "Network",
    "NetworkSpec",
    "PseudoLabelBatch",
    "SimilarityMetric",
    "TrainConfig",
    "a_distance",
    "build_knn_graph",
    "evaluate",
    "finite_diff_grad",
    "gsa_loss_and_grad",
    "knn_vote",
    "l2_normalize_rows",
    "laplacian_matrix",
    "median_bandwidth",
    "memory_update",
    "sharpen",
    "spectral_distance",
    "spectrum",
    "sym_eig",
    "train",
]
