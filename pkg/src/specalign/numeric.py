"""Dense matrix primitives: symmetric eigensolver and test utilities.

All arrays are float64 ndarrays. The eigensolver is a cyclic Jacobi
iteration, which is O(n^3) per sweep but returns full eigenvectors, needed
downstream for eigenvalue backpropagation. Batch-scale inputs (n <= 512)
keep this affordable.
"""

from typing import Callable, NamedTuple

import numpy as np

from . import _kernels
from .errors import ConvergenceError, DimensionError, SymmetryError

MAX_EIG_ORDER = 512
DEFAULT_EIG_TOL = 1e-10
MAX_JACOBI_SWEEPS = 100


class EigenDecomposition(NamedTuple):
    """Eigenvalues sorted descending; eigenvector column i pairs with value i."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_float_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def sym_eig(m, tol: float = DEFAULT_EIG_TOL) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Iterates sweeps until the off-diagonal Frobenius norm drops below
    ``tol`` (cap: 100 sweeps). Raises SymmetryError for inputs that are not
    symmetric to 1e-10 and ConvergenceError if the cap is hit.
    """
    a = _as_float_matrix(m)
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"expected square matrix, got {a.shape}")
    if n > MAX_EIG_ORDER:
        raise DimensionError(f"matrix order {n} exceeds supported {MAX_EIG_ORDER}")
    if np.max(np.abs(a - a.T)) > 1e-10:
        raise SymmetryError(
            f"matrix not symmetric: max|M - M^T| = {np.max(np.abs(a - a.T)):.3e}"
        )
    work = 0.5 * (a + a.T)
    vecs = np.eye(n)
    sweeps = _kernels.jacobi_sweeps(work, vecs, float(tol), MAX_JACOBI_SWEEPS)
    if sweeps < 0:
        raise ConvergenceError(
            f"Jacobi iteration did not reach off-diagonal norm {tol:.1e} "
            f"in {MAX_JACOBI_SWEEPS} sweeps (n={n})"
        )
    vals = np.diag(work).copy()
    order = np.argsort(-vals, kind="stable")
    return EigenDecomposition(vals[order], vecs[:, order])


def pairwise_sq_dists(x) -> np.ndarray:
    """All squared Euclidean distances: entry (i, j) = ||x_i - x_j||^2."""
    a = _as_float_matrix(x, "X")
    return _kernels.pairwise_sq_dists_kernel(a)


def l2_normalize_rows(x) -> np.ndarray:
    """Scale every nonzero row to unit Euclidean norm; zero rows pass through."""
    a = _as_float_matrix(x, "X")
    norms = np.sqrt(np.sum(a * a, axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    return a / safe[:, None]


def l2_normalize_rows_backward(x, grad_out) -> np.ndarray:
    """Exact gradient pullback through l2_normalize_rows.

    Zero rows pass the incoming gradient through unchanged, mirroring the
    forward passthrough.
    """
    a = _as_float_matrix(x, "X")
    g = np.asarray(grad_out, dtype=np.float64)
    norms = np.sqrt(np.sum(a * a, axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    y = a / safe[:, None]
    dot = np.sum(g * y, axis=1, keepdims=True)
    out = (g - dot * y) / safe[:, None]
    out[norms == 0.0] = g[norms == 0.0]
    return out


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float) -> np.ndarray:
    """Central-difference gradient of a scalar function of a matrix.

    Entry (i, j) is (f(X + h e_ij) - f(X - h e_ij)) / (2h). Used as the
    independent oracle for every analytic gradient in the package.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    a = np.array(x, dtype=np.float64)
    grad = np.zeros_like(a)
    it = np.nditer(a, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = a[idx]
        a[idx] = orig + h
        fp = f(a)
        a[idx] = orig - h
        fm = f(a)
        a[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return grad
