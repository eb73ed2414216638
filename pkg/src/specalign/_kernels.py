"""Hot numeric kernels with a numba lane and a pure-numpy fallback lane.

The active lane is chosen at import time: numba is used when it imports
cleanly and the environment variable ``SPECALIGN_NO_NUMBA`` is unset (or
"0"). Both lanes implement identical arithmetic; ``benchmarks/bench_kernels.py``
times them side by side.
"""

import math
import os

import numpy as np

_env = os.environ.get("SPECALIGN_NO_NUMBA", "0")
NUMBA_DISABLED = _env not in ("", "0")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via SPECALIGN_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# Jacobi eigensolver: cyclic sweeps over all (p, q) pivots, rotations
# accumulated into V. Returns the sweep count at convergence, -1 otherwise.


def _jacobi_sweeps_py(a, v, tol, max_sweeps):
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        if math.sqrt(off) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    off = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                off += a[i, j] * a[i, j]
    if math.sqrt(off) <= tol:
        return max_sweeps
    return -1


def _jacobi_sweeps_numpy(a, v, tol, max_sweeps):
    """Same cyclic sweep schedule with vectorized row/column rotations."""
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off2 = np.sum(a * a) - np.sum(np.diag(a) ** 2)
        if math.sqrt(max(off2, 0.0)) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                rowp = a[p, :].copy()
                rowq = a[q, :].copy()
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    off2 = np.sum(a * a) - np.sum(np.diag(a) ** 2)
    if math.sqrt(max(off2, 0.0)) <= tol:
        return max_sweeps
    return -1


# ---------------------------------------------------------------------------
# Pairwise squared Euclidean distances.


def _pairwise_sq_dists_py(x):
    n, d = x.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - x[j, k]
                acc += diff * diff
            out[i, j] = acc
            out[j, i] = acc
    return out


def _pairwise_sq_dists_numpy(x):
    diff = x[:, None, :] - x[None, :, :]
    out = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(out, 0.0)
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# Row-wise top-k selection by descending score, ties to the lower index.
# Callers mask invalid candidates to -inf and guarantee >= k finite entries.


def _topk_desc_py(scores, k):
    n, m = scores.shape
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        chosen = np.zeros(m, dtype=np.bool_)
        for slot in range(k):
            best = -1
            bestv = -np.inf
            for j in range(m):
                if not chosen[j] and scores[i, j] > bestv:
                    bestv = scores[i, j]
                    best = j
            out[i, slot] = best
            chosen[best] = True
    return out


def _topk_desc_numpy(scores, k):
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k].astype(np.int64)


if HAVE_NUMBA:
    _jacobi_sweeps = njit(cache=True)(_jacobi_sweeps_py)
    _pairwise_sq_dists_nb = njit(cache=True)(_pairwise_sq_dists_py)
    _topk_desc_nb = njit(cache=True)(_topk_desc_py)

    def jacobi_sweeps(a, v, tol, max_sweeps):
        return _jacobi_sweeps(a, v, tol, max_sweeps)

    def pairwise_sq_dists_kernel(x):
        return _pairwise_sq_dists_nb(np.ascontiguousarray(x))

    def topk_desc(scores, k):
        return _topk_desc_nb(np.ascontiguousarray(scores), k)

else:
    jacobi_sweeps = _jacobi_sweeps_numpy
    pairwise_sq_dists_kernel = _pairwise_sq_dists_numpy
    topk_desc = _topk_desc_numpy


def active_lane() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
