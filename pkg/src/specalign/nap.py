"""Neighbor-aware pseudo-labeling over a target-set memory bank.

The bank keeps one sharpened probability row and one unit-norm feature row
per target sample, refreshed by an EMA where beta weights history. Voting
pools the stored probabilities of the k nearest initialized slots (by
inner product on unit features) and weighs the self-training loss by the
normalized vote mass of the winning class.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InsufficientMemoryError, InvalidTemperatureError
from .numeric import _as_float_matrix

PROB_FLOOR = 1e-12


@dataclass
class MemoryBank:
    """Per-target-sample store of sharpened predictions and unit features."""

    probs: np.ndarray
    feats: np.ndarray
    beta: float
    tau: float
    initialized: np.ndarray

    @classmethod
    def create(cls, n_targets: int, num_classes: int, dim: int, beta: float, tau: float):
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {beta}")
        if tau <= 0.0:
            raise InvalidTemperatureError(f"tau must be positive, got {tau}")
        return cls(
            probs=np.zeros((n_targets, num_classes)),
            feats=np.zeros((n_targets, dim)),
            beta=float(beta),
            tau=float(tau),
            initialized=np.zeros(n_targets, dtype=bool),
        )

    @property
    def num_initialized(self) -> int:
        return int(self.initialized.sum())

    @property
    def fully_initialized(self) -> bool:
        return bool(self.initialized.all())


@dataclass(frozen=True)
class PseudoLabelBatch:
    """Votes normalized per row; confidence is the winning class's share."""

    labels: np.ndarray
    votes: np.ndarray
    confidence: np.ndarray


def sharpen(p, tau: float) -> np.ndarray:
    """Temperature-sharpen a probability vector: p_c^(1/tau), renormalized.

    Entries are floored at 1e-12 before exponentiation so zero entries stay
    harmless for tau > 1; the argmax is preserved for every tau.
    """
    if tau <= 0.0:
        raise InvalidTemperatureError(f"tau must be positive, got {tau}")
    v = np.maximum(np.asarray(p, dtype=np.float64), PROB_FLOOR)
    powed = v ** (1.0 / tau)
    return powed / powed.sum()


def memory_update(bank: MemoryBank, idx: int, p, f) -> MemoryBank:
    """Write one sample's sharpened prediction and unit feature into the bank.

    First write to a slot stores the values directly; later writes blend
    beta * old + (1 - beta) * new, then renormalize (probabilities to sum 1,
    features to unit norm). Mutates and returns the bank.
    """
    n = bank.probs.shape[0]
    if not 0 <= idx < n:
        raise IndexError(f"bank index {idx} out of range [0, {n})")
    p_new = sharpen(p, bank.tau)
    f_new = np.asarray(f, dtype=np.float64)
    norm = float(np.sqrt(np.sum(f_new * f_new)))
    f_new = f_new / norm if norm > 0.0 else f_new
    if not bank.initialized[idx]:
        bank.probs[idx] = p_new
        bank.feats[idx] = f_new
        bank.initialized[idx] = True
        return bank
    b = bank.beta
    p_mix = b * bank.probs[idx] + (1.0 - b) * p_new
    f_mix = b * bank.feats[idx] + (1.0 - b) * f_new
    bank.probs[idx] = p_mix / p_mix.sum()
    f_norm = float(np.sqrt(np.sum(f_mix * f_mix)))
    bank.feats[idx] = f_mix / f_norm if f_norm > 0.0 else f_mix
    return bank


def knn_vote(bank: MemoryBank, query_feats, query_indices, k: int) -> PseudoLabelBatch:
    """Pseudo-label queries by pooling their k nearest memory slots.

    Neighbors are the initialized slots with the highest inner product
    against the unit-normalized query, never including the query's own
    slot. Ties go to the lower slot index; label ties to the lower class.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if bank.num_initialized < k + 1:
        raise InsufficientMemoryError(
            f"need at least {k + 1} initialized slots, have {bank.num_initialized}"
        )
    q = _as_float_matrix(query_feats, "query_feats")
    idx = np.asarray(query_indices, dtype=np.int64)
    norms = np.sqrt(np.sum(q * q, axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    qu = q / safe[:, None]
    sims = qu @ bank.feats.T
    sims[:, ~bank.initialized] = -np.inf
    sims[np.arange(len(idx)), idx] = -np.inf
    neighbors = _kernels.topk_desc(sims, k)
    votes = bank.probs[neighbors].sum(axis=1)
    votes = votes / votes.sum(axis=1, keepdims=True)
    labels = np.argmax(votes, axis=1)
    confidence = votes[np.arange(len(labels)), labels]
    return PseudoLabelBatch(labels=labels, votes=votes, confidence=confidence)


def nap_loss_and_grad(logits, pl: PseudoLabelBatch, alpha: float):
    """Confidence-weighted cross-entropy on pseudo-labels.

    loss = -(alpha / B) * sum_i conf_i * log softmax(logits_i)[label_i];
    the gradient is the softmax cross-entropy gradient scaled per row by
    alpha * conf_i / B.
    """
    if alpha < 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    z = _as_float_matrix(logits, "logits")
    n = z.shape[0]
    if alpha == 0.0:
        return 0.0, np.zeros_like(z)
    shifted = z - z.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    logp = shifted - np.log(expz.sum(axis=1, keepdims=True))
    picked = logp[np.arange(n), pl.labels]
    loss = -(alpha / n) * float(np.sum(pl.confidence * picked))
    grad = probs.copy()
    grad[np.arange(n), pl.labels] -= 1.0
    grad *= (alpha * pl.confidence / n)[:, None]
    return loss, grad


def alpha_schedule(iteration: int, max_iter: int, alpha_max: float) -> float:
    """Linear ramp from 0 to alpha_max across the run."""
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not 0 <= iteration <= max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {max_iter}]")
    return alpha_max * iteration / max_iter
