"""Automatic selection of the NMF latent dimension k.

For each candidate k the matrix is perturbed n times with multiplicative
bootstrap noise and factorized independently. The n*k resulting W columns
are L2-normalized and clustered under cosine distance with the constraint
that every cluster takes exactly one column from each run; the silhouette of
that clustering measures how reproducibly the k topics form. A k is accepted
when its minimum silhouette clears the stability threshold, and the largest
acceptable k is located by binary search (assuming approximate monotonicity)
or by exhaustive scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import TermDocMatrix
from .errors import DataError, ParameterError
from .nmf import factorize, refit_h

_NORM_EPS = 1e-15


@dataclass(frozen=True)
class NmfkConfig:
    k_min: int
    k_max: int
    n_perturbations: int = 20
    noise_epsilon: float = 0.015
    silhouette_threshold: float = 0.7
    base_seed: int = 0
    # inner factorization budget; stability needs converged runs, not perfection
    nmf_max_iters: int = 300
    nmf_tol: float = 1e-6

    def __post_init__(self):
        if not (1 <= self.k_min <= self.k_max):
            raise ParameterError(f"need 1 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        if self.n_perturbations < 2:
            raise ParameterError("n_perturbations must be >= 2")
        if not (0.0 < self.noise_epsilon < 1.0):
            raise ParameterError("noise_epsilon must be in (0, 1)")
        if not (0.0 < self.silhouette_threshold < 1.0):
            raise ParameterError("silhouette_threshold must be in (0, 1)")


@dataclass(frozen=True)
class KEvaluation:
    k: int
    min_silhouette: float
    mean_silhouette: float
    mean_reconstruction_error: float
    degenerate: bool = False  # some run produced an all-zero W column

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "min_silhouette": self.min_silhouette,
            "mean_silhouette": self.mean_silhouette,
            "mean_reconstruction_error": self.mean_reconstruction_error,
            "degenerate": self.degenerate,
        }


@dataclass
class NmfkResult:
    selected_k: int
    evaluations: list[KEvaluation]
    consensus_W: np.ndarray
    consensus_H: np.ndarray
    low_confidence: bool = False
    search_mode: str = "binary"

    def evaluation_for(self, k: int) -> KEvaluation:
        for ev in self.evaluations:
            if ev.k == k:
                return ev
        raise KeyError(k)

    def to_json_dict(self) -> dict:
        return {
            "selected_k": self.selected_k,
            "low_confidence": self.low_confidence,
            "search_mode": self.search_mode,
            "evaluations": [ev.to_json_dict() for ev in sorted(self.evaluations, key=lambda e: e.k)],
        }


def _run_seeds(base_seed: int, k: int, run_index: int) -> tuple[int, int]:
    """Stable (perturbation, factorization) seed pair for one run.

    Derived only from (base_seed, k, run_index) so parallel execution order
    can never change results.
    """
    ss = np.random.SeedSequence([base_seed & 0xFFFFFFFFFFFFFFFF, k, run_index])
    a, b = ss.generate_state(2, dtype=np.uint64)
    return int(a), int(b)


def perturb(X: TermDocMatrix, epsilon: float, seed: int) -> TermDocMatrix:
    """Multiply every nonzero entry by an independent uniform [1-eps, 1+eps].

    The sparsity pattern is preserved exactly; deterministic from the seed.
    """
    if not (0.0 < epsilon < 1.0):
        raise ParameterError("epsilon must be in (0, 1)")
    csr = X.matrix.tocsr(copy=True)
    rng = np.random.default_rng(seed)
    csr.data = csr.data * rng.uniform(1.0 - epsilon, 1.0 + epsilon, size=csr.data.shape)
    return TermDocMatrix(vocabulary=X.vocabulary, doc_ids=X.doc_ids, matrix=csr)


def _normalize_columns(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """L2-normalize columns; returns (normalized, zero_column_mask)."""
    norms = np.linalg.norm(W, axis=0)
    zero = norms <= _NORM_EPS
    out = W / np.where(zero, 1.0, norms)
    out[:, zero] = 0.0
    return out, zero


def _greedy_match(columns: list[np.ndarray], k: int) -> np.ndarray:
    """Cluster run columns one-per-run against running centroids.

    `columns[i]` is the normalized (terms x k) column block of run i. Run 0
    seeds the k clusters; each later run's columns are matched greedily to
    the closest unmatched centroid under cosine distance, ties broken toward
    the lowest cluster then column index. Returns labels of shape (runs, k):
    labels[i, j] = cluster of run i's column j.
    """
    n_runs = len(columns)
    labels = np.zeros((n_runs, k), dtype=np.int64)
    labels[0] = np.arange(k)
    sums = columns[0].copy()  # running per-cluster sums of member columns
    counts = np.ones(k)
    for i in range(1, n_runs):
        cent = sums / counts
        cent_norm, cent_zero = _normalize_columns(cent)
        dist = 1.0 - cent_norm.T @ columns[i]  # clusters x columns
        dist[cent_zero, :] = 1.0
        free_cluster = np.ones(k, dtype=bool)
        free_col = np.ones(k, dtype=bool)
        for _ in range(k):
            masked = np.where(
                np.outer(free_cluster, free_col), dist, np.inf
            )
            c, j = np.unravel_index(np.argmin(masked), masked.shape)
            labels[i, j] = c
            free_cluster[c] = False
            free_col[j] = False
        for j in range(k):
            sums[:, labels[i, j]] += columns[i][:, j]
        counts += 1.0
    return labels


def _silhouettes(V: np.ndarray, labels: np.ndarray, zero_mask: np.ndarray) -> np.ndarray:
    """Silhouette per column on cosine distance.

    V is (terms x n) with unit columns (zero columns allowed); labels gives
    each column's cluster. Columns flagged in zero_mask score -1. With a
    single cluster every column scores 1.0: one topic is trivially stable.
    """
    n = V.shape[1]
    k = int(labels.max()) + 1
    if k == 1:
        sil = np.ones(n)
        sil[zero_mask] = -1.0
        return sil
    dist = np.clip(1.0 - V.T @ V, 0.0, 2.0)
    dist[dist < 1e-12] = 0.0  # coincident columns are exactly coincident
    sil = np.zeros(n)
    members = [np.flatnonzero(labels == c) for c in range(k)]
    for idx in range(n):
        if zero_mask[idx]:
            sil[idx] = -1.0
            continue
        own = labels[idx]
        same = members[own]
        a = dist[idx, same].sum() / (len(same) - 1) if len(same) > 1 else 0.0
        b = min(
            dist[idx, members[c]].mean() for c in range(k) if c != own and len(members[c])
        )
        denom = max(a, b)
        sil[idx] = (b - a) / denom if denom > 0 else 0.0
    return sil


def _evaluate_k_full(X: TermDocMatrix, k: int, cfg: NmfkConfig) -> tuple[KEvaluation, np.ndarray]:
    """Run the perturbation ensemble for one k; also return the consensus W."""
    n_terms, n_docs = X.shape
    if not (1 <= k <= min(n_terms, n_docs)):
        raise ParameterError(f"k={k} out of range for {n_terms}x{n_docs} matrix")

    blocks: list[np.ndarray] = []
    zero_blocks: list[np.ndarray] = []
    errors: list[float] = []
    for i in range(cfg.n_perturbations):
        pseed, fseed = _run_seeds(cfg.base_seed, k, i)
        Xp = perturb(X, cfg.noise_epsilon, pseed)
        factors = factorize(Xp, k, fseed, max_iters=cfg.nmf_max_iters, tol=cfg.nmf_tol)
        norm, zero = _normalize_columns(factors.W)
        blocks.append(norm)
        zero_blocks.append(zero)
        errors.append(factors.final_error)

    labels = _greedy_match(blocks, k)
    V = np.concatenate(blocks, axis=1)  # terms x (runs*k), run-major
    flat_labels = labels.reshape(-1)
    flat_zero = np.concatenate(zero_blocks)
    sil = _silhouettes(V, flat_labels, flat_zero)

    evaluation = KEvaluation(
        k=k,
        min_silhouette=float(sil.min()),
        mean_silhouette=float(sil.mean()),
        mean_reconstruction_error=float(np.mean(errors)),
        degenerate=bool(flat_zero.any()),
    )

    consensus = np.zeros((n_terms, k))
    for c in range(k):
        member_cols = V[:, flat_labels == c]
        consensus[:, c] = np.median(member_cols, axis=1)
    return evaluation, consensus


def evaluate_k(X: TermDocMatrix, k: int, cfg: NmfkConfig) -> KEvaluation:
    """Stability and error statistics for one candidate k."""
    evaluation, _ = _evaluate_k_full(X, k, cfg)
    return evaluation


def select_k(X: TermDocMatrix, cfg: NmfkConfig, exhaustive: bool = False) -> NmfkResult:
    """Choose k as the largest candidate whose minimum silhouette clears the
    threshold.

    The default binary search treats the stability predicate as monotone
    non-increasing in k; `exhaustive=True` probes every k in the range
    instead (same selection rule, useful for validating the assumption).
    If no probed k passes, the probed k with the best minimum silhouette is
    returned with `low_confidence=True`.
    """
    n_terms, n_docs = X.shape
    bound = min(n_terms, n_docs)
    if cfg.k_min > bound:
        raise ParameterError(f"k_min={cfg.k_min} exceeds matrix rank bound {bound}")
    if X.matrix.nnz == 0:
        raise DataError("cannot select k for an all-zero matrix")
    k_max = min(cfg.k_max, bound)

    cache: dict[int, tuple[KEvaluation, np.ndarray]] = {}

    def probe(k: int) -> KEvaluation:
        if k not in cache:
            cache[k] = _evaluate_k_full(X, k, cfg)
        return cache[k][0]

    def passes(k: int) -> bool:
        return probe(k).min_silhouette >= cfg.silhouette_threshold

    best: int | None = None
    if exhaustive:
        for k in range(cfg.k_min, k_max + 1):
            if passes(k):
                best = k
    else:
        lo, hi = cfg.k_min, k_max
        while lo <= hi:
            mid = (lo + hi) // 2
            if passes(mid):
                best = mid
                lo = mid + 1
            else:
                hi = mid - 1

    low_confidence = best is None
    if best is None:
        # fall back to the most stable probed k (ties toward the smallest k)
        best = max(sorted(cache), key=lambda k: (cache[k][0].min_silhouette, -k))

    evaluation, consensus_W = cache[best]
    h_seed, _ = _run_seeds(cfg.base_seed, 0, cfg.n_perturbations + 1)
    consensus_H = refit_h(X, consensus_W, seed=h_seed)
    return NmfkResult(
        selected_k=best,
        evaluations=[cache[k][0] for k in sorted(cache)],
        consensus_W=consensus_W,
        consensus_H=consensus_H,
        low_confidence=low_confidence,
        search_mode="exhaustive" if exhaustive else "binary",
    )


def max_binary_probes(k_min: int, k_max: int) -> int:
    """Upper bound on distinct k values a binary search may evaluate."""
    return math.ceil(math.log2(k_max - k_min + 1)) + 2 if k_max > k_min else 1
