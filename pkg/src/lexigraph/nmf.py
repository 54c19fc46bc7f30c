"""Non-negative matrix factorization by multiplicative updates.

Factorizes a sparse non-negative matrix X (terms x documents) into dense
non-negative W (terms x k) and H (k x documents) minimizing the Frobenius
objective ||X - WH||_F. The update rules are the classic multiplicative pair

    H <- H * (W^T X) / (W^T W H + eps)
    W <- W * (X H^T) / (W H H^T + eps)

which keep both factors non-negative and never increase the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .corpus import TermDocMatrix
from .errors import DataError, ParameterError

# denominator stabilizer; below every test tolerance in the suite
EPS = 1e-12

# matrices up to this element count use the (more accurate) dense residual
_DENSE_RESIDUAL_LIMIT = 4_000_000


@dataclass
class NmfFactors:
    """Result of one factorization run."""

    W: np.ndarray
    H: np.ndarray
    k: int
    loss_history: list[float] = field(default_factory=list)
    seed: int = 0

    @property
    def final_error(self) -> float:
        return self.loss_history[-1] if self.loss_history else float("nan")

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "W": self.W.tolist(),
            "H": self.H.tolist(),
            "loss_history": list(self.loss_history),
        }

    def save(self, path) -> None:
        np.savez_compressed(
            path, W=self.W, H=self.H, k=np.asarray(self.k),
            seed=np.asarray(self.seed), loss_history=np.asarray(self.loss_history),
        )

    @classmethod
    def load(cls, path) -> "NmfFactors":
        with np.load(path) as z:
            return cls(
                W=z["W"], H=z["H"], k=int(z["k"]), seed=int(z["seed"]),
                loss_history=[float(v) for v in z["loss_history"]],
            )


def _as_csr(X) -> sp.csr_matrix:
    if isinstance(X, TermDocMatrix):
        return X.matrix.tocsr()
    if sp.issparse(X):
        return X.tocsr()
    return sp.csr_matrix(np.asarray(X, dtype=float))


def init_factors(shape: tuple[int, int], k: int, seed: int, mean: float = 1.0) -> NmfFactors:
    """Seeded uniform initialization.

    Entries are uniform in (0, 1) scaled by sqrt(mean / k), where `mean` is
    the mean entry of the matrix about to be factorized (1.0 when unknown).
    Identical (shape, k, seed, mean) give bit-identical factors.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    n_terms, n_docs = shape
    rng = np.random.default_rng(seed)
    scale = np.sqrt(max(mean, EPS) / k)
    W = rng.uniform(1e-8, 1.0, size=(n_terms, k)) * scale
    H = rng.uniform(1e-8, 1.0, size=(k, n_docs)) * scale
    return NmfFactors(W=W, H=H, k=k, seed=seed)


def _relative_error(X, W: np.ndarray, H: np.ndarray, x_norm: float) -> float:
    """||X - WH||_F / ||X||_F.

    A dense X computes the residual directly (numerically exact, one GEMM);
    a sparse X uses the Gram expansion ||X||^2 - 2<W^T X, H> + <W^T W, H H^T>,
    whose cancellation error is clipped at zero.
    """
    if isinstance(X, np.ndarray):
        return float(np.linalg.norm(X - W @ H) / x_norm)
    wtx = (X.T @ W).T
    cross = float(np.sum(wtx * H))
    gram = float(np.sum((W.T @ W) * (H @ H.T)))
    sq = max(x_norm * x_norm - 2.0 * cross + gram, 0.0)
    return float(np.sqrt(sq) / x_norm)


def factorize(
    X,
    k: int,
    seed: int,
    max_iters: int = 500,
    tol: float = 1e-5,
    target_error: float | None = None,
) -> NmfFactors:
    """Run multiplicative updates until max_iters or relative-improvement < tol.

    `X` may be a TermDocMatrix, a scipy sparse matrix, or an array. The run is
    deterministic given (X, k, seed). loss_history records the relative
    Frobenius error at initialization and after every iteration; the sequence
    is non-increasing up to floating-point tolerance. When `target_error` is
    given, iteration also stops once the relative error reaches it (useful
    when a caller needs a specific accuracy rather than a stall test).
    """
    csr = _as_csr(X)
    n_terms, n_docs = csr.shape
    if csr.nnz == 0:
        raise DataError("cannot factorize an all-zero matrix")
    if (csr.data < 0).any():
        raise DataError("matrix has negative entries")
    if not (1 <= k <= min(n_terms, n_docs)):
        raise ParameterError(
            f"k must be in [1, {min(n_terms, n_docs)}] for a {n_terms}x{n_docs} matrix, got {k}"
        )
    if max_iters < 1:
        raise ParameterError(f"max_iters must be >= 1, got {max_iters}")

    mean = csr.sum() / (n_terms * n_docs)
    factors = init_factors((n_terms, n_docs), k, seed, mean=mean)
    W, H = factors.W, factors.H
    x_norm = float(np.sqrt((csr.data**2).sum()))

    # small matrices run densely: BLAS products and an exact residual norm
    X = csr.toarray() if n_terms * n_docs <= _DENSE_RESIDUAL_LIMIT else csr

    loss = _relative_error(X, W, H, x_norm)
    history = [loss]
    for _ in range(max_iters):
        wtx = W.T @ X if isinstance(X, np.ndarray) else (X.T @ W).T  # k x docs
        H *= wtx / (W.T @ W @ H + EPS)
        xht = X @ H.T  # terms x k
        W *= xht / (W @ (H @ H.T) + EPS)
        new_loss = _relative_error(X, W, H, x_norm)
        history.append(new_loss)
        improvement = (loss - new_loss) / loss if loss > 0 else 0.0
        loss = new_loss
        if target_error is not None and new_loss <= target_error:
            break
        if improvement < tol:
            break
    factors.loss_history = history
    return factors


def reconstruction_error(X, factors: NmfFactors) -> float:
    """Relative Frobenius error ||X - W H||_F / ||X||_F of a factor pair."""
    csr = _as_csr(X)
    n_terms, n_docs = csr.shape
    if factors.W.shape != (n_terms, factors.k) or factors.H.shape != (factors.k, n_docs):
        raise ParameterError(
            f"factor shapes {factors.W.shape}/{factors.H.shape} do not match "
            f"matrix {csr.shape} with k={factors.k}"
        )
    x_norm = float(np.sqrt((csr.data**2).sum()))
    if x_norm == 0.0:
        raise DataError("matrix norm is zero")
    X = csr.toarray() if n_terms * n_docs <= _DENSE_RESIDUAL_LIMIT else csr
    return _relative_error(X, factors.W, factors.H, x_norm)


def refit_h(X, W: np.ndarray, max_iters: int = 500, tol: float = 1e-7, seed: int = 0) -> np.ndarray:
    """Fit H alone by H-updates with W held fixed (used for consensus factors)."""
    csr = _as_csr(X)
    k = W.shape[1]
    rng = np.random.default_rng(seed)
    mean = csr.sum() / (csr.shape[0] * csr.shape[1])
    H = rng.uniform(1e-8, 1.0, size=(k, csr.shape[1])) * np.sqrt(max(mean, EPS) / k)
    wtw = W.T @ W
    wtx = (csr.T @ W).T
    prev = None
    for _ in range(max_iters):
        H *= wtx / (wtw @ H + EPS)
        cur = float(np.sum(H))
        if prev is not None and abs(prev - cur) <= tol * max(prev, 1.0):
            break
        prev = cur
    return H
