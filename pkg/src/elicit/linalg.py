"""Dense numerical kernels: randomized truncated SVD, Maxvol submatrix
selection, ridge least squares, Gumbel noise and tempered row softmax."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SvdResult",
    "MaxvolResult",
    "truncated_svd",
    "maxvol",
    "ridge_solve",
    "gumbel_noise",
    "softmax_rows",
]


@dataclass
class SvdResult:
    left: np.ndarray   # n x k, orthonormal columns
    right: np.ndarray  # k x m, singular values absorbed


@dataclass
class MaxvolResult:
    indices: np.ndarray  # k selected row indices
    swaps: int
    converged: bool


def truncated_svd(A, k, seed=0, oversample=10, power_iters=4):
    """Rank-k approximation A ~ left @ right via randomized subspace iteration.

    Singular values are absorbed into the right factor so its rows carry the
    singular-value magnitudes; the left factor has orthonormal columns.
    Deterministic for a given seed.
    """
    A = np.asarray(A, dtype=np.float64)
    n, m = A.shape
    if not (1 <= k <= min(n, m)):
        raise ValueError(f"k={k} out of range for {n}x{m} matrix")
    rng = np.random.Generator(np.random.PCG64(seed))
    p = min(m, k + oversample)
    Q = np.linalg.qr(A @ rng.standard_normal((m, p)))[0]
    for _ in range(power_iters):
        Q = np.linalg.qr(A.T @ Q)[0]
        Q = np.linalg.qr(A @ Q)[0]
    B = Q.T @ A
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    left = Q @ Ub[:, :k]
    right = s[:k, None] * Vt[:k]
    return SvdResult(left=left, right=right)


def _pivoted_init(B):
    """Row indices chosen by Gaussian elimination with partial pivoting."""
    m, k = B.shape
    W = np.array(B, dtype=np.float64)
    order = np.arange(m)
    for col in range(k):
        piv = col + np.argmax(np.abs(W[col:, col]))
        if np.abs(W[piv, col]) == 0.0:
            raise np.linalg.LinAlgError("rank-deficient matrix in maxvol init")
        if piv != col:
            W[[col, piv]] = W[[piv, col]]
            order[[col, piv]] = order[[piv, col]]
        W[col + 1:] -= np.outer(W[col + 1:, col] / W[col, col], W[col])
    return order[:k]


def maxvol(B, delta=0.01, max_iter=200):
    """Classic Maxvol: find k rows of the m x k matrix B whose submatrix has
    near-maximal |determinant|.

    Starting from a partial-pivoting initialization, repeatedly swap in the
    row with the largest coefficient of C = B @ B_S^{-1} until every |C_ij|
    is at most 1 + delta. |det(B_S)| is non-decreasing across swaps.
    """
    B = np.asarray(B, dtype=np.float64)
    m, k = B.shape
    if m < k:
        raise ValueError(f"need at least k={k} rows, got {m}")
    indices = _pivoted_init(B)
    if m == k:
        return MaxvolResult(indices=np.arange(k), swaps=0, converged=True)
    swaps = 0
    converged = False
    for _ in range(max_iter):
        C = np.linalg.solve(B[indices].T, B.T).T  # C @ B_S = B
        flat = np.argmax(np.abs(C))
        i, j = divmod(flat, k)
        if np.abs(C[i, j]) <= 1.0 + delta:
            converged = True
            break
        indices[j] = i  # |det| grows by factor |C_ij| > 1
        swaps += 1
    return MaxvolResult(indices=indices, swaps=swaps, converged=converged)


def ridge_solve(A, B, lam=1e-6):
    """Solve min_X ||B - A X||_F^2 + lam ||X||_F^2 via the normal equations."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    k = A.shape[1]
    G = A.T @ A + lam * np.eye(k)
    try:
        return np.linalg.solve(G, A.T @ B)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"normal matrix singular despite lam={lam}") from exc


def gumbel_noise(rows, cols, rng, dtype=np.float64):
    """I.i.d. Gumbel(0, 1) samples: g = -log(-log(u)), u ~ Uniform(0, 1)."""
    u = rng.random((rows, cols), dtype=np.float64)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    return (-np.log(-np.log(u))).astype(dtype, copy=False)


def softmax_rows(M, tau):
    """Row-wise softmax of M / tau, stabilized by row-max subtraction."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    Z = M / tau
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)
