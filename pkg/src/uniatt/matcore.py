"""
Dense linear-algebra kernel.

Column-major vectorization, Kronecker products, pseudoinverses, the
minimum-eigenpair routine used by the hand-eye-only solver, the
skew-symmetric embedding used by the Cayley parameterization, and
matrix-normal sampling.

All routines are dimension-generic and operate on plain ``numpy`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "vec",
    "mat",
    "kron",
    "commutation",
    "pinv",
    "pinv_psd",
    "numerical_rank",
    "min_eigvec",
    "skew_dim",
    "skew_embed",
    "skew_extract",
    "pmat",
    "MatrixNormalSpec",
    "sample_matrix_normal",
    "psd_sqrt",
]


def vec(X):
    """Stack the columns of ``X`` into a 1-D array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return X.copy()
    return X.reshape(-1, order="F")


def mat(x, rows, cols=None):
    """Inverse of :func:`vec`.

    ``cols`` defaults to ``rows`` (square output).
    """
    x = np.asarray(x, dtype=float).ravel()
    if cols is None:
        cols = rows
    if x.size != rows * cols:
        raise ValueError(
            f"cannot reshape vector of length {x.size} into {rows}x{cols}"
        )
    return x.reshape((rows, cols), order="F")


def kron(X, Y):
    return np.kron(np.atleast_2d(X), np.atleast_2d(Y))


def commutation(m, n):
    """Commutation matrix ``K`` with ``K @ vec(X) == vec(X.T)`` for ``X`` of shape (m, n)."""
    K = np.zeros((m * n, m * n))
    for i in range(m):
        for j in range(n):
            # X[i, j] sits at j*m + i in vec(X) and at i*n + j in vec(X.T)
            K[i * n + j, j * m + i] = 1.0
    return K


def pinv(X, rel_tol=1e-12):
    """Moore-Penrose pseudoinverse through the SVD.

    Singular values below ``rel_tol * sigma_max`` are treated as zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        return np.zeros(X.shape[::-1])
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return np.zeros(X.shape[::-1])
    keep = s > rel_tol * smax
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def pinv_psd(S, rel_tol=1e-12):
    """Pseudoinverse of a symmetric positive semidefinite matrix.

    Uses the symmetric eigendecomposition of ``(S + S.T) / 2``; eigenvalues
    below ``rel_tol * lambda_max`` (including slightly negative round-off)
    are dropped.
    """
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    wmax = w[-1] if w.size else 0.0
    if wmax <= 0.0:
        return np.zeros_like(S)
    keep = w > rel_tol * wmax
    return (V[:, keep] / w[keep]) @ V[:, keep].T


def numerical_rank(S, rel_tol=1e-10):
    """Rank of a matrix: number of singular values above ``rel_tol * sigma_max``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    s = np.linalg.svd(S, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def min_eigvec(S):
    """Smallest eigenvalue of a symmetric matrix and a unit eigenvector.

    The input is symmetrized as ``(S + S.T) / 2``. The eigenvector sign is
    whatever LAPACK returns; callers disambiguate it.

    Returns
    -------
    lam : float
    u : ndarray, shape (n,)
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"min_eigvec needs a square matrix, got shape {S.shape}")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    u = V[:, 0]
    return float(w[0]), u / np.linalg.norm(u)


def skew_dim(m):
    """Dimension ``n`` with ``n (n - 1) / 2 == m``."""
    n = int(round((1.0 + np.sqrt(1.0 + 8.0 * m)) / 2.0))
    if n * (n - 1) // 2 != m or n < 2:
        raise ValueError(f"{m} is not a valid skew parameter count n(n-1)/2")
    return n


def skew_embed(g, n=None):
    """Skew-symmetric matrix from its ``n(n-1)/2`` upper-triangle parameters.

    The upper triangle is filled row by row: ``g[0] .. g[n-2]`` go into row 0,
    the next ``n-2`` entries into row 1, and so on. The lower triangle is the
    negated transpose, so the result satisfies ``X.T == -X`` exactly.
    """
    g = np.asarray(g, dtype=float).ravel()
    if n is None:
        n = skew_dim(g.size)
    elif g.size != n * (n - 1) // 2:
        raise ValueError(
            f"expected {n * (n - 1) // 2} skew parameters for n={n}, got {g.size}"
        )
    X = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    X[iu] = g
    return X - X.T


def skew_extract(X):
    """Inverse of :func:`skew_embed` (reads the strict upper triangle)."""
    X = np.asarray(X, dtype=float)
    return X[np.triu_indices(X.shape[0], k=1)].copy()


def pmat(tau):
    """Matrix ``P(tau)`` with ``skew_embed(g) @ tau == pmat(tau) @ g`` for all ``g``.

    Built column by column from the skew embedding of unit parameter vectors.
    """
    tau = np.asarray(tau, dtype=float).ravel()
    n = tau.size
    if n < 2:
        raise ValueError("pmat needs n >= 2")
    m = n * (n - 1) // 2
    P = np.empty((n, m))
    e = np.zeros(m)
    for k in range(m):
        e[k] = 1.0
        P[:, k] = skew_embed(e, n) @ tau
        e[k] = 0.0
    return P


def psd_sqrt(S, name="matrix"):
    """Symmetric square root of a PSD matrix; raises on negative eigenvalues."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"{name} must be square, got shape {S.shape}")
    if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValueError(f"{name} is not symmetric")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    scale = max(np.abs(w).max(), 1e-300) if w.size else 1.0
    if w.size and w[0] < -1e-10 * scale:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


@dataclass(frozen=True)
class MatrixNormalSpec:
    """Matrix-normal law ``vec(X) ~ N(vec(M), Y kron W)``."""

    M: np.ndarray
    Y: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        # Y kron W must be (rows*cols)^2 to match vec(M); with Y (cols x cols)
        # and W (rows x rows) that is the column-major layout of vec.
        if Y.shape != (M.shape[1], M.shape[1]) or W.shape != (M.shape[0], M.shape[0]):
            raise ValueError(
                f"second moments {Y.shape}, {W.shape} do not conform to mean {M.shape}"
            )
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "W", W)

    @property
    def vec_covariance(self):
        return np.kron(self.Y, self.W)


def sample_matrix_normal(spec, rng_seed=None):
    """Draw one matrix from ``spec``.

    ``rng_seed`` may be an integer seed, a ``SeedSequence`` or a
    ``numpy.random.Generator``; a fixed seed gives a fixed draw.
    """
    rng = np.random.default_rng(rng_seed)
    LY = psd_sqrt(spec.Y, "column second moment Y")
    LW = psd_sqrt(spec.W, "row second moment W")
    Z = rng.standard_normal(spec.M.shape)
    # vec(LW Z LY^T) = (LY kron LW) vec(Z)  ->  covariance Y kron W
    return spec.M + LW @ Z @ LY.T
