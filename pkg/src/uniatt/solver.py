"""
Closed-form attitude solvers.

The unified estimate minimises

    L(x) = x^T H x + || (Q^T kron I) x - vec(P) ||^2,    x = vec(R~),

over unconstrained ``x``; the minimiser is ``x = Nm^+ (Q kron I) vec(P)``
with normal matrix ``Nm = H + (Q Q^T) kron I``. Its rank decides which
attitude directions are observable. The result ``mat(x)`` is not on
SO(n); see :mod:`uniatt.projection` for the orthonormalisation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .matcore import mat, min_eigvec
from .measurements import build_h, build_pq

__all__ = [
    "PreconditionError",
    "AttitudeSolution",
    "RANK_TOL",
    "normal_matrix",
    "solve_unified",
    "solve_vector_only",
    "solve_handeye_only",
    "evaluate_loss",
]

RANK_TOL = 1e-10
EIGENGAP_TOL = 1e-12


class PreconditionError(ValueError):
    """The measurement set cannot be handled by the requested solver."""


@dataclass(frozen=True)
class AttitudeSolution:
    x: np.ndarray
    normal_matrix: np.ndarray
    rank: int
    loss: float
    mode: str
    degenerate: bool = False
    ambiguous: bool = False
    eigenspace_dim: Optional[int] = None

    @property
    def n(self):
        return int(round(np.sqrt(self.x.size)))

    @property
    def R_tilde(self):
        """The unconstrained estimate as an n x n matrix."""
        return mat(self.x, self.n)


def _rank_psd(S, rel_tol=RANK_TOL):
    w = np.linalg.eigvalsh(S)
    if w[-1] <= 0.0:
        return 0
    return int(np.count_nonzero(w > rel_tol * w[-1]))


def _vector_terms(ms):
    """``(Q Q^T) kron I``, ``(Q kron I) vec(P)`` and ``vec(P)^T vec(P)``; zeros when N = 0."""
    n = ms.n
    if ms.N == 0:
        return np.zeros((n * n, n * n)), np.zeros(n * n), 0.0
    P, Q = build_pq(ms)
    QQt = np.kron(Q @ Q.T, np.eye(n))
    # (Q kron I) vec(P) = vec(P Q^T)
    rhs = (P @ Q.T).reshape(-1, order="F")
    return QQt, rhs, float(np.sum(P * P))


def normal_matrix(ms):
    QQt, _, _ = _vector_terms(ms)
    return build_h(ms) + QQt


def evaluate_loss(ms, x):
    """Objective value at ``x``; clamped at zero against round-off."""
    x = np.asarray(x, dtype=float).ravel()
    n = ms.n
    if x.size != n * n:
        raise ValueError(f"x has length {x.size}, expected {n * n}")
    QQt, rhs, pp = _vector_terms(ms)
    Nm = build_h(ms) + QQt
    L = x @ Nm @ x - 2.0 * rhs @ x + pp
    return max(float(L), 0.0)


def _solve_linear(ms, Nm, rhs, pp, mode):
    # one symmetric eigendecomposition serves the pseudoinverse and the rank
    n = ms.n
    Nm = 0.5 * (Nm + Nm.T)
    w, V = np.linalg.eigh(Nm)
    top = w[-1]
    keep = w > RANK_TOL * top if top > 0 else np.zeros(w.size, dtype=bool)
    x = V[:, keep] @ ((V[:, keep].T @ rhs) / w[keep])
    rank = int(np.count_nonzero(keep))
    loss = max(float(x @ Nm @ x - 2.0 * rhs @ x + pp), 0.0)
    return AttitudeSolution(
        x=x,
        normal_matrix=Nm,
        rank=rank,
        loss=loss,
        mode=mode,
        degenerate=rank < n * n,
    )


def solve_unified(ms):
    """Joint least-squares estimate from vector and hand-eye measurements.

    Raises :class:`PreconditionError` when there are no vector pairs: the
    right-hand side vanishes and only :func:`solve_handeye_only` applies.
    A rank-deficient normal matrix sets ``degenerate`` and returns the
    minimum-norm solution.
    """
    if ms.N == 0:
        raise PreconditionError(
            "solve_unified needs at least one vector pair; use solve_handeye_only"
        )
    QQt, rhs, pp = _vector_terms(ms)
    Nm = build_h(ms) + QQt
    return _solve_linear(ms, Nm, rhs, pp, "unified")


def solve_vector_only(ms):
    """Wahba-type linear solution using the vector pairs alone."""
    if ms.N == 0:
        raise PreconditionError("solve_vector_only needs at least one vector pair")
    QQt, rhs, pp = _vector_terms(ms)
    return _solve_linear(ms, QQt, rhs, pp, "vector_only")


def solve_handeye_only(ms):
    """Minimum-eigenvector solution of ``min x^T H x`` over the hand-eye pairs.

    The eigenvector is rescaled to Frobenius norm ``sqrt(n)``. For odd ``n``
    the sign giving ``det(mat(x)) > 0`` is kept. For even ``n`` (or a
    singular ``mat(x)``) the sign with smaller loss wins; the loss is
    sign-invariant without vector pairs, so ties go to nonnegative trace.

    ``ambiguous`` is set when the two smallest eigenvalues of ``H`` are
    closer than ``1e-12 * ||H||``; ``eigenspace_dim`` counts eigenvalues
    within that distance of the minimum.
    """
    if ms.M == 0:
        raise PreconditionError("solve_handeye_only needs at least one hand-eye pair")
    n = ms.n
    H = build_h(ms)
    lam, u = min_eigvec(H)
    w = np.linalg.eigvalsh(H)
    scale = max(abs(w[-1]), abs(w[0]))
    tol = EIGENGAP_TOL * scale
    gap = w[1] - w[0] if w.size > 1 else np.inf
    ambiguous = bool(gap <= tol)
    eig_dim = int(np.count_nonzero(w - w[0] <= tol))

    x = np.sqrt(n) * u
    d = np.linalg.det(mat(x, n))
    if n % 2 == 1 and abs(d) > 1e-12:
        if d < 0:
            x = -x
    else:
        l_pos, l_neg = evaluate_loss(ms, x), evaluate_loss(ms, -x)
        if l_neg < l_pos or (l_neg == l_pos and np.trace(mat(x, n)) < 0):
            x = -x

    QQt, _, _ = _vector_terms(ms)
    Nm = H + QQt
    rank = _rank_psd(Nm) if np.any(Nm) else 0
    return AttitudeSolution(
        x=x,
        normal_matrix=Nm,
        rank=rank,
        loss=evaluate_loss(ms, x),
        mode="handeye_only",
        degenerate=rank < n * n - 1,
        ambiguous=ambiguous,
        eigenspace_dim=eig_dim,
    )
