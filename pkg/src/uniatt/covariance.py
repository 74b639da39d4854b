"""
First-order covariance of the unified estimate and of its rotation.

With normal matrix ``Nm`` the perturbed stationarity condition gives

    Nm dx = [Z(P) vec(dQ^T) + (Q kron I) vec(dP)]
            - [dH x + Z(R~ Q) vec(dQ^T) + (Q kron R~) vec(dQ)],

so ``Sigma_xx = Nm^+ (S1 + S2 + S3 + S3^T) Nm^+`` where ``S1`` is the
covariance of the first bracket, ``S2`` of the second and ``-S3`` their
cross-covariance. ``Z(P) = I kron P`` and
``F(vec C) = [I kron C, -C^T kron I]`` are the linear maps that pull the
perturbations out of the Kronecker products.

Vector and hand-eye noise are independent of each other; hand-eye pairs
are mutually independent, so their contributions add pair by pair.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.linalg import block_diag

from .matcore import commutation, mat, pinv_psd, pmat, skew_embed
from .measurements import build_pq, handeye_factor
from .projection import CayleySingularityError, cayley, cayley_inverse, cayley_system
from .solver import RANK_TOL

__all__ = [
    "zmap",
    "fmap",
    "BlockCov",
    "assemble_blocks",
    "SolutionCovariance",
    "solution_covariance",
    "RotationCovariance",
    "rotation_covariance",
    "cayley_jacobian",
]


def zmap(P):
    """``I_n kron P`` for ``P`` of shape (n, N): ``(dQ kron I) vec(P) = zmap(P) vec(dQ^T)``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return np.kron(np.eye(P.shape[0]), P)


def fmap(c):
    """``[I kron C, -C^T kron I]`` with ``C = mat(c)``.

    Satisfies ``(dA^T kron I - I kron dB) vec(C) = fmap(c) [vec(dA); vec(dB)]``.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = int(round(np.sqrt(c.size)))
    if n * n != c.size:
        raise ValueError(f"fmap needs a length n^2 vector, got {c.size}")
    C = mat(c, n)
    I = np.eye(n)
    return np.hstack([np.kron(I, C), -np.kron(C.T, I)])


@dataclass(frozen=True)
class BlockCov:
    """Covariance blocks of the weighted measurement matrices.

    Vector blocks are nN x nN. ``sigma_m[i]`` is the covariance of
    ``[vec(A_i); vec(B_i)]`` and ``sigma_n[i]`` that of
    ``[vec(A_i^T); vec(B_i^T)]`` (both 2n^2 x 2n^2).
    """

    vec_p: np.ndarray
    vec_q: np.ndarray
    p_q: np.ndarray
    vec_pt: np.ndarray
    vec_qt: np.ndarray
    qt_p: np.ndarray
    qt_q: np.ndarray
    p_qt: np.ndarray
    sigma_m: List[np.ndarray]
    sigma_n: List[np.ndarray]

    @property
    def q_p(self):
        return self.p_q.T

    @property
    def q_qt(self):
        return self.qt_q.T


def assemble_blocks(ms):
    """Assemble all covariance blocks from the measurement set's noise description.

    Column ``i`` of ``P`` carries ``sqrt(w_i) b_i``, so its noise covariance is
    ``w_i Sigma_b_i``; likewise for ``Q``. Columns are independent of each
    other. The transposed layouts (``vec(P^T)``, ``vec(Q^T)``) and the cross
    blocks follow through the commutation matrix.
    """
    n, N = ms.n, ms.N
    nz = ms.noise
    if N:
        ws = [p.w for p in ms.vectors]
        vec_p = block_diag(*[w * nz.cov_b(i, n) for i, w in enumerate(ws)])
        vec_q = block_diag(*[w * nz.cov_r(i, n) for i, w in enumerate(ws)])
        p_q = block_diag(*[w * nz.cov_br(i, n) for i, w in enumerate(ws)])
        K = commutation(n, N)  # vec(X^T) = K vec(X) for X of shape (n, N)
    else:
        vec_p = vec_q = p_q = np.zeros((0, 0))
        K = np.zeros((0, 0))
    vec_pt = K @ vec_p @ K.T
    vec_qt = K @ vec_q @ K.T
    qt_p = K @ p_q.T          # <vec(dQ^T) vec(dP)^T>
    qt_q = K @ vec_q          # <vec(dQ^T) vec(dQ)^T>
    p_qt = p_q @ K.T          # <vec(dP) vec(dQ^T)^T>

    Kn = commutation(n, n)
    Pi = block_diag(Kn, Kn)
    sigma_m, sigma_n = [], []
    for i in range(ms.M):
        SA, SB, SAB = nz.cov_A(i, n), nz.cov_B(i, n), nz.cov_AB(i, n)
        Sm = np.block([[SA, SAB], [SAB.T, SB]])
        sigma_m.append(Sm)
        sigma_n.append(Pi @ Sm @ Pi.T)
    return BlockCov(vec_p, vec_q, p_q, vec_pt, vec_qt, qt_p, qt_q, p_qt, sigma_m, sigma_n)


@dataclass(frozen=True)
class SolutionCovariance:
    sigma_xx: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    S3: np.ndarray

    @property
    def sigma3(self):
        """Three-sigma half-widths from the diagonal of ``sigma_xx``."""
        return 3.0 * np.sqrt(np.clip(np.diag(self.sigma_xx), 0.0, None))


def solution_covariance(ms, sol, blocks=None, handeye_cross=True):
    """First-order covariance of ``sol.x``.

    ``R~ = mat(sol.x)`` (not orthonormalised) enters the ``Z(R~ Q)`` and
    ``Q kron R~`` factors.

    Both hand-eye terms of ``dH x`` are driven by the same noise draw. With
    ``handeye_cross`` (default) they are combined into one Jacobian on
    ``[vec dA; vec dB]``, which is the exact first-order propagation.
    ``handeye_cross=False`` keeps them as two separate quadratic forms in
    ``Sigma_m`` and ``Sigma_n``; the omitted cross term is small when
    ``K_i x`` is near zero.
    """
    if blocks is None:
        blocks = assemble_blocks(ms)
    n = ms.n
    n2 = n * n
    x = np.asarray(sol.x, dtype=float)
    Nm = sol.normal_matrix
    S1 = np.zeros((n2, n2))
    S2 = np.zeros((n2, n2))
    S3 = np.zeros((n2, n2))

    if ms.N:
        P, Q = build_pq(ms)
        Rt = mat(x, n)
        I = np.eye(n)
        ZP = zmap(P)
        ZRQ = zmap(Rt @ Q)
        QI = np.kron(Q, I)
        QR = np.kron(Q, Rt)

        S1 = (ZP @ blocks.vec_qt @ ZP.T
              + ZP @ blocks.qt_p @ QI.T
              + QI @ blocks.p_qt @ ZP.T
              + QI @ blocks.vec_p @ QI.T)
        S2 += (ZRQ @ blocks.vec_qt @ ZRQ.T
               + QR @ blocks.vec_q @ QR.T
               + ZRQ @ blocks.qt_q @ QR.T
               + QR @ blocks.q_qt @ ZRQ.T)
        S3 = -(ZP @ blocks.vec_qt @ ZRQ.T
               + QI @ blocks.p_q @ QR.T
               + ZP @ blocks.qt_q @ QR.T
               + QI @ blocks.p_qt @ ZRQ.T)

    if ms.M:
        # dH x = sum_i v_i [dK_i^T K_i x + K_i^T dK_i x]. In column-major form
        #   dK^T c  = Pi F(Pi c) [vec dA; vec dB]
        #   dK x    = Pi F(Pi x) [vec dA^T; vec dB^T]
        # with Pi the n^2 commutation matrix.
        Pi = commutation(n, n)
        FxT = Pi @ fmap(Pi @ x)
        Pi2 = np.kron(np.eye(2), Pi)  # [vec dA; vec dB] -> [vec dA^T; vec dB^T]
        for i, h in enumerate(ms.handeyes):
            K = handeye_factor(h.A, h.B)
            J1 = h.v * (Pi @ fmap(Pi @ (K @ x)))
            J2 = h.v * (K.T @ FxT)
            if handeye_cross:
                J = J1 + J2 @ Pi2
                S2 += J @ blocks.sigma_m[i] @ J.T
            else:
                S2 += J1 @ blocks.sigma_m[i] @ J1.T + J2 @ blocks.sigma_n[i] @ J2.T

    Np = pinv_psd(Nm, rel_tol=RANK_TOL)
    Sxx = Np @ (S1 + S2 + S3 + S3.T) @ Np
    Sxx = 0.5 * (Sxx + Sxx.T)
    return SolutionCovariance(sigma_xx=Sxx, S1=S1, S2=S2, S3=S3)


@dataclass(frozen=True)
class RotationCovariance:
    """Cayley parameters ``g`` and their covariance, and the induced rotation covariance.

    ``sigma_R`` is the n x n sum over columns of the column covariances of
    ``R``; ``sigma_vecR`` is the full n^2 x n^2 covariance of ``vec(R)``.
    """

    g: np.ndarray
    sigma_g: np.ndarray
    sigma_R: np.ndarray
    sigma_vecR: np.ndarray


def cayley_jacobian(xm):
    """Jacobian of the registration's Cayley parameters with respect to ``vec(xm)``.

    Differentiates the normal equations ``sum_i P(tau_i)^T r_i = 0`` with
    residuals ``r_i = P(tau_i) g - rho_i``. Using
    ``P(dtau)^T r = -P(r)^T dtau``, column block ``i`` is

        dg/dd_i = -(n Gm)^-1 [P(tau_i)^T (I + skew(g)) - P(r_i)^T].
    """
    xm = np.asarray(xm, dtype=float)
    n = xm.shape[0]
    Gm, v, taus, rhos = cayley_system(xm)
    w = np.linalg.eigvalsh(Gm)
    if w[-1] <= 0.0 or w[0] < 1e-8 * w[-1]:
        raise CayleySingularityError("Cayley registration is singular")
    g = np.linalg.solve(Gm, v)
    Gs = skew_embed(g, n)
    I = np.eye(n)
    Ginv = np.linalg.inv(n * Gm)
    blocks = []
    for tau, rho in zip(taus, rhos):
        Pt = pmat(tau)
        res = Pt @ g - rho
        blocks.append(-Ginv @ (Pt.T @ (I + Gs) - pmat(res).T))
    return g, np.hstack(blocks)


def rotation_covariance(sol, sigma_xx, R=None, full_blocks=False):
    """Covariance of the Cayley parameters and of the projected rotation.

    The columns ``d_i`` of ``mat(sol.x)`` are the registration inputs; their
    covariances are the diagonal n x n blocks of ``sigma_xx`` (cross-column
    blocks are dropped unless ``full_blocks``). ``R`` defaults to the
    Cayley-registration rotation; if given, its own Cayley parameters are
    used in the mapping from ``g`` to ``R``.

    Raises :class:`CayleySingularityError` near half-turn rotations.
    """
    x = np.asarray(sol.x if hasattr(sol, "x") else sol, dtype=float)
    n = int(round(np.sqrt(x.size)))
    Sxx = np.asarray(sigma_xx, dtype=float)
    g, J = cayley_jacobian(mat(x, n))
    if full_blocks:
        Sd = Sxx
    else:
        Sd = block_diag(*[Sxx[i * n:(i + 1) * n, i * n:(i + 1) * n] for i in range(n)])
    Sg = J @ Sd @ J.T
    Sg = 0.5 * (Sg + Sg.T)

    if R is None:
        R = cayley(g, n)
        gR = g
    else:
        R = np.asarray(R, dtype=float)
        gR = cayley_inverse(R)
    I = np.eye(n)
    Ainv = np.linalg.inv(I + skew_embed(gR, n))
    Z = R + I
    # column i of dR is -(I + G)^-1 P(zeta_i) dg
    JR = np.vstack([-Ainv @ pmat(Z[:, i]) for i in range(n)])
    S_vecR = JR @ Sg @ JR.T
    S_R = sum(Ainv @ pmat(Z[:, i]) @ Sg @ pmat(Z[:, i]).T @ Ainv.T for i in range(n))
    return RotationCovariance(
        g=g,
        sigma_g=Sg,
        sigma_R=0.5 * (S_R + S_R.T),
        sigma_vecR=0.5 * (S_vecR + S_vecR.T),
    )
