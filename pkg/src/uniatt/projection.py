"""
Orthonormalisation of the unconstrained estimate and the rotation error metric.

Two routes onto SO(n):

* :func:`project_svd` -- nearest rotation in Frobenius norm.
* :func:`project_cayley` -- treat the columns ``d_i`` of the estimate as
  noisy images ``R e_i`` of the canonical basis and solve that registration
  linearly in Cayley parameters ``g``, with
  ``R = (I + skew(g))^-1 (I - skew(g))``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import logm

from .matcore import pmat, skew_embed, skew_extract

__all__ = [
    "CayleySingularityError",
    "RotationEstimate",
    "project_svd",
    "project_cayley",
    "cayley",
    "cayley_inverse",
    "cayley_system",
    "rotation_error",
]

CAYLEY_COND_TOL = 1e-8


class CayleySingularityError(ValueError):
    """The rotation is too close to a half-turn for the Cayley map; use project_svd."""


@dataclass(frozen=True)
class RotationEstimate:
    R: np.ndarray
    method: str
    g: Optional[np.ndarray] = None
    ill_conditioned: bool = False


def project_svd(xm):
    """Nearest rotation ``U diag(1, .., 1, det(U V^T)) V^T`` to ``xm``.

    ``ill_conditioned`` is set when ``sigma_min < 1e-12 sigma_max``; the
    projection is still returned.
    """
    xm = np.asarray(xm, dtype=float)
    if not np.all(np.isfinite(xm)):
        raise ValueError("project_svd input has non-finite entries")
    U, s, Vt = np.linalg.svd(xm)
    if s[0] == 0.0:
        raise ValueError("project_svd input is the zero matrix")
    D = np.ones(xm.shape[0])
    D[-1] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = (U * D) @ Vt
    g = None
    try:
        g = cayley_inverse(R)
    except CayleySingularityError:
        pass
    return RotationEstimate(R=R, method="svd", g=g, ill_conditioned=bool(s[-1] < 1e-12 * s[0]))


def cayley(g, n=None):
    """Rotation ``(I + G)^-1 (I - G)`` with ``G = skew_embed(g)``."""
    G = skew_embed(g, n)
    I = np.eye(G.shape[0])
    return np.linalg.solve(I + G, I - G)


def cayley_inverse(R):
    """Cayley parameters of a rotation: ``skew(g) = (I - R)(I + R)^-1``."""
    R = np.asarray(R, dtype=float)
    I = np.eye(R.shape[0])
    s = np.linalg.svd(I + R, compute_uv=False)
    if s[-1] < CAYLEY_COND_TOL * s[0]:
        raise CayleySingularityError("rotation has an eigenvalue at -1")
    # (I - R)(I + R)^-1 = [ (I + R)^-T (I - R)^T ]^T
    G = np.linalg.solve((I + R).T, (I - R).T).T
    return skew_extract(0.5 * (G - G.T))


def cayley_system(xm):
    """Normal equations of the Cayley registration on the columns of ``xm``.

    Returns ``(Gm, v, taus, rhos)`` with ``Gm = (1/n) sum P(tau_i)^T P(tau_i)``,
    ``v = (1/n) sum P(tau_i)^T rho_i``, ``tau_i = d_i + e_i``,
    ``rho_i = e_i - d_i``.
    """
    xm = np.asarray(xm, dtype=float)
    n = xm.shape[0]
    I = np.eye(n)
    m = n * (n - 1) // 2
    Gm = np.zeros((m, m))
    v = np.zeros(m)
    taus, rhos = [], []
    for i in range(n):
        tau = xm[:, i] + I[:, i]
        rho = I[:, i] - xm[:, i]
        Pt = pmat(tau)
        Gm += Pt.T @ Pt
        v += Pt.T @ rho
        taus.append(tau)
        rhos.append(rho)
    return Gm / n, v / n, taus, rhos


def project_cayley(xm):
    """Rotation from the linear Cayley registration of the columns of ``xm``.

    Raises :class:`CayleySingularityError` when the normal matrix of the
    registration is singular to ``1e-8`` relative, which happens as the
    rotation approaches a half-turn.
    """
    xm = np.asarray(xm, dtype=float)
    Gm, v, _, _ = cayley_system(xm)
    w = np.linalg.eigvalsh(Gm)
    if w[-1] <= 0.0 or w[0] < CAYLEY_COND_TOL * w[-1]:
        raise CayleySingularityError(
            "Cayley registration is singular (rotation near a half-turn); use project_svd"
        )
    g = np.linalg.solve(Gm, v)
    return RotationEstimate(R=cayley(g, xm.shape[0]), method="cayley", g=g)


def rotation_error(R, R_true):
    """Angle of ``R R_true^T`` in radians.

    For n = 3 this is ``arccos((tr(R R_true^T) - 1) / 2)``, evaluated as
    ``atan2(|axis part|, cos part)`` so that it stays accurate near 0 and pi.
    Other dimensions use ``||log(R^T R_true)||_F / sqrt(2)``.
    """
    R = np.asarray(R, dtype=float)
    R_true = np.asarray(R_true, dtype=float)
    E = R @ R_true.T
    if R.shape == (3, 3):
        c = 0.5 * (np.trace(E) - 1.0)
        w = 0.5 * np.array([E[2, 1] - E[1, 2], E[0, 2] - E[2, 0], E[1, 0] - E[0, 1]])
        return float(np.arctan2(np.linalg.norm(w), c))
    L = logm(R.T @ R_true)
    return float(np.linalg.norm(np.real(L)) / np.sqrt(2.0))
