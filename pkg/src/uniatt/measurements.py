"""
Measurement data model for the unified attitude problem.

A :class:`MeasurementSet` holds ``N`` weighted vector pairs ``b_i = R r_i``
and ``M`` weighted hand-eye pairs ``A_i R = R B_i`` sharing one dimension
``n``, plus a :class:`NoiseSpec` describing their uncertainty. The builders
here produce the weighted matrices consumed by the solver and by the
covariance propagation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "SchemaError",
    "VectorPair",
    "HandEyePair",
    "NoiseSpec",
    "MeasurementSet",
    "build_pq",
    "build_h",
    "handeye_factor",
    "weight_ratio",
    "rigid_from_rotations",
    "vectors_from_rotation",
    "check_orthonormal",
]

ORTHO_TOL = 1e-6


class SchemaError(ValueError):
    """Raised when a measurement document is malformed.

    ``field`` names the offending entry (e.g. ``"vectors[2].b"``).
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


def _array(value, shape, name):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(name, f"not numeric ({exc})") from None
    if a.shape != shape:
        raise SchemaError(name, f"expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SchemaError(name, "contains non-finite entries")
    return a


def _positive(value, name):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise SchemaError(name, f"expected a positive number, got {value!r}") from None
    if not np.isfinite(v) or v <= 0.0:
        raise SchemaError(name, f"must be a positive finite number, got {value!r}")
    return v


def check_orthonormal(R, name="R", tol=ORTHO_TOL):
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"{name} must be square, got shape {R.shape}")
    err = np.linalg.norm(R.T @ R - np.eye(R.shape[0]))
    if err > tol:
        raise ValueError(f"{name} is not orthonormal (||R^T R - I||_F = {err:.3e})")
    return R


@dataclass(frozen=True)
class VectorPair:
    """Body-frame observation ``b`` of reference vector ``r`` with weight ``w``."""

    b: np.ndarray
    r: np.ndarray
    w: float = 1.0

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).ravel()
        r = np.asarray(self.r, dtype=float).ravel()
        if b.shape != r.shape:
            raise ValueError(f"b and r differ in length: {b.size} vs {r.size}")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(r))):
            raise ValueError("vector pair has non-finite entries")
        if not self.w > 0:
            raise ValueError(f"weight must be positive, got {self.w}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "w", float(self.w))


@dataclass(frozen=True)
class HandEyePair:
    """Hand-eye pair ``A R = R B`` with weight ``v``. No structure is assumed on A, B."""

    A: np.ndarray
    B: np.ndarray
    v: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.shape != B.shape or A.shape[0] != A.shape[1]:
            raise ValueError(f"A and B must be square of equal size, got {A.shape}, {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("hand-eye pair has non-finite entries")
        if not self.v > 0:
            raise ValueError(f"weight must be positive, got {self.v}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "v", float(self.v))


@dataclass(frozen=True)
class NoiseSpec:
    """Noise description for a measurement set.

    Scalar isotropic scales:

    * ``eps_vector`` -- variance of each component of the noise on ``b_i``.
    * ``eps_reference`` -- variance of each component of the noise on ``r_i``.
    * ``eps_handeye`` -- matrix-normal scale: ``Xi ~ MN(0, eps I, eps I)``,
      i.e. each entry of the hand-eye noise has variance ``eps**2``.
      The noise is carried by ``A_i``; ``B_i`` is treated as exact.

    Per-pair full covariances override the scalars where given. Vector
    blocks are n x n, hand-eye blocks n^2 x n^2 on ``vec(A_i)``/``vec(B_i)``.
    """

    eps_vector: float = 0.0
    eps_reference: float = 0.0
    eps_handeye: float = 0.0
    sigma_b: Optional[Sequence[np.ndarray]] = None
    sigma_r: Optional[Sequence[np.ndarray]] = None
    sigma_br: Optional[Sequence[np.ndarray]] = None
    sigma_A: Optional[Sequence[np.ndarray]] = None
    sigma_B: Optional[Sequence[np.ndarray]] = None
    sigma_AB: Optional[Sequence[np.ndarray]] = None

    def __post_init__(self):
        for name in ("eps_vector", "eps_reference", "eps_handeye"):
            val = float(getattr(self, name))
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be a nonnegative number, got {val}")
            object.__setattr__(self, name, val)
        for name in ("sigma_b", "sigma_r", "sigma_br", "sigma_A", "sigma_B", "sigma_AB"):
            blocks = getattr(self, name)
            if blocks is None:
                continue
            arrs = tuple(np.atleast_2d(np.asarray(S, dtype=float)) for S in blocks)
            if name not in ("sigma_br", "sigma_AB"):
                for k, S in enumerate(arrs):
                    if S.shape[0] != S.shape[1] or not np.allclose(S, S.T, atol=1e-12):
                        raise ValueError(f"{name}[{k}] must be symmetric")
                    if np.linalg.eigvalsh(S)[0] < -1e-12 * max(1.0, np.abs(S).max()):
                        raise ValueError(f"{name}[{k}] is not positive semidefinite")
            object.__setattr__(self, name, arrs)

    # per-pair accessors with scalar fallback

    def cov_b(self, i, n):
        return self.sigma_b[i] if self.sigma_b is not None else self.eps_vector * np.eye(n)

    def cov_r(self, i, n):
        return self.sigma_r[i] if self.sigma_r is not None else self.eps_reference * np.eye(n)

    def cov_br(self, i, n):
        return self.sigma_br[i] if self.sigma_br is not None else np.zeros((n, n))

    def cov_A(self, i, n):
        if self.sigma_A is not None:
            return self.sigma_A[i]
        return self.eps_handeye**2 * np.eye(n * n)

    def cov_B(self, i, n):
        return self.sigma_B[i] if self.sigma_B is not None else np.zeros((n * n, n * n))

    def cov_AB(self, i, n):
        return self.sigma_AB[i] if self.sigma_AB is not None else np.zeros((n * n, n * n))

    def to_dict(self):
        out = {
            "eps_vector": self.eps_vector,
            "eps_reference": self.eps_reference,
            "eps_handeye": self.eps_handeye,
        }
        for name in ("sigma_b", "sigma_r", "sigma_br", "sigma_A", "sigma_B", "sigma_AB"):
            blocks = getattr(self, name)
            if blocks is not None:
                out[name] = [S.tolist() for S in blocks]
        return out

    @classmethod
    def from_dict(cls, d, prefix="noise"):
        if d is None:
            return cls()
        if not isinstance(d, dict):
            raise SchemaError(prefix, "expected an object")
        known = {"eps_vector", "eps_reference", "eps_handeye",
                 "sigma_b", "sigma_r", "sigma_br", "sigma_A", "sigma_B", "sigma_AB"}
        for key in d:
            if key not in known:
                raise SchemaError(f"{prefix}.{key}", "unknown field")
        kwargs = {}
        for key in ("eps_vector", "eps_reference", "eps_handeye"):
            if key in d:
                try:
                    val = float(d[key])
                except (TypeError, ValueError):
                    raise SchemaError(f"{prefix}.{key}", f"not a number: {d[key]!r}") from None
                if not np.isfinite(val) or val < 0:
                    raise SchemaError(f"{prefix}.{key}", "must be nonnegative")
                kwargs[key] = val
        for key in known - {"eps_vector", "eps_reference", "eps_handeye"}:
            if key in d:
                try:
                    kwargs[key] = [np.asarray(S, dtype=float) for S in d[key]]
                except (TypeError, ValueError) as exc:
                    raise SchemaError(f"{prefix}.{key}", str(exc)) from None
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise SchemaError(prefix, str(exc)) from None


@dataclass(frozen=True)
class MeasurementSet:
    n: int
    vectors: tuple = ()
    handeyes: tuple = ()
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        object.__setattr__(self, "vectors", tuple(self.vectors))
        object.__setattr__(self, "handeyes", tuple(self.handeyes))
        n = int(self.n)
        object.__setattr__(self, "n", n)
        if len(self.vectors) + len(self.handeyes) < 1:
            raise ValueError("a measurement set needs at least one vector or hand-eye pair")
        for k, p in enumerate(self.vectors):
            if p.b.size != n:
                raise ValueError(f"vector pair {k} has dimension {p.b.size}, expected {n}")
        for k, h in enumerate(self.handeyes):
            if h.A.shape != (n, n):
                raise ValueError(f"hand-eye pair {k} has shape {h.A.shape}, expected {(n, n)}")
        nz = self.noise
        for name, count, shape in (
            ("sigma_b", self.N, (n, n)), ("sigma_r", self.N, (n, n)), ("sigma_br", self.N, (n, n)),
            ("sigma_A", self.M, (n * n, n * n)), ("sigma_B", self.M, (n * n, n * n)),
            ("sigma_AB", self.M, (n * n, n * n)),
        ):
            blocks = getattr(nz, name)
            if blocks is None:
                continue
            if len(blocks) != count:
                raise ValueError(f"noise.{name} has {len(blocks)} blocks, expected {count}")
            for k, S in enumerate(blocks):
                if S.shape != shape:
                    raise ValueError(f"noise.{name}[{k}] has shape {S.shape}, expected {shape}")

    @property
    def N(self):
        return len(self.vectors)

    @property
    def M(self):
        return len(self.handeyes)

    def with_weights(self, scale):
        """Copy with every vector and hand-eye weight multiplied by ``scale``."""
        return MeasurementSet(
            self.n,
            [VectorPair(p.b, p.r, p.w * scale) for p in self.vectors],
            [HandEyePair(h.A, h.B, h.v * scale) for h in self.handeyes],
            self.noise,
        )

    def to_dict(self):
        return {
            "n": self.n,
            "vectors": [{"b": p.b.tolist(), "r": p.r.tolist(), "w": p.w} for p in self.vectors],
            "handeyes": [{"A": h.A.tolist(), "B": h.B.tolist(), "v": h.v} for h in self.handeyes],
            "noise": self.noise.to_dict(),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        """Build from the JSON document layout (row-major nested matrix arrays)."""
        if not isinstance(d, dict):
            raise SchemaError("<root>", "expected a JSON object")
        if "n" not in d:
            raise SchemaError("n", "missing")
        n = d["n"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise SchemaError("n", f"expected a positive integer, got {n!r}")
        vectors_raw = d.get("vectors", [])
        handeyes_raw = d.get("handeyes", [])
        if not isinstance(vectors_raw, list):
            raise SchemaError("vectors", "expected a list")
        if not isinstance(handeyes_raw, list):
            raise SchemaError("handeyes", "expected a list")
        vectors = []
        for k, item in enumerate(vectors_raw):
            where = f"vectors[{k}]"
            if not isinstance(item, dict):
                raise SchemaError(where, "expected an object")
            for key in ("b", "r"):
                if key not in item:
                    raise SchemaError(f"{where}.{key}", "missing")
            b = _array(item["b"], (n,), f"{where}.b")
            r = _array(item["r"], (n,), f"{where}.r")
            w = _positive(item.get("w", 1.0), f"{where}.w")
            vectors.append(VectorPair(b, r, w))
        handeyes = []
        for k, item in enumerate(handeyes_raw):
            where = f"handeyes[{k}]"
            if not isinstance(item, dict):
                raise SchemaError(where, "expected an object")
            for key in ("A", "B"):
                if key not in item:
                    raise SchemaError(f"{where}.{key}", "missing")
            A = _array(item["A"], (n, n), f"{where}.A")
            B = _array(item["B"], (n, n), f"{where}.B")
            v = _positive(item.get("v", 1.0), f"{where}.v")
            handeyes.append(HandEyePair(A, B, v))
        if not vectors and not handeyes:
            raise SchemaError("vectors", "no vector or hand-eye measurements given")
        noise = NoiseSpec.from_dict(d.get("noise"))
        try:
            return cls(n, vectors, handeyes, noise)
        except ValueError as exc:
            raise SchemaError("noise", str(exc)) from None

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError("<json>", f"invalid JSON ({exc})") from None
        return cls.from_dict(d)


def build_pq(ms):
    """Weighted observation and reference matrices, each n x N.

    Column ``i`` of ``P`` is ``sqrt(w_i) b_i``; of ``Q`` is ``sqrt(w_i) r_i``.
    """
    if ms.N == 0:
        raise ValueError("build_pq needs at least one vector pair")
    sw = np.sqrt([p.w for p in ms.vectors])
    P = np.column_stack([p.b for p in ms.vectors]) * sw
    Q = np.column_stack([p.r for p in ms.vectors]) * sw
    return P, Q


def handeye_factor(A, B):
    """``I kron A - B^T kron I``, the map with ``factor @ vec(X) == vec(A X - X B)``.

    With row-major vectorisation the same map reads ``A kron I - I kron B^T``;
    the two are conjugate through the commutation matrix.
    """
    n = A.shape[0]
    I = np.eye(n)
    return np.kron(I, A) - np.kron(B.T, I)


def _stacked_factors(A, B):
    """Batched :func:`handeye_factor` over stacks ``A``, ``B`` of shape (M, n, n)."""
    M, n, _ = A.shape
    I = np.eye(n)
    # (I kron A)[j a, k b] = d_jk A_ab ; (B^T kron I)[j a, k b] = B_kj d_ab
    K = np.einsum("jk,mab->mjakb", I, A) - np.einsum("mkj,ab->mjakb", B, I)
    return K.reshape(M, n * n, n * n)


def build_h(ms):
    """Weighted hand-eye quadratic form ``sum_i v_i K_i^T K_i`` (n^2 x n^2, PSD)."""
    n = ms.n
    if ms.M == 0:
        return np.zeros((n * n, n * n))
    for h in ms.handeyes:
        if h.A.shape != (n, n):
            raise ValueError(f"hand-eye pair of shape {h.A.shape} in a dimension-{n} set")
    A = np.stack([h.A for h in ms.handeyes])
    B = np.stack([h.B for h in ms.handeyes])
    v = np.array([h.v for h in ms.handeyes])
    K = _stacked_factors(A, B)
    H = np.einsum("m,mij,mik->jk", v, K, K)
    return 0.5 * (H + H.T)


def weight_ratio(ms):
    """Ratio of total vector weight to total hand-eye weight."""
    if ms.M == 0:
        raise ValueError("weight ratio is undefined without hand-eye measurements")
    return sum(p.w for p in ms.vectors) / sum(h.v for h in ms.handeyes)


def rigid_from_rotations(R_obs_a_prev, R_obs_a_curr, R_obs_b_prev, R_obs_b_curr):
    """Rigid hand-eye pair from two observers' attitude matrices at consecutive epochs.

    ``A = R_a,k R_a,k-1^T`` and ``B = R_b,k^T R_b,k-1``.
    """
    mats = []
    for name, R in (("R_obs_a_prev", R_obs_a_prev), ("R_obs_a_curr", R_obs_a_curr),
                    ("R_obs_b_prev", R_obs_b_prev), ("R_obs_b_curr", R_obs_b_curr)):
        mats.append(check_orthonormal(R, name))
    Ra0, Ra1, Rb0, Rb1 = mats
    return HandEyePair(Ra1 @ Ra0.T, Rb1.T @ Rb0, 1.0)


def vectors_from_rotation(R_ext, w=1.0):
    """Vector pairs ``(R_ext e_i, e_i)`` reconstructed from an external rotation estimate."""
    R_ext = check_orthonormal(R_ext, "R_ext")
    n = R_ext.shape[0]
    I = np.eye(n)
    return [VectorPair(R_ext[:, i], I[:, i], w) for i in range(n)]
