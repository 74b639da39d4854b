"""
Measurement synthesis and the Monte Carlo harness.

Noise model: ``b_i = R r_i + eps_i`` with ``eps_i ~ N(0, eps_vector I)``
and ``A_i R - R B_i = Xi_i`` with ``Xi_i ~ MN(0, eps_handeye I, eps_handeye I)``.
Reference vectors are uniform on the unit sphere. Hand-eye pairs are either
rigid (``B_i`` uniform on SO(n)) or symmetric (``B_i = V diag(lam) V^T``
with ``lam`` uniform in ``[0.5, 2]``), and ``A_i = R B_i R^T`` before noise.

Every trial draws from its own stream keyed by ``(seed, N, M, trial)``,
so tables are reproducible and independent of worker scheduling.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation
from scipy.stats import ortho_group, special_ortho_group

from .covariance import solution_covariance
from .matcore import MatrixNormalSpec, sample_matrix_normal, vec
from .measurements import HandEyePair, MeasurementSet, NoiseSpec, VectorPair
from .projection import project_cayley, project_svd, rotation_error, CayleySingularityError
from .solver import solve_handeye_only, solve_unified

__all__ = [
    "TrajectorySpec",
    "ScenarioSpec",
    "TrialRecord",
    "SYMMETRIC_EIG_RANGE",
    "quat_to_matrix",
    "matrix_to_quat",
    "gen_trajectory",
    "random_rotation",
    "synth_measurements",
    "add_noise",
    "run_trial",
    "run_monte_carlo",
    "summarize",
    "three_sigma_series",
    "SWEEP_COLUMNS",
    "SUMMARY_COLUMNS",
    "sweep_csv",
    "summary_csv",
]

SYMMETRIC_EIG_RANGE = (0.5, 2.0)

# sinusoidal quaternion model used for the static simulations
QUAT41_RATE = np.array([-0.8334, -1.5833, 3.0038, -1.1200]) * 2e-3
QUAT41_PHASE = np.array([1.3679, -0.1479, 2.0061, -0.0179])
# attitude profile for the gyro fusion study
QUAT44_FREQ = np.array([-0.12352, -0.31294, 0.62993, -0.27127])
QUAT44_PHASE = np.array([-0.74532, -0.24811, 0.66610, -0.54501])


def quat_to_matrix(q):
    """Rotation matrix of a scalar-first quaternion (normalised internally)."""
    q = np.asarray(q, dtype=float)
    return Rotation.from_quat(q[..., [1, 2, 3, 0]]).as_matrix()


def matrix_to_quat(R):
    """Scalar-first unit quaternion with nonnegative scalar part."""
    q = Rotation.from_matrix(R).as_quat()
    q = q[..., [3, 0, 1, 2]]
    sign = np.where(q[..., :1] < 0, -1.0, 1.0)
    return q * sign


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "quat_sinusoid_41"
    length: int = 1
    period: float = 1e-3
    freq: Optional[Sequence[float]] = None
    phase: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.kind not in ("quat_sinusoid_41", "quat_sinusoid_44", "constant", "custom"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if int(self.length) < 1:
            raise ValueError("trajectory length must be >= 1")
        if not self.period > 0:
            raise ValueError("sample period must be positive")
        if self.kind == "custom" and (self.freq is None or self.phase is None):
            raise ValueError("custom trajectories need freq and phase 4-vectors")


def gen_trajectory(ts):
    """Rotation matrices (K, 3, 3) from a sinusoidal unit-quaternion profile.

    ``quat_sinusoid_41``: ``q_k = sin(c k + phi)`` for ``k = 1..K`` with the
    fixed static-simulation coefficients. ``quat_sinusoid_44`` and
    ``custom``: ``q_k = sin(k T freq + phase)``. Quaternions are scalar-first
    and normalised.
    """
    K = int(ts.length)
    k = np.arange(1, K + 1, dtype=float)[:, None]
    if ts.kind == "constant":
        return np.repeat(np.eye(3)[None], K, axis=0)
    if ts.kind == "quat_sinusoid_41":
        rate = QUAT41_RATE if ts.freq is None else np.asarray(ts.freq, dtype=float)
        phase = QUAT41_PHASE if ts.phase is None else np.asarray(ts.phase, dtype=float)
        q = np.sin(rate * k + phase)
    else:
        freq = QUAT44_FREQ if ts.freq is None else np.asarray(ts.freq, dtype=float)
        phase = QUAT44_PHASE if ts.phase is None else np.asarray(ts.phase, dtype=float)
        q = np.sin(k * ts.period * freq + phase)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    return quat_to_matrix(q)


@dataclass(frozen=True)
class ScenarioSpec:
    """One Monte Carlo study: a grid of (N, M) cells sharing noise and kind."""

    n: int = 3
    N: tuple = (5,)
    M: tuple = (1,)
    handeye_kind: str = "rigid"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    trials: int = 100
    seed: int = 0
    scenario_id: str = "scenario"
    with_covariance: bool = True
    projection: str = "svd"

    def __post_init__(self):
        Ns = tuple(int(v) for v in np.atleast_1d(self.N))
        Ms = tuple(int(v) for v in np.atleast_1d(self.M))
        object.__setattr__(self, "N", Ns)
        object.__setattr__(self, "M", Ms)
        if self.handeye_kind not in ("rigid", "symmetric"):
            raise ValueError(f"handeye_kind must be 'rigid' or 'symmetric', got {self.handeye_kind!r}")
        if self.projection not in ("svd", "cayley"):
            raise ValueError(f"projection must be 'svd' or 'cayley', got {self.projection!r}")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        if any(v < 0 for v in Ns + Ms):
            raise ValueError("N and M must be nonnegative")
        if any(a + b < 1 for a in Ns for b in Ms):
            raise ValueError("every (N, M) cell needs N + M >= 1")

    def cells(self):
        return [(a, b) for b in self.M for a in self.N]

    def to_dict(self):
        d = asdict(self)
        d["N"] = list(self.N)
        d["M"] = list(self.M)
        d["noise"] = self.noise.to_dict()
        d["symmetric_eig_range"] = list(SYMMETRIC_EIG_RANGE)
        d["reference_vectors"] = "uniform on unit sphere"
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("symmetric_eig_range", None)
        d.pop("reference_vectors", None)
        d["noise"] = NoiseSpec.from_dict(d.get("noise"))
        return cls(**d)


@dataclass(frozen=True)
class TrialRecord:
    scenario_id: str
    N: int
    M: int
    kind: str
    trial: int
    R_true: np.ndarray
    R: np.ndarray
    x: np.ndarray
    eta: float
    loss: float
    sigma3: Optional[np.ndarray]
    seed: int

    @property
    def sigma3_rms(self):
        if self.sigma3 is None:
            return float("nan")
        return float(np.sqrt(np.mean(self.sigma3**2)))

    @property
    def covered(self):
        """Fraction of components of x inside the 3-sigma envelope around the truth."""
        if self.sigma3 is None:
            return float("nan")
        err = np.abs(self.x - vec(self.R_true))
        # absolute slack so that exact noise-free estimates count as covered
        return float(np.mean(err <= self.sigma3 + 1e-12))


def random_rotation(n, rng):
    if n == 1:
        return np.eye(1)
    return special_ortho_group.rvs(n, random_state=rng)


def _unit_vectors(n, count, rng):
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def synth_measurements(R_true, scenario, N=None, M=None, rng=None):
    """Synthesize a noisy measurement set around ``R_true``.

    ``N``/``M`` default to the first grid values of ``scenario``. The
    noise-free geometry is drawn first, then :func:`add_noise` perturbs it.
    """
    rng = np.random.default_rng(rng)
    R_true = np.asarray(R_true, dtype=float)
    n = R_true.shape[0]
    N = scenario.N[0] if N is None else int(N)
    M = scenario.M[0] if M is None else int(M)

    vectors = [VectorPair(R_true @ r, r, 1.0) for r in _unit_vectors(n, N, rng)]
    handeyes = []
    for _ in range(M):
        if scenario.handeye_kind == "rigid":
            B = random_rotation(n, rng)
            A = R_true @ B @ R_true.T
        else:
            V = ortho_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)
            lam = rng.uniform(*SYMMETRIC_EIG_RANGE, size=n)
            B = (V * lam) @ V.T
            B = 0.5 * (B + B.T)
            A = R_true @ B @ R_true.T
            A = 0.5 * (A + A.T)
        handeyes.append(HandEyePair(A, B, 1.0))
    clean = MeasurementSet(n, vectors, handeyes, scenario.noise)
    return add_noise(clean, R_true, rng)


def add_noise(ms, R_true, rng=None):
    """Perturb a noise-free set according to its scalar noise description.

    ``b_i += sqrt(eps_vector) N(0, I)``, ``r_i += sqrt(eps_reference) N(0, I)``
    and ``A_i += Xi_i R_true^T`` with ``Xi_i ~ MN(0, eps_handeye I, eps_handeye I)``,
    so that ``A_i R_true - R_true B_i = Xi_i`` exactly.
    """
    rng = np.random.default_rng(rng)
    R_true = np.asarray(R_true, dtype=float)
    n = ms.n
    nz = ms.noise
    vectors = []
    for p in ms.vectors:
        b = p.b + np.sqrt(nz.eps_vector) * rng.standard_normal(n) if nz.eps_vector > 0 else p.b
        r = p.r + np.sqrt(nz.eps_reference) * rng.standard_normal(n) if nz.eps_reference > 0 else p.r
        vectors.append(VectorPair(b, r, p.w))
    handeyes = []
    if nz.eps_handeye > 0 and ms.M:
        I = nz.eps_handeye * np.eye(n)
        spec = MatrixNormalSpec(np.zeros((n, n)), I, I)
    for h in ms.handeyes:
        A = h.A
        if nz.eps_handeye > 0:
            A = A + sample_matrix_normal(spec, rng) @ R_true.T
        handeyes.append(HandEyePair(A, h.B, h.v))
    return MeasurementSet(n, vectors, handeyes, nz)


def _trial_rng(seed, N, M, trial):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(N), int(M), int(trial)]))


def run_trial(scenario, R_true, N, M, trial):
    rng = _trial_rng(scenario.seed, N, M, trial)
    ms = synth_measurements(R_true, scenario, N, M, rng)
    sol = solve_unified(ms) if ms.N > 0 else solve_handeye_only(ms)
    xm = sol.R_tilde
    if scenario.projection == "cayley":
        try:
            R = project_cayley(xm).R
        except CayleySingularityError:
            R = project_svd(xm).R
    else:
        R = project_svd(xm).R
    sigma3 = None
    if scenario.with_covariance and ms.N > 0:
        sigma3 = solution_covariance(ms, sol).sigma3
    return TrialRecord(
        scenario_id=scenario.scenario_id,
        N=N, M=M, kind=scenario.handeye_kind, trial=trial,
        R_true=R_true, R=R, x=sol.x,
        eta=rotation_error(R, R_true),
        loss=sol.loss, sigma3=sigma3, seed=scenario.seed,
    )


def _run_cell(args):
    scenario, trajectory, N, M = args
    K = len(trajectory)
    return [run_trial(scenario, trajectory[t % K], N, M, t) for t in range(scenario.trials)]


def run_monte_carlo(scenario, trajectory=None, jobs=1):
    """Run every (N, M) cell of ``scenario``; returns the list of trial records.

    True rotations cycle through ``trajectory`` (default: the static
    sinusoid profile, one attitude per trial). ``jobs > 1`` fans cells out to
    worker processes; the record order does not depend on it.
    """
    if trajectory is None:
        trajectory = gen_trajectory(TrajectorySpec("quat_sinusoid_41", scenario.trials))
        if scenario.n != 3:
            rng = np.random.default_rng(scenario.seed)
            trajectory = [random_rotation(scenario.n, rng) for _ in range(scenario.trials)]
    trajectory = list(np.asarray(trajectory))
    tasks = [(scenario, trajectory, N, M) for N, M in scenario.cells()]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_run_cell, tasks))
    else:
        chunks = [_run_cell(t) for t in tasks]
    return [rec for chunk in chunks for rec in chunk]


def summarize(records):
    """Per-cell statistics keyed by ``(N, M)`` in first-seen order."""
    cells = {}
    for rec in records:
        cells.setdefault((rec.N, rec.M), []).append(rec)
    out = []
    for (N, M), recs in cells.items():
        etas = np.array([r.eta for r in recs])
        cov = np.array([r.covered for r in recs])
        s3 = np.array([r.sigma3_rms for r in recs])
        out.append({
            "scenario_id": recs[0].scenario_id,
            "N": N,
            "M": M,
            "kind": recs[0].kind,
            "trials": len(recs),
            "mean_eta_rad": float(np.mean(etas)),
            "median_eta_rad": float(np.median(etas)),
            "coverage_3sigma": float(np.mean(cov)) if not np.all(np.isnan(cov)) else float("nan"),
            "mean_sigma3_rms": float(np.mean(s3)) if not np.all(np.isnan(s3)) else float("nan"),
        })
    return out


def three_sigma_series(records):
    """Per-component estimate, truth and 3-sigma envelope, one row per record.

    Returns a dict of (K, n^2) arrays: ``estimate``, ``truth``, ``lower``,
    ``upper`` (envelope around the estimate) and ``half_width``.
    """
    est = np.array([r.x for r in records])
    truth = np.array([vec(r.R_true) for r in records])
    hw = np.array([r.sigma3 if r.sigma3 is not None else np.full(r.x.size, np.nan) for r in records])
    return {
        "estimate": est,
        "truth": truth,
        "half_width": hw,
        "lower": est - hw,
        "upper": est + hw,
    }


SWEEP_COLUMNS = ["scenario_id", "N", "M", "kind", "trial", "eta_rad", "loss", "sigma3_rms", "seed"]
SUMMARY_COLUMNS = ["scenario_id", "N", "M", "kind", "trials", "mean_eta_rad", "median_eta_rad",
                   "coverage_3sigma", "mean_sigma3_rms"]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in records:
        w.writerow([_fmt(v) for v in (r.scenario_id, r.N, r.M, r.kind, r.trial,
                                      float(r.eta), float(r.loss), r.sigma3_rms, r.seed)])
    return buf.getvalue()


def summary_csv(summary):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in summary:
        w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()
