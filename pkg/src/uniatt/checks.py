"""
Self-check suites: independent oracles run against the library.

Each suite returns a :class:`CheckResult` with status ``pass``, ``fail`` or
``skip``. They back the ``oracle-check`` command and the acceptance tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covariance import solution_covariance
from .matcore import vec
from .measurements import MeasurementSet, NoiseSpec, build_pq, handeye_factor
from .projection import cayley, cayley_inverse, project_cayley, project_svd, rotation_error
from .simulation import ScenarioSpec, add_noise, random_rotation, synth_measurements
from .solver import solve_unified

__all__ = [
    "CheckResult",
    "MIN_COVARIANCE_TRIALS",
    "stacked_lstsq",
    "check_dense_ls",
    "check_covariance_mc",
    "check_projection_agreement",
    "run_all",
]

MIN_COVARIANCE_TRIALS = 2000


@dataclass
class CheckResult:
    name: str
    status: str
    detail: str
    metrics: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status != "fail"


def stacked_lstsq(ms):
    """Dense least-squares oracle on the stacked, weighted system.

    Rows ``(Q^T kron I)`` against ``vec(P)`` and ``sqrt(v_i) K_i`` against zero,
    solved by ``numpy.linalg.lstsq``.
    """
    n = ms.n
    rows, rhs = [], []
    if ms.N:
        P, Q = build_pq(ms)
        rows.append(np.kron(Q.T, np.eye(n)))
        rhs.append(vec(P))
    for h in ms.handeyes:
        rows.append(np.sqrt(h.v) * handeye_factor(h.A, h.B))
        rhs.append(np.zeros(n * n))
    x, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)
    return x


def _random_instance(rng, n=3):
    R = random_rotation(n, rng)
    N = int(rng.integers(1, 11))
    M = int(rng.integers(0, 6))
    kind = "rigid" if rng.random() < 0.5 else "symmetric"
    noise = NoiseSpec(eps_vector=1e-2, eps_handeye=1e-2)
    sc = ScenarioSpec(n=n, N=(N,), M=(M,), handeye_kind=kind, noise=noise)
    ms = synth_measurements(R, sc, rng=rng)
    # random positive weights exercise the weighting path
    ms = MeasurementSet(
        n,
        [type(p)(p.b, p.r, rng.uniform(0.5, 2.0)) for p in ms.vectors],
        [type(h)(h.A, h.B, rng.uniform(0.5, 2.0)) for h in ms.handeyes],
        noise,
    )
    return ms


def check_dense_ls(instances=1000, seed=0, tol=1e-8):
    """``solve_unified`` against :func:`stacked_lstsq` on random full-rank instances."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    worst = 0.0
    done = 0
    while done < instances:
        ms = _random_instance(rng)
        sol = solve_unified(ms)
        if sol.rank < 9:
            continue
        ref = stacked_lstsq(ms)
        worst = max(worst, float(np.linalg.norm(sol.x - ref) / np.linalg.norm(ref)))
        done += 1
    status = "pass" if worst <= tol else "fail"
    return CheckResult(
        "dense_ls_equivalence", status,
        f"max relative deviation {worst:.2e} over {done} instances (tol {tol:g})",
        {"max_rel_err": worst, "instances": done},
    )


def check_covariance_mc(trials=10000, seed=0, N=30, M=1, eps_vector=1e-4, eps_handeye=1e-6,
                        kind="rigid", frob_tol=0.20, coverage_min=0.98):
    """Monte Carlo check of ``Sigma_xx`` for one fixed geometry.

    The truth and the noise-free measurements are drawn once; each trial
    re-draws only the noise. The empirical covariance of ``x`` is compared
    with the trial-averaged analytical ``Sigma_xx`` in relative Frobenius
    norm, and each component's 3-sigma interval from that trial's own
    ``Sigma_xx`` is checked against the truth.
    """
    if trials < MIN_COVARIANCE_TRIALS:
        return CheckResult(
            "covariance_monte_carlo", "skip",
            f"{trials} trials is below the {MIN_COVARIANCE_TRIALS} needed for a meaningful estimate",
            {"trials": trials},
        )
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    R = random_rotation(3, rng)
    noise = NoiseSpec(eps_vector=eps_vector, eps_handeye=eps_handeye)
    clean = synth_measurements(R, ScenarioSpec(N=(N,), M=(M,), handeye_kind=kind), rng=rng)
    clean = MeasurementSet(3, clean.vectors, clean.handeyes, noise)
    x_true = vec(R)
    xs = np.empty((trials, 9))
    S_mean = np.zeros((9, 9))
    covered = 0
    for t in range(trials):
        ms = add_noise(clean, R, rng)
        sol = solve_unified(ms)
        cov = solution_covariance(ms, sol)
        xs[t] = sol.x
        S_mean += cov.sigma_xx
        covered += int(np.count_nonzero(np.abs(sol.x - x_true) <= cov.sigma3))
    S_mean /= trials
    E = np.cov(xs, rowvar=False)
    rel = float(np.linalg.norm(E - S_mean) / np.linalg.norm(E))
    coverage = covered / (9.0 * trials)
    ok = rel <= frob_tol and coverage >= coverage_min
    return CheckResult(
        "covariance_monte_carlo", "pass" if ok else "fail",
        f"relative Frobenius error {rel:.3f} (tol {frob_tol}), 3-sigma coverage {coverage:.4f} "
        f"(min {coverage_min}) over {trials} trials",
        {"rel_frobenius": rel, "coverage": coverage, "trials": trials},
    )


def check_projection_agreement(trials=1000, seed=0, perturbation=1e-3, agree_tol=5e-3,
                               roundtrip_tol=1e-10):
    """Cayley vs SVD projection near SO(3), and the Cayley round trip.

    Rotations are kept at least 0.1 rad away from a half-turn.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 3]))
    worst_agree = 0.0
    worst_rt = 0.0
    done = 0
    while done < trials:
        R = random_rotation(3, rng)
        if rotation_error(R, np.eye(3)) > np.pi - 0.1:
            continue
        E = rng.standard_normal((3, 3))
        xm = R + perturbation * rng.random() * E / np.linalg.norm(E)
        Rs = project_svd(xm).R
        Rc = project_cayley(xm).R
        worst_agree = max(worst_agree, float(np.linalg.norm(Rc - Rs)))
        worst_rt = max(worst_rt, float(np.linalg.norm(cayley(cayley_inverse(R), 3) - R)))
        done += 1
    ok = worst_agree <= agree_tol and worst_rt <= roundtrip_tol
    return CheckResult(
        "cayley_svd_agreement", "pass" if ok else "fail",
        f"max |R_cayley - R_svd|_F {worst_agree:.2e} (tol {agree_tol:g}), "
        f"max round-trip error {worst_rt:.2e} (tol {roundtrip_tol:g})",
        {"max_agreement": worst_agree, "max_roundtrip": worst_rt, "trials": done},
    )


def run_all(trials=MIN_COVARIANCE_TRIALS, seed=0, instances=1000):
    return [
        check_dense_ls(instances=instances, seed=seed),
        check_covariance_mc(trials=trials, seed=seed),
        check_projection_agreement(seed=seed),
    ]
