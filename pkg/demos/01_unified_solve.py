"""
Fuse star-tracker style vector pairs with one hand-eye pair, then look at
the estimate, its two projections onto SO(3) and the predicted uncertainty.
"""
import numpy as np

from uniatt import (
    NoiseSpec, project_cayley, project_svd, rotation_covariance, rotation_error,
    solution_covariance, solve_unified,
)
from uniatt.simulation import ScenarioSpec, random_rotation, synth_measurements

rng = np.random.default_rng(7)
R_true = random_rotation(3, rng)

# eps_vector is a variance, eps_handeye the scale of the matrix-normal noise
noise = NoiseSpec(eps_vector=1e-6, eps_handeye=1e-4)
ms = synth_measurements(R_true, ScenarioSpec(N=(8,), M=(1,), noise=noise), rng=rng)

sol = solve_unified(ms)
print("rank", sol.rank, "loss", f"{sol.loss:.3e}")

# mat(x) is close to, but not on, SO(3)
Xt = sol.R_tilde
print("orthonormality defect", f"{np.linalg.norm(Xt.T @ Xt - np.eye(3)):.2e}")

R_svd = project_svd(Xt).R
R_cay = project_cayley(Xt).R
print("eta svd    [rad]", f"{rotation_error(R_svd, R_true):.3e}")
print("eta cayley [rad]", f"{rotation_error(R_cay, R_true):.3e}")

# first-order covariance of x, and of the Cayley parameters of R
cov = solution_covariance(ms, sol)
err = np.abs(sol.x - R_true.T.ravel())
rc = rotation_covariance(sol, cov.sigma_xx)
sci = {"float_kind": "{:.1e}".format}
print("3-sigma bounds ", np.array2string(cov.sigma3, formatter=sci))
print("actual errors  ", np.array2string(err, formatter=sci))
print("sigma_g diag   ", np.array2string(np.diag(rc.sigma_g), formatter=sci))
