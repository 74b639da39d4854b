"""
A single symmetric hand-eye pair cannot fix the attitude: its null space
holds several rotations. One vector pair picks the right one.
"""
import numpy as np

from uniatt import MeasurementSet, project_svd, rotation_error, solve_handeye_only, solve_unified
from uniatt.simulation import ScenarioSpec, random_rotation, synth_measurements

rng = np.random.default_rng(3)
R_true = random_rotation(3, rng)
ms = synth_measurements(R_true, ScenarioSpec(N=(1,), M=(1,), handeye_kind="symmetric"), rng=rng)

he = solve_handeye_only(MeasurementSet(3, [], ms.handeyes))
print("hand-eye only: ambiguous", he.ambiguous, "eigenspace dim", he.eigenspace_dim)

# B = V diag(lam) V^T; R V D V^T with D = diag(+-1), det D = 1 all satisfy AX = XB
lam, V = np.linalg.eigh(ms.handeyes[0].B)
for d in ([1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]):
    Rb = R_true @ V @ np.diag(d) @ V.T
    A, B = ms.handeyes[0].A, ms.handeyes[0].B
    print("branch", d, "residual", f"{np.linalg.norm(A @ Rb - Rb @ B):.1e}",
          "angle to truth", f"{rotation_error(Rb, R_true):.3f}")

R = project_svd(solve_unified(ms).R_tilde).R
print("with one vector pair: eta", f"{rotation_error(R, R_true):.1e}")
