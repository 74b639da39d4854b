"""
Mean rotation error over a grid of vector counts N and hand-eye counts M at
heavy noise, for rigid and symmetric hand-eye pairs. More vectors help
faster than more hand-eye pairs, and symmetric pairs are worse.
"""
import numpy as np

from uniatt import NoiseSpec
from uniatt.simulation import ScenarioSpec, run_monte_carlo, summarize

noise = NoiseSpec(eps_vector=0.5, eps_handeye=0.5)
for kind in ("rigid", "symmetric"):
    sc = ScenarioSpec(N=(1, 2, 3, 4, 5), M=(1, 2, 3, 4, 5), handeye_kind=kind, noise=noise,
                      trials=200, seed=1, with_covariance=False)
    G = np.zeros((5, 5))
    for row in summarize(run_monte_carlo(sc)):
        G[row["M"] - 1, row["N"] - 1] = row["mean_eta_rad"]
    print(f"\n{kind}: mean eta [rad], rows M = 1..5, columns N = 1..5")
    print(np.array2string(G, precision=3))
