"""
uniatt -- closed-form attitude determination from vector observations and
hand-eye measurements, with first-order covariance, SO(n) projection and a
gyro-aided extended Kalman filter.
"""
from .matcore import vec, mat, kron, pinv, min_eigvec, skew_embed, pmat, sample_matrix_normal, MatrixNormalSpec
from .measurements import (
    HandEyePair, MeasurementSet, NoiseSpec, SchemaError, VectorPair,
    build_h, build_pq, rigid_from_rotations, vectors_from_rotation, weight_ratio,
)
from .solver import (
    AttitudeSolution, PreconditionError, evaluate_loss,
    solve_handeye_only, solve_unified, solve_vector_only,
)
from .projection import (
    CayleySingularityError, RotationEstimate, project_cayley, project_svd, rotation_error,
)
from .covariance import assemble_blocks, rotation_covariance, solution_covariance

__version__ = "0.1.0"
