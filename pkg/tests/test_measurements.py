import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uniatt.matcore import kron, vec
from uniatt.measurements import (
    HandEyePair, MeasurementSet, NoiseSpec, SchemaError, VectorPair, build_h, build_pq,
    handeye_factor, rigid_from_rotations, vectors_from_rotation, weight_ratio,
)
from uniatt.simulation import ScenarioSpec, random_rotation, synth_measurements
from uniatt.solver import solve_unified

I3 = np.eye(3)


def rot_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# P, Q

def test_build_pq_single_pair():
    P, Q = build_pq(MeasurementSet(3, [VectorPair(I3[0], I3[0])]))
    np.testing.assert_array_equal(P, I3[:, :1])
    np.testing.assert_array_equal(Q, I3[:, :1])


def test_build_pq_weight_scaling():
    P, _ = build_pq(MeasurementSet(3, [VectorPair(I3[0], I3[1], 4.0)]))
    np.testing.assert_array_equal(P[:, 0], [2.0, 0, 0])


def test_build_pq_requires_vectors():
    ms = MeasurementSet(3, [], [HandEyePair(I3, I3)])
    with pytest.raises(ValueError):
        build_pq(ms)


def test_build_pq_vectorized_identity(rng, rotation):
    r = rng.standard_normal((3, 3))
    ms = MeasurementSet(3, [VectorPair(rotation @ ri, ri, w) for ri, w in zip(r, [1.0, 2.0, 0.5])])
    P, Q = build_pq(ms)
    np.testing.assert_allclose(vec(P), kron(Q.T, I3) @ vec(rotation), atol=1e-12)


# H

def test_build_h_empty_is_zero():
    ms = MeasurementSet(3, [VectorPair(I3[0], I3[0])])
    np.testing.assert_array_equal(build_h(ms), np.zeros((9, 9)))


def test_build_h_identity_pair_vanishes():
    ms = MeasurementSet(3, [], [HandEyePair(I3, I3)])
    np.testing.assert_array_equal(build_h(ms), np.zeros((9, 9)))


def test_handeye_factor_maps_residual(rng):
    A, B, X = (rng.standard_normal((3, 3)) for _ in range(3))
    np.testing.assert_allclose(handeye_factor(A, B) @ vec(X), vec(A @ X - X @ B), atol=1e-12)


def test_build_h_null_vector_for_rigid_pair(rng, rotation):
    A = random_rotation(3, rng)
    B = rotation.T @ A @ rotation
    H = build_h(MeasurementSet(3, [], [HandEyePair(A, B)]))
    assert np.linalg.norm(H @ vec(rotation)) <= 1e-12


def test_build_h_matches_per_pair_sum(rng):
    pairs = [HandEyePair(rng.standard_normal((3, 3)), rng.standard_normal((3, 3)), v)
             for v in (0.5, 1.0, 3.0)]
    H = build_h(MeasurementSet(3, [], pairs))
    ref = sum(h.v * handeye_factor(h.A, h.B).T @ handeye_factor(h.A, h.B) for h in pairs)
    np.testing.assert_allclose(H, ref, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(2, 4))
def test_build_h_is_psd(seed, M, n):
    rng = np.random.default_rng(seed)
    pairs = [HandEyePair(rng.standard_normal((n, n)), rng.standard_normal((n, n)),
                         rng.uniform(0.1, 5)) for _ in range(M)]
    H = build_h(MeasurementSet(n, [], pairs))
    np.testing.assert_array_equal(H, H.T)
    assert np.linalg.eigvalsh(H)[0] >= -1e-12 * np.linalg.norm(H)


def test_noise_free_normal_equation_residual(rng, rotation):
    for kind in ("rigid", "symmetric"):
        ms = synth_measurements(rotation, ScenarioSpec(N=(4,), M=(3,), handeye_kind=kind), rng=rng)
        P, Q = build_pq(ms)
        Nm = build_h(ms) + kron(Q @ Q.T, I3)
        res = Nm @ vec(rotation) - kron(Q, I3) @ vec(P)
        assert np.linalg.norm(res) <= 1e-10


def test_weight_scaling_leaves_argmin(rng, rotation):
    sc = ScenarioSpec(N=(4,), M=(2,), noise=NoiseSpec(eps_vector=1e-2, eps_handeye=1e-2))
    ms = synth_measurements(rotation, sc, rng=rng)
    x1 = solve_unified(ms).x
    x2 = solve_unified(ms.with_weights(2.0)).x
    np.testing.assert_allclose(x1, x2, atol=1e-10)
    H1, H2 = build_h(ms), build_h(ms.with_weights(2.0))
    np.testing.assert_allclose(H2, 2.0 * H1, atol=1e-12)


# weight ratio

def test_weight_ratio_examples():
    v = [VectorPair(I3[0], I3[0]), VectorPair(I3[1], I3[1])]
    assert weight_ratio(MeasurementSet(3, v, [HandEyePair(I3, I3, 2.0)])) == pytest.approx(1.0)
    v1 = [VectorPair(I3[0], I3[0])]
    assert weight_ratio(MeasurementSet(3, v1, [HandEyePair(I3, I3), HandEyePair(I3, I3)])) == 0.5
    # twice-as-accurate hand-eye measurement: w = 1 for one vector, v = 2 for one pair
    assert weight_ratio(MeasurementSet(3, v1, [HandEyePair(I3, I3, 2.0)])) == 0.5


def test_weight_ratio_requires_handeye():
    with pytest.raises(ValueError):
        weight_ratio(MeasurementSet(3, [VectorPair(I3[0], I3[0])]))


# rigid pairs

def test_rigid_from_identities():
    h = rigid_from_rotations(I3, I3, I3, I3)
    np.testing.assert_array_equal(h.A, I3)
    np.testing.assert_array_equal(h.B, I3)
    assert h.v == 1.0


def test_rigid_from_unchanged_attitudes(rng):
    Ra, Rb = random_rotation(3, rng), random_rotation(3, rng)
    h = rigid_from_rotations(Ra, Ra, Rb, Rb)
    np.testing.assert_allclose(h.A, I3, atol=1e-14)
    np.testing.assert_allclose(h.B, I3, atol=1e-14)


def test_rigid_from_formation(rng, rotation):
    # observer a sees the target through the fixed relative attitude R
    Rb0, Rb1 = random_rotation(3, rng), random_rotation(3, rng)
    Ra0, Ra1 = rotation @ Rb0.T, rotation @ Rb1.T
    h = rigid_from_rotations(Ra0, Ra1, Rb0, Rb1)
    assert np.linalg.norm(h.A @ rotation - rotation @ h.B) <= 1e-12


def test_rigid_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        rigid_from_rotations(I3, 1.01 * I3, I3, I3)


# reconstructed vectors

def test_vectors_from_identity():
    for i, p in enumerate(vectors_from_rotation(I3)):
        np.testing.assert_array_equal(p.b, I3[i])
        np.testing.assert_array_equal(p.r, I3[i])


def test_vectors_from_quarter_turn():
    d = [p.b for p in vectors_from_rotation(rot_z(np.pi / 2))]
    np.testing.assert_allclose(d[0], [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(d[1], [-1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(d[2], [0, 0, 1], atol=1e-15)


def test_vectors_from_rotation_round_trip(rotation):
    sol = solve_unified(MeasurementSet(3, vectors_from_rotation(rotation, 2.0)))
    np.testing.assert_allclose(sol.R_tilde, rotation, atol=1e-12)


def test_vectors_from_rotation_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        vectors_from_rotation(np.diag([1.0, 1.0, 1.1]))


# data model and JSON

def test_json_round_trip(rng, rotation):
    sc = ScenarioSpec(N=(3,), M=(2,), noise=NoiseSpec(eps_vector=1e-3, eps_handeye=1e-4))
    ms = synth_measurements(rotation, sc, rng=rng)
    back = MeasurementSet.from_json(ms.to_json())
    assert back.to_dict() == ms.to_dict()
    np.testing.assert_array_equal(back.handeyes[1].A, ms.handeyes[1].A)


def test_json_matrices_are_row_major():
    A = np.arange(9.0).reshape(3, 3)
    doc = {"n": 3, "handeyes": [{"A": A.tolist(), "B": np.eye(3).tolist()}]}
    np.testing.assert_array_equal(MeasurementSet.from_dict(doc).handeyes[0].A, A)


@pytest.mark.parametrize("doc, field", [
    ({"vectors": []}, "n"),
    ({"n": 3, "vectors": [{"b": [1, 2], "r": [1, 0, 0]}]}, "vectors[0].b"),
    ({"n": 3, "vectors": [{"b": [1, 0, 0]}]}, "vectors[0].r"),
    ({"n": 3, "vectors": [{"b": [1, 0, 0], "r": [1, 0, 0], "w": -1}]}, "vectors[0].w"),
    ({"n": 3, "handeyes": [{"A": [[1, 0, 0]], "B": np.eye(3).tolist()}]}, "handeyes[0].A"),
    ({"n": 3, "vectors": [], "handeyes": []}, "vectors"),
    ({"n": 3, "vectors": [{"b": [1, 0, 0], "r": [1, 0, 0]}], "noise": {"eps_vectr": 1}}, "noise.eps_vectr"),
])
def test_schema_errors_name_the_field(doc, field):
    with pytest.raises(SchemaError) as err:
        MeasurementSet.from_dict(doc)
    assert err.value.field == field


def test_invalid_json_text():
    with pytest.raises(SchemaError):
        MeasurementSet.from_json("{not json")


def test_value_type_invariants():
    with pytest.raises(ValueError):
        VectorPair([1, 0, 0], [1, 0, 0], 0.0)
    with pytest.raises(ValueError):
        HandEyePair(np.eye(3), np.eye(2))
    with pytest.raises(ValueError):
        MeasurementSet(3, [VectorPair([1, 0], [1, 0])])
    with pytest.raises(ValueError):
        MeasurementSet(3)
    with pytest.raises(ValueError):
        NoiseSpec(eps_vector=-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(sigma_b=[-np.eye(3)])


def test_vectors_need_not_be_unit():
    ms = MeasurementSet(3, [VectorPair([3.0, 0, 0], [1.0, 0, 0])])
    assert ms.N == 1


def test_noise_defaults_and_overrides():
    nz = NoiseSpec(eps_vector=2.0, eps_handeye=0.1)
    np.testing.assert_array_equal(nz.cov_b(0, 3), 2.0 * I3)
    np.testing.assert_allclose(nz.cov_A(0, 3), 0.01 * np.eye(9))
    np.testing.assert_array_equal(nz.cov_B(0, 3), np.zeros((9, 9)))
    custom = NoiseSpec(sigma_b=[np.diag([1.0, 2.0, 3.0])])
    np.testing.assert_array_equal(custom.cov_b(0, 3), np.diag([1.0, 2.0, 3.0]))
    assert NoiseSpec.from_dict(json.loads(json.dumps(custom.to_dict()))).to_dict() == custom.to_dict()
