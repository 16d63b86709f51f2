import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from odk import composite as cp
from odk import repcore as rc
from odk.errors import DimensionTooLarge, ZeroProbabilityConditioning
from odk.models import AmplitudeDampingSpec, amplitude_damping, build_model
from odk.timegrid import TimeGrid

X, Y, Z = rc.PAULI["X"], rc.PAULI["Y"], rc.PAULI["Z"]
PZ = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
PX = [0.5 * np.array([[1, 1], [1, 1]]), 0.5 * np.array([[1, -1], [-1, 1]])]
PY = [0.5 * np.array([[1, -1j], [1j, 1]]), 0.5 * np.array([[1, 1j], [-1j, 1]])]


def test_dimension_bounds():
    with pytest.raises(DimensionTooLarge):
        cp.JointModel(2, 32, np.eye(64), np.eye(32) / 32)
    with pytest.raises(DimensionTooLarge):
        cp.JointModel(5, 2, np.eye(10), np.eye(2) / 2)


def test_decoupled_is_unitary():
    m = cp.decoupled(0.7 * Z + 0.2 * X, X, np.diag([0.6, 0.4]))
    tr = cp.joint_reduce(m, TimeGrid(2.0, 20))
    for S in tr.supers:
        assert np.allclose(S.conj().T @ S, np.eye(4), atol=1e-12)


def test_dephasing_pair_matches_model():
    g = 0.8
    grid = TimeGrid(1.5, 150)
    tr = cp.joint_reduce(cp.dephasing_pair(g), grid)
    # sigma_z (x) sigma_x coupling: coherence factor cos(2 g t)
    assert np.allclose(tr.supers[:, 1, 1], np.cos(2 * g * grid.times), atol=1e-12)
    ref = build_model("dephasing-finite-env", {"g": 2 * g}, grid)
    assert np.abs(tr.supers - ref.trajectory.supers).max() < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_reduced_maps_are_cptp(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    m = cp.JointModel(2, 3, A + A.conj().T, rc.random_state(3, rng))
    tr = cp.joint_reduce(m, TimeGrid(3.0, 6))
    assert tr.choi_min().min() > -1e-9
    assert tr.trace_error() < 1e-9


def test_jaynes_cummings_matches_amplitude_damping():
    g = 0.8
    grid = TimeGrid(4.0, 400)
    tr = cp.joint_reduce(cp.jaynes_cummings(g, 1.0, 1.0, 4), grid)
    spec = AmplitudeDampingSpec(lambda t: -1j * g * g * np.exp(-1j * np.asarray(t, float)), 1.0)
    ad = amplitude_damping(spec, grid)
    assert np.abs(tr.supers - ad.trajectory.supers).max() < 1e-6
    r = cp.truncation_ratio(lambda n: cp.jaynes_cummings(g, 1.0, 1.0, n), 2, TimeGrid(2.0, 10))
    assert r["converged"]


def test_regression_decoupled_and_single_time():
    m = cp.decoupled(0.7 * Z + 0.2 * X, X, np.diag([0.6, 0.4]))
    req = cp.CorrelationRequest([(X, Y), (Z, X)], [0.4, 1.3], np.diag([0.8, 0.2]))
    assert cp.regression_check(m, req)["deviation"] < 1e-10
    req1 = cp.CorrelationRequest([(X, Y)], [0.9], np.diag([0.8, 0.2]))
    assert cp.regression_check(cp.dephasing_pair(1.0), req1)["deviation"] < 1e-12


def test_regression_violated_by_dephasing():
    req = cp.CorrelationRequest([(np.eye(2), X), (np.eye(2), X)], [0.3, 0.7], np.eye(2) / 2)
    r = cp.regression_check(cp.dephasing_pair(1.0), req)
    assert r["deviation"] > 1e-3


def test_correlation_request_validation():
    with pytest.raises(ValueError):
        cp.CorrelationRequest([(X, X)] * 5, [0.1, 0.2, 0.3, 0.4, 0.5], np.eye(2) / 2)
    with pytest.raises(ValueError):
        cp.CorrelationRequest([(X, X)] * 2, [0.5, 0.2], np.eye(2) / 2)


def test_cpf_decoupled_zero():
    m = cp.decoupled(0.7 * Z + 0.2 * X, 0.4 * Y, np.diag([0.6, 0.4]))
    r = cp.cpf_correlation(m, np.eye(2) / 2, PX, PY, PX, 0.5, 1.3, 2.4, [1.0, -1.0])
    assert np.nanmax(np.abs(r["cpf"])) < 1e-10


def test_cpf_classical_equivalent_zero():
    H = np.diag([0.3, -0.1, 0.8, 0.5])  # co-diagonal with the Z projectors
    m = cp.JointModel(2, 2, H, np.diag([0.5, 0.5]))
    r = cp.cpf_correlation(m, np.diag([0.3, 0.7]), PZ, PZ, PZ, 0.2, 0.9, 1.7, [1.0, -1.0])
    assert np.nanmax(np.abs(r["cpf"])) < 1e-8


def test_cpf_dephasing_nonzero():
    H = np.kron(Z, X) + 0.7 * np.kron(np.eye(2), Z)
    m = cp.JointModel(2, 2, H, np.diag([1.0, 0.0]))
    r = cp.cpf_correlation(m, np.eye(2) / 2, PX, PY, PX, 0.5, 1.3, 2.4, [1.0, -1.0])
    assert np.nanmax(np.abs(r["cpf"])) > 0.1
    assert np.all(np.abs(r["cpf"]) <= 1 + 1e-12)


def test_cpf_zero_probability_branch():
    m = cp.decoupled(np.zeros((2, 2)), np.zeros((2, 2)), np.diag([1.0, 0.0]))
    r = cp.cpf_correlation(m, PZ[0], PZ, PZ, PZ, 0.1, 0.2, 0.3, [1.0, -1.0])
    assert r["excluded"] == [1]
    with pytest.raises(ZeroProbabilityConditioning):
        cp.cpf_correlation(m, PZ[0], PZ, PZ, PZ, 0.1, 0.2, 0.3, [1.0, -1.0], y=1)


def test_from_dict():
    m = cp.JointModel.from_dict({"dS": 2, "dE": 2, "H": np.kron(Z, X).tolist(),
                                 "rhoE": {"re": [[1, 0], [0, 0]]}})
    assert np.allclose(m.H, np.kron(Z, X))
