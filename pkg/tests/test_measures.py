import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from odk import measures as ms
from odk import repcore as rc
from odk.errors import NonDifferentiable, NotTracePreserving, SingularState, SupportViolation

X, Y, Z = rc.PAULI["X"], rc.PAULI["Y"], rc.PAULI["Z"]
K0 = np.diag([1.0, 0.0]).astype(complex)
K1 = np.diag([0.0, 1.0]).astype(complex)
PLUS = 0.5 * np.ones((2, 2), dtype=complex)
KINDS = ["relative", "renyi(0.5)", "renyi(2)", "sandwiched(0.5)", "sandwiched(2)", "skew(0.3)", "skew(0.5)"]


def test_relative_entropy_value():
    rho = np.diag([0.75, 0.25])
    assert np.isclose(ms.relative_entropy(rho, np.eye(2) / 2), 0.75 * np.log(1.5) + 0.25 * np.log(0.5))
    assert np.isclose(ms.relative_entropy(rho, np.eye(2) / 2), 0.1308, atol=1e-4)


@pytest.mark.parametrize("kind", KINDS)
def test_divergence_zero_on_equal(kind):
    rho = rc.random_state(3, 4)
    assert abs(ms.divergence(kind, rho, rho)) < 1e-10


def test_commuting_reduces_to_classical():
    p, q = np.array([0.5, 0.3, 0.2]), np.array([0.2, 0.2, 0.6])
    assert np.isclose(ms.divergence("relative", np.diag(p), np.diag(q)), np.sum(p * np.log(p / q)))
    a = 0.5
    ren = np.log(np.sum(p ** a * q ** (1 - a))) / (a - 1)
    assert np.isclose(ms.divergence("renyi(0.5)", np.diag(p), np.diag(q)), ren)


def test_support_violation():
    assert ms.relative_entropy(PLUS, K0) == np.inf
    with pytest.raises(SupportViolation):
        ms.relative_entropy(PLUS, K0, strict=True)


def test_sandwiched_half_is_log_fidelity():
    rng = np.random.default_rng(0)
    for _ in range(5):
        r, s = rc.random_state(3, rng), rc.random_state(3, rng)
        assert np.isclose(ms.divergence("sandwiched(0.5)", r, s), -np.log(ms.fidelity(r, s)), atol=1e-8)


def test_distance_examples():
    d = ms.distances(K0, K1)
    assert np.isclose(d["trace_half"], 1) and np.isclose(d["fidelity"], 0)
    d = ms.distances(K0, PLUS)
    assert np.isclose(d["fidelity"], 0.5)
    assert np.isclose(d["bures_distance"], np.sqrt(2 * (1 - 1 / np.sqrt(2))))
    assert np.isclose(d["bures_distance"], d["bures_distance_hubner"], atol=1e-9)


def test_hubner_matches_general():
    r = 0.5 * (np.eye(2) + 0.5 * Z)
    s = 0.5 * (np.eye(2) - 0.5 * Z)
    d = ms.distances(r, s)
    assert np.isclose(d["bures_distance"], d["bures_distance_hubner"], atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_hubner_random_qubits(seed):
    rng = np.random.default_rng(seed)
    r, s = rc.random_state(2, rng), rc.random_state(2, rng)
    d = ms.distances(r, s)
    assert abs(d["bures_distance"] - d["bures_distance_hubner"]) < 1e-7


def test_discriminate():
    assert np.isclose(ms.discriminate([(0.5, K0), (0.5, K1)])["helstrom"], 1.0)
    assert np.isclose(ms.discriminate([(0.3, K0), (0.7, K0)])["helstrom"], 0.7)
    assert np.isclose(ms.discriminate([(0.5, K0), (0.5, PLUS)])["helstrom"], 0.5 * (1 + 1 / np.sqrt(2)))
    r = ms.discriminate([(1 / 3, K0), (1 / 3, K1), (1 / 3, PLUS)])
    assert not r["exact"] and 0 < r["pgm_bound"] <= 1


def test_fisher_pure_and_rotated():
    psi = lambda th: np.array([np.cos(th / 2), np.sin(th / 2)])
    fam = lambda th: np.outer(psi(th), psi(th).conj())
    assert np.isclose(ms.fisher(fam, 0.4)["qfi"], 1.0, atol=1e-8)
    rho0 = np.array([[0.6, 0.3], [0.3, 0.4]])
    U = lambda th: np.diag([np.exp(1j * th / 2), np.exp(-1j * th / 2)])
    rot = lambda th: U(th) @ rho0 @ U(th).conj().T
    q = [ms.fisher(rot, th)["qfi"] for th in (0.0, 0.7, 2.0)]
    assert np.allclose(q, q[0], atol=1e-8)
    # SLD value for the rotation family: 4 |rho01|^2
    assert np.isclose(q[0], 4 * 0.3 ** 2, atol=1e-8)
    assert ms.fisher(lambda th: rho0, 0.3)["qfi"] < 1e-12


def test_fisher_under_dephasing_decreases():
    rho0 = np.array([[0.6, 0.3], [0.3, 0.4]])
    U = lambda th: np.diag([np.exp(1j * th / 2), np.exp(-1j * th / 2)])
    vals = []
    for G in np.linspace(0, 2, 9):
        dep = lambda th, G=G: (lambda r: np.array([[r[0, 0], r[0, 1] * np.exp(-G)], [r[1, 0] * np.exp(-G), r[1, 1]]]))(
            U(th) @ rho0 @ U(th).conj().T)
        vals.append(ms.fisher(dep, 0.5)["qfi"])
    assert np.all(np.diff(vals) < 0)
    assert np.isclose(vals[-1], 4 * 0.09 * np.exp(-4), atol=1e-8)


def test_fisher_non_differentiable():
    with pytest.raises(NonDifferentiable):
        ms.fisher(lambda th: np.diag([0.5 + 0.4 * np.sign(th), 0.5 - 0.4 * np.sign(th)]), 0.0)


def test_bures_metric_is_qfi():
    rho = np.array([[0.7, 0.1 + 0.05j], [0.1 - 0.05j, 0.3]])
    A = np.array([[0.2, 0.3j], [-0.3j, -0.2]])
    fam = lambda th: rho + th * A
    assert np.isclose(ms.metric_eval("bures", rho, A), ms.fisher(fam, 0.0)["qfi"], rtol=1e-7)


def test_metric_maximally_mixed():
    A = np.array([[0.5, 0.2], [0.2, -0.5]])
    for k in ("bures", "wigner-yanase"):
        assert np.isclose(ms.metric_eval(k, np.eye(2) / 2, A), 2 * np.sum(np.abs(A) ** 2))
    assert ms.metric_eval("bures", np.eye(2) / 2, np.zeros((2, 2))) == 0
    with pytest.raises(SingularState):
        ms.metric_eval("bures", K0, A)


def test_metric_symmetry_validation():
    with pytest.raises(ValueError):
        ms.MetricSpec(lambda t: 2 / (1 + t) * t ** 0.3)


def test_bures_metric_geodesic_increment():
    rho = np.array([[0.7, 0.1], [0.1, 0.3]])
    A = np.array([[0.1, 0.05], [0.05, -0.1]])
    for h in (1e-2, 5e-3):
        DB2 = ms.distances(rho, rho + h * A)["bures_distance"] ** 2
        assert abs(DB2 - 0.25 * ms.metric_eval("bures", rho, A) * h * h) < 10 * h ** 3


def test_info_measures():
    phi = np.zeros(4)
    phi[[0, 3]] = 1 / np.sqrt(2)
    bell = np.outer(phi, phi)
    assert np.isclose(ms.info_measures(bell, dims=[2, 2])["mutual_info"], 2 * np.log(2))
    rho = rc.random_state(2, 5)
    r = ms.info_measures(rho, [np.eye(2)])
    assert abs(r["entropy_exchange"]) < 1e-10
    assert np.isclose(r["coherent_info"], ms.entropy(rho))
    U = rc.random_unitary(2, 6)
    assert abs(ms.info_measures(rho, [U])["entropy_exchange"]) < 1e-10
    with pytest.raises(NotTracePreserving):
        ms.info_measures(rho, [0.5 * np.eye(2)])


def test_coherent_via_mutual_flag():
    rho = rc.random_state(2, 7)
    K = [np.sqrt(0.7) * np.eye(2), np.sqrt(0.3) * Z]
    a = ms.info_measures(rho, K)
    b = ms.info_measures(rho, K, coherent_via_mutual=True)
    assert np.isclose(b["coherent_info"], a["entropy_exchange"] - ms.entropy(rho))


def test_bell_dephasing_mutual_info_monotone():
    phi = np.zeros(4)
    phi[[0, 3]] = 1 / np.sqrt(2)
    bell = np.outer(phi, phi)
    vals = []
    for G in np.linspace(0, 3, 13):
        # dephase the second factor
        r = bell.reshape(2, 2, 2, 2).copy()
        r[:, 0, :, 1] *= np.exp(-G)
        r[:, 1, :, 0] *= np.exp(-G)
        vals.append(ms.mutual_information(r.reshape(4, 4), [2, 2]))
    assert np.all(np.diff(vals) < 0)
    assert np.isclose(vals[0], 2 * np.log(2))
    # eigenvalues (1 +- e^-G)/2 of the joint state, both marginals maximally mixed
    lam = np.array([(1 + np.exp(-3.0)) / 2, (1 - np.exp(-3.0)) / 2])
    assert np.isclose(vals[-1], 2 * np.log(2) + np.sum(lam * np.log(lam)))


def test_capacity_search_lower_bound():
    v = ms.capacity_search([np.eye(2)], "coherent", restarts=2, rng=0)
    assert np.isclose(v, np.log(2), atol=1e-4)
    v = ms.capacity_search([np.eye(2)], "ea", restarts=2, rng=0)
    assert np.isclose(v, 2 * np.log(2), atol=1e-4)


def test_wyd_examples():
    assert abs(ms.wyd_skew(np.diag([0.7, 0.3]), Z)) < 1e-12
    assert np.isclose(ms.wyd_skew(K0, X), 1.0)
    assert np.isclose(ms.wyd_skew(np.diag([0.75, 0.25]), X), 1 - np.sqrt(3) / 2)
    assert np.isclose(ms.wyd_skew(K0, X, pq_normalized=True), 8.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 0.9))
def test_wyd_nonnegative(seed, p):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert ms.wyd_skew(rc.random_state(3, rng), A + A.conj().T, p) >= -1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([2, 3]), st.sampled_from(KINDS))
def test_data_processing(seed, d, kind):
    rng = np.random.default_rng(seed)
    r, s = rc.random_state(d, rng), rc.random_state(d, rng)
    E = rc.random_channel(d, 3, rng)
    assert ms.divergence(kind, E(r), E(s)) <= ms.divergence(kind, r, s) + 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["bures", "wigner-yanase"]))
def test_metric_contraction(seed, k):
    rng = np.random.default_rng(seed)
    rho = rc.random_state(2, rng)
    A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    A = A + A.conj().T
    A -= np.trace(A) / 2 * np.eye(2)
    E = rc.random_channel(2, 3, rng)
    assert ms.metric_eval(k, E(rho), E(A)) <= ms.metric_eval(k, rho, A) + 1e-8


def test_volume_of_dephasing():
    G = np.linspace(0, 2, 5)
    supers = np.array([np.diag([1, np.exp(-g), np.exp(-g), 1]) for g in G])
    assert np.allclose(ms.volume(supers), np.exp(-2 * G))
