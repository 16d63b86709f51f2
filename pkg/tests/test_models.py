import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings, strategies as st

from odk import models as md
from odk import repcore as rc
from odk.dynamics import propagate, divisibility_report
from odk.errors import BadWeights, InvalidRates, NonPrimeDimension, CPViolated
from odk.timegrid import TimeGrid

X, Y, Z = rc.PAULI["X"], rc.PAULI["Y"], rc.PAULI["Z"]
GRID = TimeGrid(3.0, 300)


def test_pauli_uniform_rates():
    res = md.pauli_family(md.PauliFamilySpec("qubit-pauli", 2, [1, 1, 1]), TimeGrid(20.0, 400))
    t = res.trajectory.times
    assert np.allclose(res.data["lambda"], np.exp(-2 * t)[:, None])
    assert np.allclose(res.data["p"][-1], 0.25, atol=1e-12)
    for s, lam in zip([X, Y, Z], res.data["lambda"][50]):
        assert np.allclose(res.trajectory[50](s), lam * s)


def test_eternal_weights_and_rates():
    spec = md.PauliFamilySpec("qubit-pauli", 2, [1, 1, {"type": "tanh", "amp": -1.0}])
    res = md.pauli_family(spec, TimeGrid(5.0, 500))
    assert np.abs(res.data["p"][:, 3]).max() < 1e-14
    assert not res.verdicts["cp_divisible"] and res.verdicts["p_divisible"]


def test_invalid_rates():
    with pytest.raises(InvalidRates):
        md.pauli_family(md.PauliFamilySpec("qubit-pauli", 2, [1, 1, -2]), GRID)


def test_mub_requires_prime():
    with pytest.raises(NonPrimeDimension):
        md.PauliFamilySpec("generalized-pauli-mub", 4, [1] * 5)


@pytest.mark.parametrize("kind,d,n", [("qubit-pauli", 2, 3), ("weyl", 3, 8), ("generalized-pauli-mub", 3, 4)])
def test_pauli_family_matches_propagation(kind, d, n):
    rng = np.random.default_rng(d + n)
    rates = list(rng.uniform(0.2, 1.0, n))
    res = md.pauli_family(md.PauliFamilySpec(kind, d, rates), GRID)
    prop = propagate(res.generator, GRID)
    assert np.abs(prop.supers - res.trajectory.supers).max() < 1e-5


def test_mub_mixture_limit_rates():
    t = np.array([0.5, 1.0, 2.0])
    g = md.mub_mixture_rates([0.5, 0.5, 0.0, 0.0], 1.0, 3, t)
    assert np.allclose(g[:, 2:], -(1.0 / 3) * np.tanh(t / 2)[:, None])
    assert np.all(g[:, 2:] < 0)


def test_mub_mixture_rates_reproduce_mixture():
    d, kappa, x = 3, 1.0, np.array([0.5, 0.5, 0.0, 0.0])
    Phis = md.mub_channels(d)
    grid = TimeGrid(2.0, 400)
    mix = np.array([sum(xa * la.expm(kappa * t * (P - np.eye(9))) for xa, P in zip(x, Phis)) for t in grid.times])
    gen = lambda t: sum(g * (P - np.eye(9)) for g, P in zip(md.mub_mixture_rates(x, kappa, d, t)[0], Phis))
    assert np.abs(propagate(gen, grid).supers - mix).max() < 1e-5


def test_phase_covariant_decay():
    g = 0.8
    res = md.phase_covariant(md.PhaseCovariantSpec(0.0, 0.0, g, 0.0), GRID)
    t = GRID.times
    assert np.allclose(res.data["P_e"](0.6), 0.6 * np.exp(-g * t / 2), atol=1e-10)
    assert np.allclose(np.abs(res.data["C"]), np.exp(-g * t / 4), atol=1e-10)


def test_phase_covariant_relaxation_times():
    for gp, gm, gz in [(0.3, 1.0, 0.2), (1.0, 1.0, 0.0), (0.0, 2.0, 1.5)]:
        GL, GT = md.relaxation_rates(gp, gm, gz)
        assert 2 * (1 / GL) >= 1 / GT - 1e-12


def test_phase_covariant_strict():
    with pytest.raises(CPViolated) as e:
        md.phase_covariant(md.PhaseCovariantSpec(0.0, 1.0, 1.0, -0.3), GRID)
    assert e.value.t_first > 0


def test_phase_covariant_verdicts_agree_with_report():
    res = md.phase_covariant(md.PhaseCovariantSpec(0.5, 0.2, 1.0, 0.1), GRID)
    rep = divisibility_report(res.trajectory, blp_probes=8)
    assert rep.verdicts["cp_divisible"] == res.verdicts["cp_divisible"]
    assert rep.verdicts["p_divisible"] == res.verdicts["p_divisible"]


def test_ad_no_coupling_is_unitary():
    spec = md.AmplitudeDampingSpec(lambda t: np.zeros_like(np.asarray(t, float), dtype=complex), 1.3)
    res = md.amplitude_damping(spec, GRID)
    assert np.allclose(res.data["a"], np.exp(-1.3j * GRID.times), atol=1e-10)


@pytest.mark.parametrize("gamma,lam,cpdiv", [(1.0, 2.0, True), (3.0, 2.0, False)])
def test_ad_lorentzian_oracle(gamma, lam, cpdiv):
    grid = TimeGrid(6.0, 600)
    res = md.amplitude_damping(md.AmplitudeDampingSpec.lorentzian(gamma, lam), grid)
    a_ref, _ = md.lorentzian_oracle(gamma, lam, 0.0, grid.times)
    assert np.abs(res.data["a"] - a_ref).max() < 1e-6
    assert res.verdicts["cp_divisible"] is cpdiv
    assert np.abs(res.data["a"]).max() <= 1 + 1e-8
    assert res.trajectory.trace_error() < 1e-9


def test_ad_multilevel_reduces_to_qubit():
    grid = TimeGrid(3.0, 300)
    kern = lambda t: -1j * np.exp(-2 * np.asarray(t, float))[:, None, None] * np.ones((1, 1, 1))
    multi = md.amplitude_damping(md.AmplitudeDampingSpec(kern, 0.0, np.zeros((1, 1))), grid)
    qubit = md.amplitude_damping(md.AmplitudeDampingSpec.lorentzian(1.0, 2.0), grid)
    assert np.allclose(multi.data["A"][:, 0, 0], qubit.data["a"], atol=1e-12)


def test_dephasing_finite_env():
    g = 1.0
    grid = TimeGrid(1.4, 280)
    res = md.build_model("dephasing-finite-env", {"g": g}, grid)
    assert np.allclose(res.data["D"][:, 0, 1], np.cos(g * grid.times), atol=1e-12)
    longer = md.build_model("dephasing-finite-env", {"g": g}, TimeGrid(3.0, 300))
    assert not longer.verdicts["cp_divisible"]


def test_spin_boson_against_refined_quadrature():
    from scipy.integrate import quad
    eta, wc = 0.25, 1.0
    res = md.dephasing(md.DephasingSpec.ohmic(eta, wc), TimeGrid(4.0, 8))
    for t, D in zip(res.trajectory.times[1:], res.data["D"][1:, 0, 1]):
        val = quad(lambda w: eta * np.exp(-w / wc) * (1 - np.cos(w * t)) / w, 0, 80, limit=400, epsabs=1e-13)[0]
        assert np.isclose(abs(D), np.exp(-4 * val), rtol=1e-7)
    assert res.verdicts["cp_divisible"] and res.verdicts["K_psd"]


def test_gaussian_white_noise_semigroup():
    E, c = [0.0, 1.0], [0.5, 1.0]
    res = md.dephasing(md.DephasingSpec("gaussian-noise", energies=E, white=c), GRID)
    t = GRID.times
    ref = np.exp(-1j * (E[0] - E[1]) * t) * np.exp(-(c[0] + c[1]) * t / 2)
    assert np.allclose(res.data["D"][:, 0, 1], ref, atol=1e-10)
    assert np.allclose(res.data["D"][:, 0, 0], 1)


def test_magnus_commutative():
    res = md.magnus_pair(0.7, 0.7, GRID)
    assert np.abs(res.data["f"]).max() < 1e-14


def test_magnus_worked_value():
    res = md.magnus_pair(1.0, {"type": "poly", "coeffs": [0, 1]}, TimeGrid(1.0, 100))
    variant = md.magnus_pair(1.0, {"type": "poly", "coeffs": [0, 1]}, TimeGrid(1.0, 100), exp_bracket=True)
    assert np.isclose(variant.data["f"][-1], -(0.5 / 1.5) * np.exp(-1.5))
    assert np.isclose(variant.data["f"][-1], -0.0744, atol=1e-4)
    # the integrated form: f = -(1/3)(1 - (1 - e^{-1.5})/1.5)
    assert np.isclose(res.data["f"][-1], -(1 / 3) * (1 - (1 - np.exp(-1.5)) / 1.5))
    assert res.data["propagation_error"] < 1e-4
    assert variant.data["propagation_error"] > 1e-3


def test_magnus_second_order_vanishes_for_commuting():
    M2 = md.magnus_second_order(lambda t: (1 + t) * md.pauli_dissipator(3), 1.0)
    assert np.abs(M2).max() < 1e-12


def test_mix_eternal():
    res = md.mix_semigroups([md.pauli_dissipator(k) for k in (1, 2, 3)], [0.5, 0.5, 0.0], TimeGrid(2.0, 2000))
    t = res.trajectory.times
    g = md.pauli_mixture_rates([0.5, 0.5, 0.0], t)
    assert np.allclose(g[:, 0], 1) and np.allclose(g[:, 2], -np.tanh(t))
    ext = np.sort(res.data["rates"][1:-1], axis=1)
    # Kossakowski eigenvalues in the sigma/sqrt(2) basis equal gamma_k
    assert np.abs(ext - np.sort(g[1:-1], axis=1)).max() < 1e-5


def test_mix_uniform_p_divisible():
    g = md.pauli_mixture_rates([1 / 3] * 3, np.linspace(0, 5, 200))
    assert ((g[:, 0] + g[:, 1]).min() >= 0) and ((g[:, 1] + g[:, 2]).min() >= 0)


def test_mix_bad_weights():
    with pytest.raises(BadWeights):
        md.mix_semigroups([md.pauli_dissipator(1)], [0.5], GRID)


def test_covariant_necessary_conditions():
    r = md.covariant_check(md.phase_covariant_generator(0.3, 0.2, 1.0, -0.05))
    assert r["covariant"] and r["necessary_p_div"]
    r = md.covariant_check(md.phase_covariant_generator(0.0, -0.2, 1.0, 0.0))
    assert not r["necessary_p_div"]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_weyl_is_diagonal_in_weyl_basis(seed):
    rng = np.random.default_rng(seed)
    res = md.pauli_family(md.PauliFamilySpec("weyl", 3, list(rng.uniform(0, 1, 8))), TimeGrid(1.0, 4))
    U = md.weyl_operators(3)
    m = res.trajectory[4]
    for Ua, lam in zip(U, res.data["lambda"][4]):
        assert np.allclose(m(Ua), lam * Ua, atol=1e-12)
