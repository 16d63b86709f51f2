import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings, strategies as st

from odk import classical as cl
from odk import generators as gn
from odk.errors import NegativeRate, NonStochasticJumpMatrix, InvalidSource
from odk.timegrid import TimeGrid

PI2 = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_entropy_production_two_state():
    gen = cl.KolmogorovGenerator([[0, 1], [1, 0]])
    tr = cl.rate_solve(gen, [0.75, 0.25], TimeGrid(1.0, 100))
    # 1/2 sum_ij J_ij ln(W_ij p_j / W_ji p_i), frozen by hand
    assert np.isclose(tr.entropy_production[0], 0.5 * np.log(3), atol=1e-12)
    assert np.isclose(tr.entropy_production[0], 0.5493061443, atol=1e-9)


def test_entropy_balance_and_positivity():
    gen = cl.thermal_rates([0.0, 0.4, 1.1], beta=1.3, seed=2)
    tr = cl.rate_solve(gen, [0.1, 0.3, 0.6], TimeGrid(3.0, 300), energies=[0.0, 0.4, 1.1])
    assert tr.entropy_production.min() >= -1e-10
    assert np.allclose(tr.entropy_production + tr.flux_in, tr.dS_dt, atol=1e-8)


def test_detailed_balance_stationary_has_no_production():
    E = np.array([0.0, 1.0, 2.0])
    gen = cl.thermal_rates(E, beta=0.5, seed=3)
    pss = np.exp(-0.5 * E) / np.exp(-0.5 * E).sum()
    tr = cl.rate_solve(gen, pss, TimeGrid(1.0, 20))
    assert np.abs(tr.entropy_production).max() < 1e-12


def test_relative_entropy_decay_equals_production():
    E = np.array([0.0, 0.7])
    gen = cl.thermal_rates(E, beta=1.0, seed=4)
    pss = np.exp(-E) / np.exp(-E).sum()
    tr = cl.rate_solve(gen, [0.9, 0.1], TimeGrid(2.0, 200))
    # d/dt D(p||pss) = sum_i (L p)_i ln(p_i / pss_i)
    dD = np.array([(gen.matrix @ p) @ np.log(p / pss) for p in tr.p])
    assert np.abs(tr.entropy_production + dD).max() < 1e-6
    D = np.array([cl.relative_entropy_classical(p, pss) for p in tr.p])
    assert np.all(np.diff(D) <= 1e-15)


def test_negative_rate_rejected():
    with pytest.raises(NegativeRate):
        cl.KolmogorovGenerator([[0, -1], [1, 0]])


def test_exponential_semi_markov_is_semigroup():
    g = 1.3
    spec = cl.SemiMarkovSpec(PI2, cl.WaitingTime("exp", g))
    res = cl.semi_markov_solve(spec, TimeGrid(4.0, 400))
    L = g * (PI2 - np.eye(2))
    ref = np.array([la.expm(L * t) for t in res.times])
    assert np.abs(res.T - ref).max() < 1e-6


def test_erlang_q_oracle():
    g = 1.0
    spec = cl.SemiMarkovSpec(PI2, cl.WaitingTime("erlang2", g))
    res = cl.semi_markov_solve(spec, TimeGrid(6.0, 600))
    t = res.times
    q = np.exp(-g * t) * (np.cos(g * t) + np.sin(g * t))
    ref = 0.5 * (1 + q)[:, None, None] * np.eye(2) + 0.5 * (1 - q)[:, None, None] * PI2
    assert np.abs(res.T - ref).max() < 1e-5
    assert renewal_ok(spec, res)


def renewal_ok(spec, res):
    return cl.renewal_residual(spec, res) < 1e-4


def test_idempotent_jump_closed_form():
    Pi = np.array([[1.0, 1.0], [0.0, 0.0]])
    w = cl.WaitingTime("erlang2", 2.0)
    res = cl.semi_markov_solve(cl.SemiMarkovSpec(Pi, w), TimeGrid(3.0, 300))
    F = 1 - w.survival(res.times)
    ref = (1 - F)[:, None, None] * np.eye(2) + F[:, None, None] * Pi
    assert np.abs(res.T - ref).max() < 1e-6


def test_erlang_memory_kernel_equation():
    spec = cl.SemiMarkovSpec(PI2, cl.WaitingTime("erlang2", 1.0))
    grid = TimeGrid(5.0, 1000)
    res = cl.semi_markov_solve(spec, grid)
    K = cl.erlang2_kernel(1.0, PI2, res.times)
    assert cl.memory_kernel_residual(res.T, K, grid.h) < 1e-5


def test_non_stochastic_jump_rejected():
    with pytest.raises(NonStochasticJumpMatrix):
        cl.SemiMarkovSpec(np.array([[0.5, 0.5], [0.6, 0.5]]))


def test_chapman_kolmogorov_semigroup_and_erlang():
    spec = cl.SemiMarkovSpec(PI2, cl.WaitingTime("exp", 1.0))
    res = cl.semi_markov_solve(spec, TimeGrid(3.0, 300))
    ck = cl.chapman_kolmogorov_check(res.times, res.T, stride=20)
    assert ck.p_divisible and np.nanmax(ck.residual) < 1e-10
    spec = cl.SemiMarkovSpec(PI2, cl.WaitingTime("erlang2", 1.0))
    res = cl.semi_markov_solve(spec, TimeGrid(3.0, 300))
    ck = cl.chapman_kolmogorov_check(res.times, res.T, stride=10)
    assert not ck.p_divisible
    t, s = ck.first_violation
    # q(t)/q(s) > 1 first happens where q grows, i.e. past the minimum at t = pi
    assert t > s


def test_rosenblatt_caveat():
    m = 3
    P = cl.rosenblatt_conditional(m)
    assert np.allclose(P.sum(axis=0), 1)
    T1 = cl.rosenblatt_transition(m)
    assert np.allclose(T1, 1.0 / m)
    # uniform marginals compose: T(2,0) = T(2,1) T(1,0)
    assert np.allclose(T1 @ T1, T1)


def test_shadow_of_pauli_generator():
    g = (0.3, 0.8, 1.7)
    sh = cl.classical_shadow(gn.pauli_generator(g))
    assert np.isclose(sh.rates[0, 1], (g[0] + g[1]) / 2)
    assert np.isclose(sh.rates[1, 0], (g[0] + g[1]) / 2)


def test_shadow_of_hamiltonian_in_eigenbasis():
    H = np.array([[1.0, 0.4], [0.4, -0.2]])
    _, U = np.linalg.eigh(H)
    sh = cl.classical_shadow(gn.lindblad_super(H, []), U)
    assert np.allclose(sh.rates, 0)


def test_shadow_witness_non_cp_generator():
    m, _ = cl.shadow_witness(gn.pauli_generator([1, -0.5, -0.6]), n_bases=100)
    assert m < 0


def test_shadow_rejects_non_tp():
    with pytest.raises(InvalidSource):
        cl.classical_shadow(2 * np.eye(4))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10_000), st.floats(0.01, 3.0))
def test_stochastic_contracts_l1(d, seed, t):
    rng = np.random.default_rng(seed)
    W = rng.uniform(0, 2, (d, d))
    T = la.expm(cl.KolmogorovGenerator(W).matrix * t)
    assert cl.is_stochastic(T)
    x = rng.normal(size=d)
    assert np.abs(T @ x).sum() <= np.abs(x).sum() + 1e-12
