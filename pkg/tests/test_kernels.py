import warnings

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings, strategies as st

from odk import kernels as kn
from odk import classical as cl
from odk import generators as gn
from odk import repcore as rc
from odk.errors import CPViolated, PairInvalid
from odk.timegrid import TimeGrid

X, Z = rc.PAULI["X"], rc.PAULI["Z"]
PI2 = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_singular_kernel_is_semigroup():
    L = gn.random_gkls(2, rng=3)
    tr = kn.solve_volterra(kn.MemoryKernel(None, L), TimeGrid(2.0, 200))
    ref = np.array([la.expm(L * t) for t in tr.times])
    assert np.abs(tr.supers - ref).max() < 1e-7


def test_constant_dephasing_kernel_gives_cosine():
    k = kn.scalar_dephasing_kernel(lambda t: np.ones_like(t))
    tr = kn.solve_volterra(k, TimeGrid(3.0, 300), order_check=True)
    assert np.abs(tr.supers[:, 1, 1] - np.cos(tr.times)).max() < 1e-6
    assert 3.5 < tr.meta["convergence_ratio"] < 4.5


def test_embedded_semi_markov_kernel_matches_classical():
    g = 1.0
    grid = TimeGrid(6.0, 600)
    Kc = lambda t: cl.erlang2_kernel(g, PI2, t)
    tr = kn.solve_volterra(kn.MemoryKernel(kn.embed_classical_kernel(Kc), None, 2), grid)
    sm = cl.semi_markov_solve(cl.SemiMarkovSpec(PI2, cl.WaitingTime("erlang2", g)), grid)
    pops = tr.supers[:, [0, 3]][:, :, [0, 3]].real
    assert np.abs(pops - sm.T).max() < 1e-5


def test_semigroup_pair():
    L = gn.random_gkls(2, rng=8)
    grid = TimeGrid(2.0, 200)
    tr = kn.pair_solve(kn.semigroup_pair(L), grid)
    ref = np.array([la.expm(L * t) for t in grid.times])
    assert np.abs(tr.supers - ref).max() < 1e-6
    assert tr.meta["choi_min"] >= -1e-6


def test_palma_pair_residual():
    Gamma = 1.2
    pair = kn.palma_pair(Gamma, kn.dephasing_family(lambda t: np.exp(-0.5 * t)), 2)
    tr = kn.pair_solve(pair, TimeGrid(3.0, 300))
    assert tr.meta["choi_min"] >= -1e-6
    assert tr.trace_error() < 1e-6
    assert kn.palma_residual(tr, pair) < 1e-5


def test_gauge_pair_still_legitimate():
    pair = kn.palma_pair(1.0, kn.dephasing_family(lambda t: np.exp(-t)), 2)
    F = kn.dephasing_family(lambda t: np.cos(0.3 * t))
    gp = kn.gauge_pair(pair, F=F)
    grid = TimeGrid(2.0, 200)
    gp.validate(grid)
    tr = kn.pair_solve(gp, grid)
    assert tr.trace_error() < 1e-6 and tr.meta["choi_min"] >= -1e-6


def test_invalid_pair():
    N = lambda t: np.exp(-np.atleast_1d(t))[:, None, None] * np.eye(4)
    Q = lambda t: 0.5 * N(t)
    with pytest.raises(PairInvalid, match="Tr"):
        kn.pair_solve(kn.LegitimatePair(N, Q, 2), TimeGrid(1.0, 20))


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10_000))
def test_pair_and_volterra_routes_agree(seed):
    L = gn.random_gkls(2, rng=seed)
    grid = TimeGrid(1.5, 150)
    a = kn.pair_solve(kn.semigroup_pair(L), grid)
    b = kn.solve_volterra(kn.MemoryKernel(None, L), grid)
    assert np.abs(a.supers - b.supers).max() < 1e-5


@pytest.mark.filterwarnings("ignore:waiting density")
def test_semi_markov_quantum_exponential_is_semigroup():
    g = 0.9
    E = rc.unitary_map(X).super
    res = kn.semi_markov_quantum(cl.WaitingTime("exp", g), E, TimeGrid(4.0, 400))
    ref = np.array([la.expm(g * (E - np.eye(4)) * t) for t in res.trajectory.times])
    assert np.abs(res.trajectory.supers - ref).max() < 1e-6
    assert res.memory["reconvolution_residual"] < 1e-5


@pytest.mark.filterwarnings("ignore:waiting density")
def test_semi_markov_quantum_erlang_populations():
    g = 1.0
    grid = TimeGrid(6.0, 600)
    res = kn.semi_markov_quantum(cl.WaitingTime("erlang2", g), rc.unitary_map(X).super, grid)
    t = grid.times
    q = np.exp(-g * t) * (np.cos(g * t) + np.sin(g * t))
    S = res.trajectory.supers
    assert np.abs(S[:, 0, 0].real - 0.5 * (1 + q)).max() < 1e-5
    assert res.memory["reconvolution_residual"] < 1e-5
    kern = kn.semi_markov_kernel(cl.WaitingTime("erlang2", g), rc.unitary_map(X).super)
    vol = kn.solve_volterra(kern, grid)
    assert np.abs(vol.supers - S).max() < 1e-5


def test_semi_markov_quantum_heavy_tail_warns():
    f = cl.WaitingTime("exp", 0.05)
    with pytest.warns(RuntimeWarning):
        kn.semi_markov_quantum(f, np.eye(4), TimeGrid(2.0, 40))


def test_memory_function_exponential():
    c, r = kn.memory_function(cl.WaitingTime("exp", 1.7), np.linspace(0, 3, 301))
    assert np.isclose(c, 1.7) and np.abs(r).max() < 1e-8


def test_hybrid_pure_dephasing():
    sm = cl.SemiMarkovSpec(np.eye(2), cl.WaitingTime("exp", 1.0))
    res = kn.hybrid_solve(kn.HybridSpec(sm, np.array([[0, 0.4], [0.4, 0]])), TimeGrid(2.0, 200))
    assert np.allclose(res.trajectory.supers[:, 1, 1], np.exp(-0.4 * res.trajectory.times), atol=1e-8)
    assert res.cp


def test_hybrid_exponential_matches_gkls():
    g = 1.0
    Pi = np.array([[0.2, 0.6], [0.8, 0.4]])
    sm = cl.SemiMarkovSpec(Pi, cl.WaitingTime("exp", g))
    grid = TimeGrid(2.0, 400)
    res = kn.hybrid_solve(kn.HybridSpec(sm), grid)
    jumps = [np.sqrt(g * Pi[1, 0]) * np.array([[0, 0], [1, 0]]), np.sqrt(g * Pi[0, 1]) * np.array([[0, 1], [0, 0]])]
    L = gn.lindblad_super(None, jumps)
    ref = np.array([la.expm(L * t) for t in grid.times])
    assert np.abs(res.trajectory.supers - ref).max() < 1e-6
    assert res.cp


def test_hybrid_cp_knob():
    # mostly downhill jumps with Erlang-2 waiting: coherences outlive the populations
    Pi = np.array([[0.9, 0.9], [0.1, 0.1]])
    sm = cl.SemiMarkovSpec(Pi, cl.WaitingTime("erlang2", 1.0))
    grid = TimeGrid(6.0, 600)
    with pytest.raises(CPViolated) as e:
        kn.hybrid_solve(kn.HybridSpec(sm, np.zeros((2, 2))), grid)
    assert e.value.t_first > 0
    ok = kn.hybrid_solve(kn.HybridSpec(sm, np.array([[0, 0.1], [0.1, 0]])), grid)
    assert ok.cp
    # anti-dephasing breaks CP even for a benign kernel
    sm2 = cl.SemiMarkovSpec(PI2, cl.WaitingTime("erlang2", 1.0))
    bad = kn.hybrid_solve(kn.HybridSpec(sm2, np.array([[0, -0.1], [-0.1, 0]])), grid, strict=False)
    assert not bad.cp and bad.first_violation is not None


def test_cm_probe_semigroup_and_dephasing():
    L = gn.pauli_generator([1, 0.5, 0.2])
    assert kn.cm_probe(kn.MemoryKernel(None, L), [0.5, 1.0, 2.0], order=3)["passed"]
    k = kn.scalar_dephasing_kernel(lambda t: np.ones_like(t))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = kn.cm_probe(kn.MemoryKernel(lambda t: k.regular(t) * np.exp(-0.0 * t[:, None, None]), None, 2),
                          [0.5, 1.0, 2.0], order=2, t_max=60.0, n_quad=60000, tail_tol=1.0)
    assert out["passed"]


def test_cm_probe_flags_overdriven_kernel():
    k = kn.scalar_dephasing_kernel(lambda t: -np.exp(-t))
    tr = kn.solve_volterra(k, TimeGrid(3.0, 600))
    assert tr.choi_min().min() < -1e-3
    out = kn.cm_probe(k, [0.5, 1.0, 2.0, 4.0], order=2)
    assert not out["passed"]
