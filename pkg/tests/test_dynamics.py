import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings, strategies as st

from odk import dynamics as dy
from odk import generators as gn
from odk import repcore as rc
from odk.errors import SingularIntermediate, SingularMap, StepSizeTooCoarse, TraceNotAnnihilated
from odk.models import PhaseCovariantSpec, phase_covariant, phase_covariant_generator
from odk.timegrid import TimeGrid

X, Y, Z = rc.PAULI["X"], rc.PAULI["Y"], rc.PAULI["Z"]


def eternal(t):
    return gn.pauli_generator([1.0, 1.0, -np.tanh(t)])


def pauli_weights(S):
    C = rc.super_to_choi(S) * 2
    basis = [np.eye(2), X, Y, Z]
    # p_a = <phi_a| C/2 |phi_a> for the Bell states of each Pauli
    out = []
    for s in basis:
        v = rc.vec(s) / 2
        out.append(np.real(v.conj() @ (C / 2) @ v) * 2)
    return np.array(out)


def test_propagate_constant_is_semigroup():
    L = gn.random_gkls(2, rng=5)
    tr = dy.propagate(lambda t: L, TimeGrid(2.0, 200))
    ref = np.array([la.expm(L * t) for t in tr.times])
    assert np.abs(tr.supers - ref).max() < 1e-7
    Lt, Ls, Lts = tr.at(0.6).super, tr.at(1.0).super, tr.at(1.6).super
    assert np.abs(Lt @ Ls - Lts).max() < 1e-7


def test_eternal_weights():
    tr = dy.propagate(eternal, TimeGrid(5.0, 2000))
    t0 = np.log(2) / 2
    p = np.array([pauli_weights(s) for s in tr.supers])
    assert np.abs(p[:, 3]).max() < 1e-6
    i = np.argmin(np.abs(tr.times - t0))
    # evaluate the closed form at the nearest grid time
    t = tr.times[i]
    assert np.isclose(p[i, 0], (1 + np.exp(-2 * t)) / 2, atol=1e-6)
    assert np.isclose(p[i, 1], (1 - np.exp(-2 * t)) / 4, atol=1e-6)


def test_phase_covariant_propagation_matches_closed_form():
    spec = PhaseCovariantSpec(0.4, 0.3, 1.0, 0.2)
    grid = TimeGrid(3.0, 300)
    res = phase_covariant(spec, grid)
    tr = dy.propagate(lambda t: phase_covariant_generator(0.4, 0.3, 1.0, 0.2), grid)
    assert np.abs(tr.supers - res.trajectory.supers).max() < 1e-6


def test_propagate_rejects_non_annihilating():
    with pytest.raises(TraceNotAnnihilated):
        dy.propagate(lambda t: np.eye(4), TimeGrid(1.0, 10))


def test_step_size_too_coarse():
    wild = lambda t: gn.lindblad_super(200 * np.sin(300 * t) * X, [])
    with pytest.raises(StepSizeTooCoarse):
        dy.propagate(wild, TimeGrid(1.0, 4), err_tol=1e-12, max_halvings=1)


def test_extract_constant_generator():
    L = gn.random_gkls(2, rng=7)
    tr = dy.trajectory_from_maps(TimeGrid(0.5, 5000), lambda t: la.expm(L * t))
    gt = dy.extract_generator(tr)
    assert np.abs(gt.generators - L).max() < 1e-6


def _cos_dephasing(g, grid):
    def S(t):
        c = np.cos(g * t)
        return np.diag([1, c, c, 1]).astype(complex)
    return dy.trajectory_from_maps(grid, S)


def test_extract_dephasing_tan_and_singularity():
    g = 1.0
    grid = TimeGrid(1.4, 1400)
    gt = dy.extract_generator(_cos_dephasing(g, grid))
    rate = -gt.generators[:, 1, 1].real
    t = grid.times
    assert np.abs(rate[1:-1] - g * np.tan(g * t[1:-1])).max() < 1e-4 * (1 + np.tan(1.4) ** 2)
    with pytest.raises(SingularMap) as e:
        dy.extract_generator(_cos_dephasing(g, TimeGrid(np.pi, 200)))
    assert abs(e.value.t_star - np.pi / 2) < 0.02


def test_eternal_report():
    tr = dy.propagate(eternal, TimeGrid(5.0, 2000))
    rep = dy.divisibility_report(tr)
    assert not rep.verdicts["cp_divisible"]
    assert rep.verdicts["p_divisible"]
    assert rep.N_BLP < 1e-6
    assert rep.N_RHP > 0


def test_semigroup_report():
    L = gn.random_gkls(2, rng=11)
    tr = dy.trajectory_from_maps(TimeGrid(2.0, 200), lambda t: la.expm(L * t))
    rep = dy.divisibility_report(tr, blp_probes=8)
    assert all(rep.verdicts[k] for k in ("cp_divisible", "p_divisible", "blp_monotone", "volume_nonincreasing"))
    assert rep.N_RHP < 1e-8
    ks = [rep.N_k[k] for k in sorted(rep.N_k)]
    assert all(a <= b + 1e-15 for a, b in zip(ks, ks[1:]))


def test_phase_covariant_negative_gz_is_p_divisible():
    # constant gamma_z = -0.3 fails CP at small t, so only the rate verdicts are meaningful
    res = phase_covariant(PhaseCovariantSpec(0.0, 1.0, 1.0, -0.3), TimeGrid(2.0, 400), strict=False)
    assert not res.verdicts["complete_positivity"]
    assert res.verdicts["p_divisible"] and res.verdicts["blp"] and not res.verdicts["cp_divisible"]
    # a CP trajectory whose gamma_z approaches -0.3
    gz = {"type": "tanh", "amp": -0.3, "rate": 0.5}
    res = phase_covariant(PhaseCovariantSpec(0.0, 1.0, 1.0, gz), TimeGrid(2.0, 400))
    assert res.verdicts["p_divisible"] and not res.verdicts["cp_divisible"]
    rep = dy.divisibility_report(res.trajectory, blp_probes=8)
    assert rep.verdicts["p_divisible"] and not rep.verdicts["cp_divisible"]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_rhp_rate_relation(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=3), rng.normal(size=3)
    H = rng.normal() * Z
    gen = lambda t: gn.pauli_generator(a + b * np.sin(t), H)
    for t in (0.3, 1.1):
        L = gen(t)
        gam = a + b * np.sin(t)
        assert abs(dy.rhp_g(L) * 2 / 2 - np.maximum(-gam, 0).sum()) < 1e-6


def test_eternal_propagator_not_cp_but_positive():
    tr = dy.propagate(eternal, TimeGrid(2.0, 800))
    V = dy.propagator(tr, 1.0, 0.5)
    assert V.residual < 1e-6 and V.certified
    v = rc.classify(V.map, probes=8)
    assert v.min_choi_eig < -1e-4
    assert v.positive_lb > -1e-8


def test_propagator_composition():
    tr = dy.propagate(eternal, TimeGrid(2.0, 400))
    V1 = dy.propagator(tr, 1.5, 1.0).map.super
    V2 = dy.propagator(tr, 1.0, 0.5).map.super
    V = dy.propagator(tr, 1.5, 0.5).map.super
    assert np.abs(V1 @ V2 - V).max() < 1e-6


def test_propagator_alarm_near_singular():
    grid = TimeGrid(np.pi / 2 - 1e-7, 400)
    tr = _cos_dephasing(1.0, grid)
    r = dy.propagator(tr, grid.t_end, grid.t_end)
    assert r.alarm
    tr = _cos_dephasing(1.0, TimeGrid(2.0, 4))
    tr.supers[2] = np.diag([1, 0, 0, 1])
    with pytest.raises(SingularIntermediate):
        dy.propagator(tr, 1.5, 1.0)
    assert not dy.propagator(tr, 1.5, 1.0, restrict=True).certified


def test_cp_div_equals_p_div_of_square():
    # spot-check: Lambda (x) Lambda propagators are positive iff Lambda propagators are CP
    tr = dy.propagate(eternal, TimeGrid(2.0, 400))
    for (t, s) in [(1.0, 0.5), (2.0, 1.0)]:
        V = dy.propagator(tr, t, s).map
        cp = rc.classify(V, k_max=1, probes=2).cp
        # positivity of V (x) V on product-of-Bell probes: the Bell state witnesses negativity
        W = np.kron(V.super, V.super)
        d = 2
        perm = np.arange(16).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(-1)
        phi = np.zeros(4)
        phi[[0, 3]] = 1 / np.sqrt(2)
        P = np.outer(phi, phi)
        vecP = P.reshape(-1)
        # reorder vec of (A (x) B) to match kron of superoperators
        idx = np.arange(16).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(-1)
        out = np.zeros(16, complex)
        out[idx] = W @ vecP[idx]
        ev = np.linalg.eigvalsh(rc.herm(out.reshape(4, 4)))
        assert (ev.min() >= -1e-9) == cp
