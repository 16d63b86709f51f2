"""Classical rate equations and semi-Markov processes.

Probability vectors are columns and stochastic matrices are column
stochastic, ``p(t) = T(t) p(0)``.  These routines double as oracles for the
diagonal sectors of the quantum solvers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la

from .errors import (
    InvalidSource,
    NegativeRate,
    NonStochasticJumpMatrix,
    NotAProbabilityVector,
    SeriesNotConverged,
    SingularIntermediate,
)
from .quadrature import convolve
from .timegrid import TimeGrid, as_grid, cumtrapz

_CLAMP = 1e-15


# ---------------------------------------------------------------------------
# Kolmogorov generators and rate equations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KolmogorovGenerator:
    """Classical generator ``L_ij = W_ij - delta_ij sum_k W_kj``.

    Parameters
    ----------
    rates : array_like, shape (d, d)
        Off-diagonal transition rates ``W_ij`` (from ``j`` to ``i``).  The
        diagonal is ignored.
    validate : bool
        Raise :class:`NegativeRate` when an off-diagonal rate is negative.
    """

    rates: np.ndarray
    validate: bool = True

    def __post_init__(self):
        W = np.array(self.rates, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("rates must be a square matrix")
        np.fill_diagonal(W, 0.0)
        object.__setattr__(self, "rates", W)
        if self.validate and W.min() < 0:
            raise NegativeRate(f"negative transition rate {W.min():.3e}")

    @property
    def dim(self) -> int:
        return self.rates.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        W = self.rates
        return W - np.diag(W.sum(axis=0))

    @property
    def valid(self) -> bool:
        return bool(self.rates.min() >= 0)

    def propagator(self, t: float) -> np.ndarray:
        return la.expm(self.matrix * t)

    def steady_state(self) -> np.ndarray:
        L = self.matrix
        ns = la.null_space(L)
        if ns.shape[1] == 0:
            # numerical fallback: smallest singular vector
            _, _, vh = la.svd(L)
            ns = vh[-1:].T
        p = np.real(ns[:, 0])
        return p / p.sum()


def _check_prob(p, tol=1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.min() < -tol or abs(p.sum() - 1) > tol:
        raise NotAProbabilityVector("p0 must be non-negative and sum to one")
    return p


def is_stochastic(T, tol=1e-8) -> bool:
    """Column-stochasticity test with entry tolerance ``tol``."""
    T = np.asarray(T)
    return bool(np.real(T).min() >= -tol and np.allclose(np.real(T).sum(axis=0), 1, atol=max(tol, 1e-8)))


@dataclass
class RateTrajectory:
    """Output of :func:`rate_solve`.

    ``flux`` follows the Schnakenberg definition ``1/2 sum J_ij ln(W_ij/W_ji)``,
    for which ``dS/dt = entropy_production - flux``.  ``flux_in = -flux`` is
    the entropy flowing into the system, so ``entropy_production + flux_in``
    equals ``dS/dt``.
    """

    times: np.ndarray
    p: np.ndarray
    entropy_production: np.ndarray
    flux: np.ndarray
    dS_dt: np.ndarray
    heat_currents: np.ndarray | None = None
    clamped: bool = False

    @property
    def flux_in(self) -> np.ndarray:
        return -self.flux


def _log_ratio(a, b):
    return np.log(np.maximum(a, _CLAMP)) - np.log(np.maximum(b, _CLAMP))


def _schnakenberg(Ws, p):
    """Entropy production, flux and per-reservoir currents for one state."""
    sig = 0.0
    phi = 0.0
    for W in Ws:
        fwd = W * p[None, :]  # W_ij p_j
        J = fwd - fwd.T
        mask = (W > 0) | (W.T > 0)
        np.fill_diagonal(mask, False)
        sig += 0.5 * np.sum((J * _log_ratio(fwd, fwd.T))[mask])
        phi += 0.5 * np.sum((J * _log_ratio(W, W.T))[mask])
    return sig, phi


def rate_solve(gen, p0, grid, energies=None, reservoirs: Sequence | None = None) -> RateTrajectory:
    """Solve the Pauli rate equation with entropy bookkeeping.

    Parameters
    ----------
    gen : KolmogorovGenerator or sequence of KolmogorovGenerator
        A list is interpreted as one generator per reservoir; the dynamics
        uses their sum.
    p0 : array_like
        Initial probability vector.
    grid : TimeGrid
    energies : array_like, optional
        Level energies; enables heat currents ``J_nu = sum_i E_i (L_nu p)_i``.
    reservoirs : sequence, optional
        Alternative way to pass per-reservoir generators.

    Returns
    -------
    RateTrajectory
    """
    grid = as_grid(grid)
    gens = list(reservoirs) if reservoirs is not None else (
        list(gen) if isinstance(gen, (list, tuple)) else [gen])
    for g in gens:
        if not g.valid:
            raise NegativeRate("generator has negative rates")
    p0 = _check_prob(p0)
    if p0.size != gens[0].dim:
        raise NotAProbabilityVector("p0 dimension does not match generator")
    L = sum(g.matrix for g in gens)
    Ws = [g.rates for g in gens]
    step = la.expm(L * grid.h)
    n = grid.n_steps + 1
    P = np.empty((n, p0.size))
    P[0] = p0
    for i in range(1, n):
        P[i] = step @ P[i - 1]
    clamped = bool(P.min() <= 0)
    sig = np.empty(n)
    phi = np.empty(n)
    dS = np.empty(n)
    for i, p in enumerate(P):
        sig[i], phi[i] = _schnakenberg(Ws, p)
        pdot = L @ p
        dS[i] = -np.sum(pdot * np.log(np.maximum(p, _CLAMP)))
    heat = None
    if energies is not None:
        E = np.asarray(energies, dtype=float)
        heat = np.array([[E @ (g.matrix @ p) for g in gens] for p in P])
    return RateTrajectory(grid.times, P, sig, phi, dS, heat, clamped)


def relative_entropy_classical(p, q) -> float:
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    m = p > 0
    return float(np.sum(p[m] * (np.log(p[m]) - np.log(np.maximum(q[m], _CLAMP)))))


def thermal_rates(energies, beta, couplings=None, seed=None) -> KolmogorovGenerator:
    """Rates obeying ``W_ij / W_ji = exp(-beta (E_i - E_j))``."""
    E = np.asarray(energies, float)
    d = E.size
    if couplings is None:
        rng = np.random.default_rng(seed)
        A = rng.uniform(0.5, 1.5, (d, d))
        couplings = A + A.T
    A = np.asarray(couplings, float)
    W = A * np.exp(-0.5 * beta * (E[:, None] - E[None, :]))
    return KolmogorovGenerator(W)


# ---------------------------------------------------------------------------
# Semi-Markov processes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaitingTime:
    """Waiting-time density.

    ``kind`` is one of ``"exp"`` (``rate e^{-rate t}``), ``"erlang2"``
    (``rate^2 t e^{-rate t}``) or ``"callable"`` (user supplied ``func``).
    """

    kind: str = "exp"
    rate: float = 1.0
    func: Callable | None = None

    def f(self, t):
        t = np.asarray(t, float)
        if self.kind == "exp":
            return self.rate * np.exp(-self.rate * t)
        if self.kind == "erlang2":
            return self.rate ** 2 * t * np.exp(-self.rate * t)
        if self.kind == "callable":
            return np.asarray(self.func(t), float)
        raise ValueError(f"unknown waiting-time kind {self.kind!r}")

    def survival(self, t):
        t = np.asarray(t, float)
        if self.kind == "exp":
            return np.exp(-self.rate * t)
        if self.kind == "erlang2":
            return (1 + self.rate * t) * np.exp(-self.rate * t)
        return 1.0 - cumtrapz(self.f(t), t[1] - t[0])


@dataclass
class SemiMarkovSpec:
    """Jump matrix plus per-state waiting times, or a full ``q_mn(t)``.

    Parameters
    ----------
    jump : array_like, optional
        Column-stochastic jump matrix ``Pi``.
    waiting : WaitingTime or list of WaitingTime
        One density per state (a single one is shared).
    q : callable, optional
        ``q(t)`` returning an array of shape ``(len(t), d, d)``.
    """

    jump: np.ndarray | None = None
    waiting: object = field(default_factory=WaitingTime)
    q: Callable | None = None
    dim: int | None = None

    def __post_init__(self):
        if self.q is None:
            Pi = np.asarray(self.jump, dtype=float)
            if Pi.ndim != 2 or Pi.shape[0] != Pi.shape[1] or not is_stochastic(Pi, 1e-10):
                raise NonStochasticJumpMatrix("jump matrix must be column stochastic")
            self.jump = Pi
            self.dim = Pi.shape[0]
            if isinstance(self.waiting, WaitingTime):
                self.waiting = [self.waiting] * self.dim
        elif self.dim is None:
            self.dim = np.asarray(self.q(np.zeros(1))).shape[-1]

    def q_of(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        if self.q is not None:
            return np.asarray(self.q(t), float)
        f = np.stack([w.f(t) for w in self.waiting], axis=-1)  # (n, d)
        return self.jump[None, :, :] * f[:, None, :]

    def survival_of(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        if self.q is None:
            return np.stack([w.survival(t) for w in self.waiting], axis=-1)
        fn = self.q_of(t).sum(axis=1)
        return 1.0 - cumtrapz(fn, t[1] - t[0])

    def check_normalization(self, t_max: float = 200.0, n: int = 200001, tol: float = 1e-4) -> bool:
        t = np.linspace(0, t_max, n)
        tot = cumtrapz(self.q_of(t).sum(axis=1), t[1] - t[0])[-1]
        return bool(np.all(np.abs(tot - 1) < tol))


@dataclass
class SemiMarkovResult:
    times: np.ndarray
    T: np.ndarray
    n_terms: int
    refinement_delta: float
    stochastic_error: float


def _series(spec: SemiMarkovSpec, grid: TimeGrid, tol: float, max_terms: int):
    t = grid.times
    q = spec.q_of(t)
    g = spec.survival_of(t)
    n = np.zeros_like(q)
    idx = np.arange(spec.dim)
    n[:, idx, idx] = g
    T = n.copy()
    term = n
    for k in range(1, max_terms + 1):
        term = convolve(term, q, grid.h)
        T += term
        if np.abs(term).sum(axis=1).max() < tol:
            return T, k
    raise SeriesNotConverged(f"series did not converge in {max_terms} terms")


def semi_markov_solve(spec: SemiMarkovSpec, grid, tol: float = 1e-10, max_terms: int = 2000,
                      extrapolate: bool = True) -> SemiMarkovResult:
    """Semi-Markov dynamical map ``T = n + n*q + n*q*q + ...``.

    Parameters
    ----------
    spec : SemiMarkovSpec
    grid : TimeGrid
    tol : float
        The series stops once the added term's largest column sum is below
        ``tol``.
    extrapolate : bool
        Also solve on the 2x refined grid and return the Richardson
        combination ``(4 T_{h/2} - T_h)/3``.  ``refinement_delta`` is the
        max difference between the two raw solutions.

    Returns
    -------
    SemiMarkovResult
    """
    grid = as_grid(grid)
    T, k = _series(spec, grid, tol, max_terms)
    delta = float("nan")
    if extrapolate:
        Tf, kf = _series(spec, grid.refine(2), tol, max_terms)
        Tf = Tf[::2]
        delta = float(np.abs(Tf - T).max())
        T = (4 * Tf - T) / 3
        k = max(k, kf)
    err = float(max(np.abs(T.sum(axis=1) - 1).max(), max(0.0, -T.min())))
    return SemiMarkovResult(grid.times, T, k, delta, err)


def renewal_residual(spec: SemiMarkovSpec, result: SemiMarkovResult) -> float:
    """Max residual of ``T = n + T*q`` on the result grid."""
    t = result.times
    h = t[1] - t[0]
    q = spec.q_of(t)
    g = spec.survival_of(t)
    n = np.zeros_like(q)
    idx = np.arange(spec.dim)
    n[:, idx, idx] = g
    return float(np.abs(result.T - n - convolve(result.T, q, h)).max())


def memory_kernel_residual(T: np.ndarray, kernel: np.ndarray, h: float) -> float:
    """Residual of ``dT/dt = int_0^t K(t-s) T(s) ds`` (central differences, interior)."""
    rhs = convolve(kernel, T, h)
    dT = (T[2:] - T[:-2]) / (2 * h)
    return float(np.abs(dT - rhs[1:-1]).max())


def erlang2_kernel(gamma: float, jump, times) -> np.ndarray:
    """Memory kernel ``gamma^2 e^{-2 gamma t} (Pi - 1)`` of the Erlang-2 process."""
    Pi = np.asarray(jump, float)
    t = np.asarray(times, float)
    return gamma ** 2 * np.exp(-2 * gamma * t)[:, None, None] * (Pi - np.eye(Pi.shape[0]))[None]


def time_local_generator(times, T, cond_max: float = 1e8):
    """``L(t) = dT/dt T(t)^{-1}`` by central differences.

    Points where ``T`` is ill conditioned are returned as NaN.
    """
    T = np.asarray(T)
    h = times[1] - times[0]
    dT = np.gradient(T, h, axis=0, edge_order=2)
    out = np.full_like(T, np.nan, dtype=float)
    for i in range(len(times)):
        if np.linalg.cond(T[i]) < cond_max:
            out[i] = np.real(dT[i] @ la.inv(T[i]))
    return out


# ---------------------------------------------------------------------------
# Chapman-Kolmogorov and classical shadows
# ---------------------------------------------------------------------------

@dataclass
class CKReport:
    """Per-pair propagator diagnostics, indexed ``[i_t, i_s]`` with ``t >= s``."""

    times: np.ndarray
    residual: np.ndarray
    min_entry: np.ndarray
    stochastic: np.ndarray
    fallback: np.ndarray
    p_divisible: bool
    first_violation: tuple | None


def _kernel_included(Ts, Tt, tol=1e-8) -> bool:
    ns = la.null_space(Ts, rcond=tol)
    return ns.shape[1] == 0 or np.abs(Tt @ ns).max() < 1e-6


def chapman_kolmogorov_check(times, T, stride: int = 1, cond_max: float = 1e8,
                             tol: float = 1e-8) -> CKReport:
    """Build ``T(t,s) = T(t) T(s)^{-1}`` for grid pairs and test stochasticity.

    Parameters
    ----------
    times, T : arrays
        Trajectory, ``T`` of shape ``(n, d, d)``.
    stride : int
        Subsample the grid before forming pairs.
    cond_max : float
        Above this condition number of ``T(s)`` the kernel-inclusion test
        ``Ker T(s) subset Ker T(t)`` replaces inversion; failure raises
        :class:`SingularIntermediate`.
    """
    times = np.asarray(times)[::stride]
    T = np.asarray(T)[::stride]
    n = len(times)
    res = np.full((n, n), np.nan)
    mins = np.full((n, n), np.nan)
    stoch = np.ones((n, n), dtype=bool)
    fb = np.zeros(n, dtype=bool)
    first = None
    for j in range(n):
        Ts = T[j]
        singular = np.linalg.cond(Ts) >= cond_max
        fb[j] = singular
        if singular:
            for i in range(j, n):
                if not _kernel_included(Ts, T[i]):
                    raise SingularIntermediate(
                        f"T(s) singular at s={times[j]:.6g} and kernel not inherited at t={times[i]:.6g}")
            Vinv = la.pinv(Ts)
        else:
            Vinv = la.inv(Ts)
        for i in range(j, n):
            V = T[i] @ Vinv
            res[i, j] = np.abs(T[i] - V @ Ts).max()
            if singular:
                continue
            mins[i, j] = V.min()
            ok = mins[i, j] >= -tol and np.allclose(V.sum(axis=0), 1, atol=1e-6)
            stoch[i, j] = ok
            if not ok and (first is None or (times[i], times[j]) < first):
                first = (float(times[i]), float(times[j]))
    return CKReport(times, res, mins, stoch, fb, bool(stoch.all()), first)


def _super_of(obj):
    if hasattr(obj, "super") and not callable(getattr(obj, "super")):
        return np.asarray(obj.super)
    return np.asarray(obj)


def classical_shadow(gen_q, basis=None, kind: str | None = None):
    """Classical object ``L_ij = Tr(P_i X(P_j))`` induced by a quantum one.

    Parameters
    ----------
    gen_q : GKLSGenerator, LinearMap or superoperator array
    basis : array_like, optional
        Unitary whose columns form the orthonormal basis (default computational).
    kind : {"generator", "map"}, optional
        Inferred from trace annihilation / preservation when omitted.

    Returns
    -------
    KolmogorovGenerator (unvalidated; check ``.valid``) for generators, or a
    real matrix for maps.
    """
    S = _super_of(gen_q)
    d = int(round(np.sqrt(S.shape[0])))
    U = np.eye(d) if basis is None else np.asarray(basis)
    if U.shape != (d, d) or not np.allclose(U.conj().T @ U, np.eye(d), atol=1e-8):
        raise InvalidSource("basis must be a unitary with orthonormal columns")
    tr_row = np.eye(d).reshape(-1)
    ann = np.abs(tr_row @ S).max() < 1e-8
    tp = np.abs(tr_row @ S - tr_row).max() < 1e-8
    if kind is None:
        kind = "generator" if ann else "map" if tp else None
    if kind == "generator" and not ann or kind == "map" and not tp or kind is None:
        raise InvalidSource("source is neither trace annihilating nor trace preserving")
    projs = [np.outer(U[:, k], U[:, k].conj()).reshape(-1) for k in range(d)]
    # Tr(P_i X) = <vec P_i, vec X> for Hermitian P_i
    M = np.array([[np.real(np.vdot(projs[i], S @ projs[j])) for j in range(d)] for i in range(d)])
    if kind == "map":
        return M
    return KolmogorovGenerator(M, validate=False)


def shadow_witness(gen_q, n_bases: int = 200, seed: int = 0):
    """Search random bases for a negative classical rate.

    Returns ``(min_rate, basis)`` of the most negative off-diagonal rate.
    """
    from .repcore import random_unitary

    S = _super_of(gen_q)
    d = int(round(np.sqrt(S.shape[0])))
    rng = np.random.default_rng(seed)
    best = (np.inf, None)
    for k in range(n_bases):
        U = np.eye(d) if k == 0 else random_unitary(d, rng)
        W = classical_shadow(S, U, kind="generator").rates
        off = W[~np.eye(d, dtype=bool)].min()
        if off < best[0]:
            best = (float(off), U)
    return best


# ---------------------------------------------------------------------------
# Rosenblatt process
# ---------------------------------------------------------------------------

def rosenblatt_conditional(m: int) -> np.ndarray:
    """Array ``P[x2, x1, x0] = p(x2 | x1, x0)`` of the m-state Rosenblatt chain."""
    x = np.arange(m)
    arg = 2 * x[:, None, None] - x[None, :, None] - x[None, None, :]
    return (1 - np.cos(2 * np.pi / m * arg)) / m


def rosenblatt_transition(m: int, p_prev=None) -> np.ndarray:
    """Two-point transition ``p(x2|x1) = sum_x0 p(x2|x1,x0) p(x0|x1)``.

    With uniform ``p(x0|x1)`` (the stationary case) this is ``1/m``.
    """
    P = rosenblatt_conditional(m)
    w = np.full(m, 1.0 / m) if p_prev is None else np.asarray(p_prev, float)
    return np.einsum("abc,c->ab", P, w)
