"""Memory-kernel dynamics.

Solvers for ``dLambda/dt = L0 Lambda + int_0^t K(t - s) Lambda(s) ds``,
legitimate pairs ``{N_t, Q_t}`` with the series ``N + N*Q + N*Q*Q + ...``,
quantum semi-Markov pairs, the hybrid local-plus-kernel construction and a
Laplace-domain resolvent probe.  Everything runs in the time domain on
uniform grids; the Laplace transform only enters :func:`cm_probe`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la

from .classical import SemiMarkovSpec, WaitingTime, semi_markov_solve
from .dynamics import MapTrajectory
from .errors import (
    CPViolated,
    NotConverged,
    PairInvalid,
    ResolventSingular,
    SeriesDiverged,
    TraceDrift,
    VolterraNotConverged,
)
from .generators import _as_array
from .quadrature import _ide_run, convolve, volterra_ide
from .repcore import gellmann_basis, herm, spost, spre, sprepost, super_to_choi
from .timegrid import TimeGrid, as_grid, cumtrapz


def _dim_of(D: int) -> int:
    return int(round(np.sqrt(D)))


def _trace_row(d: int) -> np.ndarray:
    return np.eye(d).reshape(-1)


def _choi_min(S: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(herm(super_to_choi(S))).min())


def _deriv(fn: Callable, t: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Second-order finite-difference derivative of ``fn`` (one-sided near ``t = 0``)."""
    t = np.asarray(t, float)
    central = (np.asarray(fn(t + eps)) - np.asarray(fn(np.maximum(t - eps, 0.0)))) / (2 * eps)
    early = t < eps
    if early.any():
        te = t[early]
        fwd = (-3 * np.asarray(fn(te)) + 4 * np.asarray(fn(te + eps)) - np.asarray(fn(te + 2 * eps))) / (2 * eps)
        central = np.array(central, copy=True)
        central[early] = fwd
    return central


def _sample(obj, times) -> np.ndarray:
    """Grid samples of a family given as a callable or an array."""
    if callable(obj):
        return np.asarray(obj(np.asarray(times, float)), dtype=complex)
    return np.asarray(obj, dtype=complex)


# ---------------------------------------------------------------------------
# memory kernels

@dataclass
class MemoryKernel:
    """Kernel ``K_t`` plus an optional singular part ``delta(t) L0``.

    Attributes
    ----------
    samples : callable or ndarray
        ``samples(times) -> (n, D, D)``, or an array already sampled on the
        grid used by the solver.  ``None`` means no regular part.
    singular : ndarray, optional
        Time-local part ``L0`` (carried symbolically, never discretised).
    dim : int
        Hilbert-space dimension.
    """

    samples: Callable | np.ndarray | None
    singular: np.ndarray | None = None
    dim: int | None = None

    def __post_init__(self):
        if self.singular is not None:
            self.singular = _as_array(self.singular)
        if self.dim is None:
            if self.singular is not None:
                self.dim = _dim_of(self.singular.shape[0])
            elif self.samples is not None and not callable(self.samples):
                self.dim = _dim_of(np.asarray(self.samples).shape[1])
            else:
                raise ValueError("dimension cannot be inferred; pass dim")

    def regular(self, times) -> np.ndarray:
        D = self.dim ** 2
        if self.samples is None:
            return np.zeros((len(times), D, D), dtype=complex)
        return _sample(self.samples, times)

    def check_trace(self, times, tol: float = 1e-8) -> float:
        """Largest ``|Tr K_t(X)|`` over the matrix-unit basis (zero for a valid kernel)."""
        row = _trace_row(self.dim)
        err = np.abs(np.einsum("a,nab->nb", row, self.regular(times))).max()
        if self.singular is not None:
            err = max(err, np.abs(row @ self.singular).max())
        return float(err)


def scalar_dephasing_kernel(kappa: Callable, axis: str = "Z") -> MemoryKernel:
    """Qubit kernel ``K_t = 1/2 kappa(t) (s rho s - rho)``."""
    from .repcore import PAULI

    s = PAULI[axis]
    B = 0.5 * (sprepost(s, s) - np.eye(4))

    def samp(t):
        return np.asarray(kappa(t), float)[:, None, None] * B[None]

    return MemoryKernel(samp, None, 2)


def embed_classical_kernel(K: Callable | np.ndarray) -> Callable | np.ndarray:
    """Lift a classical kernel ``K_mn(t)`` to a superoperator acting on the diagonal sector."""

    def lift(Kc):
        Kc = np.asarray(Kc)
        n, d, _ = Kc.shape
        out = np.zeros((n, d * d, d * d), dtype=complex)
        idx = np.arange(d) * (d + 1)
        out[:, idx[:, None], idx[None, :]] = Kc
        return out

    if callable(K):
        return lambda t: lift(K(t))
    return lift(K)


def solve_volterra(kernel: MemoryKernel, grid, tp_tol: float = 1e-6, conv_tol: float = 1e-3,
                   order_check: bool = False) -> MapTrajectory:
    """Trapezoidal stepping of the memory-kernel master equation with ``Lambda_0 = id``.

    Parameters
    ----------
    kernel : MemoryKernel
    grid : TimeGrid
    tp_tol : float
        Allowed trace drift of the solution.
    conv_tol : float
        Allowed difference between the solutions on ``h`` and ``h/2``.
    order_check : bool
        Also solve on ``h/4`` and store the convergence ratio (about 4 for
        a second-order scheme) in ``meta["convergence_ratio"]``.

    Raises
    ------
    NotConverged
        Grid refinement changed the solution by more than ``conv_tol``.
    TraceDrift
        The solution fails trace preservation by more than ``tp_tol``.
    """
    grid = as_grid(grid)
    D = kernel.dim ** 2
    A = kernel.singular if kernel.singular is not None else np.zeros((D, D), dtype=complex)
    K = kernel.samples if (kernel.samples is None or callable(kernel.samples)) else np.asarray(kernel.samples)
    if K is None:
        K = lambda t: np.zeros((len(t), D, D), dtype=complex)
    try:
        X, _, delta = volterra_ide(A, K, np.eye(D), grid, extrapolate=callable(K), conv_tol=conv_tol)
    except VolterraNotConverged as exc:
        raise NotConverged(str(exc)) from exc
    meta = {"refinement_delta": delta}
    if order_check and callable(K):
        raw = []
        for f in (1, 2, 4):
            g = grid.refine(f)
            Xr, _ = _ide_run(A, np.asarray(K(g.times), dtype=complex), np.eye(D, dtype=complex), g.h)
            raw.append(Xr[::f])
        meta["convergence_ratio"] = float(np.abs(raw[0] - raw[1]).max() / max(np.abs(raw[1] - raw[2]).max(), 1e-300))
    drift = float(np.abs(np.einsum("a,nab->nb", _trace_row(kernel.dim), X) - _trace_row(kernel.dim)).max())
    meta["trace_drift"] = drift
    if drift > tp_tol:
        raise TraceDrift(f"trace drift {drift:.3e} exceeds {tp_tol:.1e}")
    traj = MapTrajectory(grid, X, "kernel", None, delta / 3 if np.isfinite(delta) else float("nan"), meta)
    return traj


# ---------------------------------------------------------------------------
# legitimate pairs

@dataclass
class LegitimatePair:
    """Pair ``{N_t, Q_t}`` of CP families.

    ``N`` and ``Q`` are callables ``times -> (n, D, D)``.  ``P`` optionally
    gives ``P_t = N_t * Phi_t`` for the integro-differential residual check.
    """

    N: Callable
    Q: Callable
    dim: int
    P: Callable | None = None
    label: str = ""

    def validate(self, grid, tol: float = 1e-6, eps: float = 1e-5) -> dict:
        """Check ``N_0 = id``, CP of ``N`` and ``Q`` and ``Tr(N' + Q) = 0``.

        Raises
        ------
        PairInvalid
            Listing every failed invariant.
        """
        grid = as_grid(grid)
        t = grid.times
        D = self.dim ** 2
        Nt = _sample(self.N, t)
        Qt = _sample(self.Q, t)
        Nd = _deriv(lambda x: _sample(self.N, x), t, eps)
        row = _trace_row(self.dim)
        info = {
            "N0_error": float(np.abs(Nt[0] - np.eye(D)).max()),
            "N_choi_min": min(_choi_min(S) for S in Nt),
            "Q_choi_min": min(_choi_min(S) for S in Qt),
            "normalization_error": float(np.abs(np.einsum("a,nab->nb", row, Nd + Qt)).max()),
        }
        failed = []
        if info["N0_error"] > tol:
            failed.append("N_0 != id")
        if info["N_choi_min"] < -tol:
            failed.append("N not CP")
        if info["Q_choi_min"] < -tol:
            failed.append("Q not CP")
        if info["normalization_error"] > tol:
            failed.append("Tr(N' + Q) != 0")
        if failed:
            raise PairInvalid("invalid pair: " + ", ".join(failed))
        return info


def _split_gkls(L: np.ndarray):
    """``L = Phi - Z`` with ``Phi`` CP (jump part) and ``Z(rho) = C rho + rho C^dag``."""
    from .generators import canonical_split

    g = canonical_split(L, tol=1e-8)
    d = g.dim
    F = gellmann_basis(d)
    Phi = np.zeros((d * d, d * d), dtype=complex)
    for k, Fk in enumerate(F):
        for l, Fl in enumerate(F):
            if g.kossakowski[k, l] != 0:
                Phi = Phi + g.kossakowski[k, l] * sprepost(Fk, Fl.conj().T)
    return Phi, Phi - L


def semigroup_pair(L) -> LegitimatePair:
    """``N_t = e^{-Z t}``, ``Q_t = Phi N_t`` from the GKLS split ``L = Phi - Z``."""
    L = _as_array(L)
    Phi, Z = _split_gkls(L)
    w, V = np.linalg.eig(-Z)
    Vi = np.linalg.inv(V)

    def N(t):
        t = np.atleast_1d(t)
        return np.einsum("ab,nb,bc->nac", V, np.exp(np.outer(t, w)), Vi)

    def Q(t):
        return np.einsum("ab,nbc->nac", Phi, N(t))

    def P(t):
        return np.einsum("nab,bc->nac", N(t), Phi)

    return LegitimatePair(N, Q, _dim_of(L.shape[0]), P, "semigroup")


def palma_pair(Gamma: float, F: Callable, dim: int) -> LegitimatePair:
    """``N_t = e^{-Gamma t} F_t`` and ``Q_t = P_t = Gamma e^{-Gamma t} F_t``."""

    def N(t):
        t = np.atleast_1d(t)
        return np.exp(-Gamma * t)[:, None, None] * F(t)

    def Q(t):
        return Gamma * N(t)

    return LegitimatePair(N, Q, dim, Q, "palma")


def gauge_pair(pair: LegitimatePair, F: Callable | None = None, G: Callable | None = None) -> LegitimatePair:
    """``N' = F_t N_t`` (``F`` a dynamical map) and ``Q' = G_t Q_t`` (``G`` CPTP)."""

    def N(t):
        t = np.atleast_1d(t)
        return pair.N(t) if F is None else np.einsum("nab,nbc->nac", F(t), pair.N(t))

    def Q(t):
        t = np.atleast_1d(t)
        return pair.Q(t) if G is None else np.einsum("nab,nbc->nac", G(t), pair.Q(t))

    return LegitimatePair(N, Q, pair.dim, None, pair.label + "+gauge")


def dephasing_family(lam: Callable) -> Callable:
    """Qubit dephasing maps with real coherence factor ``lam(t)``."""

    def F(t):
        t = np.atleast_1d(np.asarray(t, float))
        out = np.zeros((len(t), 4, 4), dtype=complex)
        out[:, 0, 0] = out[:, 3, 3] = 1.0
        out[:, 1, 1] = out[:, 2, 2] = lam(t)
        return out

    return F


def _pair_series(N: np.ndarray, Q: np.ndarray, h: float, tol: float, max_terms: int):
    Lam = N.copy()
    term = N
    prev = np.inf
    grow = 0
    for k in range(1, max_terms + 1):
        term = convolve(term, Q, h)
        Lam += term
        nrm = float(np.abs(term).sum(axis=(1, 2)).max())
        if nrm < tol:
            return Lam, k
        if not np.isfinite(nrm) or (nrm > prev and k > 50):
            grow += 1
            if grow > 20 or not np.isfinite(nrm):
                raise SeriesDiverged(f"series term norm {nrm:.3e} growing after {k} terms")
        prev = nrm
    raise SeriesDiverged(f"series did not reach {tol:.1e} in {max_terms} terms")


def pair_solve(pair: LegitimatePair, grid, tol: float = 1e-10, max_terms: int = 5000,
               extrapolate: bool = True, validate: bool = True) -> MapTrajectory:
    """Dynamical map ``Lambda = N + N*Q + N*Q*Q + ...`` of a legitimate pair.

    The series stops once the added term's superoperator norm drops below
    ``tol`` everywhere on the grid.  With ``extrapolate`` the series is also
    summed on the 2x refined grid and combined by Richardson extrapolation.

    Raises
    ------
    PairInvalid
        If ``validate`` and the pair breaks an invariant.
    SeriesDiverged
        If the term norms fail to decay.
    """
    grid = as_grid(grid)
    if validate:
        pair.validate(grid)
    Lam, k = _pair_series(_sample(pair.N, grid.times), _sample(pair.Q, grid.times), grid.h, tol, max_terms)
    delta = float("nan")
    if extrapolate:
        fine = grid.refine(2)
        Lf, kf = _pair_series(_sample(pair.N, fine.times), _sample(pair.Q, fine.times), fine.h, tol, max_terms)
        Lf = Lf[::2]
        delta = float(np.abs(Lf - Lam).max())
        Lam = (4 * Lf - Lam) / 3
        k = max(k, kf)
    meta = {"n_terms": k, "refinement_delta": delta,
            "choi_min": float(min(_choi_min(S) for S in Lam))}
    return MapTrajectory(grid, Lam, "kernel", None, delta / 3 if np.isfinite(delta) else float("nan"), meta)


def _d4(X: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central differences along axis 0 (interior points only, edges NaN)."""
    out = np.full_like(X, np.nan)
    out[2:-2] = (-X[4:] + 8 * X[3:-1] - 8 * X[1:-3] + X[:-4]) / (12 * h)
    return out


def palma_residual(traj: MapTrajectory, pair: LegitimatePair) -> float:
    """Residual of ``Lambda' = P * Lambda' + P + N'`` (requires ``pair.P``).

    Derivatives use fourth-order differences and the convolution is
    Richardson-extrapolated from spacings ``h`` and ``2h``; the residual is
    reported on even interior grid points.
    """
    if pair.P is None:
        raise ValueError("pair has no P_t = N_t * Phi_t")
    t = traj.times
    h = traj.grid.h
    Ld = _d4(traj.supers, h)
    Nd = _deriv(lambda x: _sample(pair.N, x), t)
    Pt = _sample(pair.P, t)
    # boundary derivatives from the defining relation at t = 0: Lambda'(0) = P_0 + N'(0)
    Ld[0] = Pt[0] + Nd[0]
    Ld[1] = (traj.supers[2] - traj.supers[0]) / (2 * h)
    Ld[-2:] = np.gradient(traj.supers, h, axis=0, edge_order=2)[-2:]
    c1 = convolve(Pt, Ld, h)
    c2 = convolve(Pt[::2], Ld[::2], 2 * h)
    conv = (4 * c1[::2] - c2) / 3
    res = Ld[::2] - conv - Pt[::2] - Nd[::2]
    m = len(res)
    return float(np.abs(res[2:m - 2]).max())


# ---------------------------------------------------------------------------
# quantum semi-Markov

def _as_family(F, D: int) -> Callable:
    """Callable family from ``None`` (identity), a generator (semigroup) or a callable."""
    if F is None:
        return lambda t: np.broadcast_to(np.eye(D, dtype=complex), (len(np.atleast_1d(t)), D, D)).copy()
    if callable(F):
        return F
    L = _as_array(F)
    w, V = np.linalg.eig(L)
    Vi = np.linalg.inv(V)
    return lambda t: np.einsum("ab,nb,bc->nac", V, np.exp(np.outer(np.atleast_1d(t), w)), Vi)


def _second_kind(b: np.ndarray, f: np.ndarray, h: float) -> np.ndarray:
    """Trapezoidal solution of ``r = b + r * f`` (scalar, uniform grid)."""
    n = len(b)
    r = np.zeros(n, dtype=np.result_type(b, f, float))
    r[0] = b[0]
    den = 1 - 0.5 * h * f[0]
    for i in range(1, n):
        hist = 0.5 * f[i] * r[0] + np.dot(f[i - 1:0:-1], r[1:i])
        r[i] = (b[i] + h * hist) / den
    return r


def memory_function(f: WaitingTime, times, fhat: Callable | None = None) -> tuple[float, np.ndarray]:
    """Memory function ``k`` with ``k~ = f~/g~`` as ``k = c delta + r``.

    ``c = fhat(0)`` and ``r`` solves ``r = fhat' + c f + r * f`` where
    ``f`` is the waiting density and ``fhat`` the jumping part (``f`` by
    default).
    """
    t = np.asarray(times, float)
    h = t[1] - t[0]
    fh = f.f if fhat is None else fhat
    ft = f.f(t)
    fht = np.asarray(fh(t), float)
    dfh = _deriv(fh, t)
    c = float(fht[0])
    return c, _second_kind(dfh + c * ft, ft, h)


@dataclass
class SemiMarkovQuantumResult:
    trajectory: MapTrajectory
    pair: LegitimatePair
    memory: dict = field(default_factory=dict)


def semi_markov_quantum(f: WaitingTime, E, grid, F=None, G=None, tol: float = 1e-10,
                        extrapolate: bool = True) -> SemiMarkovQuantumResult:
    """Quantum semi-Markov map from the pair ``N = g G_t``, ``Q = f E F_t``.

    Parameters
    ----------
    f : WaitingTime
        Waiting-time density; ``g = 1 - int f``.
    E : array_like
        Superoperator of the jump channel.
    F, G : None, generator or callable
        ``None`` is the identity family; a generator ``L`` gives ``e^{L t}``.

    Returns
    -------
    SemiMarkovQuantumResult
        ``memory`` holds the memory function ``k`` (``c``, ``r``) with
        ``k~ = f~/g~`` and the reconvolution residual ``|f - k*g|``.
    """
    grid = as_grid(grid)
    E = _as_array(E)
    D = E.shape[0]
    d = _dim_of(D)
    row = _trace_row(d)
    if np.abs(row @ E - row).max() > 1e-10:
        raise PairInvalid("jump channel E is not trace preserving")
    Ff, Gf = _as_family(F, D), _as_family(G, D)
    fine_t = grid.refine(8).times
    mass = cumtrapz(f.f(fine_t), fine_t[1] - fine_t[0])[-1]
    if mass > 1 + 1e-6:
        raise PairInvalid(f"waiting density integrates to {mass:.6g} > 1")
    if 1 - mass > 1e-3:
        warnings.warn(f"waiting density keeps mass {1 - mass:.3e} beyond the grid end", RuntimeWarning)

    def g_of(t):
        t = np.atleast_1d(np.asarray(t, float))
        if f.kind in ("exp", "erlang2"):
            return f.survival(t)
        from scipy.integrate import quad

        return np.array([1 - quad(lambda s: float(f.f(s)), 0, tt)[0] for tt in t])

    def N(t):
        t = np.atleast_1d(t)
        return g_of(t)[:, None, None] * Gf(t)

    def Q(t):
        t = np.atleast_1d(t)
        return f.f(t)[:, None, None] * np.einsum("ab,nbc->nac", E, Ff(t))

    pair = LegitimatePair(N, Q, d, None, "semi-markov")
    traj = pair_solve(pair, grid, tol=tol, extrapolate=extrapolate)
    c, r = memory_function(f, grid.times)
    recon = []
    for gg in (grid, grid.refine(2)):
        _, rr = memory_function(f, gg.times)
        gt = g_of(gg.times)
        recon.append(c * gt + convolve(rr, gt, gg.h))
    recon = (4 * recon[1][::2] - recon[0]) / 3
    memory = {"c": c, "r": r, "reconvolution_residual": float(np.abs(recon - f.f(grid.times)).max())}
    return SemiMarkovQuantumResult(traj, pair, memory)


def semi_markov_kernel(f: WaitingTime, E, L=None) -> MemoryKernel:
    """Memory kernel ``L delta + k(t) e^{t L}(E - id)`` of the semi-Markov pair with ``F = G = e^{L t}``.

    The regular part is recomputed on whatever grid the solver asks for.
    """
    E = _as_array(E)
    D = E.shape[0]
    L0 = np.zeros((D, D), dtype=complex) if L is None else _as_array(L)
    fam = _as_family(L0, D)
    M = E - np.eye(D)
    c = float(f.f(np.zeros(1))[0])

    def samp(t):
        t = np.asarray(t, float)
        _, r = memory_function(f, t)
        return r[:, None, None] * np.einsum("nab,bc->nac", fam(t), M)

    return MemoryKernel(samp, L0 + c * M, _dim_of(D))


# ---------------------------------------------------------------------------
# hybrid local + kernel dynamics

@dataclass
class HybridSpec:
    """Hybrid dynamics: semi-Markov populations and locally dephased coherences.

    Attributes
    ----------
    semi_markov : SemiMarkovSpec
        Classical part; it fixes the population dynamics and the kernels
        ``w_l`` entering the coherences.
    dephasing : callable or ndarray
        Coherence decay rates ``D_kl(t)`` (symmetric, diagonal ignored);
        the coherence picks up ``exp(-int D_kl)``.
    energies : callable or ndarray, optional
        Level energies ``E_k(t)``.
    """

    semi_markov: SemiMarkovSpec
    dephasing: Callable | np.ndarray | None = None
    energies: Callable | np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.semi_markov.dim


@dataclass
class HybridResult:
    trajectory: MapTrajectory
    T: np.ndarray
    lam: np.ndarray
    dec: np.ndarray
    cp_min: np.ndarray
    cp: bool
    first_violation: float | None


def _eval_matrix_fn(fn, t, d):
    if fn is None:
        return np.zeros((len(t), d, d))
    if callable(fn):
        return np.array([np.asarray(fn(tt), float) for tt in t])
    return np.broadcast_to(np.asarray(fn, float), (len(t), d, d))


def _eval_vector_fn(fn, t, d):
    if fn is None:
        return np.zeros((len(t), d))
    if callable(fn):
        return np.array([np.asarray(fn(tt), float) for tt in t])
    return np.broadcast_to(np.asarray(fn, float), (len(t), d))


def _coherence_kernels(sm: SemiMarkovSpec):
    """Singular weights ``c_l`` and a sampler of the regular parts of ``w_l``."""
    d = sm.dim
    off = ~np.eye(d, dtype=bool)

    def parts(t):
        t = np.asarray(t, float)
        h = t[1] - t[0]
        q = sm.q_of(t)
        ftot = q.sum(axis=1)  # (n, d) waiting densities
        fhat = np.where(off[None], q, 0).sum(axis=1)
        qd = _deriv(sm.q_of, t)
        dfhat = np.where(off[None], qd, 0).sum(axis=1)
        c = fhat[0]
        r = np.column_stack([_second_kind(dfhat[:, l] + c[l] * ftot[:, l], ftot[:, l], h) for l in range(d)])
        return c, r

    return parts


def hybrid_solve(spec: HybridSpec, grid, strict: bool = True, tol: float = 1e-9) -> HybridResult:
    """Hybrid map ``Lambda_t = U_t Phi^dec_t Phi^diss_t``.

    Populations follow :func:`classical.semi_markov_solve`; each coherence
    factor ``lambda_kl`` solves
    ``lambda' = -1/2 int (w_k + w_l)(t - s) lambda(s) ds`` with ``lambda(0) = 1``.
    Complete positivity holds iff ``Phi^dec_t[C(t)]`` is positive
    semidefinite, where ``C_kk = T_kk`` and ``C_kl = lambda_kl``.

    Raises
    ------
    CPViolated
        With ``strict``, at the first grid time where the test fails.
    """
    grid = as_grid(grid)
    t = grid.times
    d = spec.dim
    sm = semi_markov_solve(spec.semi_markov, grid)
    T = sm.T
    pairs = [(k, l) for k in range(d) for l in range(k + 1, d)]
    parts = _coherence_kernels(spec.semi_markov)
    m = len(pairs)
    lam = np.ones((len(t), d, d), dtype=complex)
    if m:
        c, _ = parts(t[:2] if len(t) > 1 else t)
        A = np.diag([-0.5 * (c[k] + c[l]) for k, l in pairs]).astype(complex)

        def K(tt):
            _, r = parts(tt)
            out = np.zeros((len(tt), m, m), dtype=complex)
            for j, (k, l) in enumerate(pairs):
                out[:, j, j] = -0.5 * (r[:, k] + r[:, l])
            return out

        X, _, _ = volterra_ide(A, K, np.ones(m), grid)
        for j, (k, l) in enumerate(pairs):
            lam[:, k, l] = X[:, j]
            lam[:, l, k] = np.conj(X[:, j])
    Dr = _eval_matrix_fn(spec.dephasing, t, d)
    Dint = cumtrapz(Dr, grid.h) if callable(spec.dephasing) else Dr * t[:, None, None]
    dec = np.exp(-Dint)
    idx = np.arange(d)
    dec[:, idx, idx] = 1.0
    E = _eval_vector_fn(spec.energies, t, d)
    Eint = cumtrapz(E, grid.h) if callable(spec.energies) else E * t[:, None]
    phase = np.exp(-1j * (Eint[:, :, None] - Eint[:, None, :]))
    coh = lam * dec * phase
    supers = np.zeros((len(t), d * d, d * d), dtype=complex)
    for k in range(d):
        for l in range(d):
            if k == l:
                for mm in range(d):
                    supers[:, mm * d + mm, k * d + k] = T[:, mm, k]
            else:
                supers[:, k * d + l, k * d + l] = coh[:, k, l]
    Cmat = lam * dec
    Cmat[:, idx, idx] = T[:, idx, idx]
    cp_min = np.array([np.linalg.eigvalsh(herm(Ci)).min() for Ci in Cmat])
    off = ~np.eye(d, dtype=bool)
    if d > 1:
        cp_min = np.minimum(cp_min, np.where(off[None], T, np.inf).min(axis=(1, 2)))
    bad = cp_min < -tol
    first = float(t[np.argmax(bad)]) if bad.any() else None
    if strict and bad.any():
        i = int(np.argmax(bad))
        raise CPViolated(f"hybrid map not CP at t={t[i]:.6g}", t_first=float(t[i]), min_eig=float(cp_min[i]))
    traj = MapTrajectory(grid, supers, "composite", None, sm.refinement_delta / 3)
    return HybridResult(traj, T, lam, dec, cp_min, not bad.any(), first)


# ---------------------------------------------------------------------------
# Laplace-domain resolvent probe

_FD = {
    0: ([0], [1.0]),
    1: ([-1, 1], [-0.5, 0.5]),
    2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
    3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
}


def _laplace(kernel: MemoryKernel, s: float, t_max: float | None, n: int, tail_tol: float) -> np.ndarray:
    D = kernel.dim ** 2
    out = np.zeros((D, D), dtype=complex) if kernel.singular is None else kernel.singular.copy()
    if kernel.samples is None:
        return out
    if callable(kernel.samples):
        T = t_max if t_max is not None else (np.log(1.0 / tail_tol) + 5.0) / s
        t = np.linspace(0, T, n + 1)
    else:
        if t_max is None:
            raise ValueError("grid-sampled kernels need t_max")
        t = np.linspace(0, t_max, len(kernel.samples))
    K = kernel.regular(t)
    from scipy.integrate import simpson

    val = simpson(np.exp(-s * t)[:, None, None] * K, x=t, axis=0)
    tail = np.abs(K[-1]).max() * np.exp(-s * t[-1]) / s
    if tail > tail_tol * max(np.abs(val).max(), 1.0):
        raise NotConverged(f"Laplace truncation tail {tail:.2e} too large at s={s}")
    return out + val


def cm_probe(kernel: MemoryKernel, s_samples: Sequence[float], order: int = 2, t_max: float | None = None,
             n_quad: int = 20000, tail_tol: float = 1e-8, tol: float = 1e-7) -> dict:
    """Complete-monotonicity probe of ``R(s) = (s - K~(s))^{-1}``.

    For each ``s`` and ``n <= order`` the finite difference
    ``(-1)^n Delta^n R(s)`` with step ``1e-3 s`` is tested for complete
    positivity.  A violation certifies an illegitimate kernel; passing is
    only necessary evidence.

    Returns
    -------
    dict
        ``flags[s][n]`` booleans, ``min_eig[s][n]`` and overall ``passed``.

    Raises
    ------
    ResolventSingular
        If ``s - K~(s)`` is numerically singular.
    """
    if order > 3:
        raise ValueError("order must be at most 3")
    D = kernel.dim ** 2
    flags, mins = {}, {}
    for s in s_samples:
        if s <= 0:
            raise ValueError("s samples must be positive")
        step = 1e-3 * s
        offs = sorted({o for n in range(order + 1) for o in _FD[n][0]})
        R = {}
        for o in offs:
            M = (s + o * step) * np.eye(D) - _laplace(kernel, s + o * step, t_max, n_quad, tail_tol)
            if np.linalg.cond(M) > 1e12:
                raise ResolventSingular(f"s - K~(s) singular at s={s + o * step:.6g}")
            R[o] = la.inv(M)
        flags[s], mins[s] = {}, {}
        for n in range(order + 1):
            o_list, w = _FD[n]
            Dn = sum(wi * R[o] for o, wi in zip(o_list, w)) / step ** n
            X = (-1) ** n * Dn
            ev = float(np.linalg.eigvalsh(herm(super_to_choi(X))).min())
            scale = max(np.abs(X).max(), 1e-300)
            mins[s][n] = ev
            flags[s][n] = bool(ev >= -tol * scale)
    passed = all(all(v.values()) for v in flags.values())
    return {"flags": flags, "min_eig": mins, "passed": passed}
