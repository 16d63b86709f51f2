"""Propagation of time-local master equations and divisibility diagnostics.

A trajectory stores the superoperators ``Lambda_t`` on a uniform grid.  The
diagnostics extract ``L_t = dLambda/dt Lambda_t^{-1}`` by central
differences and derive canonical rates, the RHP integrand, P-divisibility
probes, a BLP lower bound, k-divisibility measures and the volume of
accessible states.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from .errors import (
    SingularIntermediate,
    SingularMap,
    StepSizeTooCoarse,
    TraceNotAnnihilated,
)
from .generators import _as_array, canonical_split, ccp_matrix, conditional_positivity_min
from .repcore import LinearMap, herm, super_to_choi, vec
from .timegrid import TimeGrid, as_grid

__all__ = [
    "TimeGrid",
    "MapTrajectory",
    "GeneratorTrajectory",
    "DivisibilityReport",
    "PropagatorResult",
    "propagate",
    "trajectory_from_maps",
    "extract_generator",
    "divisibility_report",
    "propagator",
    "write_report_csv",
    "rhp_g",
    "g_k",
]


# ---------------------------------------------------------------------------
# trajectories

@dataclass
class MapTrajectory:
    """Dynamical map sampled on a grid.

    Attributes
    ----------
    grid : TimeGrid
    supers : ndarray, shape (n_steps + 1, d**2, d**2)
    provenance : str
        One of ``generator``, ``kernel``, ``closed-form``, ``composite``.
    generator : callable, optional
        Analytic ``t -> L_t`` when known.
    error_estimate : float
        Step-halving error estimate (NaN when not computed).
    """

    grid: TimeGrid
    supers: np.ndarray
    provenance: str = "generator"
    generator: Callable | None = None
    error_estimate: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.supers.shape[1])))

    def __len__(self) -> int:
        return self.supers.shape[0]

    def __getitem__(self, i) -> LinearMap:
        return LinearMap(self.supers[i])

    def at(self, t: float) -> LinearMap:
        return self[self.grid.index(t)]

    def evolve(self, rho) -> np.ndarray:
        """States ``Lambda_t(rho)`` for every grid time, shape ``(n, d, d)``."""
        d = self.dim
        return (self.supers @ vec(np.asarray(rho, dtype=complex))).reshape(-1, d, d)

    def choi_min(self) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(herm(super_to_choi(S))).min() for S in self.supers])

    def trace_error(self) -> float:
        d = self.dim
        one = vec(np.eye(d))
        return float(np.abs(one @ self.supers - one).max())

    def cp_violations(self, tol: float = 1e-7) -> np.ndarray:
        """Grid times whose Choi matrix has an eigenvalue below ``-tol``."""
        return self.times[self.choi_min() < -tol]


def trajectory_from_maps(grid, maps, provenance: str = "closed-form", generator=None) -> MapTrajectory:
    """Wrap a callable ``t -> superoperator`` or an array of samples."""
    grid = as_grid(grid)
    if callable(maps):
        S = np.array([_as_array(maps(t)) for t in grid.times])
    else:
        S = np.array([_as_array(m) for m in maps])
    return MapTrajectory(grid, S.astype(complex), provenance, generator)


def _midpoint_run(genfn, grid: TimeGrid, D: int) -> np.ndarray:
    h = grid.h
    d = int(round(np.sqrt(D)))
    one = vec(np.eye(d))
    out = np.empty((grid.n_steps + 1, D, D), dtype=complex)
    out[0] = np.eye(D)
    t0 = grid.t0
    for i in range(grid.n_steps):
        L = _as_array(genfn(t0 + (i + 0.5) * h))
        if np.abs(one @ L).max() > 1e-9:
            raise TraceNotAnnihilated(f"generator not trace annihilating at t={t0 + (i + 0.5) * h:.6g}")
        out[i + 1] = la.expm(h * L) @ out[i]
    return out


def propagate(genfn: Callable, grid, check: bool = True, err_tol: float = 1e-5,
              max_halvings: int = 3) -> MapTrajectory:
    """Time-ordered exponential by midpoint-exponential stepping.

    ``Lambda_{t+h} = exp(h L_{t+h/2}) Lambda_t``.  With ``check`` the run is
    repeated on halved steps; the finer solution (sampled on ``grid``) is
    returned together with the Richardson error estimate ``|diff|/3``.
    Halving continues up to ``max_halvings`` times until the estimate drops
    below ``err_tol``.

    Raises
    ------
    StepSizeTooCoarse
        If the estimate never drops below ``err_tol``.
    """
    grid = as_grid(grid)
    L0 = _as_array(genfn(grid.t0))
    D = L0.shape[0]
    coarse = _midpoint_run(genfn, grid, D)
    if not check:
        return MapTrajectory(grid, coarse, "generator", genfn)
    est = np.inf
    for k in range(1, max_halvings + 1):
        f = 2 ** k
        fine = _midpoint_run(genfn, grid.refine(f), D)[::f]
        est = float(np.abs(fine - coarse).max() / 3)
        if est < err_tol:
            return MapTrajectory(grid, fine, "generator", genfn, est)
        coarse = fine
    raise StepSizeTooCoarse(f"step halving did not converge (estimate {est:.3e})")


# ---------------------------------------------------------------------------
# generator extraction

@dataclass
class GeneratorTrajectory:
    grid: TimeGrid
    generators: np.ndarray
    cond: np.ndarray
    regular: np.ndarray
    near_singular_times: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


def _kernel_dim(S: np.ndarray, rel: float = 1e-10) -> int:
    s = la.svdvals(S)
    return int(np.sum(s < rel * s[0]))


def extract_generator(traj: MapTrajectory, cond_max: float = 1e8, on_singular: str = "raise",
                      analytic: bool = False) -> GeneratorTrajectory:
    """Time-local generator ``L_t = dLambda_t/dt Lambda_t^{-1}``.

    Parameters
    ----------
    traj : MapTrajectory
    cond_max : float
        Samples with condition number at or above this are singular.
    on_singular : {"raise", "nan"}
        Raise :class:`SingularMap` at the first singular time, or fill NaN.
    analytic : bool
        Use ``traj.generator`` instead of finite differences when available.

    Notes
    -----
    Local maxima of the condition number above ``1e3`` are reported in
    ``near_singular_times``; they mark divergences of the time-local rates
    that fall between grid points.
    """
    S = traj.supers
    h = traj.grid.h
    n = len(S)
    cond = np.array([np.linalg.cond(X) for X in S])
    regular = cond < cond_max
    if on_singular == "raise" and not regular.all():
        i = int(np.argmax(~regular))
        raise SingularMap(f"map singular at t={traj.times[i]:.6g}", t_star=float(traj.times[i]),
                          kernel_dim=max(_kernel_dim(S[i]), 1))
    if analytic and traj.generator is not None:
        G = np.array([_as_array(traj.generator(t)) for t in traj.times])
    else:
        dS = np.gradient(S, h, axis=0, edge_order=2)
        G = np.full_like(S, np.nan)
        for i in range(n):
            if regular[i]:
                G[i] = la.solve(S[i].T, dS[i].T).T
    peaks = [i for i in range(1, n - 1) if cond[i] > 1e3 and cond[i] >= cond[i - 1] and cond[i] >= cond[i + 1]]
    return GeneratorTrajectory(traj.grid, G, cond, regular, traj.times[peaks])


# ---------------------------------------------------------------------------
# RHP and k-divisibility integrands

def rhp_g(gen) -> float:
    """RHP integrand ``g = 2 Tr L_-`` with the normalised maximally entangled projector."""
    w = np.linalg.eigvalsh(ccp_matrix(gen))
    return float(2 * np.sum(np.maximum(-w, 0)))


def g_k(gen, psi: np.ndarray, k: int) -> float:
    """``2 Tr L^(k)_-(P)`` for the unit vector ``psi`` in ``C^k (x) C^d``."""
    S = _as_array(gen)
    d = int(round(np.sqrt(S.shape[0])))
    c = np.asarray(psi, dtype=complex).reshape(k, d)
    c = c / np.linalg.norm(c)
    out = np.zeros((k * d, k * d), dtype=complex)
    for a in range(k):
        for b in range(k):
            X = np.outer(c[a], c[b].conj())
            out[a * d:(a + 1) * d, b * d:(b + 1) * d] = (S @ vec(X)).reshape(d, d)
    v = c.reshape(-1)
    Q = np.eye(k * d) - np.outer(v, v.conj())
    w = np.linalg.eigvalsh(herm(Q @ out @ Q))
    return float(2 * np.sum(np.maximum(-w, 0)))


def _pdiv_probe_values(S: np.ndarray, psis: np.ndarray) -> np.ndarray:
    """``lambda_min`` of ``L(P)`` compressed to ``psi^perp`` for each probe."""
    d = psis.shape[1]
    out = np.empty(len(psis))
    for j, psi in enumerate(psis):
        P = np.outer(psi, psi.conj())
        LP = (S @ vec(P)).reshape(d, d)
        Qb = la.null_space(psi.conj()[None, :])
        out[j] = np.linalg.eigvalsh(herm(Qb.conj().T @ LP @ Qb)).min()
    return out


def _rand_vec(d: int, rng) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def _standard_probes(d: int) -> list:
    out = [np.eye(d)[i].astype(complex) for i in range(d)]
    for i in range(d):
        for j in range(i + 1, d):
            for ph in (1, -1, 1j, -1j):
                v = np.zeros(d, complex)
                v[i], v[j] = 1, ph
                out.append(v / np.sqrt(2))
    return out


# ---------------------------------------------------------------------------
# report

@dataclass
class DivisibilityReport:
    times: np.ndarray
    gammas: np.ndarray
    g: np.ndarray
    f: np.ndarray
    g_crosscheck: float
    p_probe_min: np.ndarray
    sigma: np.ndarray
    trace_distance: np.ndarray
    N_RHP: float
    N_BLP: float
    N_k: dict
    volume: np.ndarray
    sigma_min: np.ndarray
    verdicts: dict
    certified: dict
    marginal: dict
    invertible: bool
    cond: np.ndarray

    def as_dict(self) -> dict:
        return {
            "N_RHP": self.N_RHP,
            "N_BLP_lower_bound": self.N_BLP,
            "N_k": {str(k): v for k, v in self.N_k.items()},
            "g_crosscheck": self.g_crosscheck,
            "invertible": self.invertible,
            "verdicts": self.verdicts,
            "certified": self.certified,
            "marginal": self.marginal,
        }


def _runs(mask: np.ndarray) -> list:
    runs, start = [], None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        if not m and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def _verdict(violation: np.ndarray) -> tuple[bool, bool]:
    """(passes, marginal): violations spanning fewer than 3 grid points are marginal."""
    runs = _runs(violation)
    if not runs:
        return True, False
    if all(b - a < 3 for a, b in runs):
        return True, True
    return False, False


def _trace_norms(supers: np.ndarray, X: np.ndarray) -> np.ndarray:
    d = X.shape[0]
    Y = (supers @ vec(X)).reshape(-1, d, d)
    Y = 0.5 * (Y + np.conj(np.swapaxes(Y, 1, 2)))
    return np.abs(np.linalg.eigvalsh(Y)).sum(axis=1)


def _blp_increase(supers, psi1, psi2) -> tuple[float, np.ndarray]:
    X = np.outer(psi1, psi1.conj()) - np.outer(psi2, psi2.conj())
    D = 0.5 * _trace_norms(supers, X)
    inc = np.diff(D)
    return float(np.sum(inc[inc > 1e-12])), D


def _orthogonal_pair(x: np.ndarray, d: int):
    v = x[:d] + 1j * x[d:2 * d]
    w = x[2 * d:3 * d] + 1j * x[3 * d:4 * d]
    v = v / np.linalg.norm(v)
    w = w - np.vdot(v, w) * v
    nw = np.linalg.norm(w)
    w = w / nw if nw > 1e-12 else np.roll(v, 1)
    return v, w


def divisibility_report(traj: MapTrajectory, k_list: Sequence[int] | None = None, blp_probes: int = 32,
                        seed: int = 0, p_probes: int = 16, herm_probes: int = 16, k_probes: int = 8,
                        max_points: int = 401, rate_tol: float = 1e-7, mono_tol: float = 1e-8,
                        analytic: bool = False) -> DivisibilityReport:
    """Full divisibility and non-Markovianity diagnostics of a trajectory.

    Parameters
    ----------
    traj : MapTrajectory
    k_list : sequence of int, optional
        Orders for the k-divisibility measures (default ``1..d``).
    blp_probes : int
        Random orthogonal pure-state pairs for the BLP lower bound; the best
        pairs are refined with Nelder-Mead.
    seed : int
    p_probes, herm_probes, k_probes : int
        Probe counts for P-divisibility, trace-norm monotonicity and the
        k-divisibility suprema.
    max_points : int
        Probe-based checks run on at most this many evenly spaced samples.
    rate_tol : float
        Negative-rate threshold.
    analytic : bool
        Use the analytic generator stored on the trajectory.

    Returns
    -------
    DivisibilityReport
    """
    if len(traj) < 3:
        raise ValueError("need at least 3 samples")
    rng = np.random.default_rng(seed)
    d = traj.dim
    n = len(traj)
    times = traj.times
    h = traj.grid.h
    S = traj.supers
    gt = extract_generator(traj, on_singular="nan", analytic=analytic)
    reg = gt.regular
    invertible = bool(reg.all())
    k_list = list(range(1, d + 1)) if k_list is None else sorted(k_list)
    stride = max(1, int(np.ceil(n / max_points)))
    sub = np.arange(0, n, stride)

    # (a) canonical rates and (b) RHP integrand
    gam = np.full((n, d * d - 1), np.nan)
    g = np.full(n, np.nan)
    for i in range(n):
        if reg[i]:
            C = canonical_split(gt.generators[i], tol=1e-6).kossakowski
            gam[i] = np.linalg.eigvalsh(herm(C))
            g[i] = rhp_g(gt.generators[i])
    f = np.nansum(np.maximum(-gam, 0), axis=1)
    f[~reg] = np.nan
    cross = float(np.nanmax(np.abs(d / 2 * g - f))) if reg.any() else float("nan")
    gpos = np.where(reg, g, 0.0)
    N_rhp = float(np.sum(0.5 * h * (gpos[1:] + gpos[:-1])))
    cp_pass, cp_marg = _verdict(np.where(reg, np.nanmin(np.where(np.isnan(gam), np.inf, gam), axis=1) < -rate_tol, False))

    # (c) P-divisibility probes on the generator
    probes = _standard_probes(d) + [_rand_vec(d, rng) for _ in range(p_probes)]
    probes = np.array(probes)
    pmin = np.full(n, np.nan)
    for i in sub:
        if reg[i]:
            pmin[i] = _pdiv_probe_values(gt.generators[i], probes).min()
    worst = [i for i in np.argsort(np.nan_to_num(pmin, nan=np.inf))[:3] if reg[i] and not np.isnan(pmin[i])]
    for i in worst:
        val, _ = conditional_positivity_min(gt.generators[i], probes=8, seed=seed, extra=list(probes[:6]))
        pmin[i] = min(pmin[i], val)
    viol = np.where(np.isnan(pmin), False, pmin < -rate_tol)
    pgen_pass, pgen_marg = _verdict(viol[sub])
    # trace-norm monotonicity on Hermitian probes
    mono_ok = True
    worst_inc = 0.0
    for j in range(herm_probes + d):
        if j < d:
            X = np.diag(np.eye(d)[j]) - np.eye(d) / d
        else:
            A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            X = A + A.conj().T
        tn = _trace_norms(S, X)
        inc = float(np.max(np.diff(tn)) / max(tn[0], 1e-300))
        worst_inc = max(worst_inc, inc)
    mono_ok = worst_inc <= mono_tol
    p_pass = pgen_pass and mono_ok

    # (d) BLP lower bound
    pairs = []
    for _ in range(blp_probes):
        x = rng.normal(size=4 * d)
        pairs.append(x)
    S_sub = S[sub]
    scored = sorted(((_blp_increase(S_sub, *_orthogonal_pair(x, d))[0], j) for j, x in enumerate(pairs)),
                    reverse=True)
    best_val, best_x = scored[0][0], pairs[scored[0][1]]
    for val, j in scored[:2]:
        if val <= 0:
            break
        res = minimize(lambda x: -_blp_increase(S_sub, *_orthogonal_pair(x, d))[0], pairs[j],
                       method="Nelder-Mead", options={"maxiter": 400, "xatol": 1e-8, "fatol": 1e-12})
        if -res.fun > best_val:
            best_val, best_x = float(-res.fun), res.x
    N_blp, D_best = _blp_increase(S, *_orthogonal_pair(best_x, d))
    sigma = np.gradient(D_best, h)

    # k-divisibility measures (probe lower bounds, running max over k)
    N_k = {}
    running = 0.0
    for k in k_list:
        best = 0.0
        cand = [None] + list(range(k_probes))
        for c in cand:
            if c is None:
                if k != d:
                    continue
                psi = vec(np.eye(d)) / np.sqrt(d)
            else:
                psi = rng.normal(size=k * d) + 1j * rng.normal(size=k * d)
            vals = np.array([g_k(gt.generators[i], psi, k) if reg[i] else 0.0 for i in sub])
            tt = times[sub]
            best = max(best, float(np.sum(0.5 * np.diff(tt) * (vals[1:] + vals[:-1]))))
        running = max(running, best)
        N_k[k] = running

    # (e) kernel inclusion for non-invertible maps
    ker_ok = True
    for i in range(n):
        if _kernel_dim(S[i]) > 0:
            ns = la.null_space(S[i], rcond=1e-10)
            nrm = np.linalg.norm(S[i + 1:] @ ns, axis=(1, 2)) if i + 1 < n else np.zeros(1)
            if nrm.size and nrm.max() > 1e-6:
                ker_ok = False
                break

    # (f) volume
    vol = np.abs(np.array([np.linalg.det(X) for X in S]))
    vol_ok = bool(np.all(np.diff(vol) <= 1e-10 + 1e-8 * vol[:-1]))
    smin = np.array([la.svdvals(X)[-1] for X in S])

    verdicts = {
        "cp_divisible": bool(cp_pass and ker_ok),
        "p_divisible": bool(p_pass and ker_ok),
        "blp_monotone": bool(N_blp <= 1e-8),
        "kernel_nonincreasing": bool(ker_ok),
        "volume_nonincreasing": vol_ok,
        "p_generator_probes": bool(pgen_pass),
        "trace_norm_monotone": bool(mono_ok),
    }
    certified = {
        "cp_divisible": invertible,
        "p_divisible": bool(invertible and not p_pass),
        "blp_monotone": bool(N_blp > 1e-8),
        "kernel_nonincreasing": True,
    }
    marginal = {"cp_divisible": cp_marg, "p_divisible": pgen_marg}
    return DivisibilityReport(times, gam, g, f, cross, pmin, sigma, D_best, N_rhp, float(N_blp), N_k, vol,
                              smin, verdicts, certified, marginal, invertible, gt.cond)


def write_report_csv(report: DivisibilityReport, path) -> None:
    """CSV with columns ``t, gamma_1.., g, det, sigma_min`` and verdict flags."""
    ng = report.gammas.shape[1]
    header = ["t"] + [f"gamma_{k + 1}" for k in range(ng)] + ["g", "det", "sigma_min"] + \
        [f"verdict_{k}" for k in sorted(report.verdicts)]
    flags = [int(report.verdicts[k]) for k in sorted(report.verdicts)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(report.times):
            row = [t, *report.gammas[i], report.g[i], report.volume[i], report.sigma_min[i]]
            w.writerow(["%.12e" % v for v in row] + flags)


# ---------------------------------------------------------------------------
# propagators

@dataclass
class PropagatorResult:
    map: LinearMap
    residual: float
    cond: float
    certified: bool
    alarm: bool


def propagator(traj: MapTrajectory, t: float, s: float, restrict: bool = False,
               cond_max: float = 1e8, cond_alarm: float = 1e6) -> PropagatorResult:
    """Intermediate map ``V_{t,s} = Lambda_t Lambda_s^{-1}``.

    With ``restrict`` a singular ``Lambda_s`` is handled by the
    Moore-Penrose inverse on its image; the result is then flagged
    uncertified.  ``alarm`` is set when ``cond(Lambda_s) > cond_alarm``.
    """
    if s > t:
        raise ValueError("propagator requires s <= t")
    Lt = traj.supers[traj.grid.index(t)]
    Ls = traj.supers[traj.grid.index(s)]
    c = float(np.linalg.cond(Ls))
    if c >= cond_max:
        if not restrict:
            raise SingularIntermediate(f"Lambda_s singular at s={s:.6g} (cond {c:.3e}); "
                                       "pass restrict=True to use the image restriction")
        V = Lt @ la.pinv(Ls)
        certified = False
    else:
        V = la.solve(Ls.T, Lt.T).T
        certified = True
    res = float(np.abs(V @ Ls - Lt).max())
    return PropagatorResult(LinearMap(V), res, c, certified, c > cond_alarm)
