"""Generators of quantum dynamical semigroups and time-local evolutions.

A generator is handled as a ``d**2 x d**2`` superoperator (row stacking, see
:mod:`odk.repcore`). The canonical GKLS form is

    L(rho) = -i[H, rho] + sum_kl C_kl (F_k rho F_l^dag - 1/2 {F_l^dag F_k, rho})

with ``{F_k}`` the traceless generalized Gell-Mann basis of
:func:`odk.repcore.gellmann_basis`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from .errors import (
    DetailedBalanceViolated,
    NonPSDSpectralData,
    NotHermiticityPreserving,
    SingularSteadyState,
    TraceNotAnnihilated,
)
from .repcore import (
    LinearMap,
    PAULI,
    gellmann_basis,
    hermitian_basis,
    herm,
    random_unitary,
    spost,
    spre,
    sprepost,
    super_to_choi,
    unvec,
    vec,
)

__all__ = [
    "GKLSGenerator",
    "GeneratorVerdict",
    "SpectralReport",
    "TiltedGenerator",
    "lindblad_super",
    "gkls_super",
    "pauli_generator",
    "random_gkls",
    "jordan_example",
    "canonical_split",
    "classify_generator",
    "conditional_positivity_min",
    "ccp_matrix",
    "spectral_report",
    "rate_bound_check",
    "detailed_balance_check",
    "davies_build",
    "thermal_state",
    "tilted_super",
    "tilted_scgf",
    "bloch_generator",
]


def _as_array(gen) -> np.ndarray:
    if isinstance(gen, GKLSGenerator):
        return gen.super
    if isinstance(gen, LinearMap):
        return gen.super
    return np.asarray(gen, dtype=complex)


def lindblad_super(H: np.ndarray | None, jumps: Sequence[np.ndarray] = (),
                   rates: Sequence[float] | None = None) -> np.ndarray:
    """Superoperator of ``-i[H,.] + sum_k r_k (L_k . L_k^dag - 1/2{L_k^dag L_k, .})``."""
    if H is None:
        d = np.asarray(jumps[0]).shape[0]
        H = np.zeros((d, d))
    H = np.asarray(H, dtype=complex)
    d = H.shape[0]
    S = -1j * (spre(H) - spost(H))
    rates = np.ones(len(jumps)) if rates is None else rates
    for r, L in zip(rates, jumps):
        L = np.asarray(L, dtype=complex)
        LdL = L.conj().T @ L
        S = S + r * (sprepost(L, L.conj().T) - 0.5 * spre(LdL) - 0.5 * spost(LdL))
    return S


def gkls_super(H: np.ndarray, C: np.ndarray, basis: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Superoperator of the canonical form with Kossakowski matrix ``C``."""
    H = np.asarray(H, dtype=complex)
    d = H.shape[0]
    F = gellmann_basis(d) if basis is None else list(basis)
    S = -1j * (spre(H) - spost(H))
    C = np.asarray(C, dtype=complex)
    for k, Fk in enumerate(F):
        for l, Fl in enumerate(F):
            c = C[k, l]
            if c == 0:
                continue
            FlF = Fl.conj().T @ Fk
            S = S + c * (sprepost(Fk, Fl.conj().T) - 0.5 * spre(FlF) - 0.5 * spost(FlF))
    return S


_PAULI_DISS = np.array([0.5 * (sprepost(PAULI[k], PAULI[k]) - np.eye(4)) for k in "XYZ"])


def pauli_generator(gammas: Sequence[float], H: np.ndarray | None = None) -> np.ndarray:
    """Qubit ``1/2 sum_k gamma_k (s_k rho s_k - rho)`` plus optional Hamiltonian."""
    S = np.tensordot(np.asarray(gammas, dtype=float), _PAULI_DISS, axes=1)
    if H is not None:
        S = S - 1j * (spre(H) - spost(H))
    return S


@dataclass
class GKLSGenerator:
    """Hamiltonian plus Kossakowski matrix in the Gell-Mann basis."""

    hamiltonian: np.ndarray
    kossakowski: np.ndarray
    rates: np.ndarray = None
    jumps: list = None

    def __post_init__(self):
        self.hamiltonian = np.asarray(self.hamiltonian, dtype=complex)
        self.kossakowski = np.asarray(self.kossakowski, dtype=complex)
        if self.rates is None:
            w, U = np.linalg.eigh(herm(self.kossakowski))
            F = gellmann_basis(self.dim)
            self.rates = w
            self.jumps = [sum(U[k, j] * F[k] for k in range(len(F))) for j in range(len(w))]

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def super(self) -> np.ndarray:
        return gkls_super(self.hamiltonian, self.kossakowski)

    def to_map(self) -> LinearMap:
        return LinearMap(self.super)

    def is_gkls(self, tol: float = 1e-10) -> bool:
        return bool(np.linalg.eigvalsh(herm(self.kossakowski)).min() >= -tol)


def jordan_example(gamma: float = 1.0, omega: float = 1.0) -> np.ndarray:
    """Qubit generator with a non-trivial Jordan block at ``gamma = omega``.

    ``-i(omega/2)[s_x, rho] + gamma (s_z rho s_z - rho)`` has spectrum
    ``{0, -2 gamma, -gamma -+ sqrt(gamma**2 - omega**2)}``.
    """
    return lindblad_super(0.5 * omega * PAULI["X"], [PAULI["Z"]], [gamma])


def random_gkls(d: int, rng=None, unital: bool = False, scale: float = 1.0,
                hamiltonian: bool = True) -> np.ndarray:
    """Random GKLS superoperator.

    Non-unital: random PSD Kossakowski matrix. Unital: positive combination
    of Hermitian and unitary jump operators.
    """
    rng = np.random.default_rng(rng)
    H = np.zeros((d, d), dtype=complex)
    if hamiltonian:
        G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        H = herm(G)
    if not unital:
        n = d * d - 1
        G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        C = scale * G @ G.conj().T / n
        return gkls_super(H, C)
    jumps, rates = [], []
    for _ in range(d * d):
        G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        jumps.append(herm(G))
        rates.append(scale * rng.uniform(0, 1))
    for _ in range(2):
        jumps.append(random_unitary(d, rng))
        rates.append(scale * rng.uniform(0, 1))
    return lindblad_super(H, jumps, rates)


# ---------------------------------------------------------------------------
# canonical form

def _check_trace_annihilating(S: np.ndarray, tol: float) -> int:
    d = int(round(np.sqrt(S.shape[0])))
    # Tr L(X) = vec(1)^T S vec(X)
    res = np.max(np.abs(vec(np.eye(d)) @ S))
    if res > tol:
        raise TraceNotAnnihilated(f"Tr L(X) != 0 (residual {res:.3e})")
    return d


def canonical_split(gen, tol: float = 1e-9) -> GKLSGenerator:
    """Hamiltonian and Kossakowski matrix of a trace annihilating generator.

    The full coefficient matrix ``c_ab = <F_a (x) F_b^*, S>`` in the basis
    with ``F_0 = 1/sqrt(d)`` is computed; ``C = c[1:, 1:]`` and the
    Hamiltonian is fixed in the traceless gauge by
    ``H = i/(2 sqrt d) sum_k (c_k0 - c_0k) F_k``.
    """
    S = _as_array(gen)
    d = _check_trace_annihilating(S, tol)
    Ch = super_to_choi(S)
    if np.max(np.abs(Ch - Ch.conj().T)) > tol:
        raise NotHermiticityPreserving("generator does not preserve Hermiticity")
    F = hermitian_basis(d)
    n = d * d
    B = np.array([vec(Fa) for Fa in F])  # rows vec(F_a)
    # S = sum_ab c_ab F_a (x) F_b^*  ->  c_ab = vec(F_a)^dag . reshaped S . vec(F_b)
    S4 = S.reshape(d, d, d, d)  # [a, b, i, j] = <a|L(|i><j|)|b>
    # F_a (x) F_b^* has entries F_a[a,i] conj(F_b[b,j])
    c = np.einsum("xai,ybj,abij->xy", B.reshape(n, d, d).conj(), B.reshape(n, d, d), S4)
    c = herm(c)
    C = c[1:, 1:]
    H = sum(1j / (2 * np.sqrt(d)) * (c[k, 0] - c[0, k]) * F[k] for k in range(1, n))
    H = herm(H) if n > 1 else np.zeros((d, d), dtype=complex)
    return GKLSGenerator(H, C)


def ccp_matrix(gen) -> np.ndarray:
    """Projected operator ``(1 - P+)(id (x) L)(P+)(1 - P+)``.

    Uses the normalised maximally entangled projector; its eigenvalues are
    ``gamma_k / d`` for the canonical rates.
    """
    S = _as_array(gen)
    d = int(round(np.sqrt(S.shape[0])))
    C = super_to_choi(S)
    psi = vec(np.eye(d)) / np.sqrt(d)
    Q = np.eye(d * d) - np.outer(psi, psi.conj())
    return herm(Q @ C @ Q)


def conditional_positivity_min(gen, probes: int = 64, seed: int = 0,
                               extra: Sequence[np.ndarray] = ()) -> tuple[float, np.ndarray]:
    """Minimum of ``<q|L(P)|q>`` over rank-1 ``P`` and unit ``q`` orthogonal to ``P``.

    Returns the value and the minimising projector. Random probes are
    refined by Nelder-Mead on the Bloch-sphere-like parameterisation.
    """
    S = _as_array(gen)
    d = int(round(np.sqrt(S.shape[0])))
    rng = np.random.default_rng(seed)

    def value(psi):
        psi = psi / np.linalg.norm(psi)
        P = np.outer(psi, psi.conj())
        LP = unvec(S @ vec(P), d)
        Qb = la.null_space(psi.conj()[None, :])
        return float(np.linalg.eigvalsh(herm(Qb.conj().T @ LP @ Qb)).min())

    starts = [np.asarray(v, dtype=complex) for v in extra]
    for _ in range(probes):
        starts.append(rng.normal(size=d) + 1j * rng.normal(size=d))
    vals = [(value(v), v) for v in starts]
    vals.sort(key=lambda x: x[0])
    best_val, best_v = vals[0]

    def obj(x):
        v = x[:d] + 1j * x[d:]
        if np.linalg.norm(v) < 1e-12:
            return 1e3
        return value(v)

    for val, v in vals[:3]:
        x0 = np.concatenate([v.real, v.imag])
        res = minimize(obj, x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        if res.fun < best_val:
            best_val = float(res.fun)
            best_v = res.x[:d] + 1j * res.x[d:]
    best_v = best_v / np.linalg.norm(best_v)
    return best_val, np.outer(best_v, best_v.conj())


@dataclass
class GeneratorVerdict:
    trace_annihilating: bool
    conditionally_positive: dict
    ccp: dict
    gkls: bool
    min_kossakowski_eig: float

    def as_dict(self) -> dict:
        return {
            "trace_annihilating": self.trace_annihilating,
            "conditionally_positive": self.conditionally_positive,
            "ccp": self.ccp,
            "gkls": self.gkls,
            "min_kossakowski_eig": self.min_kossakowski_eig,
        }


_QUBIT_PROBES = (
    np.array([1, 0], dtype=complex),
    np.array([1, 1], dtype=complex) / np.sqrt(2),
    np.array([1, 1j], dtype=complex) / np.sqrt(2),
)


def classify_generator(gen, probes: int = 64, seed: int = 0, tol: float = 1e-10) -> GeneratorVerdict:
    """GKLS, conditional complete positivity and conditional positivity checks."""
    S = _as_array(gen)
    _check_trace_annihilating(S, 1e-9)
    d = int(round(np.sqrt(S.shape[0])))
    g = canonical_split(S)
    min_c = float(np.linalg.eigvalsh(herm(g.kossakowski)).min()) if d > 1 else 0.0
    # the projected operator always has a zero eigenvalue along psi+
    w = np.linalg.eigvalsh(ccp_matrix(S))
    ccp_ok = bool(w.min() >= -tol)
    extra = _QUBIT_PROBES if d == 2 else ()
    cp_min, _ = conditional_positivity_min(S, probes=probes, seed=seed, extra=extra)
    return GeneratorVerdict(
        trace_annihilating=True,
        conditionally_positive={"certified_violation": bool(cp_min < -tol), "min_value": cp_min},
        ccp={"ccp": ccp_ok, "min_eig": float(w.min())},
        gkls=bool(min_c >= -tol),
        min_kossakowski_eig=min_c,
    )


# ---------------------------------------------------------------------------
# spectra

def bloch_generator(gen) -> np.ndarray:
    """Matrix ``M_ab = Tr(F_a L(F_b))`` in the Hermitian basis with ``F_0 = 1/sqrt(d)``."""
    S = _as_array(gen)
    d = int(round(np.sqrt(S.shape[0])))
    A = np.array([vec(F) for F in hermitian_basis(d)]).T
    return A.conj().T @ S @ A


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    relaxation_rates: np.ndarray
    frequencies: np.ndarray
    jordan_blocks: list
    steady_states: list
    peripheral: np.ndarray


def _rank(A: np.ndarray, tol: float) -> int:
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > tol))


def spectral_report(gen, cluster_tol: float = 1e-7) -> SpectralReport:
    """Eigenvalues, Jordan structure and steady states of a generator.

    Eigenvalues within ``cluster_tol`` are grouped; each group is replaced
    by its mean (which is accurate even when a defective eigenvalue is
    split by rounding) and its Jordan block sizes are obtained from the
    ranks of powers of ``S - lambda``.
    """
    S = _as_array(gen)
    n = S.shape[0]
    d = int(round(np.sqrt(n)))
    ev = np.linalg.eigvals(S)
    order = np.lexsort((ev.imag, ev.real))
    ev = ev[order]
    clusters: list[list[complex]] = []
    for z in ev:
        for c in clusters:
            if abs(np.mean(c) - z) < cluster_tol:
                c.append(z)
                break
        else:
            clusters.append([z])
    # second pass: defective eigenvalues split as ~sqrt(eps); merge close means
    merged = True
    while merged:
        merged = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if abs(np.mean(clusters[i]) - np.mean(clusters[j])) < cluster_tol:
                    clusters[i] += clusters.pop(j)
                    merged = True
                    break
            if merged:
                break
    scale = max(1.0, np.linalg.norm(S, 2))
    rtol = 1e-7 * scale
    eigs, blocks = [], []
    for c in clusters:
        lam = np.mean(c)
        if abs(lam.imag) < 1e-12:
            lam = complex(lam.real, 0.0)
        if abs(lam.real) < 1e-12:
            lam = complex(0.0, lam.imag)
        m = len(c)
        eigs += [lam] * m
        A = S - lam * np.eye(n)
        ranks = [n]
        P = np.eye(n)
        for _ in range(m):
            P = P @ A
            ranks.append(_rank(P, rtol))
        # number of blocks of size >= k is ranks[k-1] - ranks[k]
        ge = [ranks[k - 1] - ranks[k] for k in range(1, m + 1)] + [0]
        for k in range(1, m + 1):
            cnt = ge[k - 1] - ge[k]
            for _ in range(cnt):
                blocks.append((lam, k))
    eigs = np.array(eigs)
    # steady states: kernel of S, Hermitised and trace normalised where possible
    u, s, vh = np.linalg.svd(S)
    null = vh[s < rtol].conj()
    steady = []
    for v in null:
        X = unvec(v, d)
        X = herm(X * np.exp(-1j * np.angle(np.trace(X)))) if abs(np.trace(X)) > 1e-10 else herm(X)
        tr = np.trace(X).real
        steady.append(X / tr if abs(tr) > 1e-10 else X)
    return SpectralReport(
        eigenvalues=eigs,
        relaxation_rates=-eigs.real,
        frequencies=-eigs.imag,
        jordan_blocks=blocks,
        steady_states=steady,
        peripheral=np.abs(eigs.real) < 1e-9,
    )


def rate_bound_check(gen, unital: bool | None = None, tol: float = 1e-8) -> dict:
    """Relaxation-rate bounds on the traceless sector.

    Qubit: ``2 Gamma_k <= Gamma``. Unital (or when ``unital`` is true):
    ``R_a = Gamma_a / Gamma <= 1/d``. ``Gamma`` is the sum of all
    ``d**2 - 1`` rates ``Gamma_a = -Re l_a``.
    """
    S = _as_array(gen)
    d = int(round(np.sqrt(S.shape[0])))
    M = bloch_generator(S)
    ev = np.linalg.eigvals(M[1:, 1:])
    G = -ev.real
    total = G.sum()
    if unital is None:
        unital = bool(np.allclose(S @ vec(np.eye(d)), 0, atol=1e-10))
    out = {"rates": G, "total": total, "unital": unital}
    R = G / total if total > 0 else np.zeros_like(G)
    out["R"] = R
    passes = True
    if d == 2:
        out["qubit_bound"] = bool(np.all(2 * G <= total + tol))
        passes &= out["qubit_bound"]
    if unital:
        out["unital_bound"] = bool(np.all(G <= total / d + tol))
        passes &= out["unital_bound"]
    out["pass"] = bool(passes)
    return out


# ---------------------------------------------------------------------------
# detailed balance and Davies generators

def detailed_balance_check(gen, rho_ss: np.ndarray) -> dict:
    """Quantum detailed balance diagnostics with respect to ``rho_ss``.

    ``self_dual_residual`` measures how far the antisymmetric part
    ``(L^dag - tilde(L^dag))/2`` is from a commutator ``i[H, .]``, the
    tilde being the dual in the ``Tr(rho_ss X^dag Y)`` inner product,
    ``tilde(Psi)(X) = Psi^dag(X rho) rho^{-1}``.
    """
    S = _as_array(gen)
    rho = np.asarray(rho_ss, dtype=complex)
    d = rho.shape[0]
    w = np.linalg.eigvalsh(herm(rho))
    if w.min() <= 1e-14 * max(1.0, w.max()):
        raise SingularSteadyState("steady state is not full rank")
    rinv = np.linalg.inv(rho)
    steady_res = float(np.max(np.abs(S @ vec(rho))))
    Ldag = S.conj().T
    Ltilde = spost(rinv) @ S @ spost(rho)
    A = 0.5 * (Ldag - Ltilde)
    F = hermitian_basis(d)
    cols = [vec(1j * (spre(Fa) - spost(Fa))) for Fa in F]
    Bm = np.array(cols).T
    rhs = vec(A)
    Breal = np.vstack([Bm.real, Bm.imag])
    coef, *_ = np.linalg.lstsq(Breal, np.concatenate([rhs.real, rhs.imag]), rcond=None)
    resid = float(np.max(np.abs(Bm @ coef - rhs)))
    Delta = sprepost(rho, rinv)
    comm = float(np.max(np.abs(S @ Delta - Delta @ S)))
    return {
        "is_steady": steady_res < 1e-9,
        "steady_residual": steady_res,
        "self_dual_residual": resid,
        "delta_commutes": comm,
        "detailed_balance": steady_res < 1e-9 and resid < 1e-9 and comm < 1e-9,
    }


def thermal_state(H: np.ndarray, beta: float) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    w, U = np.linalg.eigh(herm(H))
    p = np.exp(-beta * (w - w.min()))
    p /= p.sum()
    return (U * p) @ U.conj().T


def _energy_levels(H: np.ndarray, tol: float):
    w, U = np.linalg.eigh(herm(np.asarray(H, dtype=complex)))
    levels, projs = [], []
    i = 0
    while i < len(w):
        j = i
        while j + 1 < len(w) and abs(w[j + 1] - w[i]) < tol:
            j += 1
        V = U[:, i:j + 1]
        levels.append(float(np.mean(w[i:j + 1])))
        projs.append(V @ V.conj().T)
        i = j + 1
    return np.array(levels), projs


def davies_build(H_S: np.ndarray, couplings: Sequence[np.ndarray],
                 gamma: Callable[[float], np.ndarray],
                 s: Callable[[float], np.ndarray] | None = None,
                 tol: float = 1e-9, beta: float | None = None) -> GKLSGenerator:
    """Davies generator assembled from Bohr-frequency spectral data.

    Jump operators ``A_a(w) = sum_{e_n - e_m = w} P_m A_a P_n`` lower the
    energy by ``w``. The dissipator is
    ``sum_w sum_ab gamma_ab(w) (A_b(w) rho A_a(w)^dag - 1/2{A_a^dag A_b, rho})``
    and the Lamb shift ``H_LS = sum_w sum_ab s_ab(w) A_a(w)^dag A_b(w)``.

    Parameters
    ----------
    gamma, s : callables
        ``omega -> (n, n)`` matrices for ``n`` coupling operators. ``gamma``
        must be Hermitian PSD at every Bohr frequency.
    beta : float, optional
        If given, the KMS relation ``gamma(-w) = exp(-beta w) gamma(w).T`` is
        checked and a warning is issued when it fails.
    """
    H_S = np.asarray(H_S, dtype=complex)
    d = H_S.shape[0]
    A = [np.asarray(a, dtype=complex) for a in couplings]
    levels, projs = _energy_levels(H_S, tol)
    freqs = []
    pairs = []
    for m, em in enumerate(levels):
        for n_, en in enumerate(levels):
            pairs.append((en - em, m, n_))
    for w, _, _ in sorted(pairs):
        if not freqs or abs(w - freqs[-1]) > tol:
            if freqs and abs(w - freqs[-1]) < 1e3 * tol:
                warnings.warn("DegenerateFrequencyClustering: Bohr gaps close to tolerance")
            freqs.append(w)
    Aw = {}
    for w in freqs:
        ops = []
        for a in A:
            X = np.zeros((d, d), dtype=complex)
            for wp, m, n_ in pairs:
                if abs(wp - w) <= tol:
                    X += projs[m] @ a @ projs[n_]
            ops.append(X)
        Aw[w] = ops
    S = -1j * (spre(H_S) - spost(H_S))
    H_LS = np.zeros((d, d), dtype=complex)
    for w in freqs:
        g = np.atleast_2d(np.asarray(gamma(w), dtype=complex))
        if np.max(np.abs(g - g.conj().T)) > 1e-10 or np.linalg.eigvalsh(herm(g)).min() < -1e-10:
            raise NonPSDSpectralData(f"gamma({w:g}) is not Hermitian PSD")
        if beta is not None:
            gm = np.atleast_2d(np.asarray(gamma(-w), dtype=complex))
            if not np.allclose(gm, np.exp(-beta * w) * g.T, atol=1e-9):
                warnings.warn(f"KMS relation fails at omega={w:g}")
        ops = Aw[w]
        for a_ in range(len(A)):
            for b_ in range(len(A)):
                c = g[a_, b_]
                if c == 0:
                    continue
                Ab, Aa = ops[b_], ops[a_]
                AdA = Aa.conj().T @ Ab
                S = S + c * (sprepost(Ab, Aa.conj().T) - 0.5 * spre(AdA) - 0.5 * spost(AdA))
        if s is not None:
            sm = np.atleast_2d(np.asarray(s(w), dtype=complex))
            for a_ in range(len(A)):
                for b_ in range(len(A)):
                    H_LS += sm[a_, b_] * ops[a_].conj().T @ ops[b_]
    if s is not None:
        H_LS = herm(H_LS)
        S = S - 1j * (spre(H_LS) - spost(H_LS))
    gen = canonical_split(S)
    gen.bohr_frequencies = np.array(freqs)
    gen.lamb_shift = H_LS
    gen.full_super = S
    return gen


# ---------------------------------------------------------------------------
# tilted generators and counting statistics

@dataclass
class TiltedGenerator:
    generators: list
    references: list
    chi: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _mpow(rho: np.ndarray, a: float) -> np.ndarray:
    w, U = np.linalg.eigh(herm(rho))
    return (U * w ** a) @ U.conj().T


def tilted_super(generators: Sequence, references: Sequence[np.ndarray], chi: Sequence[float]) -> np.ndarray:
    """``L_chi(rho) = sum_j L_j(rho rho_j^chi_j) rho_j^-chi_j``."""
    S = 0
    for Lj, rj, c in zip(generators, references, chi):
        Lj = _as_array(Lj)
        S = S + spost(_mpow(rj, -c)) @ Lj @ spost(_mpow(rj, c))
    return S


def tilted_scgf(tg: TiltedGenerator, chi_box: Sequence[tuple] | None = None, n_grid: int = 201,
                t_probe: float = 1.0, check_db: bool = True, sign: int = -1) -> dict:
    """Scaled cumulant generating function and its Legendre transform.

    ``lambda(chi)`` is the largest real part in the spectrum of the tilted
    generator. The rate function is evaluated by a grid supremum
    ``I(x) = sup_chi (sign * x . chi - lambda(chi))``. With the counting
    convention ``Tr exp(t L_chi) rho = E[exp(-t x . chi)]`` the consistent
    choice is ``sign = -1`` (the default).
    """
    n = len(tg.generators)
    if check_db:
        for Lj, rj in zip(tg.generators, tg.references):
            rep = detailed_balance_check(Lj, rj)
            if not rep["detailed_balance"]:
                raise DetailedBalanceViolated("a (generator, reference) pair fails detailed balance")

    def lam(chi):
        ev = np.linalg.eigvals(tilted_super(tg.generators, tg.references, np.atleast_1d(chi)))
        top = ev.real.max()
        if np.sum(np.abs(ev.real - top) < 1e-9) > 1:
            warnings.warn("NonSimpleLeadingEigenvalue")
        return float(top)

    chi = np.atleast_1d(np.asarray(tg.chi, dtype=float)) if len(np.atleast_1d(tg.chi)) == n else np.zeros(n)
    out = {"lambda_chi": lam(chi)}
    Lc = tilted_super(tg.generators, tg.references, chi)
    Et = la.expm(t_probe * Lc)
    out["cp_at_probe"] = bool(np.linalg.eigvalsh(herm(super_to_choi(Et))).min() >= -1e-9)
    if chi_box is None:
        chi_box = [(-2.0, 2.0)] * n
    axes = [np.linspace(a, b, n_grid if n == 1 else max(21, int(n_grid ** (1 / n)))) for a, b in chi_box]
    mesh = np.array(np.meshgrid(*axes, indexing="ij")).reshape(n, -1).T
    lam_vals = np.array([lam(c) for c in mesh])
    out["chi_grid"] = mesh
    out["lambda_grid"] = lam_vals

    def legendre(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(np.max(sign * mesh @ x - lam_vals))

    out["legendre"] = legendre
    return out
