"""Closed-form model zoo.

Every model returns a :class:`ModelResult` holding an analytic trajectory,
an analytic time-local generator ``t -> superoperator`` and model-specific
data (rates, populations, decoherence functions, classifier verdicts).

Qubit models use ``|0> = g`` (ground) and ``|1> = e`` (excited), with
``sigma_+ = |e><g|`` and ``sigma_z = |e><e| - |g><g|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
from scipy.integrate import cumulative_simpson, quad

from .dynamics import MapTrajectory, propagate
from .errors import (
    BadWeights,
    CPViolated,
    InvalidRates,
    NonPrimeDimension,
    NonPSDDecoherence,
    SingularA,
    ZeroDenominator,
)
from .generators import canonical_split
from .quadrature import volterra_ide
from .repcore import PAULI, herm, spost, spre, sprepost
from .timegrid import TimeGrid, as_grid, cumtrapz

SIGMA_P = np.array([[0, 0], [1, 0]], dtype=complex)  # |e><g|
SIGMA_M = SIGMA_P.T.copy()
SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)


# ---------------------------------------------------------------------------
# rate functions

@dataclass(frozen=True)
class RateFunction:
    """Scalar rate ``gamma(t)`` with a closed-form integral where available.

    ``kind`` is one of ``const``, ``tanh`` (``amp tanh(rate t)``), ``exp``
    (``amp e^{-rate t}``), ``cos`` (``amp cos(freq t)``), ``sin``, ``poly``
    (``sum_k coeffs[k] t^k``) or ``callable``.
    """

    kind: str = "const"
    amp: float = 0.0
    rate: float = 1.0
    coeffs: tuple = ()
    func: Callable | None = None

    def __call__(self, t):
        t = np.asarray(t, float)
        k = self.kind
        if k == "const":
            return self.amp + 0 * t
        if k == "tanh":
            return self.amp * np.tanh(self.rate * t)
        if k == "exp":
            return self.amp * np.exp(-self.rate * t)
        if k == "cos":
            return self.amp * np.cos(self.rate * t)
        if k == "sin":
            return self.amp * np.sin(self.rate * t)
        if k == "poly":
            return np.polyval(list(self.coeffs)[::-1], t) + 0 * t
        return np.vectorize(lambda s: float(self.func(s)))(t) if np.ndim(t) else float(self.func(float(t)))

    def integral(self, t):
        """``int_0^t gamma``."""
        t = np.asarray(t, float)
        k = self.kind
        if k == "const":
            return self.amp * t
        if k == "tanh":
            x = self.rate * t
            # log cosh without overflow
            return self.amp / self.rate * (np.abs(x) + np.log1p(np.exp(-2 * np.abs(x))) - np.log(2))
        if k == "exp":
            return self.amp / self.rate * (1 - np.exp(-self.rate * t))
        if k == "cos":
            return self.amp / self.rate * np.sin(self.rate * t)
        if k == "sin":
            return self.amp / self.rate * (1 - np.cos(self.rate * t))
        if k == "poly":
            c = np.asarray(self.coeffs, float)
            return sum(ck * t ** (j + 1) / (j + 1) for j, ck in enumerate(c)) + 0 * t
        ts = np.atleast_1d(t)
        out = np.empty(ts.shape)
        prev, acc = 0.0, 0.0
        for i, tt in enumerate(ts):
            acc += quad(lambda s: float(self.func(s)), prev, tt, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            prev = tt
            out[i] = acc
        return out.reshape(t.shape) if np.ndim(t) else float(out[0])


def make_rate(spec) -> RateFunction:
    """Rate function from a number, callable, dict or :class:`RateFunction`."""
    if isinstance(spec, RateFunction):
        return spec
    if callable(spec):
        return RateFunction("callable", func=spec)
    if isinstance(spec, (int, float)):
        return RateFunction("const", float(spec))
    if isinstance(spec, dict):
        kind = spec.get("type", "const")
        if kind not in ("const", "tanh", "exp", "cos", "sin", "poly"):
            raise ValueError(f"unknown rate type {kind!r}")
        return RateFunction(kind, float(spec.get("amp", spec.get("value", 0.0))),
                            float(spec.get("rate", spec.get("freq", 1.0))), tuple(spec.get("coeffs", ())))
    raise TypeError(f"cannot build a rate function from {spec!r}")


@dataclass
class ModelResult:
    name: str
    trajectory: MapTrajectory
    generator: Callable
    data: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)


def _hamiltonian_super(H):
    return -1j * (spre(H) - spost(H))


# ---------------------------------------------------------------------------
# Pauli, Weyl and generalized Pauli families

def weyl_operators(d: int) -> list:
    """``U_{kl} = sum_m omega^{l m} |k+m><m|`` ordered by ``alpha = k d + l``."""
    w = np.exp(2j * np.pi / d)
    out = []
    for k in range(d):
        for l in range(d):
            U = np.zeros((d, d), dtype=complex)
            for m in range(d):
                U[(k + m) % d, m] = w ** (l * m)
            out.append(U)
    return out


def _is_prime(d: int) -> bool:
    return d >= 2 and all(d % p for p in range(2, int(np.sqrt(d)) + 1))


def mub_bases(d: int) -> list:
    """Complete set of ``d + 1`` mutually unbiased bases for prime ``d``.

    Each basis is a unitary whose columns are the basis vectors; the first
    is the computational basis.
    """
    if not _is_prime(d):
        raise NonPrimeDimension(f"MUB construction requires prime d, got {d}")
    if d == 2:
        s = 1 / np.sqrt(2)
        return [np.eye(2, dtype=complex), np.array([[s, s], [s, -s]], dtype=complex),
                np.array([[s, s], [1j * s, -1j * s]], dtype=complex)]
    w = np.exp(2j * np.pi / d)
    k = np.arange(d)
    bases = [np.eye(d, dtype=complex)]
    for a in range(d):
        B = np.array([[w ** ((a * kk * kk + j * kk) % d) for j in range(d)] for kk in k]) / np.sqrt(d)
        bases.append(B)
    return bases


def mub_channels(d: int) -> list:
    """Superoperators of ``Phi_alpha(rho) = sum_k P^alpha_k rho P^alpha_k``."""
    out = []
    for B in mub_bases(d):
        S = np.zeros((d * d, d * d), dtype=complex)
        for j in range(d):
            P = np.outer(B[:, j], B[:, j].conj())
            S += sprepost(P, P)
        out.append(S)
    return out


@dataclass
class PauliFamilySpec:
    """``kind`` in {"qubit-pauli", "weyl", "generalized-pauli-mub"}; one rate per channel.

    qubit-pauli: 3 rates in ``1/2 sum gamma_k (s_k . s_k - .)``;
    weyl: ``d^2 - 1`` rates in ``sum gamma_a (U_a . U_a^dag - .)``;
    generalized-pauli-mub: ``d + 1`` rates in ``sum gamma_a (Phi_a - id)``.
    """

    kind: str
    dim: int
    rates: Sequence

    def __post_init__(self):
        self.rates = [make_rate(r) for r in self.rates]
        need = {"qubit-pauli": 3, "weyl": self.dim ** 2 - 1, "generalized-pauli-mub": self.dim + 1}
        if self.kind not in need:
            raise ValueError(f"unknown Pauli-family kind {self.kind!r}")
        if self.kind == "qubit-pauli" and self.dim != 2:
            raise ValueError("qubit-pauli requires dim 2")
        if self.kind == "generalized-pauli-mub" and not _is_prime(self.dim):
            raise NonPrimeDimension(f"MUB kind requires prime d, got {self.dim}")
        if len(self.rates) != need[self.kind]:
            raise ValueError(f"{self.kind} needs {need[self.kind]} rates")


def _pauli_family_parts(spec: PauliFamilySpec):
    d = spec.dim
    if spec.kind == "qubit-pauli":
        ops = [0.5 * (sprepost(PAULI[k], PAULI[k]) - np.eye(4)) for k in "XYZ"]
    elif spec.kind == "weyl":
        ops = [sprepost(U, U.conj().T) - np.eye(d * d) for U in weyl_operators(d)[1:]]
    else:
        ops = [P - np.eye(d * d) for P in mub_channels(d)]
    return np.array(ops)


def pauli_family(spec: PauliFamilySpec, grid, check_rates: bool = True) -> ModelResult:
    """Pauli-type dynamics with its mixing weights ``p_alpha(t)`` and eigenvalues ``lambda(t)``.

    Parameters
    ----------
    spec : PauliFamilySpec
    grid : TimeGrid
    check_rates : bool
        Raise :class:`InvalidRates` when some ``p_alpha(t) < -1e-8``.

    Returns
    -------
    ModelResult
        ``data`` holds ``Gamma``, ``lambda``, ``p`` and ``rates``; verdicts
        hold ``cp_divisible`` and the P-divisibility result (exact for
        qubits, sufficient condition otherwise).
    """
    grid = as_grid(grid)
    d = spec.dim
    t = grid.times
    ops = _pauli_family_parts(spec)
    Gam = np.array([r.integral(t) for r in spec.rates]).T  # (n, n_rates)
    rates = np.array([r(t) for r in spec.rates]).T
    if spec.kind == "qubit-pauli":
        G1, G2, G3 = Gam.T
        lam = np.stack([np.exp(-G2 - G3), np.exp(-G3 - G1), np.exp(-G1 - G2)], axis=1)
        Hd = np.array([[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]]) / 4
        p = np.column_stack([np.ones(len(t)), lam]) @ Hd.T
        basis = [np.eye(2), PAULI["X"], PAULI["Y"], PAULI["Z"]]
        supers = np.array([sum(pa * sprepost(s, s) for pa, s in zip(pi, basis)) for pi in p])
    elif spec.kind == "weyl":
        U = weyl_operators(d)
        # phases U_a U_b U_a^dag = c_ab U_b
        C = np.array([[np.trace(Ub.conj().T @ Ua @ Ub @ Ua.conj().T) / d for Ub in U] for Ua in U])
        lam = np.exp(Gam @ (C[1:, :] - 1))  # (n, d^2)
        p = np.real(la.solve(C.T, lam.T).T)
        chans = [sprepost(Ua, Ua.conj().T) for Ua in U]
        supers = np.einsum("na,aij->nij", p, np.array(chans))
    else:
        Gtot = Gam.sum(axis=1, keepdims=True)
        lam = np.exp(Gam - Gtot)
        p0 = (1 + (d - 1) * lam.sum(axis=1)) / d ** 2
        pa = (d - 1) / d ** 2 * (1 + (d - 1) * lam - (lam.sum(axis=1, keepdims=True) - lam))
        p = np.column_stack([p0, pa])
        Phis = mub_channels(d)
        Ss = [(d * P - np.eye(d * d)) / (d - 1) for P in Phis]
        supers = np.array([pi[0] * np.eye(d * d) + sum(c * X for c, X in zip(pi[1:], Ss)) for pi in p])
    if check_rates and p.min() < -1e-8:
        i = int(np.argmin(p.min(axis=1)))
        raise InvalidRates(f"mixing weight {p.min():.3e} < 0 at t={t[i]:.6g}")

    def gen(tt, _ops=ops, _r=spec.rates):
        return np.tensordot(np.array([float(r(tt)) for r in _r]), _ops, axes=1)

    traj = MapTrajectory(grid, supers.astype(complex), "closed-form", gen)
    verdicts = {"cp_divisible": bool(rates.min() >= -1e-12)}
    if spec.kind == "qubit-pauli":
        g = rates
        verdicts["p_divisible"] = bool(min((g[:, 0] + g[:, 1]).min(), (g[:, 1] + g[:, 2]).min(),
                                           (g[:, 0] + g[:, 2]).min()) >= -1e-12)
    elif spec.kind == "weyl":
        verdicts["p_div_sufficient_condition"] = _weyl_sufficient(rates, d)
    else:
        verdicts["p_div_sufficient_condition"] = _gpc_sufficient(rates)
    return ModelResult(spec.kind, traj, gen, {"Gamma": Gam, "lambda": lam, "p": p, "rates": rates}, verdicts)


def _weyl_sufficient(rates: np.ndarray, d: int) -> bool:
    """Sufficient P-divisibility test: negative rates only among the last ``d - 1``."""
    ok = True
    for g in rates:
        neg = g < 0
        tail = np.arange(len(g)) >= d * d - d  # alpha > d^2 - d in 1-based indexing
        if np.any(neg & ~tail) or neg.sum() > d - 1:
            ok = False
            break
        if np.any(g[~tail] < np.abs(g[tail & neg]).sum() - 1e-12):
            ok = False
            break
    return bool(ok)


def _gpc_sufficient(rates: np.ndarray) -> bool:
    """Single negative rate (the last) dominated by every other rate."""
    for g in rates:
        if np.any(g[:-1] < 0):
            return False
        if g[-1] < 0 and np.any(g[:-1] < abs(g[-1]) - 1e-12):
            return False
    return True


# ---------------------------------------------------------------------------
# phase covariant

def _lpm(sp, sm):
    return sprepost(sp, sm) - 0.5 * spre(sm @ sp) - 0.5 * spost(sm @ sp)


L_PLUS = _lpm(SIGMA_P, SIGMA_M)
L_MINUS = _lpm(SIGMA_M, SIGMA_P)
L_Z = sprepost(SIGMA_Z, SIGMA_Z) - np.eye(4)


@dataclass
class PhaseCovariantSpec:
    omega: object = 0.0
    gamma_plus: object = 0.0
    gamma_minus: object = 1.0
    gamma_z: object = 0.0

    def __post_init__(self):
        self.omega = make_rate(self.omega)
        self.gamma_plus = make_rate(self.gamma_plus)
        self.gamma_minus = make_rate(self.gamma_minus)
        self.gamma_z = make_rate(self.gamma_z)


def phase_covariant_generator(omega, gp, gm, gz) -> np.ndarray:
    return (_hamiltonian_super(0.5 * omega * SIGMA_Z) + 0.5 * gp * L_PLUS + 0.5 * gm * L_MINUS
            + 0.5 * gz * L_Z)


def phase_covariant(spec: PhaseCovariantSpec, grid, strict: bool = True, quad_steps: int = 8) -> ModelResult:
    """Closed-form phase-covariant qubit dynamics and its classifier.

    ``Gamma = 1/2 int (g+ + g-)``, ``G = 1/2 int e^Gamma g+`` (cumulative
    Simpson rule on a ``quad_steps`` times refined grid),
    ``P_e(t) = e^{-Gamma}(G + P_e(0))`` and ``C = e^{i Omega - Gamma/2 - Gamma_z}``.

    Raises
    ------
    CPViolated
        With ``strict`` when the map fails complete positivity at some time.
    """
    grid = as_grid(grid)
    t = grid.times
    fine = grid.refine(quad_steps)
    tf = fine.times
    gp, gm, gz, om = spec.gamma_plus, spec.gamma_minus, spec.gamma_z, spec.omega
    Gam = 0.5 * (gp.integral(tf) + gm.integral(tf))
    integrand = 0.5 * np.exp(Gam) * gp(tf)
    G = cumulative_simpson(integrand, dx=fine.h, initial=0.0)[::quad_steps]
    Gam = Gam[::quad_steps]
    Gz = gz.integral(t)
    Om = om.integral(t)
    eG = np.exp(-Gam)
    C = np.exp(1j * Om - Gam / 2 - Gz)
    T = np.empty((len(t), 2, 2))
    T[:, 0, 0] = 1 - eG * G
    T[:, 0, 1] = 1 - eG * (1 + G)
    T[:, 1, 0] = eG * G
    T[:, 1, 1] = eG * (1 + G)
    supers = np.zeros((len(t), 4, 4), dtype=complex)
    # vec index: (i, j) -> 2 i + j
    supers[:, 0, 0] = T[:, 0, 0]
    supers[:, 0, 3] = T[:, 0, 1]
    supers[:, 3, 0] = T[:, 1, 0]
    supers[:, 3, 3] = T[:, 1, 1]
    supers[:, 1, 1] = C
    supers[:, 2, 2] = np.conj(C)
    cc_min = np.array([np.linalg.eigvalsh(np.array([[T[i, 0, 0], C[i]], [np.conj(C[i]), T[i, 1, 1]]])).min()
                       for i in range(len(t))])
    choi_min = np.minimum(cc_min, np.minimum(T[:, 0, 1], T[:, 1, 0]))
    rp, rm, rz = gp(t), gm(t), gz(t)
    verdicts = {
        "complete_positivity": bool(choi_min.min() >= -1e-10),
        "cp_divisible": bool(min(rp.min(), rm.min(), rz.min()) >= -1e-12),
        "p_divisible": bool(min(rp.min(), rm.min()) >= -1e-12 and
                            (np.sqrt(np.maximum(rp * rm, 0)) + 2 * rz).min() >= -1e-12),
        "blp": bool((rp + rm).min() >= -1e-12 and (rp + rm + 4 * rz).min() >= -1e-12),
    }
    if strict and not verdicts["complete_positivity"]:
        i = int(np.argmax(choi_min < -1e-10))
        raise CPViolated(f"phase-covariant map not CP at t={t[i]:.6g}", t_first=float(t[i]),
                         min_eig=float(choi_min[i]))

    def gen(tt):
        return phase_covariant_generator(float(om(tt)), float(gp(tt)), float(gm(tt)), float(gz(tt)))

    traj = MapTrajectory(grid, supers, "closed-form", gen)
    data = {"Gamma": Gam, "G": G, "Gamma_z": Gz, "Omega": Om, "C": C, "T": T,
            "P_e": lambda pe0: eG * (G + pe0), "choi_min": choi_min}
    return ModelResult("phase-covariant", traj, gen, data, verdicts)


def relaxation_rates(gp: float, gm: float, gz: float) -> tuple[float, float]:
    """Longitudinal and transversal rates of the constant phase-covariant generator."""
    return 0.5 * (gp + gm), 0.25 * (gp + gm) + gz


# ---------------------------------------------------------------------------
# amplitude damping

@dataclass
class AmplitudeDampingSpec:
    """Qubit: ``kernel`` is ``G(t)`` (scalar) with ``omega0``.

    Multi-level: ``H_e`` (n x n) and ``kernel`` returning ``(len(t), n, n)``.
    ``lorentzian(gamma, lam, omega0)`` builds the exponential kernel.
    """

    kernel: Callable
    omega0: float = 0.0
    H_e: np.ndarray | None = None

    @staticmethod
    def lorentzian(gamma: float, lam: float, omega0: float = 0.0) -> "AmplitudeDampingSpec":
        c = gamma * lam / 2
        return AmplitudeDampingSpec(lambda t: -1j * c * np.exp(-lam * np.asarray(t, float)), omega0)


def lorentzian_oracle(gamma: float, lam: float, omega0: float, times) -> tuple[np.ndarray, np.ndarray]:
    """``a(t)`` and ``a'(t)`` from the equivalent second-order ODE."""
    from scipy.integrate import solve_ivp

    c = gamma * lam / 2

    def rhs(_, y):
        a, ad = y[0] + 1j * y[1], y[2] + 1j * y[3]
        add = -(lam + 1j * omega0) * ad - (c + 1j * lam * omega0) * a
        return [ad.real, ad.imag, add.real, add.imag]

    ad0 = -1j * omega0
    sol = solve_ivp(rhs, (times[0], times[-1]), [1.0, 0.0, ad0.real, ad0.imag], t_eval=times,
                    method="DOP853", rtol=1e-12, atol=1e-14)
    return sol.y[0] + 1j * sol.y[1], sol.y[2] + 1j * sol.y[3]


def _ad_super_multi(A: np.ndarray) -> np.ndarray:
    """Superoperator of the multi-level amplitude-damping map; index 0 is the ground state."""
    n = A.shape[0]
    d = n + 1
    S = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            X = np.zeros((d, d), dtype=complex)
            X[i, j] = 1
            Y = np.zeros_like(X)
            Xe = X[1:, 1:]
            Y[1:, 1:] = A @ Xe @ A.conj().T
            Y[1:, 0] = A @ X[1:, 0]
            Y[0, 1:] = X[0, 1:] @ A.conj().T
            Y[0, 0] = X[0, 0] + np.trace(Xe) - np.trace(Y[1:, 1:])
            S[:, i * d + j] = Y.reshape(-1)
    return S


def amplitude_damping(spec: AmplitudeDampingSpec, grid, extrapolate: bool = True) -> ModelResult:
    """Amplitude damping from the non-local equation for ``a(t)`` or ``A(t)``.

    Returns ``data['a']`` (qubit) or ``data['A']`` (multi-level), the
    time-local generator data (``epsilon``, ``gamma`` or ``LL``) and the
    CP-divisibility verdict.
    """
    grid = as_grid(grid)
    t = grid.times
    multi = spec.H_e is not None
    if multi:
        He = np.asarray(spec.H_e, dtype=complex)
        n = He.shape[0]
        if n > 6:
            raise ValueError("multi-level amplitude damping supports at most 6 excited levels")
        Aop = -1j * He

        def K(tt):
            return -1j * np.asarray(spec.kernel(tt), dtype=complex)

        X0 = np.eye(n, dtype=complex)
    else:
        n = 1
        Aop = np.array([[-1j * spec.omega0]])

        def K(tt):
            return (-1j * np.asarray(spec.kernel(tt), dtype=complex))[:, None, None]

        X0 = np.ones((1, 1), dtype=complex)
    X, Xd, delta = volterra_ide(Aop, K, X0, grid, extrapolate=extrapolate)
    supers = np.array([_ad_super_multi(Xi) for Xi in X])
    norms = np.array([la.norm(Xi, 2) for Xi in X])
    data = {"refinement_delta": delta, "norm": norms}
    verdicts = {}
    cond = np.array([np.linalg.cond(Xi) for Xi in X])
    regular = cond < 1e8
    LL = np.full_like(X, np.nan)
    for i in range(len(t)):
        if regular[i]:
            LL[i] = Xd[i] @ la.inv(X[i])
    if multi:
        data.update(A=X, Adot=Xd, LL=LL)
        herm_max = np.array([np.linalg.eigvalsh(herm(L + L.conj().T)).max() if r else np.nan
                             for L, r in zip(LL, regular)])
        verdicts["cp_divisible"] = bool(regular.all() and np.nanmax(herm_max) <= 1e-8)
        data["LL_herm_max"] = herm_max
    else:
        a, ad = X[:, 0, 0], Xd[:, 0, 0]
        absa = np.abs(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            dabs = np.real(np.conj(a) * ad) / absa
        ratio = np.where(regular, ad / np.where(regular, a, 1), np.nan)
        data.update(a=a, adot=ad, epsilon=-2 * ratio.imag, gamma=-2 * ratio.real, d_abs_a=dabs)
        verdicts["cp_divisible"] = bool(regular.all() and np.nanmax(dabs) <= 1e-8)
    verdicts["cp"] = bool(norms.max() <= 1 + 1e-8)
    data["first_singular_time"] = float(t[np.argmax(~regular)]) if not regular.all() else None

    def gen(tt):
        try:
            i = grid.index(tt)
        except ValueError:
            i = None
        if i is None or not regular[i]:
            raise SingularA(f"time-local generator unavailable at t={tt:.6g}")
        return _ad_generator(LL[i])

    traj = MapTrajectory(grid, supers, "kernel", None)
    traj.meta["regular"] = regular
    return ModelResult("ad-multi" if multi else "ad-qubit", traj, gen, data, verdicts)


def _ad_generator(LL: np.ndarray) -> np.ndarray:
    """Superoperator built from ``LL = A' A^{-1}`` (ground index 0)."""
    n = LL.shape[0]
    d = n + 1
    S = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            X = np.zeros((d, d), dtype=complex)
            X[i, j] = 1
            Y = np.zeros_like(X)
            Xe = X[1:, 1:]
            Y[1:, 1:] = LL @ Xe + Xe @ LL.conj().T
            Y[1:, 0] = LL @ X[1:, 0]
            Y[0, 1:] = X[0, 1:] @ LL.conj().T
            Y[0, 0] = -np.trace(Y[1:, 1:])
            S[:, i * d + j] = Y.reshape(-1)
    return S


# ---------------------------------------------------------------------------
# dephasing

@dataclass
class DephasingSpec:
    """Pure dephasing specification.

    kind ``finite-env``: ``H_list`` (environment Hamiltonians ``H_k``, one per
    system level) and ``rho_E``.
    kind ``spin-boson``: qubit, ``J`` spectral density ``|f(w)|^2`` on
    ``(0, inf)`` and ``energies`` ``(E_0, E_1)``; ``ohmic(eta, wc)`` helper.
    kind ``gaussian-noise``: ``energies`` and correlation functions
    ``corr[k](tau)`` (callables), or ``white`` strengths ``c_k`` for
    ``c_k delta(tau)``.
    """

    kind: str
    H_list: Sequence | None = None
    rho_E: np.ndarray | None = None
    J: Callable | None = None
    energies: Sequence | None = None
    corr: Sequence | None = None
    white: Sequence | None = None
    ohmic_params: tuple | None = None

    @staticmethod
    def ohmic(eta: float, wc: float, energies=(0.0, 0.0)) -> "DephasingSpec":
        return DephasingSpec("spin-boson", J=lambda w: eta * w * np.exp(-w / wc), energies=energies,
                             ohmic_params=(eta, wc))


def _sb_exponent(J, t: float) -> float:
    """``4 int_0^inf J(w) (1 - cos w t) / w^2 dw`` integrated period by period."""
    if t == 0:
        return 0.0

    def f(w):
        if w == 0:
            return 0.0
        s = np.sin(0.5 * w * t)
        return J(w) * 2 * s * s / (w * w)

    period = 2 * np.pi / t
    val = 0.0
    for k in range(400):
        seg = quad(f, k * period, (k + 1) * period, epsabs=1e-14, epsrel=1e-11, limit=200)[0]
        val += seg
        if k > 4 and abs(seg) < 1e-14 * abs(val):
            break
    val += quad(f, (k + 1) * period, np.inf, epsabs=1e-14, limit=400)[0]
    return 4 * val


def _sb_rate(J, t: float) -> float:
    """Time derivative of the exponent, ``4 int J(w) sin(w t)/w dw``."""
    if t <= 0:
        return 0.0
    return 4 * quad(lambda w: J(w) / w if w > 0 else 0.0, 0, np.inf, weight="sin", wvar=t,
                    limlst=200, epsabs=1e-13)[0]


def decoherence_matrix(spec: DephasingSpec, t) -> tuple[np.ndarray, np.ndarray]:
    """``D(t)`` and ``D'(t)`` of shape ``(len(t), d, d)``."""
    t = np.atleast_1d(np.asarray(t, float))
    if spec.kind == "finite-env":
        Hs = [np.asarray(H, dtype=complex) for H in spec.H_list]
        rhoE = np.asarray(spec.rho_E, dtype=complex)
        d = len(Hs)
        D = np.empty((len(t), d, d), dtype=complex)
        Dd = np.empty_like(D)
        for i, tt in enumerate(t):
            Us = [la.expm(-1j * H * tt) for H in Hs]
            for k in range(d):
                for l in range(d):
                    M = Us[k] @ rhoE @ Us[l].conj().T
                    D[i, k, l] = np.trace(M)
                    Dd[i, k, l] = np.trace(-1j * Hs[k] @ M + 1j * M @ Hs[l])
        return D, Dd
    if spec.kind == "spin-boson":
        E = np.asarray(spec.energies if spec.energies is not None else (0.0, 0.0), float)
        if spec.ohmic_params is not None:
            eta, wc = spec.ohmic_params
            mag = (1 + (wc * t) ** 2) ** (-2 * eta)
            dlog = -4 * eta * wc * wc * t / (1 + (wc * t) ** 2)
        else:
            mag = np.exp(-np.array([_sb_exponent(spec.J, tt) for tt in t]))
            dlog = -np.array([_sb_rate(spec.J, tt) for tt in t])
        D = np.ones((len(t), 2, 2), dtype=complex)
        D[:, 0, 1] = np.exp(-1j * (E[0] - E[1]) * t) * mag
        D[:, 1, 0] = np.conj(D[:, 0, 1])
        Dd = np.zeros_like(D)
        Dd[:, 0, 1] = D[:, 0, 1] * (-1j * (E[0] - E[1]) + dlog)
        Dd[:, 1, 0] = np.conj(Dd[:, 0, 1])
        return D, Dd
    if spec.kind == "gaussian-noise":
        E = np.asarray(spec.energies, float)
        d = len(E)
        if spec.white is not None:
            c = np.asarray(spec.white, float)
            phi = np.outer(t, c) / 2
            dphi = np.tile(c / 2, (len(t), 1))
        else:
            phi = np.zeros((len(t), d))
            dphi = np.zeros((len(t), d))
            for k, g in enumerate(spec.corr):
                # 1/2 int_0^t int_0^t g(s - u) ds du = int_0^t (t - tau) g(tau) dtau
                I0 = np.array([quad(g, 0, tt, epsabs=1e-13, limit=200)[0] for tt in t])
                I1 = np.array([quad(lambda x: x * g(x), 0, tt, epsabs=1e-13, limit=200)[0] for tt in t])
                phi[:, k] = t * I0 - I1
                dphi[:, k] = I0
        dE = E[:, None] - E[None, :]
        off = ~np.eye(d, dtype=bool)
        # independent noises: the diagonal phases cancel exactly
        D = np.exp(-1j * dE[None] * t[:, None, None] - off * (phi[:, :, None] + phi[:, None, :]))
        Dd = D * (-1j * dE[None] - off * (dphi[:, :, None] + dphi[:, None, :]))
        return D, Dd
    raise ValueError(f"unknown dephasing kind {spec.kind!r}")


def _log_derivative(D, Dd):
    ok = np.abs(D) > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ok, Dd / np.where(ok, D, 1), np.nan)


def dephasing(spec: DephasingSpec, grid) -> ModelResult:
    """Pure dephasing ``Lambda_t(rho) = D(t) o rho`` (Schur product).

    Returns ``data`` with ``D`` (n, d, d), ``L`` (``D'/D``), canonical
    Hamiltonian ``H`` and Kossakowski matrix ``K`` in the diagonal traceless
    basis ``S_l``, plus verdicts ``cp_divisible`` (ratio test on sampled
    pairs) and ``K_psd`` (pointwise K check).

    Raises
    ------
    NonPSDDecoherence
        If ``D(t)`` fails to be positive semidefinite with unit diagonal.
    """
    grid = as_grid(grid)
    t = grid.times
    D, Dd = decoherence_matrix(spec, t)
    d = D.shape[1]
    for i in range(len(t)):
        w = np.linalg.eigvalsh(herm(D[i]))
        if w.min() < -1e-8 or np.abs(np.diag(D[i]) - 1).max() > 1e-8:
            raise NonPSDDecoherence(f"decoherence matrix invalid at t={t[i]:.6g} (min eig {w.min():.3e})")
    supers = np.array([np.diag(Di.reshape(-1)) for Di in D])
    L = _log_derivative(D, Dd)
    Sb = _diag_traceless_basis(d)
    a = np.array([[S[k, k].real for S in Sb] for k in range(d)])  # a_km = Tr(P_k S_m)
    K = np.einsum("ikl,km,lq->imq", L, a, a)
    H = np.full((len(t), d, d), np.nan, dtype=complex)
    for i in range(len(t)):
        if np.all(np.isfinite(L[i])):
            H[i] = canonical_split(np.diag(L[i].reshape(-1)), tol=1e-6).hamiltonian
    K_psd = [np.all(np.isfinite(Ki)) and np.linalg.eigvalsh(herm(Ki)).min() >= -1e-8 for Ki in K]

    def gen(tt):
        Dt, Ddt = decoherence_matrix(spec, [tt])
        return np.diag(_log_derivative(Dt, Ddt)[0].reshape(-1))

    traj = MapTrajectory(grid, supers, "closed-form", gen)
    data = {"D": D, "Ddot": Dd, "L": L, "H": H, "K": K, "S_basis": Sb, "a": a}
    verdicts = {"cp_divisible": dephasing_divisible(D), "K_psd": bool(all(K_psd))}
    return ModelResult(f"dephasing-{spec.kind}", traj, gen, data, verdicts)


def _diag_traceless_basis(d: int) -> list:
    """``S_l = (sum_{k<l} P_k - l P_l)/sqrt(l(l+1))``, ``l = 1..d-1``."""
    out = []
    for l in range(1, d):
        v = np.zeros(d)
        v[:l] = 1
        v[l] = -l
        out.append(np.diag(v / np.sqrt(l * (l + 1))).astype(complex))
    return out


def dephasing_divisible(D: np.ndarray, max_points: int = 200, tol: float = 1e-8) -> bool:
    """``D(t)/D(s)`` positive semidefinite for sampled ``t >= s`` (kernel inclusion when ``D(s)`` vanishes)."""
    n = len(D)
    idx = np.unique(np.linspace(0, n - 1, min(n, max_points)).round().astype(int))
    for a_, j in enumerate(idx):
        Ds = D[j]
        zero = np.abs(Ds) < 1e-12
        for i in idx[a_ + 1:]:
            Dt = D[i]
            if np.any(np.abs(Dt[zero]) > 1e-9):
                return False
            R = np.where(zero, 0.0, Dt / np.where(zero, 1, Ds))
            if np.linalg.eigvalsh(herm(R)).min() < -tol:
                return False
    return True


# ---------------------------------------------------------------------------
# exponential representation (qubit case study)

def magnus_pair(a1, a2, grid, check: bool = True, exp_bracket: bool = False) -> ModelResult:
    """Rates of ``L_t = g1 L+ + g2 L-`` for ``Lambda_t = exp(A1 L+ + A2 L-)``.

    Integrating ``e^{s L} M e^{-s L}`` over ``s`` in ``[0, 1]`` gives
    ``f = (a1 A2 - a2 A1)/A * (1 - (1 - e^{-A})/A)`` with ``g1 = a1 - f`` and
    ``g2 = a2 + f``.  ``exp_bracket=True`` uses ``e^{-A}`` in place of the
    bracket instead; that variant fails the propagation cross-check and is
    kept for comparison only.  At ``A = 0`` with vanishing numerator the
    limit ``f = 0`` is used; otherwise :class:`ZeroDenominator` is raised.
    """
    grid = as_grid(grid)
    r1, r2 = make_rate(a1), make_rate(a2)
    t = grid.times
    A1, A2 = r1.integral(t), r2.integral(t)
    x1, x2 = r1(t), r2(t)

    def f_of(tt, A1v, A2v, x1v, x2v):
        A = A1v + A2v
        num = x1v * A2v - x2v * A1v
        if abs(A) < 1e-12:
            if abs(num) < 1e-10:
                return 0.0
            raise ZeroDenominator(f"A(t)=0 with non-vanishing numerator at t={tt:.6g}")
        if exp_bracket:
            return num / A * np.exp(-A)
        # 1 - (1 - e^{-A})/A, series near A = 0
        br = A / 2 - A * A / 6 + A ** 3 / 24 if abs(A) < 1e-4 else 1 + np.expm1(-A) / A
        return num / A * br

    f = np.array([f_of(tt, *v) for tt, v in zip(t, zip(A1, A2, x1, x2))])
    g1, g2 = x1 - f, x2 + f
    supers = np.array([la.expm(p * L_PLUS + q * L_MINUS) for p, q in zip(A1, A2)])

    def gen(tt):
        v1, v2 = float(r1(tt)), float(r2(tt))
        fv = f_of(tt, float(r1.integral(tt)), float(r2.integral(tt)), v1, v2)
        return (v1 - fv) * L_PLUS + (v2 + fv) * L_MINUS

    traj = MapTrajectory(grid, supers, "closed-form", gen)
    data = {"A1": A1, "A2": A2, "f": f, "gamma1": g1, "gamma2": g2}
    if check:
        prop = propagate(gen, grid, check=False)
        data["propagation_error"] = float(np.abs(prop.supers - supers).max())
    verdicts = {"L_gkls": bool(min(g1.min(), g2.min()) >= -1e-12),
                "bold_L_gkls": bool(min(A1.min(), A2.min()) >= -1e-12)}
    return ModelResult("magnus-qubit", traj, gen, data, verdicts)


def magnus_second_order(genfn, t: float, n_quad: int = 200) -> np.ndarray:
    """``M^(2)_t = int_0^t [L_t, L_tau] dtau`` by trapezoid."""
    taus = np.linspace(0, t, n_quad + 1)
    Lt = np.asarray(genfn(t))
    vals = np.array([Lt @ np.asarray(genfn(s)) - np.asarray(genfn(s)) @ Lt for s in taus])
    w = np.full(len(taus), t / n_quad)
    w[0] = w[-1] = t / n_quad / 2
    return np.tensordot(w, vals, axes=1)


# ---------------------------------------------------------------------------
# mixtures of semigroups

def mix_semigroups(generators: Sequence, weights: Sequence[float], grid) -> ModelResult:
    """``Lambda_t = sum_j p_j exp(L_j t)`` with extracted time-local rates."""
    from .dynamics import extract_generator

    grid = as_grid(grid)
    p = np.asarray(weights, float)
    if p.min() < 0 or abs(p.sum() - 1) > 1e-10 or len(p) != len(generators):
        raise BadWeights("weights must be non-negative, sum to one and match the generators")
    Ls = [np.asarray(g.super if hasattr(g, "super") and not callable(g.super) else g, dtype=complex)
          for g in generators]
    t = grid.times
    supers = np.array([sum(pj * la.expm(L * tt) for pj, L in zip(p, Ls)) for tt in t])
    traj = MapTrajectory(grid, supers, "composite", None)
    gt = extract_generator(traj, on_singular="nan")
    rates = np.full((len(t), supers.shape[1] - 1), np.nan)
    for i in range(len(t)):
        if gt.regular[i]:
            rates[i] = np.linalg.eigvalsh(herm(canonical_split(gt.generators[i], tol=1e-6).kossakowski))
    return ModelResult("mix", traj, None, {"weights": p, "extracted": gt, "rates": rates}, {})


def pauli_mixture_rates(p: Sequence[float], t) -> np.ndarray:
    """Rates ``gamma_k(t)`` of ``sum_k p_k exp(t (s_k . s_k - .))`` in the ``1/2 sum gamma_k`` form.

    ``gamma_j = -mu_j + sum_{k != j} mu_k`` with
    ``mu_k = (1 - p_k)/(1 - p_k + e^{2t} p_k)``.
    """
    p = np.asarray(p, float)
    t = np.atleast_1d(np.asarray(t, float))
    mu = (1 - p[None]) / (1 - p[None] + np.exp(2 * t)[:, None] * p[None])
    M = np.ones((3, 3)) - 2 * np.eye(3)
    return mu @ M.T


def pauli_dissipator(k: int) -> np.ndarray:
    """``s_k . s_k - .`` for ``k`` in 1..3."""
    s = PAULI["XYZ"[k - 1]]
    return sprepost(s, s) - np.eye(4)


def mub_mixture_rates(x: Sequence[float], kappa: float, d: int, t) -> np.ndarray:
    """Rates of ``sum_a x_a exp(kappa t (Phi_a - id))`` in the ``sum gamma_a (Phi_a - id)`` form."""
    x = np.asarray(x, float)
    t = np.atleast_1d(np.asarray(t, float))
    e = np.exp(kappa * t)[:, None] - 1
    q = (1 - x[None]) / (1 + e * x[None])
    return -kappa * q + kappa / d * q.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# covariant generators

def covariant_check(gen, tol: float = 1e-9) -> dict:
    """Necessary P-divisibility conditions for generators covariant under diagonal unitaries.

    Returns classical rates ``t_ij = Tr(|i><i| L(|j><j|))``, ``b_j``,
    coherence eigenvalues ``l_ij`` and the verdict of
    ``t_ij >= 0`` and ``Re l_ij <= 0``.
    """
    S = np.asarray(gen.super if hasattr(gen, "super") and not callable(gen.super) else gen, dtype=complex)
    d = int(round(np.sqrt(S.shape[0])))
    # covariance: S commutes with U_x (x) conj(U_x) for random phases
    rng = np.random.default_rng(0)
    U = np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, d)))
    W = np.kron(U, U.conj())
    covariant = bool(np.abs(W @ S - S @ W).max() < 1e-8)
    T = np.array([[S[i * d + i, j * d + j].real for j in range(d)] for i in range(d)])
    b = np.array([sum(T[k, j] for k in range(d) if k != j) for j in range(d)])
    l = np.array([[S[i * d + j, i * d + j] for j in range(d)] for i in range(d)])
    off = ~np.eye(d, dtype=bool)
    ok = bool(T[off].min() >= -tol and np.real(l[off]).max() <= tol) if d > 1 else True
    return {"covariant": covariant, "t": T, "b": b, "l": l, "necessary_p_div": ok}


# ---------------------------------------------------------------------------
# registry

def _rates(params, key, default):
    return [make_rate(r) for r in params.get(key, default)]


def _build_pauli(params, grid):
    spec = PauliFamilySpec("qubit-pauli", 2, params.get("rates", [1, 1, {"type": "tanh", "amp": -1, "rate": 1}]))
    return pauli_family(spec, grid)


def _build_weyl(params, grid):
    d = int(params.get("dim", 3))
    return pauli_family(PauliFamilySpec("weyl", d, params.get("rates", [1.0] * (d * d - 1))), grid)


def _build_gpc(params, grid):
    d = int(params.get("dim", 3))
    return pauli_family(PauliFamilySpec("generalized-pauli-mub", d, params.get("rates", [1.0] * (d + 1))), grid)


def _build_pc(params, grid):
    spec = PhaseCovariantSpec(params.get("omega", 0.0), params.get("gamma_plus", 0.0),
                              params.get("gamma_minus", 1.0), params.get("gamma_z", 0.0))
    return phase_covariant(spec, grid, strict=bool(params.get("strict", True)))


def _build_ad_qubit(params, grid):
    spec = AmplitudeDampingSpec.lorentzian(float(params.get("gamma", 1.0)), float(params.get("lambda", 2.0)),
                                           float(params.get("omega0", 0.0)))
    return amplitude_damping(spec, grid)


def _build_ad_multi(params, grid):
    He = np.asarray(params.get("H_e", [[0.0, 0.0], [0.0, 0.5]]), dtype=complex)
    n = He.shape[0]
    betas = np.asarray(params.get("betas", [[1.0] + [0.0] * (n - 1)]), dtype=complex)
    gam = float(params.get("gamma", 1.0))
    lam = float(params.get("lambda", 2.0))
    B = sum(np.outer(b, b.conj()) for b in betas)

    def kern(t):
        t = np.asarray(t, float)
        return -1j * (gam * lam / 2) * np.exp(-lam * t)[:, None, None] * B[None]

    return amplitude_damping(AmplitudeDampingSpec(kern, 0.0, He), grid)


def _build_deph_finite(params, grid):
    g = float(params.get("g", 1.0))
    spec = DephasingSpec("finite-env", H_list=[np.zeros((2, 2)), g * PAULI["X"]],
                         rho_E=np.diag([1.0, 0.0]))
    return dephasing(spec, grid)


def _build_deph_sb(params, grid):
    return dephasing(DephasingSpec.ohmic(float(params.get("eta", 0.25)), float(params.get("omega_c", 1.0)),
                                         params.get("energies", (0.0, 0.0))), grid)


def _build_deph_gauss(params, grid):
    return dephasing(DephasingSpec("gaussian-noise", energies=params.get("energies", [0.0, 1.0]),
                                   white=params.get("white", [0.5, 1.0])), grid)


def _build_magnus(params, grid):
    return magnus_pair(params.get("a1", 1.0), params.get("a2", {"type": "poly", "coeffs": [0, 1]}), grid)


def _build_mix(params, grid):
    w = params.get("weights", [0.5, 0.5, 0.0])
    return mix_semigroups([pauli_dissipator(k) for k in (1, 2, 3)], w, grid)


REGISTRY = {
    "pauli": _build_pauli,
    "weyl": _build_weyl,
    "gpc-mub": _build_gpc,
    "phase-covariant": _build_pc,
    "ad-qubit": _build_ad_qubit,
    "ad-multi": _build_ad_multi,
    "dephasing-finite-env": _build_deph_finite,
    "dephasing-spin-boson": _build_deph_sb,
    "dephasing-gaussian": _build_deph_gauss,
    "magnus-qubit": _build_magnus,
    "mix": _build_mix,
}


def build_model(name: str, params: dict, grid) -> ModelResult:
    if name not in REGISTRY:
        raise KeyError(f"unknown model {name!r}; known: {', '.join(sorted(REGISTRY))}")
    return REGISTRY[name](params or {}, as_grid(grid))
