"""Exact system plus environment evolution for small dimensions.

The reduced map is obtained by process tomography on the matrix units of
the system, with the joint unitary from an exact diagonalisation of the
total Hamiltonian.  Multi-time correlations are then compared with the
regression formula built from reduced propagators, and three-time
projective statistics give the conditional past-future correlation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la

from .dynamics import MapTrajectory
from .errors import DimensionTooLarge, SingularPropagator, ZeroProbabilityConditioning
from .repcore import herm, unvec, vec
from .timegrid import as_grid

MAX_DS = 4
MAX_DE = 16
MAX_TOTAL = 64


@dataclass
class JointModel:
    """System (dimension ``dS``) coupled to a finite environment (``dE``).

    ``H`` acts on ``H_S (x) H_E`` with the system factor first.
    """

    dS: int
    dE: int
    H: np.ndarray
    rho_E: np.ndarray
    _eig: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.dS > MAX_DS or self.dE > MAX_DE or self.dS * self.dE > MAX_TOTAL:
            raise DimensionTooLarge(f"dS={self.dS}, dE={self.dE} exceeds the exact-diagonalisation bounds")
        D = self.dS * self.dE
        self.H = np.asarray(self.H, dtype=complex)
        self.rho_E = np.asarray(self.rho_E, dtype=complex)
        if self.H.shape != (D, D) or self.rho_E.shape != (self.dE, self.dE):
            raise ValueError("H or rho_E has the wrong shape")
        if not np.allclose(self.H, self.H.conj().T, atol=1e-10):
            raise ValueError("H must be Hermitian")
        self.H = herm(self.H)

    @classmethod
    def from_dict(cls, data: dict) -> "JointModel":
        return cls(int(data["dS"]), int(data["dE"]), _matrix(data["H"]), _matrix(data["rhoE"]))

    def unitary(self, t: float) -> np.ndarray:
        if self._eig is None:
            self._eig = np.linalg.eigh(self.H)
        w, V = self._eig
        return (V * np.exp(-1j * w * t)) @ V.conj().T

    def evolve(self, X: np.ndarray, t: float) -> np.ndarray:
        U = self.unitary(t)
        return U @ X @ U.conj().T

    def lift(self, A: np.ndarray) -> np.ndarray:
        return np.kron(np.asarray(A, dtype=complex), np.eye(self.dE))

    def ptrace_env(self, X: np.ndarray) -> np.ndarray:
        return np.einsum("aebe->ab", X.reshape(self.dS, self.dE, self.dS, self.dE))

    def reduced_super(self, t: float) -> np.ndarray:
        """Row-stacking superoperator of ``Lambda_t = Tr_E U_t (. (x) rho_E) U_t^dag``."""
        dS, dE = self.dS, self.dE
        U = self.unitary(t).reshape(dS, dE, dS, dE)
        # Lambda(X)_ab = sum U[a,e,i,f] X_ij rhoE_fg conj(U[b,e,j,g])
        T = np.einsum("aeif,fg,bejg->abij", U, self.rho_E, U.conj())
        return T.reshape(dS * dS, dS * dS)


def _matrix(obj) -> np.ndarray:
    """Matrix from nested lists, accepting ``{"re": ..., "im": ...}`` or ``[re, im]`` pairs."""
    if isinstance(obj, dict):
        return np.asarray(obj["re"], float) + 1j * np.asarray(obj.get("im", 0.0), float)
    arr = np.asarray(obj)
    if arr.dtype == object or (arr.ndim == 3 and arr.shape[-1] == 2):
        arr = np.asarray(obj, float)
        return arr[..., 0] + 1j * arr[..., 1]
    return arr.astype(complex)


def joint_reduce(model: JointModel, grid) -> MapTrajectory:
    """Reduced dynamical map on the grid, exact up to round-off."""
    grid = as_grid(grid)
    S = np.array([model.reduced_super(t) for t in grid.times])
    return MapTrajectory(grid, S, provenance="composite")


# ---------------------------------------------------------------------------
# quantum regression

@dataclass
class CorrelationRequest:
    """Operator pairs ``(A_k, B_k)`` applied at ordered times ``t_1 <= ... <= t_n``."""

    ops: Sequence[tuple]
    times: Sequence[float]
    rho_S: np.ndarray

    def __post_init__(self):
        if len(self.ops) != len(self.times):
            raise ValueError("one operator pair per time is required")
        if not 1 <= len(self.times) <= 4:
            raise ValueError("between one and four times are supported")
        if any(b < a for a, b in zip(self.times, self.times[1:])) or self.times[0] < 0:
            raise ValueError("times must be non-negative and ordered")


def _apply_C(A, B, X):
    # C(X) = B X A
    return B @ X @ A


def regression_check(model: JointModel, req: CorrelationRequest, restrict: bool = False,
                     cond_max: float = 1e8) -> dict:
    """Compare exact multi-time correlations with the regression formula.

    ``lhs`` evolves the joint state and interleaves ``X -> (B (x) 1) X (A (x) 1)``;
    ``rhs`` uses the reduced map and propagators ``V_{t,s} = Lambda_t Lambda_s^{-1}``.
    A singular ``Lambda_s`` raises :class:`SingularPropagator` unless
    ``restrict`` is set, in which case the pseudo-inverse is used and the
    result is flagged.
    """
    rho_S = np.asarray(req.rho_S, dtype=complex)
    X = np.kron(rho_S, model.rho_E)
    t_prev = 0.0
    for (A, B), t in zip(req.ops, req.times):
        X = model.evolve(X, t - t_prev)
        X = _apply_C(model.lift(A), model.lift(B), X)
        t_prev = t
    lhs = complex(np.trace(X))

    dS = model.dS
    certified = True
    x = vec(rho_S)
    t_prev = 0.0
    L_prev = np.eye(dS * dS, dtype=complex)
    for (A, B), t in zip(req.ops, req.times):
        L_t = model.reduced_super(t)
        c = float(np.linalg.cond(L_prev))
        if c >= cond_max:
            if not restrict:
                raise SingularPropagator(f"Lambda_s is singular at s={t_prev:.6g} (cond {c:.3e})")
            V = L_t @ la.pinv(L_prev)
            certified = False
        else:
            V = la.solve(L_prev.T, L_t.T).T
        x = vec(_apply_C(np.asarray(A, complex), np.asarray(B, complex), unvec(V @ x, dS)))
        L_prev, t_prev = L_t, t
    rhs = complex(np.trace(unvec(x, dS)))
    return {"lhs": lhs, "rhs": rhs, "deviation": float(abs(lhs - rhs)), "certified": certified}


# ---------------------------------------------------------------------------
# conditional past-future correlation

def _check_complete(P: Sequence[np.ndarray], d: int, name: str) -> list:
    P = [np.asarray(p, dtype=complex) for p in P]
    if not np.allclose(sum(P), np.eye(d), atol=1e-10):
        raise ValueError(f"projectors {name} do not sum to the identity")
    for p in P:
        if not np.allclose(p @ p, p, atol=1e-10) or not np.allclose(p, p.conj().T, atol=1e-10):
            raise ValueError(f"{name} contains a non-projector")
    return P


def _outcome_values(O, P: list) -> np.ndarray:
    O = np.asarray(O)
    if O.ndim == 1:
        if len(O) != len(P):
            raise ValueError("one observable value per outcome is required")
        return O.astype(float)
    return np.array([np.trace(O @ p).real / np.trace(p).real for p in P])


def three_time_probabilities(model: JointModel, rho_S, Px, Py, Pz, tx: float, ty: float, tz: float) -> np.ndarray:
    """Joint outcome probabilities ``p[x, y, z]`` from sequential projective collapse."""
    if not 0 <= tx <= ty <= tz:
        raise ValueError("times must satisfy 0 <= t_x <= t_y <= t_z")
    d = model.dS
    Px = _check_complete(Px, d, "Px")
    Py = _check_complete(Py, d, "Py")
    Pz = _check_complete(Pz, d, "Pz")
    X0 = model.evolve(np.kron(np.asarray(rho_S, complex), model.rho_E), tx)
    Uy = model.unitary(ty - tx)
    Uz = model.unitary(tz - ty)
    p = np.zeros((len(Px), len(Py), len(Pz)))
    for i, px in enumerate(Px):
        Lx = model.lift(px)
        Xx = Uy @ (Lx @ X0 @ Lx) @ Uy.conj().T
        for j, py in enumerate(Py):
            Ly = model.lift(py)
            Xy = Uz @ (Ly @ Xx @ Ly) @ Uz.conj().T
            for k, pz in enumerate(Pz):
                p[i, j, k] = np.trace(model.lift(pz) @ Xy).real
    return p


def cpf_correlation(model: JointModel, rho_S, Px, Py, Pz, tx: float, ty: float, tz: float,
                    O, y: int | None = None, p_min: float = 1e-12) -> dict:
    """Conditional past-future correlation ``C_pf`` for each present outcome ``y``.

    Parameters
    ----------
    O : array_like
        Either the outcome values ``O_x = O_z`` (when the past and future
        measurements share outcomes) or a Hermitian matrix, from which each
        outcome value is the average of ``O`` over the projector range.
    y : int, optional
        Restrict to one present outcome; raises
        :class:`ZeroProbabilityConditioning` if ``p(y) < p_min``.

    Returns
    -------
    dict
        ``cpf`` (array over ``y``, NaN for excluded branches), ``p_y``,
        ``excluded`` and, if ``y`` is given, ``value``.
    """
    p = three_time_probabilities(model, rho_S, Px, Py, Pz, tx, ty, tz)
    Ox = _outcome_values(O, list(Px))
    Oz = _outcome_values(O, list(Pz))
    p_y = p.sum(axis=(0, 2))
    cpf = np.full(len(p_y), np.nan)
    excluded = []
    for j, py in enumerate(p_y):
        if py < p_min:
            excluded.append(j)
            continue
        pzx = p[:, j, :] / py
        px_y = pzx.sum(axis=1)
        pz_y = pzx.sum(axis=0)
        cpf[j] = float(Ox @ (pzx - np.outer(px_y, pz_y)) @ Oz)
    out = {"cpf": cpf, "p_y": p_y, "excluded": excluded, "probabilities": p}
    if y is not None:
        if y in excluded:
            raise ZeroProbabilityConditioning(f"p(y={y}) = {p_y[y]:.3e} is below {p_min:g}")
        out["value"] = float(cpf[y])
    return out


# ---------------------------------------------------------------------------
# model builders

def boson_ops(n: int) -> np.ndarray:
    """Truncated annihilation operator on ``n`` Fock levels."""
    return np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)


def jaynes_cummings(g: float, omega0: float, omega: float, n_levels: int) -> JointModel:
    """Qubit (index 1 excited) coupled to one truncated mode, vacuum environment."""
    a = boson_ops(n_levels)
    sp = np.array([[0, 0], [1, 0]], dtype=complex)  # |e><g| with e = 1
    I_E = np.eye(n_levels)
    H = (omega0 * np.kron(sp @ sp.conj().T, I_E) + omega * np.kron(np.eye(2), a.conj().T @ a)
         + g * (np.kron(sp, a) + np.kron(sp.conj().T, a.conj().T)))
    vac = np.zeros((n_levels, n_levels), dtype=complex)
    vac[0, 0] = 1.0
    return JointModel(2, n_levels, H, vac)


def dephasing_pair(g: float) -> JointModel:
    """Qubit dephasing by a qubit environment, ``H = g sigma_z (x) sigma_x``, ``rho_E = |0><0|``."""
    Z = np.diag([1.0, -1.0]).astype(complex)
    Xm = np.array([[0, 1], [1, 0]], dtype=complex)
    return JointModel(2, 2, g * np.kron(Z, Xm), np.diag([1.0, 0.0]).astype(complex))


def dephasing_modes(couplings: Sequence[float]) -> JointModel:
    """Qubit coupled to several qubit modes, ``H = sum_k g_k sigma_z (x) sigma_x^(k)``."""
    n = len(couplings)
    dE = 2 ** n
    Z = np.diag([1.0, -1.0]).astype(complex)
    Xm = np.array([[0, 1], [1, 0]], dtype=complex)
    H = np.zeros((2 * dE, 2 * dE), dtype=complex)
    for k, g in enumerate(couplings):
        ops = [np.eye(2)] * n
        ops[k] = Xm
        env = ops[0]
        for o in ops[1:]:
            env = np.kron(env, o)
        H += g * np.kron(Z, env)
    rho = np.zeros((dE, dE), dtype=complex)
    rho[0, 0] = 1.0
    return JointModel(2, dE, H, rho)


def decoupled(H_S, H_E, rho_E) -> JointModel:
    H_S = np.asarray(H_S, complex)
    H_E = np.asarray(H_E, complex)
    dS, dE = H_S.shape[0], H_E.shape[0]
    return JointModel(dS, dE, np.kron(H_S, np.eye(dE)) + np.kron(np.eye(dS), H_E), rho_E)


def truncation_ratio(builder, n_levels: int, grid) -> dict:
    """Change of the reduced trajectory when the boson cutoff is doubled."""
    grid = as_grid(grid)
    a = joint_reduce(builder(n_levels), grid).supers
    b = joint_reduce(builder(2 * n_levels), grid).supers
    change = float(np.abs(a - b).max())
    return {"change": change, "converged": change < 1e-6}
