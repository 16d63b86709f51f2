"""Representations of states and linear maps on matrix spaces.

Vectorization convention is row stacking throughout the package:
``vec(X) = X.reshape(-1)`` so that ``vec(A X B) = (A kron B.T) vec(X)``.
A map ``Phi`` on ``d_in x d_in`` matrices is stored as its superoperator
matrix ``S`` of shape ``(d_out**2, d_in**2)`` with
``S[(a, b), (i, j)] = <a| Phi(|i><j|) |b>``.

The Choi matrix uses the normalised convention
``C = (1/d_in) sum_ij |i><j| (x) Phi(|i><j|)`` so that a trace preserving
map has unit-trace Choi matrix with partial trace ``1/d_in`` on the input.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la

from .errors import (
    DimensionMismatch,
    NegativeChoi,
    NonHermitianChoi,
    NotTracePreserving,
    ZeroInput,
)

__all__ = [
    "DensityMatrix",
    "LinearMap",
    "ChoiMatrix",
    "KrausSet",
    "BlochAffine",
    "PositivityVerdict",
    "vec",
    "unvec",
    "spre",
    "spost",
    "sprepost",
    "commutator_super",
    "identity_map",
    "unitary_map",
    "kraus_map",
    "transpose_map",
    "depolarizing_map",
    "super_to_choi",
    "choi_to_super",
    "choi_to_kraus",
    "kraus_to_super",
    "super_to_bloch",
    "bloch_to_super",
    "convert",
    "classify",
    "dual",
    "dilate",
    "map_norms",
    "gellmann_basis",
    "hermitian_basis",
    "partial_trace",
    "trace_norm",
    "herm",
    "random_state",
    "random_pure_state",
    "random_unitary",
    "random_kraus",
    "random_channel",
    "PAULI",
]

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


# ---------------------------------------------------------------------------
# vectorization helpers

def vec(X: np.ndarray) -> np.ndarray:
    """Row-stacking vectorization of a matrix."""
    return np.asarray(X).reshape(-1)


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec` for a square matrix."""
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    return v.reshape(d, -1)


def spre(A: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> A X``."""
    A = np.asarray(A)
    return np.kron(A, np.eye(A.shape[1]))


def spost(B: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> X B``."""
    B = np.asarray(B)
    return np.kron(np.eye(B.shape[0]), B.T)


def sprepost(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> A X B``."""
    return np.kron(np.asarray(A), np.asarray(B).T)


def commutator_super(H: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> -i[H, X]``."""
    return -1j * (spre(H) - spost(H))


def herm(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def trace_norm(A: np.ndarray) -> float:
    """Schatten 1-norm."""
    A = np.asarray(A)
    if np.allclose(A, A.conj().T, atol=1e-13):
        return float(np.sum(np.abs(np.linalg.eigvalsh(herm(A)))))
    return float(np.sum(np.linalg.svd(A, compute_uv=False)))


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: int | Sequence[int]) -> np.ndarray:
    """Partial trace of a multipartite operator, keeping subsystems ``keep``."""
    dims = list(dims)
    n = len(dims)
    keep = [keep] if np.isscalar(keep) else list(keep)
    rho = np.asarray(rho).reshape(dims + dims)
    trace_out = [k for k in range(n) if k not in keep]
    # trace from the highest index to keep axis numbers valid
    for k in sorted(trace_out, reverse=True):
        m = rho.ndim // 2
        rho = np.trace(rho, axis1=k, axis2=k + m)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return rho.reshape(dk, dk)


# ---------------------------------------------------------------------------
# operator bases

def gellmann_basis(d: int) -> list[np.ndarray]:
    """Traceless Hermitian orthonormal basis of ``d x d`` matrices.

    Generalized Gell-Mann matrices normalised to ``Tr(F_k F_l) = delta_kl``,
    ordered as all symmetric ones, all antisymmetric ones, then the
    diagonal ones. For ``d = 2`` this is ``(sx, sy, sz) / sqrt(2)``.
    """
    sym, anti, diag = [], [], []
    for j in range(d):
        for k in range(j + 1, d):
            S = np.zeros((d, d), dtype=complex)
            S[j, k] = S[k, j] = 1 / np.sqrt(2)
            sym.append(S)
            A = np.zeros((d, d), dtype=complex)
            A[j, k] = -1j / np.sqrt(2)
            A[k, j] = 1j / np.sqrt(2)
            anti.append(A)
    for l in range(1, d):
        D = np.zeros((d, d), dtype=complex)
        D[:l, :l] = np.eye(l)
        D[l, l] = -l
        diag.append(D / np.sqrt(l * (l + 1)))
    return sym + anti + diag


def hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal Hermitian basis with ``F_0 = 1/sqrt(d)`` first."""
    return [np.eye(d, dtype=complex) / np.sqrt(d)] + gellmann_basis(d)


# ---------------------------------------------------------------------------
# data types

@dataclass(frozen=True)
class DensityMatrix:
    """Validated density matrix."""

    data: np.ndarray
    tol: float = 1e-8

    def __post_init__(self):
        rho = np.asarray(self.data, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DimensionMismatch("density matrix must be square")
        if not np.allclose(rho, rho.conj().T, atol=self.tol):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > self.tol:
            raise ValueError("density matrix does not have unit trace")
        if np.linalg.eigvalsh(herm(rho)).min() < -self.tol:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "data", rho)

    @property
    def dim(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class LinearMap:
    """Linear map stored as a row-stacking superoperator matrix."""

    super: np.ndarray
    din: int = 0
    dout: int = 0

    def __post_init__(self):
        S = np.asarray(self.super, dtype=complex)
        din = self.din or int(round(np.sqrt(S.shape[1])))
        dout = self.dout or int(round(np.sqrt(S.shape[0])))
        if S.shape != (dout * dout, din * din):
            raise DimensionMismatch(f"superoperator shape {S.shape} does not match dims {din}->{dout}")
        if not np.all(np.isfinite(S)):
            raise ValueError("superoperator has non-finite entries")
        object.__setattr__(self, "super", S)
        object.__setattr__(self, "din", din)
        object.__setattr__(self, "dout", dout)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return unvec(self.super @ vec(X), self.dout)

    def __matmul__(self, other: "LinearMap") -> "LinearMap":
        if self.din != other.dout:
            raise DimensionMismatch("cannot compose maps with incompatible dimensions")
        return LinearMap(self.super @ other.super, other.din, self.dout)

    def __add__(self, other: "LinearMap") -> "LinearMap":
        return LinearMap(self.super + other.super, self.din, self.dout)

    def __rmul__(self, c) -> "LinearMap":
        return LinearMap(c * self.super, self.din, self.dout)

    @property
    def choi(self) -> np.ndarray:
        return super_to_choi(self.super, self.din, self.dout)

    def kraus(self) -> list[np.ndarray]:
        return choi_to_kraus(self.choi, self.din, self.dout)

    def is_trace_preserving(self, tol: float = 1e-8) -> bool:
        return bool(np.allclose(dual(self)(np.eye(self.dout)), np.eye(self.din), atol=tol))

    def is_hermiticity_preserving(self, tol: float = 1e-8) -> bool:
        C = self.choi
        return bool(np.allclose(C, C.conj().T, atol=tol))


@dataclass(frozen=True)
class ChoiMatrix:
    data: np.ndarray
    din: int
    dout: int


@dataclass(frozen=True)
class KrausSet:
    operators: tuple

    def __init__(self, operators):
        object.__setattr__(self, "operators", tuple(np.asarray(K, dtype=complex) for K in operators))

    @property
    def din(self) -> int:
        return self.operators[0].shape[1]

    @property
    def dout(self) -> int:
        return self.operators[0].shape[0]

    def is_trace_preserving(self, tol: float = 1e-10) -> bool:
        G = sum(K.conj().T @ K for K in self.operators)
        return bool(np.allclose(G, np.eye(self.din), atol=tol))


@dataclass(frozen=True)
class BlochAffine:
    """Affine action ``x -> delta @ x + shift`` on generalized Bloch vectors."""

    delta: np.ndarray
    shift: np.ndarray
    din: int
    dout: int


@dataclass
class PositivityVerdict:
    hermiticity_preserving: bool
    trace_preserving: bool
    cp: bool
    min_choi_eig: float
    positive_lb: float
    k_pos_lb: dict
    certified: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "hermiticity_preserving": self.hermiticity_preserving,
            "trace_preserving": self.trace_preserving,
            "cp": self.cp,
            "min_choi_eig": self.min_choi_eig,
            "positive_lb": self.positive_lb,
            "k_pos_lb": {str(k): v for k, v in self.k_pos_lb.items()},
            "certified": self.certified,
        }


# ---------------------------------------------------------------------------
# constructors

def identity_map(d: int) -> LinearMap:
    return LinearMap(np.eye(d * d, dtype=complex), d, d)


def unitary_map(U: np.ndarray) -> LinearMap:
    return LinearMap(sprepost(U, U.conj().T))


def kraus_to_super(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """``S = sum_i K_i kron conj(K_i)``."""
    return sum(np.kron(K, K.conj()) for K in kraus)


def kraus_map(kraus: Sequence[np.ndarray]) -> LinearMap:
    K0 = np.asarray(kraus[0])
    return LinearMap(kraus_to_super([np.asarray(K) for K in kraus]), K0.shape[1], K0.shape[0])


def transpose_map(d: int) -> LinearMap:
    S = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            S[j * d + i, i * d + j] = 1
    return LinearMap(S, d, d)


def depolarizing_map(d: int, p: float = 1.0) -> LinearMap:
    """``(1-p) X + p Tr(X) 1/d``."""
    S = (1 - p) * np.eye(d * d) + p * np.outer(vec(np.eye(d)), vec(np.eye(d))) / d
    return LinearMap(S.astype(complex), d, d)


# ---------------------------------------------------------------------------
# conversions

def super_to_choi(S: np.ndarray, din: int | None = None, dout: int | None = None) -> np.ndarray:
    """Reshuffle a superoperator into its normalised Choi matrix."""
    S = np.asarray(S)
    din = din or int(round(np.sqrt(S.shape[1])))
    dout = dout or int(round(np.sqrt(S.shape[0])))
    T = S.reshape(dout, dout, din, din).transpose(2, 0, 3, 1)
    return T.reshape(din * dout, din * dout) / din


def choi_to_super(C: np.ndarray, din: int, dout: int | None = None) -> np.ndarray:
    """Inverse of :func:`super_to_choi`."""
    C = np.asarray(C)
    dout = dout or C.shape[0] // din
    T = (din * C).reshape(din, dout, din, dout).transpose(1, 3, 0, 2)
    return T.reshape(dout * dout, din * din)


def _hermitize(C: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    asym = np.max(np.abs(C - C.conj().T)) if C.size else 0.0
    if asym > tol:
        raise NonHermitianChoi(f"Choi matrix asymmetry {asym:.3e} exceeds {tol:g}")
    return herm(C)


def choi_to_kraus(C: np.ndarray, din: int, dout: int | None = None, cutoff: float = 1e-12) -> list[np.ndarray]:
    """Kraus operators from the eigendecomposition of a PSD Choi matrix."""
    dout = dout or C.shape[0] // din
    C = _hermitize(np.asarray(C, dtype=complex))
    w, V = np.linalg.eigh(C)
    if w.min() < -1e-10:
        raise NegativeChoi(f"Choi matrix has eigenvalue {w.min():.3e}; no Kraus form")
    ops = []
    for lam, v in zip(w[::-1], V.T[::-1]):
        if lam > cutoff:
            ops.append(np.sqrt(din * lam) * v.reshape(din, dout).T)
    if not ops:
        ops.append(np.zeros((dout, din), dtype=complex))
    return ops


def super_to_bloch(S: np.ndarray, din: int | None = None, dout: int | None = None) -> BlochAffine:
    """Affine Bloch representation of a trace preserving map."""
    S = np.asarray(S)
    din = din or int(round(np.sqrt(S.shape[1])))
    dout = dout or int(round(np.sqrt(S.shape[0])))
    Fin = hermitian_basis(din)
    Fout = hermitian_basis(dout)
    Ain = np.array([vec(F) for F in Fin]).T
    Aout = np.array([vec(F) for F in Fout]).T
    M = (Aout.conj().T @ S @ Ain).real
    return BlochAffine(delta=M[1:, 1:], shift=M[1:, 0] / np.sqrt(din), din=din, dout=dout)


def bloch_to_super(B: BlochAffine) -> np.ndarray:
    din, dout = B.din, B.dout
    M = np.zeros((dout * dout, din * din))
    M[0, 0] = np.sqrt(din) / np.sqrt(dout)
    M[1:, 0] = B.shift * np.sqrt(din)
    M[1:, 1:] = B.delta
    Ain = np.array([vec(F) for F in hermitian_basis(din)]).T
    Aout = np.array([vec(F) for F in hermitian_basis(dout)]).T
    return Aout @ M @ Ain.conj().T


def _as_super(obj, din=None, dout=None):
    if isinstance(obj, LinearMap):
        return obj.super, obj.din, obj.dout
    if isinstance(obj, KrausSet):
        return kraus_to_super(obj.operators), obj.din, obj.dout
    if isinstance(obj, ChoiMatrix):
        return choi_to_super(obj.data, obj.din, obj.dout), obj.din, obj.dout
    if isinstance(obj, BlochAffine):
        return bloch_to_super(obj), obj.din, obj.dout
    raise TypeError(f"cannot convert {type(obj).__name__}")


def convert(obj, target: str):
    """Convert between map representations.

    Parameters
    ----------
    obj : LinearMap, KrausSet, ChoiMatrix or BlochAffine
    target : {"super", "choi", "kraus", "bloch"}
    """
    S, din, dout = _as_super(obj)
    if target == "super":
        return LinearMap(S, din, dout)
    if target == "choi":
        return ChoiMatrix(super_to_choi(S, din, dout), din, dout)
    if target == "kraus":
        if isinstance(obj, ChoiMatrix):
            return KrausSet(choi_to_kraus(obj.data, din, dout))
        return KrausSet(choi_to_kraus(super_to_choi(S, din, dout), din, dout))
    if target == "bloch":
        return super_to_bloch(S, din, dout)
    raise ValueError(f"unknown representation {target!r}")


# ---------------------------------------------------------------------------
# positivity

def _schmidt_min(C: np.ndarray, d: int, k: int, rng, probes: int, iters: int = 200) -> float:
    """See-saw minimisation of <Psi|C|Psi> over Schmidt rank <= k vectors.

    Psi is written as the ``d x d`` matrix ``A @ B.T`` with ``A, B`` of
    shape ``(d, k)``. Each half step is a Hermitian eigenproblem once the
    fixed factor has orthonormal columns.
    """
    best = np.inf
    eye = np.eye(d)
    for _ in range(probes):
        A = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
        val_old = np.inf
        for _ in range(iters):
            A, _r = np.linalg.qr(A)
            # Psi[i, a] = sum_r A[i, r] B[a, r]
            W = np.einsum("ir,ac->iarc", A, eye).reshape(d * d, k * d)
            Mb = W.conj().T @ C @ W
            w, v = np.linalg.eigh(herm(Mb))
            B = v[:, 0].reshape(k, d).T
            B, _r = np.linalg.qr(B)
            W = np.einsum("ic,ar->iacr", eye, B).reshape(d * d, d * k)
            Ma = W.conj().T @ C @ W
            w, v = np.linalg.eigh(herm(Ma))
            A = v[:, 0].reshape(d, k)
            val = w[0]
            if abs(val_old - val) < 1e-13:
                break
            val_old = val
        best = min(best, float(val))
    return best


def classify(map: LinearMap, k_max: int | None = None, probes: int = 64, seed: int = 0,
             tol: float = 1e-10) -> PositivityVerdict:
    """Positivity classification of a square map from its Choi matrix.

    Complete positivity is decided exactly by the Choi spectrum. Positivity
    and k-positivity are probed by see-saw minimisation of the Choi matrix
    over Schmidt rank limited vectors; a negative value is a certificate of
    violation while a non-negative value is only a reported lower bound.
    """
    if map.din != map.dout:
        raise DimensionMismatch("classify requires a square map")
    d = map.din
    k_max = d if k_max is None else k_max
    if k_max > d:
        raise DimensionMismatch("k_max cannot exceed the dimension")
    C = map.choi
    hp = bool(np.allclose(C, C.conj().T, atol=1e-9))
    Ch = herm(C)
    min_eig = float(np.linalg.eigvalsh(Ch).min())
    cp = min_eig >= -tol
    rng = np.random.default_rng(seed)
    k_lb = {}
    running = np.inf
    for k in range(1, k_max + 1):
        if k == d:
            val = min_eig
        else:
            val = _schmidt_min(Ch, d, k, rng, probes)
        # rank <= k vectors are contained in rank <= k+1
        running = min(running, val)
        k_lb[k] = running
    pos_lb = k_lb[1]
    certified = {
        "cp": True,
        "positive": pos_lb < -tol,
        "k_pos": {k: (v < -tol or k == d) for k, v in k_lb.items()},
    }
    return PositivityVerdict(
        hermiticity_preserving=hp,
        trace_preserving=map.is_trace_preserving(),
        cp=cp,
        min_choi_eig=min_eig,
        positive_lb=pos_lb,
        k_pos_lb=k_lb,
        certified=certified,
    )


# ---------------------------------------------------------------------------
# duality, dilations, norms

def dual(map: LinearMap) -> LinearMap:
    """Hilbert-Schmidt adjoint (Heisenberg picture) of a map."""
    return LinearMap(map.super.conj().T, map.dout, map.din)


def dilate(kraus: KrausSet | Sequence[np.ndarray]):
    """Stinespring isometry and complementary channel of a Kraus set.

    Returns
    -------
    V : ndarray of shape ``(dout * dE, din)``
        ``V = sum_e K_e (x) |e>``, output ordered as (system, environment).
    complementary : LinearMap
        ``Phi^c(rho) = Tr_out(V rho V^dag)`` with entries ``Tr(K_e rho K_f^dag)``.
    """
    ks = kraus if isinstance(kraus, KrausSet) else KrausSet(kraus)
    if not ks.is_trace_preserving():
        raise NotTracePreserving("dilation requires a trace preserving Kraus set")
    ops = ks.operators
    dE = len(ops)
    din, dout = ks.din, ks.dout
    V = np.zeros((dout * dE, din), dtype=complex)
    for e, K in enumerate(ops):
        V[e::dE, :] = K
    # Phi^c(rho)[e, f] = Tr(K_e rho K_f^dag); Kraus ops R_a[e, i] = K_e[a, i]
    comp = [np.array([K[a, :] for K in ops]) for a in range(dout)]
    return V, kraus_map(comp)


def map_norms(map: LinearMap, X: np.ndarray) -> dict:
    """Contraction ratios ``||Phi(X)||_1/||X||_1`` and ``||Phi^dag(X)||_inf/||X||_inf``."""
    X = np.asarray(X, dtype=complex)
    n1 = trace_norm(X)
    ninf = np.linalg.norm(X, 2)
    if n1 == 0:
        raise ZeroInput("X must be non-zero")
    out = {"trace_norm_ratio": trace_norm(map(X)) / n1}
    if map.din == map.dout:
        out["op_norm_ratio"] = float(np.linalg.norm(dual(map)(X), 2) / ninf)
    return out


# ---------------------------------------------------------------------------
# random objects (test oracles and probes)

def random_unitary(d: int, rng=None) -> np.ndarray:
    rng = np.random.default_rng(rng)
    Z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_pure_state(d: int, rng=None) -> np.ndarray:
    rng = np.random.default_rng(rng)
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def random_state(d: int, rng=None, rank: int | None = None) -> np.ndarray:
    """Random density matrix from the induced (Ginibre) measure."""
    rng = np.random.default_rng(rng)
    rank = rank or d
    G = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_kraus(d: int, n: int = 3, rng=None, dout: int | None = None) -> list[np.ndarray]:
    """Random trace preserving Kraus set, Gram-normalised."""
    rng = np.random.default_rng(rng)
    dout = dout or d
    ops = [rng.normal(size=(dout, d)) + 1j * rng.normal(size=(dout, d)) for _ in range(n)]
    G = sum(K.conj().T @ K for K in ops)
    Gm = la.fractional_matrix_power(G, -0.5)
    return [K @ Gm for K in ops]


def random_channel(d: int, n: int = 3, rng=None) -> LinearMap:
    return kraus_map(random_kraus(d, n, rng))
