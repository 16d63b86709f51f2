"""Information-theoretic monotones, distances and monotone metrics.

All matrix functions go through a Hermitian eigendecomposition with an
eigenvalue floor of ``1e-14``.  Natural logarithms throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NonDifferentiable, NotTracePreserving, SingularState, SupportViolation
from .repcore import KrausSet, LinearMap, dilate, herm, kraus_map, partial_trace, random_state, trace_norm

EIG_FLOOR = 1e-14
SUPPORT_TOL = 1e-12


def _eigh(rho):
    w, V = np.linalg.eigh(herm(np.asarray(rho, dtype=complex)))
    return w, V


def mpow(rho, p: float) -> np.ndarray:
    """Power of a PSD matrix; eigenvalues below the floor are treated as zero."""
    w, V = _eigh(rho)
    w = np.where(w > EIG_FLOOR, w, 0.0)
    wp = np.zeros_like(w)
    pos = w > 0
    wp[pos] = w[pos] ** p
    return (V * wp) @ V.conj().T


def msqrt(rho) -> np.ndarray:
    return mpow(rho, 0.5)


def entropy(rho) -> float:
    """von Neumann entropy with ``0 log 0 = 0``."""
    w = _eigh(rho)[0]
    w = w[w > EIG_FLOOR]
    return float(-np.sum(w * np.log(w)))


def _support_ok(rho, sigma, tol=SUPPORT_TOL) -> bool:
    # supp rho within supp sigma  <=>  P_ker(sigma) rho P_ker(sigma) = 0
    w, V = _eigh(sigma)
    ker = V[:, w <= tol]
    if ker.shape[1] == 0:
        return True
    return float(np.abs(ker.conj().T @ rho @ ker).max()) <= tol


def _log_on_support(sigma) -> np.ndarray:
    w, V = _eigh(sigma)
    lw = np.where(w > EIG_FLOOR, np.log(np.maximum(w, EIG_FLOOR)), 0.0)
    return (V * lw) @ V.conj().T


# ---------------------------------------------------------------------------
# divergences

@dataclass(frozen=True)
class DivergenceSpec:
    """Divergence selector.

    Parameters
    ----------
    kind : {"relative", "renyi", "sandwiched", "skew"}
    alpha : float
        Order for the Renyi families, in (0,1) or (1, inf).
    mu : float
        Mixing weight for the skew divergence, in (0, 1).
    """

    kind: str = "relative"
    alpha: float = 0.5
    mu: float = 0.5

    def __post_init__(self):
        if self.kind not in ("relative", "renyi", "sandwiched", "skew"):
            raise ValueError(f"unknown divergence kind {self.kind!r}")
        if self.kind in ("renyi", "sandwiched") and (self.alpha <= 0 or self.alpha == 1):
            raise ValueError("alpha must lie in (0,1) or (1,inf)")
        if self.kind == "skew" and not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0,1)")

    @classmethod
    def parse(cls, text: str) -> "DivergenceSpec":
        """Parse ``"relative"``, ``"renyi(0.5)"``, ``"sandwiched(2)"`` or ``"skew(0.3)"``."""
        text = text.strip()
        if "(" not in text:
            return cls(text)
        name, arg = text.rstrip(")").split("(")
        val = float(arg)
        return cls(name, mu=val) if name == "skew" else cls(name, alpha=val)


def relative_entropy(rho, sigma, strict: bool = False) -> float:
    """``S(rho||sigma) = Tr rho (log rho - log sigma)``; ``+inf`` on support violation."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if not _support_ok(rho, sigma):
        if strict:
            raise SupportViolation("supp rho is not contained in supp sigma")
        return float("inf")
    val = -entropy(rho) - np.trace(rho @ _log_on_support(sigma)).real
    return float(max(val, 0.0)) if val > -1e-12 else float(val)


def divergence(spec: DivergenceSpec | str, rho, sigma, strict: bool = False) -> float:
    """Evaluate a quantum divergence.

    Returns ``inf`` when the support condition fails and the divergence is
    unbounded there; with ``strict=True`` a :class:`SupportViolation` is raised
    instead.  The skew divergence is always finite.
    """
    if isinstance(spec, str):
        spec = DivergenceSpec.parse(spec)
    rho = herm(np.asarray(rho, dtype=complex))
    sigma = herm(np.asarray(sigma, dtype=complex))
    if spec.kind == "relative":
        return relative_entropy(rho, sigma, strict)
    if spec.kind == "skew":
        mu = spec.mu
        return float(relative_entropy(rho, mu * rho + (1 - mu) * sigma) / np.log(1 / mu))
    a = spec.alpha
    supp = _support_ok(rho, sigma)
    if not supp and (a > 1 or spec.kind == "sandwiched"):
        if strict:
            raise SupportViolation("supp rho is not contained in supp sigma")
        return float("inf")
    if spec.kind == "renyi":
        q = np.trace(mpow(rho, a) @ mpow(sigma, 1 - a)).real
    else:
        s = mpow(sigma, (1 - a) / (2 * a))
        q = np.trace(mpow(s @ rho @ s, a)).real
    if q <= 0:
        if strict:
            raise SupportViolation("rho and sigma have orthogonal supports")
        return float("inf")
    return float(np.log(q) / (a - 1))


# ---------------------------------------------------------------------------
# distances

def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    r = msqrt(rho)
    w = _eigh(r @ np.asarray(sigma, dtype=complex) @ r)[0]
    return float(min(np.sum(np.sqrt(np.maximum(w, 0.0))) ** 2, 1.0))


def affinity(rho, sigma) -> float:
    return float(np.trace(msqrt(rho) @ msqrt(sigma)).real)


def bloch_vector(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    return np.array([2 * rho[0, 1].real, -2 * rho[0, 1].imag, (rho[0, 0] - rho[1, 1]).real])


def hubner_bures_sq(x1, x2) -> float:
    """Closed-form squared Bures distance between qubits with Bloch vectors ``x1``, ``x2``."""
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    r = np.sqrt(max(1 - x1 @ x1, 0.0)) * np.sqrt(max(1 - x2 @ x2, 0.0))
    return float(2 - np.sqrt(2) * np.sqrt(max(1 + x1 @ x2 + r, 0.0)))


def distances(rho, sigma) -> dict:
    """Trace, fidelity-based, affinity-based and Hilbert-Schmidt distances.

    ``trace`` is the full trace norm ``||rho - sigma||_1``; ``trace_half`` is
    the usual half-normalised trace distance in [0, 1].
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    F = fidelity(rho, sigma)
    A = min(affinity(rho, sigma), 1.0)
    tn = trace_norm(rho - sigma)
    out = {
        "trace": tn,
        "trace_half": 0.5 * tn,
        "fidelity": F,
        "bures_distance": float(np.sqrt(max(2 * (1 - np.sqrt(F)), 0.0))),
        "bures_angle": float(np.arccos(np.sqrt(F))),
        "affinity": A,
        "wy_angle": float(np.arccos(A)),
        "hs": float(np.linalg.norm(rho - sigma)),
    }
    if rho.shape == (2, 2):
        out["bures_distance_hubner"] = float(np.sqrt(max(hubner_bures_sq(bloch_vector(rho), bloch_vector(sigma)), 0.0)))
    return out


# ---------------------------------------------------------------------------
# state discrimination

def discriminate(ensemble: Sequence[tuple]) -> dict:
    """Optimal guessing probability for an ensemble ``[(p_i, rho_i), ...]``.

    Two states: exact Helstrom value.  More states: the pretty-good
    measurement success probability, which is a certified lower bound on the
    optimum (``exact`` is then False).
    """
    ps = np.array([float(p) for p, _ in ensemble])
    rhos = [np.asarray(r, dtype=complex) for _, r in ensemble]
    if abs(ps.sum() - 1) > 1e-9 or (ps < 0).any():
        raise ValueError("weights must be non-negative and sum to one")
    if len(rhos) == 2:
        val = 0.5 * (1 + trace_norm(ps[0] * rhos[0] - ps[1] * rhos[1]))
        return {"helstrom": float(val), "guess_prob": float(val), "exact": True}
    avg = sum(p * r for p, r in zip(ps, rhos))
    m = mpow(avg, -0.5)
    # pseudo-inverse square root on the support only
    val = sum(p * np.trace(r @ m @ (p * r) @ m).real for p, r in zip(ps, rhos))
    return {"pgm_bound": float(val), "guess_prob": float(val), "exact": False}


# ---------------------------------------------------------------------------
# quantum Fisher information

def sld(rho, drho, cutoff: float = 1e-12) -> np.ndarray:
    """Symmetric logarithmic derivative solving ``rho L + L rho = 2 drho``.

    Components with ``p_i + p_j < cutoff`` are dropped (projected SLD).
    """
    w, V = _eigh(rho)
    w = np.maximum(w, 0.0)
    D = V.conj().T @ np.asarray(drho, dtype=complex) @ V
    S = w[:, None] + w[None, :]
    Lk = np.where(S >= cutoff, 2 * D / np.where(S >= cutoff, S, 1.0), 0.0)
    return V @ Lk @ V.conj().T


def fisher(rho_fn: Callable[[float], np.ndarray], theta: float, h: float = 1e-5,
           smooth_tol: float = 1e-3) -> dict:
    """Quantum Fisher information of a one-parameter family via the SLD.

    The derivative uses a fourth-order central difference.  If the
    second-order and fourth-order estimates disagree by more than
    ``smooth_tol`` (relative) the family is reported as non-differentiable.
    """
    r = [np.asarray(rho_fn(theta + k * h), dtype=complex) for k in (-2, -1, 1, 2)]
    if not all(np.all(np.isfinite(x)) for x in r):
        raise NonDifferentiable("rho(theta) is not finite near theta")
    d2 = (r[2] - r[1]) / (2 * h)
    d4 = (r[0] - 8 * r[1] + 8 * r[2] - r[3]) / (12 * h)
    scale = max(np.abs(d4).max(), 1.0)
    if np.abs(d4 - d2).max() > smooth_tol * scale:
        raise NonDifferentiable("central differences disagree; rho(theta) is not smooth at theta")
    rho = np.asarray(rho_fn(theta), dtype=complex)
    L = sld(rho, d4)
    qfi = float(np.trace(rho @ L @ L).real)
    return {"qfi": max(qfi, 0.0), "sld": L}


# ---------------------------------------------------------------------------
# information measures

def mutual_information(rho_ab, dims: Sequence[int]) -> float:
    ra = partial_trace(rho_ab, dims, 0)
    rb = partial_trace(rho_ab, dims, 1)
    return entropy(ra) + entropy(rb) - entropy(rho_ab)


def _kraus_of(channel) -> KrausSet:
    if isinstance(channel, KrausSet):
        return channel
    if isinstance(channel, LinearMap):
        return KrausSet(channel.kraus())
    return KrausSet(channel)


def info_measures(rho, channel=None, dims: Sequence[int] | None = None,
                  coherent_via_mutual: bool = False) -> dict:
    """Entropic quantities of a bipartite state or of a (state, channel) pair.

    Parameters
    ----------
    rho : ndarray
        Bipartite state (with ``dims``) or channel input.
    channel : KrausSet, LinearMap or sequence of Kraus operators, optional
    dims : pair of ints, optional
        Subsystem dimensions for the bipartite case.
    coherent_via_mutual : bool
        Report ``coherent_info`` as ``S(Phi rho) - I(rho, Phi)``, which
        reduces to ``S(Phi^c rho) - S(rho)``, instead of the standard
        ``S(Phi rho) - S(Phi^c rho)``.
    """
    rho = np.asarray(rho, dtype=complex)
    out: dict = {}
    if dims is not None:
        out["mutual_info"] = mutual_information(rho, dims)
    if channel is None:
        return out
    ks = _kraus_of(channel)
    if not ks.is_trace_preserving(1e-8):
        raise NotTracePreserving("channel is not trace preserving")
    _, comp = dilate(ks)
    out_state = kraus_map(ks.operators)(rho)
    env_state = comp(rho)
    s_in, s_out, s_env = entropy(rho), entropy(out_state), entropy(env_state)
    io = s_in + s_out - s_env
    out.update({
        "entropy_exchange": s_env,
        "input_output_info": io,
        "coherent_info": (s_out - io) if coherent_via_mutual else (s_out - s_env),
    })
    return out


def capacity_search(channel, kind: str = "coherent", restarts: int = 20, rng=None) -> float:
    """Random-restart maximisation over input states; an uncertified lower bound.

    ``kind`` is ``"coherent"`` (single-use quantum capacity proxy) or
    ``"ea"`` (entanglement-assisted, via ``I(rho, Phi)``).
    """
    from scipy.optimize import minimize

    ks = _kraus_of(channel)
    d = ks.din
    key = "coherent_info" if kind == "coherent" else "input_output_info"
    rng = np.random.default_rng(rng)

    def state(x):
        G = (x[: d * d] + 1j * x[d * d:]).reshape(d, d)
        r = G @ G.conj().T
        return r / np.trace(r).real

    def obj(x):
        return -info_measures(state(x), ks)[key]

    best = info_measures(np.eye(d) / d, ks)[key]
    for _ in range(restarts):
        res = minimize(obj, rng.normal(size=2 * d * d), method="Nelder-Mead",
                       options={"maxiter": 400 * d, "xatol": 1e-6, "fatol": 1e-9})
        best = max(best, -res.fun)
    return float(best)


# ---------------------------------------------------------------------------
# skew information

def wyd_skew(rho, X, p: float = 0.5, pq_normalized: bool = False) -> float:
    """Wigner-Yanase-Dyson skew information.

    The default normalisation ``-1/2 Tr([rho^p, X][rho^{1-p}, X])`` equals the
    variance of ``X`` on pure states.  ``pq_normalized=True`` uses the
    ``1/(p(1-p))`` prefactor instead, which is ``2/(p(1-p))`` times larger.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    X = np.asarray(X, dtype=complex)
    a = mpow(rho, p)
    b = mpow(rho, 1 - p)
    val = -np.trace((a @ X - X @ a) @ (b @ X - X @ b)).real
    return float(val / (p * (1 - p)) if pq_normalized else 0.5 * val)


# ---------------------------------------------------------------------------
# monotone metrics

_PRESETS = {
    "bures": lambda t: (1.0 + t) / 2.0,
    "wigner-yanase": lambda t: (np.sqrt(t) + 1.0) ** 2 / 4.0,
}


@dataclass(frozen=True)
class MetricSpec:
    """Monotone Riemannian metric fixed by a Morozova-Cencov function.

    ``k`` is passed either by preset name or as a callable; the metric
    coefficient is ``c(x, y) = 1 / (y k(x / y))``.  The presets are
    ``k(t) = (1+t)/2`` (Bures, ``c = 2/(x+y)``) and
    ``k(t) = (sqrt t + 1)^2/4`` (Wigner-Yanase, ``c = 4/(sqrt x + sqrt y)^2``).
    Both reduce to ``1/x`` on the diagonal, and the Bures metric equals the
    SLD quantum Fisher information, i.e. four times the squared Bures line
    element.
    """

    k: str | Callable = "bures"

    def __post_init__(self):
        if isinstance(self.k, str) and self.k not in _PRESETS:
            raise ValueError(f"unknown metric preset {self.k!r}")
        ts = np.array([0.05, 0.3, 1.0, 2.0, 7.5])
        kf = self.kfun
        if abs(kf(1.0) - 1.0) > 1e-12:
            raise ValueError("k(1) must equal 1")
        if not np.allclose([kf(t) for t in ts], [t * kf(1 / t) for t in ts], rtol=1e-10):
            raise ValueError("k violates the symmetry t k(1/t) = k(t)")

    @property
    def kfun(self) -> Callable:
        return _PRESETS[self.k] if isinstance(self.k, str) else self.k

    def c(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return 1.0 / (y * self.kfun(x / y))


def metric_eval(spec: MetricSpec | str, rho, A, B=None) -> float:
    """``g_rho(A, B) = sum_ij conj(A_ij) B_ij c(p_i, p_j)`` in the eigenbasis of rho."""
    if isinstance(spec, str):
        spec = MetricSpec(spec)
    w, V = _eigh(rho)
    if w.min() <= EIG_FLOOR:
        raise SingularState("metric requires a full-rank state")
    Ak = V.conj().T @ np.asarray(A, dtype=complex) @ V
    Bk = Ak if B is None else V.conj().T @ np.asarray(B, dtype=complex) @ V
    C = spec.c(w[:, None], w[None, :])
    return float(np.sum(np.conj(Ak) * Bk * C).real)


def volume(traj_or_supers) -> np.ndarray:
    """``|det Lambda_t|`` of the map restricted to traceless operators.

    For trace-preserving maps this equals the volume contraction of the
    accessible Bloch region up to a constant.
    """
    supers = getattr(traj_or_supers, "supers", traj_or_supers)
    supers = np.asarray(supers)
    return np.abs(np.linalg.det(supers))


def monotone_series(traj, rho, sigma=None, rng=None) -> dict:
    """Witness time series along a trajectory for a pair of inputs.

    Returns trace distance, relative entropy, sandwiched-1/2 divergence,
    fidelity complement and ``|det|``.
    """
    rng = np.random.default_rng(rng)
    d = traj.supers.shape[1]
    d = int(round(np.sqrt(d)))
    sigma = random_state(d, rng) if sigma is None else sigma
    td, rel, sw, fc = [], [], [], []
    from .repcore import unvec, vec

    for S in traj.supers:
        r = unvec(S @ vec(rho), d)
        s = unvec(S @ vec(sigma), d)
        td.append(0.5 * trace_norm(r - s))
        rel.append(relative_entropy(r, s))
        sw.append(divergence(DivergenceSpec("sandwiched", alpha=0.5), r, s))
        fc.append(1 - fidelity(r, s))
    return {
        "trace": np.array(td),
        "relative": np.array(rel),
        "sandwiched_half": np.array(sw),
        "fidelity_complement": np.array(fc),
        "det": volume(traj),
    }
