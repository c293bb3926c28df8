"""Divergences, fidelities, variances and pinching maps.

All logarithms are natural.  A divergence that is infinite by its support
rules returns ``math.inf`` (a true IEEE infinity, never a large finite
stand-in), so ``math.isinf`` is the test for it.  Inputs given as 1-D arrays
are treated as probability vectors and as 2-D arrays as density matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chanmodel import ClassicalChannel, CqChannel, SUPPORT_TOL, hermitize

INF = math.inf
ALPHA_ONE_WINDOW = 1e-6


def is_infinite(v) -> bool:
    return isinstance(v, float) and math.isinf(v)


def _check_pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return a, b


def _eigh(a):
    w, v = np.linalg.eigh(hermitize(np.asarray(a, dtype=complex)))
    return w, v


def psd_power(a, p: float, ev=None) -> np.ndarray:
    """``a**p`` on the support of a PSD matrix (pseudo-power for p < 0)."""
    w, v = _eigh(a) if ev is None else ev
    keep = w > SUPPORT_TOL
    wp = np.zeros_like(w)
    wp[keep] = w[keep] ** p
    return (v * wp) @ v.conj().T


def psd_sqrt(a) -> np.ndarray:
    w, v = _eigh(a)
    # rounding-level eigenvalues would contribute ~1e-8 after the square root
    floor = 8 * np.finfo(float).eps * w.size * max(float(np.max(np.abs(w))), 1e-300)
    return (v * np.sqrt(np.where(w > floor, w, 0.0))) @ v.conj().T


def support_projector(a, ev=None) -> np.ndarray:
    w, v = _eigh(a) if ev is None else ev
    vs = v[:, w > SUPPORT_TOL]
    return vs @ vs.conj().T


def _outside_mass(rho, sig_ev) -> float:
    """Weight of ``rho`` outside the support of ``sigma``."""
    w, v = sig_ev
    vk = v[:, w <= SUPPORT_TOL]
    if vk.shape[1] == 0:
        return 0.0
    return float(np.real(np.trace(vk.conj().T @ rho @ vk)))


def _support_leak(rho, sig_ev) -> bool:
    """True when supp(rho) is not contained in supp(sigma)."""
    w, v = sig_ev
    vk = v[:, w <= SUPPORT_TOL]
    if vk.shape[1] == 0:
        return False
    blk = vk.conj().T @ rho @ vk
    return float(np.max(np.linalg.eigvalsh(hermitize(blk)))) > SUPPORT_TOL


# ---------------------------------------------------------------------------
# relative entropies

def rel_entropy(rho, sigma) -> float:
    """Umegaki relative entropy ``D(rho||sigma)`` in nats."""
    rho, sigma = _check_pair(rho, sigma)
    if rho.ndim == 1:
        p, q = rho.astype(float), sigma.astype(float)
        sp = p > SUPPORT_TOL
        if np.any(sp & (q <= SUPPORT_TOL)):
            return INF
        return float(max(np.sum(p[sp] * np.log(p[sp] / q[sp])), 0.0))
    rw, rv = _eigh(rho)
    sev = _eigh(sigma)
    if _support_leak(rho, sev):
        return INF
    sw, sv = sev
    keep = rw > SUPPORT_TOL
    t1 = np.sum(rw[keep] * np.log(rw[keep]))
    ks = sw > SUPPORT_TOL
    logs = (sv[:, ks] * np.log(sw[ks])) @ sv[:, ks].conj().T
    t2 = np.real(np.trace(hermitize(rho) @ logs))
    return float(max(t1 - t2, 0.0))


def renyi_div_classical(p, q, alpha: float) -> float:
    """Classical Renyi divergence ``D_alpha(p||q)``."""
    p, q = _check_pair(p, q)
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if abs(alpha - 1) < ALPHA_ONE_WINDOW:
        return rel_entropy(p, q)
    sp = p > SUPPORT_TOL
    sq = q > SUPPORT_TOL
    if alpha > 1 and np.any(sp & ~sq):
        return INF
    both = sp & sq
    if not np.any(both):
        return INF
    s = np.sum(p[both] ** alpha * q[both] ** (1 - alpha))
    if s <= 0:
        return INF
    return float(math.log(s) / (alpha - 1))


def _rho_factor(rho):
    """``K`` with ``rho = K K^dagger`` and ``K`` of full column rank."""
    w, v = _eigh(rho)
    keep = w > SUPPORT_TOL
    return v[:, keep] * np.sqrt(w[keep])


def _compressed_spectrum(K, sig_pow):
    """Eigen-decomposition of ``K^dagger sigma^s K`` (same nonzero spectrum
    as ``rho^1/2 sigma^s rho^1/2``) with numerically-zero modes dropped."""
    a = hermitize(K.conj().T @ sig_pow @ K)
    aw, av = np.linalg.eigh(a)
    top = max(float(aw[-1]), 0.0) if aw.size else 0.0
    keep = aw > max(1e-13 * top, 1e-300)
    return aw[keep], av[:, keep]


def _sandwiched_q(rho, sev, alpha):
    """Trace functional ``Tr (rho^1/2 sigma^s rho^1/2)^alpha``, s=(1-a)/a."""
    s = (1 - alpha) / alpha
    K = _rho_factor(rho)
    aw, _ = _compressed_spectrum(K, psd_power(None, s, ev=sev))
    return float(np.sum(aw**alpha))


def sandwiched_div(rho, sigma, alpha: float) -> float:
    """Sandwiched Renyi divergence ``D~_alpha(rho||sigma)``.

    Uses ``Tr(sigma^g rho sigma^g)^alpha = Tr(rho^1/2 sigma^2g rho^1/2)^alpha``
    with ``g = (1-alpha)/(2 alpha)`` and powers of ``sigma`` on its support.
    Diagonal 1-D inputs fall through to :func:`renyi_div_classical`.
    """
    rho, sigma = _check_pair(rho, sigma)
    if rho.ndim == 1:
        return renyi_div_classical(rho, sigma, alpha)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if abs(alpha - 1) < ALPHA_ONE_WINDOW:
        return rel_entropy(rho, sigma)
    rho = hermitize(np.asarray(rho, complex))
    sev = _eigh(sigma)
    if alpha > 1 and _support_leak(rho, sev):
        return INF
    if alpha < 1:
        # perpendicular supports
        ps = support_projector(None, ev=sev)
        if np.real(np.trace(ps @ rho)) <= SUPPORT_TOL:
            return INF
    qv = _sandwiched_q(rho, sev, alpha)
    if qv <= 0:
        return INF
    return float(math.log(qv) / (alpha - 1))


def max_rel_entropy(rho, sigma) -> float:
    """``D_max(rho||sigma)``: log of the largest generalized eigenvalue."""
    rho, sigma = _check_pair(rho, sigma)
    if rho.ndim == 1:
        p, q = np.asarray(rho, float), np.asarray(sigma, float)
        sp = p > SUPPORT_TOL
        if np.any(sp & (q <= SUPPORT_TOL)):
            return INF
        return float(math.log(np.max(p[sp] / q[sp])))
    sev = _eigh(sigma)
    if _support_leak(rho, sev):
        return INF
    isq = psd_power(None, -0.5, ev=sev)
    lam = np.linalg.eigvalsh(hermitize(isq @ rho @ isq))[-1]
    return float(math.log(lam))


# ---------------------------------------------------------------------------
# fidelity

def root_fidelity(rho, sigma) -> float:
    """``||sqrt(rho) sqrt(sigma)||_1``."""
    rho, sigma = _check_pair(rho, sigma)
    if rho.ndim == 1:
        v = np.sum(np.sqrt(np.clip(rho, 0, None) * np.clip(sigma, 0, None)))
    else:
        v = np.sum(np.linalg.svd(psd_sqrt(rho) @ psd_sqrt(sigma), compute_uv=False))
    return float(min(max(v, 0.0), 1.0))


def fidelity(rho, sigma) -> float:
    """Squared fidelity ``F = ||sqrt(rho) sqrt(sigma)||_1^2``."""
    return root_fidelity(rho, sigma) ** 2


def eps_from_root_fidelity(f: float) -> float:
    """``sqrt(1 - f^2)`` computed as ``sqrt((1-f)(1+f))``."""
    f = min(max(float(f), 0.0), 1.0)
    return math.sqrt((1.0 - f) * (1.0 + f))


def purified_distance(rho, sigma) -> float:
    return eps_from_root_fidelity(root_fidelity(rho, sigma))


def _rows(W):
    if isinstance(W, ClassicalChannel):
        return list(W.matrix)
    if isinstance(W, CqChannel):
        return list(W.states)
    return list(np.asarray(W))


def channel_purified_distance(W, Wt) -> float:
    """Worst-case purified distance ``max_x P(W_x, Wt_x)``."""
    a, b = _rows(W), _rows(Wt)
    if len(a) != len(b):
        raise ValueError("channels have different input alphabets")
    return max(purified_distance(x, y) for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# commuting pairs

def joint_spectrum(rho, omega, tol: float = 1e-9):
    """Eigenvalue pairs of two commuting Hermitian matrices in a shared basis."""
    rho, omega = _check_pair(rho, omega)
    if rho.ndim == 1:
        return np.asarray(rho, float), np.asarray(omega, float), None
    rho = hermitize(np.asarray(rho, complex))
    omega = hermitize(np.asarray(omega, complex))
    if np.max(np.abs(rho @ omega - omega @ rho)) > tol:
        raise ValueError("inputs do not commute")
    # a generic combination separates the joint eigenspaces
    _, v = np.linalg.eigh(rho + math.pi * omega)
    a = np.real(np.einsum("ij,jk,ki->i", v.conj().T, rho, v))
    b = np.real(np.einsum("ij,jk,ki->i", v.conj().T, omega, v))
    return a, b, v


def div_variance(rho, omega) -> float:
    """Variance of ``log(rho/omega)`` under ``rho`` for a commuting pair."""
    p, w, _ = joint_spectrum(rho, omega)
    sp = p > SUPPORT_TOL
    if np.any(sp & (w <= SUPPORT_TOL)):
        raise ValueError("supp(rho) is not contained in supp(omega)")
    p = p[sp]
    p = p / p.sum()
    llr = np.log(p / w[sp])
    m = np.sum(p * llr)
    return float(max(np.sum(p * (llr - m) ** 2), 0.0))


def min_nonzero_eig(a) -> float:
    a = np.asarray(a)
    w = a if a.ndim == 1 else np.linalg.eigvalsh(hermitize(a))
    return float(np.min(w[w > SUPPORT_TOL]))


def var_bound(d: int, omega_min: float) -> float:
    """Variance bound ``2 log^2 d + log^2 omega_min + 4``."""
    return 2 * math.log(d) ** 2 + math.log(omega_min) ** 2 + 4


# ---------------------------------------------------------------------------
# pinching

@dataclass(frozen=True)
class PinchingMap:
    """Spectral projectors of a Hermitian operator, one per distinct eigenvalue."""

    projections: tuple
    eigenvalues: tuple

    @property
    def nu(self) -> int:
        return len(self.projections)

    def __call__(self, a) -> np.ndarray:
        a = np.asarray(a, complex)
        return sum(P @ a @ P for P in self.projections)


def pinching_map(H, tol: float = 1e-10) -> PinchingMap:
    H = np.asarray(H)
    if H.ndim == 1:
        H = np.diag(H)
    H = np.asarray(H, complex)
    if np.max(np.abs(H - H.conj().T)) > 1e-9:
        raise ValueError("H is not Hermitian")
    w, v = _eigh(H)
    scale = max(1.0, float(np.max(np.abs(w))))
    groups = [[0]]
    for i in range(1, len(w)):
        if w[i] - w[groups[-1][-1]] <= tol * scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    projs = tuple(v[:, g] @ v[:, g].conj().T for g in groups)
    vals = tuple(float(np.mean(w[g])) for g in groups)
    return PinchingMap(projs, vals)


def pinch(H, A) -> np.ndarray:
    """Pinching ``sum_i P_i A P_i`` over the spectral projectors of ``H``."""
    return pinching_map(H)(A)


def pinching_count(H) -> int:
    """Number of distinct eigenvalues of ``H``."""
    return pinching_map(H).nu


# ---------------------------------------------------------------------------
# gradients with respect to the second argument (used by the solvers)

def _divided_differences(w, f, fprime):
    """Loewner matrix of divided differences of ``f`` on eigenvalues ``w``."""
    d = len(w)
    fw = f(w)
    out = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            dw = w[i] - w[j]
            if abs(dw) > 1e-9 * max(abs(w[i]), abs(w[j]), 1e-300):
                out[i, j] = (fw[i] - fw[j]) / dw
            else:
                out[i, j] = fprime(0.5 * (w[i] + w[j]))
    return out


def frechet_adjoint(sig_ev, f, fprime, B) -> np.ndarray:
    """Gradient of ``sigma -> Tr(B f(sigma))`` for Hermitian ``B``."""
    w, v = sig_ev
    L = _divided_differences(w, f, fprime)
    return v @ (L * (v.conj().T @ B @ v)) @ v.conj().T


def sandwiched_value_grad(rho, sigma, alpha: float, sig_ev=None):
    """Value and gradient in ``sigma`` of ``D~_alpha(rho||sigma)``.

    ``sigma`` must be positive definite.  For ``alpha`` within the unit
    window the Umegaki relative entropy and its gradient are returned.
    """
    sig_ev = _eigh(sigma) if sig_ev is None else sig_ev
    w, v = sig_ev
    rho = hermitize(np.asarray(rho, complex))
    if abs(alpha - 1) < ALPHA_ONE_WINDOW:
        rw = np.linalg.eigvalsh(rho)
        rw = rw[rw > SUPPORT_TOL]
        logs = (v * np.log(w)) @ v.conj().T
        val = float(np.sum(rw * np.log(rw)) - np.real(np.trace(rho @ logs)))
        g = -frechet_adjoint(sig_ev, np.log, lambda t: 1.0 / t, rho)
        return val, hermitize(g)
    s = (1 - alpha) / alpha
    K = _rho_factor(rho)
    aw, av = _compressed_spectrum(K, (v * w**s) @ v.conj().T)
    qv = float(np.sum(aw**alpha))
    Ka = K @ av
    B = alpha * (Ka * aw ** (alpha - 1)) @ Ka.conj().T
    gq = frechet_adjoint(sig_ev, lambda t: t**s, lambda t: s * t ** (s - 1), hermitize(B))
    val = math.log(qv) / (alpha - 1)
    return val, hermitize(gq / ((alpha - 1) * qv))
