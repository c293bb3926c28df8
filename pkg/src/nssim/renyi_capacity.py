"""Channel Renyi mutual informations with certified two-sided brackets.

Every solver returns a :class:`CapacityResult` whose ``upper_cert`` is the
objective at a feasible output reference (``max_x D(W_x||q)`` or the same
with ``sigma``) and whose ``lower_cert`` comes from weak duality at an input
distribution ``p``.

Classical channels use the closed-form inner minimiser over ``q`` for a
fixed ``p``, so the lower side is exact for that ``p``::

    inf_q D_a(W o p || p x q) = a/(a-1) log sum_y (sum_x p_x W(y|x)^a)^(1/a)

and it lower-bounds ``inf_q max_x D_a(W_x||q)`` because the left side is a
quasi-arithmetic mean of the ``D_a(W_x||q)``.

Quantum references are optimised over a Cholesky parametrisation and
certified from below by linearisation: for convex ``f_x`` and any ``p``,
``inf_s sum_x p_x f_x(s) >= sum_x p_x [f_x(s0) - <G_x, s0>] +
lambda_min(sum_x p_x G_x)`` with ``G_x`` the gradient at ``s0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .chanmodel import ClassicalChannel, CqChannel, SUPPORT_TOL, hermitize
from .infoquant import (ALPHA_ONE_WINDOW, INF, max_rel_entropy, renyi_div_classical,
                        sandwiched_value_grad)

DEFAULT_TOL = 1e-6
MAX_ITER = 100_000
DIM_CAP = 6


@dataclass
class CapacityResult:
    value: float
    minimizer: np.ndarray
    upper_cert: float
    lower_cert: float
    iterations: int
    input_dist: np.ndarray | None = None
    converged: bool = True
    info: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.upper_cert - self.lower_cert


class NonConvergenceError(RuntimeError):
    """Raised when the bracket does not close; carries the best result."""

    def __init__(self, msg, result):
        super().__init__(msg)
        self.result = result


def _check_alpha(alpha):
    if not alpha >= 0.5:
        raise ValueError(f"alpha={alpha} < 1/2 is not supported by the minimax form")


def _finish(res: CapacityResult, tol: float, strict: bool, what: str):
    res.value = 0.5 * (res.lower_cert + res.upper_cert)
    res.converged = res.gap <= tol
    if not res.converged and strict:
        raise NonConvergenceError(
            f"{what}: gap {res.gap:.3e} > tol {tol:.1e} after {res.iterations} iterations", res)
    return res


# ---------------------------------------------------------------------------
# classical

def _sibson(Wm, p, alpha):
    """Lower value, optimal reference and objective gradient at ``p``.

    The objective optimised over ``p`` is ``G(p)`` below, maximised for
    ``alpha >= 1`` and minimised for ``alpha < 1``; both are convex problems.
    """
    if abs(alpha - 1) < ALPHA_ONE_WINDOW:
        q = p @ Wm
        d = np.array([renyi_div_classical(w, q, 1.0) for w in Wm])
        d = np.where(np.isfinite(d), d, 0.0)
        val = float(p @ d)
        return val, q, val, d
    A = p @ Wm**alpha
    Aa = A ** (1 / alpha)
    G = Aa.sum()
    q = Aa / G
    val = alpha / (alpha - 1) * math.log(G)
    with np.errstate(divide="ignore"):
        Ap = np.where(A > 0, A ** (1 / alpha - 1), 0.0)
    grad = (Wm**alpha) @ Ap / alpha
    return val, q, G, grad


def _upper_classical(Wm, q, alpha):
    d = [renyi_div_classical(w, q, alpha) for w in Wm]
    return max(d), np.array(d)


def _best_reference(Wm, q, alpha):
    """Evaluate the max-divergence at ``q`` and a few smoothed variants."""
    out_supp = Wm.max(axis=0) > SUPPORT_TOL
    u = out_supp / out_supp.sum()
    best = None
    for th in (0.0, 1e-12, 1e-9, 1e-6):
        qq = (1 - th) * q + th * u
        val, _ = _upper_classical(Wm, qq, alpha)
        if best is None or val < best[0]:
            best = (val, qq)
    return best


def renyi_mi_classical(W: ClassicalChannel, alpha: float, tol: float = DEFAULT_TOL,
                       max_iter: int = MAX_ITER, strict: bool = True) -> CapacityResult:
    """Renyi mutual information ``I_alpha(W) = inf_q max_x D_alpha(W_x||q)``.

    Parameters
    ----------
    W : ClassicalChannel
    alpha : float
        Order, at least 1/2.
    tol : float
        Required width of the certified bracket.

    Returns
    -------
    CapacityResult
        ``minimizer`` is the output distribution ``q``; ``input_dist`` the
        input distribution used for the lower certificate.
    """
    _check_alpha(alpha)
    Wm = W.matrix
    nx = Wm.shape[0]
    one = abs(alpha - 1) < ALPHA_ONE_WINDOW
    sign = -1.0 if (one or alpha > 1) else 1.0  # minimise sign * G

    def fun(p):
        p = np.clip(p, 0, None)
        _, _, G, g = _sibson(Wm, p, alpha)
        return sign * G, sign * g

    best = None
    iters = 0
    starts = [np.full(nx, 1.0 / nx)]
    starts += [np.eye(nx)[x] * 0.5 + 0.5 / nx for x in range(min(nx, 4))]
    for p0 in starts:
        res = minimize(fun, p0, jac=True, method="SLSQP", bounds=[(0, 1)] * nx,
                       constraints=[{"type": "eq", "fun": lambda p: p.sum() - 1,
                                     "jac": lambda p: np.ones_like(p)}],
                       options={"ftol": 1e-16, "maxiter": 500})
        iters += res.nit
        p = np.clip(res.x, 0, None)
        p = p / p.sum()
        lo, q, _, _ = _sibson(Wm, p, alpha)
        up, q_up = _best_reference(Wm, q, alpha)
        if best is None or up - lo < best[0] - best[1]:
            best = (up, lo, p, q_up)
        if up - lo <= tol * 1e-2:
            break
    up, lo, p, q = best
    # multiplicative refinement when SLSQP stalls
    k = 0
    stall, last_gap = 0, up - lo
    while up - lo > tol * 1e-2 and k < min(max_iter, 20000) and stall < 200:
        _, qq, _, _ = _sibson(Wm, p, alpha)
        _, dvec = _upper_classical(Wm, qq, alpha)
        dvec = np.where(np.isfinite(dvec), dvec, np.nanmax(dvec[np.isfinite(dvec)]) + 1)
        p = p * np.exp(0.5 * (dvec - dvec.max()))
        p = p / p.sum()
        l2, q2, _, _ = _sibson(Wm, p, alpha)
        u2, q2 = _best_reference(Wm, q2, alpha)
        if l2 > lo:
            lo = l2
        if u2 < up:
            up, q = u2, q2
        k += 1
        # near alpha = 1 the Sibson value is rounding-limited
        if up - lo < 0.99 * last_gap:
            stall, last_gap = 0, up - lo
        else:
            stall += 1
    iters += k
    lo = max(lo, 0.0)
    res = CapacityResult(value=0.0, minimizer=q, upper_cert=float(up), lower_cert=float(min(lo, up)),
                         iterations=int(iters), input_dist=p)
    return _finish(res, tol, strict, "renyi_mi_classical")


def max_mi_classical(W: ClassicalChannel) -> float:
    """``I_max(W) = log sum_y max_x W(y|x)`` (the alpha -> inf limit)."""
    return float(math.log(W.matrix.max(axis=0).sum()))


# ---------------------------------------------------------------------------
# quantum: generic minimisation of a max of convex functions over states

def _n_params(d):
    return d * d


def _chol(theta, d):
    L = np.zeros((d, d), dtype=complex)
    L[np.diag_indices(d)] = theta[:d]
    il = np.tril_indices(d, -1)
    m = len(il[0])
    L[il] = theta[d:d + m] + 1j * theta[d + m:d + 2 * m]
    return L


def _chol_grad(L, G, d):
    """Gradient in the real parameters of ``Tr(G L L^dagger)``."""
    B = 2.0 * (G @ L)  # d/dRe L_ij = 2 Re (G L)_ij, d/dIm L_ij = 2 Im (G L)_ij
    il = np.tril_indices(d, -1)
    return np.concatenate([np.real(np.diag(B)), np.real(B[il]), np.imag(B[il])])


def _theta_from_state(sig):
    d = sig.shape[0]
    L = np.linalg.cholesky(hermitize(sig) + 1e-13 * np.eye(d))
    il = np.tril_indices(d, -1)
    th = np.concatenate([np.real(np.diag(L)), np.real(L[il]), np.imag(L[il])])
    return th / np.linalg.norm(th)


_RIDGE = 1e-13


def _state_of(theta, d):
    L = _chol(theta, d)
    s = L @ L.conj().T
    s = hermitize(s + _RIDGE * np.eye(d))
    return s / np.real(np.trace(s)), L


def _lower_by_linearisation(vals, grads, sig, tol, max_cuts=120):
    """Maximise ``sum_x p_x a_x + lambda_min(sum_x p_x G_x)`` over the simplex.

    Kelley cutting planes in ``p``: ``lambda_min(S) = min_v v^dag S v`` is a
    minimum of linear functions of ``p``.  Every evaluated ``p`` yields a
    valid bound; the best one is returned.
    """
    m = len(vals)
    a = np.array([vals[x] - np.real(np.trace(grads[x] @ sig)) for x in range(m)])

    def phi(p):
        S = hermitize(np.tensordot(p, grads, axes=1))
        w, v = np.linalg.eigh(S)
        return float(p @ a + w[0]), v[:, 0]

    cuts = []
    d = sig.shape[0]
    for x in range(m):
        _, v = np.linalg.eigh(grads[x])
        cuts.extend(v.T)
    cuts.extend(np.eye(d))
    best_val, best_p = -INF, None
    p = np.full(m, 1.0 / m)
    for it in range(max_cuts):
        val, v = phi(p)
        if val > best_val:
            best_val, best_p = val, p
        cuts.append(v)
        if m == 1:
            break
        # LP over (p, t): max a.p + t  s.t. t <= sum_x p_x v^dag G_x v
        C = np.array([[np.real(np.vdot(c, grads[x] @ c)) for x in range(m)] for c in cuts])
        A_ub = np.hstack([-C, np.ones((len(cuts), 1))])
        res = linprog(np.concatenate([-a, [-1.0]]), A_ub=A_ub, b_ub=np.zeros(len(cuts)),
                      A_eq=np.concatenate([np.ones(m), [0.0]])[None, :], b_eq=[1.0],
                      bounds=[(0, None)] * m + [(None, None)], method="highs")
        if res.status != 0:
            break
        p = np.clip(res.x[:m], 0, None)
        p = p / p.sum()
        if -res.fun - best_val <= tol * 0.02:
            val, _ = phi(p)
            best_val = max(best_val, val)
            if val >= best_val:
                best_p = p
            break
    return best_val, best_p


def minimize_max_over_states(func, d: int, sig0=None, tol: float = DEFAULT_TOL,
                             max_iter: int = MAX_ITER, nonneg: bool = True):
    """Minimise ``max_x f_x(sigma)`` over ``d``-dimensional density matrices.

    ``func(sigma, ev)`` returns ``(values, gradients)`` with shapes ``(m,)``
    and ``(m, d, d)``; each ``f_x`` must be convex.  ``nonneg`` allows the
    trivial lower bound 0 (all divergences of order >= 1/2 are nonnegative).

    Returns ``(upper, lower, sigma, p, iterations)``.
    """
    if d == 1:
        sig = np.ones((1, 1), complex)
        vals, _ = func(sig, np.linalg.eigh(sig))
        v = float(np.max(vals))
        return v, v, sig, np.eye(len(vals))[int(np.argmax(vals))], 0
    sig0 = np.eye(d) / d if sig0 is None else sig0
    theta0 = _theta_from_state(sig0)
    cache = {}

    def ev(theta):
        key = theta.tobytes()
        if key not in cache:
            if len(cache) > 8:
                cache.clear()
            sig, L = _state_of(theta, d)
            e = np.linalg.eigh(sig)
            vals, grads = func(sig, e)
            # chain rule through the normalisation sig = LL^dag / tr(LL^dag)
            nrm = np.real(np.trace(L @ L.conj().T)) + d * _RIDGE
            J = []
            for g in grads:
                gc = g - np.real(np.trace(g @ sig)) * np.eye(d)
                J.append(_chol_grad(L, gc, d) / nrm)
            cache[key] = (np.asarray(vals, float), np.array(J), sig)
        return cache[key]

    best = None
    iters = 0
    theta = theta0
    for rnd in range(6):
        t0 = float(np.max(ev(theta)[0]))
        z0 = np.concatenate([theta, [t0]])
        cons = [
            {"type": "ineq", "fun": lambda z: z[-1] - ev(z[:-1])[0],
             "jac": lambda z: np.hstack([-ev(z[:-1])[1], np.ones((len(ev(z[:-1])[0]), 1))])},
            {"type": "eq", "fun": lambda z: np.dot(z[:-1], z[:-1]) - 1.0,
             "jac": lambda z: np.concatenate([2 * z[:-1], [0.0]])},
        ]
        res = minimize(lambda z: z[-1], z0, jac=lambda z: np.eye(len(z0))[-1],
                       method="SLSQP", constraints=cons,
                       options={"ftol": 1e-15, "maxiter": 1000})
        iters += res.nit
        th = res.x[:-1] / np.linalg.norm(res.x[:-1])
        vals, _, sig = ev(th)
        if not np.all(np.isfinite(vals)):
            th = theta
            vals, _, sig = ev(th)
        up = float(np.max(vals))
        e = np.linalg.eigh(sig)
        vals, grads = func(sig, e)
        lo, p = _lower_by_linearisation(np.asarray(vals), np.asarray(grads), sig, tol)
        if nonneg:
            lo = max(lo, 0.0)
        if best is None or up - lo < best[0] - best[1]:
            best = (up, lo, sig, p)
        if best[0] - best[1] <= tol * 0.5 or iters >= max_iter:
            break
        # restart from a slightly mixed version of the incumbent
        theta = _theta_from_state(0.95 * best[2] + 0.05 * np.eye(d) / d)
    up, lo, sig, p = best
    return up, min(lo, up), sig, p, iters


def _support_basis(mats):
    avg = hermitize(sum(mats) / len(mats))
    w, v = np.linalg.eigh(avg)
    return v[:, w > SUPPORT_TOL * 10]


def renyi_mi_cq(W: CqChannel, alpha: float, tol: float = DEFAULT_TOL,
                max_iter: int = MAX_ITER, strict: bool = True,
                dim_cap: int = DIM_CAP) -> CapacityResult:
    """Sandwiched Renyi mutual information ``inf_s max_x D~_alpha(W_x||s)``.

    The reference is restricted to the joint support of the states, which
    loses nothing for alpha >= 1/2 (pinching onto that support and
    renormalising can only decrease every divergence).
    """
    _check_alpha(alpha)
    if isinstance(W, ClassicalChannel):
        W = W.as_cq()
    if W.dim > dim_cap:
        raise ValueError(f"output dimension {W.dim} exceeds cap {dim_cap}")
    V = _support_basis(W.states)
    r = V.shape[1]
    comp = [hermitize(V.conj().T @ s @ V) for s in W.states]

    def func(sig, e):
        out = [sandwiched_value_grad(c, sig, alpha, sig_ev=e) for c in comp]
        return np.array([o[0] for o in out]), np.array([o[1] for o in out])

    sig0 = hermitize(sum(comp) / len(comp))
    up, lo, sig, p, it = minimize_max_over_states(func, r, sig0=sig0, tol=tol,
                                                  max_iter=max_iter)
    full = hermitize(V @ sig @ V.conj().T)
    res = CapacityResult(0.0, full, float(up), float(lo), int(it), input_dist=p)
    return _finish(res, tol, strict, "renyi_mi_cq")


def _psd_part(y):
    w, v = np.linalg.eigh(hermitize(np.asarray(y)))
    return (v * np.clip(w, 0, None)) @ v.conj().T


_CONIC_SETTINGS = ({}, {"tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10, "tol_feas": 1e-10,
                        "max_iter": 400})


def max_mi_cq(W: CqChannel) -> tuple:
    """Bracket on ``inf_s max_x D_max(W_x||s) = log min{tr S : S >= W_x}``.

    Solved as a semidefinite program, then certified: the primal ``S`` is
    shifted until every ``S - W_x`` is PSD (upper), and the dual operators
    are rescaled to satisfy ``sum_x Y_x <= I`` (lower).  Two solver settings
    are tried and the tighter certificate on each side is kept.
    """
    import cvxpy as cp

    if isinstance(W, ClassicalChannel):
        v = max_mi_classical(W)
        return v, v
    d = W.dim
    upper, lower = INF, -INF
    for opts in _CONIC_SETTINGS:
        S = cp.Variable((d, d), hermitian=True)
        cons = [S - s >> 0 for s in W.states]
        prob = cp.Problem(cp.Minimize(cp.real(cp.trace(S))), cons)
        if not _solve(prob, opts):
            continue
        Sv = hermitize(S.value)
        shift = max(0.0, max(-np.linalg.eigvalsh(hermitize(Sv - s))[0] for s in W.states))
        upper = min(upper, math.log(np.real(np.trace(Sv)) + d * shift))
        Y = [cp.Variable((d, d), hermitian=True) for _ in W.states]
        obj = sum(cp.real(cp.trace(y @ s)) for y, s in zip(Y, W.states))
        dprob = cp.Problem(cp.Maximize(obj), [y >> 0 for y in Y] + [np.eye(d) - sum(Y) >> 0])
        if not _solve(dprob, opts):
            continue
        Ys = [_psd_part(y.value) for y in Y]
        top = np.linalg.eigvalsh(hermitize(sum(Ys)))[-1]
        val = sum(np.real(np.trace(y @ s)) for y, s in zip(Ys, W.states)) / max(top, 1e-300)
        if val > 0:
            lower = max(lower, math.log(val))
    if not np.isfinite(upper):
        raise RuntimeError("max_mi_cq: conic solver failed")
    return float(upper), float(min(lower, upper))


def _solve(prob, opts=None) -> bool:
    """Solve with CLARABEL (SCS as fallback); False when no usable point."""
    import warnings
    import cvxpy as cp
    opts = {} if opts is None else opts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            prob.solve(solver=cp.CLARABEL, **opts)
        except cp.error.SolverError:
            try:
                prob.solve(solver=cp.SCS, eps=1e-9, max_iters=200000)
            except cp.error.SolverError:
                return False
    return prob.status in ("optimal", "optimal_inaccurate")


# ---------------------------------------------------------------------------
# bipartite

def partial_trace(rho, dims, keep: int) -> np.ndarray:
    """Reduced state of a bipartite operator; ``keep`` is 0 (A) or 1 (B)."""
    dA, dB = dims
    t = np.asarray(rho).reshape(dA, dB, dA, dB)
    if keep == 0:
        return np.einsum("ijkj->ik", t)
    return np.einsum("ijik->jk", t)


def _compress_bipartite(rho, dims):
    dA, dB = dims
    rA = partial_trace(rho, dims, 0)
    rB = partial_trace(rho, dims, 1)
    VA = _support_basis([rA])
    VB = _support_basis([rB])
    V = np.kron(VA, VB)
    rc = hermitize(V.conj().T @ rho @ V)
    return rc, (VA.shape[1], VB.shape[1]), VB


def bipartite_smi(rho_AB, dims, alpha: float, tol: float = DEFAULT_TOL,
                  max_iter: int = MAX_ITER, strict: bool = True) -> CapacityResult:
    """``inf_{s_B} D~_alpha(rho_AB || rho_A x s_B)`` with a certified bracket."""
    _check_alpha(alpha)
    rho = hermitize(np.asarray(rho_AB, complex))
    if rho.shape != (dims[0] * dims[1],) * 2:
        raise ValueError("rho_AB shape does not match dims")
    rc, (a, b), VB = _compress_bipartite(rho, dims)
    rA = partial_trace(rc, (a, b), 0)
    rAI = np.kron(rA, np.eye(b))

    def func(sig, e):
        tau = np.kron(rA, sig)
        val, G = sandwiched_value_grad(rc, tau, alpha)
        gB = partial_trace(rAI @ G, (a, b), 1)
        return np.array([val]), np.array([hermitize(gB)])

    sig0 = partial_trace(rc, (a, b), 1)
    up, lo, sig, _, it = minimize_max_over_states(func, b, sig0=sig0, tol=tol,
                                                  max_iter=max_iter)
    full = hermitize(VB @ sig @ VB.conj().T)
    res = CapacityResult(0.0, full, float(up), float(lo), int(it))
    return _finish(res, tol, strict, "bipartite_smi")


def bipartite_max_mi(rho_AB, dims) -> tuple:
    """Bracket on ``inf_{s_B} D_max(rho_AB || rho_A x s_B)`` (order infinity)."""
    import cvxpy as cp

    rho = hermitize(np.asarray(rho_AB, complex))
    rc, (a, b), _ = _compress_bipartite(rho, dims)
    rA = partial_trace(rc, (a, b), 0)
    rAI = np.kron(rA, np.eye(b))
    upper, lower = INF, -INF
    for opts in _CONIC_SETTINGS:
        S = cp.Variable((b, b), hermitian=True)
        con = cp.kron(rA, S) - rc >> 0
        prob = cp.Problem(cp.Minimize(cp.real(cp.trace(S))), [con])
        if not _solve(prob, opts):
            continue
        Sv = hermitize(S.value)
        # smallest shift c with rA x (S + c I) >= rc
        lam = np.linalg.eigvalsh(hermitize(np.kron(rA, Sv) - rc))[0]
        shift = -lam / np.linalg.eigvalsh(rA)[0] if lam < 0 else 0.0
        upper = min(upper, math.log(np.real(np.trace(Sv)) + b * shift))
        # dual program solved as its own primal: Y >= 0, Tr_A[(rA x I) Y] <= I
        Y = cp.Variable((a * b, a * b), hermitian=True)
        red = cp.partial_trace(rAI @ Y, [a, b], axis=0)
        dprob = cp.Problem(cp.Maximize(cp.real(cp.trace(Y @ rc))),
                           [Y >> 0, np.eye(b) - red >> 0])
        if not _solve(dprob, opts):
            continue
        Yv = _psd_part(Y.value)
        top = np.linalg.eigvalsh(hermitize(partial_trace(rAI @ Yv, (a, b), 1)))[-1]
        val = np.real(np.trace(Yv @ rc)) / max(top, 1e-300)
        if val > 0:
            lower = max(lower, math.log(val))
    if not np.isfinite(upper):
        raise RuntimeError("bipartite_max_mi: conic solver failed")
    return float(upper), float(min(lower, upper))


def max_rel_entropy_mi_at(rho_AB, dims, sigma_B) -> float:
    """``D_max(rho_AB || rho_A x sigma_B)`` at a given reference."""
    rA = partial_trace(rho_AB, dims, 0)
    return max_rel_entropy(rho_AB, np.kron(rA, sigma_B))
