"""One-shot non-signaling simulation error with certified brackets.

Classical program: maximise ``min_x sum_y sqrt(W(y|x) Wt(y|x))`` over
row-stochastic ``Wt`` and distributions ``q`` on the output alphabet with
``Wt(y|x) <= M q(y)``.  For fixed ``q`` each row decouples into a
water-filling problem with the closed form ``u_y = min(M q_y, k w_y)``, so
the program reduces to the concave maximisation of
``V(q) = min_x g_x(q)`` over the simplex.  Supergradients of ``g_x`` come
from the cap multipliers; every supergradient inequality is a valid cut and
the cutting-plane LP gives the upper certificate.

Cq program: maximise ``min_x sqrt F(W_x, Wt_x)`` subject to
``Wt_x <= M sigma``, written as a semidefinite program through
``sqrt F(r, s) = max{Re tr X : [[r, X], [X^dag, s]] >= 0}``.  The upper
certificate is assembled from any input distribution ``p``, positive
``Y_x`` and real ``l_x`` via

    sum_x p_x sqrt F_x <= 1/2 sum_x p_x tr(W_x Y_x) + sum_x l_x
                          + M lambda_max(sum_x (p_x Y_x^-1 / 2 - l_x)_+)

which holds for every feasible point (Alberti's bound plus weak duality).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .chanmodel import (ClassicalChannel, CqChannel, all_sequences, check_entries,
                        enumerate_types, hermitize, product_dist, representative_sequence,
                        tensor_power_classical, type_labels)
from .infoquant import eps_from_root_fidelity, root_fidelity

DEFAULT_TOL = 1e-6
CQ_DIM_CAP = 64
FEAS_TOL = 1e-9


@dataclass
class NsSolution:
    channel: object
    reference: np.ndarray
    fidelity_lb: float
    fidelity_ub: float
    M: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def eps_lb(self) -> float:
        return eps_from_root_fidelity(math.sqrt(self.fidelity_ub))

    @property
    def eps_ub(self) -> float:
        return eps_from_root_fidelity(math.sqrt(self.fidelity_lb))

    @property
    def width(self) -> float:
        return self.eps_ub - self.eps_lb

    @property
    def eps(self) -> float:
        return 0.5 * (self.eps_lb + self.eps_ub)

    @property
    def one_minus_eps(self) -> tuple:
        return 1.0 - self.eps_ub, 1.0 - self.eps_lb


def _check_M(M):
    if not M >= 1:
        raise ValueError(f"M={M} must be at least 1")


# ---------------------------------------------------------------------------
# classical water-filling

def waterfill(w: np.ndarray, c: np.ndarray):
    """Solve ``max sum_y sqrt(w_y u_y)`` s.t. ``sum u = 1``, ``0 <= u <= c``.

    Vectorised over the rows of ``w``; ``c`` is shared and ``sum(c) >= 1``.

    Returns
    -------
    value : (R,) array
    u : (R, Y) array
        Optimal rows (exactly feasible).
    mu : (R, Y) array
        Multipliers of the caps, a supergradient of the value in ``c``.
    """
    w = np.atleast_2d(w)
    R, Y = w.shape
    pos = w > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pos, c[None, :] / np.where(pos, w, 1.0), np.inf)
    order = np.argsort(ratio, axis=1, kind="stable")
    rs = np.take_along_axis(ratio, order, axis=1)
    cs = np.take_along_axis(np.broadcast_to(c, (R, Y)) * pos, order, axis=1)
    ws = np.take_along_axis(w * pos, order, axis=1)
    C = np.concatenate([np.zeros((R, 1)), np.cumsum(cs, axis=1)], axis=1)
    Wc = np.concatenate([np.zeros((R, 1)), np.cumsum(ws, axis=1)], axis=1)
    wtot = Wc[:, -1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        kap = (1.0 - C) / (wtot - Wc)
    lo = np.concatenate([np.zeros((R, 1)), rs], axis=1)
    hi = np.concatenate([rs, np.full((R, 1), np.inf)], axis=1)
    ok = (kap >= lo * (1 - 1e-12)) & (kap <= hi * (1 + 1e-12)) & np.isfinite(kap) & (kap > 0)
    kappa = np.full(R, np.inf)
    for i in range(R):
        js = np.flatnonzero(ok[i])
        if js.size:
            kappa[i] = kap[i, js[0]]
    with np.errstate(invalid="ignore"):
        kw = np.where(pos, kappa[:, None] * w, 0.0)
    u = np.where(pos, np.minimum(c[None, :], kw), 0.0)
    # leftover mass goes to outputs the row never produces
    left = 1.0 - u.sum(axis=1)
    free = np.where(~pos, c[None, :], 0.0)
    fs = free.sum(axis=1)
    for i in np.flatnonzero(left > 0):
        if fs[i] > 0:
            u[i] += left[i] * free[i] / fs[i]
        else:
            u[i] += left[i] * w[i]
    val = np.sum(np.sqrt(w * u), axis=1)
    capped = pos & (c[None, :] <= kw)
    inv = np.where(np.isfinite(kappa), 0.5 / np.sqrt(kappa), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(capped, 0.5 * np.sqrt(w) / np.sqrt(np.maximum(c[None, :], 1e-300)) - inv[:, None], 0.0)
    mu = np.maximum(mu, 0.0)
    return val, u, mu


class _ReducedProgram:
    """``max_z min_r g_r(E z)`` with ``z`` constant on output groups."""

    def __init__(self, rows, M, groups=None, mult=None):
        self.rows = np.asarray(rows, float)
        self.M = float(M)
        Y = self.rows.shape[1]
        self.groups = np.arange(Y) if groups is None else np.asarray(groups)
        G = int(self.groups.max()) + 1
        self.G = G
        self.mult = np.bincount(self.groups, minlength=G).astype(float) if mult is None else np.asarray(mult, float)
        self.n_eval = 0

    def q_of(self, z):
        return z[self.groups]

    def evaluate(self, z):
        """Values and supergradients (in ``z``) of every row."""
        self.n_eval += 1
        q = self.q_of(z)
        val, u, mu = waterfill(self.rows, self.M * q)
        grad = np.zeros((len(val), self.G))
        for r in range(len(val)):
            grad[r] = np.bincount(self.groups, weights=self.M * mu[r], minlength=self.G)
        return val, grad, u

    def interior(self, z, th=1e-9):
        zu = np.full(self.G, 1.0 / self.mult.sum())
        return (1 - th) * z + th * zu

    def normalize(self, z):
        z = np.clip(np.nan_to_num(np.asarray(z, float), nan=0.0), 0, None)
        tot = self.mult @ z
        if not np.isfinite(tot) or tot <= 0:
            return np.full(self.G, 1.0 / self.mult.sum())
        return z / tot


def _slsqp_maxmin(prog: _ReducedProgram, z0, weights=None, maxiter=400):
    """Local solve of ``max t`` s.t. ``g_r(z) >= t`` (or a weighted sum)."""
    G = prog.G
    cache = {}

    def ev(z):
        k = z.tobytes()
        if k not in cache:
            if len(cache) > 4:
                cache.clear()
            zz = np.maximum(z, 1e-13)
            v, g, _ = prog.evaluate(zz)
            cache[k] = (v, g)
        return cache[k]

    eq = {"type": "eq", "fun": lambda x: prog.mult @ x[:G] - 1.0,
          "jac": lambda x: np.concatenate([prog.mult, [0.0]])}
    if weights is None:
        cons = [{"type": "ineq", "fun": lambda x: ev(x[:G])[0] - x[G],
                 "jac": lambda x: np.hstack([ev(x[:G])[1], -np.ones((len(ev(x[:G])[0]), 1))])}, eq]
        obj = (lambda x: -x[G], lambda x: -np.eye(G + 1)[G])
        t0 = float(np.min(ev(z0)[0]))
    else:
        cons = [eq]
        obj = (lambda x: -(weights @ ev(x[:G])[0]),
               lambda x: np.concatenate([-(weights @ ev(x[:G])[1]), [0.0]]))
        t0 = 0.0
    x0 = np.concatenate([z0, [t0]])
    res = minimize(obj[0], x0, jac=obj[1], method="SLSQP", constraints=cons,
                   bounds=[(0, None)] * G + [(None, None)],
                   options={"ftol": 1e-15, "maxiter": maxiter})
    return prog.normalize(res.x[:G]), res.nit


def _cut_lp(prog, cuts, weights=None):
    """Upper bound from supergradient cuts: max_z min_r model_r(z)."""
    G = prog.G
    if weights is None:
        A, b = [], []
        for (zk, vk, gk) in cuts:
            # t - g_r(zk) - gk_r.(z - zk) <= 0
            A.append(np.hstack([-gk, np.ones((len(vk), 1))]))
            b.append(vk - gk @ zk)
        A = np.vstack(A)
        b = np.concatenate(b)
    else:
        A = np.array([np.concatenate([-(weights @ gk), [1.0]]) for (zk, vk, gk) in cuts])
        b = np.array([weights @ vk - (weights @ gk) @ zk for (zk, vk, gk) in cuts])
    c = np.zeros(G + 1)
    c[G] = -1.0
    res = linprog(c, A_ub=A, b_ub=b, A_eq=np.concatenate([prog.mult, [0.0]])[None, :], b_eq=[1.0],
                  bounds=[(0, None)] * G + [(None, 1.0)], method="highs")
    if res.status != 0:
        return 1.0, None
    return float(-res.fun), prog.normalize(res.x[:G])


def _eps_width(lo, hi):
    return eps_from_root_fidelity(lo) - eps_from_root_fidelity(hi)


def solve_reduced(prog: _ReducedProgram, tol: float, weights=None, starts=(), max_rounds=200):
    """Bracket ``[lo, hi]`` on the optimal (weighted) root fidelity.

    Returns ``(lo, hi, z_best, info)``.
    """
    def score(v):
        return float(np.min(v)) if weights is None else float(weights @ v)

    G = prog.G
    cand = [np.full(G, 1.0 / prog.mult.sum())] + [prog.normalize(np.asarray(s, float)) for s in starts]
    best_lo, best_z = -1.0, None
    cuts = []
    nit = 0
    for z0 in cand:
        z, it = _slsqp_maxmin(prog, z0, weights=weights)
        nit += it
        for zz in (z, z0):
            zz = prog.normalize(zz)
            v, g, _ = prog.evaluate(zz)
            if score(v) > best_lo:
                best_lo, best_z = score(v), zz
            zi = prog.interior(prog.normalize(zz))
            vi, gi, _ = prog.evaluate(zi)
            cuts.append((zi, vi, gi))
    hi, zlp = _cut_lp(prog, cuts, weights)
    rounds = 0
    while rounds < max_rounds and hi - best_lo > 1e-13 and _eps_width(best_lo, hi) > tol * 0.5:
        rounds += 1
        pts = [zlp] if zlp is not None else []
        if zlp is not None:
            pts.append(0.5 * (zlp + best_z))
        for th in (1e-7, 1e-5):
            pts.append(prog.interior(best_z, th))
        for zz in pts:
            zz = prog.normalize(zz)
            v, g, _ = prog.evaluate(zz)
            if score(v) > best_lo:
                best_lo, best_z = score(v), zz
            zi = prog.interior(zz)
            vi, gi, _ = prog.evaluate(zi)
            cuts.append((zi, vi, gi))
        if rounds % 10 == 0:
            # re-polish the incumbent locally
            z, it = _slsqp_maxmin(prog, best_z, weights=weights)
            nit += it
            v, g, _ = prog.evaluate(z)
            if score(v) > best_lo:
                best_lo, best_z = score(v), z
        hi, zlp = _cut_lp(prog, cuts, weights)
    hi = max(min(hi, 1.0), best_lo)
    return best_lo, hi, best_z, {"slsqp_iterations": nit, "cut_rounds": rounds,
                                 "cuts": len(cuts), "evaluations": prog.n_eval}


def _exact_simulation_q(Wm, M):
    env = Wm.max(axis=0)
    s = env.sum()
    if s <= M * (1 + 1e-12):
        return env / s
    return None


def _classical_solution(Wm, q, M, lo, hi, info):
    _, u, _ = waterfill(Wm, M * q)
    slack = float(np.min(M * q[None, :] - u))
    info = dict(info, constraint_slack=slack, row_sum_error=float(np.max(np.abs(u.sum(1) - 1))))
    info["converged"] = _eps_width(lo, hi) <= info.get("tol", DEFAULT_TOL) or hi - lo <= 1e-13
    return NsSolution(ClassicalChannel(u), q, lo * lo, hi * hi, M, info)


def ns_error_classical(W: ClassicalChannel, M: float, tol: float = DEFAULT_TOL) -> NsSolution:
    """Optimal non-signaling simulation error of ``W`` with ``M`` messages.

    Parameters
    ----------
    W : ClassicalChannel
    M : float
        Real simulation size, at least 1.
    tol : float
        Target width of the ``eps`` bracket.

    Returns
    -------
    NsSolution
        ``fidelity_lb`` is attained by the returned ``(Wt, q)``;
        ``fidelity_ub`` comes from the cutting-plane certificate.
    """
    _check_M(M)
    Wm = W.matrix
    q = _exact_simulation_q(Wm, M)
    if q is not None:
        return _classical_solution(Wm, q, M, 1.0, 1.0, {"method": "exact-simulation", "tol": tol})
    prog = _ReducedProgram(Wm, M)
    starts = [Wm.mean(axis=0), Wm.max(axis=0)]
    lo, hi, z, info = solve_reduced(prog, tol, starts=starts)
    info.update(method="cutting-plane", tol=tol)
    return _classical_solution(Wm, prog.q_of(z), M, lo, hi, info)


def _blocklength_classical(W: ClassicalChannel, n: int, M: float, tol: float, symmetric_q: bool):
    nx, ny = W.nx, W.ny
    check_entries((nx * ny) ** n, "classical tensor power")
    Wn = tensor_power_classical(W, n)
    q = _exact_simulation_q(Wn.matrix, M)
    if q is not None:
        return _classical_solution(Wn.matrix, q, M, 1.0, 1.0,
                                   {"method": "exact-simulation", "tol": tol, "n": n})
    # one representative input sequence per type
    types = enumerate_types(n, nx)
    rep_idx = [int(sum(s * nx**i for i, s in enumerate(representative_sequence(t)))) for t in types]
    rows = Wn.matrix[rep_idx]
    if symmetric_q:
        return _iid_reference(W, n, Wn, rows, M, tol)
    labels, ytypes = type_labels(ny, n)
    mult = np.array([t.size() for t in ytypes], float)
    prog = _ReducedProgram(rows, M, groups=labels, mult=mult)
    starts = []
    for row in (W.matrix.mean(axis=0), W.matrix.max(axis=0) / W.matrix.max(axis=0).sum()):
        qn = product_dist(row / row.sum(), n)
        starts.append(np.bincount(labels, weights=qn) / mult)
    lo, hi, z, info = solve_reduced(prog, tol, starts=starts)
    info.update(method="cutting-plane/type-reduced", tol=tol, n=n, x_types=len(types),
                y_types=len(ytypes))
    return _classical_solution(Wn.matrix, prog.q_of(z), M, lo, hi, info)


def _iid_reference(W, n, Wn, rows, M, tol):
    """Restrict ``q`` to product form: a feasible point, so a lower bound only."""
    ny = W.ny
    seqs = all_sequences(ny, n)
    counts = np.stack([(seqs == b).sum(axis=1) for b in range(ny)], axis=1)

    def neg(qy):
        qy = np.clip(qy, 1e-15, None)
        qy = qy / qy.sum()
        qn = product_dist(qy, n)
        v, _, mu = waterfill(rows, M * qn)
        r = int(np.argmin(v))
        dq = (M * mu[r] * qn) @ counts / qy
        return -v[r], -dq

    best = None
    for q0 in (np.full(ny, 1.0 / ny), W.matrix.mean(axis=0)):
        res = minimize(neg, q0, jac=True, method="SLSQP", bounds=[(0, 1)] * ny,
                       constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1}],
                       options={"ftol": 1e-14, "maxiter": 300})
        qy = np.clip(res.x, 1e-15, None)
        qy /= qy.sum()
        v = -neg(qy)[0]
        if best is None or v > best[0]:
            best = (v, qy)
    v, qy = best
    qn = product_dist(qy, n)
    vals, _, _ = waterfill(Wn.matrix, M * qn)
    lo = float(vals.min())
    info = {"method": "iid-reference", "lower_bound_only": True, "q_single": qy, "tol": tol, "n": n}
    sol = _classical_solution(Wn.matrix, qn, M, lo, 1.0, info)
    sol.diagnostics["converged"] = False
    return sol


# ---------------------------------------------------------------------------
# classical-quantum

def _perm_operators(d, n, adjacent=False):
    """Unitaries permuting ``n`` tensor factors of dimension ``d``."""
    ops = []
    idx = np.arange(d**n).reshape((d,) * n)
    if adjacent:
        perms = []
        for i in range(n - 1):
            pm = list(range(n))
            pm[i], pm[i + 1] = pm[i + 1], pm[i]
            perms.append(tuple(pm))
    else:
        perms = itertools.permutations(range(n))
    for perm in perms:
        dst = np.transpose(idx, perm).ravel()
        P = np.zeros((d**n, d**n))
        P[dst, np.arange(d**n)] = 1.0
        ops.append(P)
    return ops


def _floored_power(a, p, floor):
    w, v = np.linalg.eigh(hermitize(a))
    return (v * np.maximum(w, floor) ** p) @ v.conj().T


def _dual_upper(states, M, gens=None, group=None):
    """Upper bound on ``max min_x sqrt F`` from an exactly evaluated dual point.

    For ``p`` in the simplex, PSD ``Z_x`` and blocks
    ``[[A_x, -p_x I/2], [-p_x I/2, D_x]] >= 0`` every feasible point obeys
    ``sum_x p_x sqrt F_x <= sum_x tr(W_x A_x) + sum_x lambda_max(D_x - Z_x)
    + M lambda_max(sum_x Z_x)``.  The dual program below only proposes
    ``(p, A, D, Z)``; the bound is recomputed after forcing PSD-ness.  With
    a permutation group the reference is invariant, so the top eigenvalue
    is taken after twirling.
    """
    import cvxpy as cp
    from .renyi_capacity import _CONIC_SETTINGS, _solve

    d = states[0].shape[0]
    k = len(states)
    eye = np.eye(d)
    best = 1.0
    for opts in _CONIC_SETTINGS:
        pv = cp.Variable(k, nonneg=True)
        lv = cp.Variable(k)
        sv = cp.Variable()
        A = [cp.Variable((d, d), hermitian=True) for _ in states]
        D = [cp.Variable((d, d), hermitian=True) for _ in states]
        Z = [cp.Variable((d, d), hermitian=True) for _ in states]
        K = [cp.Variable((d, d), hermitian=True) for _ in (gens or [])]
        tot = sum(Z)
        if K:
            tot = tot + sum(P.T @ q @ P - q for P, q in zip(gens, K))
        cons = [cp.sum(pv) == 1, sv * eye - tot >> 0]
        for i in range(k):
            off = -0.5 * pv[i] * eye
            cons += [cp.bmat([[A[i], off], [off, D[i]]]) >> 0, Z[i] >> 0,
                     lv[i] * eye - D[i] + Z[i] >> 0]
        obj = sum(cp.real(cp.trace(r @ a)) for r, a in zip(states, A)) + cp.sum(lv) + M * sv
        prob = cp.Problem(cp.Minimize(obj), cons)
        if not _solve(prob, opts) or pv.value is None:
            continue
        pp = np.clip(pv.value, 0, None)
        pp = pp / pp.sum()
        Zv = [_psd_clip(z.value) for z in Z]
        top = float(np.linalg.eigvalsh(_twirl(sum(Zv), group))[-1])
        for mode in ("shift", 1e-10, 1e-12, 1e-14):
            val = M * top
            for i, r in enumerate(states):
                Av = hermitize(A[i].value)
                if mode == "shift":
                    Dv = hermitize(D[i].value)
                    blk = np.block([[Av, -0.5 * pp[i] * eye], [-0.5 * pp[i] * eye, Dv]])
                    sh = max(0.0, -float(np.linalg.eigvalsh(blk)[0]))
                    Av, Dv = Av + sh * eye, Dv + sh * eye
                else:
                    Av = _psd_clip(Av) + mode * eye
                    Dv = 0.25 * pp[i] ** 2 * _floored_power(Av, -1.0, 1e-300)
                val += float(np.real(np.trace(r @ Av)))
                val += float(np.linalg.eigvalsh(hermitize(Dv - Zv[i]))[-1])
            best = min(best, val)
    return float(best)


def _psd_clip(a):
    w, v = np.linalg.eigh(hermitize(a))
    return (v * np.clip(w, 0, None)) @ v.conj().T


def _repair_cq(states, sig, Wt, M):
    """Project to an exactly feasible point and evaluate it."""
    sig = _psd_clip(sig)
    sig = sig / np.real(np.trace(sig))
    out = []
    for s in Wt:
        s = _psd_clip(s)
        s = s / np.real(np.trace(s))

        def lam(th):
            return np.linalg.eigvalsh(hermitize(M * sig - ((1 - th) * s + th * sig)))[0]
        if lam(0.0) < 0:
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if lam(mid) >= 0:
                    hi = mid
                else:
                    lo = mid
            s = (1 - hi) * s + hi * sig
        out.append(hermitize(s))
    fids = [root_fidelity(r, s) for r, s in zip(states, out)]
    slack = min(float(np.linalg.eigvalsh(hermitize(M * sig - s))[0]) for s in out)
    return sig, out, fids, slack


def _solve_cq_sdp(states, M, perms=None, weights=None):
    import cvxpy as cp
    from .renyi_capacity import _solve

    d = states[0].shape[0]
    sig = cp.Variable((d, d), hermitian=True)
    t = cp.Variable()
    Zs, Wts, tcons, fcons, bcons = [], [], [], [], []
    cons = [cp.real(cp.trace(sig)) == 1]
    for r in states:
        Z = cp.Variable((2 * d, 2 * d), hermitian=True)
        Wt = Z[d:, d:]
        bc = Z >> 0
        bcons.append(bc)
        cons += [bc, Z[:d, :d] == r, cp.real(cp.trace(Wt)) == 1]
        c = M * sig - Wt >> 0
        fcons.append(c)
        cons.append(c)
        Zs.append(Z)
        Wts.append(Wt)
        if weights is None:
            tc = cp.real(cp.trace(Z[:d, d:])) >= t
            tcons.append(tc)
            cons.append(tc)
    if perms:
        cons += [P @ sig @ P.T == sig for P in perms]
    if weights is None:
        obj = cp.Maximize(t)
    else:
        obj = cp.Maximize(sum(w * cp.real(cp.trace(Z[:d, d:])) for w, Z in zip(weights, Zs)))
    prob = cp.Problem(obj, cons)
    if not _solve(prob):
        raise RuntimeError(f"cq program: solver status {prob.status}")
    Wv = [hermitize(W.value) for W in Wts]
    if weights is None:
        p = np.array([max(float(np.real(tc.dual_value)), 0.0) for tc in tcons])
    else:
        p = np.asarray(weights, float)
    # top-left dual blocks are proportional to the optimal Alberti operators
    Ad = [None if bc.dual_value is None else hermitize(np.asarray(bc.dual_value)[:d, :d]) for bc in bcons]
    return hermitize(sig.value), Wv, p, Ad


def _permute_factors(rho, d, n, pi):
    """Move tensor factor ``pi[i]`` to position ``i`` (little-endian positions)."""
    t = np.asarray(rho).reshape((d,) * (2 * n))
    ket = [n - 1 - pi[n - 1 - a] for a in range(n)]
    return t.transpose(ket + [n + k for k in ket]).reshape(d**n, d**n)


def _twirl(sig, group):
    """Average over all factor permutations; ``group`` is ``(d, n)`` or None."""
    if group is None:
        return hermitize(sig)
    d, n = group
    perms = list(itertools.permutations(range(n)))
    return hermitize(sum(_permute_factors(sig, d, n, pi) for pi in perms) / len(perms))


def _exact_cq_reference(states, M, gens=None, group=None):
    """Invariant ``sigma`` with ``W_x <= M sigma`` when one is found, else None."""
    import cvxpy as cp
    from .renyi_capacity import _solve

    d = states[0].shape[0]
    S = cp.Variable((d, d), hermitian=True)
    cons = [S - r >> 0 for r in states] + [P @ S @ P.T == S for P in (gens or [])]
    prob = cp.Problem(cp.Minimize(cp.real(cp.trace(S))), cons)
    if not _solve(prob):
        return None
    Sv = _twirl(S.value, group)
    shift = max(0.0, max(-np.linalg.eigvalsh(hermitize(Sv - r))[0] for r in states))
    Sv = Sv + shift * np.eye(d)
    sig = Sv / float(np.real(np.trace(Sv)))
    # accepted within the feasibility tolerance, the slack is reported
    if min(np.linalg.eigvalsh(hermitize(M * sig - r))[0] for r in states) < -FEAS_TOL:
        return None
    return sig


def _cq_core(states, M, tol, gens=None, group=None, converse_from=None):
    sig = _exact_cq_reference(states, M, gens, group)
    if sig is not None:
        slack = min(float(np.linalg.eigvalsh(hermitize(M * sig - r))[0]) for r in states)
        info = {"method": "exact-simulation", "tol": tol, "constraint_slack": slack,
                "converged": True}
        return sig, [hermitize(r) for r in states], 1.0, 1.0, info
    sig, Wt, _, blocks = _solve_cq_sdp(states, M, perms=gens)
    sig = _twirl(sig, group)
    sig, Wt, fids, slack = _repair_cq(states, sig, Wt, M)
    lo = float(min(fids))
    hi = min(1.0, _dual_upper(states, M, gens=gens, group=group))
    info = {"method": "sdp", "tol": tol, "dual_upper": hi}
    if converse_from is not None:
        W1, n = converse_from
        cb = _converse_fidelity_cap(W1, n, M)
        info["converse_upper"] = cb
        hi = min(hi, cb)
    hi = max(hi, lo)
    info["constraint_slack"] = slack
    info["converged"] = _eps_width(lo, hi) <= tol
    return sig, Wt, lo, hi, info


def ns_error_cq(W: CqChannel, M: float, tol: float = DEFAULT_TOL,
                dim_cap: int = CQ_DIM_CAP, converse_from=None) -> NsSolution:
    """Optimal non-signaling simulation error of a cq channel.

    ``converse_from`` optionally supplies ``(W1, n)`` when ``W`` is the
    ``n``-fold power of ``W1``; the converse
    ``1 - eps <= exp(-n (1-a)/a (I~_a(W1) - log(M)/n))`` then serves as an
    additional upper certificate on the fidelity.
    """
    _check_M(M)
    if isinstance(W, ClassicalChannel):
        W = W.as_cq()
    if W.dim > dim_cap:
        raise ValueError(f"state dimension {W.dim} exceeds cap {dim_cap}")
    sig, Wt, lo, hi, info = _cq_core(list(W.states), M, tol, converse_from=converse_from)
    return NsSolution(CqChannel(Wt), sig, lo * lo, hi * hi, M, info)


def _converse_fidelity_cap(W1, n, M, alphas=(0.5, 0.6, 0.7, 0.8, 0.9)):
    """Root-fidelity cap implied by ``1 - eps <= exp(-n s (I~_a - r))``."""
    from .renyi_capacity import renyi_mi_cq

    r = math.log(M) / n
    best = 1.0
    for a in alphas:
        res = renyi_mi_cq(W1, a, tol=1e-7, strict=False)
        s = (1 - a) / a
        B = math.exp(min(0.0, -n * s * (res.lower_cert - r)))
        if B < 1:
            best = min(best, math.sqrt(max(0.0, 1 - (1 - B) ** 2)))
    return best


def ns_error_blocklength(W, n: int, r: float, tol: float = DEFAULT_TOL,
                         symmetric_q: bool = False, converse: bool = True) -> NsSolution:
    """``eps^NS(W^{(x)n}, e^{n r})``.

    Both cases are reduced by permutation symmetry without loss: averaging
    an optimal point over simultaneous permutations of inputs and outputs
    keeps it feasible and optimal, so the reference may be taken invariant
    and one input sequence per type suffices.  With ``symmetric_q``
    (classical only) the reference is further restricted to product form,
    which gives a fidelity lower bound only.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if r < 0:
        raise ValueError("rate must be nonnegative")
    M = math.exp(n * r)
    if isinstance(W, ClassicalChannel):
        return _blocklength_classical(W, n, M, tol, symmetric_q)
    d, nx = W.dim, W.nx
    check_entries(nx**n * d ** (2 * n), "cq tensor power")
    if d**n > CQ_DIM_CAP:
        raise ValueError(f"state dimension {d**n} exceeds cap {CQ_DIM_CAP}")
    types = enumerate_types(n, nx)
    reps = [representative_sequence(t) for t in types]

    def state(seq):
        s = np.ones((1, 1), complex)
        for x in seq:
            s = np.kron(W.states[x], s)
        return s

    rep_states = [state(s) for s in reps]
    gens = _perm_operators(d, n, adjacent=True) if n > 1 else None
    group = (d, n) if n > 1 else None
    sig, Wt, lo, hi, info = _cq_core(rep_states, M, tol, gens=gens, group=group,
                                     converse_from=(W, n) if converse else None)
    # every other input sequence: permute the factors of its representative
    tl = {t.counts: j for j, t in enumerate(types)}
    full = []
    for seq in all_sequences(nx, n):
        j = tl[tuple(int(np.sum(seq == a)) for a in range(nx))]
        order = np.argsort(seq, kind="stable")
        pi = np.empty(n, int)
        pi[order] = np.arange(n)
        full.append(hermitize(_permute_factors(Wt[j], d, n, pi)))
    info.update(n=n, x_types=len(types))
    return NsSolution(CqChannel(full), sig, lo * lo, hi * hi, M, info)


# ---------------------------------------------------------------------------
# minimax orderings

def _simplex_grid(m, res):
    for c in itertools.product(range(res + 1), repeat=m - 1):
        if sum(c) <= res:
            yield np.array(list(c) + [res - sum(c)], float) / res


def _avg_value_classical(Wm, M, p, tol):
    prog = _ReducedProgram(Wm, M)
    lo, hi, _, _ = solve_reduced(prog, tol, weights=np.asarray(p, float),
                                 starts=[p @ Wm], max_rounds=60)
    return lo, hi


def _avg_value_cq(states, M, p):
    sig, Wt, _, _ = _solve_cq_sdp(states, M, weights=p)
    sig, Wt, fids, _ = _repair_cq(states, sig, Wt, M)
    return float(np.dot(p, fids))


def minimax_check(W, M: float, tol: float = 1e-6, grid: int = 12, refine: int = 4) -> dict:
    """Compare both orderings of the simulation-error program.

    The inf-max side is the solver value.  The sup-inf side maximises over
    input distributions ``p`` (grid of resolution ``1/grid`` followed by
    ``refine`` rounds of local grids at halved spacing) the optimum of the
    ``p``-averaged distance ``sqrt(1 - (sum_x p_x sqrt F_x)^2)``.
    """
    _check_M(M)
    cq = isinstance(W, CqChannel)
    nx = W.nx
    if nx > 4 or (W.dim if cq else W.ny) > 4:
        raise ValueError("minimax_check is limited to alphabets/dimensions <= 4")
    if cq:
        sol = ns_error_cq(W, M, tol=tol)

        def avg(p):
            return _avg_value_cq(list(W.states), M, p)
    else:
        sol = ns_error_classical(W, M, tol=tol)

        def avg(p):
            return _avg_value_classical(W.matrix, M, p, tol)[0]
    inf_side = sol.eps

    def side(p):
        # inner optimum for fixed p: min over (Wt, q) of the averaged distance
        return eps_from_root_fidelity(min(1.0, avg(p)))

    pts = list(_simplex_grid(nx, grid))
    if len(pts) > 5000:
        raise ValueError("grid budget exceeded")
    vals = [side(p) for p in pts]
    k = int(np.argmax(vals))
    best_p, best = pts[k], vals[k]
    h = 1.0 / grid
    for _ in range(refine):
        h *= 0.5
        improved = True
        while improved:
            improved = False
            for i, j in itertools.permutations(range(nx), 2):
                p = best_p.copy()
                step = min(h, p[j])
                if step <= 0:
                    continue
                p[i] += step
                p[j] -= step
                v = side(p)
                if v > best + 1e-12:
                    best_p, best, improved = p, v, True
    return {"inf_side": inf_side, "sup_side": best, "p_star": best_p,
            "difference": abs(inf_side - best), "grid": grid, "refine": refine,
            "resolution": 1.0 / grid / 2**refine, "inf_bracket": (sol.eps_lb, sol.eps_ub)}
