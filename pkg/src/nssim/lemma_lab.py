"""Randomized checks of the supporting inequalities.

Every suite draws trial ``i`` from ``default_rng([seed, i])``, so the set of
failures depends only on ``(seed, trials)`` and not on how the trials are
distributed over workers.  A failing trial is shrunk by bisecting on a
convex mixture between a passing baseline and the failing input.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chanmodel import (ClassicalChannel, CqChannel, ValidationError, hermitize,
                        random_classical_channel, random_state, random_unitary)
from .infoquant import (div_variance, fidelity, joint_spectrum, min_nonzero_eig, pinching_map,
                        rel_entropy, root_fidelity, var_bound)
from .renyi_capacity import bipartite_max_mi, bipartite_smi, partial_trace

LINALG_TOL = 1e-9
OPT_TOL = 1e-6
MULTIBLOCK_TOL = 1e-8
SHRINK_STEPS = 50
HOLDER_ALPHA = (0.55, 0.95)
_HIST_EDGES = (-math.inf, -1e-6, -1e-9, 0.0, 1e-9, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, math.inf)


@dataclass
class VerificationRun:
    suite: str
    trials: int
    seed: int
    tol: float
    slacks: np.ndarray
    failures: list = field(default_factory=list)
    shrunk: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def min_slack(self) -> float:
        s = self.slacks[np.isfinite(self.slacks)]
        return float(s.min()) if s.size else math.inf

    @property
    def passed(self) -> bool:
        return not self.failures and not self.errors

    @property
    def near_tolerance(self) -> bool:
        """Minimum slack within ten tolerances of failing: passed but worth a look."""
        return self.passed and self.min_slack < 10 * self.tol

    def histogram(self) -> list:
        counts = np.zeros(len(_HIST_EDGES) - 1, int)
        idx = np.searchsorted(_HIST_EDGES, self.slacks, side="right") - 1
        np.add.at(counts, np.clip(idx, 0, len(counts) - 1), 1)
        return [(_HIST_EDGES[i], _HIST_EDGES[i + 1], int(c)) for i, c in enumerate(counts)]

    @property
    def status(self) -> str:
        if not self.passed:
            return "FAIL"
        return "PASS (near tolerance)" if self.near_tolerance else "PASS"

    def to_dict(self) -> dict:
        return {"suite": self.suite, "trials": self.trials, "seed": self.seed, "tol": self.tol,
                "status": self.status, "min_slack": self.min_slack,
                "failures": [{k: v for k, v in f.items() if k != "instance"} for f in self.failures],
                "shrunk": [{k: v for k, v in s.items() if k != "instance"} for s in self.shrunk],
                "errors": self.errors,
                "histogram": [[lo, hi, c] for lo, hi, c in self.histogram()]}

    def to_text(self) -> str:
        lines = [f"suite {self.suite} trials={self.trials} seed={self.seed} tol={self.tol:g} "
                 f"status={self.status} min_slack={self.min_slack!r}"]
        for lo, hi, c in self.histogram():
            if c:
                lines.append(f"  slack in [{lo:g}, {hi:g}): {c}")
        for f in self.failures:
            lines.append(f"  failure trial={f['trial']} slack={f['slack']!r}")
        for s in self.shrunk:
            lines.append(f"  shrunk trial={s['trial']} t={s['t']!r} slack={s['slack']!r}")
        for e in self.errors:
            lines.append(f"  error {e}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# single-instance checks

def verify_pinching(sigma, H) -> float:
    """Smallest eigenvalue of ``nu(H) E_H(sigma) - sigma``."""
    pin = pinching_map(H)
    sigma = hermitize(np.asarray(sigma, complex))
    return float(np.linalg.eigvalsh(hermitize(pin.nu * pin(sigma) - sigma))[0])


def verify_fid_kl(rho, sigma, tau) -> float:
    """``F(rho, sigma) - exp(-D(tau||rho) - D(tau||sigma))``."""
    d = rel_entropy(tau, rho) + rel_entropy(tau, sigma)
    rhs = 0.0 if math.isinf(d) else math.exp(-d)
    return fidelity(rho, sigma) - rhs


def verify_var_bound(rho, omega) -> float:
    """``var_bound(d, omega_min) - Var(rho||omega)`` for a commuting pair."""
    d = np.asarray(omega).shape[0]
    return var_bound(d, min_nonzero_eig(omega)) - div_variance(rho, omega)


def _check_decomposition(projs, d):
    P = np.asarray(projs)
    if np.max(np.abs(P.sum(axis=0) - np.eye(d))) > 1e-9:
        raise ValidationError("blocks do not sum to the identity")
    for i in range(len(P)):
        if np.max(np.abs(P[i] @ P[i] - P[i])) > 1e-9:
            raise ValidationError(f"block {i} is not a projection")
        for j in range(i):
            if np.max(np.abs(P[i] @ P[j])) > 1e-9:
                raise ValidationError(f"blocks {i} and {j} are not orthogonal")


def verify_multiblock_fidelity(rho, sigma, projs, squared: bool = False) -> float:
    """``sqrt(|I|) f(rho, sigma) - f(sum_i P_i rho P_i, sigma)``.

    ``f`` is the root fidelity ``||sqrt(rho) sqrt(sigma)||_1``.  With
    ``squared=True`` the squared fidelity is used instead; that version is
    false in general (``rho = |+><+|``, ``sigma = I/2``, computational-basis
    blocks give ``sqrt(2)/2 - 1``).
    """
    rho = np.asarray(rho, complex)
    sigma = np.asarray(sigma, complex)
    _check_decomposition(projs, rho.shape[0])
    off = sigma - sum(P @ sigma @ P for P in projs)
    if np.max(np.abs(off)) > 1e-9:
        raise ValidationError("sigma is not block diagonal")
    pinched = hermitize(sum(P @ rho @ P for P in projs))
    f = fidelity if squared else root_fidelity
    return math.sqrt(len(projs)) * f(rho, sigma) - f(pinched, sigma)


def _holder_beta(alpha):
    return alpha / (2 * alpha - 1)


def verify_holder_sc(rho_AB, sigma_AB, alpha: float, dims=(2, 2), mi_tol: float = 1e-7) -> float:
    """``-I~_a(rho) + I~_b(sigma) - a/(1-a) log F(rho, sigma)`` with ``1/a + 1/b = 2``.

    The mutual informations enter through their conservative certificates
    (upper for the subtracted term, lower for the added one).
    """
    if not 0.5 < alpha < 1:
        raise ValueError("alpha must lie in (1/2, 1)")
    rA = partial_trace(rho_AB, dims, 0)
    sA = partial_trace(sigma_AB, dims, 0)
    if np.max(np.abs(rA - sA)) > 1e-8:
        raise ValidationError("marginals on A differ")
    F = fidelity(rho_AB, sigma_AB)
    lhs = -math.inf if F <= 0 else alpha / (1 - alpha) * math.log(F)
    up = bipartite_smi(rho_AB, dims, alpha, tol=mi_tol, strict=False).upper_cert
    lo = bipartite_smi(sigma_AB, dims, _holder_beta(alpha), tol=mi_tol, strict=False).lower_cert
    return (lo - up) - lhs


def verify_holder_boundary(rho_AB, sigma_AB, dims=(2, 2), mi_tol: float = 1e-7) -> float:
    """Order one half with its conjugate order infinity: ``-I~_{1/2}(rho) + I_max(sigma) - log F``."""
    rA = partial_trace(rho_AB, dims, 0)
    if np.max(np.abs(rA - partial_trace(sigma_AB, dims, 0))) > 1e-8:
        raise ValidationError("marginals on A differ")
    F = fidelity(rho_AB, sigma_AB)
    lhs = -math.inf if F <= 0 else math.log(F)
    up = bipartite_smi(rho_AB, dims, 0.5, tol=mi_tol, strict=False).upper_cert
    _, lo = bipartite_max_mi(sigma_AB, dims)
    return (lo - up) - lhs


# ---------------------------------------------------------------------------
# generators, baselines and checks per suite

def _commuting_pair(rng, d, small=False):
    U = random_unitary(d, rng)
    w = rng.dirichlet(np.ones(d))
    if small:
        w[rng.integers(d)] = 1e-3
        w = w / w.sum()
    p = np.zeros(d)
    rank = int(rng.integers(1, d + 1))
    p[rng.permutation(d)[:rank]] = rng.dirichlet(np.ones(rank))
    return (U * p) @ U.conj().T, (U * w) @ U.conj().T


def _same_marginal(rho, sig, dims):
    """Reweight ``sig`` on A so that its A marginal equals that of ``rho``."""
    rA = partial_trace(rho, dims, 0)
    sA = partial_trace(sig, dims, 0)
    w, v = np.linalg.eigh(hermitize(sA))
    s_inv = (v / np.sqrt(w)) @ v.conj().T
    w2, v2 = np.linalg.eigh(hermitize(rA))
    r_half = (v2 * np.sqrt(np.clip(w2, 0, None))) @ v2.conj().T
    K = np.kron(r_half @ s_inv, np.eye(dims[1]))
    return hermitize(K @ sig @ K.conj().T)


def _gen_pinching(rng):
    d = int(rng.integers(2, 5))
    # degenerate spectra on purpose
    ev = rng.integers(1, d + 1, size=d).astype(float)
    U = random_unitary(d, rng)
    rank = int(rng.integers(1, d + 1))
    return {"sigma": random_state(d, rng, rank=rank), "H": hermitize((U * ev) @ U.conj().T)}


def _gen_fidkl(rng):
    d = int(rng.integers(2, 5))
    ranks = rng.integers(1, d + 1, size=3)
    return {"rho": random_state(d, rng, rank=int(ranks[0])),
            "sigma": random_state(d, rng, rank=int(ranks[1])),
            "tau": random_state(d, rng, rank=int(ranks[2]))}


def _gen_varbound(rng):
    d = int(rng.integers(2, 7))
    rho, omega = _commuting_pair(rng, d, small=bool(rng.random() < 0.3))
    return {"rho": rho, "omega": omega}


def _gen_multiblock(rng):
    d = int(rng.integers(2, 6))
    m = int(rng.integers(1, d + 1))
    cuts = np.sort(rng.choice(np.arange(1, d), size=m - 1, replace=False)) if m > 1 else []
    U = random_unitary(d, rng)
    projs, sig = [], np.zeros((d, d), complex)
    for blk in np.split(np.arange(d), cuts):
        B = U[:, blk]
        P = B @ B.conj().T
        projs.append(P)
        s = random_state(len(blk), rng)
        sig = sig + B @ s @ B.conj().T * rng.random()
    sig = hermitize(sig / np.trace(sig).real)
    return {"rho": random_state(d, rng, rank=int(rng.integers(1, d + 1))), "sigma": sig,
            "projs": np.array(projs)}


def _gen_holder(rng):
    dims = (2, 2)
    rho = random_state(4, rng)
    sig = _same_marginal(rho, random_state(4, rng), dims)
    return {"rho": rho, "sigma": sig, "alpha": float(rng.uniform(*HOLDER_ALPHA))}


def _gen_holder_boundary(rng):
    rho = random_state(4, rng)
    return {"rho": rho, "sigma": _same_marginal(rho, random_state(4, rng), (2, 2))}


def _base_pinching(inst):
    return {"sigma": pinching_map(inst["H"])(inst["sigma"])}


def _base_fidkl(inst):
    return {"sigma": inst["rho"], "tau": inst["rho"]}


def _base_varbound(inst):
    return {"rho": inst["omega"]}


def _base_multiblock(inst):
    return {"rho": hermitize(sum(P @ inst["rho"] @ P for P in inst["projs"]))}


def _base_holder(inst):
    return {"sigma": inst["rho"]}


SUITES = {
    "pinching": (_gen_pinching, lambda i: verify_pinching(i["sigma"], i["H"]), _base_pinching,
                 LINALG_TOL),
    "fidkl": (_gen_fidkl, lambda i: verify_fid_kl(i["rho"], i["sigma"], i["tau"]), _base_fidkl,
              LINALG_TOL),
    "varbound": (_gen_varbound, lambda i: verify_var_bound(i["rho"], i["omega"]), _base_varbound,
                 LINALG_TOL),
    "multiblock": (_gen_multiblock,
                   lambda i: verify_multiblock_fidelity(i["rho"], i["sigma"], i["projs"]),
                   _base_multiblock, MULTIBLOCK_TOL),
    "holder": (_gen_holder, lambda i: verify_holder_sc(i["rho"], i["sigma"], i["alpha"]),
               _base_holder, OPT_TOL),
    "holder-boundary": (_gen_holder_boundary,
                        lambda i: verify_holder_boundary(i["rho"], i["sigma"]),
                        _base_holder, OPT_TOL),
}
DEFAULT_TRIALS = {"pinching": 1000, "fidkl": 1000, "varbound": 1000, "multiblock": 1000,
                  "holder": 500, "holder-boundary": 50}


def _mix(base, inst, t):
    out = dict(inst)
    for k, b in base.items():
        out[k] = (1 - t) * b + t * inst[k]
    return out


def shrink(suite: str, inst: dict, tol: float | None = None, steps: int = SHRINK_STEPS) -> dict:
    """Bisect on the mixture between the suite baseline and a failing instance.

    Returns the failing mixture closest to the baseline and the smallest
    slack seen along the way.
    """
    _, check, baseline, default_tol = SUITES[suite]
    tol = default_tol if tol is None else tol
    base = baseline(inst)
    lo, hi = 0.0, 1.0
    best = (check(inst), 1.0, inst)
    for _ in range(steps):
        if hi - lo < 1e-12:
            break
        mid = 0.5 * (lo + hi)
        cand = _mix(base, inst, mid)
        try:
            s = check(cand)
        except (ValueError, ArithmeticError):
            lo = mid
            continue
        if s < best[0]:
            best = (s, mid, cand)
        if s < -tol:
            hi = mid
        else:
            lo = mid
    return {"t": hi, "slack": best[0], "t_min_slack": best[1], "instance": _mix(base, inst, hi),
            "min_instance": best[2]}


def _trial(args):
    suite, seed, i = args
    gen, check, _, _ = SUITES[suite]
    rng = np.random.default_rng([seed, i])
    inst = gen(rng)
    try:
        return i, float(check(inst)), inst, None
    except Exception as exc:  # recorded, not fatal
        return i, math.nan, inst, f"trial {i}: {type(exc).__name__}: {exc}"


def run_suite(suite: str, trials: int | None = None, seed: int = 0, tol: float | None = None,
              workers: int = 1, shrink_failures: bool = True) -> VerificationRun:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    trials = DEFAULT_TRIALS[suite] if trials is None else int(trials)
    tol = SUITES[suite][3] if tol is None else tol
    jobs = [(suite, seed, i) for i in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_trial, jobs, chunksize=max(1, trials // (4 * workers))))
    else:
        results = [_trial(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    slacks = np.array([r[1] for r in results])
    run = VerificationRun(suite, trials, seed, tol, slacks)
    for i, s, inst, err in results:
        if err is not None:
            run.errors.append(err)
        elif s < -tol:
            run.failures.append({"trial": i, "slack": s, "instance": inst})
    if shrink_failures:
        for f in run.failures[:5]:
            sh = shrink(suite, f["instance"], tol)
            sh["trial"] = f["trial"]
            run.shrunk.append(sh)
    return run


# ---------------------------------------------------------------------------
# composite finite-n sandwich

def verify_sandwich_suite(W, n_max: int, r_list, tol: float = OPT_TOL, seed: int = 0,
                          ns_tol: float = 1e-7) -> VerificationRun:
    """Check the finite-``n`` bounds against the solved simulation error.

    Per cell ``(n, r)``: the strong-converse achievability bound lies below
    ``1 - eps_ub``, ``1 - eps_lb`` lies below the best converse bound, and
    ``eps_ub`` lies below the error-exponent bound.  The reported slack of a
    cell is the smallest of its three slacks (``tol`` already added).
    """
    from .exponents import (ee_achievability_bound, sc_achievability_bound_classical,
                            sc_achievability_bound_cq, sc_converse_best)
    from .ns_solver import ns_error_blocklength

    classical = isinstance(W, ClassicalChannel)
    cells, slacks, failures, errors = [], [], [], []
    for n in range(1, n_max + 1):
        for r in r_list:
            try:
                sol = ns_error_blocklength(W, n, float(r), tol=ns_tol, converse=False)
                conv = sc_converse_best(W, n, r).value
                ee = ee_achievability_bound(W, n, r).value
                if classical:
                    ach = sc_achievability_bound_classical(W, n, r).value
                elif n >= W.dim:
                    ach = sc_achievability_bound_cq(W, n, r).value
                else:
                    ach = 0.0
                width = max(sol.width, 0.0)
                s_ach = (1 - sol.eps_ub) - ach + tol
                s_conv = conv + width + tol - (1 - sol.eps_lb)
                s_ee = ee + tol - sol.eps_ub
                s = min(s_ach, s_conv, s_ee)
                cells.append({"n": n, "r": float(r), "eps_lb": sol.eps_lb, "eps_ub": sol.eps_ub,
                              "achievability": ach, "converse": conv, "ee": ee,
                              "slack_ach": s_ach, "slack_conv": s_conv, "slack_ee": s_ee})
                slacks.append(s)
                if s < 0:
                    failures.append({"trial": len(slacks) - 1, "slack": s, "cell": cells[-1]})
            except Exception as exc:  # per-cell failures are recorded
                slacks.append(math.nan)
                errors.append(f"n={n} r={r}: {type(exc).__name__}: {exc}")
    # slack of a passing cell is measured against zero (tol is folded in)
    run = VerificationRun("sandwich", len(slacks), seed, 0.0, np.array(slacks), failures, [], errors)
    run.cells = cells
    return run


def run_all(trials: int | None = None, seed: int = 0, workers: int = 1) -> list:
    return [run_suite(s, trials, seed, workers=workers) for s in SUITES]
