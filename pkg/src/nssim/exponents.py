"""Exponent curves and finite-blocklength bounds for non-signaling simulation.

Certificates are used conservatively: converse-type quantities (upper
bounds on ``1 - eps``) use lower certificates of the Renyi mutual
information, achievability-type quantities use upper certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .chanmodel import ClassicalChannel, CqChannel
from .infoquant import INF
from .renyi_capacity import max_mi_classical, max_mi_cq, renyi_mi_classical, renyi_mi_cq

ALPHA_CAP = 64.0
MI_TOL = 1e-9
_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass
class ExponentPoint:
    r: float
    value: float
    alpha_star: float
    kind: str  # "error" or "strong-converse"
    diagnostics: dict = field(default_factory=dict)


@dataclass
class BoundValue:
    n: int
    r: float
    value: float
    kind: str
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# cached mutual information

def _key(W):
    if isinstance(W, ClassicalChannel):
        return ("c", W.matrix.shape, W.matrix.tobytes())
    st = np.stack([np.asarray(s, complex) for s in W.states])
    return ("q", st.shape, st.tobytes())


@lru_cache(maxsize=4096)
def _mi_cached(key, alpha, tol):
    kind, shape, raw = key
    if kind == "c":
        W = ClassicalChannel(np.frombuffer(raw).reshape(shape))
        res = renyi_mi_classical(W, alpha, tol=tol, strict=False)
    else:
        W = CqChannel(list(np.frombuffer(raw, complex).reshape(shape)))
        res = renyi_mi_cq(W, alpha, tol=tol, strict=False)
    return res.lower_cert, res.upper_cert


def mi_bracket(W, alpha: float, tol: float = MI_TOL) -> tuple:
    """``(lower, upper)`` certificates of the Renyi mutual information of order ``alpha``.

    Classical channels use the classical (Sibson) quantity, which equals the
    sandwiched one for commuting outputs.
    """
    if isinstance(W, CqChannel) and W.is_classical():
        W = W.to_classical()
    return _mi_cached(_key(W), float(alpha), float(tol))


@lru_cache(maxsize=256)
def _max_mi_cached(key):
    kind, shape, raw = key
    if kind == "c":
        v = max_mi_classical(ClassicalChannel(np.frombuffer(raw).reshape(shape)))
        return v, v
    return max_mi_cq(CqChannel(list(np.frombuffer(raw, complex).reshape(shape))))


def max_mi_bracket(W) -> tuple:
    """``(lower, upper)`` for the order-infinity mutual information."""
    if isinstance(W, CqChannel) and W.is_classical():
        W = W.to_classical()
    up, lo = _max_mi_cached(_key(W))
    return lo, up


def _output_dim(W) -> int:
    return W.ny if isinstance(W, ClassicalChannel) else W.dim


# ---------------------------------------------------------------------------
# 1-d maximisation

def _golden_max(f, a, b, iters=60, xtol=1e-10):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a < xtol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _grid_then_golden(f, grid, iters=60):
    """Best grid point, then golden-section in the neighbouring cell.

    Returns ``(x*, f*)`` over everything evaluated; any evaluation is kept,
    so the result never drops below the best grid value.
    """
    grid = np.asarray(grid, float)
    vals = np.array([f(x) for x in grid])
    k = int(np.argmax(vals))
    best = (grid[k], vals[k])
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    if hi > lo:
        x, v = _golden_max(f, lo, hi, iters=iters)
        if v > best[1]:
            best = (x, v)
    return float(best[0]), float(best[1])


def _alpha_grid(cap):
    return np.concatenate([[0.0], np.geomspace(1e-3, cap, 48)])


# ---------------------------------------------------------------------------
# exponents

def error_exponent(W, r: float, tol: float = MI_TOL, alpha_cap: float = ALPHA_CAP) -> ExponentPoint:
    """``sup_{a >= 0} (a/2) (r - I~_{1+a}(W))``.

    Returns 0 when ``r`` does not exceed the order-1 quantity and ``inf``
    when ``r`` exceeds the order-infinity quantity (the objective then grows
    linearly in ``a``).  In between the supremum is searched on
    ``[0, alpha_cap]`` and a diagnostic flags a maximiser at the cap.
    """
    if r < 0:
        raise ValueError("rate must be nonnegative")
    i1_lo, i1_up = mi_bracket(W, 1.0, tol)
    if r <= i1_up:
        return ExponentPoint(r, 0.0, 0.0, "error", {"reason": "rate below order-1 information"})
    imax_lo, imax_up = max_mi_bracket(W)
    if r > imax_up:
        return ExponentPoint(r, INF, INF, "error",
                             {"reason": "diverging: rate above order-infinity information",
                              "max_mi": imax_up})

    def obj(a):
        if a == 0:
            return 0.0
        lo, up = mi_bracket(W, 1.0 + a, tol)
        return 0.5 * a * (r - 0.5 * (lo + up))

    a, v = _grid_then_golden(obj, _alpha_grid(alpha_cap))
    diag = {"alpha_cap": alpha_cap}
    if a >= alpha_cap * (1 - 1e-6):
        diag["reason"] = "increasing at alpha cap"
    return ExponentPoint(r, max(v, 0.0), a, "error", diag)


def _sc_objective(W, r, tol, which):
    """``s -> s (I_{1/(1+s)} - r)`` using the chosen certificate (0: lower, 1: upper, None: mid)."""
    def f(s):
        if s == 0:
            return 0.0
        lo, up = mi_bracket(W, 1.0 / (1.0 + s), tol)
        i = 0.5 * (lo + up) if which is None else (lo, up)[which]
        return s * (i - r)
    return f


def _sc_sup(W, r, tol, which=None):
    """``sup_{a in [1/2, 1]} (1-a)/a (I_a - r)`` through ``s = (1-a)/a``, concave in ``s``."""
    f = _sc_objective(W, r, tol, which)
    grid = np.linspace(0.0, 1.0, 21)
    s, v = _grid_then_golden(f, grid)
    return s, max(v, 0.0)


def sc_exponent(W, r: float, tol: float = MI_TOL) -> ExponentPoint:
    """``sup_{1/2 <= a <= 1} ((1-a)/a) (I_a(W) - r)``; 0 for ``r >= I_1(W)``."""
    if r < 0:
        raise ValueError("rate must be nonnegative")
    lo, _ = mi_bracket(W, 1.0, tol)
    if r >= lo:
        return ExponentPoint(r, 0.0, 1.0, "strong-converse", {"reason": "rate above order-1 information"})
    s, v = _sc_sup(W, r, tol)
    return ExponentPoint(r, v, 1.0 / (1.0 + s), "strong-converse", {})


# ---------------------------------------------------------------------------
# finite-n bounds

def sc_converse_bound(W, n: int, r: float, alpha: float, tol: float = MI_TOL) -> BoundValue:
    """``exp(-n (1-a)/a (I~_a(W) - r))`` clamped to ``[0, 1]``; bounds ``1 - eps`` from above."""
    if not 0.5 <= alpha <= 1:
        raise ValueError("alpha must lie in [1/2, 1]")
    s = (1 - alpha) / alpha
    if s == 0:
        val = 1.0
    else:
        lo, _ = mi_bracket(W, alpha, tol)
        val = min(1.0, math.exp(-n * s * (lo - r)))
    return BoundValue(n, r, val, "sc-converse", {"alpha": alpha})


def sc_converse_best(W, n: int, r: float, alphas=None, tol: float = MI_TOL) -> BoundValue:
    """Minimum of :func:`sc_converse_bound` over an ``alpha`` grid."""
    alphas = np.linspace(0.5, 1.0, 26) if alphas is None else alphas
    best = min((sc_converse_bound(W, n, r, float(a), tol) for a in alphas), key=lambda b: b.value)
    return best


def _inner_sc_term(W, n, r, tol):
    """``inf_a exp(-n (1-a)/a (I_a - r))`` with upper certificates (so a lower bound)."""
    s, v = _sc_sup(W, r, tol, which=1)
    return math.exp(-n * v), 1.0 / (1.0 + s)


def _variance_constant(W: ClassicalChannel, eta: float) -> float:
    ny = W.ny
    return 2 * math.log(ny) ** 2 + max(math.log(W.w_min) ** 2,
                                       math.log(eta / (1 + eta * ny)) ** 2) + 4


def sc_achievability_bound_classical(W: ClassicalChannel, n: int, r: float, eta: float | None = None,
                                     reading: str = "full", tol: float = MI_TOL) -> BoundValue:
    """Lower bound on ``1 - eps^NS(W^n, e^{nr})`` for classical channels.

    Parameters
    ----------
    eta : float, optional
        Smoothing weight, default ``1/n``.
    reading : {"full", "literal", "inverse"}
        ``"full"`` evaluates the bound with prefactor
        ``gamma^2/8 exp(-4 sqrt(A n)) (1 + eta |Y|)^-n``,
        ``gamma = (n+1)^-|X|``.  The other two evaluate the simplified
        ``eta = 1/n`` prefactor
        ``e^-|Y| (n+1)^-|X| exp(-8 log(|Y|^2 w (n+|Y|)) sqrt(n)) / 8`` with
        ``w = W_min`` ("literal") or ``w = 1/W_min`` ("inverse").
    """
    if isinstance(W, CqChannel):
        W = W.to_classical()
    if n < 1:
        raise ValueError("n must be >= 1")
    if r < 0:
        raise ValueError("rate must be nonnegative")
    nx, ny = W.nx, W.ny
    eta = 1.0 / n if eta is None else float(eta)
    if eta <= 0:
        raise ValueError("eta must be positive")
    inner, a_star = _inner_sc_term(W, n, r, tol)
    if reading == "full":
        A = _variance_constant(W, eta)
        log_pref = (-2 * nx * math.log(n + 1) - math.log(8) - 4 * math.sqrt(A * n)
                    - n * math.log1p(eta * ny))
        params = {"eta": eta, "A": A}
    elif reading in ("literal", "inverse"):
        w = W.w_min if reading == "literal" else 1.0 / W.w_min
        log_pref = (-ny - nx * math.log(n + 1) - math.log(8)
                    - 8 * math.log(ny**2 * w * (n + ny)) * math.sqrt(n))
        params = {"eta": 1.0 / n}
    else:
        raise ValueError(f"unknown reading {reading!r}")
    params.update(reading=reading, alpha=a_star, inner=inner, log_prefactor=log_pref)
    val = min(1.0, max(0.0, math.exp(log_pref) * inner))
    return BoundValue(n, r, val, "sc-achievability-classical", params)


def sc_achievability_bound_cq(W: CqChannel, n: int, r: float, tol: float = MI_TOL) -> BoundValue:
    """Lower bound on ``1 - eps^NS(W^n, e^{nr})`` for cq channels, ``n >= dim``."""
    if isinstance(W, ClassicalChannel):
        W = W.as_cq()
    d, nx = W.dim, W.nx
    if n < d:
        raise ValueError(f"blocklength {n} below output dimension {d}")
    if r < 0:
        raise ValueError("rate must be nonnegative")
    log_pref = (-math.log(2) - d - nx * math.log(n + 1)
                - 32 * n**0.8 * d**0.2 * math.log(d * (n + d)))
    s, v = _sc_sup(W, r, tol, which=1)
    inner = math.exp(-n * v)
    val = min(1.0, max(0.0, math.exp(log_pref) * inner))
    return BoundValue(n, r, val, "sc-achievability-cq",
                      {"alpha": 1.0 / (1.0 + s), "inner": inner, "log_prefactor": log_pref})


def ee_achievability_bound(W, n: int, r: float, tol: float = MI_TOL,
                           alpha_cap: float = ALPHA_CAP) -> BoundValue:
    """``inf_{a >= 0} exp(-n a/2 (r - I~_{1+a}(W) - log(2)/n - d log(n+1)/n))``.

    The ``d log(n+1)/n`` term is dropped for classical channels.  Upper
    certificates of the information are used, so the value is an upper
    bound on the simulation error whenever the underlying inequality is.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if r < 0:
        raise ValueError("rate must be nonnegative")
    classical = isinstance(W, ClassicalChannel) or (isinstance(W, CqChannel) and W.is_classical())
    extra = math.log(2) / n + (0.0 if classical else _output_dim(W) * math.log(n + 1) / n)

    def expo(a):
        if a == 0:
            return 0.0
        _, up = mi_bracket(W, 1.0 + a, tol)
        return 0.5 * n * a * (r - up - extra)

    a, v = _grid_then_golden(expo, _alpha_grid(alpha_cap))
    v = max(v, 0.0)
    params = {"alpha": a if v > 0 else 0.0, "alpha_cap": alpha_cap, "correction": extra}
    if v > 0 and a >= alpha_cap * (1 - 1e-6):
        params["diagnostic"] = "exponent still increasing at alpha cap"
    return BoundValue(n, r, math.exp(-v), "ee-achievability", params)


# ---------------------------------------------------------------------------
# rounding

ROUNDING_CONST = 0.5 * (1 - math.exp(-1))


def rounding_sr_ea(eps_ns: float) -> tuple:
    """Bracket ``(c (1 - eps), 1 - eps)`` on ``1 - eps`` of the rounded code, ``c = (1 - 1/e)/2``."""
    if not 0 <= eps_ns <= 1:
        raise ValueError("eps must lie in [0, 1]")
    return ROUNDING_CONST * (1 - eps_ns), 1 - eps_ns


def rounding_ea_size(eps_ns_at_M: float, M: float, M_prime: float) -> float:
    """Error of a size-``M'`` rounded code: ``eps + sqrt(2) exp(-M'/(2M))``, needs ``M' >= log(2) M``."""
    if not 0 <= eps_ns_at_M <= 1:
        raise ValueError("eps must lie in [0, 1]")
    if M <= 0 or M_prime < math.log(2) * M:
        raise ValueError("requires M' >= log(2) M")
    return eps_ns_at_M + math.sqrt(2) * math.exp(-M_prime / (2 * M))
