"""Channels, distributions, density matrices, tensor powers and type classes.

Sequences over a finite alphabet are indexed mixed-radix little-endian: the
symbol at position 0 varies fastest.  With this convention a tensor power is
``kron(W, ..., W)`` and the state for ``x^n`` is
``kron(W[x_{n-1}], ..., W[x_0])``.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CLAMP_TOL = 1e-12
PROB_TOL = 1e-9
HERM_TOL = 1e-10
TRACE_TOL = 1e-9
SUPPORT_TOL = 1e-12

_DEFAULT_CAP = 2**26
_entry_cap = int(os.environ.get("NSSIM_CAP_ENTRIES", _DEFAULT_CAP))


class ValidationError(ValueError):
    """An input violates a type invariant."""


class DimensionOverflowError(ValueError):
    """A tensor power would exceed the configured entry cap."""


class InvarianceError(ValueError):
    """A distribution expected to be permutation invariant is not."""


def set_entry_cap(cap: int) -> None:
    """Set the global cap on dense matrix entries for tensor powers."""
    global _entry_cap
    if cap < 1:
        raise ValueError("entry cap must be positive")
    _entry_cap = int(cap)


def get_entry_cap() -> int:
    return _entry_cap


def check_entries(n_entries: int, what: str = "tensor power") -> None:
    if n_entries > _entry_cap:
        raise DimensionOverflowError(
            f"{what} needs {n_entries} entries, cap is {_entry_cap}")


# ---------------------------------------------------------------------------
# distributions and states

def prob_dist(w, name: str = "distribution") -> np.ndarray:
    """Validate and clamp a probability vector.

    Entries in ``[-1e-12, 0)`` are set to zero; the sum must be one within
    ``1e-9``.  Returns a new float array.
    """
    p = np.array(w, dtype=float).ravel()
    if p.size == 0:
        raise ValidationError(f"{name}: empty")
    if not np.all(np.isfinite(p)):
        raise ValidationError(f"{name}: non-finite entry")
    if p.min() < -CLAMP_TOL:
        raise ValidationError(f"{name}: negative entry {p.min():.3e}")
    p[p < 0] = 0.0
    s = p.sum()
    if abs(s - 1.0) > PROB_TOL:
        raise ValidationError(f"{name}: sums to {s!r}, not 1")
    return p


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def density_matrix(a, name: str = "state") -> np.ndarray:
    """Validate a density matrix and return it as a complex Hermitian array."""
    rho = np.array(a, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"{name}: not a square matrix")
    if not np.all(np.isfinite(rho)):
        raise ValidationError(f"{name}: non-finite entry")
    if np.max(np.abs(rho - rho.conj().T)) > HERM_TOL:
        raise ValidationError(f"{name}: not Hermitian")
    rho = hermitize(rho)
    ev = np.linalg.eigvalsh(rho)
    if ev[0] < -HERM_TOL:
        raise ValidationError(f"{name}: negative eigenvalue {ev[0]:.3e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValidationError(f"{name}: trace {tr!r}, not 1")
    return rho


def is_diagonal(a: np.ndarray, tol: float = 1e-12) -> bool:
    off = a - np.diag(np.diag(a))
    return bool(np.max(np.abs(off), initial=0.0) <= tol)


# ---------------------------------------------------------------------------
# channels

@dataclass(frozen=True, eq=False)
class ClassicalChannel:
    """Row-stochastic matrix with ``matrix[x, y] = W(y|x)``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.size == 0:
            raise ValidationError("channel matrix must be a nonempty 2-D array")
        rows = [prob_dist(r, name=f"row {x}") for x, r in enumerate(m)]
        m = np.vstack(rows)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def nx(self) -> int:
        return self.matrix.shape[0]

    @property
    def ny(self) -> int:
        return self.matrix.shape[1]

    @property
    def w_min(self) -> float:
        """Smallest strictly positive transition probability."""
        pos = self.matrix[self.matrix > SUPPORT_TOL]
        return float(pos.min())

    def row(self, x: int) -> np.ndarray:
        return self.matrix[x]

    def as_cq(self) -> "CqChannel":
        return CqChannel([np.diag(r).astype(complex) for r in self.matrix])

    def __repr__(self):
        return f"ClassicalChannel({self.nx}x{self.ny})"


@dataclass(frozen=True, eq=False)
class CqChannel:
    """Classical-quantum channel given by one density matrix per input."""

    states: np.ndarray

    def __post_init__(self):
        sts = list(self.states)
        if len(sts) == 0:
            raise ValidationError("cq channel needs at least one state")
        out = [density_matrix(s, name=f"state {x}") for x, s in enumerate(sts)]
        d = out[0].shape[0]
        for x, s in enumerate(out):
            if s.shape[0] != d:
                raise ValidationError(f"state {x}: dimension {s.shape[0]} != {d}")
        arr = np.stack(out)
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    @property
    def nx(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def is_classical(self) -> bool:
        return all(is_diagonal(s) for s in self.states)

    def to_classical(self) -> ClassicalChannel:
        if not self.is_classical():
            raise ValidationError("states are not all diagonal")
        return ClassicalChannel(np.array([np.diag(s).real for s in self.states]))

    def __repr__(self):
        return f"CqChannel(nx={self.nx}, d={self.dim})"


def identity_channel(k: int) -> ClassicalChannel:
    return ClassicalChannel(np.eye(k))


def bsc(p: float) -> ClassicalChannel:
    return ClassicalChannel(np.array([[1 - p, p], [p, 1 - p]]))


def constant_channel(row, nx: int = 2) -> ClassicalChannel:
    return ClassicalChannel(np.tile(np.asarray(row, float), (nx, 1)))


def in_support_class(V: ClassicalChannel, W: ClassicalChannel) -> bool:
    """True when every transition allowed by ``V`` is allowed by ``W``."""
    if V.matrix.shape != W.matrix.shape:
        return False
    return not np.any((V.matrix > SUPPORT_TOL) & (W.matrix <= SUPPORT_TOL))


# ---------------------------------------------------------------------------
# sequences and tensor powers

def index_to_seq(idx: int, k: int, n: int) -> tuple:
    out = []
    for _ in range(n):
        idx, r = divmod(idx, k)
        out.append(r)
    return tuple(out)


def seq_to_index(seq, k: int) -> int:
    idx = 0
    for s in reversed(seq):
        idx = idx * k + int(s)
    return idx


def all_sequences(k: int, n: int) -> np.ndarray:
    """Array of shape (k**n, n); row i is the little-endian digits of i."""
    idx = np.arange(k**n)
    return np.stack([(idx // k**i) % k for i in range(n)], axis=1)


def tensor_power_classical(W: ClassicalChannel, n: int) -> ClassicalChannel:
    """``n``-fold product channel ``W^{(x)n}``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    check_entries((W.nx * W.ny) ** n, "classical tensor power")
    m = W.matrix
    out = m
    for _ in range(n - 1):
        out = np.kron(m, out)
    return ClassicalChannel(out)


def tensor_power_cq(W: CqChannel, n: int) -> CqChannel:
    """``n``-fold product of a cq channel, inputs indexed little-endian."""
    if n < 1:
        raise ValueError("n must be >= 1")
    check_entries(W.nx**n * W.dim ** (2 * n), "cq tensor power")
    states = []
    for seq in all_sequences(W.nx, n):
        s = np.ones((1, 1), dtype=complex)
        for x in seq:
            s = np.kron(W.states[x], s)
        states.append(s)
    return CqChannel(states)


def product_channel(W1, W2):
    """Parallel use of two channels; input index ``x1 + |X1| * x2``."""
    if isinstance(W1, ClassicalChannel) and isinstance(W2, ClassicalChannel):
        return ClassicalChannel(np.kron(W2.matrix, W1.matrix))
    A = W1.as_cq() if isinstance(W1, ClassicalChannel) else W1
    B = W2.as_cq() if isinstance(W2, ClassicalChannel) else W2
    return CqChannel([np.kron(b, a) for b in B.states for a in A.states])


def product_dist(q: np.ndarray, n: int) -> np.ndarray:
    out = np.asarray(q, float)
    for _ in range(n - 1):
        out = np.kron(q, out)
    return out


# ---------------------------------------------------------------------------
# method of types

@dataclass(frozen=True)
class TypeClass:
    counts: tuple

    def __post_init__(self):
        c = tuple(int(v) for v in self.counts)
        if any(v < 0 for v in c) or len(c) == 0:
            raise ValidationError("type counts must be nonnegative")
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def k(self) -> int:
        return len(self.counts)

    def empirical(self) -> np.ndarray:
        return np.array(self.counts, float) / self.n

    def size(self) -> int:
        """Number of sequences of this type (multinomial coefficient)."""
        out = math.factorial(self.n)
        for c in self.counts:
            out //= math.factorial(c)
        return out


def _compositions(n: int, k: int):
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def enumerate_types(n: int, k: int) -> list:
    """All compositions of ``n`` into ``k`` ordered parts."""
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    return [TypeClass(c) for c in _compositions(n, k)]


def representative_sequence(t: TypeClass) -> tuple:
    """Sorted sequence with the counts of ``t``, e.g. (2,1) -> (0,0,1)."""
    return tuple(s for s, c in enumerate(t.counts) for _ in range(c))


def type_of(seq, k: int) -> TypeClass:
    return TypeClass(tuple(np.bincount(np.asarray(seq, int), minlength=k)))


def type_labels(k: int, n: int):
    """Type index of every sequence in ``X^n`` plus the list of types.

    Returns ``(labels, types)`` with ``labels[i]`` the position in ``types``
    of the type of the ``i``-th sequence.
    """
    types = enumerate_types(n, k)
    pos = {t.counts: j for j, t in enumerate(types)}
    seqs = all_sequences(k, n)
    counts = np.stack([(seqs == a).sum(axis=1) for a in range(k)], axis=1)
    labels = np.array([pos[tuple(c)] for c in counts])
    return labels, types


def dominant_type_weight(p, k: int, n: int | None = None, tol: float = 1e-9):
    """Type carrying the largest mass of a permutation-invariant distribution.

    Parameters
    ----------
    p : array_like
        Distribution over ``X^n``, length ``k**n``, little-endian indexing.
    k : int
        Alphabet size.
    n : int, optional
        Block length; inferred from the length of ``p`` when omitted.

    Returns
    -------
    (TypeClass, float)
        The heaviest type and its aggregated weight, which is always at least
        ``(n+1)**(-k)``.
    """
    p = prob_dist(p)
    if n is None:
        n = int(round(math.log(p.size, k))) if k > 1 else 1
    if p.size != k**n:
        raise ValidationError(f"length {p.size} is not {k}**{n}")
    # adjacent transpositions generate the symmetric group, so this is complete
    seqs = all_sequences(k, n)
    for i in range(n - 1):
        sw = seqs.copy()
        sw[:, [i, i + 1]] = sw[:, [i + 1, i]]
        idx = (sw * (k ** np.arange(n))).sum(axis=1)
        if np.max(np.abs(p[idx] - p)) > tol:
            raise InvarianceError(f"not invariant under swapping positions {i},{i+1}")
    labels, types = type_labels(k, n)
    agg = np.bincount(labels, weights=p, minlength=len(types))
    j = int(np.argmax(agg))
    return types[j], float(agg[j])


# ---------------------------------------------------------------------------
# channel files

def parse_channel(obj):
    """Build a channel from a decoded JSON object, validating every invariant."""
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValidationError("channel object needs a 'kind' field")
    kind = obj["kind"]
    if kind == "classical":
        m = obj.get("matrix")
        if not isinstance(m, list) or not m:
            raise ValidationError("classical channel needs a nonempty 'matrix'")
        widths = {len(r) for r in m}
        if len(widths) != 1:
            raise ValidationError("matrix rows have different lengths")
        return ClassicalChannel(np.array(m, dtype=float))
    if kind == "cq":
        d = obj.get("dim")
        sts = obj.get("states")
        if not isinstance(d, int) or d < 1:
            raise ValidationError("cq channel needs a positive integer 'dim'")
        if not isinstance(sts, list) or not sts:
            raise ValidationError("cq channel needs a nonempty 'states' list")
        mats = []
        for x, s in enumerate(sts):
            re = np.array(s.get("re"), dtype=float)
            im = np.array(s.get("im", np.zeros_like(re)), dtype=float)
            if re.shape != (d, d) or im.shape != (d, d):
                raise ValidationError(f"state {x}: expected shape ({d},{d})")
            mats.append(re + 1j * im)
        return CqChannel(mats)
    raise ValidationError(f"unknown channel kind {kind!r}")


def load_channel(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return parse_channel(obj)


def channel_to_obj(W) -> dict:
    if isinstance(W, ClassicalChannel):
        return {"kind": "classical", "matrix": W.matrix.tolist()}
    return {"kind": "cq", "dim": W.dim,
            "states": [{"re": s.real.tolist(), "im": s.imag.tolist()} for s in W.states]}


def save_channel(W, path) -> None:
    Path(path).write_text(json.dumps(channel_to_obj(W)), encoding="utf-8")


# ---------------------------------------------------------------------------
# random instances

def random_state(d: int, rng, rank: int | None = None, conc: float = 1.0) -> np.ndarray:
    """Dirichlet spectrum in a random orthonormal frame (QR of a Gaussian)."""
    rank = d if rank is None else rank
    lam = np.zeros(d)
    lam[:rank] = rng.dirichlet(np.full(rank, conc))
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return hermitize((q * lam) @ q.conj().T)


def random_classical_channel(nx: int, ny: int, rng, conc: float = 1.0) -> ClassicalChannel:
    return ClassicalChannel(rng.dirichlet(np.full(ny, conc), size=nx))


def random_cq_channel(nx: int, d: int, rng, rank: int | None = None) -> CqChannel:
    return CqChannel([random_state(d, rng, rank=rank) for _ in range(nx)])


def random_unitary(d: int, rng) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
