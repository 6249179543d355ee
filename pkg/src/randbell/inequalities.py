"""MABK inequalities, their relabeling orbit, and the WWZB criterion.

All arrays of full correlators use the setting-tuple order of
:mod:`randbell.quantum` (party 1 = most significant bit).  In that order the
unnormalised Walsh-Hadamard transform ``H`` satisfies
``(H E)[k] = sum_s prod_j k_j**(s_j-1) E(s)`` with ``k_j = -1`` on set bits,
and two facts make large-n evaluation cheap:

* the MABK coefficients are ``beta = H g`` with ``g(k) = cos(pi/4 (1 + 2|k|))``
  where ``|k|`` counts the ``-1`` entries of ``k``;
* the signed relabeling orbit is ``{+-beta(s XOR tau)}``, so the MABK values of
  all ``2**n`` orbit members up to sign are ``H (g * H E)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from ._accel import njit, pick
from .quantum import DEFAULT_MAX_PARTIES, CapacityError, CorrelationTensor

VIOLATION_TOL = 1e-9
DIRECT_ENUMERATION_MAX_N = 12
EXPLICIT_ORBIT_MAX_N = 12


def classical_bound(n: int) -> float:
    return 2.0 ** (n - 0.5)


def quantum_max(n: int) -> float:
    return 2.0 ** (1.5 * n - 1.0)


def wwzb_bound(n: int) -> float:
    return 2.0 ** n


# ---------------------------------------------------------------------------
# Walsh-Hadamard transform
# ---------------------------------------------------------------------------

@njit
def _fwht_rows_numba(a):
    T, N = a.shape
    for t in range(T):
        h = 1
        while h < N:
            for i in range(0, N, 2 * h):
                for j in range(i, i + h):
                    x = a[t, j]
                    y = a[t, j + h]
                    a[t, j] = x + y
                    a[t, j + h] = x - y
            h *= 2


def _fwht_rows_numpy(a):
    T, N = a.shape
    h = 1
    while h < N:
        v = a.reshape(T, N // (2 * h), 2, h)
        x = v[:, :, 0, :].copy()
        v[:, :, 0, :] += v[:, :, 1, :]
        v[:, :, 1, :] *= -1.0
        v[:, :, 1, :] += x
        h *= 2


_fwht_rows = pick(_fwht_rows_numba, _fwht_rows_numpy)


def _check_pow2(N: int) -> int:
    if N < 1 or N & (N - 1):
        raise ValueError(f"length {N} is not a power of two")
    return N.bit_length() - 1


def fwht_rows(values: np.ndarray) -> np.ndarray:
    """Transform of every row of a (T, 2**n) array (returns a new array)."""
    a = np.array(values, dtype=float, order="C", ndmin=2, copy=True)
    _check_pow2(a.shape[1])
    _fwht_rows(a)
    return a


def walsh_hadamard(values) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform of a length-2**n vector."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValueError("expected a 1-d array")
    return fwht_rows(v[None])[0]


def hadamard_matrix(n: int) -> np.ndarray:
    """Explicit +-1 character matrix, ``H[k, s] = (-1)**popcount(k & s)``."""
    idx = np.arange(2 ** n)
    bits = np.bitwise_and(idx[:, None], idx[None, :])
    parity = np.zeros_like(bits)
    for j in range(n):
        parity ^= (bits >> j) & 1
    return 1.0 - 2.0 * parity


# ---------------------------------------------------------------------------
# MABK coefficients and orbit
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MabkCoefficients:
    n: int
    beta: np.ndarray
    swap_pattern: int = 0
    sign: int = 1

    @property
    def classical_bound(self) -> float:
        return classical_bound(self.n)

    @property
    def quantum_max(self) -> float:
        return quantum_max(self.n)


@lru_cache(maxsize=None)
def _kernel_weights(n: int, phase: float = np.pi / 4) -> np.ndarray:
    """``cos(phase + |k| pi/2)`` for k in flat order; equals cos(pi/4 (n+1-sum k))."""
    weight = np.array([bin(k).count("1") for k in range(2 ** n)])
    g = np.cos(phase + weight * np.pi / 2)
    g[np.abs(g) < 1e-15] = 0.0
    g.setflags(write=False)
    return g


def mabk_beta_direct(n: int) -> np.ndarray:
    """Coefficients by summing the defining cosine series over k in {+-1}^n."""
    ks = np.array(list(itertools.product([1, -1], repeat=n)), dtype=float)
    cos_term = np.cos(np.pi / 4 * (n + 1 - ks.sum(axis=1)))
    settings = np.array(list(itertools.product([0, 1], repeat=n)))
    # prod_j k_j ** (s_j - 1) with s_j - 1 in {0, 1}
    chars = np.prod(np.where(settings[:, None, :] == 1, ks[None, :, :], 1.0), axis=2)
    return chars @ cos_term


@lru_cache(maxsize=None)
def mabk_coefficients(n: int, max_parties: int = DEFAULT_MAX_PARTIES) -> MabkCoefficients:
    """Unrelabeled MABK coefficients (cached per n).

    Direct enumeration up to ``DIRECT_ENUMERATION_MAX_N`` parties, the
    equivalent transform ``beta = H g`` above that.
    """
    if n < 2:
        raise ValueError("MABK inequality needs n >= 2")
    if n > max_parties:
        raise CapacityError(f"n = {n} exceeds the configured maximum of {max_parties}")
    if n <= DIRECT_ENUMERATION_MAX_N:
        beta = mabk_beta_direct(n)
    else:
        beta = walsh_hadamard(_kernel_weights(n))
    beta[np.abs(beta) < 1e-9] = 0.0
    beta.setflags(write=False)
    return MabkCoefficients(n, beta)


def mabk_value(coeffs: MabkCoefficients, tensor: CorrelationTensor) -> float:
    if coeffs.n != tensor.n:
        raise ValueError(f"coefficients are for n={coeffs.n}, tensor has n={tensor.n}")
    return float(abs(np.dot(coeffs.beta, tensor.full)))


def _relabel_generators(n: int):
    N = 2 ** n
    idx = np.arange(N)
    bit = [(idx >> (n - 1 - j)) & 1 for j in range(n)]
    gens = []
    for j in range(n):
        gens.append(("perm", idx ^ (1 << (n - 1 - j))))          # swap settings of party j
        gens.append(("sign", np.where(bit[j] == 1, -1.0, 1.0)))  # flip outcomes of setting 2
        gens.append(("sign", np.where(bit[j] == 0, -1.0, 1.0)))  # flip outcomes of setting 1
    for j in range(n - 1):                                       # exchange parties j, j+1
        swapped = idx.copy()
        differ = bit[j] != bit[j + 1]
        swapped[differ] ^= (1 << (n - 1 - j)) | (1 << (n - 2 - j))
        gens.append(("perm", swapped))
    return gens


def _key(v: np.ndarray) -> bytes:
    # + 0.0 folds -0.0 into 0.0 so the bytes compare equal
    return (np.round(v, 9) + 0.0).tobytes()


@lru_cache(maxsize=None)
def mabk_orbit(n: int) -> tuple[MabkCoefficients, ...]:
    """Signed relabeling orbit of the MABK coefficient vector.

    Built by closure under setting swaps, outcome flips and party exchanges.
    The closure must have exactly ``2**(n+1)`` signed members and coincide
    with ``{+-beta(s XOR tau)}``; anything else raises ``AssertionError``.
    Members are returned in canonical order: index ``tau`` is
    ``+beta(s XOR tau)``, index ``2**n + tau`` its negative.
    """
    if n > EXPLICIT_ORBIT_MAX_N:
        raise CapacityError(f"explicit orbit only built for n <= {EXPLICIT_ORBIT_MAX_N}")
    beta = np.array(mabk_coefficients(n).beta)
    gens = _relabel_generators(n)
    seen = {_key(beta): beta}
    frontier = [beta]
    while frontier:
        nxt = []
        for v in frontier:
            for kind, g in gens:
                w = v[g] if kind == "perm" else v * g
                key = _key(w)
                if key not in seen:
                    seen[key] = w
                    nxt.append(w)
        frontier = nxt
    expected = 2 ** (n + 1)
    if len(seen) != expected:
        raise AssertionError(f"MABK relabeling closure has {len(seen)} members, expected {expected}")
    idx = np.arange(2 ** n)
    members = []
    for sign in (1, -1):
        for tau in range(2 ** n):
            v = sign * beta[idx ^ tau]
            if _key(v) not in seen:
                raise AssertionError(f"swap pattern {tau} with sign {sign} not in the closure")
            v.setflags(write=False)
            members.append(MabkCoefficients(n, v, swap_pattern=tau, sign=sign))
    return tuple(members)


def mabk_orbit_values(full: np.ndarray) -> np.ndarray:
    """|MABK value| for every swap pattern tau, batched: (T, 2**n) -> (T, 2**n)."""
    full = np.atleast_2d(np.asarray(full, dtype=float))
    n = _check_pow2(full.shape[1])
    spec = fwht_rows(full)
    spec *= _kernel_weights(n)
    _fwht_rows(spec)
    return np.abs(spec)


def mabk_orbit_violated(tensor: CorrelationTensor) -> tuple[bool, float, int]:
    """(violated, best value, best swap pattern) over the orbit."""
    vals = mabk_orbit_values(tensor.full)[0]
    best = int(np.argmax(vals))
    value = float(vals[best])
    return value > classical_bound(tensor.n) + VIOLATION_TOL, value, best


def mabk_orbit_violated_explicit(tensor: CorrelationTensor) -> tuple[bool, float, int]:
    """Same verdict by evaluating every member of :func:`mabk_orbit`."""
    orbit = mabk_orbit(tensor.n)
    vals = np.array([mabk_value(c, tensor) for c in orbit[: 2 ** tensor.n]])
    best = int(np.argmax(vals))
    return bool(vals[best] > classical_bound(tensor.n) + VIOLATION_TOL), float(vals[best]), best


# ---------------------------------------------------------------------------
# WWZB
# ---------------------------------------------------------------------------

def wwzb_lhs_rows(full: np.ndarray) -> np.ndarray:
    return np.abs(fwht_rows(full)).sum(axis=1)


def wwzb_violated(tensor: CorrelationTensor) -> tuple[bool, float]:
    lhs = float(wwzb_lhs_rows(tensor.full)[0])
    return lhs > wwzb_bound(tensor.n) + VIOLATION_TOL, lhs


def wwzb_lhs_naive(full: Sequence[float]) -> float:
    """Left side of the nonlinear WWZB criterion by explicit double sum."""
    full = np.asarray(full, dtype=float)
    n = _check_pow2(full.shape[0])
    total = 0.0
    for k in itertools.product([1, -1], repeat=n):
        inner = 0.0
        for idx, s in enumerate(itertools.product([0, 1], repeat=n)):
            inner += np.prod([kj if sj else 1 for kj, sj in zip(k, s)]) * full[idx]
        total += abs(inner)
    return total


# ---------------------------------------------------------------------------
# two-party helpers and combined verdict
# ---------------------------------------------------------------------------

CHSH_CLASS = np.array(
    [
        [1.0, 1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, 1.0],
        [1.0, -1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0, 1.0],
    ]
)


def chsh_class_values(full: np.ndarray) -> np.ndarray:
    """The four absolute-value CHSH expressions for n = 2 tensors, shape (T, 4)."""
    full = np.atleast_2d(np.asarray(full, dtype=float))
    if full.shape[1] != 4:
        raise ValueError("CHSH class needs two-party tensors")
    return np.abs(full @ CHSH_CLASS.T)


@dataclass(frozen=True)
class InequalityVerdict:
    mabk_orbit_violated: bool
    mabk_best_value: float
    mabk_best_index: int
    wwzb_violated: bool
    wwzb_lhs: float


def evaluate_inequalities(tensor: CorrelationTensor) -> InequalityVerdict:
    violated, best, index = mabk_orbit_violated(tensor)
    w_violated, lhs = wwzb_violated(tensor)
    return InequalityVerdict(violated, best, index, w_violated, lhs)
