"""Quantum correlation functions for GHZ, Schmidt-form and singlet states.

Conventions
-----------
* A setting tuple ``(s_1, ..., s_n)`` with ``s_k in {1, 2}`` has flat index
  ``sum_k (s_k - 1) * 2**(n-k)``; party 1 is the most significant bit.
* A setting *assignment* additionally allows a party to be marginalized.
  Entries are ``0`` (marginalized), ``1`` or ``2``; the flat index is the
  base-3 number with party 1 most significant, so index 0 is the
  all-marginalized normalization entry.
* Frames are stored as float arrays of shape ``(n, 2, 3)``: party, setting,
  Cartesian component.  Batched kernels take ``(T, n, 2, 3)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from ._accel import njit, pick

DEFAULT_MAX_PARTIES = 20
UNIT_TOL = 1e-12


class CapacityError(ValueError):
    """Requested party count exceeds the configured maximum."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Direction:
    """Unit vector on the Bloch sphere."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm2 = self.x * self.x + self.y * self.y + self.z * self.z
        if abs(norm2 - 1.0) > UNIT_TOL:
            raise ValueError(f"direction is not a unit vector (|d|^2 = {norm2!r})")

    @classmethod
    def from_array(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "Direction":
        return cls(
            float(np.sin(theta) * np.cos(phi)),
            float(np.sin(theta) * np.sin(phi)),
            float(np.cos(theta)),
        )

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def theta(self) -> float:
        return float(np.arccos(np.clip(self.z, -1.0, 1.0)))

    @property
    def phi(self) -> float:
        return float(np.arctan2(self.y, self.x))


X_AXIS = Direction(1.0, 0.0, 0.0)
Y_AXIS = Direction(0.0, 1.0, 0.0)
Z_AXIS = Direction(0.0, 0.0, 1.0)


class StateSpec:
    """Base class of the supported pure states."""

    n: int

    def validate(self, max_parties: int = DEFAULT_MAX_PARTIES) -> None:
        pass


@dataclass(frozen=True)
class GHZ(StateSpec):
    n: int

    def validate(self, max_parties: int = DEFAULT_MAX_PARTIES) -> None:
        if self.n < 2:
            raise ValueError("GHZ state needs n >= 2")
        if self.n > max_parties:
            raise CapacityError(f"GHZ({self.n}) exceeds the configured maximum of {max_parties} parties")


@dataclass(frozen=True)
class SchmidtPair(StateSpec):
    """``cos(theta)|00> + sin(theta)|11>`` with ``theta`` in [0, pi/4]."""

    theta: float
    n: int = field(default=2, init=False)

    def validate(self, max_parties: int = DEFAULT_MAX_PARTIES) -> None:
        if not 0.0 <= self.theta <= np.pi / 4 + 1e-15:
            raise ValueError("Schmidt angle must lie in [0, pi/4]")


@dataclass(frozen=True)
class Singlet(StateSpec):
    n: int = field(default=2, init=False)


@dataclass(frozen=True, eq=False)
class MeasurementFrame:
    """Two measurement directions per party, shape ``(n, 2, 3)``."""

    directions: np.ndarray

    def __post_init__(self):
        d = np.array(self.directions, dtype=float)
        if d.ndim != 3 or d.shape[1:] != (2, 3):
            raise ValueError("frame must have shape (n, 2, 3)")
        norms = np.einsum("...i,...i->...", d, d)
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise ValueError("frame contains a non-unit direction")
        d.setflags(write=False)
        object.__setattr__(self, "directions", d)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[Direction, Direction]]) -> "MeasurementFrame":
        return cls(np.array([[a.vector, b.vector] for a, b in pairs]))

    @property
    def n(self) -> int:
        return self.directions.shape[0]

    def direction(self, party: int, setting: int) -> Direction:
        """Direction of ``party`` (0-based) for ``setting`` in {1, 2}."""
        return Direction.from_array(self.directions[party, setting - 1])

    def is_orthogonal(self, tol: float = 1e-10) -> bool:
        dots = np.einsum("ki,ki->k", self.directions[:, 0], self.directions[:, 1])
        return bool(np.all(np.abs(dots) <= tol))

    def __eq__(self, other):
        return isinstance(other, MeasurementFrame) and np.array_equal(self.directions, other.directions)

    def __hash__(self):
        return hash(self.directions.tobytes())


@lru_cache(maxsize=None)
def assignments(n: int) -> tuple[tuple[int, ...], ...]:
    """All 3**n setting assignments in flat-index order."""
    out = []
    for idx in range(3 ** n):
        digits = []
        for _ in range(n):
            idx, r = divmod(idx, 3)
            digits.append(r)
        out.append(tuple(reversed(digits)))
    return tuple(out)


def assignment_index(assign: Sequence[int]) -> int:
    idx = 0
    for a in assign:
        if a not in (0, 1, 2):
            raise ValueError("assignment entries must be 0 (marginalized), 1 or 2")
        idx = 3 * idx + a
    return idx


def setting_index(settings: Sequence[int]) -> int:
    idx = 0
    for s in settings:
        if s not in (1, 2):
            raise ValueError("settings must be 1 or 2")
        idx = 2 * idx + (s - 1)
    return idx


@lru_cache(maxsize=None)
def full_to_marginal_index(n: int) -> np.ndarray:
    """Positions of the 2**n no-marginalized assignments inside the 3**n list."""
    out = np.empty(2 ** n, dtype=np.int64)
    for idx in range(2 ** n):
        m = 0
        for k in range(n):
            bit = (idx >> (n - 1 - k)) & 1
            m = 3 * m + bit + 1
        out[idx] = m
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class CorrelationTensor:
    n: int
    full: np.ndarray
    marginals: Optional[np.ndarray] = None

    def __post_init__(self):
        full = np.array(self.full, dtype=float)
        if full.shape != (2 ** self.n,):
            raise ValueError("full correlator array must have length 2**n")
        full.setflags(write=False)
        object.__setattr__(self, "full", full)
        if self.marginals is not None:
            marg = np.array(self.marginals, dtype=float)
            if marg.shape != (3 ** self.n,):
                raise ValueError("marginal array must have length 3**n")
            marg.setflags(write=False)
            object.__setattr__(self, "marginals", marg)

    @property
    def has_marginals(self) -> bool:
        return self.marginals is not None

    def value(self, settings: Sequence[int]) -> float:
        return float(self.full[setting_index(settings)])

    def marginal(self, assign: Sequence[int]) -> float:
        if self.marginals is None:
            raise ValueError("tensor was built without marginals")
        return float(self.marginals[assignment_index(assign)])


# ---------------------------------------------------------------------------
# brute-force statevector route
# ---------------------------------------------------------------------------

def statevector(spec: StateSpec, max_parties: int = DEFAULT_MAX_PARTIES) -> np.ndarray:
    spec.validate(max_parties)
    if isinstance(spec, GHZ):
        psi = np.zeros(2 ** spec.n, dtype=complex)
        psi[0] = psi[-1] = 1.0 / np.sqrt(2.0)
    elif isinstance(spec, SchmidtPair):
        psi = np.array([np.cos(spec.theta), 0.0, 0.0, np.sin(spec.theta)], dtype=complex)
    elif isinstance(spec, Singlet):
        psi = np.array([0.0, 1.0, -1.0, 0.0], dtype=complex) / np.sqrt(2.0)
    else:
        raise TypeError(f"unsupported state {spec!r}")
    return psi


def bloch_operator(d) -> np.ndarray:
    """``d . sigma`` as a 2x2 complex matrix."""
    if not isinstance(d, Direction):
        d = Direction.from_array(d)
    return np.array([[d.z, d.x - 1j * d.y], [d.x + 1j * d.y, -d.z]], dtype=complex)


def _apply_site(psi: np.ndarray, op: np.ndarray, party: int) -> np.ndarray:
    moved = np.moveaxis(psi, party, 0)
    out = np.tensordot(op, moved, axes=([1], [0]))
    return np.moveaxis(out, 0, party)


def expectation_product(psi: np.ndarray, ops: Sequence[Optional[np.ndarray]]) -> float:
    """``<psi| op_1 x ... x op_n |psi>`` with ``None`` meaning identity."""
    n = len(ops)
    state = psi.reshape((2,) * n)
    phi = state
    for k, op in enumerate(ops):
        if op is not None:
            phi = _apply_site(phi, op, k)
    return float(np.real(np.vdot(state, phi)))


def correlator_bruteforce(spec: StateSpec, frame: MeasurementFrame, assign: Sequence[int]) -> float:
    if len(assign) != spec.n or frame.n != spec.n:
        raise ValueError("assignment and frame must match the party count")
    psi = statevector(spec, max(DEFAULT_MAX_PARTIES, spec.n))
    ops = [
        None if a == 0 else bloch_operator(frame.directions[k, a - 1])
        for k, a in enumerate(assign)
    ]
    return expectation_product(psi, ops)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def ghz_correlator(n: int, active_dirs: Sequence) -> float:
    """GHZ(n) correlator with the listed parties active, the rest marginalized.

    ``<0..0|A|0..0>`` and ``<1..1|A|1..1>`` contribute ``prod z`` and
    ``prod(-z)``; the off-diagonal pair only survives when every party is
    active and gives ``Re prod (x + i y)``.
    """
    k = len(active_dirs)
    if k > n:
        raise ValueError("more active parties than n")
    vecs = [d.vector if isinstance(d, Direction) else np.asarray(d, dtype=float) for d in active_dirs]
    prod_z = float(np.prod([v[2] for v in vecs])) if vecs else 1.0
    value = prod_z if k % 2 == 0 else 0.0
    if k == n:
        value += float(np.real(np.prod([v[0] + 1j * v[1] for v in vecs])))
    return value


def schmidt_correlator(theta: float, a, b) -> float:
    """``E(a, b) = a_z b_z + sin(2 theta) (a_x b_x - a_y b_y)``."""
    a = a.vector if isinstance(a, Direction) else np.asarray(a, dtype=float)
    b = b.vector if isinstance(b, Direction) else np.asarray(b, dtype=float)
    return float(a[2] * b[2] + np.sin(2 * theta) * (a[0] * b[0] - a[1] * b[1]))


def singlet_correlator(a, b) -> float:
    a = a.vector if isinstance(a, Direction) else np.asarray(a, dtype=float)
    b = b.vector if isinstance(b, Direction) else np.asarray(b, dtype=float)
    return float(-np.dot(a, b))


# ---------------------------------------------------------------------------
# batched kernels
# ---------------------------------------------------------------------------

@njit
def _ghz_full_numba(dirs, out):
    T, n = dirs.shape[0], dirs.shape[1]
    size = 1 << n
    even = n % 2 == 0
    pz = np.empty(size)
    cr = np.empty(size)
    ci = np.empty(size)
    for t in range(T):
        pz[0] = 1.0
        cr[0] = 1.0
        ci[0] = 0.0
        cur = 1
        for k in range(n):
            for i in range(cur - 1, -1, -1):
                p = pz[i]
                re = cr[i]
                im = ci[i]
                for s in range(2):
                    x = dirs[t, k, s, 0]
                    y = dirs[t, k, s, 1]
                    j = 2 * i + s
                    pz[j] = p * dirs[t, k, s, 2]
                    cr[j] = re * x - im * y
                    ci[j] = re * y + im * x
            cur *= 2
        for i in range(size):
            out[t, i] = cr[i] + (pz[i] if even else 0.0)


def _kron_rows(a, b):
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def _ghz_full_numpy(dirs, out):
    T, n = dirs.shape[0], dirs.shape[1]
    pz = np.ones((T, 1))
    c = np.ones((T, 1), dtype=complex)
    for k in range(n):
        pz = _kron_rows(pz, dirs[:, k, :, 2])
        c = _kron_rows(c, dirs[:, k, :, 0] + 1j * dirs[:, k, :, 1])
    out[:] = c.real + (pz if n % 2 == 0 else 0.0)


@njit
def _ghz_marginals_numba(dirs, out):
    T, n = dirs.shape[0], dirs.shape[1]
    size = 1
    for _ in range(n):
        size *= 3
    pz = np.empty(size)
    parity = np.empty(size, dtype=np.int64)
    full_size = 1 << n
    cr = np.empty(full_size)
    ci = np.empty(full_size)
    for t in range(T):
        pz[0] = 1.0
        parity[0] = 0
        cur = 1
        for k in range(n):
            for i in range(cur - 1, -1, -1):
                p = pz[i]
                q = parity[i]
                pz[3 * i] = p
                parity[3 * i] = q
                pz[3 * i + 1] = p * dirs[t, k, 0, 2]
                parity[3 * i + 1] = q + 1
                pz[3 * i + 2] = p * dirs[t, k, 1, 2]
                parity[3 * i + 2] = q + 1
            cur *= 3
        for i in range(size):
            out[t, i] = pz[i] if parity[i] % 2 == 0 else 0.0
        cr[0] = 1.0
        ci[0] = 0.0
        cur = 1
        for k in range(n):
            for i in range(cur - 1, -1, -1):
                re = cr[i]
                im = ci[i]
                for s in range(2):
                    x = dirs[t, k, s, 0]
                    y = dirs[t, k, s, 1]
                    cr[2 * i + s] = re * x - im * y
                    ci[2 * i + s] = re * y + im * x
            cur *= 2
        # scatter Re prod(x+iy) onto the all-active entries
        for i in range(full_size):
            m = 0
            for k in range(n):
                m = 3 * m + ((i >> (n - 1 - k)) & 1) + 1
            out[t, m] += cr[i]


def _ghz_marginals_numpy(dirs, out):
    T, n = dirs.shape[0], dirs.shape[1]
    pz = np.ones((T, 1))
    for k in range(n):
        pz = _kron_rows(pz, np.concatenate([np.ones((T, 1)), dirs[:, k, :, 2]], axis=1))
    active = np.array([sum(1 for a in assign if a) for assign in assignments(n)])
    out[:] = np.where(active % 2 == 0, pz, 0.0)
    full = np.empty((T, 2 ** n))
    _ghz_full_numpy(dirs, full)
    if n % 2 == 0:
        full -= pz[:, full_to_marginal_index(n)]
    out[:, full_to_marginal_index(n)] += full


_ghz_full = pick(_ghz_full_numba, _ghz_full_numpy)
_ghz_marginals = pick(_ghz_marginals_numba, _ghz_marginals_numpy)


def ghz_full_tensors(dirs: np.ndarray) -> np.ndarray:
    """Full GHZ correlators for a batch of frames, shape (T, 2**n)."""
    dirs = np.ascontiguousarray(dirs, dtype=float)
    out = np.empty((dirs.shape[0], 2 ** dirs.shape[1]))
    _ghz_full(dirs, out)
    return out


def ghz_marginal_tensors(dirs: np.ndarray) -> np.ndarray:
    """All 3**n GHZ correlators (marginals included) for a batch of frames."""
    dirs = np.ascontiguousarray(dirs, dtype=float)
    out = np.empty((dirs.shape[0], 3 ** dirs.shape[1]))
    _ghz_marginals(dirs, out)
    return out


def schmidt_full_tensors(dirs: np.ndarray, theta) -> np.ndarray:
    """Two-qubit Schmidt-form correlators, shape (T, 4); ``theta`` scalar or (T,)."""
    dirs = np.asarray(dirs, dtype=float)
    s2 = np.sin(2 * np.broadcast_to(np.asarray(theta, dtype=float), (dirs.shape[0],)))[:, None, None]
    a = dirs[:, 0]
    b = dirs[:, 1]
    zz = a[:, :, None, 2] * b[:, None, :, 2]
    xy = a[:, :, None, 0] * b[:, None, :, 0] - a[:, :, None, 1] * b[:, None, :, 1]
    return (zz + s2 * xy).reshape(dirs.shape[0], 4)


def schmidt_marginal_tensors(dirs: np.ndarray, theta) -> np.ndarray:
    """All nine correlators of the Schmidt-form state; single marginals are ``cos(2 theta) z``."""
    dirs = np.asarray(dirs, dtype=float)
    T = dirs.shape[0]
    c2 = np.cos(2 * np.broadcast_to(np.asarray(theta, dtype=float), (T,)))[:, None]
    full = schmidt_full_tensors(dirs, theta)
    out = np.empty((T, 9))
    out[:, 0] = 1.0
    out[:, 1:3] = c2 * dirs[:, 1, :, 2]
    out[:, 3] = c2[:, 0] * dirs[:, 0, 0, 2]
    out[:, 6] = c2[:, 0] * dirs[:, 0, 1, 2]
    out[:, [4, 5, 7, 8]] = full
    return out


def bruteforce_tensors(psi: np.ndarray, dirs: np.ndarray, with_marginals: bool = False) -> np.ndarray:
    """Statevector correlators for a batch of frames on a fixed state."""
    dirs = np.asarray(dirs, dtype=float)
    T, n = dirs.shape[0], dirs.shape[1]
    if with_marginals:
        table = assignments(n)
    else:
        table = [tuple(((i >> (n - 1 - k)) & 1) + 1 for k in range(n)) for i in range(2 ** n)]
    out = np.empty((T, len(table)))
    for t in range(T):
        ops = [[None] + [bloch_operator(dirs[t, k, s]) for s in range(2)] for k in range(n)]
        for j, assign in enumerate(table):
            out[t, j] = expectation_product(psi, [ops[k][a] for k, a in enumerate(assign)])
    return out


def tensors_for_state(spec: StateSpec, dirs: np.ndarray, with_marginals: bool) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Batched (full, marginals) for ``spec``; closed forms where available."""
    if isinstance(spec, GHZ):
        if with_marginals:
            marg = ghz_marginal_tensors(dirs)
            return marg[:, full_to_marginal_index(spec.n)], marg
        return ghz_full_tensors(dirs), None
    if isinstance(spec, SchmidtPair):
        if with_marginals:
            marg = schmidt_marginal_tensors(dirs, spec.theta)
            return marg[:, full_to_marginal_index(2)], marg
        return schmidt_full_tensors(dirs, spec.theta), None
    psi = statevector(spec)
    if with_marginals:
        marg = bruteforce_tensors(psi, dirs, True)
        return marg[:, full_to_marginal_index(spec.n)], marg
    return bruteforce_tensors(psi, dirs, False), None


def correlation_tensor(spec: StateSpec, frame: MeasurementFrame, with_marginals: bool = False) -> CorrelationTensor:
    if frame.n != spec.n:
        raise ValueError("frame and state have different party counts")
    spec.validate(max(DEFAULT_MAX_PARTIES, spec.n))
    full, marg = tensors_for_state(spec, frame.directions[None], with_marginals)
    return CorrelationTensor(spec.n, full[0], None if marg is None else marg[0])
