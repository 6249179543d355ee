"""Reproducible sampling of measurement frames and Schmidt angles.

Every Monte Carlo trial owns one random stream.  A stream is numpy's
``Philox`` (4x64, 10 rounds) keyed by ``stream_index * 2**64 + master_seed``
with the counter starting at zero, so a stream is fully determined by the
pair ``(master_seed, stream_index)`` and never depends on which thread or in
which order trials are evaluated.  Raw 64-bit outputs become doubles in
``[0, 1)`` as ``(raw >> 11) * 2**-53``.

Draw order within a trial (part of the stability contract):

* random two-qubit state only: one draw for the Schmidt angle;
* then party by party, party 1 first:
    - RIM: ``z, phi`` for setting 1, then ``z, phi`` for setting 2;
    - ROM: ``z, phi`` for setting 1, then ``psi`` for setting 2.
"""
from __future__ import annotations

import enum
import math
from typing import Optional

import numpy as np

from ._accel import njit, pick
from .quantum import Direction, MeasurementFrame

TWO_PI = 2.0 * math.pi
_MASK64 = (1 << 64) - 1
_TO_UNIT = 2.0 ** -53


class SamplingMode(str, enum.Enum):
    RIM = "rim"
    ROM = "rom"


def draws_per_party(mode: SamplingMode) -> int:
    return 4 if SamplingMode(mode) is SamplingMode.RIM else 3


def draws_per_trial(n: int, mode: SamplingMode, random_state: bool = False) -> int:
    return n * draws_per_party(mode) + (1 if random_state else 0)


def _key(master_seed: int, stream_index: int) -> int:
    if not 0 <= master_seed <= _MASK64:
        raise ValueError("master_seed must fit in 64 unsigned bits")
    if not 0 <= stream_index <= _MASK64:
        raise ValueError("stream_index must fit in 64 unsigned bits")
    return (stream_index << 64) | master_seed


class RngStream:
    """Sequential view of one trial's stream."""

    def __init__(self, master_seed: int, stream_index: int = 0):
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self._bitgen = np.random.Philox(key=_key(self.master_seed, self.stream_index))

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index})"

    def raw(self, count: int) -> np.ndarray:
        return self._bitgen.random_raw(count).astype(np.uint64)

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return float(int(self._bitgen.random_raw()) >> 11) * _TO_UNIT


# ---------------------------------------------------------------------------
# batched uniforms: one row per stream index
# ---------------------------------------------------------------------------

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)


@njit
def _mulhilo(a, b):
    lo = a * b
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _LO32) + (p2 & _LO32)
    hi = p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    return hi, lo


@njit
def _philox_block(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@njit
def _uniform_rows_numba(master_seed, first_index, count, width):
    out = np.empty((count, width))
    key0 = master_seed
    blocks = (width + 3) // 4
    for t in range(count):
        key1 = first_index + np.uint64(t)
        col = 0
        for blk in range(blocks):
            r0, r1, r2, r3 = _philox_block(
                np.uint64(blk + 1), np.uint64(0), np.uint64(0), np.uint64(0), key0, key1
            )
            for r in (r0, r1, r2, r3):
                if col < width:
                    out[t, col] = np.float64(r >> _S11) * 1.1102230246251565e-16
                    col += 1
    return out


def _uniform_rows_numpy(master_seed, first_index, count, width):
    out = np.empty((count, width))
    for t in range(count):
        raw = np.random.Philox(key=_key(int(master_seed), int(first_index) + t)).random_raw(width)
        out[t] = (raw >> np.uint64(11)).astype(np.float64) * _TO_UNIT
    return out


_uniform_rows = pick(_uniform_rows_numba, _uniform_rows_numpy)


def uniform_rows(master_seed: int, first_index: int, count: int, width: int) -> np.ndarray:
    """Uniforms for streams ``first_index .. first_index+count-1``.

    Row ``t`` holds the first ``width`` draws of stream ``first_index + t``.
    """
    _key(master_seed, first_index)
    _key(master_seed, first_index + max(count - 1, 0))
    # uint64 scalars keep seeds >= 2**63 typeable in the compiled kernel
    return _uniform_rows(np.uint64(master_seed), np.uint64(first_index), int(count), int(width))


# ---------------------------------------------------------------------------
# transforms from uniforms (shared by the scalar and batched paths)
# ---------------------------------------------------------------------------

def _sphere(u_z, u_phi):
    z = 2.0 * u_z - 1.0
    phi = TWO_PI * u_phi
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def orthonormal_completion(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors ``e1, e2`` with ``(v, e1, e2)`` right-handed orthonormal.

    Works on arrays of shape (..., 3).
    """
    v = np.asarray(v, dtype=float)
    ref = np.where(
        (np.abs(v[..., 2]) < 0.9)[..., None],
        np.array([0.0, 0.0, 1.0]),
        np.array([1.0, 0.0, 0.0]),
    )
    e1 = np.cross(v, ref)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(v, e1)
    return e1, e2


def _great_circle(first, u_psi):
    e1, e2 = orthonormal_completion(first)
    psi = (TWO_PI * np.asarray(u_psi))[..., None]
    return np.cos(psi) * e1 + np.sin(psi) * e2


def frames_from_uniforms(u: np.ndarray, n: int, mode: SamplingMode) -> np.ndarray:
    """Map uniforms of shape (T, n*draws_per_party) to directions (T, n, 2, 3)."""
    mode = SamplingMode(mode)
    u = np.asarray(u, dtype=float)
    per = draws_per_party(mode)
    u = u.reshape(u.shape[0], n, per)
    if mode is SamplingMode.RIM:
        first = _sphere(u[..., 0], u[..., 1])
        second = _sphere(u[..., 2], u[..., 3])
    else:
        first = _sphere(u[..., 0], u[..., 1])
        second = _great_circle(first, u[..., 2])
    return np.stack([first, second], axis=2)


def schmidt_angle_from_uniform(u) -> np.ndarray:
    """Hilbert-Schmidt Schmidt angle from a draw in [0, 1).

    ``u`` is turned into ``1 - u`` in (0, 1]; the Bloch radius is
    ``r = (1-u)**(1/3) / 2`` (inverse CDF of density ``24 r**2`` on [0, 1/2])
    and the angle is ``arccos(2 r) / 2``.
    """
    r = np.cbrt(1.0 - np.asarray(u, dtype=float)) / 2.0
    return 0.5 * np.arccos(np.clip(2.0 * r, -1.0, 1.0))


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------

def sample_direction(rng: RngStream) -> Direction:
    u_z = rng.uniform()
    u_phi = rng.uniform()
    return Direction.from_array(_sphere(np.float64(u_z), np.float64(u_phi)))


def sample_orthogonal_pair(
    rng: RngStream, first: Optional[Direction] = None
) -> tuple[Direction, Direction]:
    """Uniform direction plus a uniform direction on its orthogonal great circle.

    ``first`` forces the first direction (no draws consumed for it).
    """
    if first is None:
        first = sample_direction(rng)
    second = _great_circle(first.vector, rng.uniform())
    return first, Direction.from_array(second)


def sample_frame(rng: RngStream, n: int, mode: SamplingMode) -> MeasurementFrame:
    if n < 2:
        raise ValueError("need at least two parties")
    mode = SamplingMode(mode)
    pairs = []
    for _ in range(n):
        if mode is SamplingMode.RIM:
            pairs.append((sample_direction(rng), sample_direction(rng)))
        else:
            pairs.append(sample_orthogonal_pair(rng))
    return MeasurementFrame.from_pairs(pairs)


def sample_schmidt_angle(rng: RngStream) -> float:
    return float(schmidt_angle_from_uniform(rng.uniform()))
