"""Local-causal-description test by linear-programming feasibility.

The statistics ``b`` (all ``3**n`` correlators, entry 0 being the
normalization) admit a locally causal model iff ``A x = b`` has a solution
``x >= 0`` where ``x`` is a joint distribution over the ``2n`` outcomes
``(o^1_1, o^1_2, ..., o^n_1, o^n_2)``.  Variables are ordered with
``o^1_1`` as the most significant bit and ``-1`` mapped to bit 1, rows in the
assignment order of :mod:`randbell.quantum`.  With that ordering ``A`` is the
``n``-fold Kronecker power of the single-party block::

            ++  +-  -+  --
    marg  [  1   1   1   1 ]
    s=1   [  1   1  -1  -1 ]
    s=2   [  1  -1   1  -1 ]

Feasibility is decided by a phase-1 tableau simplex.  :func:`decide` adds two
exact shortcuts in front of it: a pairwise Frank-Wolfe search for a separating
hyperplane (a Farkas certificate, i.e. a violated Bell inequality whose local
bound is computed by enumerating all deterministic strategies), and the
Frank-Wolfe mixture itself as a feasibility witness when it reproduces ``b``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, TextIO, Union

import numpy as np

from ._accel import njit, pick
from .quantum import CorrelationTensor, MeasurementFrame, StateSpec, correlation_tensor

FEASIBILITY_TOL = 1e-7
DEFAULT_LP_MAX_N = 6
PIVOT_TOL = 1e-9
HARRIS_TOL = 1e-9
COST_TOL = 1e-10
STALL_LIMIT = 50

PARTY_BLOCK = np.array(
    [[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0]]
)
# Gram matrix of the single-party vertex vectors (1, o1, o2)
PARTY_GRAM = PARTY_BLOCK.T @ PARTY_BLOCK

STATUS_OPTIMAL = 0
STATUS_ITERATION_LIMIT = 1
STATUS_UNBOUNDED = 2


class SolverError(RuntimeError):
    """The simplex did not reach an optimal basis."""


@lru_cache(maxsize=None)
def constraint_matrix(n: int) -> np.ndarray:
    A = np.ones((1, 1))
    for _ in range(n):
        A = np.kron(A, PARTY_BLOCK)
    A.setflags(write=False)
    return A


@dataclass(frozen=True, eq=False)
class LpProblem:
    n: int
    A: np.ndarray
    b: np.ndarray

    @property
    def num_vars(self) -> int:
        return self.A.shape[1]

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class FeasibilityResult:
    feasible: bool
    phase1_objective: float
    iterations: int
    x: np.ndarray
    certificate: Optional[np.ndarray] = None


def build_lcd_lp(tensor: CorrelationTensor) -> LpProblem:
    if not tensor.has_marginals:
        raise ValueError("the LP needs every marginal correlator; build the tensor with marginals")
    b = np.array(tensor.marginals, dtype=float)
    b[0] = 1.0
    return LpProblem(tensor.n, constraint_matrix(tensor.n), b)


def problem_from_statistics(n: int, b: np.ndarray) -> LpProblem:
    b = np.array(b, dtype=float)
    if b.shape != (3 ** n,):
        raise ValueError("statistics vector must have length 3**n")
    b[0] = 1.0
    return LpProblem(n, constraint_matrix(n), b)


# ---------------------------------------------------------------------------
# phase-1 simplex
# ---------------------------------------------------------------------------
# Tableau rows 0..m-1 hold [A_hat | I | b_hat] with rows sign-adjusted so that
# b_hat >= 0; row m holds the reduced costs of the artificial-sum objective.
# Only structural columns are priced, so artificials never re-enter.  Pricing
# is Dantzig (most negative reduced cost, lowest index on ties) with a Harris
# two-pass ratio test (largest pivot within HARRIS_TOL of the minimum ratio;
# roundoff negatives in the right-hand side are clamped to zero).  After
# STALL_LIMIT pivots without objective progress it switches to Bland's rule
# until the objective moves again.

@njit
def _phase1_numba(A, b, max_iter, piv_tol, harris_tol, cost_tol, stall_limit):
    m, N = A.shape
    W = N + m + 1
    T = np.zeros((m + 1, W))
    sg = np.ones(m)
    for i in range(m):
        if b[i] < 0.0:
            sg[i] = -1.0
        for j in range(N):
            T[i, j] = sg[i] * A[i, j]
        T[i, N + i] = 1.0
        T[i, W - 1] = sg[i] * b[i]
    for j in range(N):
        s = 0.0
        for i in range(m):
            s += T[i, j]
        T[m, j] = -s
    s = 0.0
    for i in range(m):
        s += T[i, W - 1]
    T[m, W - 1] = -s
    basis = np.empty(m, dtype=np.int64)
    for i in range(m):
        basis[i] = N + i

    status = STATUS_ITERATION_LIMIT
    it = 0
    stall = 0
    bland = False
    best_obj = -T[m, W - 1]
    while it < max_iter:
        q = -1
        if bland:
            for j in range(N):
                if T[m, j] < -cost_tol:
                    q = j
                    break
        else:
            most = -cost_tol
            for j in range(N):
                if T[m, j] < most:
                    most = T[m, j]
                    q = j
        if q < 0:
            status = STATUS_OPTIMAL
            break
        r = -1
        if bland:
            lo = np.inf
            for i in range(m):
                if T[i, q] > piv_tol:
                    ratio = T[i, W - 1] / T[i, q]
                    if ratio < lo:
                        lo = ratio
            for i in range(m):
                if T[i, q] > piv_tol and T[i, W - 1] / T[i, q] <= lo + 1e-12:
                    if r < 0 or basis[i] < basis[r]:
                        r = i
        else:
            theta = np.inf
            for i in range(m):
                if T[i, q] > piv_tol:
                    ratio = (T[i, W - 1] + harris_tol) / T[i, q]
                    if ratio < theta:
                        theta = ratio
            big = 0.0
            for i in range(m):
                a = T[i, q]
                if a > piv_tol and T[i, W - 1] / a <= theta and a > big:
                    big = a
                    r = i
        if r < 0:
            status = STATUS_UNBOUNDED
            break
        piv = T[r, q]
        for j in range(W):
            T[r, j] /= piv
        for i in range(m + 1):
            if i != r:
                f = T[i, q]
                if f != 0.0:
                    for j in range(W):
                        T[i, j] -= f * T[r, j]
        for i in range(m):
            if T[i, W - 1] < 0.0:
                T[i, W - 1] = 0.0
        basis[r] = q
        it += 1
        obj = -T[m, W - 1]
        if obj < best_obj - 1e-13:
            best_obj = obj
            stall = 0
            bland = False
        else:
            stall += 1
            if stall >= stall_limit:
                bland = True

    x = np.zeros(N)
    for i in range(m):
        if basis[i] < N:
            x[basis[i]] = T[i, W - 1]
    y = np.empty(m)
    for i in range(m):
        y[i] = sg[i] * (1.0 - T[m, N + i])
    return -T[m, W - 1], it, status, x, y


def _phase1_numpy(A, b, max_iter, piv_tol, harris_tol, cost_tol, stall_limit):
    m, N = A.shape
    W = N + m + 1
    sg = np.where(b < 0.0, -1.0, 1.0)
    T = np.zeros((m + 1, W))
    T[:m, :N] = sg[:, None] * A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = sg * b
    T[m, :N] = -T[:m, :N].sum(axis=0)
    T[m, -1] = -T[:m, -1].sum()
    basis = np.arange(N, N + m)

    status = STATUS_ITERATION_LIMIT
    it = 0
    stall = 0
    bland = False
    best_obj = -T[m, -1]
    while it < max_iter:
        costs = T[m, :N]
        if bland:
            cand = np.flatnonzero(costs < -cost_tol)
            q = int(cand[0]) if cand.size else -1
        else:
            q = int(np.argmin(costs))
            if not costs[q] < -cost_tol:
                q = -1
        if q < 0:
            status = STATUS_OPTIMAL
            break
        col = T[:m, q]
        rows = np.flatnonzero(col > piv_tol)
        if rows.size == 0:
            status = STATUS_UNBOUNDED
            break
        ratios = T[rows, -1] / col[rows]
        if bland:
            cand = rows[ratios <= ratios.min() + 1e-12]
            r = int(cand[np.argmin(basis[cand])])
        else:
            theta = ((T[rows, -1] + harris_tol) / col[rows]).min()
            cand = rows[ratios <= theta]
            r = int(cand[np.argmax(col[cand])])
        T[r] /= T[r, q]
        f = T[:, q].copy()
        f[r] = 0.0
        T -= np.outer(f, T[r])
        np.maximum(T[:m, -1], 0.0, out=T[:m, -1])
        basis[r] = q
        it += 1
        obj = -T[m, -1]
        if obj < best_obj - 1e-13:
            best_obj = obj
            stall = 0
            bland = False
        else:
            stall += 1
            if stall >= stall_limit:
                bland = True

    x = np.zeros(N)
    struct = basis < N
    x[basis[struct]] = T[:m, -1][struct]
    y = sg * (1.0 - T[m, N:N + m])
    return -T[m, -1], it, status, x, y


_phase1 = pick(_phase1_numba, _phase1_numpy)


def default_iteration_cap(problem: LpProblem) -> int:
    return 50 * (problem.num_vars + problem.num_rows)


def solve_phase1(A: np.ndarray, b: np.ndarray, max_iter: Optional[int] = None, tol: float = FEASIBILITY_TOL) -> FeasibilityResult:
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if max_iter is None:
        max_iter = 50 * (A.shape[0] + A.shape[1])
    obj, it, status, x, y = _phase1(A, b, int(max_iter), PIVOT_TOL, HARRIS_TOL, COST_TOL, STALL_LIMIT)
    if status == STATUS_ITERATION_LIMIT:
        raise SolverError(f"phase-1 simplex hit the iteration cap ({max_iter})")
    if status != STATUS_OPTIMAL:
        raise SolverError("phase-1 simplex reported an unbounded ratio test")
    obj = max(float(obj), 0.0)
    feasible = obj <= tol
    return FeasibilityResult(feasible, obj, int(it), x, None if feasible else y)


def lp_feasible(problem: LpProblem, max_iter: Optional[int] = None, tol: float = FEASIBILITY_TOL) -> FeasibilityResult:
    """Phase-1 simplex on ``A x = b, x >= 0``; feasible iff optimum <= ``tol``."""
    if max_iter is None:
        max_iter = default_iteration_cap(problem)
    return solve_phase1(problem.A, problem.b, max_iter, tol)


# ---------------------------------------------------------------------------
# Kronecker-structured helpers
# ---------------------------------------------------------------------------

@njit
def _vertex_values(w, n, out):
    """out[lam] = w . d_lam for all 4**n deterministic strategies (A^T w)."""
    cur = w.copy()
    lead = 1
    rest = cur.shape[0]
    for _ in range(n):
        rest //= 3
        new = np.empty(lead * 4 * rest)
        for a in range(lead):
            base_in = a * 3 * rest
            base_out = a * 4 * rest
            for r in range(rest):
                m0 = cur[base_in + r]
                m1 = cur[base_in + rest + r]
                m2 = cur[base_in + 2 * rest + r]
                new[base_out + r] = m0 + m1 + m2
                new[base_out + rest + r] = m0 + m1 - m2
                new[base_out + 2 * rest + r] = m0 - m1 + m2
                new[base_out + 3 * rest + r] = m0 - m1 - m2
        cur = new
        lead *= 4
    for i in range(out.shape[0]):
        out[i] = cur[i]


@njit
def _vertex_vector(lam, n, out):
    """Statistics vector of deterministic strategy ``lam`` (a column of A)."""
    out[0] = 1.0
    size = 1
    for k in range(n):
        code = (lam >> (2 * (n - 1 - k))) & 3
        o1 = -1.0 if (code >> 1) & 1 else 1.0
        o2 = -1.0 if code & 1 else 1.0
        for i in range(size - 1, -1, -1):
            v = out[i]
            out[3 * i] = v
            out[3 * i + 1] = v * o1
            out[3 * i + 2] = v * o2
        size *= 3


@njit
def _gram_column(lam, n, gram, out):
    """out[mu] = d_mu . d_lam."""
    out[0] = 1.0
    size = 1
    for k in range(n):
        code = (lam >> (2 * (n - 1 - k))) & 3
        for i in range(size - 1, -1, -1):
            v = out[i]
            for c in range(3, -1, -1):
                out[4 * i + c] = v * gram[c, code]
        size *= 4


def vertex_values(w: np.ndarray, n: int) -> np.ndarray:
    """``A^T w``: value of the linear functional ``w`` on every deterministic strategy."""
    out = np.empty(4 ** n)
    _vertex_values(np.ascontiguousarray(w, dtype=float), n, out)
    return out


def local_bound(y: np.ndarray, n: int) -> float:
    """Maximum of ``y . P`` over locally causal statistics (attained at a vertex)."""
    return float(np.max(vertex_values(y, n)))


# ---------------------------------------------------------------------------
# pairwise Frank-Wolfe certificate search
# ---------------------------------------------------------------------------

FW_SEPARATED = 1
FW_CONVERGED = 0
FW_EXHAUSTED = -1


@njit
def _pairwise_fw(b, n, gram, max_iter, refresh):
    m = b.shape[0]
    N = 1
    for _ in range(n):
        N *= 4
    alpha = np.full(N, 1.0 / N)
    p = np.zeros(m)
    p[0] = 1.0
    w = b - p
    vals = np.empty(N)
    ab = np.empty(N)
    _vertex_values(b, n, ab)
    _vertex_values(w, n, vals)
    bb = 0.0
    pb = 0.0
    for i in range(m):
        bb += b[i] * b[i]
        pb += p[i] * b[i]
    gj = np.empty(N)
    ga = np.empty(N)
    dj = np.empty(m)
    da = np.empty(m)
    diag = 1.0
    for _ in range(n):
        diag *= 3.0
    status = FW_EXHAUSTED
    it = 0
    while it < max_iter:
        j = 0
        for l in range(1, N):
            if vals[l] > vals[j]:
                j = l
        wmax = 0.0
        dist2 = 0.0
        for i in range(m):
            e = b[i] - p[i]
            w[i] = e
            dist2 += e * e
            if abs(e) > wmax:
                wmax = abs(e)
        wb = bb - pb
        if wb - vals[j] > 1e-7 * (wmax + abs(vals[j])):
            # candidate separation: verify on exact quantities
            _vertex_values(w, n, vals)
            j = 0
            for l in range(1, N):
                if vals[l] > vals[j]:
                    j = l
            wb = 0.0
            for i in range(m):
                wb += w[i] * b[i]
            if (wb - vals[j]) > 1e-7 * (wmax + abs(vals[j])):
                status = FW_SEPARATED
                break
        a = -1
        for l in range(N):
            if alpha[l] > 0.0 and (a < 0 or vals[l] < vals[a]):
                a = l
        gap = vals[j] - vals[a]
        if gap <= 1e-13 or dist2 <= 1e-20:
            status = FW_CONVERGED
            break
        _gram_column(j, n, gram, gj)
        _gram_column(a, n, gram, ga)
        ee = 2.0 * diag - 2.0 * gj[a]
        g = gap / ee
        if g > alpha[a]:
            g = alpha[a]
        alpha[j] += g
        alpha[a] -= g
        if alpha[a] < 1e-16:
            alpha[a] = 0.0
        _vertex_vector(j, n, dj)
        _vertex_vector(a, n, da)
        for i in range(m):
            p[i] += g * (dj[i] - da[i])
        pb += g * (ab[j] - ab[a])
        for l in range(N):
            vals[l] -= g * (gj[l] - ga[l])
        it += 1
        if it % refresh == 0:
            pb = 0.0
            for i in range(m):
                w[i] = b[i] - p[i]
                pb += p[i] * b[i]
            _vertex_values(w, n, vals)
    for i in range(m):
        w[i] = b[i] - p[i]
    return status, it, w, alpha


@dataclass(frozen=True, eq=False)
class Certificate:
    """Bell functional ``y`` with ``y . b > bound = max over local strategies``."""

    y: np.ndarray
    bound: float
    value: float

    @property
    def margin(self) -> float:
        return self.value - self.bound


@dataclass(frozen=True, eq=False)
class SearchResult:
    status: int
    iterations: int
    certificate: Optional[Certificate]
    support: np.ndarray
    weights: np.ndarray


def verified_certificate(y: np.ndarray, b: np.ndarray, n: int) -> Optional[Certificate]:
    """Accept ``y`` only if ``(y.b - bound) > 1e-7 (|y|_inf + |bound|)``.

    Any ``x >= 0`` with residual ``r = b - A x`` then has
    ``|r|_1 >= (y.b - bound) / (|y|_inf + |bound|)``, so the phase-1 optimum
    exceeds the feasibility tolerance and both routes give the same verdict.
    """
    y = np.ascontiguousarray(y, dtype=float)
    bound = local_bound(y, n)
    value = float(y @ b)
    if value - bound > FEASIBILITY_TOL * (np.abs(y).max() + abs(bound)):
        return Certificate(y, bound, value)
    return None


def search_certificate(b: np.ndarray, n: int, max_iter: int = 20000) -> SearchResult:
    """Pairwise Frank-Wolfe on ``min ||P - b||^2`` over the local polytope."""
    b = np.ascontiguousarray(b, dtype=float)
    status, it, w, alpha = _pairwise_fw(b, n, PARTY_GRAM, int(max_iter), 64)
    support = np.flatnonzero(alpha > 0.0)
    cert = None
    if status == FW_SEPARATED:
        cert = verified_certificate(w, b, n)
        if cert is None:  # pragma: no cover - the kernel already verified this
            status = FW_EXHAUSTED
    return SearchResult(status, int(it), cert, support, alpha[support])


WITNESS_TOL = 1e-9


def verified_witness(problem: LpProblem, support: np.ndarray, weights: np.ndarray) -> Optional[np.ndarray]:
    """Full-length ``x >= 0`` if the weights reproduce ``b`` within ``WITNESS_TOL``."""
    if support.size == 0 or (weights < 0).any():
        return None
    residual = problem.A[:, support] @ weights - problem.b
    if np.abs(residual).max() > WITNESS_TOL:
        return None
    x = np.zeros(problem.num_vars)
    x[support] = weights
    return x


# ---------------------------------------------------------------------------
# combined decision
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LcdDecision:
    nonclassical: bool
    method: str  # "certificate", "witness", "lp"
    iterations: int
    phase1_objective: float = math.nan


def default_fw_iterations(n: int) -> int:
    return max(2000, 20 * 4 ** n)


def decide(b: np.ndarray, n: int, screen: bool = True, fw_max_iter: Optional[int] = None) -> LcdDecision:
    """Locally-causal test for statistics ``b``; raises :class:`SolverError`.

    With ``screen`` the Frank-Wolfe search runs first and its outcome is used
    only when it is conclusive: a verified separating functional, or a
    mixture of deterministic strategies reproducing ``b``.  Everything else,
    and everything when ``screen`` is off, goes to the phase-1 simplex.
    """
    problem = problem_from_statistics(n, b)
    work = 0
    if screen:
        if fw_max_iter is None:
            fw_max_iter = default_fw_iterations(n)
        found = search_certificate(problem.b, n, fw_max_iter)
        work = found.iterations
        if found.certificate is not None:
            return LcdDecision(True, "certificate", work)
        if verified_witness(problem, found.support, found.weights) is not None:
            return LcdDecision(False, "witness", work)
    res = lp_feasible(problem)
    return LcdDecision(not res.feasible, "lp", work + res.iterations, res.phase1_objective)


def classicality_verdict(
    spec: StateSpec,
    frame: MeasurementFrame,
    screen: bool = False,
    lp_max_n: int = DEFAULT_LP_MAX_N,
) -> bool:
    """True when the statistics of ``spec`` measured in ``frame`` admit no LCD."""
    if spec.n > lp_max_n:
        raise ValueError(f"LP criterion is limited to n <= {lp_max_n}")
    tensor = correlation_tensor(spec, frame, with_marginals=True)
    if screen:
        return decide(tensor.marginals, spec.n, screen=True).nonclassical
    return not lp_feasible(build_lcd_lp(tensor)).feasible


# ---------------------------------------------------------------------------
# plain-text dump
# ---------------------------------------------------------------------------
# Format: a header line "rows cols" followed by `rows` lines of `cols`
# space-separated numbers, row-major.  The matrix written is [A | b], so
# cols = num_vars + 1 and the last column is the right-hand side.

def dump_problem(problem: LpProblem, dest: Union[str, TextIO]) -> None:
    aug = np.hstack([problem.A, problem.b[:, None]])
    buf = io.StringIO()
    buf.write(f"{aug.shape[0]} {aug.shape[1]}\n")
    np.savetxt(buf, aug, fmt="%.17g", delimiter=" ")
    text = buf.getvalue()
    if isinstance(dest, str):
        with open(dest, "w") as fh:
            fh.write(text)
    else:
        dest.write(text)


def load_problem(src: Union[str, TextIO]) -> LpProblem:
    if isinstance(src, str):
        with open(src) as fh:
            text = fh.read()
    else:
        text = src.read()
    header, _, body = text.partition("\n")
    rows, cols = (int(v) for v in header.split())
    aug = np.loadtxt(io.StringIO(body), ndmin=2)
    if aug.shape != (rows, cols):
        raise ValueError(f"header says {rows}x{cols}, body is {aug.shape[0]}x{aug.shape[1]}")
    n = round(math.log(rows, 3))
    return LpProblem(n, aug[:, :-1], aug[:, -1])
