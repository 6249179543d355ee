import io
import itertools
import math

import numpy as np
import pytest

from randbell import inequalities as I
from randbell import lcd_lp as L
from randbell import quantum as Q
from randbell.quantum import GHZ, CorrelationTensor, MeasurementFrame, SchmidtPair

from conftest import random_dirs


def ghz_stats(n, dirs):
    return Q.ghz_marginal_tensors(dirs)


def chsh_frame():
    z, x = np.array([0.0, 0, 1]), np.array([1.0, 0, 0])
    return MeasurementFrame(np.array([[z, x], [(z + x) / math.sqrt(2), (z - x) / math.sqrt(2)]]))


def test_problem_shapes():
    for n, (vars_, rows) in {2: (16, 9), 3: (64, 27)}.items():
        A = L.constraint_matrix(n)
        assert A.shape == (rows, vars_)
    A = L.constraint_matrix(3)
    assert np.all(A[0] == 1)
    p = np.random.default_rng(0).dirichlet(np.ones(64))
    assert A[0] @ p == pytest.approx(1.0)


def test_rows_match_direct_enumeration():
    n = 3
    A = L.constraint_matrix(n)
    rng = np.random.default_rng(1)
    for _ in range(5):
        p = rng.dirichlet(np.ones(4 ** n))
        for r, assign in enumerate(Q.assignments(n)):
            total = 0.0
            for v in range(4 ** n):
                # bit (2n-1-(2k+s)) of v is outcome o^{k+1}_{s+1}; set bit means -1
                val = 1.0
                for k, a in enumerate(assign):
                    if a:
                        bit = (v >> (2 * n - 1 - (2 * k + a - 1))) & 1
                        val *= -1.0 if bit else 1.0
                total += p[v] * val
            assert A[r] @ p == pytest.approx(total, abs=1e-12)


def test_build_requires_marginals():
    with pytest.raises(ValueError):
        L.build_lcd_lp(CorrelationTensor(2, np.zeros(4)))
    t = Q.correlation_tensor(GHZ(2), chsh_frame(), with_marginals=True)
    prob = L.build_lcd_lp(t)
    assert prob.num_vars == 16 and prob.num_rows == 9 and prob.b[0] == 1.0


def test_white_noise_is_feasible():
    b = np.zeros(9)
    res = L.lp_feasible(L.problem_from_statistics(2, b))
    assert res.feasible and res.phase1_objective <= L.FEASIBILITY_TOL


def test_maximal_chsh_is_infeasible_with_farkas_certificate():
    t = Q.correlation_tensor(GHZ(2), chsh_frame(), with_marginals=True)
    assert I.mabk_orbit_violated(CorrelationTensor(2, t.full))[0]
    prob = L.build_lcd_lp(t)
    res = L.lp_feasible(prob)
    assert not res.feasible
    y = res.certificate
    assert y @ prob.b == pytest.approx(res.phase1_objective, abs=1e-9)
    assert L.local_bound(y, 2) <= 1e-9
    assert L.verified_certificate(y, prob.b, 2) is not None


@pytest.mark.parametrize("n", [2, 3, 4])
def test_deterministic_strategy_is_feasible_with_witness(n):
    A = L.constraint_matrix(n)
    lam = (7 * n) % 4 ** n
    res = L.lp_feasible(L.problem_from_statistics(n, A[:, lam]))
    assert res.feasible
    assert np.abs(A @ res.x - A[:, lam]).max() <= 1e-6
    assert res.x.min() >= -1e-9


@pytest.mark.parametrize("n", [2, 3, 4])
def test_ghz_along_z_is_classical(n):
    z = np.array([0.0, 0.0, 1.0])
    frame = MeasurementFrame(np.tile(z, (n, 2, 1)))
    t = Q.correlation_tensor(GHZ(n), frame, with_marginals=True)
    # explicit model: all outcomes +1 or all -1 with probability 1/2 each
    x = np.zeros(4 ** n)
    x[0] = x[-1] = 0.5
    assert np.allclose(L.constraint_matrix(n) @ x, t.marginals)
    assert not L.classicality_verdict(GHZ(n), frame)


def test_classicality_verdict_examples():
    assert L.classicality_verdict(GHZ(2), chsh_frame())
    for d in random_dirs(3, 10, 2):
        assert not L.classicality_verdict(SchmidtPair(0.0), MeasurementFrame(d))
    with pytest.raises(ValueError):
        L.classicality_verdict(GHZ(7), MeasurementFrame(random_dirs(1, 1, 7)[0]))


def test_witness_and_certificate_invariants_on_random_trials():
    for n, count in ((2, 200), (3, 200), (4, 40)):
        marg = ghz_stats(n, random_dirs(17, count, n))
        A = L.constraint_matrix(n)
        for b in marg:
            res = L.lp_feasible(L.problem_from_statistics(n, b))
            assert res.feasible == (res.phase1_objective <= L.FEASIBILITY_TOL)
            if res.feasible:
                assert np.abs(A @ res.x - b).max() <= 1e-6
                assert res.x.min() >= -1e-9
            else:
                assert res.certificate @ b > L.local_bound(res.certificate, n)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_numba_and_numpy_simplex_agree(n):
    marg = ghz_stats(n, random_dirs(23, 12, n, "rom"))
    A = L.constraint_matrix(n)
    args = (L.PIVOT_TOL, L.HARRIS_TOL, L.COST_TOL, L.STALL_LIMIT)
    for b in marg:
        b = b.copy()
        fast = L._phase1_numba(A, b, 100_000, *args)
        slow = L._phase1_numpy(A, b, 100_000, *args)
        assert fast[1] == slow[1] and fast[2] == slow[2] == L.STATUS_OPTIMAL
        assert fast[0] == pytest.approx(slow[0], abs=1e-9)


def test_determinism():
    b = ghz_stats(3, random_dirs(29, 1, 3))[0]
    r1 = L.lp_feasible(L.problem_from_statistics(3, b))
    r2 = L.lp_feasible(L.problem_from_statistics(3, b))
    assert (r1.feasible, r1.iterations) == (r2.feasible, r2.iterations)
    assert np.array_equal(r1.x, r2.x)


def test_iteration_cap_raises():
    b = ghz_stats(3, random_dirs(31, 1, 3))[0]
    with pytest.raises(L.SolverError):
        L.lp_feasible(L.problem_from_statistics(3, b), max_iter=1)
    assert L.default_iteration_cap(L.problem_from_statistics(3, b)) == 50 * (64 + 27)


def test_fine_theorem_sample():
    marg = ghz_stats(2, random_dirs(37, 2000, 2))
    full = marg[:, Q.full_to_marginal_index(2)]
    best = I.chsh_class_values(full).max(axis=1)
    for b, s in zip(marg, best):
        if abs(s - 2) < 1e-6:
            continue
        assert (not L.lp_feasible(L.problem_from_statistics(2, b)).feasible) == (s > 2)


@pytest.mark.parametrize("n,count", [(3, 1000), (4, 1000)])
def test_soundness_of_closed_criteria(n, count):
    marg = ghz_stats(n, random_dirs(41 + n, count, n))
    full = marg[:, Q.full_to_marginal_index(n)]
    flagged = (I.wwzb_lhs_rows(full) > 2 ** n + 1e-9) | (I.mabk_orbit_values(full).max(1) > I.classical_bound(n) + 1e-9)
    assert flagged.any()
    for b in marg[flagged]:
        assert not L.lp_feasible(L.problem_from_statistics(n, b)).feasible


def test_soundness_of_closed_criteria_five_parties():
    n = 5
    marg = ghz_stats(n, random_dirs(46, 1000, n))
    full = marg[:, Q.full_to_marginal_index(n)]
    flagged = np.flatnonzero((I.wwzb_lhs_rows(full) > 2 ** n + 1e-9)
                             | (I.mabk_orbit_values(full).max(1) > I.classical_bound(n) + 1e-9))
    assert flagged.size > 100
    for t in flagged:
        assert L.decide(marg[t], n, screen=True).nonclassical
    for t in flagged[:5]:  # the unscreened simplex on a few
        assert not L.lp_feasible(L.problem_from_statistics(n, marg[t])).feasible


@pytest.mark.parametrize("n,count,mode", [(2, 400, "rim"), (3, 400, "rim"), (3, 200, "rom"), (4, 150, "rim")])
def test_screened_and_unscreened_verdicts_agree(n, count, mode):
    marg = ghz_stats(n, random_dirs(53 + n, count, n, mode))
    methods = set()
    for b in marg:
        screened = L.decide(b, n, screen=True)
        methods.add(screened.method)
        assert screened.nonclassical == L.decide(b, n, screen=False).nonclassical
    assert "certificate" in methods or n == 2


def test_frank_wolfe_outputs_are_verified():
    marg = ghz_stats(4, random_dirs(59, 30, 4))
    prob_A = L.constraint_matrix(4)
    for b in marg:
        found = L.search_certificate(b, 4, 20000)
        if found.certificate is not None:
            c = found.certificate
            assert c.margin > 0
            assert c.bound == pytest.approx((prob_A.T @ c.y).max())
        x = np.zeros(4 ** 4)
        x[found.support] = found.weights
        assert found.weights.min() > 0
        assert x.sum() == pytest.approx(1.0)


def test_vertex_helpers_match_dense_matrix():
    n = 3
    A = L.constraint_matrix(n)
    w = np.random.default_rng(5).normal(size=3 ** n)
    assert np.allclose(L.vertex_values(w, n), A.T @ w)
    out = np.empty(3 ** n)
    for lam in (0, 17, 63):
        L._vertex_vector(lam, n, out)
        assert np.array_equal(out, A[:, lam])
    g = np.empty(4 ** n)
    L._gram_column(17, n, L.PARTY_GRAM, g)
    assert np.allclose(g, A.T @ A[:, 17])


def test_dump_round_trip(tmp_path):
    b = ghz_stats(2, random_dirs(61, 1, 2))[0]
    prob = L.problem_from_statistics(2, b)
    path = tmp_path / "lp.txt"
    L.dump_problem(prob, str(path))
    text = path.read_text()
    assert text.splitlines()[0] == "9 17"
    back = L.load_problem(str(path))
    assert np.array_equal(back.A, prob.A) and np.array_equal(back.b, prob.b)
    buf = io.StringIO()
    L.dump_problem(prob, buf)
    assert buf.getvalue() == text
    with pytest.raises(ValueError):
        L.load_problem(io.StringIO("3 3\n1 2 3\n"))
