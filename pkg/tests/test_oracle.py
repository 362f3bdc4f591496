import itertools

import numpy as np
import pytest

from redistribution.batch import prepare_batch, prepare_values
from redistribution.errors import ConfigurationError
from redistribution.oracle import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    build_oe_lp,
    build_ow_lp,
    format_tableau,
    simplex_solve,
)
from redistribution.profiles import HOMOGENEOUS, BatchSpec


def _vertex_optimum(lp):
    """Best objective over all basic feasible points (bounded, pointed LPs only)."""
    G, h = lp.rows()
    d = lp.num_vars
    best = -np.inf
    for rows in itertools.combinations(range(G.shape[0]), d):
        A = G[list(rows)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, h[list(rows)])
        if np.all(G @ x >= h - 1e-9):
            best = max(best, float(lp.objective @ x))
    return best


def test_one_dimensional():
    res = simplex_solve(LinearProgram([1.0], [[-1.0]], [-1.0], nonneg=[True]))
    assert res.status == OPTIMAL
    assert res.value == pytest.approx(1.0)


def test_unbounded():
    assert simplex_solve(LinearProgram([1.0], [[1.0]], [0.0])).status == UNBOUNDED
    assert simplex_solve(LinearProgram([1.0], np.zeros((0, 1)), [], nonneg=[True])).status == UNBOUNDED


def test_infeasible():
    res = simplex_solve(LinearProgram([1.0], [[1.0], [-1.0]], [1.0, 0.0]))
    assert res.status == INFEASIBLE


def test_matches_vertex_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = int(rng.integers(1, 6))
        m = int(rng.integers(1, 8))
        box = 3.0
        x0 = rng.uniform(-1, 1, d)
        G = rng.normal(size=(m, d))
        h = G @ x0 - rng.uniform(0, 1, m)  # x0 is feasible
        G = np.vstack([G, np.eye(d), -np.eye(d)])
        h = np.concatenate([h, -box * np.ones(d), -box * np.ones(d)])
        lp = LinearProgram(rng.normal(size=d), G, h, nonneg=rng.random(d) < 0.3)
        if lp.nonneg.any() and np.any(x0[lp.nonneg] < 0):
            lp.nonneg[:] = False
        res = simplex_solve(lp)
        assert res.status == OPTIMAL
        assert res.value == pytest.approx(_vertex_optimum(lp), abs=1e-7)
        assert lp.violation(res.x) <= 1e-7


def test_status_against_scipy():
    linprog = pytest.importorskip("scipy.optimize").linprog
    rng = np.random.default_rng(1)
    for _ in range(150):
        d, m = int(rng.integers(1, 5)), int(rng.integers(1, 10))
        G, h, c = rng.normal(size=(m, d)), rng.normal(size=m), rng.normal(size=d)
        res = simplex_solve(LinearProgram(c, G, h))
        ref = linprog(-c, A_ub=-G, b_ub=-h, bounds=[(None, None)] * d, method="highs")
        if ref.status == 0:
            assert res.status == OPTIMAL
            assert res.value == pytest.approx(-ref.fun, abs=1e-7)
        elif ref.status == 3:
            assert res.status == UNBOUNDED


def _batch(count, n, p, seed=0):
    return prepare_batch(BatchSpec(count, n, p, HOMOGENEOUS, seed=seed))


def test_oe_lp_dimensions():
    lp = build_oe_lp(_batch(1, 3, 1))
    assert lp.num_vars == 3
    assert lp.num_rows == 1
    assert lp.names == ("c0", "c1", "c2")


def test_empty_batch_rejected():
    empty = _batch(4, 3, 1).subset(slice(0, 0))
    with pytest.raises(ConfigurationError):
        build_oe_lp(empty)
    with pytest.raises(ConfigurationError):
        build_ow_lp(empty)


def test_duplicate_samples_keep_optimum():
    batch = _batch(300, 3, 1, seed=2)
    doubled = batch.subset(np.concatenate([np.arange(300), np.arange(300)]))
    a = simplex_solve(build_ow_lp(batch))
    b = simplex_solve(build_ow_lp(doubled))
    assert a.value == pytest.approx(b.value, abs=1e-9)
    a = simplex_solve(build_oe_lp(batch))
    b = simplex_solve(build_oe_lp(doubled))
    assert a.value == pytest.approx(b.value, abs=1e-9)


def test_identical_profiles_reach_full_redistribution():
    values = np.tile(np.array([[0.9], [0.6], [0.3]]), (5, 1, 1))
    res = simplex_solve(build_ow_lp(prepare_values(values, 1, HOMOGENEOUS)))
    assert res.value == pytest.approx(1.0, abs=1e-9)


def test_ow_optimum_shrinks_with_more_samples():
    batch = _batch(2000, 4, 1, seed=3)
    values = [simplex_solve(build_ow_lp(batch.subset(slice(0, m)))).value for m in (100, 500, 2000)]
    assert values[0] >= values[1] - 1e-9 >= values[2] - 2e-9


def test_solutions_satisfy_constraints():
    batch = _batch(2000, 4, 2, seed=4)
    for lp in (build_oe_lp(batch), build_ow_lp(batch)):
        res = simplex_solve(lp)
        assert res.status == OPTIMAL
        assert lp.violation(res.x) <= 1e-7


def test_small_known_values():
    res = simplex_solve(build_ow_lp(_batch(20000, 3, 1, seed=5)))
    assert res.value == pytest.approx(1 / 3, abs=0.01)


def test_tableau_dump():
    lp = LinearProgram([1.0, 2.0], [[1.0, 0.5]], [0.25], names=("a", "b"))
    text = format_tableau(lp)
    lines = text.splitlines()
    assert lines[1] == "names a b"
    assert lines[-1] == "1 0.5 >= 0.25"
    assert text.endswith("\n")


def test_as_dict():
    res = simplex_solve(LinearProgram([1.0], [[-1.0]], [-2.0], names=("x",)))
    assert res.as_dict()["solution"] == {"x": 2.0}
