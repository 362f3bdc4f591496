"""Exact linear-rebate baselines via a dense simplex solver.

The rebate LPs have a handful of variables (the coefficients c_0..c_{n-1}
and possibly the index k) and one constraint per sampled profile, often
hundreds of thousands. The solver therefore works on the dual standard form

    min  -h . y   s.t.  -G^T y = c,  y >= 0

which has one row per primal variable and one column per primal constraint,
and runs a two-phase revised simplex with Bland's rule on it. The primal
solution is read off the optimal basis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SolverError

OPTIMAL = "optimal"
UNBOUNDED = "unbounded"
INFEASIBLE = "infeasible"

PIVOT_TOL = 1e-9


@dataclass
class LinearProgram:
    """maximize ``objective . x`` subject to ``G x >= h``.

    Variables are free unless flagged in ``nonneg``.
    """

    objective: np.ndarray
    G: np.ndarray
    h: np.ndarray
    nonneg: np.ndarray | None = None
    names: tuple = ()

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64).reshape(-1)
        d = self.objective.shape[0]
        self.G = np.asarray(self.G, dtype=np.float64).reshape(-1, d)
        self.h = np.asarray(self.h, dtype=np.float64).reshape(-1)
        if self.G.shape[0] != self.h.shape[0]:
            raise ConfigurationError(f"G has {self.G.shape[0]} rows but h has {self.h.shape[0]}")
        if self.nonneg is None:
            self.nonneg = np.zeros(d, dtype=bool)
        self.nonneg = np.asarray(self.nonneg, dtype=bool).reshape(-1)
        if self.nonneg.shape[0] != d:
            raise ConfigurationError("nonneg mask length differs from the variable count")
        for arr in (self.objective, self.G, self.h):
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError("LP data must be finite")

    @property
    def num_vars(self):
        return self.objective.shape[0]

    @property
    def num_rows(self):
        return self.G.shape[0]

    def rows(self):
        """All constraints including variable sign bounds, as ``(G, h)``."""
        idx = np.flatnonzero(self.nonneg)
        if idx.size == 0:
            return self.G, self.h
        bounds = np.zeros((idx.size, self.num_vars))
        bounds[np.arange(idx.size), idx] = 1.0
        return np.vstack([self.G, bounds]), np.concatenate([self.h, np.zeros(idx.size)])

    def violation(self, x):
        G, h = self.rows()
        return float(np.max(h - G @ x, initial=0.0))


@dataclass
class LPResult:
    status: str
    value: float | None = None
    x: np.ndarray | None = None
    iterations: int = 0
    names: tuple = field(default=(), repr=False)

    def as_dict(self):
        out = {"status": self.status, "value": self.value, "iterations": self.iterations}
        if self.x is not None:
            keys = self.names or tuple(f"x{i}" for i in range(len(self.x)))
            out["solution"] = {k: float(v) for k, v in zip(keys, self.x)}
        return out


def _revised_simplex(A, b, cost, basis, allowed, tol, max_iter):
    """Minimize ``cost . y`` over ``A y = b, y >= 0`` from a feasible basis.

    Bland's rule: the entering column is the lowest-indexed one with a
    negative reduced cost; ratio-test ties leave by lowest basic index.
    Returns ``(status, basis, iterations)``.
    """
    basis = list(basis)
    for it in range(max_iter):
        B = A[:, basis]
        xB = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, cost[basis])
        rc = cost - y @ A
        rc[~allowed] = 0.0
        rc[basis] = 0.0
        entering = np.flatnonzero(rc < -tol)
        if entering.size == 0:
            return OPTIMAL, basis, it
        j = int(entering[0])
        col = np.linalg.solve(B, A[:, j])
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            return UNBOUNDED, basis, it
        ratios = np.maximum(xB[rows], 0.0) / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + tol * max(1.0, abs(best))]
        leave = min(tied, key=lambda r: basis[r])
        basis[leave] = j
    raise SolverError(f"simplex did not finish within {max_iter} iterations")


def simplex_solve(lp: LinearProgram, tol=PIVOT_TOL, max_iter=None):
    """Solve ``lp``; returns an :class:`LPResult` with status optimal, unbounded or infeasible."""
    G, h = lp.rows()
    d = lp.num_vars
    if max_iter is None:
        max_iter = 50 * (d + G.shape[0]) + 1000
    # dual standard form: rows = primal variables, columns = primal constraints
    A = -G.T.copy()
    b = lp.objective.copy()
    cost = -h
    status, basis, A_kept, b_kept, kept, its = _phase_one(A, b, tol, max_iter)
    if status != OPTIMAL:
        # dual infeasible: primal is unbounded if it is feasible at all
        feasible = _primal_feasible(G, h, tol, max_iter)
        return LPResult(UNBOUNDED if feasible else INFEASIBLE, iterations=its, names=lp.names)
    allowed = np.ones(A_kept.shape[1], dtype=bool)
    status, basis, its2 = _revised_simplex(A_kept, b_kept, cost, basis, allowed, tol, max_iter)
    if status == UNBOUNDED:
        return LPResult(INFEASIBLE, iterations=its + its2, names=lp.names)
    x = np.zeros(d)
    B = A_kept[:, basis]
    x[kept] = np.linalg.solve(B.T, cost[basis])
    return LPResult(OPTIMAL, value=float(lp.objective @ x), x=x, iterations=its + its2, names=lp.names)


def _phase_one(A, b, tol, max_iter):
    """Find a feasible basis of ``A y = b, y >= 0`` using artificial columns.

    Returns ``(status, basis, A, b, kept_rows, iterations)``; redundant rows
    are dropped from the returned system.
    """
    m, N = A.shape
    A = A.copy()
    b = b.copy()
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    A1 = np.hstack([A, np.eye(m)])
    cost1 = np.concatenate([np.zeros(N), np.ones(m)])
    basis = list(range(N, N + m))
    allowed = np.ones(N + m, dtype=bool)
    status, basis, its = _revised_simplex(A1, b, cost1, basis, allowed, tol, max_iter)
    xB = np.linalg.solve(A1[:, basis], b)
    infeas = sum(x for j, x in zip(basis, xB) if j >= N)
    if infeas > tol * max(1.0, float(np.abs(b).max(initial=0.0))):
        return INFEASIBLE, None, None, None, None, its
    kept = list(range(m))
    # pivot zero-level artificials out, dropping rows where that is impossible
    pos = 0
    while pos < len(basis):
        j = basis[pos]
        if j < N:
            pos += 1
            continue
        B = A1[np.ix_(kept, basis)]
        row = np.linalg.solve(B.T, np.eye(len(basis))[pos]) @ A1[kept][:, :N]
        cand = [c for c in np.flatnonzero(np.abs(row) > tol) if c not in basis]
        if cand:
            basis[pos] = int(cand[0])
            pos += 1
        else:
            artificial_row = j - N
            kept.remove(artificial_row)
            del basis[pos]
    A_kept = A[kept]
    b_kept = b[kept]
    # undo the sign flips so x can be read off against the unflipped rows
    sign = np.where(flip[kept], -1.0, 1.0)
    return OPTIMAL, basis, A_kept * sign[:, None], b_kept * sign, kept, its


def _primal_feasible(G, h, tol, max_iter):
    """Farkas: ``G x >= h`` is infeasible iff some ``y >= 0`` with ``G^T y = 0``
    and ``sum(y) = 1`` has ``h . y > 0``."""
    N = G.shape[0]
    A = np.vstack([-G.T, np.ones((1, N))])
    b = np.zeros(A.shape[0])
    b[-1] = 1.0
    status, basis, A_kept, b_kept, _, _ = _phase_one(A, b, tol, max_iter)
    if status != OPTIMAL:
        return True
    allowed = np.ones(N, dtype=bool)
    _, basis, _ = _revised_simplex(A_kept, b_kept, -h, basis, allowed, tol, max_iter)
    y = np.zeros(N)
    y[basis] = np.linalg.solve(A_kept[:, basis], b_kept)
    return float(h @ y) <= tol * max(1.0, float(np.abs(h).max(initial=0.0)))


# -- rebate LPs ---------------------------------------------------------------

def _rebate_sums(batch):
    """Per-sample total rebate as a linear form in (c_0, c_1, ..., c_d)."""
    X = batch.inputs
    S, n, _ = X.shape
    return np.concatenate([np.full((S, 1), float(n)), X.sum(axis=1)], axis=1)


def _coef_names(d):
    return tuple(f"c{i}" for i in range(d + 1))


def build_oe_lp(batch):
    """Best linear rebate in expectation over the sampled profiles of ``batch``.

    maximize mean_j sum_i r_i^j  s.t.  sum_i r_i^j <= t^j for every j.
    """
    if len(batch) == 0:
        raise ConfigurationError("cannot build an LP from an empty batch")
    F = _rebate_sums(batch)
    return LinearProgram(
        objective=F.mean(axis=0),
        G=-F,
        h=-batch.totals,
        names=_coef_names(F.shape[1] - 1),
    )


def build_ow_lp(batch):
    """Best worst-case linear rebate: variables ``(k, c_0, ..., c_d)``, maximize ``k``.

    Per sample: sum_i r_i <= t, sum_i r_i >= k t, and r_i >= 0 for every agent.
    """
    if len(batch) == 0:
        raise ConfigurationError("cannot build an LP from an empty batch")
    X = batch.inputs
    S, n, d = X.shape
    F = _rebate_sums(batch)
    t = batch.totals
    zeros = np.zeros((S, 1))
    feasibility = np.hstack([zeros, -F])
    worst_case = np.hstack([-t[:, None], F])
    ir = np.concatenate([np.zeros((S * n, 1)), np.ones((S * n, 1)), X.reshape(S * n, d)], axis=1)
    objective = np.zeros(d + 2)
    objective[0] = 1.0
    return LinearProgram(
        objective=objective,
        G=np.vstack([feasibility, worst_case, ir]),
        h=np.concatenate([-t, np.zeros(S), np.zeros(S * n)]),
        names=("k",) + _coef_names(d),
    )


def format_tableau(lp: LinearProgram):
    """Plain-text dump: objective line, then one ``coefficients >= bound`` row per constraint."""
    fmt = lambda v: format(float(v), ".17g")  # noqa: E731
    lines = [
        f"# maximize, {lp.num_vars} variables, {lp.num_rows} rows (G x >= h)",
        "names " + " ".join(lp.names or [f"x{i}" for i in range(lp.num_vars)]),
        "nonneg " + " ".join(str(int(v)) for v in lp.nonneg),
        "objective " + " ".join(fmt(v) for v in lp.objective),
    ]
    for row, bound in zip(lp.G, lp.h):
        lines.append(" ".join(fmt(v) for v in row) + " >= " + fmt(bound))
    return "\n".join(lines) + "\n"
