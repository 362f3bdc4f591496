"""Efficient allocation and Clarke (VCG) payments for unit-demand agents.

Assignments are tuples with one entry per agent: the 0-based index of the
item it receives, or ``None``. Among several welfare-maximizing assignments
the lexicographically smallest one is returned, with ``None`` ordered after
every item, so the same profile always yields the same winners.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SizeError

Assignment = tuple

BRUTE_FORCE_BUDGET = 10**6

# welfare differences this small (relative to the largest value) count as ties
TIE_TOL = 1e-12


def _tie_tol(values, n):
    return TIE_TOL * max(1.0, float(np.abs(values).max())) * max(n, 1)


@dataclass(frozen=True)
class AuctionOutcome:
    """Result of running VCG on one profile.

    ``payments[i]`` is what agent ``i`` (original index) pays; unassigned
    agents pay 0.
    """

    assignment: Assignment
    payments: np.ndarray
    total: float
    welfare: float


def _as_matrix(values):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
        raise ConfigurationError(f"expected a non-empty n x p matrix, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ConfigurationError("valuations must be finite")
    return values


def assignment_welfare(values, assignment):
    """Sum of allocated valuations, accumulated in agent order."""
    total = 0.0
    for i, j in enumerate(assignment):
        if j is not None:
            total += float(values[i][j])
    return total


def _hungarian(cost):
    """Min-cost perfect matching on a square cost matrix (list of lists).

    Shortest augmenting path form of the Hungarian method. Returns
    ``(row_to_col, u, v)`` where ``u``/``v`` are optimal dual potentials,
    i.e. ``cost[i][j] - u[i] - v[j] >= 0`` with equality on the matching.
    """
    m = len(cost)
    inf = math.inf
    u = [0.0] * (m + 1)
    v = [0.0] * (m + 1)
    col_owner = [0] * (m + 1)
    way = [0] * (m + 1)
    for i in range(1, m + 1):
        col_owner[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = col_owner[j0]
            row = cost[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[col_owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if col_owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            col_owner[j0] = col_owner[j1]
            j0 = j1
    row_to_col = [0] * m
    for j in range(1, m + 1):
        row_to_col[col_owner[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _has_perfect_matching(rows, cols, adj):
    """Kuhn's augmenting-path test on the bipartite graph ``adj`` (row -> set of cols)."""
    match = {}

    def augment(r, seen):
        for c in adj[r]:
            if c in cols and c not in seen:
                seen.add(c)
                if c not in match or augment(match[c], seen):
                    match[c] = r
                    return True
        return False

    for r in rows:
        if not augment(r, set()):
            return False
    return True


def _lexicographic_refine(cost, n, p, u, v):
    """Lexicographically smallest optimal assignment among tight-edge matchings.

    Every optimal matching uses only edges with zero reduced cost under any
    optimal dual, so the greedy choice only has to keep the remaining tight
    graph perfectly matchable.
    """
    m = len(cost)
    scale = max(1.0, max(abs(x) for row in cost for x in row))
    tol = 1e-12 * scale
    adj = [
        {j for j in range(m) if cost[i][j] - u[i] - v[j] <= tol}
        for i in range(m)
    ]
    free_cols = set(range(m))
    result = []
    for i in range(n):
        rest = range(i + 1, m)
        # items first (ascending), then any dummy column meaning "none"
        candidates = [j for j in range(p) if j in adj[i]]
        dummies = [j for j in range(p, m) if j in adj[i] and j in free_cols]
        if dummies:
            candidates.append(dummies[0])
        for j in candidates:
            if j not in free_cols:
                continue
            trial = free_cols - {j}
            if _has_perfect_matching(rest, trial, adj):
                free_cols = trial
                result.append(j if j < p else None)
                break
        else:
            return None
    return tuple(result)


def efficient_assignment(values):
    """Welfare-maximizing assignment of ``p`` items to ``n`` unit-demand agents.

    The rectangular problem is padded to a square one with zero-valued dummy
    agents or objects and solved as a min-cost problem on
    ``max(values) - values``.
    """
    values = _as_matrix(values)
    n, p = values.shape
    m = max(n, p)
    top = float(values.max()) if values.size else 0.0
    top = max(top, 0.0)
    cost = [[top] * m for _ in range(m)]
    for i in range(n):
        row = cost[i]
        vi = values[i]
        for j in range(p):
            row[j] = top - float(vi[j])
    row_to_col, u, v = _hungarian(cost)
    plain = tuple(c if c < p else None for c in row_to_col[:n])
    refined = _lexicographic_refine(cost, n, p, u, v)
    if refined is None or refined == plain:
        return plain
    # guard against a tolerance-induced near tie that is not an exact optimum
    if assignment_welfare(values, refined) < assignment_welfare(values, plain) - _tie_tol(values, m):
        return plain
    return refined


def max_welfare(values):
    values = _as_matrix(values)
    return assignment_welfare(values, efficient_assignment(values))


def _lex_key(assignment, p):
    return tuple(p if j is None else j for j in assignment)


def brute_force_assignment(values, budget=BRUTE_FORCE_BUDGET):
    """Exhaustive search over injective assignments (test oracle)."""
    values = _as_matrix(values)
    n, p = values.shape
    k = min(n, p)
    count = math.perm(max(n, p), k)
    if count > budget:
        raise SizeError(f"{count} assignments exceed the enumeration budget {budget}")
    best = None
    best_welfare = -math.inf
    tol = _tie_tol(values, max(n, p))
    if n <= p:
        candidates = itertools.permutations(range(p), n)
    else:
        candidates = _agents_to_items(n, p)
    for cand in candidates:
        cand = tuple(cand)
        w = assignment_welfare(values, cand)
        if w > best_welfare + tol:
            best, best_welfare = cand, w
        elif w >= best_welfare - tol:
            # a tie: keep the lexicographically smaller one, remember the larger welfare
            if _lex_key(cand, p) < _lex_key(best, p):
                best = cand
            best_welfare = max(best_welfare, w)
    return best


def _agents_to_items(n, p):
    for winners in itertools.permutations(range(n), p):
        a = [None] * n
        for item, agent in enumerate(winners):
            a[agent] = item
        yield tuple(a)


def clarke_payments(values, assignment=None):
    """VCG outcome: each agent pays the welfare loss it imposes on the others.

    ``t_i`` is the others' optimal welfare without ``i`` minus the others'
    welfare under the full efficient assignment.
    """
    values = _as_matrix(values)
    if assignment is None:
        assignment = efficient_assignment(values)
    n = values.shape[0]
    payments = np.zeros(n)
    for i in range(n):
        if assignment[i] is None:
            continue
        others = np.delete(values, i, axis=0)
        without_i = max_welfare(others) if others.shape[0] else 0.0
        rest = assignment[:i] + assignment[i + 1:]
        with_i = assignment_welfare(others, rest)
        # float reassociation can leave a -1e-17 residue when the two coincide
        payments[i] = max(without_i - with_i, 0.0)
    return AuctionOutcome(
        assignment=tuple(assignment),
        payments=payments,
        total=float(payments.sum()),
        welfare=assignment_welfare(values, assignment),
    )


def homogeneous_payments(canon, p):
    """VCG for ``p`` identical items: the top ``p`` agents each pay ``v_{p+1}``."""
    ordered = np.asarray(canon.ordered, dtype=np.float64).reshape(-1)
    n = ordered.shape[0]
    if not 1 <= p <= n - 1:
        raise ConfigurationError(f"need 1 <= p <= n-1, got n={n}, p={p}")
    price = float(ordered[p])
    assignment = [None] * n
    payments = np.zeros(n)
    for rank in range(p):
        agent = int(canon.perm[rank])
        assignment[agent] = rank
        payments[agent] = price
    return AuctionOutcome(
        assignment=tuple(assignment),
        payments=payments,
        total=p * price,
        welfare=float(ordered[:p].sum()),
    )
