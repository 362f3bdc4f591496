"""Valuation profiles, uniform sampling and the canonical agent ordering.

A rebate function is DSIC and anonymous only if each agent's rebate depends
on the *sorted* bids of the other agents, so every profile is first put into
a canonical order. For identical objects this is a descending sort. For
distinct objects the order is built round by round: solve the auction on the
agents still unranked, rank its winners by utility (their marginal
contribution to welfare), remove them and repeat.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .auction import assignment_welfare, efficient_assignment, max_welfare
from .errors import ConfigurationError, UsageError

HOMOGENEOUS = "homogeneous"
HETEROGENEOUS = "heterogeneous"
SETTINGS = (HOMOGENEOUS, HETEROGENEOUS)

# per-agent network inputs in the heterogeneous setting
UTILITY_KEYS = "utility"
FLAT_ROWS = "flat"
INPUT_SCHEMES = (UTILITY_KEYS, FLAT_ROWS)


def check_sizes(n, p, setting):
    if setting not in SETTINGS:
        raise ConfigurationError(f"setting must be one of {SETTINGS}, got {setting!r}")
    if n < 2:
        raise ConfigurationError(f"need at least 2 agents, got n={n}")
    if p < 1:
        raise ConfigurationError(f"need at least 1 object, got p={p}")
    if p > n - 1:
        raise ConfigurationError(f"need p <= n-1 so someone loses, got n={n}, p={p}")


@dataclass(frozen=True)
class ValuationProfile:
    """Reported values of ``n`` agents for ``p`` objects.

    ``values`` has shape ``(n, p)`` for distinct objects and ``(n, 1)`` for
    identical ones, where ``p`` is then only the number of copies.
    """

    values: np.ndarray
    p: int
    setting: str = HOMOGENEOUS

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "values", values)
        values.setflags(write=False)
        check_sizes(values.shape[0], self.p, self.setting)
        width = 1 if self.setting == HOMOGENEOUS else self.p
        if values.shape[1] != width:
            raise ConfigurationError(
                f"{self.setting} profile with p={self.p} needs {width} columns, got {values.shape[1]}"
            )
        if not (np.all(values >= 0.0) and np.all(values <= 1.0)):
            raise ConfigurationError("valuations must lie in [0, 1]")

    @property
    def n(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class CanonicalProfile:
    """Rows of ``source`` in canonical order.

    ``perm[rank]`` is the original index of the agent at that rank and
    ``keys[rank]`` its ordering key (its bid for identical objects, its
    utility for distinct ones).
    """

    ordered: np.ndarray
    perm: np.ndarray
    keys: np.ndarray
    source: ValuationProfile = field(repr=False)

    @property
    def n(self):
        return self.ordered.shape[0]

    @property
    def p(self):
        return self.source.p

    @property
    def setting(self):
        return self.source.setting

    def rank_of(self, agent):
        return int(np.flatnonzero(self.perm == agent)[0])


@dataclass(frozen=True)
class BatchSpec:
    count: int
    n: int
    p: int
    setting: str = HOMOGENEOUS
    seed: int = 0

    def validate(self):
        check_sizes(self.n, self.p, self.setting)
        if self.count < 1:
            raise ConfigurationError(f"batch size must be positive, got {self.count}")

    @property
    def width(self):
        return 1 if self.setting == HOMOGENEOUS else self.p


def sample_values(spec):
    """i.i.d. U[0,1] valuations as an array of shape ``(count, n, width)``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    return rng.random((spec.count, spec.n, spec.width))


def sample_batch(spec):
    return [ValuationProfile(v, spec.p, spec.setting) for v in sample_values(spec)]


def canonical_order_homogeneous(profile):
    if profile.setting != HOMOGENEOUS:
        raise UsageError("canonical_order_homogeneous needs a homogeneous profile")
    col = profile.values[:, 0]
    perm = np.argsort(-col, kind="stable")
    ordered = profile.values[perm]
    return CanonicalProfile(ordered=ordered, perm=perm, keys=ordered[:, 0].copy(), source=profile)


def order_rows(values):
    """Canonical order of the rows of an ``(m, p)`` matrix of item values.

    Returns ``(order, keys)``: row indices best first, and each row's
    ordering key. Winners of a round are ranked by utility, then by their
    values for item 1, item 2, ..., then by row index. A lone leftover row
    ranks last with its best item value as key.
    """
    values = np.asarray(values, dtype=np.float64)
    remaining = list(range(values.shape[0]))
    order, keys = [], []
    while len(remaining) > 1:
        sub = values[remaining]
        assignment = efficient_assignment(sub)
        welfare = assignment_welfare(sub, assignment)
        ranked = []
        for local, item in enumerate(assignment):
            if item is None:
                continue
            others = np.delete(sub, local, axis=0)
            utility = welfare - max_welfare(others)
            ranked.append((-utility, tuple(-sub[local]), remaining[local]))
        ranked.sort()
        for neg_u, _, agent in ranked:
            order.append(agent)
            keys.append(-neg_u)
        won = {r[2] for r in ranked}
        remaining = [a for a in remaining if a not in won]
    for agent in remaining:
        order.append(agent)
        keys.append(float(values[agent].max()))
    return np.array(order, dtype=np.intp), np.array(keys, dtype=np.float64)


def canonical_order_heterogeneous(profile):
    if profile.setting != HETEROGENEOUS:
        raise UsageError("canonical_order_heterogeneous needs a heterogeneous profile")
    perm, keys = order_rows(profile.values)
    return CanonicalProfile(ordered=profile.values[perm], perm=perm, keys=keys, source=profile)


def canonical_order(profile):
    if profile.setting == HOMOGENEOUS:
        return canonical_order_homogeneous(profile)
    return canonical_order_heterogeneous(profile)


def others_view(values, agent, setting, scheme=UTILITY_KEYS):
    """Network input for ``agent``: a vector built only from the other agents.

    Identical objects: the others' bids sorted descending. Distinct objects:
    the canonical order is recomputed on the profile without ``agent`` and
    either the ordering keys (``"utility"``) or the ordered rows flattened
    (``"flat"``) are returned. Nothing here reads the agent's own row.
    """
    others = np.delete(np.asarray(values, dtype=np.float64), agent, axis=0)
    if setting == HOMOGENEOUS:
        return -np.sort(-others[:, 0], kind="stable")
    order, keys = order_rows(others)
    if scheme == UTILITY_KEYS:
        return keys
    if scheme == FLAT_ROWS:
        return others[order].reshape(-1)
    raise ConfigurationError(f"input scheme must be one of {INPUT_SCHEMES}, got {scheme!r}")


def input_width(n, p, setting, scheme=UTILITY_KEYS):
    if setting == HETEROGENEOUS and scheme == FLAT_ROWS:
        return (n - 1) * p
    return n - 1


def rebate_inputs(canon, scheme=UTILITY_KEYS):
    """Per-rank network inputs, shape ``(n, d)``, row ``i`` for canonical rank ``i``."""
    if canon.setting == HOMOGENEOUS:
        col = canon.ordered[:, 0]
        n = col.shape[0]
        return np.stack([np.delete(col, i) for i in range(n)])
    values = canon.source.values
    return np.stack([others_view(values, int(a), HETEROGENEOUS, scheme) for a in canon.perm])
