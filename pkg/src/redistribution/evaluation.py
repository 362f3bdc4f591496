"""Redistribution indices, constraint violations, DSIC checks and result tables."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .batch import DSIC_STREAM, prepare_values, stream_seed
from .errors import UndefinedIndexError
from .profiles import HOMOGENEOUS, UTILITY_KEYS

SURPLUS_EPS = 1e-6
VIOLATION_TOL = 1e-6

TABLE_HEADER = ("n", "p", "setting", "architecture", "objective", "index_kind", "value", "paper_reference")
INDEX_KIND = {"OE": "e_oe", "OW": "e_ow"}


@dataclass(frozen=True)
class EvalReport:
    e_oe: float
    e_ow: float
    feasibility_violation_rate: float
    ir_violation_rate: float
    samples: int
    skipped_zero_surplus: int
    min_rebate: float

    def as_dict(self):
        return asdict(self)


def e_oe_from(total_rebates, totals, eps=SURPLUS_EPS):
    """Ratio of means ``E[sum r] / E[t]``."""
    totals = np.asarray(totals, dtype=np.float64)
    mean_t = float(totals.mean()) if totals.size else 0.0
    if mean_t < eps:
        raise UndefinedIndexError(f"mean surplus {mean_t:g} is below {eps:g}; e_oe is undefined")
    return float(np.mean(total_rebates)) / mean_t


def e_ow_from(total_rebates, totals, eps=SURPLUS_EPS):
    """Worst ratio ``sum r / t`` over samples with ``t >= eps``, clamped at 0.

    Returns ``(value, skipped)``.
    """
    total_rebates = np.asarray(total_rebates, dtype=np.float64)
    totals = np.asarray(totals, dtype=np.float64)
    keep = totals >= eps
    skipped = int(totals.size - keep.sum())
    if not keep.any():
        raise UndefinedIndexError("every sample has zero surplus; e_ow is undefined")
    worst = float(np.min(total_rebates[keep] / totals[keep]))
    return max(worst, 0.0), skipped


def empirical_e_oe(net, batch):
    return e_oe_from(net.forward(batch.inputs)[0].sum(axis=1), batch.totals)


def empirical_e_ow(net, batch):
    return e_ow_from(net.forward(batch.inputs)[0].sum(axis=1), batch.totals)[0]


def violation_rates(rebates, totals, tol=VIOLATION_TOL):
    """Fractions of samples with ``sum r > t + tol`` and with ``min r < -tol``."""
    rebates = np.asarray(rebates, dtype=np.float64)
    feas = float(np.mean(rebates.sum(axis=1) > totals + tol))
    ir = float(np.mean(rebates.min(axis=1) < -tol))
    return feas, ir


def evaluate(net, batch, tol=VIOLATION_TOL, eps=SURPLUS_EPS):
    r = net.forward(batch.inputs)[0]
    total = r.sum(axis=1)
    e_ow, skipped = e_ow_from(total, batch.totals, eps)
    feas, ir = violation_rates(r, batch.totals, tol)
    return EvalReport(
        e_oe=e_oe_from(total, batch.totals, eps),
        e_ow=e_ow,
        feasibility_violation_rate=feas,
        ir_violation_rate=ir,
        samples=len(batch),
        skipped_zero_surplus=skipped,
        min_rebate=float(r.min()),
    )


def agent_rebates(net, batch):
    """Rebates as ``(S, n)`` indexed by original agent rather than by rank."""
    r = net.forward(batch.inputs)[0]
    out = np.empty_like(r)
    np.put_along_axis(out, batch.perm, r, axis=1)
    return out


def dsic_spot_check(net, values, p, setting=HOMOGENEOUS, scheme=UTILITY_KEYS, perturbations=10, seed=0):
    """Largest change in an agent's own rebate when only that agent re-bids.

    Each agent of each profile in ``values`` (shape ``(S, n, width)``) is
    given ``perturbations`` fresh U[0,1] bids; the ordering and rebates are
    recomputed from scratch each time.
    """
    values = np.asarray(values, dtype=np.float64)
    S, n, width = values.shape
    rng = np.random.default_rng(stream_seed(seed, DSIC_STREAM))
    base = agent_rebates(net, prepare_values(values, p, setting, scheme, with_totals=False))
    worst = 0.0
    for agent in range(n):
        for _ in range(perturbations):
            moved = values.copy()
            moved[:, agent, :] = rng.random((S, width))
            again = agent_rebates(net, prepare_values(moved, p, setting, scheme, with_totals=False))
            worst = max(worst, float(np.max(np.abs(again[:, agent] - base[:, agent]))))
    return worst


# -- tables -------------------------------------------------------------------

@lru_cache(maxsize=1)
def paper_tables():
    """Published values keyed by ``(n, p, setting, architecture, objective)``.

    Each entry is ``(theoretical, network)``; either may be ``None``.
    """
    text = resources.files(__package__).joinpath("data/paper_tables.csv").read_text(encoding="utf-8")
    table = {}
    for row in csv.DictReader(io.StringIO(text)):
        key = (int(row["n"]), int(row["p"]), row["setting"], row["architecture"], row["objective"])
        table[key] = tuple(float(row[c]) if row[c] else None for c in ("theoretical", "network"))
    return table


def paper_reference(n, p, setting, architecture, objective):
    """The published value to diff against: the theoretical column for
    homogeneous linear runs, the reported network value otherwise."""
    entry = paper_tables().get((int(n), int(p), setting, architecture, objective))
    if entry is None:
        return None
    theoretical, network = entry
    if setting == HOMOGENEOUS and architecture == "linear" and theoretical is not None:
        return theoretical
    return network


@dataclass(frozen=True)
class TableRow:
    n: int
    p: int
    setting: str
    architecture: str
    objective: str
    value: float

    @property
    def index_kind(self):
        return INDEX_KIND[self.objective]

    @property
    def reference(self):
        return paper_reference(self.n, self.p, self.setting, self.architecture, self.objective)


def _fmt(x):
    return "" if x is None else f"{x:.6f}"


def emit_table(rows, abs_diff=False):
    """CSV text, one line per row, stably sorted by ``(n, p, setting)``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_HEADER + (("abs_diff",) if abs_diff else ()))
    for row in sorted(rows, key=lambda r: (r.n, r.p, r.setting)):
        ref = row.reference
        line = [row.n, row.p, row.setting, row.architecture, row.objective,
                row.index_kind, _fmt(row.value), _fmt(ref)]
        if abs_diff:
            line.append(_fmt(None if ref is None else abs(row.value - ref)))
        writer.writerow(line)
    return buf.getvalue()


def read_table(text):
    """Parse CSV produced by :func:`emit_table` back into rows."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append(TableRow(
            n=int(rec["n"]), p=int(rec["p"]), setting=rec["setting"],
            architecture=rec["architecture"], objective=rec["objective"], value=float(rec["value"]),
        ))
    return out
